//! Sandwich covariance of the weighted minimum DPD estimator and the MLE Hessian.
//!
//! With `P_i = F(τ_i; x_i, θ)`, weights `w_i = k_i / K` and
//! `c_i = P_i^{β-1} + (1 - P_i)^{β-1}`:
//!
//! - `J_β = Σ w_i c_i ∂P_i ∂P_i'`
//! - `K_β = Σ w_i c_i² P_i (1 - P_i) ∂P_i ∂P_i'`
//! - `Σ_β = J_β⁻¹ K_β J_β⁻¹`, the covariance of `√K (θ̂_β - θ₀)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::regression::{group_prob_grad, le_terms, Dataset, GroupRecord, Theta};

/// Largest condition number of `J_β` accepted by [`sandwich_covariance`].
pub const MAX_CONDITION: f64 = 1e12;

/// Singular values of the weighted gradient matrix below this fraction of the largest are
/// treated as zero when counting the rank.
pub const RANK_TOL: f64 = 1e-9;

/// Per-group factors of `J_β` and `K_β`.
struct GroupFactor {
    weight: f64,
    c: f64,
    p: f64,
    pbar: f64,
    grad: Vec<f64>,
}

fn group_factors(theta: &Theta, data: &Dataset, beta: f64) -> Result<Vec<GroupFactor>> {
    if !(beta.is_finite() && (0.0..=1.0).contains(&beta)) {
        return Err(Error::Domain(format!("tuning parameter must lie in [0, 1], got {beta}")));
    }
    data.check_theta(theta)?;
    let big_k = data.total_k() as f64;
    let mut out = Vec::with_capacity(data.len());
    for (i, g) in data.groups().iter().enumerate() {
        if g.k == 0 {
            continue;
        }
        let t = le_terms(theta, g, i)?;
        if t.p <= 0.0 || t.pbar <= 0.0 {
            return Err(Error::DegenerateProbability { group: i, p: t.p });
        }
        let c = t.p.powf(beta - 1.0) + t.pbar.powf(beta - 1.0);
        out.push(GroupFactor { weight: g.k as f64 / big_k, c, p: t.p, pbar: t.pbar, grad: group_prob_grad(theta, g)? });
    }
    Ok(out)
}

fn outer_sum(n: usize, factors: &[GroupFactor], scale: impl Fn(&GroupFactor) -> f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for f in factors {
        let s = scale(f);
        let g = DVector::from_column_slice(&f.grad);
        m.ger(s, &g, &g, 1.0);
    }
    symmetrize(m)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `J_β(θ)`.
pub fn j_matrix(theta: &Theta, data: &Dataset, beta: f64) -> Result<DMatrix<f64>> {
    let f = group_factors(theta, data, beta)?;
    Ok(outer_sum(theta.n_params(), &f, |g| g.weight * g.c))
}

/// `K_β(θ)`.
pub fn k_matrix(theta: &Theta, data: &Dataset, beta: f64) -> Result<DMatrix<f64>> {
    let f = group_factors(theta, data, beta)?;
    Ok(outer_sum(theta.n_params(), &f, |g| g.weight * g.c * g.c * g.p * g.pbar))
}

#[derive(Debug, Clone)]
pub struct SandwichCov {
    pub j_mat: DMatrix<f64>,
    pub k_mat: DMatrix<f64>,
    /// Covariance of `√K (θ̂_β - θ₀)`; divide by `K` for the covariance of `θ̂_β`.
    pub sigma: DMatrix<f64>,
    /// Ratio of the largest to the smallest singular value of `J_β`.
    pub condition: f64,
    /// `ln |Σ_β|`; `-∞` when `K_β` is singular.
    pub log_det: f64,
    pub total_k: u64,
}

impl SandwichCov {
    /// Approximate covariance of the estimator itself, `Σ_β / K`.
    pub fn estimator_covariance(&self) -> DMatrix<f64> {
        &self.sigma / self.total_k as f64
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        let k = self.total_k as f64;
        self.sigma.diagonal().iter().map(|v| (v.max(0.0) / k).sqrt()).collect()
    }

    /// `|Σ_β|`, from the singular values of its square-root factor.
    pub fn determinant(&self) -> f64 {
        self.log_det.exp()
    }
}

/// `A = diag(√(w_i c_i)) G` and `d_i = c_i P_i (1 - P_i)`, so that `J_β = A'A` and
/// `K_β = A' diag(d) A`.
fn weighted_gradients(factors: &[GroupFactor], n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let m = factors.len();
    let mut a = DMatrix::zeros(m, n);
    let mut d = DVector::zeros(m);
    for (r, f) in factors.iter().enumerate() {
        let s = (f.weight * f.c).sqrt();
        for (col, g) in f.grad.iter().enumerate() {
            a[(r, col)] = s * g;
        }
        d[r] = f.c * f.p * f.pbar;
    }
    (a, d)
}

/// `Σ_β = J_β⁻¹ K_β J_β⁻¹`.
///
/// With `A = U S V'` from [`weighted_gradients`], `Σ_β = C'C` where
/// `C = diag(√d) U S⁻¹ V'`, so the result is positive semi-definite to rounding even when
/// `J_β` is badly conditioned.
///
/// Fails with [`Error::RankDeficient`] when the condition number of `J_β` is at least
/// [`MAX_CONDITION`].
pub fn sandwich_covariance(theta: &Theta, data: &Dataset, beta: f64) -> Result<SandwichCov> {
    let factors = group_factors(theta, data, beta)?;
    let n = theta.n_params();
    let j_mat = outer_sum(n, &factors, |g| g.weight * g.c);
    let k_mat = outer_sum(n, &factors, |g| g.weight * g.c * g.c * g.p * g.pbar);
    let (a, d) = weighted_gradients(&factors, n);
    if a.nrows() < n {
        return Err(Error::RankDeficient { condition: f64::INFINITY });
    }
    let svd = a.svd(true, true);
    let s = &svd.singular_values;
    let (smax, smin) = (s.max(), s.min());
    let condition = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V'");
    let b = DMatrix::from_fn(u.nrows(), n, |i, j| d[i].sqrt() * u[(i, j)]);
    let c = &b * DMatrix::from_diagonal(&s.map(|v| 1.0 / v)) * v_t;
    let sigma = symmetrize(c.transpose() * &c);
    let log_det = 2.0 * (b.singular_values().iter().map(|v| v.ln()).sum::<f64>() - s.iter().map(|v| v.ln()).sum::<f64>());
    Ok(SandwichCov { j_mat, k_mat, sigma, condition, log_det, total_k: data.total_k() })
}

/// Spectral summary of `∇²D^w_β(θ₀, θ₀) Σ_β(θ₀)` computed from the SVD of the weighted
/// gradient matrix `A = diag(√(w_i c_i)) G`, so that `J_β = A'A` is never inverted.
///
/// With `A = U S V'` restricted to the `rank` non-negligible singular values, the product
/// `(β+1) J Σ` is similar to `(β+1) U' diag(c_i P_i (1 - P_i)) U`, whose eigenvalues are
/// returned in descending order. `sigma` is the pseudo-inverse sandwich
/// `V S⁻¹ U' diag(c P P̄) U S⁻¹ V'`, equal to `Σ_β` when `J_β` has full rank.
#[derive(Debug, Clone)]
pub struct DivergenceSpectrum {
    pub rank: usize,
    pub eigenvalues: Vec<f64>,
    pub singular_values: Vec<f64>,
    /// `(S_max / S_min)²` over all singular values, the condition number of `J_β`.
    pub j_condition: f64,
    pub sigma: DMatrix<f64>,
    /// `∇²D^w_β(θ₀, θ₀) = (β+1) J_β(θ₀)`.
    pub hessian: DMatrix<f64>,
}

pub fn divergence_spectrum(theta0: &Theta, data: &Dataset, beta: f64) -> Result<DivergenceSpectrum> {
    let factors = group_factors(theta0, data, beta)?;
    let n = theta0.n_params();
    let m = factors.len();
    let (a, d) = weighted_gradients(&factors, n);
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V'");
    let s = &svd.singular_values;
    let smax = s.max();
    let keep: Vec<usize> = (0..s.len()).filter(|&i| smax > 0.0 && s[i] > RANK_TOL * smax).collect();
    let rank = keep.len();
    let smin = s.min();
    let j_condition = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };

    let hessian = symmetrize(a.transpose() * &a * (beta + 1.0));
    if rank == 0 {
        return Ok(DivergenceSpectrum {
            rank,
            eigenvalues: vec![],
            singular_values: s.iter().copied().collect(),
            j_condition,
            sigma: DMatrix::zeros(n, n),
            hessian,
        });
    }
    let u_r = DMatrix::from_fn(m, rank, |i, j| u[(i, keep[j])]);
    let v_r = DMatrix::from_fn(n, rank, |i, j| v_t[(keep[j], i)]);
    let s_inv = DMatrix::from_fn(rank, rank, |i, j| if i == j { 1.0 / s[keep[i]] } else { 0.0 });
    let inner = symmetrize(u_r.transpose() * DMatrix::from_diagonal(&d) * &u_r);
    let mut eigenvalues: Vec<f64> =
        inner.clone().symmetric_eigenvalues().iter().map(|l| (beta + 1.0) * l).collect();
    eigenvalues.sort_by(|x, y| y.total_cmp(x));
    let left = &v_r * &s_inv;
    let sigma = symmetrize(&left * inner * left.transpose());
    Ok(DivergenceSpectrum { rank, eigenvalues, singular_values: s.iter().copied().collect(), j_condition, sigma, hessian })
}

/// `y / (e^y - 1)`, equal to one in the limit `y -> 0`.
fn y_over_expm1(y: f64) -> f64 {
    if y == 0.0 {
        1.0
    } else {
        y / y.exp_m1()
    }
}

fn hessian_contribution(theta: &Theta, g: &GroupRecord, index: usize, h: &mut DMatrix<f64>) -> Result<()> {
    let t = le_terms(theta, g, index)?;
    let j = theta.dim();
    let (n, k) = (g.n as f64, g.k as f64);
    let resid = n - k * t.p;
    let ff = k * t.p * t.pbar;
    // second partials of u = α ℓ(y) divided by x_r x_s
    let uaa = t.du_dalpha_part;
    let uab = t.du_dlambda_part;
    let ubb = t.du_dlambda_part * (1.0 - y_over_expm1(t.y));
    let ua = t.du_dalpha_part;
    let ub = t.du_dlambda_part;
    for r in 0..j {
        for s in 0..j {
            let xx = g.x[r] * g.x[s];
            h[(r, s)] += xx * (resid * uaa - ff * ua * ua);
            h[(r, j + s)] += xx * (resid * uab - ff * ua * ub);
            h[(j + r, s)] += xx * (resid * uab - ff * ub * ua);
            h[(j + r, j + s)] += xx * (resid * ubb - ff * ub * ub);
        }
    }
    Ok(())
}

/// Matrix of second partial derivatives of the LE log-likelihood `ln L(θ)`.
pub fn mle_hessian(theta: &Theta, data: &Dataset) -> Result<DMatrix<f64>> {
    data.check_theta(theta)?;
    let n = theta.n_params();
    let mut h = DMatrix::zeros(n, n);
    for (i, g) in data.groups().iter().enumerate() {
        hessian_contribution(theta, g, i, &mut h)?;
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow { group: 0, detail: "Hessian is not finite".into() });
    }
    Ok(symmetrize(h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::nll_gradient;
    use crate::regression::group_prob;

    fn theta1() -> Theta {
        Theta::from_flat(&[0.2, -0.6, -0.2, 0.4]).unwrap()
    }

    fn table2(counts: [u32; 3]) -> Dataset {
        let xs = [[0.2, 0.4], [0.3, 0.6], [0.4, 0.8]];
        let ks = [15, 20, 25];
        Dataset::new((0..3).map(|i| GroupRecord::new(1.0, ks[i], counts[i], xs[i].to_vec()).unwrap()).collect())
            .unwrap()
    }

    fn four_groups() -> Dataset {
        let xs = [[0.2, 0.4], [0.4, 0.3], [0.6, 0.2], [0.8, 0.5]];
        let ks = [15, 20, 25, 20];
        let ns = [8, 12, 15, 11];
        let taus = [1.0, 1.5, 2.0, 2.5];
        Dataset::new((0..4).map(|i| GroupRecord::new(taus[i], ks[i], ns[i], xs[i].to_vec()).unwrap()).collect())
            .unwrap()
    }

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0, |a: f64, v| a.max(v.abs()))
    }

    #[test]
    fn j_equals_k_at_beta_zero() {
        for data in [table2([9, 14, 20]), four_groups()] {
            let j = j_matrix(&theta1(), &data, 0.0).unwrap();
            let k = k_matrix(&theta1(), &data, 0.0).unwrap();
            assert!(max_abs(&(&j - &k)) <= 1e-12 * max_abs(&j), "{j} {k}");
        }
    }

    #[test]
    fn zero_covariates_give_zero_matrices() {
        let d = Dataset::new(vec![GroupRecord::new(2.0, 10, 3, vec![0.0, 0.0]).unwrap()]).unwrap();
        assert_eq!(max_abs(&j_matrix(&theta1(), &d, 0.4).unwrap()), 0.0);
        assert_eq!(max_abs(&k_matrix(&theta1(), &d, 0.4).unwrap()), 0.0);
        assert_eq!(max_abs(&mle_hessian(&theta1(), &d).unwrap()), 0.0);
    }

    #[test]
    fn j_matches_brute_force_assembly() {
        // Partials coded from F = 1 - 1/(1 + (e^{λτ} - 1)^α) directly.
        let data = table2([9, 14, 20]);
        let theta = theta1();
        let beta = 0.2;
        let mut oracle = DMatrix::<f64>::zeros(4, 4);
        for g in data.groups() {
            let alpha = (0.2 * g.x[0] - 0.6 * g.x[1]).exp();
            let lambda = (-0.2 * g.x[0] + 0.4 * g.x[1]).exp();
            let e = (lambda * g.tau).exp() - 1.0;
            let ea = e.powf(alpha);
            let p = ea / (1.0 + ea);
            let dp_dalpha = ea * e.ln() / (1.0 + ea).powi(2);
            let dp_dlambda = alpha * e.powf(alpha - 1.0) * g.tau * (lambda * g.tau).exp() / (1.0 + ea).powi(2);
            let grad = [
                dp_dalpha * alpha * g.x[0],
                dp_dalpha * alpha * g.x[1],
                dp_dlambda * lambda * g.x[0],
                dp_dlambda * lambda * g.x[1],
            ];
            let w = g.k as f64 / 60.0 * (p.powf(beta - 1.0) + (1.0 - p).powf(beta - 1.0));
            for r in 0..4 {
                for s in 0..4 {
                    oracle[(r, s)] += w * grad[r] * grad[s];
                }
            }
        }
        let j = j_matrix(&theta, &data, beta).unwrap();
        assert!(max_abs(&(&j - &oracle)) < 1e-10, "{j} {oracle}");
    }

    #[test]
    fn collinear_layout_is_rank_deficient() {
        let err = sandwich_covariance(&theta1(), &table2([9, 14, 20]), 0.1).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }), "{err:?}");
        let spec = divergence_spectrum(&theta1(), &table2([9, 14, 20]), 0.1).unwrap();
        assert_eq!(spec.rank, 2);
    }

    #[test]
    fn sigma_is_inverse_j_at_beta_zero() {
        let cov = sandwich_covariance(&theta1(), &four_groups(), 0.0).unwrap();
        let prod = &cov.j_mat * &cov.sigma;
        assert!(max_abs(&(prod - DMatrix::identity(4, 4))) < 1e-8);
    }

    #[test]
    fn spectrum_agrees_with_direct_product() {
        let data = four_groups();
        for beta in [0.0, 0.2, 0.7] {
            let spec = divergence_spectrum(&theta1(), &data, beta).unwrap();
            let cov = sandwich_covariance(&theta1(), &data, beta).unwrap();
            assert_eq!(spec.rank, 4);
            let scale = max_abs(&cov.sigma);
            assert!(max_abs(&(&spec.sigma - &cov.sigma)) < 1e-7 * scale);
            // J Σ is similar to L' Σ L with J = L L'
            let l = cov.j_mat.clone().cholesky().unwrap().unpack();
            let direct = l.transpose() * &cov.sigma * &l * (beta + 1.0);
            let mut ev: Vec<f64> = direct.symmetric_eigenvalues().iter().copied().collect();
            ev.sort_by(|x, y| y.total_cmp(x));
            for (a, b) in ev.iter().zip(&spec.eigenvalues) {
                assert!((a - b).abs() < 1e-6 * b.abs().max(1.0), "{ev:?} {:?}", spec.eigenvalues);
            }
            if beta == 0.0 {
                assert!(spec.eigenvalues.iter().all(|l| (l - 1.0).abs() < 1e-10));
            }
        }
    }

    #[test]
    fn degenerate_probability_is_reported() {
        let d = Dataset::new(vec![GroupRecord::new(1.0, 10, 3, vec![1.0]).unwrap()]).unwrap();
        let theta = Theta::from_flat(&[5.0, 5.0]).unwrap();
        assert_eq!(group_prob(&theta, &d.groups()[0]).unwrap().pbar, 0.0);
        assert!(matches!(j_matrix(&theta, &d, 0.5), Err(Error::DegenerateProbability { group: 0, .. })));
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let data = table2([4, 13, 22]);
        let theta = theta1();
        let h = mle_hessian(&theta, &data).unwrap();
        let step = 1e-5;
        let base = theta.to_flat();
        for c in 0..4 {
            let mut up = base.clone();
            let mut dn = base.clone();
            up[c] += step;
            dn[c] -= step;
            let gu = nll_gradient(&Theta::from_flat(&up).unwrap(), &data).unwrap();
            let gd = nll_gradient(&Theta::from_flat(&dn).unwrap(), &data).unwrap();
            for r in 0..4 {
                let fd = -(gu[r] - gd[r]) / (2.0 * step);
                assert!((fd - h[(r, c)]).abs() <= 1e-5 * fd.abs().max(1.0), "({r},{c}) fd={fd} h={}", h[(r, c)]);
            }
        }
        assert!(max_abs(&(&h - h.transpose())) < 1e-12);
    }

    #[test]
    fn group_order_does_not_matter() {
        let data = four_groups();
        let mut groups = data.groups().to_vec();
        groups.reverse();
        let rev = Dataset::new(groups).unwrap();
        let a = sandwich_covariance(&theta1(), &data, 0.3).unwrap();
        let b = sandwich_covariance(&theta1(), &rev, 0.3).unwrap();
        assert!(max_abs(&(&a.sigma - &b.sigma)) < 1e-9 * max_abs(&a.sigma));
        let ha = mle_hessian(&theta1(), &data).unwrap();
        let hb = mle_hessian(&theta1(), &rev).unwrap();
        assert!(max_abs(&(ha - hb)) < 1e-12);
    }
}
