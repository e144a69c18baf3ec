//! Objective functions, their analytic gradients, and the fixed-step coordinate descent
//! used to compute the MLE (`β = 0`) and the weighted minimum DPD estimator (`β > 0`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifetime::Family;
use crate::lifetime;
use crate::regression::{group_eval, group_scalars, link, Dataset, GroupRecord, GroupScalars, Theta};

/// Settings of the coordinate-descent optimiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Learning rate.
    pub h: f64,
    /// Stop once the largest coordinate change of a sweep is below this.
    pub tol: f64,
    /// Maximum number of full sweeps.
    pub max_iter: usize,
    /// Starting point.
    pub theta0: Theta,
    /// Descend on `K·D^w_β` rather than `D^w_β` for `β > 0`. Both have the same minimiser;
    /// the scaled form puts the DPD steps on the same footing as `-ln L`, which `K·D`
    /// approaches (up to a constant) as `β -> 0`.
    #[serde(default = "default_true")]
    pub scale_by_total: bool,
}

fn default_true() -> bool {
    true
}

impl FitOptions {
    pub const DEFAULT_H: f64 = 0.01;
    pub const DEFAULT_TOL: f64 = 1e-6;
    pub const DEFAULT_MAX_ITER: usize = 100_000;

    pub fn new(theta0: Theta) -> Self {
        FitOptions {
            h: Self::DEFAULT_H,
            tol: Self::DEFAULT_TOL,
            max_iter: Self::DEFAULT_MAX_ITER,
            theta0,
            scale_by_total: true,
        }
    }

    pub fn with_scale_by_total(mut self, scale: bool) -> Self {
        self.scale_by_total = scale;
        self
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.h)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    MaxIterations,
    /// The objective rose for [`DIVERGENCE_SWEEPS`] consecutive sweeps.
    Diverged,
    /// An objective or gradient evaluation overflowed; the last finite iterate is kept.
    NonFinite,
}

/// Consecutive objective increases that count as divergence.
pub const DIVERGENCE_SWEEPS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: Theta,
    /// Tuning parameter; zero means maximum likelihood.
    pub beta: f64,
    /// Objective (`-ln L` or `D^w_β`) at the start point followed by its value after every
    /// sweep.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub status: FitStatus,
    /// Largest coordinate change in the last sweep.
    pub last_change: f64,
}

impl FitResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the starting value")
    }
}

fn check_beta(beta: f64, allow_zero: bool) -> Result<()> {
    let ok = beta.is_finite() && beta <= 1.0 && if allow_zero { beta >= 0.0 } else { beta > 0.0 };
    if ok {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "tuning parameter must lie in {}0, 1], got {beta}",
            if allow_zero { "[" } else { "(" }
        )))
    }
}

pub(crate) fn family_nll(family: Family, theta: &Theta, data: &Dataset) -> Result<f64> {
    data.check_theta(theta)?;
    nll_split(family, theta.a(), theta.b(), data)
}

fn nll_split(family: Family, a: &[f64], b: &[f64], data: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for (i, g) in data.groups().iter().enumerate() {
        let e = group_scalars(family, a, b, g, i)?;
        let (n, k) = (g.n as f64, g.k as f64);
        let mut term = 0.0;
        if g.n > 0 {
            term += n * e.ln_p;
        }
        if g.k > g.n {
            term += (k - n) * e.ln_pbar;
        }
        if term.is_nan() {
            return Err(Error::Overflow { group: i, detail: "log-likelihood term is NaN".into() });
        }
        total -= term;
    }
    Ok(total)
}

/// Splits a flat parameter vector into its shape and scale blocks.
fn split<'a>(v: &'a [f64], data: &Dataset) -> Result<(&'a [f64], &'a [f64])> {
    let dim = data.covariate_dim();
    if v.len() != 2 * dim {
        return Err(Error::Dimension { expected: 2 * dim, got: v.len() });
    }
    Ok(v.split_at(dim))
}

/// `∂/∂θ_j` of a per-group weight times the logit gradient, summed over groups.
fn partial_sum<W>(family: Family, v: &[f64], data: &Dataset, j: usize, weight: W) -> Result<f64>
where
    W: Fn(&GroupRecord, &GroupScalars) -> f64,
{
    let (a, b) = split(v, data)?;
    let dim = a.len();
    let mut total = 0.0;
    for (i, g) in data.groups().iter().enumerate() {
        if g.k == 0 {
            continue;
        }
        let e = group_scalars(family, a, b, g, i)?;
        let d = if j < dim { e.ga * g.x[j] } else { e.gb * g.x[j - dim] };
        total += weight(g, &e) * d;
        if !total.is_finite() {
            return Err(Error::Overflow { group: i, detail: "gradient is not finite".into() });
        }
    }
    Ok(total)
}

pub(crate) fn family_nll_gradient(family: Family, theta: &Theta, data: &Dataset) -> Result<Vec<f64>> {
    data.check_theta(theta)?;
    let mut grad = vec![0.0; theta.n_params()];
    for (i, g) in data.groups().iter().enumerate() {
        let e = group_eval(family, theta, g, i)?;
        // -∂ln L/∂θ = -(n - kF) ∂logit
        let w = -(g.n as f64 - g.k as f64 * e.p);
        for (acc, d) in grad.iter_mut().zip(&e.dlogit) {
            *acc += w * d;
        }
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow { group: i, detail: "gradient is not finite".into() });
        }
    }
    Ok(grad)
}

/// `-ln L(θ)` for the LE model, without the binomial normalising constant:
/// `-Σ_i [n_i α_i ln(e^{λ_i τ_i} - 1) - k_i ln(1 + (e^{λ_i τ_i} - 1)^{α_i})]`.
pub fn neg_log_likelihood(theta: &Theta, data: &Dataset) -> Result<f64> {
    family_nll(Family::LogisticExponential, theta, data)
}

/// Gradient of [`neg_log_likelihood`] in the order `(a_1..a_J, b_1..b_J)`.
pub fn nll_gradient(theta: &Theta, data: &Dataset) -> Result<Vec<f64>> {
    family_nll_gradient(Family::LogisticExponential, theta, data)
}

pub(crate) fn family_wdpd(family: Family, theta: &Theta, data: &Dataset, beta: f64) -> Result<f64> {
    check_beta(beta, false)?;
    data.check_theta(theta)?;
    wdpd_split(family, theta.a(), theta.b(), data, beta)
}

fn wdpd_split(family: Family, a: &[f64], b: &[f64], data: &Dataset, beta: f64) -> Result<f64> {
    let big_k = data.total_k() as f64;
    let mut total = 0.0;
    for (i, g) in data.groups().iter().enumerate() {
        if g.k == 0 {
            continue;
        }
        let e = group_scalars(family, a, b, g, i)?;
        let pi = g.proportion();
        let b1 = beta + 1.0;
        let model = e.p.powf(b1) + e.pbar.powf(b1);
        let cross = (pi * e.p.powf(beta) + (1.0 - pi) * e.pbar.powf(beta)) * b1 / beta;
        let empirical = (pi.powf(b1) + (1.0 - pi).powf(b1)) / beta;
        total += g.k as f64 / big_k * (model - cross + empirical);
    }
    Ok(total)
}

/// `(β+1) w_i (F^{β-1} + F̄^{β-1}) (F - π) F F̄`, the multiplier of the logit gradient.
fn wdpd_weight(beta: f64, big_k: f64, g: &GroupRecord, e: &GroupScalars) -> f64 {
    let c = e.p.powf(beta) * e.pbar + e.p * e.pbar.powf(beta);
    (beta + 1.0) * g.k as f64 / big_k * c * (e.p - g.proportion())
}

pub(crate) fn family_wdpd_gradient(family: Family, theta: &Theta, data: &Dataset, beta: f64) -> Result<Vec<f64>> {
    check_beta(beta, false)?;
    data.check_theta(theta)?;
    let big_k = data.total_k() as f64;
    let mut grad = vec![0.0; theta.n_params()];
    for (i, g) in data.groups().iter().enumerate() {
        if g.k == 0 {
            continue;
        }
        let e = group_scalars(family, theta.a(), theta.b(), g, i)?;
        let w = wdpd_weight(beta, big_k, g, &e);
        let dlogit = g.x.iter().map(|v| e.ga * v).chain(g.x.iter().map(|v| e.gb * v));
        for (acc, d) in grad.iter_mut().zip(dlogit) {
            *acc += w * d;
        }
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow { group: i, detail: "gradient is not finite".into() });
        }
    }
    Ok(grad)
}

/// Weighted density power divergence `D^w_β(θ)` between the empirical and model failure
/// proportions, weights `k_i / K`, including the θ-free empirical term.
///
/// Requires `β ∈ (0, 1]`; the `β = 0` limit is [`neg_log_likelihood`]` / K` plus a constant.
pub fn wdpd_objective(theta: &Theta, data: &Dataset, beta: f64) -> Result<f64> {
    family_wdpd(Family::LogisticExponential, theta, data, beta)
}

/// Exact gradient of [`wdpd_objective`]:
/// `(β+1)/K Σ_i k_i (F^{β-1} + F̄^{β-1}) (F - n_i/k_i) ∂F/∂θ`.
pub fn wdpd_gradient(theta: &Theta, data: &Dataset, beta: f64) -> Result<Vec<f64>> {
    family_wdpd_gradient(Family::LogisticExponential, theta, data, beta)
}

/// Gauss-Seidel coordinate descent with fixed learning rate.
///
/// Each sweep visits the coordinates in order and moves coordinate `j` by
/// `-h ∂H/∂θ_j`, evaluated at the point that already includes this sweep's earlier
/// updates. Stops when the largest change of a sweep is below `opts.tol`, after
/// `opts.max_iter` sweeps, when the objective rises for [`DIVERGENCE_SWEEPS`]
/// consecutive sweeps, or when an evaluation stops being finite. Only an error at the
/// starting point is returned as `Err`.
pub fn coordinate_descent<V, G>(value: V, gradient: G, opts: &FitOptions) -> Result<FitResult>
where
    V: Fn(&[f64]) -> Result<f64>,
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    descend(value, |x, j| gradient(x).map(|g| g[j]), opts)
}

/// [`coordinate_descent`] driven by a single partial derivative `∂H/∂θ_j`.
fn descend<V, P>(value: V, partial: P, opts: &FitOptions) -> Result<FitResult>
where
    V: Fn(&[f64]) -> Result<f64>,
    P: Fn(&[f64], usize) -> Result<f64>,
{
    opts.validate()?;
    let mut x = opts.theta0.to_flat();
    let start = value(&x)?;
    if !start.is_finite() {
        return Err(Error::Domain(format!("objective is not finite at the starting point ({start})")));
    }
    let mut trace = vec![start];
    let mut status = FitStatus::MaxIterations;
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;
    let mut rising = 0;

    'sweeps: for sweep in 1..=opts.max_iter {
        let before = x.clone();
        let mut max_change: f64 = 0.0;
        for j in 0..x.len() {
            let step = match partial(&x, j) {
                Ok(d) => opts.h * d,
                Err(_) => f64::NAN,
            };
            if !step.is_finite() {
                x = before;
                status = FitStatus::NonFinite;
                break 'sweeps;
            }
            x[j] -= step;
            max_change = max_change.max(step.abs());
        }
        let current = match value(&x) {
            Ok(v) if v.is_finite() => v,
            _ => {
                x = before;
                status = FitStatus::NonFinite;
                break;
            }
        };
        iterations = sweep;
        last_change = max_change;
        let previous = *trace.last().unwrap();
        trace.push(current);
        if max_change < opts.tol {
            status = FitStatus::Converged;
            break;
        }
        rising = if current > previous { rising + 1 } else { 0 };
        if rising >= DIVERGENCE_SWEEPS {
            status = FitStatus::Diverged;
            break;
        }
    }

    Ok(FitResult {
        theta_hat: Theta::from_flat(&x)?,
        beta: f64::NAN,
        objective_trace: trace,
        iterations,
        converged: status == FitStatus::Converged,
        status,
        last_change,
    })
}

/// Fits `θ` for any family: maximum likelihood when `beta == 0`, otherwise the weighted
/// minimum DPD estimator.
pub fn fit_family(family: Family, data: &Dataset, beta: f64, opts: &FitOptions) -> Result<FitResult> {
    check_beta(beta, true)?;
    data.check_theta(&opts.theta0)?;
    let mut result = if beta == 0.0 {
        if data.total_failures() == 0 {
            return Err(Error::Unidentifiable);
        }
        descend(
            |v| split(v, data).and_then(|(a, b)| nll_split(family, a, b, data)),
            |v, j| partial_sum(family, v, data, j, |g, e| -(g.n as f64 - g.k as f64 * e.p)),
            opts,
        )?
    } else {
        let scale = if opts.scale_by_total { data.total_k() as f64 } else { 1.0 };
        let big_k = data.total_k() as f64;
        let mut r = descend(
            |v| split(v, data).and_then(|(a, b)| wdpd_split(family, a, b, data, beta)).map(|d| scale * d),
            |v, j| partial_sum(family, v, data, j, |g, e| scale * wdpd_weight(beta, big_k, g, e)),
            opts,
        )?;
        for d in &mut r.objective_trace {
            *d /= scale;
        }
        r
    };
    result.beta = beta;
    Ok(result)
}

/// Fits the LE model; `beta == 0` gives the MLE, `beta ∈ (0, 1]` the WMDPDE.
pub fn fit(data: &Dataset, beta: f64, opts: &FitOptions) -> Result<FitResult> {
    fit_family(Family::LogisticExponential, data, beta, opts)
}

/// Evaluates `objective` on the full tensor grid spanned by `bounds` (inclusive end points,
/// `points_per_dim` nodes per axis; a single node sits at the centre) and returns the best
/// node. Nodes with a failing or non-finite objective are skipped; if none is finite the
/// centre is returned.
pub fn grid_search<F>(objective: F, bounds: &[(f64, f64)], points_per_dim: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if points_per_dim == 0 {
        return Err(Error::Config("grid needs at least one point per dimension".into()));
    }
    if bounds.iter().any(|(lo, hi)| !lo.is_finite() || !hi.is_finite() || lo > hi) {
        return Err(Error::Config("grid bounds must be finite with low <= high".into()));
    }
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        if points_per_dim == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..points_per_dim)
                .map(|i| lo + (hi - lo) * i as f64 / (points_per_dim - 1) as f64)
                .collect()
        }
    };
    let axes: Vec<Vec<f64>> = bounds.iter().map(|b| axis(*b)).collect();
    let center: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
    let mut index = vec![0usize; bounds.len()];
    let mut point = vec![0.0; bounds.len()];
    let mut best: Option<(f64, Vec<f64>)> = None;
    loop {
        for (d, &i) in index.iter().enumerate() {
            point[d] = axes[d][i];
        }
        if let Ok(v) = objective(&point) {
            if v.is_finite() && best.as_ref().map_or(true, |(b, _)| v < *b) {
                best = Some((v, point.clone()));
            }
        }
        // mixed-radix increment, last axis fastest
        let mut d = bounds.len();
        loop {
            if d == 0 {
                return Ok(best.map_or(center, |(_, p)| p));
            }
            d -= 1;
            index[d] += 1;
            if index[d] < points_per_dim {
                break;
            }
            index[d] = 0;
        }
    }
}

/// Grid-search starting value for [`fit_family`]: minimises the likelihood objective
/// (`beta == 0`) or the weighted DPD over the grid.
pub fn grid_search_init(
    data: &Dataset,
    family: Family,
    beta: f64,
    bounds: &[(f64, f64)],
    points_per_dim: usize,
) -> Result<Theta> {
    check_beta(beta, true)?;
    let n_params = 2 * data.covariate_dim();
    if bounds.len() != n_params {
        return Err(Error::Dimension { expected: n_params, got: bounds.len() });
    }
    let best = grid_search(
        |v| {
            let theta = Theta::from_flat(v)?;
            if beta == 0.0 {
                family_nll(family, &theta, data)
            } else {
                family_wdpd(family, &theta, data, beta)
            }
        },
        bounds,
        points_per_dim,
    )?;
    Theta::from_flat(&best)
}

/// Estimated reliability `1 - F(t; x, θ)` under the LE model.
pub fn reliability_estimate(theta: &Theta, x: &[f64], t: f64) -> Result<f64> {
    let p = link(theta, x)?;
    lifetime::survival(Family::LogisticExponential, t, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::{group_prob, GroupRecord};
    use std::f64::consts::LN_2;

    fn single(tau: f64, k: u32, n: u32, x: &[f64]) -> Dataset {
        Dataset::new(vec![GroupRecord::new(tau, k, n, x.to_vec()).unwrap()]).unwrap()
    }

    fn table2(counts: [u32; 3]) -> Dataset {
        let xs = [[0.2, 0.4], [0.3, 0.6], [0.4, 0.8]];
        let ks = [15, 20, 25];
        Dataset::new(
            (0..3).map(|i| GroupRecord::new(1.0, ks[i], counts[i], xs[i].to_vec()).unwrap()).collect(),
        )
        .unwrap()
    }

    fn theta1() -> Theta {
        Theta::from_flat(&[0.2, -0.6, -0.2, 0.4]).unwrap()
    }

    #[test]
    fn nll_hand_values() {
        let d = single(1.0, 1, 0, &[1.0]);
        assert!((neg_log_likelihood(&Theta::zeros(1), &d).unwrap() - 1.0).abs() < 1e-14);
        let d = single(LN_2, 1, 1, &[1.0]);
        assert!((neg_log_likelihood(&Theta::zeros(1), &d).unwrap() - LN_2).abs() < 1e-14);
    }

    #[test]
    fn nll_gradient_zero_when_counts_match_expectation() {
        // k = 4, F = 1/4: a = 0 (α = 1), e^{λτ} - 1 = 1/3
        let b = 0.3_f64;
        let tau = (4.0f64 / 3.0).ln() / b.exp();
        let d = single(tau, 4, 1, &[1.0]);
        let theta = Theta::from_flat(&[0.0, b]).unwrap();
        assert!((group_prob(&theta, &d.groups()[0]).unwrap().p - 0.25).abs() < 1e-15);
        let g = nll_gradient(&theta, &d).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12), "{g:?}");
        let g = wdpd_gradient(&theta, &d, 0.5).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12), "{g:?}");
    }

    #[test]
    fn gradients_vanish_with_zero_covariates() {
        let d = single(2.0, 10, 4, &[0.0, 0.0]);
        assert!(nll_gradient(&theta1(), &d).unwrap().iter().all(|v| *v == 0.0));
        assert!(wdpd_gradient(&theta1(), &d, 0.3).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn wdpd_hand_value() {
        // F = F̄ = 1/2, π = 0, β = 1: (1/4 + 1/4) - 2(0 + 1/2) + (0 + 1) = 1/2
        let d = single(LN_2, 10, 0, &[1.0]);
        let v = wdpd_objective(&Theta::zeros(1), &d, 1.0).unwrap();
        assert!((v - 0.5).abs() < 1e-15, "{v}");
    }

    #[test]
    fn wdpd_zero_at_empirical_match() {
        let d = single(LN_2, 10, 5, &[1.0]);
        let theta = Theta::zeros(1);
        for beta in [0.1, 0.5, 1.0] {
            assert!(wdpd_objective(&theta, &d, beta).unwrap().abs() < 1e-14);
            assert!(wdpd_gradient(&theta, &d, beta).unwrap().iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn wdpd_small_beta_limit_is_scaled_nll() {
        let d = table2([9, 14, 20]);
        let theta = theta1();
        let big_k = d.total_k() as f64;
        // θ-free constant: Σ w_i [π ln π + (1 - π) ln(1 - π)]
        let c: f64 = d
            .groups()
            .iter()
            .map(|g| {
                let pi = g.proportion();
                let ent = |q: f64| if q > 0.0 { q * q.ln() } else { 0.0 };
                g.k as f64 / big_k * (ent(pi) + ent(1.0 - pi))
            })
            .sum();
        // The likelihood here has no normalising constant, matching the limit exactly.
        let lhs = wdpd_objective(&theta, &d, 1e-4).unwrap() - c;
        let rhs = neg_log_likelihood(&theta, &d).unwrap() / big_k;
        assert!((lhs - rhs).abs() < 1e-3, "lhs={lhs} rhs={rhs}");
    }

    #[test]
    fn beta_validation() {
        let d = table2([1, 2, 3]);
        assert!(wdpd_objective(&theta1(), &d, 0.0).is_err());
        assert!(wdpd_objective(&theta1(), &d, 1.5).is_err());
        let opts = FitOptions::new(theta1());
        assert!(fit(&d, -0.1, &opts).is_err());
    }

    #[test]
    fn quadratic_sanity_objective() {
        let value = |v: &[f64]| Ok((v[0] - 1.0).powi(2) + (v[1] - 2.0).powi(2));
        let grad = |v: &[f64]| Ok(vec![2.0 * (v[0] - 1.0), 2.0 * (v[1] - 2.0)]);
        let opts = FitOptions::new(Theta::zeros(1)).with_h(0.1).with_tol(1e-10);
        let r = coordinate_descent(value, grad, &opts).unwrap();
        assert!(r.converged);
        let t = r.theta_hat.to_flat();
        assert!((t[0] - 1.0).abs() < 1e-8 && (t[1] - 2.0).abs() < 1e-8, "{t:?}");
        assert!(r.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-10));
    }

    #[test]
    fn loose_tolerance_stops_after_one_sweep() {
        let value = |v: &[f64]| Ok((v[0] - 1.0).powi(2) + (v[1] - 2.0).powi(2));
        let grad = |v: &[f64]| Ok(vec![2.0 * (v[0] - 1.0), 2.0 * (v[1] - 2.0)]);
        let opts = FitOptions::new(Theta::zeros(1)).with_h(0.1).with_tol(10.0);
        let r = coordinate_descent(value, grad, &opts).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.objective_trace.len(), 2);
    }

    #[test]
    fn divergence_is_reported_not_raised() {
        // Step too large for the curvature: iterates oscillate with growing amplitude.
        let value = |v: &[f64]| Ok(v[0] * v[0] + v[1] * v[1]);
        let grad = |v: &[f64]| Ok(vec![2.0 * v[0], 2.0 * v[1]]);
        let opts = FitOptions::new(Theta::from_flat(&[1.0, 1.0]).unwrap()).with_h(1.5);
        let r = coordinate_descent(value, grad, &opts).unwrap();
        assert!(!r.converged);
        assert_eq!(r.status, FitStatus::Diverged);
        assert_eq!(r.iterations, DIVERGENCE_SWEEPS);
    }

    #[test]
    fn overflow_is_reported_not_raised() {
        let value = |v: &[f64]| Ok(-v[0] + v[1] * v[1]);
        let grad = |v: &[f64]| {
            if v[0] < 3.0 {
                Ok(vec![-1.0, 2.0 * v[1]])
            } else {
                Err(Error::Overflow { group: 0, detail: "exp".into() })
            }
        };
        let opts = FitOptions::new(Theta::zeros(1)).with_h(-1.0);
        assert!(coordinate_descent(value, grad, &opts).is_err(), "negative step rejected");
        let opts = FitOptions::new(Theta::zeros(1)).with_h(1.0);
        let r = coordinate_descent(value, grad, &opts).unwrap();
        assert_eq!(r.status, FitStatus::NonFinite);
        assert!(!r.converged);
        assert_eq!(r.theta_hat.to_flat(), vec![2.0, 0.0]);
    }

    #[test]
    fn all_zero_failures_is_unidentifiable_for_mle_only() {
        let d = table2([0, 0, 0]);
        let opts = FitOptions::new(theta1()).with_max_iter(50);
        assert_eq!(fit(&d, 0.0, &opts).unwrap_err(), Error::Unidentifiable);
        assert!(fit(&d, 0.5, &opts).is_ok());
    }

    #[test]
    fn grid_search_picks_node_minimum() {
        let bounds = [(-1.0, 1.0), (0.0, 2.0)];
        let p = grid_search(|v| Ok((v[0] - 0.5).powi(2) + (v[1] - 1.5).powi(2)), &bounds, 5).unwrap();
        assert_eq!(p, vec![0.5, 1.5]);
        let p = grid_search(|v| Ok(v[0] + v[1]), &bounds, 1).unwrap();
        assert_eq!(p, vec![0.0, 1.0]);
        let p = grid_search(|_| Err(Error::Domain("x".into())), &bounds, 3).unwrap();
        assert_eq!(p, vec![0.0, 1.0]);
    }

    #[test]
    fn reliability_values() {
        let theta = Theta::zeros(2);
        assert!((reliability_estimate(&theta, &[0.3, 0.1], LN_2).unwrap() - 0.5).abs() < 1e-15);
        assert!(reliability_estimate(&theta1(), &[0.2, 0.4], 1e-12).unwrap() > 1.0 - 1e-9);
        // 40-digit value of 1/(1 + (e^{2.5 λ} - 1)^α) at θ₁, x = (0.2, 0.4)
        let r = reliability_estimate(&theta1(), &[0.2, 0.4], 2.5).unwrap();
        assert!((r - 0.094_712_258_854_990_52).abs() < 1e-12, "{r}");
    }
}
