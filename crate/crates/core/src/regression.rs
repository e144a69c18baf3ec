//! Covariate-linked lifetime model for grouped one-shot data.
//!
//! Group `i` has `α_i = exp(Σ_j a_j x_ij)` and `λ_i = exp(Σ_j b_j x_ij)`. There is no
//! implicit intercept: add a constant-one covariate column to get one.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::lifetime::{self, ln_expm1, logistic, Family, ShapeScale};

/// Coefficient vector `(a_1..a_J, b_1..b_J)` linking covariates to shape and scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Theta {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Dimension { expected: a.len(), got: b.len() });
        }
        if a.is_empty() {
            return Err(Error::Domain("coefficient vector must not be empty".into()));
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::Domain("coefficients must be finite".into()));
        }
        Ok(Theta { a, b })
    }

    pub fn zeros(dim: usize) -> Self {
        Theta { a: vec![0.0; dim], b: vec![0.0; dim] }
    }

    /// Builds from the flat layout `(a_1..a_J, b_1..b_J)`.
    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if values.len() % 2 != 0 || values.is_empty() {
            return Err(Error::Domain(format!(
                "flat coefficient vector needs a positive even length, got {}",
                values.len()
            )));
        }
        let j = values.len() / 2;
        Theta::new(values[..j].to_vec(), values[j..].to_vec())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.a.iter().chain(&self.b).copied().collect()
    }

    /// Covariate dimension `J`.
    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// Number of free coefficients, `2J`.
    pub fn n_params(&self) -> usize {
        2 * self.a.len()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }
}

/// One observation group: `k` devices inspected at `tau`, `n` of which had failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub tau: f64,
    pub k: u32,
    pub n: u32,
    pub x: Vec<f64>,
}

impl GroupRecord {
    pub fn new(tau: f64, k: u32, n: u32, x: Vec<f64>) -> Result<Self> {
        let g = GroupRecord { tau, k, n, x };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidData(format!("inspection time must be > 0, got {}", self.tau)));
        }
        if self.n > self.k {
            return Err(Error::InvalidData(format!(
                "failures ({}) exceed group size ({})",
                self.n, self.k
            )));
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("covariates must be finite".into()));
        }
        Ok(())
    }

    /// Empirical failure proportion `n / k` (zero for an empty group).
    pub fn proportion(&self) -> f64 {
        if self.k == 0 {
            0.0
        } else {
            self.n as f64 / self.k as f64
        }
    }
}

/// Ordered list of groups sharing one covariate dimension.
///
/// Also used as a design layout, in which case the failure counts are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<GroupRecord>", into = "Vec<GroupRecord>")]
pub struct Dataset {
    groups: Vec<GroupRecord>,
    total_k: u64,
}

impl TryFrom<Vec<GroupRecord>> for Dataset {
    type Error = Error;

    fn try_from(groups: Vec<GroupRecord>) -> Result<Self> {
        Dataset::new(groups)
    }
}

impl From<Dataset> for Vec<GroupRecord> {
    fn from(d: Dataset) -> Self {
        d.groups
    }
}

impl Dataset {
    pub fn new(groups: Vec<GroupRecord>) -> Result<Self> {
        let first = groups
            .first()
            .ok_or_else(|| Error::InvalidData("dataset needs at least one group".into()))?;
        let dim = first.x.len();
        if dim == 0 {
            return Err(Error::InvalidData("groups need at least one covariate".into()));
        }
        for (i, g) in groups.iter().enumerate() {
            g.validate()
                .map_err(|e| Error::InvalidData(format!("group {}: {e}", i + 1)))?;
            if g.x.len() != dim {
                return Err(Error::Dimension { expected: dim, got: g.x.len() });
            }
        }
        let total_k: u64 = groups.iter().map(|g| g.k as u64).sum();
        if total_k == 0 {
            return Err(Error::InvalidData("total number of devices must be positive".into()));
        }
        Ok(Dataset { groups, total_k })
    }

    pub fn groups(&self) -> &[GroupRecord] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// `K = Σ k_i`.
    pub fn total_k(&self) -> u64 {
        self.total_k
    }

    pub fn total_failures(&self) -> u64 {
        self.groups.iter().map(|g| g.n as u64).sum()
    }

    /// Covariate dimension `J`.
    pub fn covariate_dim(&self) -> usize {
        self.groups[0].x.len()
    }

    pub fn counts(&self) -> Vec<u32> {
        self.groups.iter().map(|g| g.n).collect()
    }

    /// Same layout with new failure counts.
    pub fn with_counts(&self, counts: &[u32]) -> Result<Self> {
        if counts.len() != self.groups.len() {
            return Err(Error::Dimension { expected: self.groups.len(), got: counts.len() });
        }
        let groups = self
            .groups
            .iter()
            .zip(counts)
            .map(|(g, &n)| GroupRecord { n, ..g.clone() })
            .collect();
        Dataset::new(groups)
    }

    /// Same layout with new inspection times.
    pub fn with_taus(&self, taus: &[f64]) -> Result<Self> {
        if taus.len() != self.groups.len() {
            return Err(Error::Dimension { expected: self.groups.len(), got: taus.len() });
        }
        let groups = self
            .groups
            .iter()
            .zip(taus)
            .map(|(g, &tau)| GroupRecord { tau, ..g.clone() })
            .collect();
        Dataset::new(groups)
    }

    /// Multiplies every group size (and count) by `factor`.
    pub fn scaled_sizes(&self, factor: u32) -> Result<Self> {
        let groups = self
            .groups
            .iter()
            .map(|g| GroupRecord { k: g.k * factor, n: g.n * factor, ..g.clone() })
            .collect();
        Dataset::new(groups)
    }

    pub(crate) fn check_theta(&self, theta: &Theta) -> Result<()> {
        if theta.dim() != self.covariate_dim() {
            return Err(Error::Dimension { expected: self.covariate_dim(), got: theta.dim() });
        }
        Ok(())
    }
}

/// Model failure probability of a group, `P_i1 = F(τ_i)`, and its complement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupProb {
    pub p: f64,
    pub pbar: f64,
}

fn dot(a: &[f64], x: &[f64]) -> Result<f64> {
    if a.len() != x.len() {
        return Err(Error::Dimension { expected: a.len(), got: x.len() });
    }
    Ok(a.iter().zip(x).map(|(c, v)| c * v).sum())
}

/// Log-linear link from covariates to LE shape and scale.
pub fn link(theta: &Theta, x: &[f64]) -> Result<ShapeScale> {
    let alpha = dot(theta.a(), x)?.exp();
    let lambda = dot(theta.b(), x)?.exp();
    ShapeScale::new(alpha, lambda).map_err(|_| {
        Error::Domain(format!("link overflows: alpha = {alpha}, lambda = {lambda}"))
    })
}

/// Per-group quantities shared by the probability, its gradient and the Hessian.
///
/// `du_dalpha_part` and `du_dlambda_part` are the factors that multiply `x_j` in
/// `∂u/∂a_j` and `∂u/∂b_j` for the log-odds `u`. For the LE family
/// `du_dalpha_part = α ℓ` and `du_dlambda_part = α y / (1 - e^{-y})` with
/// `y = λτ`, `ℓ = ln(e^y - 1)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LeTerms {
    pub y: f64,
    pub u: f64,
    pub p: f64,
    pub pbar: f64,
    pub du_dalpha_part: f64,
    pub du_dlambda_part: f64,
}

/// `y / (1 - e^{-y})`, equal to one in the limit `y -> 0`.
fn y_over_one_minus_exp(y: f64) -> f64 {
    if y == 0.0 {
        1.0
    } else {
        y / -(-y).exp_m1()
    }
}

pub(crate) fn le_terms(theta: &Theta, g: &GroupRecord, index: usize) -> Result<LeTerms> {
    le_terms_split(theta.a(), theta.b(), g, index)
}

fn le_terms_split(a: &[f64], b: &[f64], g: &GroupRecord, index: usize) -> Result<LeTerms> {
    let eta_a = dot(a, &g.x)?;
    let eta_b = dot(b, &g.x)?;
    let alpha = eta_a.exp();
    let y = (eta_b + g.tau.ln()).exp();
    if !alpha.is_finite() || !y.is_finite() {
        return Err(Error::Overflow {
            group: index,
            detail: format!("alpha = {alpha:e}, lambda*tau = {y:e}"),
        });
    }
    let ell = ln_expm1(y);
    let u = alpha * ell;
    let du_dalpha_part = u;
    let du_dlambda_part = alpha * y_over_one_minus_exp(y);
    if !du_dalpha_part.is_finite() || !du_dlambda_part.is_finite() || u.is_nan() {
        return Err(Error::Overflow {
            group: index,
            detail: format!("log-odds derivative not finite (alpha = {alpha:e}, lambda*tau = {y:e})"),
        });
    }
    Ok(LeTerms {
        y,
        u,
        p: logistic(u),
        pbar: logistic(-u),
        du_dalpha_part,
        du_dlambda_part,
    })
}

/// `P_i1 = F(τ_i; x_i, θ)` for the LE family.
pub fn group_prob(theta: &Theta, g: &GroupRecord) -> Result<GroupProb> {
    let t = le_terms(theta, g, 0)?;
    Ok(GroupProb { p: t.p, pbar: t.pbar })
}

/// `∂P_i1/∂θ` in the order `(a_1..a_J, b_1..b_J)`.
pub fn group_prob_grad(theta: &Theta, g: &GroupRecord) -> Result<Vec<f64>> {
    let t = le_terms(theta, g, 0)?;
    let ff = t.p * t.pbar;
    let ga = ff * t.du_dalpha_part;
    let gb = ff * t.du_dlambda_part;
    Ok(g.x.iter().map(|x| ga * x).chain(g.x.iter().map(|x| gb * x)).collect())
}

/// Probability pair and logit gradient `∂F/∂θ / (F F̄)` of one group for any family.
///
/// For LE the logit gradient is exactly `∂u/∂θ`. Weibull and the Gamma scale direction are
/// analytic; the Gamma shape direction uses a central difference in `ln α`.
#[derive(Debug, Clone)]
pub(crate) struct GroupEval {
    pub p: f64,
    pub pbar: f64,
    pub dlogit: Vec<f64>,
}

/// Allocation-free core of [`group_eval`]: the logit gradient is `(ga·x, gb·x)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GroupScalars {
    pub p: f64,
    pub pbar: f64,
    pub ln_p: f64,
    pub ln_pbar: f64,
    pub ga: f64,
    pub gb: f64,
}

pub(crate) fn group_eval(family: Family, theta: &Theta, g: &GroupRecord, index: usize) -> Result<GroupEval> {
    let s = group_scalars(family, theta.a(), theta.b(), g, index)?;
    Ok(GroupEval {
        p: s.p,
        pbar: s.pbar,
        dlogit: g.x.iter().map(|v| s.ga * v).chain(g.x.iter().map(|v| s.gb * v)).collect(),
    })
}

/// `a` and `b` are the shape and scale coefficient blocks.
pub(crate) fn group_scalars(family: Family, a: &[f64], b: &[f64], g: &GroupRecord, index: usize) -> Result<GroupScalars> {
    match family {
        Family::LogisticExponential => {
            let t = le_terms_split(a, b, g, index)?;
            Ok(GroupScalars {
                p: t.p,
                pbar: t.pbar,
                ln_p: -lifetime::softplus(-t.u),
                ln_pbar: -lifetime::softplus(t.u),
                ga: t.du_dalpha_part,
                gb: t.du_dlambda_part,
            })
        }
        Family::Weibull => {
            let alpha = dot(a, &g.x)?.exp();
            let ln_y = dot(b, &g.x)? + g.tau.ln();
            let v = (alpha * ln_y).exp();
            if !alpha.is_finite() || !v.is_finite() {
                return Err(Error::Overflow { group: index, detail: format!("(lambda*tau)^alpha = {v:e}") });
            }
            let p = -(-v).exp_m1();
            let pbar = (-v).exp();
            // ∂F = F̄ ∂v, so ∂F/(F F̄) = ∂v / F.
            let v_over_f = if v == 0.0 { 1.0 } else { v / p };
            Ok(GroupScalars {
                p,
                pbar,
                ln_p: p.ln(),
                ln_pbar: -v,
                ga: alpha * ln_y * v_over_f,
                gb: alpha * v_over_f,
            })
        }
        Family::Gamma => {
            let alpha = dot(a, &g.x)?.exp();
            let z = (dot(b, &g.x)? + g.tau.ln()).exp();
            if !alpha.is_finite() || !z.is_finite() || z == 0.0 {
                return Err(Error::Overflow { group: index, detail: format!("alpha = {alpha:e}, lambda*tau = {z:e}") });
            }
            let p = gamma_lr(alpha, z);
            let pbar = gamma_ur(alpha, z);
            let ff = p * pbar;
            // ∂P(α, z)/∂z · z = z^α e^{-z} / Γ(α)
            let dz = (alpha * z.ln() - z - ln_gamma(alpha)).exp();
            let h: f64 = 1e-6;
            let up = gamma_lr(alpha * h.exp(), z);
            let dn = gamma_lr(alpha * (-h).exp(), z);
            let dln_alpha = (up - dn) / (2.0 * h);
            let (ga, gb) = (dln_alpha / ff, dz / ff);
            if !ga.is_finite() || !gb.is_finite() {
                return Err(Error::Overflow { group: index, detail: format!("degenerate gamma probability {p:e}") });
            }
            Ok(GroupScalars { p, pbar, ln_p: p.ln(), ln_pbar: pbar.ln(), ga, gb })
        }
    }
}

/// Failure probability of a group under any supported family.
pub fn family_group_prob(family: Family, theta: &Theta, g: &GroupRecord) -> Result<GroupProb> {
    let e = group_eval(family, theta, g, 0)?;
    Ok(GroupProb { p: e.p, pbar: e.pbar })
}
