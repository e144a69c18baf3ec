//! Robust divergence-based test of a simple null `H₀: θ = θ₀` and its power approximation.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::asymptotics::divergence_spectrum;
use crate::error::{Error, Result};
use crate::estimation::{fit, FitOptions, FitStatus};
use crate::regression::{group_prob, group_prob_grad, Dataset, Theta};
use crate::seeding::task_rng;

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("tuning parameter must lie in (0, 1], got {beta}")))
    }
}

fn check_level(alpha_level: f64) -> Result<()> {
    if alpha_level.is_finite() && alpha_level > 0.0 && alpha_level < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("significance level must lie in (0, 1), got {alpha_level}")))
    }
}

/// `D^w_β(θ̂, θ₀)`: weighted DPD between the failure probabilities at `theta0` (the model
/// term) and at `theta_hat`.
///
/// `Σ_i (k_i/K) [F₀^{β+1} + F̄₀^{β+1} - (1 + 1/β)(F̂ F₀^β + F̂̄ F̄₀^β) + (F̂^{β+1} + F̂̄^{β+1}) / β]`
pub fn divergence_distance(theta_hat: &Theta, theta0: &Theta, data: &Dataset, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    data.check_theta(theta_hat)?;
    data.check_theta(theta0)?;
    let big_k = data.total_k() as f64;
    let mut total = 0.0;
    for g in data.groups() {
        if g.k == 0 {
            continue;
        }
        let h = group_prob(theta_hat, g)?;
        let z = group_prob(theta0, g)?;
        if h == z {
            continue;
        }
        let b1 = beta + 1.0;
        let term = z.p.powf(b1) + z.pbar.powf(b1) - b1 / beta * (h.p * z.p.powf(beta) + h.pbar * z.pbar.powf(beta))
            + (h.p.powf(b1) + h.pbar.powf(b1)) / beta;
        total += g.k as f64 / big_k * term;
    }
    // Mathematically non-negative; clamp rounding noise.
    Ok(total.max(0.0))
}

/// Gradient of [`divergence_distance`] in its first argument:
/// `(1 + 1/β) Σ_i (k_i/K) [(F̂^β - F̂̄^β) - (F₀^β - F̄₀^β)] ∂F̂`.
pub fn divergence_gradient(theta: &Theta, theta0: &Theta, data: &Dataset, beta: f64) -> Result<Vec<f64>> {
    check_beta(beta)?;
    data.check_theta(theta)?;
    data.check_theta(theta0)?;
    let big_k = data.total_k() as f64;
    let mut grad = vec![0.0; theta.n_params()];
    for g in data.groups() {
        if g.k == 0 {
            continue;
        }
        let h = group_prob(theta, g)?;
        let z = group_prob(theta0, g)?;
        let w = (beta + 1.0) / beta * g.k as f64 / big_k
            * ((h.p.powf(beta) - h.pbar.powf(beta)) - (z.p.powf(beta) - z.pbar.powf(beta)));
        for (acc, d) in grad.iter_mut().zip(group_prob_grad(theta, g)?) {
            *acc += w * d;
        }
    }
    Ok(grad)
}

/// How the rejection threshold is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CriticalMode {
    /// Reject when `Λ / λ_max ≥ χ²_{r, 1-α}`; conservative since `Λ ≤ λ_max χ²_r`.
    ChiSquareBound,
    /// Reject when `Λ ≥ c_α`, the `1-α` quantile of `Σ λ_l W_l²` estimated from `draws`
    /// seeded draws.
    MonteCarlo { draws: usize, seed: u64 },
}

impl Default for CriticalMode {
    fn default() -> Self {
        CriticalMode::ChiSquareBound
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WdpdTestReport {
    /// `Λ_β = 2K D^w_β(θ̂_β, θ₀)`.
    pub lambda_stat: f64,
    pub lambda_max: f64,
    /// Rank of `∇²D^w_β(θ₀, θ₀) Σ_β(θ₀)`.
    pub r: usize,
    /// `Λ_β / λ_max`.
    pub lambda_star: f64,
    /// Threshold the decision compares against: `χ²_{r,1-α}` for the bound (compared with
    /// `lambda_star`) or `c_α` in Monte-Carlo mode (compared with `lambda_stat`).
    pub critical: f64,
    pub reject: bool,
    pub alpha_level: f64,
    pub beta: f64,
    pub mode: CriticalMode,
    pub eigenvalues: Vec<f64>,
    pub theta_hat: Theta,
    pub fit_status: FitStatus,
    pub fit_iterations: usize,
}

/// Fits `θ̂_β` from `opts.theta0` and tests `H₀: θ = theta0` with the χ² bound.
pub fn wdpd_test(
    data: &Dataset,
    theta0: &Theta,
    beta: f64,
    alpha_level: f64,
    opts: &FitOptions,
) -> Result<WdpdTestReport> {
    wdpd_test_with(data, theta0, beta, alpha_level, opts, CriticalMode::ChiSquareBound)
}

pub fn wdpd_test_with(
    data: &Dataset,
    theta0: &Theta,
    beta: f64,
    alpha_level: f64,
    opts: &FitOptions,
    mode: CriticalMode,
) -> Result<WdpdTestReport> {
    check_beta(beta)?;
    check_level(alpha_level)?;
    data.check_theta(theta0)?;
    let fitted = fit(data, beta, opts)?;
    let spectrum = divergence_spectrum(theta0, data, beta)?;
    let statistic = 2.0 * data.total_k() as f64 * divergence_distance(&fitted.theta_hat, theta0, data, beta)?;
    decide(statistic, &spectrum.eigenvalues, spectrum.rank, alpha_level, mode).map(|d| WdpdTestReport {
        lambda_stat: statistic,
        lambda_max: d.lambda_max,
        r: spectrum.rank,
        lambda_star: d.lambda_star,
        critical: d.critical,
        reject: d.reject,
        alpha_level,
        beta,
        mode,
        eigenvalues: spectrum.eigenvalues.clone(),
        theta_hat: fitted.theta_hat,
        fit_status: fitted.status,
        fit_iterations: fitted.iterations,
    })
}

struct Decision {
    lambda_max: f64,
    lambda_star: f64,
    critical: f64,
    reject: bool,
}

fn decide(stat: f64, eigenvalues: &[f64], rank: usize, alpha_level: f64, mode: CriticalMode) -> Result<Decision> {
    if rank == 0 {
        return Err(Error::RankDeficient { condition: f64::INFINITY });
    }
    let lambda_max = eigenvalues[0];
    if !(lambda_max > 0.0) {
        return Err(Error::RankDeficient { condition: f64::INFINITY });
    }
    let lambda_star = stat / lambda_max;
    let (critical, reject) = match mode {
        CriticalMode::ChiSquareBound => {
            let c = chi_square_quantile(rank, 1.0 - alpha_level)?;
            (c, lambda_star >= c)
        }
        CriticalMode::MonteCarlo { draws, seed } => {
            let c = mc_critical_value(eigenvalues, alpha_level, draws, seed)?;
            (c, stat >= c)
        }
    };
    Ok(Decision { lambda_max, lambda_star, critical, reject })
}

/// Upper quantile helper: `χ²_{(df, q)}` with `q` the lower-tail probability.
pub fn chi_square_quantile(df: usize, q: f64) -> Result<f64> {
    let dist = ChiSquared::new(df as f64).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(dist.inverse_cdf(q))
}

const DRAW_BLOCK: usize = 1000;

/// The `1 - alpha_level` quantile of `Σ_l λ_l W_l²` with `W_l` iid standard normal,
/// estimated from `draws` draws. Blocks of draws use their own seeded streams, so the
/// value is identical for any thread count.
pub fn mc_critical_value(eigenvalues: &[f64], alpha_level: f64, draws: usize, seed: u64) -> Result<f64> {
    check_level(alpha_level)?;
    if draws == 0 {
        return Err(Error::Config("Monte-Carlo critical value needs at least one draw".into()));
    }
    if eigenvalues.is_empty() {
        return Err(Error::RankDeficient { condition: f64::INFINITY });
    }
    let blocks = draws.div_ceil(DRAW_BLOCK);
    let mut sample: Vec<f64> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = task_rng(seed, b as u64);
            let n = DRAW_BLOCK.min(draws - b * DRAW_BLOCK);
            (0..n)
                .map(|_| {
                    eigenvalues
                        .iter()
                        .map(|l| {
                            let w: f64 = StandardNormal.sample(&mut rng);
                            l * w * w
                        })
                        .sum::<f64>()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    sample.sort_by(f64::total_cmp);
    let idx = (((1.0 - alpha_level) * draws as f64).ceil() as usize).clamp(1, draws) - 1;
    Ok(sample[idx])
}

/// Quantities of the non-central representation of `Λ_β` under a local alternative
/// `θ₀ + d/√K`: `∇²D = H`, `S = Σ^{1/2}`, `S'HS = P Λ P'`, `v = Λ⁻¹ P' S' H d`,
/// `ψ = d'Hd - v'Λv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoncentralParams {
    pub eigenvalues: Vec<f64>,
    pub v: Vec<f64>,
    pub psi: f64,
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

pub fn noncentral_params(theta0: &Theta, d: &[f64], data: &Dataset, beta: f64) -> Result<NoncentralParams> {
    check_beta(beta)?;
    if d.len() != theta0.n_params() {
        return Err(Error::Dimension { expected: theta0.n_params(), got: d.len() });
    }
    let spectrum = divergence_spectrum(theta0, data, beta)?;
    let r = spectrum.rank;
    if r == 0 {
        return Err(Error::RankDeficient { condition: f64::INFINITY });
    }
    let h = &spectrum.hessian;
    let s = sym_sqrt(&spectrum.sigma);
    let m = s.transpose() * h * &s;
    let m = (&m + m.transpose()) * 0.5;
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let keep = &order[..r];
    let dv = DVector::from_column_slice(d);
    let hd = h * &dv;
    let projected = s.transpose() * &hd;
    let mut eigenvalues = Vec::with_capacity(r);
    let mut v = Vec::with_capacity(r);
    let mut quad = 0.0;
    for &i in keep {
        let lam = eig.eigenvalues[i];
        let vi = eig.eigenvectors.column(i).dot(&projected) / lam;
        quad += lam * vi * vi;
        eigenvalues.push(lam);
        v.push(vi);
    }
    let psi = dv.dot(&hd) - quad;
    Ok(NoncentralParams { eigenvalues, v, psi })
}

/// Scaling of the normal approximation in [`power_approx`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Dispersion {
    /// Divide by `√(A'ΣA)`, the asymptotic standard deviation of `√K D`.
    #[default]
    StandardDeviation,
    /// Divide by `A'ΣA` itself.
    Variance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub power: f64,
    /// `D^w_β(θ*, θ₀)`.
    pub divergence: f64,
    /// `A'Σ_β(θ*)A` with `A = ∇D^w_β(θ*, θ₀)`.
    pub sigma_star: f64,
    /// The dispersion vanished and the power was set from the sign of the argument.
    pub degenerate: bool,
}

/// Normal approximation to the power of the test at a fixed alternative `θ*`:
/// `π = 1 - Φ[(√K / s)(c_α / (2K) - D^w_β(θ*, θ₀))]`.
///
/// `data` supplies the layout and weights `k_i / Σk_i`; `big_k` is the total sample size
/// the power refers to.
pub fn power_approx(
    theta_star: &Theta,
    theta0: &Theta,
    data: &Dataset,
    beta: f64,
    big_k: u64,
    c_alpha: f64,
    dispersion: Dispersion,
) -> Result<PowerReport> {
    check_beta(beta)?;
    if big_k == 0 {
        return Err(Error::Domain("total sample size must be positive".into()));
    }
    if theta_star == theta0 {
        return Err(Error::Domain("alternative must differ from the null value".into()));
    }
    let divergence = divergence_distance(theta_star, theta0, data, beta)?;
    let a = DVector::from_vec(divergence_gradient(theta_star, theta0, data, beta)?);
    let sigma = divergence_spectrum(theta_star, data, beta)?.sigma;
    let sigma_star = a.dot(&(&sigma * &a)).max(0.0);
    let kf = big_k as f64;
    let arg = c_alpha / (2.0 * kf) - divergence;
    let s = match dispersion {
        Dispersion::StandardDeviation => sigma_star.sqrt(),
        Dispersion::Variance => sigma_star,
    };
    if !(s > 0.0) {
        let power = if arg < 0.0 {
            1.0
        } else if arg > 0.0 {
            0.0
        } else {
            0.5
        };
        return Ok(PowerReport { power, divergence, sigma_star, degenerate: true });
    }
    let z = kf.sqrt() / s * arg;
    let normal = Normal::standard();
    Ok(PowerReport { power: normal.sf(z), divergence, sigma_star, degenerate: false })
}
