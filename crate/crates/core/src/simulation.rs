//! Data generation, Monte-Carlo bias/MSE studies and parametric bootstrap procedures.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit, fit_family, grid_search_init, reliability_estimate, FitOptions, FitResult, FitStatus};
use crate::lifetime::Family;
use crate::regression::{family_group_prob, group_prob, Dataset, Theta};
use crate::seeding::labelled_rng;

/// Share of non-converged replications above which a study carries a warning.
pub const FAILURE_WARNING_SHARE: f64 = 0.2;
/// Sweep cap per fit in Monte-Carlo studies. Replications whose fit drifts along a flat
/// ridge stop here instead of running to the single-fit default.
pub const MC_MAX_ITER: usize = 20_000;

const STREAM_DATA: u64 = 1;
const STREAM_BOOTSTRAP: u64 = 2;

fn binomial<R: Rng + ?Sized>(k: u32, p: f64, rng: &mut R) -> Result<u32> {
    let dist = Binomial::new(k as u64, p.clamp(0.0, 1.0)).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(dist.sample(rng) as u32)
}

/// Draws `n_i ~ Binomial(k_i, P_i(θ))` for every group of `layout` (its counts are ignored).
pub fn generate_counts<R: Rng + ?Sized>(theta: &Theta, layout: &Dataset, rng: &mut R) -> Result<Dataset> {
    generate_counts_family(Family::LogisticExponential, theta, layout, rng)
}

pub fn generate_counts_family<R: Rng + ?Sized>(
    family: Family,
    theta: &Theta,
    layout: &Dataset,
    rng: &mut R,
) -> Result<Dataset> {
    layout.check_theta(theta)?;
    let mut counts = Vec::with_capacity(layout.len());
    for g in layout.groups() {
        let p = family_group_prob(family, theta, g)?.p;
        counts.push(binomial(g.k, p, rng)?);
    }
    layout.with_counts(&counts)
}

/// Mixture generation: each device fails with probability
/// `(1 - ε) P_i(θ) + ε P_i(θ̃)`.
fn generate_mixture<R: Rng + ?Sized>(
    theta: &Theta,
    contaminated: &Theta,
    fraction: f64,
    layout: &Dataset,
    rng: &mut R,
) -> Result<Dataset> {
    let mut counts = Vec::with_capacity(layout.len());
    for g in layout.groups() {
        let p = (1.0 - fraction) * group_prob(theta, g)?.p + fraction * group_prob(contaminated, g)?.p;
        counts.push(binomial(g.k, p, rng)?);
    }
    layout.with_counts(&counts)
}

/// `θ + shift`, coordinate-wise in the order `(a_1..a_J, b_1..b_J)`.
pub fn contaminate(theta: &Theta, shift: &[f64]) -> Result<Theta> {
    if shift.len() != theta.n_params() {
        return Err(Error::Dimension { expected: theta.n_params(), got: shift.len() });
    }
    let v: Vec<f64> = theta.to_flat().iter().zip(shift).map(|(a, b)| a + b).collect();
    Theta::from_flat(&v)
}

/// Fit settings shared by the simulation and bootstrap drivers. The starting value is
/// supplied by the driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSettings {
    pub h: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub scale_by_total: bool,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            h: FitOptions::DEFAULT_H,
            tol: FitOptions::DEFAULT_TOL,
            max_iter: FitOptions::DEFAULT_MAX_ITER,
            scale_by_total: true,
        }
    }
}

impl FitSettings {
    pub fn options(&self, theta0: Theta) -> FitOptions {
        FitOptions { h: self.h, tol: self.tol, max_iter: self.max_iter, theta0, scale_by_total: self.scale_by_total }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    /// Group structure; counts are ignored.
    pub layout: Dataset,
    pub theta_true: Theta,
    /// Shift applied to `theta_true` when generating data; estimation still targets
    /// `theta_true`.
    pub contamination: Option<Vec<f64>>,
    /// Share of devices generated from the shifted parameter. `1.0` generates every group
    /// entirely from it.
    pub contamination_fraction: f64,
    /// Tuning parameters to compare; `0` is maximum likelihood.
    pub betas: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub reliability_times: Vec<f64>,
    pub fit: FitSettings,
    /// Starting value of every fit; defaults to `theta_true`.
    pub start: Option<Theta>,
}

impl McConfig {
    pub fn new(layout: Dataset, theta_true: Theta) -> Self {
        McConfig {
            layout,
            theta_true,
            contamination: None,
            contamination_fraction: 1.0,
            betas: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            replications: 1000,
            seed: 2024,
            reliability_times: vec![2.5],
            fit: FitSettings { max_iter: MC_MAX_ITER, ..FitSettings::default() },
            start: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.check_theta(&self.theta_true)?;
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.betas.is_empty() {
            return Err(Error::Config("at least one tuning parameter is required".into()));
        }
        if let Some(b) = self.betas.iter().find(|b| !(b.is_finite() && (0.0..=1.0).contains(*b))) {
            return Err(Error::Config(format!("tuning parameter {b} outside [0, 1]")));
        }
        if let Some(s) = &self.contamination {
            contaminate(&self.theta_true, s)?;
        }
        if !(0.0..=1.0).contains(&self.contamination_fraction) {
            return Err(Error::Config("contamination_fraction must lie in [0, 1]".into()));
        }
        if self.reliability_times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Config("reliability times must be positive".into()));
        }
        if let Some(s) = &self.start {
            self.layout.check_theta(s)?;
        }
        self.fit.options(self.theta_true.clone()).validate()
    }
}

/// Bias and mean squared error of a reliability estimate for one group and time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityError {
    pub group: usize,
    pub t: f64,
    pub truth: f64,
    pub bias: f64,
    /// Mean squared error for Monte-Carlo studies, root mean squared error for bootstraps.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub beta: f64,
    pub used: usize,
    pub failed: usize,
    pub bias: Vec<f64>,
    pub mse: Vec<f64>,
    pub reliability: Vec<ReliabilityError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub replications: usize,
    pub rows: Vec<McRow>,
    pub warnings: Vec<String>,
}

impl McReport {
    pub fn row(&self, beta: f64) -> Option<&McRow> {
        self.rows.iter().find(|r| r.beta == beta)
    }
}

fn usable(r: &Result<FitResult>) -> Option<&FitResult> {
    match r {
        Ok(f) if f.status == FitStatus::Converged => Some(f),
        _ => None,
    }
}

/// One replication: fitted `θ̂` per β, `None` where the fit failed.
type Replication = Vec<Option<Theta>>;

/// Runs the Monte-Carlo study. Every replication draws one data set and fits all
/// tuning parameters on it; replications run in parallel with per-replication streams,
/// so the report is identical for any thread count.
pub fn run_mc_study(cfg: &McConfig) -> Result<McReport> {
    cfg.validate()?;
    let generator = match &cfg.contamination {
        Some(s) => contaminate(&cfg.theta_true, s)?,
        None => cfg.theta_true.clone(),
    };
    let start = cfg.start.clone().unwrap_or_else(|| cfg.theta_true.clone());
    let opts = cfg.fit.options(start);
    let reps: Vec<Result<Replication>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = labelled_rng(cfg.seed, STREAM_DATA, r as u64);
            let data = if cfg.contamination.is_some() && cfg.contamination_fraction < 1.0 {
                generate_mixture(&cfg.theta_true, &generator, cfg.contamination_fraction, &cfg.layout, &mut rng)?
            } else {
                generate_counts(&generator, &cfg.layout, &mut rng)?
            };
            Ok(cfg.betas.iter().map(|&b| usable(&fit(&data, b, &opts)).map(|f| f.theta_hat.clone())).collect())
        })
        .collect();
    let reps: Vec<Replication> = reps.into_iter().collect::<Result<_>>()?;

    let truth = cfg.theta_true.to_flat();
    let mut rows = Vec::with_capacity(cfg.betas.len());
    let mut warnings = Vec::new();
    for (bi, &beta) in cfg.betas.iter().enumerate() {
        let fits: Vec<&Theta> = reps.iter().filter_map(|r| r[bi].as_ref()).collect();
        let failed = cfg.replications - fits.len();
        if failed as f64 > FAILURE_WARNING_SHARE * cfg.replications as f64 {
            warnings.push(format!("beta = {beta}: {failed} of {} replications did not converge", cfg.replications));
        }
        let (bias, mse) = moments(&fits, &truth);
        let reliability = reliability_moments(&cfg.layout, &cfg.theta_true, &fits, &cfg.reliability_times, false)?;
        rows.push(McRow { beta, used: fits.len(), failed, bias, mse, reliability });
    }
    Ok(McReport { replications: cfg.replications, rows, warnings })
}

/// Mean error and mean squared error of the estimates against `reference`.
fn moments(fits: &[&Theta], reference: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = fits.len() as f64;
    let mut bias = vec![0.0; reference.len()];
    let mut mse = vec![0.0; reference.len()];
    if fits.is_empty() {
        return (vec![f64::NAN; reference.len()], vec![f64::NAN; reference.len()]);
    }
    for t in fits {
        for (j, v) in t.to_flat().iter().enumerate() {
            let e = v - reference[j];
            bias[j] += e / n;
            mse[j] += e * e / n;
        }
    }
    (bias, mse)
}

fn reliability_moments(
    layout: &Dataset,
    reference: &Theta,
    fits: &[&Theta],
    times: &[f64],
    root: bool,
) -> Result<Vec<ReliabilityError>> {
    let mut out = Vec::new();
    let n = fits.len() as f64;
    for (i, g) in layout.groups().iter().enumerate() {
        for &t in times {
            let truth = reliability_estimate(reference, &g.x, t)?;
            let (mut bias, mut sq) = (0.0, 0.0);
            for f in fits {
                let e = reliability_estimate(f, &g.x, t)? - truth;
                bias += e / n;
                sq += e * e / n;
            }
            if fits.is_empty() {
                bias = f64::NAN;
                sq = f64::NAN;
            }
            out.push(ReliabilityError { group: i, t, truth, bias, error: if root { sq.sqrt() } else { sq } });
        }
    }
    Ok(out)
}

/// Settings of the goodness-of-fit bootstrap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GofSettings {
    pub fit: FitSettings,
    /// Box searched for the starting value, applied to every coefficient.
    pub grid_bounds: (f64, f64),
    pub grid_points: usize,
    /// Starting value; skips the grid search when given.
    pub start: Option<Theta>,
}

impl Default for GofSettings {
    fn default() -> Self {
        GofSettings { fit: FitSettings::default(), grid_bounds: (-5.0, 5.0), grid_points: 11, start: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub family: Family,
    /// `max_i |n_i - e_i|` with `e_i = k_i F(τ_i; x_i, θ̂)`.
    pub statistic: f64,
    pub p_value: f64,
    pub bootstrap_samples: usize,
    /// Resamples whose refit failed; excluded from the p-value.
    pub failed_refits: usize,
    pub theta_hat: Theta,
    pub expected: Vec<f64>,
    pub start: Theta,
    pub fit_status: FitStatus,
    pub neg_log_likelihood: f64,
}

fn gof_statistic(family: Family, theta: &Theta, data: &Dataset) -> Result<(f64, Vec<f64>)> {
    let mut expected = Vec::with_capacity(data.len());
    let mut stat: f64 = 0.0;
    for g in data.groups() {
        let e = g.k as f64 * family_group_prob(family, theta, g)?.p;
        stat = stat.max((g.n as f64 - e).abs());
        expected.push(e);
    }
    Ok((stat, expected))
}

/// Share of bootstrap statistics at least as large as `observed`; NaN without any.
pub fn bootstrap_p_value(observed: f64, null_stats: &[f64]) -> f64 {
    if null_stats.is_empty() {
        return f64::NAN;
    }
    null_stats.iter().filter(|s| **s >= observed).count() as f64 / null_stats.len() as f64
}

fn fit_ok(r: Result<FitResult>) -> Option<FitResult> {
    r.ok().filter(|f| f.status == FitStatus::Converged)
}

/// Parametric bootstrap p-value of `D = max_i |n_i - e_i|` under the fitted `family`.
///
/// The maximum likelihood fit starts from `settings.start` or from a grid search; the
/// `b` resamples are drawn from the fitted model and refitted from the same start.
/// The base fit must converge.
pub fn bootstrap_gof(data: &Dataset, family: Family, b: usize, seed: u64, settings: &GofSettings) -> Result<GofReport> {
    if b == 0 {
        return Err(Error::Config("bootstrap needs at least one resample".into()));
    }
    let start = match &settings.start {
        Some(t) => t.clone(),
        None => {
            let bounds = vec![settings.grid_bounds; 2 * data.covariate_dim()];
            grid_search_init(data, family, 0.0, &bounds, settings.grid_points)?
        }
    };
    let opts = settings.fit.options(start.clone());
    let base = fit_family(family, data, 0.0, &opts)?;
    if base.status != FitStatus::Converged {
        return Err(Error::NonConvergence(format!(
            "{family} fit stopped with status {:?} after {} sweeps",
            base.status, base.iterations
        )));
    }
    let (statistic, expected) = gof_statistic(family, &base.theta_hat, data)?;
    let stats: Vec<Option<f64>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = labelled_rng(seed, STREAM_BOOTSTRAP, r as u64);
            let resample = generate_counts_family(family, &base.theta_hat, data, &mut rng).ok()?;
            let refit = fit_ok(fit_family(family, &resample, 0.0, &opts))?;
            gof_statistic(family, &refit.theta_hat, &resample).ok().map(|(s, _)| s)
        })
        .collect();
    let ok: Vec<f64> = stats.into_iter().flatten().collect();
    let failed_refits = b - ok.len();
    let p_value = bootstrap_p_value(statistic, &ok);
    Ok(GofReport {
        family,
        statistic,
        p_value,
        bootstrap_samples: b,
        failed_refits,
        neg_log_likelihood: base.final_objective(),
        theta_hat: base.theta_hat,
        expected,
        start,
        fit_status: base.status,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub beta: f64,
    pub theta_hat: Theta,
    pub bias: Vec<f64>,
    pub rmse: Vec<f64>,
    pub reliability: Vec<ReliabilityError>,
    pub bootstrap_samples: usize,
    pub failed_refits: usize,
    pub fit_status: FitStatus,
}

/// Parametric bootstrap bias and RMSE of `θ̂_β` and of the group reliabilities at `times`.
pub fn bootstrap_bias_rmse(
    data: &Dataset,
    beta: f64,
    b: usize,
    seed: u64,
    times: &[f64],
    opts: &FitOptions,
) -> Result<BootstrapSummary> {
    bootstrap_bias_rmse_with(data, beta, b, times, opts, |fitted, index| {
        let mut rng = labelled_rng(seed, STREAM_BOOTSTRAP, index as u64);
        generate_counts(fitted, data, &mut rng)
    })
}

/// [`bootstrap_bias_rmse`] with a caller-supplied resampler `(θ̂, index) -> data set`.
pub fn bootstrap_bias_rmse_with<F>(
    data: &Dataset,
    beta: f64,
    b: usize,
    times: &[f64],
    opts: &FitOptions,
    resample: F,
) -> Result<BootstrapSummary>
where
    F: Fn(&Theta, usize) -> Result<Dataset> + Sync,
{
    if b == 0 {
        return Err(Error::Config("bootstrap needs at least one resample".into()));
    }
    if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::Config("reliability times must be positive".into()));
    }
    let base = fit(data, beta, opts)?;
    if base.status != FitStatus::Converged {
        return Err(Error::NonConvergence(format!(
            "base fit stopped with status {:?} after {} sweeps",
            base.status, base.iterations
        )));
    }
    let theta_hat = base.theta_hat.clone();
    let refits: Vec<Option<Theta>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let d = resample(&theta_hat, r).ok()?;
            fit_ok(fit(&d, beta, opts)).map(|f| f.theta_hat)
        })
        .collect();
    let fits: Vec<&Theta> = refits.iter().flatten().collect();
    let (bias, mse) = moments(&fits, &theta_hat.to_flat());
    let reliability = reliability_moments(data, &theta_hat, &fits, times, true)?;
    Ok(BootstrapSummary {
        beta,
        bias,
        rmse: mse.iter().map(|v| v.sqrt()).collect(),
        reliability,
        bootstrap_samples: b,
        failed_refits: b - fits.len(),
        fit_status: base.status,
        theta_hat,
    })
}
