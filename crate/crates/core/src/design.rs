//! Cost-optimal inspection times: a precision/failure cost and an elitist real-coded
//! genetic algorithm to minimise it.

use rand::distr::{Distribution, OpenClosed01};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::sandwich_covariance;
use crate::error::{Error, Result};
use crate::regression::{group_prob, Dataset, Theta};
use crate::seeding::labelled_rng;

const STREAM_INIT: u64 = 11;
const STREAM_GENERATION: u64 = 12;

/// Cost weights and planning values for an inspection-time design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignCostConfig {
    /// Weight on the determinant of the asymptotic covariance.
    pub c1: f64,
    /// Cost per expected failure.
    pub c2: f64,
    pub theta: Theta,
    /// Group sizes and stresses; inspection times are replaced by the design.
    pub layout: Dataset,
    pub beta: f64,
}

impl DesignCostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1.is_finite() && self.c2.is_finite() && self.c1 >= 0.0 && self.c2 >= 0.0) {
            return Err(Error::Config(format!("cost weights must be finite and non-negative, got c1 = {}, c2 = {}", self.c1, self.c2)));
        }
        if self.c1 == 0.0 && self.c2 == 0.0 {
            return Err(Error::Config("at least one cost weight must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        self.layout.check_theta(&self.theta)
    }
}

/// Components of a design cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// `+∞` when the design is infeasible.
    pub cost: f64,
    /// `|Σ_β|` of `√K (θ̂_β - θ)`, or `None` when `J_β` is singular.
    pub det_sigma: Option<f64>,
    /// `Σ k_i P_i1`.
    pub expected_failures: f64,
    pub feasible: bool,
    /// Why the design is infeasible.
    pub note: Option<String>,
}

/// Cost `C₁ |Σ_β| + C₂ Σ k_i P_i1` with its components.
///
/// A singular or numerically degenerate `J_β` makes the design infeasible: the cost is
/// `+∞` and the reason is kept in `note`. Invalid inputs are errors.
pub fn design_cost_detail(tau: &[f64], cfg: &DesignCostConfig) -> Result<CostBreakdown> {
    cfg.validate()?;
    let data = cfg.layout.with_taus(tau)?;
    let mut expected_failures = 0.0;
    for g in data.groups() {
        expected_failures += g.k as f64 * group_prob(&cfg.theta, g)?.p;
    }
    let infeasible = |note: String| CostBreakdown {
        cost: f64::INFINITY,
        det_sigma: None,
        expected_failures,
        feasible: false,
        note: Some(note),
    };
    let det = if cfg.c1 == 0.0 {
        None
    } else {
        match sandwich_covariance(&cfg.theta, &data, cfg.beta) {
            Ok(s) => Some(s.determinant()),
            Err(e) if e.is_validation() => return Err(e),
            Err(e) => return Ok(infeasible(e.to_string())),
        }
    };
    let cost = cfg.c1 * det.unwrap_or(0.0) + cfg.c2 * expected_failures;
    if !cost.is_finite() {
        return Ok(infeasible(format!("cost is not finite (|Sigma| = {det:?})")));
    }
    Ok(CostBreakdown { cost, det_sigma: det, expected_failures, feasible: true, note: None })
}

/// Design cost for inspection times `tau`; see [`design_cost_detail`].
pub fn design_cost(tau: &[f64], cfg: &DesignCostConfig) -> Result<f64> {
    design_cost_detail(tau, cfg).map(|c| c.cost)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Keep the best half, then shuffle it.
    RandomRank,
    /// Pairwise duels over distinct pairs; the cheaper individual wins.
    Tournament,
}

impl std::str::FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "randomrank" | "rank" => Ok(Selection::RandomRank),
            "tournament" => Ok(Selection::Tournament),
            _ => Err(Error::Config(format!("unknown selection method '{s}' (expected random-rank or tournament)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaConfig {
    pub n_pop: usize,
    pub n_var: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    /// Sampling range of each variable; initial values and mutations are uniform on it.
    pub bounds: Vec<(f64, f64)>,
    pub selection: Selection,
    pub seed: u64,
    /// Keep the best-ever individual in slot 0 and exempt it from mutation.
    pub protect_elite: bool,
}

impl GaConfig {
    pub const DEFAULT_N_POP: usize = 12;
    pub const DEFAULT_GENERATIONS: usize = 250;
    pub const DEFAULT_MUTATION_RATE: f64 = 0.2;
    pub const DEFAULT_BOUNDS: (f64, f64) = (0.0, 10.0);

    pub fn new(n_var: usize, selection: Selection, seed: u64) -> Self {
        GaConfig {
            n_pop: Self::DEFAULT_N_POP,
            n_var,
            generations: Self::DEFAULT_GENERATIONS,
            mutation_rate: Self::DEFAULT_MUTATION_RATE,
            bounds: vec![Self::DEFAULT_BOUNDS; n_var],
            selection,
            seed,
            protect_elite: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pop < 4 || self.n_pop % 2 != 0 {
            return Err(Error::Config(format!("n_pop must be even and at least 4, got {}", self.n_pop)));
        }
        if self.n_var == 0 || self.generations == 0 {
            return Err(Error::Config("n_var and generations must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::Config(format!("mutation rate must lie in [0, 1], got {}", self.mutation_rate)));
        }
        if self.bounds.len() != self.n_var {
            return Err(Error::Config(format!("{} bounds given for {} variables", self.bounds.len(), self.n_var)));
        }
        if let Some((lo, hi)) = self.bounds.iter().find(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
            return Err(Error::Config(format!("invalid bounds ({lo}, {hi})")));
        }
        Ok(())
    }

    pub fn n_keep(&self) -> usize {
        self.n_pop / 2
    }

    /// `round(mr · n_pop · n_var)`, halves rounded up.
    pub fn mutation_count(&self) -> usize {
        (self.mutation_rate * (self.n_pop * self.n_var) as f64 + 0.5).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaState {
    pub population: Vec<Vec<f64>>,
    pub costs: Vec<f64>,
    /// Best individual seen so far and its cost.
    pub elite: (Vec<f64>, f64),
    pub generation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaResult {
    pub best: Vec<f64>,
    pub best_cost: f64,
    /// Lowest cost in each generation's population.
    pub trace: Vec<f64>,
    pub evaluations: usize,
    pub infeasible_evaluations: usize,
    pub selection: Selection,
    pub seed: u64,
}

fn draw<R: Rng + ?Sized>(bounds: (f64, f64), rng: &mut R) -> f64 {
    // (lo, hi], so a lower bound of zero is never hit
    let u: f64 = OpenClosed01.sample(rng);
    bounds.0 + (bounds.1 - bounds.0) * u
}

/// Indices of the `n_keep` parents drawn from an evaluated population.
pub fn select_parents<R: Rng + ?Sized>(costs: &[f64], n_keep: usize, method: Selection, rng: &mut R) -> Vec<usize> {
    let n = costs.len();
    match method {
        Selection::RandomRank => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&i, &j| costs[i].total_cmp(&costs[j]));
            order.truncate(n_keep);
            order.shuffle(rng);
            order
        }
        Selection::Tournament => {
            let pairs = n * (n - 1) / 2;
            index::sample(rng, pairs, n_keep.min(pairs))
                .into_iter()
                .map(|p| {
                    let (i, j) = decode_pair(p, n);
                    if costs[j] < costs[i] { j } else { i }
                })
                .collect()
        }
    }
}

/// Maps `0..n(n-1)/2` onto the pairs `i < j` in row order.
fn decode_pair(mut p: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    while p >= n - 1 - i {
        p -= n - 1 - i;
        i += 1;
    }
    (i, i + 1 + p)
}

/// `(b·mother + (1-b)·father, (1-b)·mother + b·father)`.
pub fn blend(mother: &[f64], father: &[f64], b: f64) -> (Vec<f64>, Vec<f64>) {
    let one = mother.iter().zip(father).map(|(m, f)| b * m + (1.0 - b) * f).collect();
    let two = mother.iter().zip(father).map(|(m, f)| (1.0 - b) * m + b * f).collect();
    (one, two)
}

/// Next population from the selected parents: parents, then blended offspring of
/// consecutive (mother, father) pairs, then `mn` mutated slots.
///
/// When `cfg.protect_elite` is set, `parents[0]` is treated as the elite and never mutated.
pub fn crossover_mutate<R: Rng + ?Sized>(parents: &[Vec<f64>], cfg: &GaConfig, rng: &mut R) -> Vec<Vec<f64>> {
    let n_keep = parents.len();
    let mut population = parents.to_vec();
    let mut pair = 0;
    while population.len() < cfg.n_pop {
        let mother = &parents[(2 * pair) % n_keep];
        let father = &parents[(2 * pair + 1) % n_keep];
        let b: f64 = rng.random();
        let (one, two) = blend(mother, father, b);
        population.push(one);
        if population.len() < cfg.n_pop {
            population.push(two);
        }
        pair += 1;
    }
    let first = usize::from(cfg.protect_elite);
    let slots = (cfg.n_pop - first) * cfg.n_var;
    for s in index::sample(rng, slots, cfg.mutation_count().min(slots)) {
        let (row, col) = (first + s / cfg.n_var, s % cfg.n_var);
        population[row][col] = draw(cfg.bounds[col], rng);
    }
    population
}

/// Minimises `cost` over the box `cfg.bounds` with the elitist genetic algorithm.
///
/// Non-finite costs mark infeasible individuals. Fails if every individual of a generation
/// is infeasible.
pub fn ga_minimize<F>(cost: F, cfg: &GaConfig) -> Result<GaResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    let mut rng = labelled_rng(cfg.seed, STREAM_INIT, 0);
    let population: Vec<Vec<f64>> =
        (0..cfg.n_pop).map(|_| cfg.bounds.iter().map(|b| draw(*b, &mut rng)).collect()).collect();
    let mut state = GaState { population, costs: vec![], elite: (vec![], f64::INFINITY), generation: 0 };
    let mut trace = Vec::with_capacity(cfg.generations);
    let mut infeasible = 0;

    for generation in 0..cfg.generations {
        state.generation = generation;
        state.costs = state.population.par_iter().map(|p| cost(p)).collect();
        state.costs.iter_mut().filter(|c| !c.is_finite()).for_each(|c| *c = f64::INFINITY);
        let bad = state.costs.iter().filter(|c| c.is_infinite()).count();
        infeasible += bad;
        if bad == cfg.n_pop {
            return Err(Error::Infeasible(format!(
                "every design in generation {generation} is infeasible (e.g. {:?})",
                state.population[0]
            )));
        }
        let (best, &best_cost) =
            state.costs.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty population");
        if best_cost < state.elite.1 {
            state.elite = (state.population[best].clone(), best_cost);
        }
        trace.push(best_cost);
        if generation + 1 == cfg.generations {
            break;
        }

        let mut rng = labelled_rng(cfg.seed, STREAM_GENERATION, generation as u64);
        let mut chosen = select_parents(&state.costs, cfg.n_keep(), cfg.selection, &mut rng);
        let mut parents: Vec<Vec<f64>> = chosen.iter().map(|&i| state.population[i].clone()).collect();
        if cfg.protect_elite {
            match chosen.iter().position(|&i| i == best) {
                Some(pos) => {
                    chosen.swap(0, pos);
                    parents.swap(0, pos);
                }
                None => parents[0] = state.elite.0.clone(),
            }
        }
        state.population = crossover_mutate(&parents, cfg, &mut rng);
    }

    Ok(GaResult {
        best: state.elite.0,
        best_cost: state.elite.1,
        trace,
        evaluations: cfg.generations * cfg.n_pop,
        infeasible_evaluations: infeasible,
        selection: cfg.selection,
        seed: cfg.seed,
    })
}

/// Searches inspection times minimising [`design_cost`].
pub fn ga_optimize(cost_cfg: &DesignCostConfig, ga_cfg: &GaConfig) -> Result<GaResult> {
    cost_cfg.validate()?;
    if ga_cfg.n_var != cost_cfg.layout.len() {
        return Err(Error::Config(format!(
            "n_var = {} but the layout has {} groups",
            ga_cfg.n_var,
            cost_cfg.layout.len()
        )));
    }
    if ga_cfg.bounds.iter().any(|(lo, _)| *lo < 0.0) {
        return Err(Error::Config("inspection-time bounds must be non-negative".into()));
    }
    ga_minimize(|tau| design_cost(tau, cost_cfg).unwrap_or(f64::INFINITY), ga_cfg)
}
