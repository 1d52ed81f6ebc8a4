//! Benchmark objectives, baseline strategies, regret metrics and the
//! scaling-law experiments.

mod baselines;
mod experiments;
mod objectives;
mod regret;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use baselines::{enumeration_level, plain_ucb_run, random_run, ENUMERATION_LIMIT};
pub use experiments::{
    coverage_threshold, envelope_experiment, variance_bound_experiment, EnvelopeReport, EnvelopeRow, VarianceRow,
    VarianceTable, MIN_ENVELOPE_SEEDS,
};
pub use objectives::{
    boundary_max_objective, gp_sample_objective, quadratic_objective, Descriptor, Objective, MAX_TABLE_POINTS,
};
pub use regret::{fit_rate, regret_series, RateFit, RegretSeries, MIN_FIT_POINTS};

use crate::bnb::{self, RunConfig, RunTrace};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::lattice::DyadicGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Bnb,
    PlainUcb,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Bnb, Strategy::PlainUcb, Strategy::Random];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Bnb => "bnb",
            Strategy::PlainUcb => "ucb",
            Strategy::Random => "random",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bnb" => Ok(Strategy::Bnb),
            "ucb" | "plain-ucb" | "plain_ucb" => Ok(Strategy::PlainUcb),
            "random" => Ok(Strategy::Random),
            other => Err(Error::InvalidArgument(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Run one strategy on `objective`, whose domain must match `grid`.
pub fn run_strategy(
    strategy: Strategy,
    objective: &Objective,
    spec: &KernelSpec,
    grid: &DyadicGrid,
    config: &RunConfig,
) -> Result<RunTrace> {
    objective.ensure_domain(grid)?;
    let f = |x: &[f64]| objective.eval(x);
    match strategy {
        Strategy::Bnb => bnb::run(f, spec, grid, config),
        Strategy::PlainUcb => plain_ucb_run(f, spec, grid, config),
        Strategy::Random => random_run(f, grid, config),
    }
}

/// Family of objectives a suite draws from, one instance per seed.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveKind {
    /// GP sample tabulated at `level`.
    GpSample { level: u32 },
    /// Unit-peak bowl whose centre is drawn uniformly from the middle half of the box.
    Quadratic { curvature: f64 },
    Boundary,
}

impl ObjectiveKind {
    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveKind::GpSample { .. } => "gp-sample",
            ObjectiveKind::Quadratic { .. } => "quadratic",
            ObjectiveKind::Boundary => "boundary",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub kind: ObjectiveKind,
    pub spec: KernelSpec,
    pub grid: DyadicGrid,
    pub config: RunConfig,
}

impl Suite {
    pub fn objective(&self, seed: u64) -> Result<Objective> {
        let (lower, upper) = (self.grid.lower().to_vec(), self.grid.upper().to_vec());
        match self.kind {
            ObjectiveKind::GpSample { level } => {
                gp_sample_objective(&self.spec, &self.grid.with_max_level(level.max(self.grid.max_level()))?, level, seed)
            }
            ObjectiveKind::Quadratic { curvature } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let center = lower
                    .iter()
                    .zip(&upper)
                    .map(|(l, u)| l + (u - l) * rng.random_range(0.25..0.75))
                    .collect();
                quadratic_objective(center, curvature, 1.0, lower, upper)
            }
            ObjectiveKind::Boundary => boundary_max_objective(lower, upper),
        }
    }

    /// Run `strategy` on the seed's objective; the seed also drives the strategy's own randomness.
    pub fn run(&self, strategy: Strategy, seed: u64) -> Result<RunOutcome> {
        let objective = self.objective(seed)?;
        let config = RunConfig { seed, ..self.config.clone() };
        let trace = run_strategy(strategy, &objective, &self.spec, &self.grid, &config)?;
        let regret = regret_series(&trace, &objective)?;
        let fit = fit_rate(&regret).ok();
        Ok(RunOutcome { strategy, seed, trace, regret, fit })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub strategy: Strategy,
    pub seed: u64,
    pub trace: RunTrace,
    pub regret: RegretSeries,
    /// `None` when fewer than [`MIN_FIT_POINTS`] entries carry nonzero regret.
    pub fit: Option<RateFit>,
}

/// Every (strategy, seed) pair, ordered by strategy then seed.
pub fn compare(suite: &Suite, strategies: &[Strategy], seeds: &[u64]) -> Result<Vec<RunOutcome>> {
    if strategies.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("compare needs at least one strategy and one seed".into()));
    }
    let jobs: Vec<(Strategy, u64)> = strategies.iter().flat_map(|&s| seeds.iter().map(move |&x| (s, x))).collect();
    jobs.par_iter().map(|&(s, seed)| suite.run(s, seed)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub runs: usize,
    pub median_final_simple_regret: f64,
    /// At `horizon`, padding early stops with the final incumbent.
    pub median_final_cumulative_regret: f64,
    pub median_final_quartile_increase: f64,
    pub fitted_runs: usize,
    pub median_amplitude: Option<f64>,
    pub median_tau: Option<f64>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Per-strategy medians, in the order strategies first appear in `outcomes`.
pub fn summarize(outcomes: &[RunOutcome], horizon: usize) -> Vec<StrategySummary> {
    let mut order: Vec<Strategy> = Vec::new();
    for o in outcomes {
        if !order.contains(&o.strategy) {
            order.push(o.strategy);
        }
    }
    order
        .into_iter()
        .map(|strategy| {
            let runs: Vec<&RunOutcome> = outcomes.iter().filter(|o| o.strategy == strategy).collect();
            let collect = |f: &dyn Fn(&RunOutcome) -> Option<f64>| runs.iter().filter_map(|o| f(o)).collect::<Vec<_>>();
            let fits = collect(&|o| o.fit.map(|f| f.tau));
            StrategySummary {
                strategy,
                runs: runs.len(),
                median_final_simple_regret: median(&collect(&|o| o.regret.final_simple())).unwrap_or(f64::NAN),
                median_final_cumulative_regret: median(&collect(&|o| Some(o.regret.cumulative_at(horizon))))
                    .unwrap_or(f64::NAN),
                median_final_quartile_increase: median(&collect(&|o| Some(o.regret.final_quartile_increase(horizon))))
                    .unwrap_or(f64::NAN),
                fitted_runs: fits.len(),
                median_amplitude: median(&collect(&|o| o.fit.map(|f| f.amplitude))),
                median_tau: median(&fits),
            }
        })
        .collect()
}
