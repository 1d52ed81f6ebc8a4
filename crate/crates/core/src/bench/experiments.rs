use rayon::prelude::*;

use crate::bnb::{self, RunConfig, RunObserver, ShrinkView, Termination};
use crate::error::{Error, Result};
use crate::gp::{self, GpPosterior, ObservationSet};
use crate::kernels::KernelSpec;
use crate::lattice::DyadicGrid;

use super::objectives::{gp_sample_objective, Objective};

/// Minimum seed count for a coverage estimate.
pub const MIN_ENVELOPE_SEEDS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRow {
    pub level: u32,
    pub delta: f64,
    pub sup_sigma: f64,
    /// `Q δ² / 4` with `Q` from [`KernelSpec::smoothness_constant`].
    pub bound: f64,
    pub cover_points: usize,
    pub probe_points: usize,
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceTable {
    pub rows: Vec<VarianceRow>,
    /// Least-squares slope of `ln sup σ` against `ln δ`.
    pub slope: Option<f64>,
    /// Set when a level could not be factored; rows stop before it.
    pub failure: Option<String>,
}

impl VarianceTable {
    pub fn deepest_level(&self) -> Option<u32> {
        self.rows.last().map(|r| r.level)
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].sup_sigma < w[0].sup_sigma)
    }
}

/// Condition the GP on the full level-`ℓ` lattice for each requested level
/// and record the largest posterior standard deviation over the lattice two
/// levels finer.
pub fn variance_bound_experiment(spec: &KernelSpec, lower: &[f64], upper: &[f64], levels: &[u32]) -> Result<VarianceTable> {
    if levels.is_empty() {
        return Err(Error::InvalidArgument("at least one level is required".into()));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!("levels must be strictly ascending, got {levels:?}")));
    }
    let q = spec.smoothness_constant();
    let mut rows = Vec::new();
    let mut failure = None;
    for &level in levels {
        let grid = DyadicGrid::new(lower.to_vec(), upper.to_vec(), level + 2)?;
        crate::error::check_dim(spec.dim(), grid.dim())?;
        let cover = grid.at_level(level)?.points();
        let obs = ObservationSet::new(cover.clone(), vec![0.0; cover.len()])?;
        let post = match GpPosterior::fit(spec.clone(), obs, gp::default_jitter(spec)) {
            Ok(p) => p,
            Err(e @ Error::IllConditioned { .. }) => {
                failure = Some(format!("level {level}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let probes = grid.at_level(level + 2)?.points();
        let sup_sigma = probes
            .par_iter()
            .map(|p| post.predict(p).map(|pr| pr.std))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let delta = grid.delta_at(level);
        rows.push(VarianceRow {
            level,
            delta,
            sup_sigma,
            bound: q * delta * delta / 4.0,
            cover_points: cover.len(),
            probe_points: probes.len(),
            jitter: post.jitter(),
        });
    }
    let slope = log_slope(&rows);
    Ok(VarianceTable { rows, slope, failure })
}

fn log_slope(rows: &[VarianceRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.sup_sigma > 0.0)
        .map(|r| (r.delta.ln(), r.sup_sigma.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// `1 - α - 3 √(α (1 - α) / n)`: the coverage a correct `1 - α` envelope
/// clears with high probability over `n` independent runs.
pub fn coverage_threshold(alpha: f64, n_seeds: usize) -> f64 {
    1.0 - alpha - 3.0 * (alpha * (1.0 - alpha) / n_seeds as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeRow {
    pub seed: u64,
    pub shrinks: usize,
    /// Candidate checks with `|f - μ| > √β σ`.
    pub violations: usize,
    pub checks: usize,
    /// The table argmax stayed inside the active region at every shrink.
    pub retained: bool,
    pub evaluations: usize,
    pub final_regret: f64,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub alpha: f64,
    pub beta_scale: f64,
    pub rows: Vec<EnvelopeRow>,
}

impl EnvelopeReport {
    /// Fraction of runs without a single envelope violation.
    pub fn coverage(&self) -> f64 {
        self.fraction(|r| r.violations == 0)
    }

    pub fn retention(&self) -> f64 {
        self.fraction(|r| r.retained)
    }

    pub fn threshold(&self) -> f64 {
        coverage_threshold(self.alpha, self.rows.len())
    }

    /// Runs that lost the maximizer although the envelope held throughout.
    pub fn unexplained_losses(&self) -> usize {
        self.rows.iter().filter(|r| !r.retained && r.violations == 0).count()
    }

    fn fraction(&self, pred: impl Fn(&EnvelopeRow) -> bool) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|r| pred(r)).count() as f64 / self.rows.len() as f64
    }
}

struct EnvelopeObserver<'a> {
    objective: &'a Objective,
    argmax: &'a [f64],
    shrinks: usize,
    violations: usize,
    checks: usize,
    retained: bool,
}

impl RunObserver for EnvelopeObserver<'_> {
    fn on_shrink(&mut self, view: &ShrinkView<'_>) {
        let width = view.beta.max(0.0).sqrt();
        for (c, p) in view.candidates.iter().zip(view.predictions) {
            self.checks += 1;
            if (self.objective.eval(c) - p.mean).abs() > width * p.std {
                self.violations += 1;
            }
        }
        self.shrinks += 1;
        self.retained &= view.region_before.contains(view.grid, self.argmax)
            && view.region_after.contains(view.grid, self.argmax);
    }
}

/// For every seed, draw a GP-sample objective on the level-`level` table, run
/// branch and bound on that same lattice, and check the confidence envelope
/// at every shrink candidate. `config.max_level` is replaced by `level`.
pub fn envelope_experiment(
    spec: &KernelSpec,
    grid: &DyadicGrid,
    level: u32,
    config: &RunConfig,
    seeds: &[u64],
) -> Result<EnvelopeReport> {
    if seeds.len() < MIN_ENVELOPE_SEEDS {
        return Err(Error::InvalidArgument(format!(
            "envelope coverage needs at least {MIN_ENVELOPE_SEEDS} seeds, got {}",
            seeds.len()
        )));
    }
    let config = RunConfig { max_level: level, ..config.clone() };
    config.validate()?;
    let rows = seeds
        .par_iter()
        .map(|&seed| envelope_run(spec, grid, level, &config, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnvelopeReport { alpha: config.alpha, beta_scale: config.beta_scale, rows })
}

fn envelope_run(spec: &KernelSpec, grid: &DyadicGrid, level: u32, config: &RunConfig, seed: u64) -> Result<EnvelopeRow> {
    let objective = gp_sample_objective(spec, grid, level, seed)?;
    let (argmax, max) = objective.known_max().ok_or(Error::MissingKnownMax)?;
    let mut observer = EnvelopeObserver { objective: &objective, argmax, shrinks: 0, violations: 0, checks: 0, retained: true };
    let config = RunConfig { seed, ..config.clone() };
    let trace = bnb::run_with_observer(|x| objective.eval(x), spec, grid, &config, &mut observer)?;
    let final_regret = trace.final_incumbent().map_or(f64::INFINITY, |(_, v)| max - v);
    Ok(EnvelopeRow {
        seed,
        shrinks: observer.shrinks,
        violations: observer.violations,
        checks: observer.checks,
        retained: observer.retained,
        evaluations: trace.len(),
        final_regret,
        termination: trace.termination,
    })
}
