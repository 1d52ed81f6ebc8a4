//! Branch and bound over a dyadic lattice with GP confidence bounds.
//!
//! Each iteration halves the resolution `δ`, samples the objective on a
//! `δ`-cover of the relevant region, and then shrinks the region to a ball
//! around every candidate whose upper confidence bound still reaches the best
//! lower confidence bound:
//!
//! ```text
//! β_T   = 2 ln(|𝓛| T² / α)
//! keep  = { x : μ(x) + √β_T σ(x) ≥ max_c μ(c) - √β_T σ(c) }
//! 𝓡    ← B((x₁ + x₂)/2, ‖x₁ - x₂‖)   for the farthest kept pair (x₁, x₂)
//! ```
//!
//! Candidates are the current cover, the evaluated points inside the region,
//! and unevaluated lattice points of the region at the finest level whose
//! enumeration stays under `RunConfig::max_candidates`.
//!
//! The loop stops when every lattice point in the region has been evaluated,
//! when the evaluation budget is spent, or when `max_level` is reached.

use std::collections::{BTreeSet, HashMap};

use crate::error::{check_dim, Error, Result};
use crate::gp::{GpPosterior, Prediction, DEFAULT_RELATIVE_JITTER};
use crate::kernels::KernelSpec;
use crate::lattice::{distance, DyadicGrid, Key, RegionBall};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Failure probability of the confidence envelope, in `(0, 1)`.
    pub alpha: f64,
    pub max_evaluations: usize,
    /// Gram-matrix jitter relative to the kernel output scale.
    pub jitter: f64,
    pub seed: u64,
    pub max_level: u32,
    /// Use half the farthest-pair distance as the new region radius.
    pub half_radius: bool,
    /// Multiplier applied to `β_T`; `1.0` is the unmodified algorithm.
    pub beta_scale: f64,
    /// Cap on unevaluated lattice points enumerated as shrink candidates.
    pub max_candidates: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            max_evaluations: 200,
            jitter: DEFAULT_RELATIVE_JITTER,
            seed: 0,
            max_level: 24,
            half_radius: false,
            beta_scale: 1.0,
            max_candidates: 2048,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.max_evaluations == 0 {
            return Err(Error::InvalidArgument("max_evaluations must be at least 1".into()));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::InvalidArgument(format!("jitter must be nonnegative, got {}", self.jitter)));
        }
        if !(self.beta_scale >= 0.0 && self.beta_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta_scale must be nonnegative, got {}", self.beta_scale)));
        }
        if self.max_level == 0 {
            return Err(Error::InvalidArgument("max_level must be at least 1".into()));
        }
        if self.max_candidates == 0 {
            return Err(Error::InvalidArgument("max_candidates must be at least 1".into()));
        }
        Ok(())
    }
}

/// `β_T = 2 ln(|𝓛| T² / α)`.
pub fn beta(t: usize, lattice_size: f64, alpha: f64) -> f64 {
    let t = t as f64;
    2.0 * (lattice_size * t * t / alpha).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// 1-based evaluation counter.
    pub t: usize,
    pub point: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub level: u32,
    pub delta: f64,
    pub new_points: usize,
    pub t_after: usize,
    pub beta: f64,
    pub sup_lcb: f64,
    pub region_before: RegionBall,
    pub region_after: RegionBall,
    pub candidate_count: usize,
    pub kept_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Every lattice point of the relevant region has been evaluated.
    RegionExhausted,
    /// No candidate survived the shrink; the region collapsed to the incumbent.
    EmptyRelevantSet,
    BudgetExhausted,
    ResolutionExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub dim: usize,
    pub evaluations: Vec<Evaluation>,
    pub iterations: Vec<IterationRecord>,
    /// `incumbents[t - 1]` is the index into `evaluations` of the best value among `1..=t`.
    pub incumbents: Vec<usize>,
    pub termination: Termination,
    /// The budget ran out in the middle of a sampling stage.
    pub truncated: bool,
}

impl RunTrace {
    pub(crate) fn empty(dim: usize) -> Self {
        Self {
            dim,
            evaluations: Vec::new(),
            iterations: Vec::new(),
            incumbents: Vec::new(),
            termination: Termination::BudgetExhausted,
            truncated: false,
        }
    }

    pub(crate) fn record(&mut self, point: Vec<f64>, value: f64) {
        let t = self.evaluations.len() + 1;
        let best = match self.incumbents.last() {
            Some(&b) if self.evaluations[b].value >= value => b,
            _ => t - 1,
        };
        self.evaluations.push(Evaluation { t, point, value });
        self.incumbents.push(best);
    }

    pub fn len(&self) -> usize {
        self.evaluations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.evaluations.is_empty()
    }

    /// Best point and value among evaluations `1..=t`, earliest on ties.
    pub fn incumbent(&self, t: usize) -> Result<(&[f64], f64)> {
        if t == 0 || t > self.len() {
            return Err(Error::OutOfRange { index: t, len: self.len() });
        }
        let e = &self.evaluations[self.incumbents[t - 1]];
        Ok((&e.point, e.value))
    }

    pub fn final_incumbent(&self) -> Option<(&[f64], f64)> {
        self.incumbent(self.len()).ok()
    }
}

/// Everything a shrink step saw, handed to a [`RunObserver`].
#[derive(Debug)]
pub struct ShrinkView<'a> {
    pub iteration: usize,
    pub grid: &'a DyadicGrid,
    pub beta: f64,
    pub candidates: &'a [Vec<f64>],
    pub predictions: &'a [Prediction],
    pub kept: &'a [usize],
    pub region_before: &'a RegionBall,
    pub region_after: &'a RegionBall,
}

/// Hook for instrumenting runs without touching the objective budget.
pub trait RunObserver {
    fn on_shrink(&mut self, view: &ShrinkView<'_>);
}

impl RunObserver for () {
    fn on_shrink(&mut self, _view: &ShrinkView<'_>) {}
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkOutcome {
    /// Indices into the candidate list.
    pub kept: Vec<usize>,
    pub new_region: RegionBall,
    pub sup_lcb: f64,
    pub predictions: Vec<Prediction>,
}

/// Keep every candidate with `ucb ≥ max lcb` and enclose the kept set in a
/// ball centred at the midpoint of its farthest pair.
///
/// The radius is the full pair distance, or half of it with `half_radius`.
/// An empty kept set collapses the region to the posterior incumbent.
pub fn shrink(
    post: &GpPosterior,
    region: &RegionBall,
    beta: f64,
    candidates: &[Vec<f64>],
    half_radius: bool,
) -> Result<ShrinkOutcome> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("shrink needs at least one candidate".into()));
    }
    let predictions = candidates.iter().map(|c| post.predict(c)).collect::<Result<Vec<_>>>()?;
    let sup_lcb = predictions.iter().map(|p| p.lcb(beta)).fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = (0..candidates.len()).filter(|&i| predictions[i].ucb(beta) >= sup_lcb).collect();

    let new_region = if kept.is_empty() {
        let obs = post.observations();
        let center = match obs.best() {
            Some(b) => obs.points()[b].clone(),
            None => region.center.clone(),
        };
        RegionBall { center, radius: 0.0 }
    } else {
        let (mut a, mut b, mut far) = (kept[0], kept[0], 0.0);
        for (n, &i) in kept.iter().enumerate() {
            for &j in &kept[n + 1..] {
                let d = distance(&candidates[i], &candidates[j]);
                if d > far {
                    (a, b, far) = (i, j, d);
                }
            }
        }
        let center = candidates[a].iter().zip(&candidates[b]).map(|(x, y)| 0.5 * (x + y)).collect();
        RegionBall { center, radius: if half_radius { 0.5 * far } else { far } }
    };
    Ok(ShrinkOutcome { kept, new_region, sup_lcb, predictions })
}

/// Posterior, evaluation log and lattice bookkeeping of a run in progress.
#[derive(Debug, Clone)]
pub struct SearchState {
    pub post: GpPosterior,
    pub trace: RunTrace,
    evaluated: HashMap<Key, usize>,
}

impl SearchState {
    pub fn new(spec: KernelSpec, jitter: f64) -> Self {
        let dim = spec.dim();
        Self { post: GpPosterior::prior(spec, jitter), trace: RunTrace::empty(dim), evaluated: HashMap::new() }
    }

    pub fn is_evaluated(&self, key: &Key) -> bool {
        self.evaluated.contains_key(key)
    }

    pub fn evaluations(&self) -> usize {
        self.trace.len()
    }

    pub(crate) fn evaluate<F: FnMut(&[f64]) -> f64>(&mut self, grid: &DyadicGrid, key: Key, objective: &mut F) -> Result<()> {
        let x = grid.point_of_key(&key);
        let fx = objective(&x);
        if !fx.is_finite() {
            return Err(Error::InvalidArgument(format!("objective returned {fx} at {x:?}")));
        }
        self.post.push(x.clone(), fx)?;
        self.evaluated.insert(key, self.trace.len());
        self.trace.record(x, fx);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Densified {
    pub new_points: usize,
    /// The budget ran out before the cover was complete.
    pub truncated: bool,
}

/// Evaluate every not-yet-evaluated cover point of `region` at the grid's
/// current level, in lexicographic index order, up to `budget` total evaluations.
pub fn densify<F: FnMut(&[f64]) -> f64>(
    state: &mut SearchState,
    region: &RegionBall,
    grid: &DyadicGrid,
    objective: &mut F,
    budget: usize,
) -> Result<Densified> {
    let mut new_points = 0;
    for key in grid.cover_keys(region) {
        if state.is_evaluated(&key) {
            continue;
        }
        if state.evaluations() >= budget {
            return Ok(Densified { new_points, truncated: true });
        }
        state.evaluate(grid, key, objective)?;
        new_points += 1;
    }
    Ok(Densified { new_points, truncated: false })
}

/// Finest level in `(level, max_level]` whose lattice points in `region` can be
/// enumerated within `cap`; falls back to `level + 1`.
fn probe_level(grid: &DyadicGrid, region: &RegionBall, cap: usize) -> Option<u32> {
    let level = grid.level();
    if level >= grid.max_level() {
        return None;
    }
    let mut chosen = level + 1;
    for p in level + 2..=grid.max_level() {
        if grid.ball_count_bound(&region.center, region.radius, p) <= cap as f64 {
            chosen = p;
        } else {
            break;
        }
    }
    Some(chosen)
}

fn candidate_keys(state: &SearchState, grid: &DyadicGrid, region: &RegionBall, cap: usize) -> BTreeSet<Key> {
    let mut keys: BTreeSet<Key> = grid.cover_keys(region).collect();
    for e in &state.trace.evaluations {
        if region.contains(grid, &e.point) {
            if let Some(k) = grid.key_of_point(&e.point) {
                keys.insert(k);
            }
        }
    }
    if let Some(p) = probe_level(grid, region, cap) {
        for idx in grid.ball_indices(&region.center, region.radius, p) {
            keys.insert(grid.key_of(&idx, p));
        }
    }
    keys
}

/// Every `max_level` lattice point of the region has been evaluated.
fn region_exhausted(state: &SearchState, grid: &DyadicGrid, region: &RegionBall, cap: usize) -> bool {
    let top = grid.max_level();
    if grid.ball_count_bound(&region.center, region.radius, top) > cap as f64 {
        return false;
    }
    grid.ball_indices(&region.center, region.radius, top)
        .all(|idx| state.is_evaluated(&grid.key_of(&idx, top)))
}

pub fn run<F: FnMut(&[f64]) -> f64>(objective: F, spec: &KernelSpec, grid: &DyadicGrid, config: &RunConfig) -> Result<RunTrace> {
    run_with_observer(objective, spec, grid, config, &mut ())
}

pub fn run_with_observer<F, O>(
    mut objective: F,
    spec: &KernelSpec,
    grid: &DyadicGrid,
    config: &RunConfig,
    observer: &mut O,
) -> Result<RunTrace>
where
    F: FnMut(&[f64]) -> f64,
    O: RunObserver + ?Sized,
{
    config.validate()?;
    check_dim(grid.dim(), spec.dim())?;
    let mut grid = grid.with_max_level(config.max_level)?.at_level(0)?;
    let lattice_size = grid.lattice_size();
    let mut state = SearchState::new(spec.clone(), config.jitter * spec.output_scale());
    let mut region = RegionBall::whole(&grid);

    let termination = loop {
        if state.evaluations() >= config.max_evaluations {
            break Termination::BudgetExhausted;
        }
        grid = match grid.refine() {
            Ok(g) => g,
            Err(_) => break Termination::ResolutionExhausted,
        };

        let densified = densify(&mut state, &region, &grid, &mut objective, config.max_evaluations)?;
        if densified.truncated {
            state.trace.truncated = true;
            break Termination::BudgetExhausted;
        }

        let t = state.evaluations();
        let beta_t = config.beta_scale * beta(t, lattice_size, config.alpha);
        let candidates: Vec<Vec<f64>> = candidate_keys(&state, &grid, &region, config.max_candidates)
            .iter()
            .map(|k| grid.point_of_key(k))
            .collect();
        let outcome = shrink(&state.post, &region, beta_t, &candidates, config.half_radius)?;

        let iteration = state.trace.iterations.len() + 1;
        observer.on_shrink(&ShrinkView {
            iteration,
            grid: &grid,
            beta: beta_t,
            candidates: &candidates,
            predictions: &outcome.predictions,
            kept: &outcome.kept,
            region_before: &region,
            region_after: &outcome.new_region,
        });
        state.trace.iterations.push(IterationRecord {
            iteration,
            level: grid.level(),
            delta: grid.delta(),
            new_points: densified.new_points,
            t_after: t,
            beta: beta_t,
            sup_lcb: outcome.sup_lcb,
            region_before: region.clone(),
            region_after: outcome.new_region.clone(),
            candidate_count: candidates.len(),
            kept_count: outcome.kept.len(),
        });
        region = outcome.new_region;

        if outcome.kept.is_empty() {
            break Termination::EmptyRelevantSet;
        }
        if region_exhausted(&state, &grid, &region, config.max_candidates) {
            break Termination::RegionExhausted;
        }
    };

    let mut trace = state.trace;
    trace.termination = termination;
    Ok(trace)
}
