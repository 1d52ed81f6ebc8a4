use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bnb::{beta, RunConfig, RunTrace, Termination};
use crate::error::{check_dim, Error, Result};
use crate::gp::GpPosterior;
use crate::kernels::KernelSpec;
use crate::lattice::DyadicGrid;

/// Largest lattice the baselines enumerate.
pub const ENUMERATION_LIMIT: usize = 20_000;

/// Finest level of `grid` whose full lattice has at most [`ENUMERATION_LIMIT`] points.
pub fn enumeration_level(grid: &DyadicGrid) -> Result<u32> {
    (0..=grid.max_level())
        .rev()
        .find(|&l| grid.size_at(l) <= ENUMERATION_LIMIT as f64)
        .ok_or(Error::GridTooLarge { points: grid.size_at(0) as usize, limit: ENUMERATION_LIMIT })
}

fn enumerated_points(grid: &DyadicGrid, config: &RunConfig) -> Result<(Vec<Vec<f64>>, f64)> {
    config.validate()?;
    let full = grid.with_max_level(config.max_level)?;
    let level = enumeration_level(&full)?;
    Ok((full.at_level(level)?.points(), full.lattice_size()))
}

fn checked<F: FnMut(&[f64]) -> f64>(objective: &mut F, x: &[f64]) -> Result<f64> {
    let fx = objective(x);
    if fx.is_finite() {
        Ok(fx)
    } else {
        Err(Error::InvalidArgument(format!("objective returned {fx} at {x:?}")))
    }
}

/// Posterior mean and variance at a fixed point set, grown one observation at a time.
struct PredictionCache {
    prior_var: Vec<f64>,
    v: Vec<Vec<f64>>,
    mean: Vec<f64>,
    explained: Vec<f64>,
}

impl PredictionCache {
    fn new(spec: &KernelSpec, points: &[Vec<f64>]) -> Self {
        let n = points.len();
        Self {
            prior_var: points.iter().map(|p| spec.eval_unchecked(p, p)).collect(),
            v: vec![Vec::new(); n],
            mean: vec![0.0; n],
            explained: vec![0.0; n],
        }
    }

    fn ucb(&self, i: usize, sqrt_beta: f64) -> f64 {
        self.mean[i] + sqrt_beta * (self.prior_var[i] - self.explained[i]).max(0.0).sqrt()
    }

    /// Extend by the newest factor row, skipping points flagged in `skip`.
    fn append(&mut self, post: &GpPosterior, points: &[Vec<f64>], skip: &[bool]) {
        let n = post.len();
        let row = &post.cholesky().rows()[n - 1];
        let x_new = &post.observations().points()[n - 1];
        let z_new = post.forward()[n - 1];
        let spec = post.spec();
        self.v
            .par_iter_mut()
            .zip(self.mean.par_iter_mut())
            .zip(self.explained.par_iter_mut())
            .enumerate()
            .filter(|(i, _)| !skip[*i])
            .for_each(|(i, ((v, mean), explained))| {
                let s: f64 = row[..n - 1].iter().zip(v.iter()).map(|(l, a)| l * a).sum();
                let entry = (spec.eval_unchecked(x_new, &points[i]) - s) / row[n - 1];
                v.push(entry);
                *mean += entry * z_new;
                *explained += entry * entry;
            });
    }

    fn rebuild(&mut self, post: &GpPosterior, points: &[Vec<f64>], skip: &[bool]) {
        let spec = post.spec();
        let obs = post.observations().points();
        let forward = post.forward();
        self.v
            .par_iter_mut()
            .zip(self.mean.par_iter_mut())
            .zip(self.explained.par_iter_mut())
            .enumerate()
            .filter(|(i, _)| !skip[*i])
            .for_each(|(i, ((v, mean), explained))| {
                let k: Vec<f64> = obs.iter().map(|o| spec.eval_unchecked(o, &points[i])).collect();
                *v = post.cholesky().forward_solve(&k);
                *mean = v.iter().zip(forward).map(|(a, b)| a * b).sum();
                *explained = v.iter().map(|a| a * a).sum();
            });
    }
}

/// GP-UCB without region shrinking: each step evaluates the unevaluated
/// lattice point with the largest `μ + √β_t σ`, first in lexicographic order
/// on ties. The lattice is the finest level of `config.max_level` that fits
/// [`ENUMERATION_LIMIT`]; `β_t` uses the full `max_level` lattice size.
pub fn plain_ucb_run<F: FnMut(&[f64]) -> f64>(
    mut objective: F,
    spec: &KernelSpec,
    grid: &DyadicGrid,
    config: &RunConfig,
) -> Result<RunTrace> {
    check_dim(grid.dim(), spec.dim())?;
    let (points, lattice_size) = enumerated_points(grid, config)?;
    let n = points.len();
    let mut post = GpPosterior::prior(spec.clone(), config.jitter * spec.output_scale());
    let mut cache = PredictionCache::new(spec, &points);
    let mut evaluated = vec![false; n];
    let mut trace = RunTrace::empty(grid.dim());

    for t in 1..=config.max_evaluations.min(n) {
        let sqrt_beta = (config.beta_scale * beta(t, lattice_size, config.alpha)).max(0.0).sqrt();
        let mut pick = None;
        let mut best = f64::NEG_INFINITY;
        for i in (0..n).filter(|&i| !evaluated[i]) {
            let u = cache.ucb(i, sqrt_beta);
            if pick.is_none() || u > best {
                pick = Some(i);
                best = u;
            }
        }
        let Some(i) = pick else { break };
        let x = points[i].clone();
        let fx = checked(&mut objective, &x)?;
        let jitter = post.jitter();
        post.push(x.clone(), fx)?;
        evaluated[i] = true;
        trace.record(x, fx);
        if post.jitter() == jitter {
            cache.append(&post, &points, &evaluated);
        } else {
            cache.rebuild(&post, &points, &evaluated);
        }
    }
    trace.termination = if trace.len() == n { Termination::RegionExhausted } else { Termination::BudgetExhausted };
    Ok(trace)
}

/// Uniform draws without replacement from the enumerated lattice, seeded by `config.seed`.
pub fn random_run<F: FnMut(&[f64]) -> f64>(mut objective: F, grid: &DyadicGrid, config: &RunConfig) -> Result<RunTrace> {
    let (mut points, _) = enumerated_points(grid, config)?;
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    points.shuffle(&mut rng);
    let mut trace = RunTrace::empty(grid.dim());
    for x in points.into_iter().take(config.max_evaluations) {
        let fx = checked(&mut objective, &x)?;
        trace.record(x, fx);
    }
    trace.termination = if trace.len() == n { Termination::RegionExhausted } else { Termination::BudgetExhausted };
    Ok(trace)
}
