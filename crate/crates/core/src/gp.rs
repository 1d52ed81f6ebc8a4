//! Exact (noise-free) Gaussian process posterior with a zero prior mean.
//!
//! The posterior keeps a lower-triangular factor `L` of `K + jitter·I` and the
//! forward-solved values `z = L⁻¹ f`. For a test point with cross-covariance
//! `k` and `v = L⁻¹ k`:
//!
//! ```text
//! μ(x)  = vᵀ z               (= kᵀ (K + jitter·I)⁻¹ f)
//! σ²(x) = κ(x, x) - vᵀ v     (clamped at zero)
//! ```
//!
//! New observations are appended by growing `L` one row at a time, so a run
//! of `T` evaluations costs `O(T²)` per step instead of a full refactorization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::kernels::KernelSpec;

/// Default jitter relative to the kernel output scale.
pub const DEFAULT_RELATIVE_JITTER: f64 = 1e-10;

/// Largest jitter (relative to the output scale) tried before giving up.
pub const MAX_RELATIVE_JITTER: f64 = 1e-6;

/// Points closer than this are considered the same location.
pub const DUPLICATE_TOLERANCE: f64 = 1e-12;

pub fn default_jitter(spec: &KernelSpec) -> f64 {
    DEFAULT_RELATIVE_JITTER * spec.output_scale()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn min_pair_distance(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in 0..i {
            best = best.min(distance(&points[i], &points[j]));
        }
    }
    best
}

/// Lower-triangular factor stored row by row; row `i` holds `i + 1` entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cholesky {
    rows: Vec<Vec<f64>>,
}

impl Cholesky {
    /// Factor a symmetric matrix; `None` if it is not numerically positive definite.
    pub fn factor(a: &[Vec<f64>]) -> Option<Self> {
        let mut chol = Cholesky::default();
        for (i, row) in a.iter().enumerate() {
            if !chol.append(&row[..i], row[i]) {
                return None;
            }
        }
        Some(chol)
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Append one row/column: `col` holds the covariances with the existing
    /// points and `diag` the new diagonal entry.
    pub fn append(&mut self, col: &[f64], diag: f64) -> bool {
        debug_assert_eq!(col.len(), self.dim());
        let mut row = self.forward_solve(col);
        let d2 = diag - row.iter().map(|v| v * v).sum::<f64>();
        if !(d2 > 0.0 && d2.is_finite()) {
            return false;
        }
        row.push(d2.sqrt());
        self.rows.push(row);
        true
    }

    /// Solve `L y = b`.
    pub fn forward_solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y = Vec::with_capacity(b.len());
        for (i, row) in self.rows.iter().enumerate() {
            let s: f64 = row[..i].iter().zip(&y).map(|(l, v)| l * v).sum();
            y.push((b[i] - s) / row[i]);
        }
        y
    }

    /// Solve `Lᵀ x = y`.
    pub fn backward_solve(&self, y: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.rows[i][i];
            let xi = x[i];
            for (j, l) in self.rows[i][..i].iter().enumerate() {
                x[j] -= l * xi;
            }
        }
        x
    }

    /// `L z`.
    pub fn mul_vec(&self, z: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().zip(z).map(|(l, v)| l * v).sum())
            .collect()
    }

    /// Dense `L Lᵀ`.
    pub fn reconstruct(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = self.rows[i][..=j].iter().zip(&self.rows[j]).map(|(x, y)| x * y).sum();
                a[i][j] = s;
                a[j][i] = s;
            }
        }
        a
    }
}

/// Factor `gram + jitter·I`, escalating the jitter tenfold until the
/// factorization succeeds or the jitter passes `MAX_RELATIVE_JITTER · scale`.
fn factor_with_escalation(
    gram: &[Vec<f64>],
    points: &[Vec<f64>],
    jitter: f64,
    scale: f64,
) -> Result<(Cholesky, f64)> {
    let ceiling = MAX_RELATIVE_JITTER * scale;
    let mut j = jitter;
    loop {
        let mut a = gram.to_vec();
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += j;
        }
        if let Some(chol) = Cholesky::factor(&a) {
            return Ok((chol, j));
        }
        let next = (j * 10.0).max(1e-12 * scale);
        if next > ceiling * (1.0 + 1e-9) {
            return Err(Error::IllConditioned { jitter: j, min_pair_distance: min_pair_distance(points) });
        }
        j = next;
    }
}

/// Observed locations `x₁…x_t` with their exact values `f(x₁)…f(x_t)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationSet {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl ObservationSet {
    pub fn new(points: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        let mut obs = ObservationSet::default();
        for (p, v) in points.into_iter().zip(values) {
            obs.push(p, v)?;
        }
        Ok(obs)
    }

    pub fn push(&mut self, x: Vec<f64>, fx: f64) -> Result<()> {
        if let Some(d) = self.nearest_distance(&x) {
            if d <= DUPLICATE_TOLERANCE {
                return Err(Error::DuplicateObservation { distance: d });
            }
        }
        self.points.push(x);
        self.values.push(fx);
        Ok(())
    }

    fn nearest_distance(&self, x: &[f64]) -> Option<f64> {
        self.points.iter().map(|p| distance(p, x)).reduce(f64::min)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the largest value, earliest on ties.
    pub fn best(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, v) in self.values.iter().enumerate() {
            if best.is_none_or(|b| *v > self.values[b]) {
                best = Some(i);
            }
        }
        best
    }
}

/// Posterior mean and standard deviation at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub std: f64,
}

impl Prediction {
    /// `μ + √β σ`
    pub fn ucb(&self, beta: f64) -> f64 {
        self.mean + beta.sqrt() * self.std
    }

    /// `μ - √β σ`
    pub fn lcb(&self, beta: f64) -> f64 {
        self.mean - beta.sqrt() * self.std
    }
}

#[derive(Debug, Clone)]
pub struct GpPosterior {
    spec: KernelSpec,
    obs: ObservationSet,
    jitter: f64,
    chol: Cholesky,
    /// `L⁻¹ f`
    forward: Vec<f64>,
    /// `(K + jitter·I)⁻¹ f`
    weights: Vec<f64>,
}

impl GpPosterior {
    /// Posterior with no observations, i.e. the prior.
    pub fn prior(spec: KernelSpec, jitter: f64) -> Self {
        Self {
            spec,
            obs: ObservationSet::default(),
            jitter,
            chol: Cholesky::default(),
            forward: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn fit(spec: KernelSpec, obs: ObservationSet, jitter: f64) -> Result<Self> {
        if !(jitter >= 0.0 && jitter.is_finite()) {
            return Err(Error::InvalidArgument(format!("jitter must be nonnegative, got {jitter}")));
        }
        for p in obs.points() {
            check_dim(spec.dim(), p.len())?;
        }
        let gram = spec.gram(obs.points())?;
        let (chol, jitter) = factor_with_escalation(&gram, obs.points(), jitter, spec.output_scale())?;
        let forward = chol.forward_solve(obs.values());
        let weights = chol.backward_solve(&forward);
        Ok(Self { spec, obs, jitter, chol, forward, weights })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn observations(&self) -> &ObservationSet {
        &self.obs
    }

    /// Jitter actually used, after any escalation.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `L⁻¹ f`, so that `μ(x) = (L⁻¹ k(x))ᵀ · forward`.
    pub fn forward(&self) -> &[f64] {
        &self.forward
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        check_dim(self.spec.dim(), x.len())?;
        let k: Vec<f64> = self.obs.points().iter().map(|p| self.spec.eval_unchecked(p, x)).collect();
        let v = self.chol.forward_solve(&k);
        let mean = v.iter().zip(&self.forward).map(|(a, b)| a * b).sum();
        let explained: f64 = v.iter().map(|a| a * a).sum();
        let var = self.spec.eval_unchecked(x, x) - explained;
        Ok(Prediction { mean, std: var.max(0.0).sqrt() })
    }

    pub fn ucb(&self, x: &[f64], beta: f64) -> Result<f64> {
        Ok(self.predict(x)?.ucb(beta))
    }

    pub fn lcb(&self, x: &[f64], beta: f64) -> Result<f64> {
        Ok(self.predict(x)?.lcb(beta))
    }

    /// Condition on one more exact observation, in place.
    ///
    /// The factor is grown by one row; if that row is not numerically positive
    /// the whole posterior is refit with jitter escalation.
    pub fn push(&mut self, x: Vec<f64>, fx: f64) -> Result<()> {
        check_dim(self.spec.dim(), x.len())?;
        let col: Vec<f64> = self.obs.points().iter().map(|p| self.spec.eval_unchecked(p, &x)).collect();
        let diag = self.spec.eval_unchecked(&x, &x) + self.jitter;
        self.obs.push(x, fx)?;
        if self.chol.append(&col, diag) {
            let n = self.chol.dim();
            let row = &self.chol.rows()[n - 1];
            let s: f64 = row[..n - 1].iter().zip(&self.forward).map(|(l, z)| l * z).sum();
            self.forward.push((fx - s) / row[n - 1]);
            self.weights = self.chol.backward_solve(&self.forward);
            Ok(())
        } else {
            let refit = GpPosterior::fit(self.spec.clone(), self.obs.clone(), self.jitter)?;
            *self = refit;
            Ok(())
        }
    }

    /// A new posterior conditioned on one more exact observation.
    pub fn extend(&self, x: &[f64], fx: f64) -> Result<GpPosterior> {
        let mut next = self.clone();
        next.push(x.to_vec(), fx)?;
        Ok(next)
    }
}

/// Draw `f ~ N(0, K)` on a fixed list of points as `chol(K + jitter·I) · z`
/// with `z` standard normal from a seeded ChaCha stream.
pub fn sample_prior_on_grid(spec: &KernelSpec, points: &[Vec<f64>], seed: u64) -> Result<Vec<f64>> {
    for p in points {
        check_dim(spec.dim(), p.len())?;
    }
    let gram = spec.gram(points)?;
    let (chol, _) = factor_with_escalation(&gram, points, default_jitter(spec), spec.output_scale())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<f64> = (0..points.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    Ok(chol.mul_vec(&z))
}
