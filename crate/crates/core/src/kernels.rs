//! Stationary covariance kernels.
//!
//! Both families are written in anisotropic form: the squared input distance
//! is `(x - y)ᵀ D (x - y)` with `D = diag(1 / ℓᵢ²)`, and the isotropic profile
//! is applied to it.
//!
//! | Family | Profile of `r² = (x-y)ᵀD(x-y)` |
//! |--------|--------------------------------|
//! | squared exponential | `s · exp(-r²/2)` |
//! | Matérn 5/2 | `s · (1 + √5 r + 5r²/3) · exp(-√5 r)` |

use std::fmt;
use std::str::FromStr;

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    SquaredExponential,
    Matern52,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFamily::SquaredExponential => write!(f, "se"),
            KernelFamily::Matern52 => write!(f, "matern52"),
        }
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "se" | "squared-exponential" | "rbf" => Ok(KernelFamily::SquaredExponential),
            "matern52" | "matern-5/2" | "matern" => Ok(KernelFamily::Matern52),
            other => Err(Error::InvalidArgument(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// Covariance family together with its fixed hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    output_scale: f64,
    lengthscales: Vec<f64>,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, output_scale: f64, lengthscales: Vec<f64>) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(Error::InvalidArgument("kernel needs at least one lengthscale".into()));
        }
        if !(output_scale > 0.0 && output_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "output scale must be positive, got {output_scale}"
            )));
        }
        if let Some(bad) = lengthscales.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "lengthscales must be positive, got {bad}"
            )));
        }
        Ok(Self { family, output_scale, lengthscales })
    }

    /// Same lengthscale along every axis.
    pub fn isotropic(family: KernelFamily, output_scale: f64, lengthscale: f64, dim: usize) -> Result<Self> {
        Self::new(family, output_scale, vec![lengthscale; dim])
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// Prior variance `κ(x, x)`.
    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), y.len())?;
        Ok(self.eval_unchecked(x, y))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let r2: f64 = x
            .iter()
            .zip(y)
            .zip(&self.lengthscales)
            .map(|((a, b), l)| {
                let d = (a - b) / l;
                d * d
            })
            .sum();
        self.profile(r2)
    }

    /// Kernel value as a function of the scaled squared distance.
    fn profile(&self, r2: f64) -> f64 {
        match self.family {
            KernelFamily::SquaredExponential => self.output_scale * (-0.5 * r2).exp(),
            KernelFamily::Matern52 => {
                let a = (5.0 * r2).sqrt();
                self.output_scale * (1.0 + a + a * a / 3.0) * (-a).exp()
            }
        }
    }

    /// Gram matrix `K[i][j] = κ(pᵢ, pⱼ)`, filled symmetrically.
    pub fn gram(&self, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        for p in points {
            check_dim(self.dim(), p.len())?;
        }
        let n = points.len();
        let mut k = vec![vec![0.0; n]; n];
        for i in 0..n {
            k[i][i] = self.output_scale;
            for j in 0..i {
                let v = self.eval_unchecked(&points[i], &points[j]);
                k[i][j] = v;
                k[j][i] = v;
            }
        }
        Ok(k)
    }

    /// Cross-covariance vector `[κ(p₁, x), …, κ(pₙ, x)]`.
    pub fn cross(&self, points: &[Vec<f64>], x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        points
            .iter()
            .map(|p| {
                check_dim(self.dim(), p.len())?;
                Ok(self.eval_unchecked(p, x))
            })
            .collect()
    }

    /// Second-order smoothness constant `Q` of the posterior standard deviation.
    ///
    /// Estimated as the square root of the largest axis-wise fourth derivative of
    /// the kernel profile at zero lag, i.e. the prior standard deviation of the
    /// steepest second directional derivative of a sample path. The derivative is
    /// taken by a five-point central stencil with a step proportional to the
    /// axis lengthscale, so `Q` scales as `√s / ℓ²`.
    pub fn smoothness_constant(&self) -> f64 {
        let dim = self.dim();
        let origin = vec![0.0; dim];
        let mut worst: f64 = 0.0;
        for axis in 0..dim {
            let h = FOURTH_DIFF_STEP * self.lengthscales[axis];
            let at = |t: f64| {
                let mut p = origin.clone();
                p[axis] = t;
                self.eval_unchecked(&p, &origin)
            };
            let d4 = (at(2.0 * h) - 4.0 * at(h) + 6.0 * at(0.0) - 4.0 * at(-h) + at(-2.0 * h))
                / h.powi(4);
            worst = worst.max(d4);
        }
        worst.sqrt()
    }
}

/// Stencil step for the fourth difference, relative to the lengthscale.
const FOURTH_DIFF_STEP: f64 = 2e-3;
