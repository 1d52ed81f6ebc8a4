use std::fmt;
use std::sync::OnceLock;

use crate::error::{check_dim, Error, Result};
use crate::gp::{self, GpPosterior, ObservationSet};
use crate::kernels::KernelSpec;
use crate::lattice::DyadicGrid;

/// Largest table a GP-sample objective may be drawn on.
pub const MAX_TABLE_POINTS: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub name: String,
    pub params: String,
    pub seed: Option<u64>,
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name, self.params)?;
        if let Some(s) = self.seed {
            write!(f, " seed={s}")?;
        }
        Ok(())
    }
}

#[derive(Debug)]
enum Kind {
    GpSample {
        spec: KernelSpec,
        table: DyadicGrid,
        points: Vec<Vec<f64>>,
        values: Vec<f64>,
        interpolant: OnceLock<std::result::Result<GpPosterior, String>>,
    },
    Quadratic {
        center: Vec<f64>,
        curvature: f64,
        peak: f64,
    },
    Boundary,
}

/// A deterministic test function on a box with a known maximizer.
#[derive(Debug)]
pub struct Objective {
    lower: Vec<f64>,
    upper: Vec<f64>,
    kind: Kind,
    known_max: Option<(Vec<f64>, f64)>,
    descriptor: Descriptor,
}

impl Objective {
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn known_max(&self) -> Option<(&[f64], f64)> {
        self.known_max.as_ref().map(|(p, v)| (p.as_slice(), *v))
    }

    pub fn descriptor(&self) -> &Descriptor {
        &self.descriptor
    }

    /// Table points and values of a GP-sample objective.
    pub fn table(&self) -> Option<(&[Vec<f64>], &[f64])> {
        match &self.kind {
            Kind::GpSample { points, values, .. } => Some((points, values)),
            _ => None,
        }
    }

    pub fn matches_domain(&self, grid: &DyadicGrid) -> bool {
        self.lower == grid.lower() && self.upper == grid.upper()
    }

    pub(crate) fn ensure_domain(&self, grid: &DyadicGrid) -> Result<()> {
        if self.matches_domain(grid) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "objective domain {:?}..{:?} differs from grid domain {:?}..{:?}",
                self.lower,
                self.upper,
                grid.lower(),
                grid.upper()
            )))
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::GpSample { spec, table, points, values, interpolant } => {
                if let Some(key) = table.key_of_point(x) {
                    return values[linear_index(&key, table.max_level())];
                }
                let post = interpolant.get_or_init(|| {
                    let obs = ObservationSet::new(points.clone(), values.clone()).map_err(|e| e.to_string())?;
                    GpPosterior::fit(spec.clone(), obs, gp::default_jitter(spec)).map_err(|e| e.to_string())
                });
                match post {
                    Ok(p) => p.predict(x).map(|p| p.mean).unwrap_or(f64::NAN),
                    Err(_) => f64::NAN,
                }
            }
            Kind::Quadratic { center, curvature, peak } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                peak - curvature * r2
            }
            Kind::Boundary => {
                let u: Vec<f64> = x
                    .iter()
                    .zip(self.lower.iter().zip(&self.upper))
                    .map(|(v, (l, h))| (v - l) / (h - l))
                    .collect();
                u[0] - 0.5 * u[1..].iter().map(|v| (v - 0.5) * (v - 0.5)).sum::<f64>()
            }
        }
    }
}

fn linear_index(index: &[u64], level: u32) -> usize {
    let n = DyadicGrid::points_per_axis(level) as usize;
    index.iter().fold(0, |acc, &k| acc * n + k as usize)
}

/// Draw one exact `N(0, K)` sample on every level-`level` point of `grid` and
/// use it as an objective. Table points are looked up; other points get the
/// posterior mean conditioned on the whole table. The known maximum is the
/// table argmax, earliest index on ties.
pub fn gp_sample_objective(spec: &KernelSpec, grid: &DyadicGrid, level: u32, seed: u64) -> Result<Objective> {
    check_dim(grid.dim(), spec.dim())?;
    if level == 0 || level > grid.max_level() {
        return Err(Error::InvalidArgument(format!(
            "table level {level} must lie in 1..={}",
            grid.max_level()
        )));
    }
    let count = grid.size_at(level);
    if count > MAX_TABLE_POINTS as f64 {
        return Err(Error::GridTooLarge { points: count as usize, limit: MAX_TABLE_POINTS });
    }
    let table = grid.with_max_level(level)?.at_level(level)?;
    let points = table.points();
    let values = gp::sample_prior_on_grid(spec, &points, seed)?;
    let best = (0..values.len()).fold(0, |b, i| if values[i] > values[b] { i } else { b });
    let known_max = Some((points[best].clone(), values[best]));
    let descriptor = Descriptor {
        name: "gp-sample".into(),
        params: format!(
            "kernel={} scale={} lengthscales={:?} level={level}",
            spec.family(),
            spec.output_scale(),
            spec.lengthscales()
        ),
        seed: Some(seed),
    };
    let kind = Kind::GpSample { spec: spec.clone(), table, points, values, interpolant: OnceLock::new() };
    Ok(Objective { lower: grid.lower().to_vec(), upper: grid.upper().to_vec(), kind, known_max, descriptor })
}

/// `f(x) = peak - curvature · ‖x - center‖²` with an interior maximizer.
pub fn quadratic_objective(center: Vec<f64>, curvature: f64, peak: f64, lower: Vec<f64>, upper: Vec<f64>) -> Result<Objective> {
    check_dim(lower.len(), center.len())?;
    check_dim(lower.len(), upper.len())?;
    if !(curvature > 0.0 && curvature.is_finite()) {
        return Err(Error::InvalidArgument(format!("curvature must be positive, got {curvature}")));
    }
    let interior = center.iter().zip(lower.iter().zip(&upper)).all(|(c, (l, u))| l < c && c < u);
    if !interior {
        return Err(Error::InvalidArgument(format!(
            "quadratic centre {center:?} must lie strictly inside the domain"
        )));
    }
    let descriptor = Descriptor {
        name: "quadratic".into(),
        params: format!("center={center:?} curvature={curvature} peak={peak}"),
        seed: None,
    };
    Ok(Objective {
        known_max: Some((center.clone(), peak)),
        kind: Kind::Quadratic { center, curvature, peak },
        lower,
        upper,
        descriptor,
    })
}

/// In box-relative coordinates `u`, `f = u₀ - ½ Σ_{i≥1} (uᵢ - ½)²`: maximal at
/// `u₀ = 1` on the boundary, where `∂f/∂x₀ = 1 / width₀ ≠ 0`.
pub fn boundary_max_objective(lower: Vec<f64>, upper: Vec<f64>) -> Result<Objective> {
    check_dim(lower.len(), upper.len())?;
    if lower.is_empty() || lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
        return Err(Error::InvalidArgument("domain needs lower < upper in every coordinate".into()));
    }
    let mut argmax: Vec<f64> = lower.iter().zip(&upper).map(|(l, u)| 0.5 * (l + u)).collect();
    argmax[0] = upper[0];
    let descriptor = Descriptor { name: "boundary".into(), params: String::new(), seed: None };
    Ok(Objective { lower, upper, kind: Kind::Boundary, known_max: Some((argmax, 1.0)), descriptor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;
    use rand::{Rng, SeedableRng};

    fn se(l: f64, dim: usize) -> KernelSpec {
        KernelSpec::isotropic(KernelFamily::SquaredExponential, 1.0, l, dim).unwrap()
    }

    #[test]
    fn gp_sample_is_deterministic_and_exact_on_table() {
        let grid = DyadicGrid::unit_cube(1, 8).unwrap();
        let a = gp_sample_objective(&se(0.3, 1), &grid, 5, 4).unwrap();
        let b = gp_sample_objective(&se(0.3, 1), &grid, 5, 4).unwrap();
        assert_eq!(a.table().unwrap().1, b.table().unwrap().1);
        let (pts, vals) = a.table().unwrap();
        assert_eq!(pts.len(), 33);
        for (p, v) in pts.iter().zip(vals) {
            assert_eq!(a.eval(p), *v);
        }
    }

    #[test]
    fn gp_sample_known_max_is_table_argmax() {
        let grid = DyadicGrid::unit_cube(2, 8).unwrap();
        let obj = gp_sample_objective(&se(0.3, 2), &grid, 3, 17).unwrap();
        let (pts, vals) = obj.table().unwrap();
        let mut best = 0;
        for i in 0..vals.len() {
            if vals[i] > vals[best] {
                best = i;
            }
        }
        let (p, v) = obj.known_max().unwrap();
        assert_eq!(p, &pts[best][..]);
        assert_eq!(v, vals[best]);
        for q in pts {
            assert!(obj.eval(q) <= v + 1e-12);
        }
    }

    #[test]
    fn gp_sample_interpolates_off_table() {
        let grid = DyadicGrid::unit_cube(1, 8).unwrap();
        let obj = gp_sample_objective(&se(0.3, 1), &grid, 4, 2).unwrap();
        let between = obj.eval(&[1.0 / 32.0]);
        assert!(between.is_finite());
        let (lo, hi) = (obj.eval(&[0.0]), obj.eval(&[1.0 / 16.0]));
        assert!((between - 0.5 * (lo + hi)).abs() < 0.05);
    }

    #[test]
    fn gp_sample_rejects_large_tables() {
        let grid = DyadicGrid::unit_cube(2, 10).unwrap();
        assert!(matches!(
            gp_sample_objective(&se(0.3, 2), &grid, 8, 0),
            Err(Error::GridTooLarge { .. })
        ));
    }

    #[test]
    fn quadratic_values() {
        let obj = quadratic_objective(vec![0.4, 0.6], 2.0, 1.5, vec![0.0; 2], vec![1.0; 2]).unwrap();
        assert_eq!(obj.eval(&[0.4, 0.6]), 1.5);
        assert!((obj.eval(&[0.5, 0.6]) - (1.5 - 0.02)).abs() < 1e-15);
        assert_eq!(obj.known_max().unwrap(), (&[0.4, 0.6][..], 1.5));
        assert!(quadratic_objective(vec![0.0, 0.5], 1.0, 0.0, vec![0.0; 2], vec![1.0; 2]).is_err());
        assert!(quadratic_objective(vec![0.5, 0.5], 0.0, 0.0, vec![0.0; 2], vec![1.0; 2]).is_err());
    }

    #[test]
    fn quadratic_pinning_condition_holds() {
        // f(x_M) - c₁‖x - x_M‖² < f(x) ≤ f(x_M) - c₂‖x - x_M‖², probed with c₁ = c₂ = curvature
        // (the strict side is checked with c₁ slightly above curvature).
        let curvature = 3.0;
        let center = vec![0.3, 0.7, 0.5];
        let obj = quadratic_objective(center.clone(), curvature, 0.25, vec![0.0; 3], vec![1.0; 3]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
            let r2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
            let f = obj.eval(&x);
            assert!(f <= 0.25 - curvature * r2 + 1e-15);
            assert!(f > 0.25 - curvature * (1.0 + 1e-9) * r2 - 1e-15 || r2 == 0.0);
        }
    }

    #[test]
    fn boundary_objective() {
        let obj = boundary_max_objective(vec![0.0], vec![1.0]).unwrap();
        assert_eq!(obj.known_max().unwrap(), (&[1.0][..], 1.0));
        assert_eq!(obj.eval(&[0.25]), 0.25);
        let h = 1e-6;
        let grad = (obj.eval(&[1.0]) - obj.eval(&[1.0 - h])) / h;
        assert!((grad - 1.0).abs() < 1e-9);

        let grid = DyadicGrid::unit_cube(1, 6).unwrap().at_level(6).unwrap();
        let pts = grid.points();
        let best = pts.iter().max_by(|a, b| obj.eval(a).total_cmp(&obj.eval(b))).unwrap();
        assert_eq!(best, &vec![1.0]);

        let obj2 = boundary_max_objective(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap();
        assert_eq!(obj2.known_max().unwrap(), (&[2.0, 0.0][..], 1.0));
        assert_eq!(obj2.eval(&[2.0, 0.0]), 1.0);
    }
}
