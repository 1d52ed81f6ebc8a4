//! Dyadic sampling lattice over an axis-aligned box.
//!
//! Level `ℓ` holds the points `lower + k ⊙ (upper - lower) / 2^ℓ` for integer
//! multi-indices `0 ≤ kᵢ ≤ 2^ℓ`. Levels nest: index `k` at level `ℓ` is index
//! `2k` at level `ℓ + 1`, and both produce the same floating-point coordinate.
//! The resolution `δ` at level `ℓ` is the cell diagonal `‖upper - lower‖ / 2^ℓ`,
//! which is also the longest edge of the Freudenthal simplices of a cell.
//!
//! Points are identified by their integer index at `max_level` (a "key"), which
//! is exact and shared by every level.

use crate::error::{check_dim, Error, Result};

/// Relative slack for ball membership, scaled by the box diagonal.
pub const MEMBERSHIP_RTOL: f64 = 1e-12;

/// Deepest level supported; keeps every coordinate an exact dyadic multiple.
pub const LEVEL_LIMIT: u32 = 52;

/// Integer index of a lattice point at `max_level`.
pub type Key = Vec<u64>;

#[derive(Debug, Clone, PartialEq)]
pub struct DyadicGrid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    level: u32,
    max_level: u32,
    /// Origin shift in box-relative units; always zero outside of tests.
    offset: Vec<f64>,
}

impl DyadicGrid {
    /// Level-0 grid (the box corners) over `[lower, upper]`.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, max_level: u32) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidArgument("domain must have at least one dimension".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidArgument("domain needs lower < upper in every coordinate".into()));
        }
        if max_level == 0 || max_level > LEVEL_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "max_level must be in 1..={LEVEL_LIMIT}, got {max_level}"
            )));
        }
        let dim = lower.len();
        Ok(Self { lower, upper, level: 0, max_level, offset: vec![0.0; dim] })
    }

    pub fn unit_cube(dim: usize, max_level: u32) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![1.0; dim], max_level)
    }

    pub fn at_level(&self, level: u32) -> Result<Self> {
        if level > self.max_level {
            return Err(Error::InvalidArgument(format!(
                "level {level} exceeds max_level {}",
                self.max_level
            )));
        }
        Ok(Self { level, ..self.clone() })
    }

    /// Same box with a different maximum level; the current level is clamped.
    pub fn with_max_level(&self, max_level: u32) -> Result<Self> {
        let mut g = Self::new(self.lower.clone(), self.upper.clone(), max_level)?;
        g.level = self.level.min(max_level);
        g.offset = self.offset.clone();
        Ok(g)
    }

    #[cfg(test)]
    pub(crate) fn with_origin_offset(mut self, offset: Vec<f64>) -> Self {
        self.offset = offset;
        self
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn delta(&self) -> f64 {
        self.delta_at(self.level)
    }

    pub fn delta_at(&self, level: u32) -> f64 {
        self.diameter() / (1u64 << level) as f64
    }

    pub fn points_per_axis(level: u32) -> u64 {
        (1u64 << level) + 1
    }

    /// Number of lattice points at `level`, as a float since it can exceed `u64`.
    pub fn size_at(&self, level: u32) -> f64 {
        (Self::points_per_axis(level) as f64).powi(self.dim() as i32)
    }

    /// `|𝓛|`, the point count at `max_level`.
    pub fn lattice_size(&self) -> f64 {
        self.size_at(self.max_level)
    }

    /// Coordinate of index `k` along `axis` at `level`.
    pub fn coordinate(&self, axis: usize, k: u64, level: u32) -> f64 {
        let width = self.upper[axis] - self.lower[axis];
        let frac = k as f64 / (1u64 << level) as f64 + self.offset[axis];
        self.lower[axis] + width * frac
    }

    pub fn point(&self, index: &[u64], level: u32) -> Vec<f64> {
        index.iter().enumerate().map(|(axis, &k)| self.coordinate(axis, k, level)).collect()
    }

    /// Coordinates of a `max_level` key.
    pub fn point_of_key(&self, key: &[u64]) -> Vec<f64> {
        self.point(key, self.max_level)
    }

    /// Lift a level-`level` index to a `max_level` key.
    pub fn key_of(&self, index: &[u64], level: u32) -> Key {
        let shift = self.max_level - level;
        index.iter().map(|k| k << shift).collect()
    }

    /// Key of `x` if it is exactly a lattice point at `max_level`.
    pub fn key_of_point(&self, x: &[f64]) -> Option<Key> {
        if x.len() != self.dim() {
            return None;
        }
        let n = 1u64 << self.max_level;
        let mut key = Vec::with_capacity(x.len());
        for (axis, &xi) in x.iter().enumerate() {
            let width = self.upper[axis] - self.lower[axis];
            let guess = ((xi - self.lower[axis]) / width * n as f64).round();
            if !(0.0..=n as f64).contains(&guess) {
                return None;
            }
            let k = guess as u64;
            if self.coordinate(axis, k, self.max_level) != xi {
                return None;
            }
            key.push(k);
        }
        Some(key)
    }

    pub fn in_box(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// All points at the current level, lexicographic in the index (first axis slowest).
    pub fn points(&self) -> Vec<Vec<f64>> {
        let n = 1u64 << self.level;
        let ranges = vec![(0, n); self.dim()];
        IndexBox::new(ranges).map(|k| self.point(&k, self.level)).collect()
    }

    fn membership_slack(&self, radius: f64) -> f64 {
        MEMBERSHIP_RTOL * (radius + self.diameter())
    }

    /// Per-axis index ranges at `level` of the box around a ball, clipped to the domain.
    fn index_ranges(&self, center: &[f64], radius: f64, level: u32) -> Option<Vec<(u64, u64)>> {
        let n = 1u64 << level;
        let mut ranges = Vec::with_capacity(self.dim());
        for axis in 0..self.dim() {
            let width = self.upper[axis] - self.lower[axis];
            let h = width / n as f64;
            let lo = ((center[axis] - radius - self.lower[axis]) / h).floor() - 1.0;
            let hi = ((center[axis] + radius - self.lower[axis]) / h).ceil() + 1.0;
            if hi < 0.0 || lo > n as f64 {
                return None;
            }
            let lo = lo.max(0.0) as u64;
            let hi = (hi.min(n as f64)) as u64;
            ranges.push((lo, hi));
        }
        Some(ranges)
    }

    /// Level-`level` indices within distance `radius` of `center`, lexicographic.
    pub fn ball_indices(&self, center: &[f64], radius: f64, level: u32) -> impl Iterator<Item = Vec<u64>> + '_ {
        let slack = self.membership_slack(radius);
        let c = center.to_vec();
        let ranges = if center.len() == self.dim() { self.index_ranges(center, radius, level) } else { None };
        ranges.map(IndexBox::new).into_iter().flatten().filter(move |k| {
            let p = self.point(k, level);
            distance(&p, &c) <= radius + slack
        })
    }

    /// Upper bound on the number of level-`level` points inside a ball.
    pub fn ball_count_bound(&self, center: &[f64], radius: f64, level: u32) -> f64 {
        match self.index_ranges(center, radius, level) {
            None => 0.0,
            Some(r) => r.iter().map(|(lo, hi)| (hi - lo + 1) as f64).product(),
        }
    }

    /// Keys of the current-level points within one cell diagonal of `region`.
    ///
    /// The cells spanned by these points cover `region ∩ domain`, so every point
    /// of the region lies in a simplex of sampled points with diameter `≤ δ`.
    pub fn cover_keys<'a>(&'a self, region: &RegionBall) -> impl Iterator<Item = Key> + 'a {
        let level = self.level;
        self.ball_indices(&region.center, region.radius + self.delta(), level)
            .map(move |k| self.key_of(&k, level))
    }

    pub fn cover_points(&self, region: &RegionBall) -> Vec<Vec<f64>> {
        self.cover_keys(region).map(|k| self.point_of_key(&k)).collect()
    }

    pub fn refine(&self) -> Result<Self> {
        if self.level >= self.max_level {
            return Err(Error::ResolutionExhausted { max_level: self.max_level });
        }
        Ok(Self { level: self.level + 1, ..self.clone() })
    }

    /// Check that the index representation honors `2𝓛 ∩ conv(𝓛) ⊆ 𝓛` in
    /// box-relative coordinates and that index `k` at this level is index `2k`
    /// at the next one. Axes with more than `4097` points are checked on an
    /// even stride.
    pub fn check_divisibility(&self) -> bool {
        let n = 1u64 << self.level;
        let stride = (n / 4096).max(1);
        for axis in 0..self.dim() {
            let off = self.offset[axis];
            let mut k = 0;
            loop {
                let u = k as f64 / n as f64 + off;
                let doubled = 2.0 * u;
                if (0.0..=1.0).contains(&doubled) {
                    let scaled = doubled * n as f64;
                    if scaled.fract() != 0.0 {
                        return false;
                    }
                }
                if self.level < LEVEL_LIMIT {
                    let finer = (2 * k) as f64 / (2 * n) as f64 + off;
                    if finer != u {
                        return false;
                    }
                }
                if k == n {
                    break;
                }
                k = (k + stride).min(n);
            }
        }
        true
    }

    /// Whether the `max_level` cell diagonal is below `rho0`, so every
    /// `rho0`-ball inside the domain holds a lattice point.
    pub fn check_fineness(&self, rho0: f64) -> Result<bool> {
        if !(rho0 > 0.0) {
            return Err(Error::InvalidArgument(format!("rho0 must be positive, got {rho0}")));
        }
        Ok(self.delta_at(self.max_level) < rho0)
    }
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Odometer over a product of inclusive index ranges, last axis fastest.
struct IndexBox {
    ranges: Vec<(u64, u64)>,
    next: Option<Vec<u64>>,
}

impl IndexBox {
    fn new(ranges: Vec<(u64, u64)>) -> Self {
        let next = if ranges.iter().all(|(lo, hi)| lo <= hi) {
            Some(ranges.iter().map(|(lo, _)| *lo).collect())
        } else {
            None
        };
        Self { ranges, next }
    }
}

impl Iterator for IndexBox {
    type Item = Vec<u64>;

    fn next(&mut self) -> Option<Vec<u64>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut axis = succ.len();
        loop {
            if axis == 0 {
                break;
            }
            axis -= 1;
            if succ[axis] < self.ranges[axis].1 {
                succ[axis] += 1;
                self.next = Some(succ);
                break;
            }
            succ[axis] = self.ranges[axis].0;
        }
        Some(current)
    }
}

/// The relevant region: a closed ball intersected with the domain box.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl RegionBall {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::InvalidArgument(format!("radius must be nonnegative, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    /// Smallest ball holding the whole domain box.
    pub fn whole(grid: &DyadicGrid) -> Self {
        let center = grid.lower.iter().zip(&grid.upper).map(|(l, u)| 0.5 * (l + u)).collect();
        Self { center, radius: 0.5 * grid.diameter() }
    }

    pub fn contains(&self, grid: &DyadicGrid, x: &[f64]) -> bool {
        grid.in_box(x) && distance(x, &self.center) <= self.radius + grid.membership_slack(self.radius)
    }
}
