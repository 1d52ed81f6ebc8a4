use crate::bnb::RunTrace;
use crate::error::{Error, Result};

use super::objectives::Objective;

/// Minimum number of usable `(t, r_t)` pairs for [`fit_rate`].
pub const MIN_FIT_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct RegretSeries {
    pub dim: usize,
    /// `simple[t - 1]`: regret of the incumbent after `t` evaluations.
    pub simple: Vec<f64>,
    /// `cumulative[t - 1]`: summed regret of the raw evaluations `1..=t`.
    pub cumulative: Vec<f64>,
}

impl RegretSeries {
    pub fn len(&self) -> usize {
        self.simple.len()
    }

    pub fn is_empty(&self) -> bool {
        self.simple.is_empty()
    }

    pub fn final_simple(&self) -> Option<f64> {
        self.simple.last().copied()
    }

    /// Cumulative regret after `horizon` steps. A run that stopped early is
    /// treated as re-evaluating its final incumbent for the remaining steps.
    pub fn cumulative_at(&self, horizon: usize) -> f64 {
        if horizon == 0 || self.is_empty() {
            return 0.0;
        }
        if horizon <= self.len() {
            return self.cumulative[horizon - 1];
        }
        let last = self.len() - 1;
        self.cumulative[last] + (horizon - self.len()) as f64 * self.simple[last]
    }

    /// Growth of the cumulative regret over the last quarter of `horizon`.
    pub fn final_quartile_increase(&self, horizon: usize) -> f64 {
        self.cumulative_at(horizon) - self.cumulative_at(horizon - horizon / 4)
    }
}

pub fn regret_series(trace: &RunTrace, objective: &Objective) -> Result<RegretSeries> {
    let (_, max) = objective.known_max().ok_or(Error::MissingKnownMax)?;
    let mut simple = Vec::with_capacity(trace.len());
    let mut cumulative = Vec::with_capacity(trace.len());
    let mut total = 0.0;
    for (e, &inc) in trace.evaluations.iter().zip(&trace.incumbents) {
        total += max - e.value;
        cumulative.push(total);
        simple.push(max - trace.evaluations[inc].value);
    }
    Ok(RegretSeries { dim: trace.dim, simple, cumulative })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub amplitude: f64,
    pub tau: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares fit of `ln r_t = ln A - τ · t / (ln t)^{d/4}` over entries
/// with `t ≥ 3` and `r_t > 0`. A series with no spread in `ln r_t` reports
/// `r_squared = 1`.
pub fn fit_rate(series: &RegretSeries) -> Result<RateFit> {
    let exponent = series.dim as f64 / 4.0;
    let (xs, ys): (Vec<f64>, Vec<f64>) = series
        .simple
        .iter()
        .enumerate()
        .map(|(i, &r)| (i + 1, r))
        .filter(|&(t, r)| t >= 3 && r > 0.0 && r.is_finite())
        .map(|(t, r)| {
            let t = t as f64;
            (-t / t.ln().powf(exponent), r.ln())
        })
        .unzip();
    let n = xs.len();
    if n < MIN_FIT_POINTS {
        return Err(Error::InsufficientData { usable: n, required: MIN_FIT_POINTS });
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let tau = sxy / sxx;
    let intercept = my - tau * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - tau * x).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(RateFit { amplitude: intercept.exp(), tau, r_squared, points: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnb::{Evaluation, Termination};

    fn trace(values: &[f64]) -> RunTrace {
        let mut incumbents = Vec::new();
        let mut best = 0;
        for (i, v) in values.iter().enumerate() {
            if *v > values[best] {
                best = i;
            }
            incumbents.push(best);
        }
        RunTrace {
            dim: 1,
            evaluations: values
                .iter()
                .enumerate()
                .map(|(i, &v)| Evaluation { t: i + 1, point: vec![i as f64 / 10.0], value: v })
                .collect(),
            iterations: Vec::new(),
            incumbents,
            termination: Termination::BudgetExhausted,
            truncated: false,
        }
    }

    fn objective(max: f64) -> Objective {
        // peak `max` at 0.5 on [0, 1]
        super::super::objectives::quadratic_objective(vec![0.5], 1.0, max, vec![0.0], vec![1.0]).unwrap()
    }

    #[test]
    fn hand_trace() {
        let s = regret_series(&trace(&[0.0, 3.0, 1.0, 3.0, 5.0]), &objective(5.0)).unwrap();
        assert_eq!(s.simple, vec![5.0, 2.0, 2.0, 2.0, 0.0]);
        assert_eq!(*s.cumulative.last().unwrap(), 13.0);
        assert_eq!(s.cumulative_at(7), 13.0);
    }

    #[test]
    fn optimal_traces() {
        let s = regret_series(&trace(&[5.0, 5.0, 5.0]), &objective(5.0)).unwrap();
        assert!(s.simple.iter().all(|&r| r == 0.0));
        assert_eq!(s.cumulative_at(3), 0.0);
        let s = regret_series(&trace(&[1.0, 5.0, 2.0, 4.0]), &objective(5.0)).unwrap();
        assert_eq!(&s.simple[1..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn padding_uses_final_incumbent() {
        let s = regret_series(&trace(&[1.0, 4.0]), &objective(5.0)).unwrap();
        assert_eq!(s.cumulative_at(2), 5.0);
        assert_eq!(s.cumulative_at(6), 9.0);
        assert_eq!(s.final_quartile_increase(8), 2.0);
    }

    fn synthetic(a: f64, tau: f64, d: usize, n: usize) -> RegretSeries {
        let simple: Vec<f64> = (1..=n)
            .map(|t| {
                let t = t as f64;
                a * (-tau * t / t.ln().powf(d as f64 / 4.0)).exp()
            })
            .collect();
        RegretSeries { dim: d, cumulative: vec![0.0; n], simple }
    }

    #[test]
    fn recovers_synthetic_rate() {
        let fit = fit_rate(&synthetic(2.0, 0.5, 2, 200)).unwrap();
        assert!((fit.amplitude - 2.0).abs() < 0.02 * 1e-3);
        assert!((fit.tau - 0.5).abs() < 0.005 * 1e-3);
        assert!(fit.r_squared > 0.999_999);
        assert_eq!(fit.points, 198);
    }

    #[test]
    fn constant_series_has_zero_rate() {
        let s = RegretSeries { dim: 1, simple: vec![0.3; 40], cumulative: vec![0.0; 40] };
        let fit = fit_rate(&s).unwrap();
        assert!(fit.tau.abs() < 1e-12);
        assert!((fit.amplitude - 0.3).abs() < 1e-12);
    }

    #[test]
    fn faster_decay_reports_imperfect_fit() {
        let simple: Vec<f64> = (1..=60).map(|t| (-(t as f64).powi(2) / 50.0).exp()).collect();
        let fit = fit_rate(&RegretSeries { dim: 1, cumulative: vec![0.0; 60], simple }).unwrap();
        assert!(fit.r_squared < 1.0);
        assert!(fit.tau > 0.0);
    }

    #[test]
    fn insufficient_data() {
        let mut s = synthetic(1.0, 0.1, 1, 40);
        for r in s.simple.iter_mut().skip(11) {
            *r = 0.0;
        }
        assert!(matches!(fit_rate(&s), Err(Error::InsufficientData { usable: 9, required: 10 })));
    }
}
