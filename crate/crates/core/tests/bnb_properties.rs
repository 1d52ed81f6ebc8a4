use std::collections::HashSet;

use bnbopt::bench::{gp_sample_objective, quadratic_objective, Objective};
use bnbopt::bnb::{beta, run_with_observer, RunObserver, ShrinkView};
use bnbopt::lattice::MEMBERSHIP_RTOL;
use bnbopt::{DyadicGrid, KernelFamily, KernelSpec, RunConfig, RunTrace};
use proptest::prelude::*;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Default)]
struct KeptInRegion {
    shrinks: usize,
    escaped: usize,
}

impl RunObserver for KeptInRegion {
    fn on_shrink(&mut self, view: &ShrinkView<'_>) {
        self.shrinks += 1;
        for &i in view.kept {
            if !view.region_after.contains(view.grid, &view.candidates[i]) {
                self.escaped += 1;
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Case {
    dim: usize,
    family: KernelFamily,
    lengthscale: f64,
    gp: bool,
    seed: u64,
    center: Vec<f64>,
    config: RunConfig,
}

fn case() -> impl Strategy<Value = Case> {
    (
        1usize..=2,
        prop_oneof![Just(KernelFamily::SquaredExponential), Just(KernelFamily::Matern52)],
        0.15f64..0.6,
        any::<bool>(),
        0u64..1000,
        prop::collection::vec(0.1f64..0.9, 2),
        0.01f64..0.5,
        10usize..120,
        any::<bool>(),
    )
        .prop_map(|(dim, family, lengthscale, gp, seed, center, alpha, budget, half_radius)| {
            let max_level = if dim == 1 { 7 } else { 5 };
            Case {
                dim,
                family,
                lengthscale,
                gp,
                seed,
                center: center[..dim].to_vec(),
                config: RunConfig { alpha, max_evaluations: budget, max_level, half_radius, seed, ..RunConfig::default() },
            }
        })
}

fn setup(c: &Case) -> (KernelSpec, DyadicGrid, Objective) {
    let spec = KernelSpec::isotropic(c.family, 1.0, c.lengthscale, c.dim).unwrap();
    let grid = DyadicGrid::unit_cube(c.dim, c.config.max_level).unwrap();
    let objective = if c.gp {
        gp_sample_objective(&spec, &grid, c.config.max_level, c.seed).unwrap()
    } else {
        quadratic_objective(c.center.clone(), 2.0, 0.5, vec![0.0; c.dim], vec![1.0; c.dim]).unwrap()
    };
    (spec, grid, objective)
}

fn traced(c: &Case) -> (RunTrace, KeptInRegion, DyadicGrid) {
    let (spec, grid, objective) = setup(c);
    let mut obs = KeptInRegion::default();
    let trace = run_with_observer(|x| objective.eval(x), &spec, &grid, &c.config, &mut obs).unwrap();
    (trace, obs, grid)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn run_invariants(c in case()) {
        let (trace, obs, grid) = traced(&c);
        prop_assert!(!trace.is_empty());
        prop_assert!(trace.len() <= c.config.max_evaluations);

        // no point is evaluated twice
        let distinct: HashSet<Vec<u64>> = trace.evaluations.iter().map(|e| e.point.iter().map(|v| v.to_bits()).collect()).collect();
        prop_assert_eq!(distinct.len(), trace.len());

        // resolution doubles each iteration, β follows its closed form
        for (n, it) in trace.iterations.iter().enumerate() {
            prop_assert_eq!(it.iteration, n + 1);
            prop_assert_eq!(it.level as usize, n + 1);
            prop_assert_eq!(it.delta, grid.diameter() / (1u64 << it.level) as f64);
            prop_assert_eq!(it.beta, beta(it.t_after, grid.lattice_size(), c.config.alpha));
        }
        for w in trace.iterations.windows(2) {
            prop_assert_eq!(w[1].delta, 0.5 * w[0].delta);
            prop_assert_eq!(w[1].t_after, w[0].t_after + w[1].new_points);
            prop_assert_eq!(&w[1].region_before, &w[0].region_after);
        }

        // kept candidates stay in the new region (the halved radius gives this up by design)
        prop_assert_eq!(obs.shrinks, trace.iterations.len());
        if !c.config.half_radius {
            prop_assert_eq!(obs.escaped, 0);
        }

        // each sample lies in the δ-dilated region active when it was drawn
        let mut start = 0;
        for it in &trace.iterations {
            let r = &it.region_before;
            let slack = MEMBERSHIP_RTOL * (r.radius + grid.diameter());
            for e in &trace.evaluations[start..it.t_after] {
                prop_assert!(dist(&e.point, &r.center) <= r.radius + it.delta + slack);
            }
            start = it.t_after;
        }

        // incumbent is the earliest running maximum
        for t in 1..=trace.len() {
            let best = (0..t).fold(0, |b, i| if trace.evaluations[i].value > trace.evaluations[b].value { i } else { b });
            prop_assert_eq!(trace.incumbents[t - 1], best);
        }
    }

    #[test]
    fn runs_are_deterministic(c in case()) {
        let (a, _, _) = traced(&c);
        let (b, _, _) = traced(&c);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn beta_identity(t in 1usize..1_000_000, log_l in 0.0f64..30.0, alpha in 1e-9f64..1.0) {
        let l = 10f64.powf(log_l);
        let expanded = 2.0 * l.ln() + 4.0 * (t as f64).ln() - 2.0 * alpha.ln();
        prop_assert!((beta(t, l, alpha) - expanded).abs() <= 1e-12 * expanded.abs().max(1.0));
    }
}
