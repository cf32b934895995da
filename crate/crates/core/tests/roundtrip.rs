use std::sync::Arc;

use proptest::prelude::*;

use attractor_lab::attractor::{
    approximate_attractor, AttractorSettings, ConvergenceTrace, ImageSettings, TraceEntry,
};
use attractor_lab::boxset::{BoxCover, GridSpec};
use attractor_lab::flow::{evolve, IntegratorConfig, SystemFamily};

proptest! {
    #[test]
    fn cover_dump_round_trip(
        cells in proptest::collection::vec(1usize..12, 1..4),
        picks in proptest::collection::vec(any::<usize>(), 0..40),
        lo in -5.0f64..5.0,
    ) {
        let d = cells.len();
        let lower: Vec<f64> = (0..d).map(|i| lo + i as f64 * 0.37).collect();
        let upper: Vec<f64> = lower.iter().map(|l| l + 1.0 / 3.0).collect();
        let grid = Arc::new(GridSpec::new(lower, upper, cells).unwrap());
        let total = grid.total_cells();
        let cover = BoxCover::from_linear(grid, picks.into_iter().map(|p| p % total)).unwrap();
        let back = BoxCover::from_dump(&cover.to_dump()).unwrap();
        prop_assert_eq!(back.grid(), cover.grid());
        prop_assert_eq!(back.cells(), cover.cells());
    }

    #[test]
    fn trace_csv_round_trip(rows in proptest::collection::vec((0.0f64..1e3, 0.0f64..10.0, 0usize..1 << 20), 0..20)) {
        let trace = ConvergenceTrace {
            entries: rows
                .into_iter()
                .enumerate()
                .map(|(n, (t, step_dist, cells))| TraceEntry { n: n + 1, t, step_dist, cells })
                .collect(),
        };
        prop_assert_eq!(ConvergenceTrace::from_csv(&trace.to_csv()).unwrap(), trace);
    }
}

#[test]
fn corrupt_dump_is_rejected() {
    assert!(BoxCover::from_dump("").is_err());
    assert!(BoxCover::from_dump("1 0 1 4\n7\n").is_err());
    assert!(BoxCover::from_dump("1 0 1 4\nx\n").is_err());
    assert!(BoxCover::from_dump("2 0 0 1 1 4\n1\n").is_err());
}

/// A long trajectory on the ρ = 28 attractor stays inside the computed cover.
#[test]
fn lorenz_cover_contains_trajectory() {
    let lorenz = SystemFamily::lorenz();
    let rho = lorenz.param(&[28.0]).unwrap();
    let dom = lorenz.default_domain();
    let grid = Arc::new(GridSpec::new(dom.lower.clone(), dom.upper.clone(), vec![32, 32, 32]).unwrap());
    let settings = AttractorSettings {
        t_step: 0.25,
        tol: 3.0 * grid.cell_width(),
        max_iter: 100,
        consecutive: 3,
        image: ImageSettings {
            samples_per_axis: 2,
            integrator: IntegratorConfig::with_dt(0.01),
        },
    };
    let approx = approximate_attractor(&lorenz, &rho, &BoxCover::full(grid.clone()), &settings).unwrap();
    assert!(approx.cover.count() < grid.total_cells() / 4);

    let cfg = IntegratorConfig::with_dt(0.01);
    let mut x = evolve(&lorenz, &rho, &[1.0, 1.0, 20.0], 20.0, &cfg).unwrap();
    let near = approx.cover.fatten(grid.cell_width());
    let mut outside = 0;
    for _ in 0..2000 {
        x = evolve(&lorenz, &rho, &x, 0.05, &cfg).unwrap();
        let inside = grid.containing_cell(&x).is_ok_and(|idx| near.contains_index(&idx));
        if !inside {
            outside += 1;
        }
    }
    assert_eq!(outside, 0);
}
