use proptest::prelude::*;

use eikcouple::eikonal::{
    build_conductivity, solve, ConductivityModel, MuscleStimulusSet, SolverMode, SolverOptions,
    StimulusOrigin,
};
use eikcouple::mesh::{build_structured_slab, FiberField, SimplicialMesh};

// h = 0.2 mm keeps the cell Peclet number h c / S below 2 in both directions;
// coarser meshes give non-monotone fields that never settle.
fn slab() -> (SimplicialMesh, Vec<[[f64; 3]; 3]>) {
    let mesh = build_structured_slab(2, &[0.006, 0.003], &[30, 15]).unwrap();
    let sigma =
        build_conductivity(&ConductivityModel::default(), &FiberField::axis_aligned(&mesh)).unwrap();
    (mesh, sigma)
}

fn stimuli(list: &[(usize, f64)]) -> MuscleStimulusSet {
    let mut s = MuscleStimulusSet::new();
    for &(v, t) in list {
        s.push(v, t, StimulusOrigin::Ectopic);
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn novel_mode_pins_active_and_respects_excluded(
        list in prop::collection::vec((0usize..496, -0.01f64..0.03), 1..5)
    ) {
        let (mesh, sigma) = slab();
        let opts = SolverOptions::default();
        let out = solve(&mesh, &sigma, 60.0, &stimuli(&list), &opts).unwrap();
        prop_assert!(!out.active.is_empty());
        for s in &out.active {
            prop_assert_eq!(out.field[s.vertex], s.time);
        }
        for s in &out.inactive {
            prop_assert!(out.field[s.vertex] <= s.time + opts.steady_tol);
        }
    }

    #[test]
    fn single_stimulus_modes_agree(v in 0usize..496, t in -0.01f64..0.01) {
        let (mesh, sigma) = slab();
        let s0 = stimuli(&[(v, t)]);
        let novel = solve(&mesh, &sigma, 60.0, &s0, &SolverOptions::default()).unwrap();
        let classic_opts = SolverOptions { mode: SolverMode::Classic, ..SolverOptions::default() };
        let classic = solve(&mesh, &sigma, 60.0, &s0, &classic_opts).unwrap();
        let diff = novel
            .field
            .iter()
            .zip(classic.field.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        prop_assert!(diff <= 2.0 * classic_opts.steady_tol, "difference {}", diff);
    }
}
