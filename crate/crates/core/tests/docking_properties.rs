use epm_core::docking::*;
use proptest::prelude::*;

fn defaults() -> (DockingParams, ArcMagnetLayout) {
    (DockingParams::default(), ArcMagnetLayout::symmetric(&ArcGeometry::default()).unwrap())
}

#[test]
fn origin_is_captured_at_every_tilt() {
    let (p, l) = defaults();
    for tilt in [0.0, 10.0, 20.0] {
        let o = simulate_docking_detailed(&DockingScenario::at(0.0, 0.0, tilt), &p, &l).unwrap();
        assert_eq!(o.result, DockingResult::Success, "tilt {tilt}: {o:?}");
    }
}

#[test]
fn failures_persist_further_out_along_each_axis() {
    let (p, l) = defaults();
    let tilt = 20.0;
    for axis in 0..2 {
        let mut failed = false;
        for i in 0..GRID_SIZE {
            let d = i as f64 * 5e-3;
            let (x, y) = if axis == 0 { (d, 0.0) } else { (0.0, d) };
            let r = simulate_docking(&DockingScenario::at(x, y, tilt), &p, &l);
            if failed {
                assert_eq!(r, DockingResult::Fail, "axis {axis} recovers at {d}");
            }
            failed |= r == DockingResult::Fail;
        }
    }
}

#[test]
fn rotor_rests_within_friction_at_every_height() {
    let (p, l) = defaults();
    for (x, y, tilt) in [(10e-3, 5e-3, 0.0), (25e-3, 15e-3, 10.0), (5e-3, 30e-3, 20.0)] {
        let o = simulate_docking_detailed(&DockingScenario::at(x, y, tilt), &p, &l).unwrap();
        assert!(o.max_residual_torque < p.bearing_friction_torque, "{x},{y},{tilt}: {}", o.max_residual_torque);
    }
}

#[test]
fn repeated_runs_are_identical() {
    let (p, l) = defaults();
    let a = sweep_outcomes(10e-3, 20.0, &p, &l).unwrap();
    let b = sweep_outcomes(10e-3, 20.0, &p, &l).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn mirrored_offsets_dock_alike(x in 0.0..30e-3f64, y in 1e-3..30e-3f64, t in 0usize..3) {
        let (p, l) = defaults();
        let tilt = [0.0, 10.0, 20.0][t];
        let a = simulate_docking_detailed(&DockingScenario::at(x, y, tilt), &p, &l).unwrap();
        let b = simulate_docking_detailed(&DockingScenario::at(x, -y, tilt), &p, &l).unwrap();
        prop_assert_eq!(a.result, b.result);
        prop_assert!((a.attraction - b.attraction).abs() <= 1e-6 * a.attraction.abs().max(1e-9));
    }
}
