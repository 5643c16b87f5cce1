use epm_core::force::*;
use epm_core::magnetics::*;
use proptest::prelude::*;

fn prototype_with(nd_h: f64, nd_len: f64) -> EpmAssembly {
    let mut a = EpmAssembly::winding_prototype();
    a.ndfeb.material.coercivity = nd_h;
    a.ndfeb.length = nd_len;
    a
}

fn fixture() -> Vec<ForceMeasurement> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/force_gap.csv");
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.deserialize::<(f64, f64)>()
        .map(|r| {
            let (gap_mm, force) = r.unwrap();
            ForceMeasurement { gap: gap_mm * 1e-3, force }
        })
        .collect()
}

// Independent evaluation of the face pull from the calibration parameters.
fn oracle_force(a: &EpmAssembly, gap: f64, c: &ForceCalibration) -> f64 {
    let mu0 = 4.0e-7 * std::f64::consts::PI;
    let mmf = (a.alnico.material.coercivity * a.alnico.length) + (a.ndfeb.material.coercivity * a.ndfeb.length);
    let contact = (mu0 * mmf / (2.0 * c.residual_gap)).min(a.saturation_flux);
    let b = (1.0 - c.leakage_fraction) * contact * (c.residual_gap / (gap + c.residual_gap)).powf(c.decay_exponent);
    b * b * c.effective_area / mu0
}

#[test]
fn shipped_calibration_matches_independent_force_law() {
    let a = EpmAssembly::connector_default();
    let c = ForceCalibration::calibrated();
    for g in [0.0, 0.05e-3, 0.1e-3, 0.5e-3, 1.0e-3, 2.0e-3] {
        let f = predict_force(&a, g, &c).unwrap();
        let o = oracle_force(&a, g, &c);
        assert!((f - o).abs() < 1e-9 * o, "{g}: {f} vs {o}");
    }
}

#[test]
fn fixture_refit_reproduces_shipped_calibration() {
    let fit = calibrate_force_model(&fixture(), &EpmAssembly::connector_default()).unwrap();
    let c = ForceCalibration::calibrated();
    assert!((fit.calibration.leakage_fraction - c.leakage_fraction).abs() < 1e-5);
    assert!((fit.calibration.residual_gap - c.residual_gap).abs() < 1e-5 * c.residual_gap);
    assert!(fit.rmse <= 0.15 * 14.6);
}

#[test]
fn fitted_curve_has_the_measured_shape() {
    let a = EpmAssembly::connector_default();
    let c = ForceCalibration::calibrated();
    let f0 = predict_force(&a, 0.0, &c).unwrap();
    let f1 = predict_force(&a, 0.1e-3, &c).unwrap();
    assert!((0.4..=0.65).contains(&(f1 / f0)), "{}", f1 / f0);
    // Dense monotonicity over [0, 2 mm].
    let mut prev = f64::INFINITY;
    for i in 0..=2000 {
        let f = predict_force(&a, i as f64 * 1e-6, &c).unwrap();
        assert!(f < prev, "not decreasing at {i} um");
        prev = f;
    }
    // Convexity over [0.1, 1.0] mm.
    let h = 0.01e-3;
    for i in 10..=100 {
        let g = i as f64 * h;
        let d2 = predict_force(&a, g + h, &c).unwrap() - 2.0 * predict_force(&a, g, &c).unwrap()
            + predict_force(&a, g - h, &c).unwrap();
        assert!(d2 >= 0.0, "concave at {g}");
    }
}

#[test]
fn stated_pulse_costs_point_three_joules() {
    let p = PulseSpec { voltage: 30.0, current: 10.0, duration: 1e-3, polarity: PulsePolarity::Magnetize };
    assert_eq!(pulse_energy(&p), 0.3);
}

proptest! {
    #[test]
    fn winding_gap_is_the_ndfeb_mmf(ni in 0.0..5000.0f64, h in 1.0..1.0e6f64, l in 1e-4..1e-2f64) {
        let a = prototype_with(h, l);
        let d = effective_mmf(&a, ni, Winding::AlnicoOnly) - effective_mmf(&a, ni, Winding::Both);
        prop_assert!((d - h * l).abs() <= 1e-9 * (h * l).max(1.0));
    }

    #[test]
    fn gap_flux_is_linear_below_saturation(f in 1.0..200.0f64, g in 0.1e-3..2e-3f64, k in 0.1..4.0f64) {
        let gap = AirGapSpec { thickness: g, area: END_CAP_AREA };
        let b = gap_flux_density(f, &gap, 1e6).unwrap();
        let bk = gap_flux_density(k * f, &gap, 1e6).unwrap();
        prop_assert!((bk - k * b).abs() <= 1e-12 * bk.abs());
        let wide = AirGapSpec { thickness: k * g, area: END_CAP_AREA };
        let bw = gap_flux_density(f, &wide, 1e6).unwrap();
        prop_assert!((bw * k - b).abs() <= 1e-12 * b.abs());
    }

    #[test]
    fn gap_flux_never_exceeds_saturation(f in -1e6..1e6f64, g in 1e-7..1e-2f64, sat in 0.1..2.0f64) {
        let gap = AirGapSpec { thickness: g, area: END_CAP_AREA };
        prop_assert!(gap_flux_density(f, &gap, sat).unwrap().abs() <= sat);
    }

    #[test]
    fn pulses_switch_like_a_latch(current in 0.0..20.0f64, on in any::<bool>()) {
        let mut a = EpmAssembly::connector_default();
        if !on {
            a.alnico.polarization = Polarization::Opposed;
        }
        let mag = PulseSpec { voltage: 30.0, current, duration: 1e-3, polarity: PulsePolarity::Magnetize };
        let demag = PulseSpec { polarity: PulsePolarity::Demagnetize, ..mag };
        let once = apply_pulse(&a, &mag);
        prop_assert_eq!(apply_pulse(&once, &mag), once.clone());
        if coil_field(&a, current) > a.alnico.material.coercivity {
            prop_assert_eq!(apply_pulse(&once, &demag).alnico.polarization, Polarization::Opposed);
        } else {
            prop_assert_eq!(once, a);
        }
    }

    #[test]
    fn pulse_energy_scales_with_duration(v in 0.0..50.0f64, i in 0.0..20.0f64, t in 0.0..1.0f64) {
        let p = PulseSpec { voltage: v, current: i, duration: t, polarity: PulsePolarity::Magnetize };
        let p2 = PulseSpec { duration: 2.0 * t, ..p };
        prop_assert!((pulse_energy(&p2) - 2.0 * pulse_energy(&p)).abs() <= 1e-12 * pulse_energy(&p2).max(1.0));
    }

    #[test]
    fn flipping_one_sign_moves_the_gap_field_by_its_term(drive in -2000.0..2000.0f64, g in 0.1e-3..2e-3f64) {
        let a = EpmAssembly::winding_prototype();
        let base = mmf_balance_segments(drive, a.segments(), g).unwrap();
        for i in 0..2 {
            let mut segs = [a.alnico.clone(), a.ndfeb.clone()];
            let before = segs[i].balance_term();
            segs[i].polarization = segs[i].polarization.flipped();
            let flipped = mmf_balance_segments(drive, segs.iter(), g).unwrap();
            let expected = base - (segs[i].balance_term() - before) / (2.0 * g);
            prop_assert!((flipped - expected).abs() <= 1e-9 * expected.abs().max(1.0));
            prop_assert!(((flipped - base).abs() - 2.0 * segs[i].material.coercivity * segs[i].length / (2.0 * g)).abs()
                <= 1e-9 * (flipped - base).abs());
        }
    }

    #[test]
    fn force_scales_with_area(b in 0.0..2.0f64, area in 1e-6..1e-3f64) {
        prop_assert!((holding_force(b, 2.0 * area) - 2.0 * holding_force(b, area)).abs() <= 1e-12 * holding_force(b, 2.0 * area).max(1e-12));
    }

    #[test]
    fn force_fit_round_trips(lambda in 0.1..0.8f64, c_mm in 0.02..0.2f64) {
        let a = EpmAssembly::connector_default();
        let truth = ForceCalibration { leakage_fraction: lambda, residual_gap: c_mm * 1e-3, ..ForceCalibration::default() };
        let data: Vec<_> = (0..=10)
            .map(|i| {
                let gap = i as f64 * 0.1e-3;
                ForceMeasurement { gap, force: predict_force(&a, gap, &truth).unwrap() }
            })
            .collect();
        let fit = calibrate_force_model(&data, &a).unwrap().calibration;
        prop_assert!((fit.leakage_fraction - lambda).abs() <= 1e-4 * lambda);
        prop_assert!((fit.residual_gap - truth.residual_gap).abs() <= 1e-4 * truth.residual_gap);
    }
}
