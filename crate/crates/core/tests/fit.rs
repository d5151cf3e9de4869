use phc_core::fit::synth::{self, EmitterSim};
use phc_core::fit::*;
use phc_core::modes::Spectrum;
use phc_core::Error;
use proptest::prelude::*;

// ---------------------------------------------------------------- Fano line

#[test]
fn fano_has_an_exact_zero_at_minus_q() {
    // Width 2 about zero makes the reduced detuning equal to x exactly.
    for q in [-3.0, -0.4, 0.7, 2.5, 40.0] {
        assert_eq!(fano_lineshape(-q, 0.0, 2.0, q, 3.0), 0.0, "q = {q}");
    }
}

#[test]
fn large_q_is_a_lorentzian_of_width_gamma() {
    let (c, w, a) = (640.0, 0.5, 2.0);
    let lorentz = |x: f64| a / (1.0 + (2.0 * (x - c) / w).powi(2));
    for k in -40..=40 {
        let x = c + k as f64 * 0.05;
        let f = fano_lineshape(x, c, w, FANO_Q_LORENTZ, a);
        assert!((f - lorentz(x)).abs() <= 1e-6 * lorentz(x));
        // Just below the switch the closed form differs by about 2e/q.
        let q = 0.99 * FANO_Q_LORENTZ;
        let e = 2.0 * (x - c) / w;
        let g = fano_lineshape(x, c, w, q, a);
        assert!((g - lorentz(x)).abs() <= (2.5 * e.abs() / q + 1e-10) * lorentz(x));
    }
    assert!((fano_lineshape(c + w / 2.0, c, w, FANO_Q_LORENTZ, a) - a / 2.0).abs() < 1e-15);
}

#[test]
fn fano_at_the_conjugate_detuning_is_lorentzian() {
    // With e' = (1 - q e)/(q + e) the normalized profile equals 1/(1 + e^2).
    for q in [-2.0, 0.3, 1.0, 3.7] {
        for e in [-3.0, -0.6, 0.0, 0.25, 1.9] {
            if (q + e) == 0.0 {
                continue;
            }
            let ep = (1.0 - q * e) / (q + e);
            let f = fano_lineshape(ep, 0.0, 2.0, q, 1.0);
            let expected = 1.0 / (1.0 + e * e);
            assert!((f - expected).abs() < 1e-12, "q {q} e {e}: {f} vs {expected}");
        }
    }
}

// ---------------------------------------------------------- composite fits

fn truth() -> CompositeParams {
    CompositeParams {
        offset: 300.0,
        slope: 12.0,
        zpl_center_nm: 637.2,
        zpl_sigma_nm: 1.1,
        zpl_amplitude: 1000.0,
        fano_center_nm: 640.4,
        fano_width_nm: 0.9,
        fano_q: 2.5,
        fano_amplitude: 700.0,
    }
}

fn guess() -> CompositeGuess {
    CompositeGuess {
        zpl_center_nm: 637.0,
        zpl_sigma_nm: None,
        fano_center_nm: 640.5,
        fano_width_nm: None,
        fano_q: None,
    }
}

const RANGE: (f64, f64) = (625.0, 655.0);

fn recovered_within(fit: &CompositeFitResult, t: &CompositeParams, tol: f64) -> Vec<&'static str> {
    let got = fit.params.to_vec();
    let want = t.to_vec();
    PARAM_NAMES
        .iter()
        .zip(got.iter().zip(&want))
        .filter(|(_, (g, w))| ((*g - *w) / *w).abs() > tol)
        .map(|(n, _)| *n)
        .collect()
}

#[test]
fn composite_fit_recovers_truth_over_many_seeds() {
    let t = truth();
    let mut ok = 0;
    let mut failures = Vec::new();
    for seed in 0..100 {
        let s = synth::composite_spectrum(&t, RANGE, 600, 0.01, seed).unwrap();
        let fit = fit_composite_spectrum(&s, &guess()).unwrap();
        let bad = recovered_within(&fit, &t, 0.05);
        if fit.converged && bad.is_empty() {
            ok += 1;
        } else {
            failures.push((seed, bad));
        }
    }
    assert!(ok >= 95, "{ok}/100 recovered; failures {failures:?}");
}

#[test]
fn absent_fano_line_fits_to_zero_amplitude() {
    let t = CompositeParams {
        fano_amplitude: 0.0,
        ..truth()
    };
    // A 2-sigma band holds 95% of the time; allow for that over 20 seeds.
    let mut inside = 0;
    for seed in 0..20 {
        let s = synth::composite_spectrum(&t, RANGE, 600, 0.01, seed).unwrap();
        let fit = fit_composite_spectrum(&s, &guess()).unwrap();
        let a = fit.params.fano_amplitude;
        let sa = fit.uncertainties.fano_amplitude;
        assert!(sa.is_finite() && sa > 0.0);
        assert!(fit.warnings.iter().any(|w| w.contains("not significant")), "{:?}", fit.params);
        if a.abs() <= 2.0 * sa {
            inside += 1;
        }
    }
    assert!(inside >= 17, "{inside}/20 within 2 sigma");
}

#[test]
fn composite_fit_is_invariant_under_intensity_scaling() {
    let s = synth::composite_spectrum(&truth(), RANGE, 600, 0.01, 5).unwrap();
    let k = 7.3;
    let scaled = Spectrum {
        intensity: s.intensity.iter().map(|v| v * k).collect(),
        ..s.clone()
    };
    let opts = SolverOptions {
        xtol: 1e-12,
        ftol: 1e-15,
        max_evaluations: 2000,
    };
    let a = fit_composite_with(&s, &guess(), &opts).unwrap();
    let b = fit_composite_with(&scaled, &guess(), &opts).unwrap();
    let pa = a.params.to_vec();
    let pb = b.params.to_vec();
    let linear = [0, 1, 4, 8];
    for i in 0..9 {
        let expected = if linear.contains(&i) { pa[i] * k } else { pa[i] };
        assert!((pb[i] - expected).abs() <= 1e-6 * expected.abs(), "{}: {} vs {}", PARAM_NAMES[i], pb[i], expected);
    }
    assert!((b.residual_norm - k * a.residual_norm).abs() <= 1e-6 * b.residual_norm);
}

#[test]
fn zpl_next_to_overlapping_cavity_line() {
    // Narrow cavity line a few tenths of a nanometre from the ZPL.
    let t = CompositeParams {
        zpl_center_nm: 637.5,
        zpl_sigma_nm: 0.9,
        fano_center_nm: 638.2,
        fano_width_nm: 0.25,
        fano_q: -1.8,
        fano_amplitude: 900.0,
        ..truth()
    };
    let s = synth::composite_spectrum(&t, (630.0, 645.0), 800, 0.01, 3).unwrap();
    let g = CompositeGuess {
        zpl_center_nm: 637.4,
        fano_center_nm: 638.2,
        fano_width_nm: Some(0.3),
        fano_q: Some(-1.0),
        ..guess()
    };
    let fit = fit_composite_spectrum(&s, &g).unwrap();
    assert!(fit.converged, "{:?}", fit.warnings);
    let noise = 0.01 * s.intensity.iter().cloned().fold(0.0, f64::max);
    let rms = fit.residual_norm / (s.wavelength_nm.len() as f64).sqrt();
    assert!(rms < 1.2 * noise, "rms residual {rms} vs noise {noise}");
    assert!(recovered_within(&fit, &t, 0.05).is_empty(), "{:?}", fit.params);
}

#[test]
fn coincident_centers_raise_an_ambiguity_warning() {
    let t = CompositeParams {
        fano_center_nm: 637.2,
        fano_width_nm: 2.0,
        ..truth()
    };
    let s = synth::composite_spectrum(&t, RANGE, 400, 0.01, 1).unwrap();
    let g = CompositeGuess {
        fano_center_nm: 637.2,
        fano_width_nm: Some(2.0),
        ..guess()
    };
    let fit = fit_composite_spectrum(&s, &g).unwrap();
    assert!(fit.warnings.iter().any(|w| w.contains("ambiguous")), "{:?} {:?}", fit.warnings, fit.params);
}

#[test]
fn composite_fit_validates_inputs() {
    let s = synth::composite_spectrum(&truth(), RANGE, 400, 0.01, 1).unwrap();
    let g = CompositeGuess {
        fano_center_nm: 700.0,
        ..guess()
    };
    assert!(matches!(fit_composite_spectrum(&s, &g), Err(Error::InvalidParameter { .. })));
    let short = synth::composite_spectrum(&truth(), RANGE, 8, 0.01, 1).unwrap();
    assert!(matches!(fit_composite_spectrum(&short, &guess()), Err(Error::RecordTooShort { .. })));
}

#[test]
fn starved_solver_reports_non_convergence() {
    let s = synth::composite_spectrum(&truth(), RANGE, 400, 0.01, 2).unwrap();
    let opts = SolverOptions {
        xtol: 1e-300,
        ftol: 1e-300,
        max_evaluations: 12,
    };
    let fit = fit_composite_with(&s, &guess(), &opts).unwrap();
    assert!(!fit.converged);
    assert!(fit.warnings.iter().any(|w| w.contains("not converged")));
    assert!(fit.params.to_vec().iter().all(|v| v.is_finite()));
}

// ------------------------------------------------------------- saturation

#[test]
fn half_saturation_at_p_sat() {
    assert_eq!(saturation_model(770.0, 1000.0, 770.0, 0.0), 500.0);
}

#[test]
fn saturation_power_recovered_at_two_percent_noise() {
    let powers = synth::power_ladder(30.0, 6000.0, 14);
    for seed in 0..20 {
        let pts = synth::saturation_points(1000.0, 770.0, 0.0, &powers, 0.02, seed);
        let fit = fit_saturation(
            &pts,
            &SaturationOptions {
                fix_a_to_zero: true,
                fixed_p_sat_uw: None,
            },
        )
        .unwrap();
        assert!(fit.converged && fit.p_sat_identifiable);
        assert!((fit.p_sat_uw - 770.0).abs() < 77.0, "seed {seed}: {}", fit.p_sat_uw);
    }
}

#[test]
fn two_stage_protocol_propagates_the_reference_knee() {
    let powers = synth::power_ladder(30.0, 6000.0, 14);
    let zpl = synth::saturation_points(1000.0, 770.0, 0.0, &powers, 0.02, 7);
    let fano = synth::saturation_points(600.0, 770.0, 0.05, &powers, 0.02, 8);
    let total = synth::saturation_points(5000.0, 770.0, 1.5, &powers, 0.02, 9);
    let (first, rest) = fit_saturation_two_stage(&zpl, &[fano, total]).unwrap();
    assert_eq!(first.a, 0.0);
    assert!((first.p_sat_uw - 770.0).abs() < 77.0);
    for (r, (y, a)) in rest.iter().zip([(600.0, 0.05), (5000.0, 1.5)]) {
        assert_eq!(r.p_sat_uw, first.p_sat_uw);
        assert!((r.y_inf - y).abs() < 0.1 * y, "{r:?}");
        assert!((r.a - a).abs() < 0.2 * a, "{r:?}");
    }
}

#[test]
fn linear_data_leaves_p_sat_unidentifiable() {
    let powers = synth::power_ladder(30.0, 6000.0, 10);
    let pts = synth::saturation_points(0.0, 770.0, 0.4, &powers, 0.02, 4);
    let fit = fit_saturation(&pts, &SaturationOptions::default()).unwrap();
    assert!(!fit.p_sat_identifiable, "{fit:?}");
    assert!(fit_saturation(&pts[..3], &SaturationOptions::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn pinning_background_never_lowers_the_residual(seed in 0u64..10_000, a in 0.05f64..1.0) {
        let powers = synth::power_ladder(30.0, 6000.0, 12);
        let pts = synth::saturation_points(1000.0, 770.0, a, &powers, 0.02, seed);
        let free = fit_saturation(&pts, &SaturationOptions::default()).unwrap();
        let pinned = fit_saturation(&pts, &SaturationOptions { fix_a_to_zero: true, fixed_p_sat_uw: None }).unwrap();
        prop_assert!(pinned.residual_norm >= free.residual_norm * (1.0 - 1e-9));
    }
}

// ---------------------------------------------------------------------- g2

fn poisson_pair(seed: u64, rate: f64, duration: f64) -> (Vec<u64>, Vec<u64>) {
    let mut r = synth::rng(seed);
    let a = synth::poisson_stream(rate, duration, &mut r);
    let b = synth::poisson_stream(rate, duration, &mut r);
    (a, b)
}

#[test]
fn independent_streams_are_flat_within_three_sigma() {
    // 10^6 events in total.
    let (a, b) = poisson_pair(21, 5e5, 1.0);
    let h = g2_histogram(&a, &b, 1.0, 20.0).unwrap();
    let n = h.normalization();
    for (i, &c) in h.counts.iter().enumerate() {
        let g = c as f64 / n;
        let sigma = 1.0 / n.sqrt();
        assert!((g - 1.0).abs() < 3.0 * sigma, "bin {i} at {} ns: g2 = {g}", h.tau_ns[i]);
    }
}

#[test]
fn duplicated_stream_shows_a_zero_delay_spike() {
    let (a, _) = poisson_pair(2, 2e5, 0.5);
    let h = g2_histogram(&a, &a, 1.0, 10.0).unwrap();
    let g = h.g2_raw();
    let z = h.zero_bin();
    assert!(g[z] > 100.0, "{}", g[z]);
    assert!(g.iter().enumerate().filter(|(i, _)| *i != z).all(|(_, v)| *v < 2.0));
}

#[test]
fn histogram_is_symmetric_for_stationary_streams() {
    let sim = EmitterSim {
        rho: 0.8,
        ..EmitterSim::default()
    };
    let (a, b) = sim.generate(17).unwrap();
    let h = g2_histogram(&a, &b, 2.0, 60.0).unwrap();
    let n = h.counts.len();
    for i in 0..n / 2 {
        let (c1, c2) = (h.counts[i] as f64, h.counts[n - 1 - i] as f64);
        assert!((c1 - c2).abs() < 3.0 * (c1 + c2).max(1.0).sqrt(), "bins {i}: {c1} vs {c2}");
    }
}

#[test]
fn emitter_without_background_is_antibunched() {
    let sim = EmitterSim {
        rho: 1.0,
        ..EmitterSim::default()
    };
    let (a, b) = sim.generate(1).unwrap();
    assert!((a.len() + b.len()) as f64 > 0.95 * sim.events as f64);
    let h = g2_histogram(&a, &b, 1.0, 100.0).unwrap();
    let g = h.g2_raw();
    assert!(g[h.zero_bin()] < 0.1, "g2(0) = {}", g[h.zero_bin()]);
}

#[test]
fn background_correction_identities() {
    let (a, b) = poisson_pair(3, 3e5, 0.5);
    let h = g2_histogram(&a, &b, 1.0, 10.0).unwrap();
    let c = g2_background_correct(&h).unwrap();
    assert_eq!(c.g2_corr, c.g2_raw);
    let mut flat = h.clone().with_rho(0.6).unwrap();
    let n = flat.normalization();
    // Pick a bin count giving g2_raw = 1 exactly.
    flat.rate_a = 1e6;
    flat.rate_b = 1e6;
    flat.duration_s = 1.0;
    flat.bin_width_ns = 1.0;
    let _ = n;
    flat.counts = vec![1000; flat.counts.len()];
    let c = g2_background_correct(&flat).unwrap();
    for v in &c.g2_corr {
        assert!((v - 1.0).abs() < 1e-12);
    }
    let dark = h.with_rho(0.0).unwrap();
    assert!(matches!(g2_background_correct(&dark), Err(Error::DivisionGuard(_))));
    assert!(signal_to_total(0.0, 0.0).is_err());
    assert_eq!(signal_to_total(7.0, 3.0).unwrap(), 0.7);
}

#[test]
fn corrected_dip_of_noisy_single_emitter_is_below_half() {
    let sim = EmitterSim::default();
    let (a, b) = sim.generate(42).unwrap();
    let h = g2_histogram(&a, &b, 1.0, 100.0).unwrap().with_rho(sim.rho).unwrap();
    let c = g2_background_correct(&h).unwrap();
    assert!(c.single_emitter, "dip {} +- {}", c.dip, c.dip_sigma);
    assert!(c.dip_upper95 < 0.5);
    assert!(c.raw_dip > 0.5, "raw dip {}", c.raw_dip);
}

#[test]
fn correction_round_trip_recovers_signal_g2() {
    let sim = EmitterSim::default();
    let (a, b) = sim.generate(9).unwrap();
    let h = g2_histogram(&a, &b, 1.0, 100.0).unwrap().with_rho(sim.rho).unwrap();
    let c = g2_background_correct(&h).unwrap();
    // Fit 1 - b exp(-k |tau|) to the corrected curve, weighted by its errors.
    let resid = |p: &[f64]| -> Vec<f64> {
        c.tau_ns
            .iter()
            .zip(&c.g2_corr)
            .zip(&c.g2_corr_sigma)
            .map(|((t, g), s)| (1.0 - p[0] * (-p[1] * t.abs()).exp() - g) / s)
            .collect()
    };
    let out = least_squares(&resid, &[0.8, 0.1], &[false, false], true, &SolverOptions::default());
    let fitted = |t: f64| 1.0 - out.params[0] * (-out.params[1] * t.abs()).exp();
    for k in -100..=100 {
        let t = k as f64;
        // Bin-averaged truth.
        let truth = (0..10).map(|s| sim.signal_g2(t - 0.45 + 0.1 * s as f64)).sum::<f64>() / 10.0;
        assert!((fitted(t) - truth).abs() < 0.05, "tau {t}: {} vs {truth}", fitted(t));
    }
}

#[test]
fn histogram_rejects_bad_input() {
    assert!(matches!(g2_histogram(&[], &[1, 2], 1.0, 10.0), Err(Error::EmptyInput(_))));
    assert!(g2_histogram(&[5, 3], &[1, 2], 1.0, 10.0).is_err());
    assert!(g2_histogram(&[1], &[1], 0.0, 10.0).is_err());
}

#[test]
fn timestamp_files_round_trip_and_report_lines() {
    let ts = vec![0u64, 17, 4_000_000_000_123];
    let mut buf = Vec::new();
    write_timestamps(&ts, &mut buf).unwrap();
    assert_eq!(read_timestamps(std::str::from_utf8(&buf).unwrap()).unwrap(), ts);
    match read_timestamps("# header\n12\n\n3.5\n") {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
}

#[test]
fn corrected_csv_has_the_documented_header() {
    let (a, b) = poisson_pair(5, 2e5, 0.2);
    let h = g2_histogram(&a, &b, 1.0, 5.0).unwrap().with_rho(0.9).unwrap();
    let c = g2_background_correct(&h).unwrap();
    let mut buf = Vec::new();
    c.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("tau_ns,g2_raw,g2_corr\n"));
    assert_eq!(text.lines().count(), 12);
}
