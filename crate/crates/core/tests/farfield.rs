mod common;

use common::*;
use num_complex::Complex64;
use phc_core::farfield::*;
use phc_core::fdtd::{BoundarySpec, FaceKind, PlaneFields};
use phc_core::geometry::{Axis, PermittivityGrid};
use proptest::prelude::*;


fn standard_dipole() -> NearField {
    dipole_plane([1.0, 0.0, 0.0], 0.25 * LAMBDA, 160, LAMBDA / 20.0)
}

#[test]
fn vacuum_dipole_pattern_matches_closed_form() {
    let ff = wide_dipole();
    let k = 2.0 * std::f64::consts::PI / LAMBDA;
    let (disk, cone) = pattern_errors(ff, |t, p| dipole_pattern([1.0, 0.0, 0.0], k, t, p));
    assert!(disk < 0.03, "rms deviation over the k disk {disk}");
    assert!(cone < 0.003, "rms deviation below 70 degrees {cone}");
}

#[test]
fn hemisphere_power_matches_plane_flux() {
    let nf = standard_dipole();
    let ff = near_to_far(&nf, &FarFieldOptions::default()).unwrap();
    let flux = nf.poynting_flux();
    let rel = (ff.total_power - flux).abs() / flux;
    assert!(rel < 0.02, "hemisphere {} vs flux {} ({rel})", ff.total_power, flux);
}

#[test]
fn collection_efficiency_matches_dipole_integral() {
    let ff = wide_dipole();
    // x dipole: integral of (1 - sin^2 t cos^2 p) sin t over the cone.
    let cone = |tc: f64| {
        let c = tc.cos();
        2.0 * std::f64::consts::PI * (1.0 - c) - std::f64::consts::PI * (2.0 / 3.0 - c + c.powi(3) / 3.0)
    };
    let expected = cone(0.95f64.asin()) / cone(std::f64::consts::FRAC_PI_2);
    let got = collection_efficiency(ff, 0.95).unwrap();
    assert!((got - expected).abs() / expected < 0.01, "{got} vs {expected}");
    assert_eq!(collection_efficiency(ff, 1.0).unwrap(), 1.0);
    assert!(collection_efficiency(ff, 1e-9).unwrap() < 1e-12);
}

#[test]
fn normal_plane_wave_goes_to_zenith() {
    let n = 121;
    let one = vec![Complex64::new(1.0, 0.0); n * n];
    let zero = vec![Complex64::new(0.0, 0.0); n * n];
    let nf = NearField {
        nx: n,
        ny: n,
        center: [60, 60],
        spacing_nm: 30.0,
        wavelength_nm: LAMBDA,
        ex: one.clone(),
        ey: zero.clone(),
        hx: zero,
        hy: one,
    };
    let ff = near_to_far(&nf, &FarFieldOptions::default()).unwrap();
    let np = ff.phi_deg.len();
    let (mut best, mut at) = (0.0, 0);
    for (q, v) in ff.power.iter().enumerate() {
        if *v > best {
            best = *v;
            at = q / np;
        }
    }
    assert!(at <= 1, "peak at theta index {at}");
}

#[test]
fn angular_spectrum_is_linear() {
    let a = dipole_plane([1.0, 0.0, 0.0], 150.0, 40, 30.0);
    let b = dipole_plane([0.0, 0.6, 0.8], 150.0, 40, 30.0);
    let sa = AngularSpectrum::new(&a, 2).unwrap();
    let sb = AngularSpectrum::new(&b, 2).unwrap();
    let sum = AngularSpectrum::new(&a.add(&b).unwrap(), 2).unwrap();
    let scale = sa.ex.iter().chain(&sb.ey).map(|c| c.norm()).fold(0.0, f64::max);
    for q in 0..sum.ex.len() {
        assert!((sum.ex[q] - sa.ex[q] - sb.ex[q]).norm() < 1e-12 * scale);
        assert!((sum.ey[q] - sa.ey[q] - sb.ey[q]).norm() < 1e-12 * scale);
    }
    let k = sa.k0 * 0.4;
    let e = sum.at(k, 0.3 * k);
    let ea = sa.at(k, 0.3 * k);
    let eb = sb.at(k, 0.3 * k);
    assert!((e[0] - ea[0] - eb[0]).norm() < 1e-12 * scale);
}

#[test]
fn mirrored_quadrant_unfolds_to_full_plane() {
    // x dipole: x-normal mirror is PEC, y-normal mirror is PMC.
    let full = dipole_plane([1.0, 0.0, 0.0], 150.0, 30, 25.0);
    let pml = 10;
    let n = 30 + pml;
    let k = 2.0 * std::f64::consts::PI / LAMBDA;
    let mut quad = PlaneFields {
        nx: n,
        ny: n,
        cell_nm: 25.0,
        wavelength_nm: LAMBDA,
        ex: vec![],
        ey: vec![],
        hx: vec![],
        hy: vec![],
    };
    for i in 0..=n {
        for j in 0..=n {
            let (e, h) = dipole_fields([1.0, 0.0, 0.0], k, [i as f64 * 25.0, j as f64 * 25.0, 150.0]);
            quad.ex.push(e[0]);
            quad.ey.push(e[1]);
            quad.hx.push(h[0]);
            quad.hy.push(h[1]);
        }
    }
    let b = BoundarySpec::pml(pml)
        .with_face(Axis::X, false, FaceKind::Pec)
        .with_face(Axis::Y, false, FaceKind::Pmc);
    let nf = NearField::from_plane(&quad, &b).unwrap();
    assert_eq!((nf.nx, nf.ny), (full.nx, full.ny));
    assert_eq!(nf.center, full.center);
    for q in 0..nf.ex.len() {
        for (u, v) in [(nf.ex[q], full.ex[q]), (nf.ey[q], full.ey[q]), (nf.hx[q], full.hx[q]), (nf.hy[q], full.hy[q])] {
            assert!((u - v).norm() <= 1e-9 * (1.0 + v.norm()), "node {q}: {u} vs {v}");
        }
    }
}

#[test]
fn detection_ratio_of_constructed_patterns() {
    let o = FarFieldOptions::default();
    let a = FarField::from_fn(LAMBDA, &o, |t, _| if t < 0.3 { 1.0 } else { 0.0 });
    assert_eq!(detection_ratio(&a, &a, 0.8).unwrap(), 1.0);
    // Reference: all power inside NA 0.5; cavity: half inside.
    let inner = 0.25f64.asin();
    let outer = 0.8f64.asin();
    let reference = FarField::from_fn(LAMBDA, &o, |t, _| if t < inner { 1.0 } else { 0.0 });
    let r_in = reference.power_within(30.0);
    let cavity = FarField::from_fn(LAMBDA, &o, |t, _| {
        if t < inner {
            1.0
        } else if t > outer {
            1.0
        } else {
            0.0
        }
    });
    let c_in = cavity.power_within(30.0);
    let out = cavity.total_power - c_in;
    let scaled = FarField::from_fn(LAMBDA, &o, |t, _| {
        if t < inner {
            1.0
        } else if t > outer {
            r_in / out
        } else {
            0.0
        }
    });
    let ratio = detection_ratio(&reference, &scaled, 0.5).unwrap();
    assert!((ratio - 2.0).abs() < 1e-9, "{ratio}");
    let dark = FarField::from_fn(LAMBDA, &o, |t, _| if t > 1.2 { 1.0 } else { 0.0 });
    assert!(matches!(detection_ratio(&reference, &dark, 0.5), Err(phc_core::Error::DivisionGuard(_))));
}

#[test]
fn numerical_aperture_is_validated() {
    let ff = FarField::from_fn(LAMBDA, &FarFieldOptions::default(), |_, _| 1.0);
    for na in [0.0, -0.1, 1.01, f64::NAN] {
        assert!(collection_efficiency(&ff, na).is_err());
    }
}

#[test]
fn analysis_plane_rejects_dielectric_and_absorber() {
    let mut g = PermittivityGrid::vacuum([20, 20, 40], 20.0, [0.0, 0.0, -400.0]);
    for axis in Axis::ALL {
        for i in 0..=20 {
            for j in 0..=20 {
                for k in 18..=22 {
                    let q = g.index(i, j, k);
                    g.eps_mut(axis)[q] = 11.0;
                }
            }
        }
    }
    let b = BoundarySpec::pml(8);
    assert!(analysis_plane(&g, &b, 0.0).is_err());
    assert!(analysis_plane(&g, &b, 380.0).is_err());
    assert_eq!(analysis_plane(&g, &b, 200.0).unwrap(), 30);
}

#[test]
fn kspace_export_round_trips() {
    let nf = dipole_plane([1.0, 0.0, 0.0], 150.0, 40, 30.0);
    let ff = near_to_far(&nf, &FarFieldOptions::default()).unwrap();
    let g = ff.kspace_grid().unwrap();
    let mut buf = Vec::new();
    g.write(&mut buf).unwrap();
    let back = phc_core::gridio::GridArray::read(&mut buf.as_slice()).unwrap();
    assert_eq!(back, g);
    let mut csv = Vec::new();
    ff.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), 1 + ff.power.len());
}

fn pattern(seed: u64) -> FarField {
    let a = 1.0 + (seed % 7) as f64;
    let b = (seed % 5) as f64 / 5.0;
    FarField::from_fn(LAMBDA, &FarFieldOptions { n_theta: 61, n_phi: 72, padding: 1, taper: 0.0 }, move |t, p| {
        (a * t.cos()).powi(2) + b * (p.sin() * t.sin()).powi(2) + 0.01
    })
}

proptest! {
    #[test]
    fn collection_efficiency_is_monotone(seed in 0u64..1000, x in 0.01f64..1.0, y in 0.01f64..1.0) {
        let ff = pattern(seed);
        let (lo, hi) = if x < y { (x, y) } else { (y, x) };
        let a = collection_efficiency(&ff, lo).unwrap();
        let b = collection_efficiency(&ff, hi).unwrap();
        prop_assert!(a <= b + 1e-15);
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
    }
}
