//! Data-file fitting commands and the bundled-data generator.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use phc_core::coupling::{enhancement_from_spectra, EnhancementEstimate};
use phc_core::fit::synth::{self, EmitterSim};
use phc_core::fit::{
    fit_composite_spectrum, fit_saturation, fit_saturation_two_stage, g2_background_correct, g2_histogram,
    read_power_series, read_timestamps, saturation_model, signal_to_total, write_power_series, write_timestamps,
    CompositeFitResult, CompositeGuess, CompositeParams, G2Correction, SaturationFitResult, SaturationOptions,
    PARAM_NAMES,
};
use phc_core::modes::Spectrum;
use serde::Serialize;

use crate::output::{sha256_hex, RunDir};

/// A finished fit: where it went and whether every fit converged.
#[derive(Debug)]
pub struct FitOutcome {
    pub dir: PathBuf,
    pub converged: bool,
    pub summary: String,
}

fn read_input(path: &Path) -> Result<(String, String)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let hash = sha256_hex(text.as_bytes());
    Ok((text, hash))
}

#[derive(Serialize)]
struct Identity<'a, O: Serialize> {
    command: &'a str,
    inputs: Vec<(String, String)>,
    options: &'a O,
}

/// Run id and config record for a fit: the command, the checksums of the
/// inputs and the options.
fn identity<O: Serialize>(command: &str, inputs: &[(&str, &str)], options: &O) -> Result<(String, serde_json::Value)> {
    let id = Identity {
        command,
        inputs: inputs.iter().map(|(n, h)| (n.to_string(), h.to_string())).collect(),
        options,
    };
    let value = serde_json::to_value(&id)?;
    let run_id = sha256_hex(&serde_json::to_vec(&value)?)[..16].to_string();
    Ok((run_id, value))
}

fn finish(
    out: &Path,
    command: &str,
    run_id: &str,
    config: &serde_json::Value,
    files: Vec<(&str, Vec<u8>)>,
    converged: bool,
    summary: String,
) -> Result<FitOutcome> {
    let mut dir = RunDir::create(out.join(run_id))?;
    for (name, bytes) in files {
        dir.write(name, &bytes)?;
    }
    dir.write("summary.txt", summary.as_bytes())?;
    let dir = dir.finish(command, run_id, config)?;
    Ok(FitOutcome { dir, converged, summary })
}

fn json(v: &impl Serialize) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

// ------------------------------------------------------------ spectrum

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumArgs {
    pub input: PathBuf,
    pub zpl_nm: f64,
    pub cavity_nm: f64,
    /// Uncoupled spectrum of the same emitter, for the enhancement estimate.
    pub reference: Option<PathBuf>,
    pub band_nm: Option<(f64, f64)>,
    pub detection_ratio: f64,
}

#[derive(Serialize)]
struct SpectrumReport<'a> {
    fit: &'a CompositeFitResult,
    zpl_area: f64,
    reference_fit: Option<&'a CompositeFitResult>,
    enhancement: Option<EnhancementEstimate>,
}

fn describe_composite(s: &mut String, title: &str, f: &CompositeFitResult) {
    let p = f.params.to_vec();
    let u = f.uncertainties.to_vec();
    let _ = writeln!(s, "{title}: converged {}, residual norm {:.4e}", f.converged, f.residual_norm);
    for (i, name) in PARAM_NAMES.iter().enumerate() {
        let _ = writeln!(s, "  {name:<16} {:>14.6} +- {:.3e}", p[i], u[i]);
    }
    for w in &f.warnings {
        let _ = writeln!(s, "  warning: {w}");
    }
}

fn composite_curve(spec: &Spectrum, f: &CompositeFitResult) -> Vec<u8> {
    let mut s = String::from("wavelength_nm,intensity,model,background,zpl,fano\n");
    for (&x, &y) in spec.wavelength_nm.iter().zip(&spec.intensity) {
        let _ = writeln!(
            s,
            "{x},{y},{:e},{:e},{:e},{:e}",
            f.eval(x),
            f.background(x),
            f.params.zpl(x),
            f.params.fano(x)
        );
    }
    s.into_bytes()
}

pub fn fit_spectrum(args: &SpectrumArgs, out: &Path) -> Result<FitOutcome> {
    let (text, hash) = read_input(&args.input)?;
    let spec = Spectrum::read_csv(&text).with_context(|| format!("{}", args.input.display()))?;
    let reference = match &args.reference {
        Some(p) => {
            let (t, h) = read_input(p)?;
            Some((Spectrum::read_csv(&t).with_context(|| format!("{}", p.display()))?, h))
        }
        None => None,
    };
    if reference.is_some() != args.band_nm.is_some() {
        bail!("--reference and --band go together");
    }
    let guess = CompositeGuess {
        zpl_center_nm: args.zpl_nm,
        zpl_sigma_nm: None,
        fano_center_nm: args.cavity_nm,
        fano_width_nm: None,
        fano_q: None,
    };
    let fit = fit_composite_spectrum(&spec, &guess).context("composite fit")?;
    let mut converged = fit.converged;
    let mut summary = String::new();
    describe_composite(&mut summary, "composite fit", &fit);
    let _ = writeln!(summary, "  zpl area {:.6e}", fit.params.zpl_area());

    let (ref_fit, enhancement) = match (&reference, args.band_nm) {
        (Some((before, _)), Some(band)) => {
            let rf = fit_composite_spectrum(before, &guess).context("reference fit")?;
            converged &= rf.converged;
            describe_composite(&mut summary, "reference fit", &rf);
            let e = enhancement_from_spectra(before, &spec, band, args.detection_ratio, &guess)?;
            let _ = writeln!(
                summary,
                "enhancement in {:.2}-{:.2} nm: detected {:.4}, detection ratio {:.4}, inferred {:.4}",
                band.0, band.1, e.detected, e.detection_ratio, e.inferred
            );
            (Some(rf), Some(e))
        }
        _ => (None, None),
    };
    let mut inputs = vec![("input", hash.as_str())];
    if let Some((_, h)) = &reference {
        inputs.push(("reference", h.as_str()));
    }
    let opts = (args.zpl_nm, args.cavity_nm, args.band_nm, args.detection_ratio);
    let (run_id, config) = identity("fit-spectrum", &inputs, &opts)?;
    let report = SpectrumReport {
        fit: &fit,
        zpl_area: fit.params.zpl_area(),
        reference_fit: ref_fit.as_ref(),
        enhancement,
    };
    let files = vec![("report.json", json(&report)?), ("fit.csv", composite_curve(&spec, &fit))];
    finish(out, "fit-spectrum", &run_id, &config, files, converged, summary)
}

// ---------------------------------------------------------- saturation

#[derive(Debug, Clone, Serialize)]
pub struct SaturationArgs {
    pub input: PathBuf,
    pub fix_a_zero: bool,
    /// Background-free reference curve; its saturation power is imposed on
    /// the input fit.
    pub reference: Option<PathBuf>,
}

#[derive(Serialize)]
struct SaturationReport<'a> {
    fit: &'a SaturationFitResult,
    reference_fit: Option<&'a SaturationFitResult>,
}

fn describe_saturation(s: &mut String, title: &str, f: &SaturationFitResult) {
    let _ = writeln!(s, "{title}: converged {}, residual norm {:.4e}", f.converged, f.residual_norm);
    let _ = writeln!(s, "  y_inf      {:>14.6} +- {:.3e}", f.y_inf, f.sigma_y_inf);
    let _ = writeln!(s, "  p_sat_uw   {:>14.6} +- {:.3e}", f.p_sat_uw, f.sigma_p_sat_uw);
    let _ = writeln!(s, "  a          {:>14.6} +- {:.3e}", f.a, f.sigma_a);
    if !f.p_sat_identifiable {
        let _ = writeln!(s, "  warning: saturation power not identifiable from this curve");
    }
}

fn saturation_curve(points: &[(f64, f64)], f: &SaturationFitResult) -> Vec<u8> {
    let mut s = String::from("power_uw,counts,model\n");
    for &(p, y) in points {
        let _ = writeln!(s, "{p},{y},{:e}", saturation_model(p, f.y_inf, f.p_sat_uw, f.a));
    }
    s.into_bytes()
}

pub fn fit_saturation_cmd(args: &SaturationArgs, out: &Path) -> Result<FitOutcome> {
    let (text, hash) = read_input(&args.input)?;
    let points = read_power_series(&text).with_context(|| format!("{}", args.input.display()))?;
    let reference = match &args.reference {
        Some(p) => {
            let (t, h) = read_input(p)?;
            Some((read_power_series(&t).with_context(|| format!("{}", p.display()))?, h))
        }
        None => None,
    };
    let mut summary = String::new();
    let (fit, ref_fit) = match &reference {
        Some((rpts, _)) => {
            let (first, rest) = fit_saturation_two_stage(rpts, std::slice::from_ref(&points))?;
            describe_saturation(&mut summary, "reference fit (a = 0)", &first);
            (rest.into_iter().next().expect("one curve"), Some(first))
        }
        None => {
            let opts = SaturationOptions {
                fix_a_to_zero: args.fix_a_zero,
                fixed_p_sat_uw: None,
            };
            (fit_saturation(&points, &opts)?, None)
        }
    };
    describe_saturation(&mut summary, "saturation fit", &fit);
    let converged = fit.converged && ref_fit.as_ref().is_none_or(|r| r.converged);
    let mut inputs = vec![("input", hash.as_str())];
    if let Some((_, h)) = &reference {
        inputs.push(("reference", h.as_str()));
    }
    let (run_id, config) = identity("fit-saturation", &inputs, &args.fix_a_zero)?;
    let report = SaturationReport {
        fit: &fit,
        reference_fit: ref_fit.as_ref(),
    };
    let files = vec![("report.json", json(&report)?), ("fit.csv", saturation_curve(&points, &fit))];
    finish(out, "fit-saturation", &run_id, &config, files, converged, summary)
}

// ------------------------------------------------------------------ g2

#[derive(Debug, Clone, Serialize)]
pub struct G2Args {
    pub a: PathBuf,
    pub b: PathBuf,
    pub bin_ns: f64,
    pub window_ns: f64,
    pub rho: Option<f64>,
    pub signal_rate: Option<f64>,
    pub background_rate: Option<f64>,
}

#[derive(Serialize)]
struct G2Report<'a> {
    events_a: usize,
    events_b: usize,
    rate_a: f64,
    rate_b: f64,
    rho: f64,
    dip: f64,
    dip_sigma: f64,
    dip_upper95: f64,
    raw_dip: f64,
    single_emitter: bool,
    verdict: &'a str,
}

pub fn g2_cmd(args: &G2Args, out: &Path) -> Result<FitOutcome> {
    let (ta, ha) = read_input(&args.a)?;
    let (tb, hb) = read_input(&args.b)?;
    let a = read_timestamps(&ta).with_context(|| format!("{}", args.a.display()))?;
    let b = read_timestamps(&tb).with_context(|| format!("{}", args.b.display()))?;
    let rho = match (args.rho, args.signal_rate, args.background_rate) {
        (Some(r), None, None) => r,
        (None, Some(s), Some(bg)) => signal_to_total(s, bg)?,
        (None, None, None) => 1.0,
        _ => bail!("give either --rho or both --signal-rate and --background-rate"),
    };
    let hist = g2_histogram(&a, &b, args.bin_ns, args.window_ns)?.with_rho(rho)?;
    let c: G2Correction = g2_background_correct(&hist)?;
    let verdict = if c.single_emitter { "single emitter" } else { "not shown to be a single emitter" };
    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "g2: {} + {} events over {:.4} s, rho {:.4}",
        a.len(),
        b.len(),
        hist.duration_s,
        rho
    );
    let _ = writeln!(summary, "  raw g2(0)        {:.4}", c.raw_dip);
    let _ = writeln!(summary, "  corrected g2(0)  {:.4} +- {:.4} (95% upper bound {:.4})", c.dip, c.dip_sigma, c.dip_upper95);
    let _ = writeln!(summary, "  verdict: {verdict}");
    let (run_id, config) = identity("g2", &[("a", ha.as_str()), ("b", hb.as_str())], &(args.bin_ns, args.window_ns, rho))?;
    let report = G2Report {
        events_a: a.len(),
        events_b: b.len(),
        rate_a: hist.rate_a,
        rate_b: hist.rate_b,
        rho,
        dip: c.dip,
        dip_sigma: c.dip_sigma,
        dip_upper95: c.dip_upper95,
        raw_dip: c.raw_dip,
        single_emitter: c.single_emitter,
        verdict,
    };
    let mut csv = Vec::new();
    c.write_csv(&mut csv)?;
    let files = vec![("report.json", json(&report)?), ("g2.csv", csv)];
    finish(out, "g2", &run_id, &config, files, true, summary)
}

// --------------------------------------------------------------- synth

/// Parameters of the bundled synthetic spectra.
pub fn synthetic_spectrum_truth() -> CompositeParams {
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

pub const SYNTH_SPECTRUM_RANGE_NM: (f64, f64) = (625.0, 655.0);
pub const SYNTH_BOOST: f64 = 4.0;
pub const SYNTH_P_SAT_UW: f64 = 770.0;

/// Bundled g2 run: fewer events than the reference simulation, wider bins.
pub fn synthetic_emitter() -> EmitterSim {
    EmitterSim {
        events: 200_000,
        ..EmitterSim::default()
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let p = dir.join(name);
    std::fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
    Ok(p)
}

/// Writes one synthetic dataset into `dir`; returns the files written.
pub fn synth(kind: &str, seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    match kind {
        "spectrum" => {
            let before = synthetic_spectrum_truth();
            let after = CompositeParams {
                fano_amplitude: before.fano_amplitude * SYNTH_BOOST,
                ..before
            };
            for (name, truth, s) in [("spectrum_before.csv", before, seed), ("spectrum_after.csv", after, seed + 1)] {
                let spec = synth::composite_spectrum(&truth, SYNTH_SPECTRUM_RANGE_NM, 600, 0.01, s)?;
                let mut buf = Vec::new();
                spec.write_csv(&mut buf)?;
                files.push(write_file(dir, name, &buf)?);
            }
        }
        "saturation" => {
            let powers = synth::power_ladder(30.0, 6000.0, 14);
            let sets = [
                ("saturation_zpl.csv", 1000.0, 0.0, seed),
                ("saturation_total.csv", 5000.0, 1.5, seed + 1),
            ];
            for (name, y_inf, a, s) in sets {
                let pts = synth::saturation_points(y_inf, SYNTH_P_SAT_UW, a, &powers, 0.02, s);
                let mut buf = Vec::new();
                write_power_series(&pts, &mut buf)?;
                files.push(write_file(dir, name, &buf)?);
            }
        }
        "g2" => {
            let (a, b) = synthetic_emitter().generate(seed)?;
            for (name, ts) in [("g2_a.txt", a), ("g2_b.txt", b)] {
                let mut buf = Vec::new();
                write_timestamps(&ts, &mut buf)?;
                files.push(write_file(dir, name, &buf)?);
            }
        }
        other => bail!("unknown dataset `{other}` (spectrum, saturation, g2)"),
    }
    Ok(files)
}
