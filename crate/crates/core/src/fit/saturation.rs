//! Saturation curves `y = y_inf P / (P + P_sat) + a P`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::lsq::{least_squares, SolverOptions};

pub fn saturation_model(p: f64, y_inf: f64, p_sat: f64, a: f64) -> f64 {
    y_inf * p / (p + p_sat) + a * p
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SaturationOptions {
    /// Pin the linear background term to zero.
    pub fix_a_to_zero: bool,
    /// Pin the saturation power to a prior value (uW).
    pub fixed_p_sat_uw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationFitResult {
    pub y_inf: f64,
    pub p_sat_uw: f64,
    pub a: f64,
    pub sigma_y_inf: f64,
    pub sigma_p_sat_uw: f64,
    pub sigma_a: f64,
    pub residual_norm: f64,
    pub converged: bool,
    /// False when the data do not constrain the knee.
    pub p_sat_identifiable: bool,
    pub options: SaturationOptions,
}

/// Fits `(power uW, counts)` pairs.
pub fn fit_saturation(points: &[(f64, f64)], opts: &SaturationOptions) -> Result<SaturationFitResult> {
    if points.len() < 4 {
        return Err(Error::RecordTooShort { got: points.len(), need: 4 });
    }
    if points.iter().any(|(p, y)| !p.is_finite() || !y.is_finite() || *p < 0.0) {
        return Err(Error::invalid("points", "powers must be finite and non-negative"));
    }
    let p_max = points.iter().map(|p| p.0).fold(0.0, f64::max);
    let y_max = points.iter().map(|p| p.1).fold(0.0, f64::max);
    let mut sorted: Vec<f64> = points.iter().map(|p| p.0).collect();
    sorted.sort_by(f64::total_cmp);
    let p_med = sorted[sorted.len() / 2].max(1e-9 * p_max);
    let p_sat0 = opts.fixed_p_sat_uw.unwrap_or(p_med);
    let p0 = [y_max * (1.0 + p_sat0 / p_max.max(1e-12)), p_sat0, 0.0];
    let fixed = [false, opts.fixed_p_sat_uw.is_some(), opts.fix_a_to_zero];
    let resid = |q: &[f64]| -> Vec<f64> {
        points.iter().map(|&(p, y)| saturation_model(p, q[0], q[1], q[2]) - y).collect()
    };
    let out = least_squares(&resid, &p0, &fixed, false, &SolverOptions::default());
    let [y_inf, p_sat, a] = [out.params[0], out.params[1], out.params[2]];
    let identifiable = if opts.fixed_p_sat_uw.is_some() {
        true
    } else {
        p_sat > 0.0
            && p_sat < 10.0 * p_max
            && out.sigma[1].is_finite()
            && out.sigma[1] < p_sat
            && y_inf > 2.0 * out.sigma[0]
    };
    Ok(SaturationFitResult {
        y_inf,
        p_sat_uw: p_sat,
        a,
        sigma_y_inf: out.sigma[0],
        sigma_p_sat_uw: out.sigma[1],
        sigma_a: out.sigma[2],
        residual_norm: out.residual_norm,
        converged: out.converged,
        p_sat_identifiable: identifiable,
        options: *opts,
    })
}

/// Fits a background-free reference curve with `a = 0`, then fits every
/// other curve with the saturation power fixed to the reference value.
pub fn fit_saturation_two_stage(
    reference: &[(f64, f64)],
    others: &[Vec<(f64, f64)>],
) -> Result<(SaturationFitResult, Vec<SaturationFitResult>)> {
    let first = fit_saturation(
        reference,
        &SaturationOptions {
            fix_a_to_zero: true,
            fixed_p_sat_uw: None,
        },
    )?;
    if !first.p_sat_identifiable {
        return Err(Error::invalid("reference", "saturation power is not identifiable from the reference curve"));
    }
    let rest = others
        .iter()
        .map(|pts| {
            fit_saturation(
                pts,
                &SaturationOptions {
                    fix_a_to_zero: false,
                    fixed_p_sat_uw: Some(first.p_sat_uw),
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((first, rest))
}

/// Parses `power_uw,counts` rows. A non-numeric first line is a header.
pub fn read_power_series(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    let mut seen_header = false;
    for (ln, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = t.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = cols.iter().map(|c| c.parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.len() == 2 => {
                if !(v[0] >= 0.0 && v[0].is_finite() && v[1].is_finite()) {
                    return Err(Error::Parse { line: ln + 1, msg: format!("invalid power or count in `{t}`") });
                }
                out.push((v[0], v[1]));
            }
            Ok(v) => {
                return Err(Error::Parse { line: ln + 1, msg: format!("expected 2 columns, found {}", v.len()) });
            }
            Err(_) if out.is_empty() && !seen_header => seen_header = true,
            Err(e) => return Err(Error::Parse { line: ln + 1, msg: format!("{e}: `{t}`") }),
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("no data rows".into()));
    }
    Ok(out)
}

pub fn write_power_series(points: &[(f64, f64)], w: &mut impl std::io::Write) -> Result<()> {
    writeln!(w, "power_uw,counts")?;
    for (p, y) in points {
        writeln!(w, "{p},{y}")?;
    }
    Ok(())
}
