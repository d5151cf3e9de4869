//! Convolutional PML (CFS-CPML with kappa = 1) in normalized units.
//!
//! Each stretched derivative is split into the plain difference, applied by
//! the bulk update, plus a recursive-convolution correction
//! `psi <- b psi + c dF` applied only inside the absorbing slabs.

use super::layout::{Component, Layout};

#[derive(Debug, Clone)]
pub(crate) struct AxisProfile {
    /// Indexed by logical position + 1 (node positions, used by E).
    pub be: Vec<f64>,
    pub ce: Vec<f64>,
    /// Indexed by logical position + 1 (half-integer positions, used by H).
    pub bh: Vec<f64>,
    pub ch: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct PsiBox {
    pub target: Component,
    pub source: Component,
    pub axis: usize,
    pub sign: f64,
    pub lo: [usize; 3],
    pub hi: [usize; 3],
    pub data: Vec<f64>,
}

impl PsiBox {
    fn shape(&self) -> [usize; 3] {
        [
            self.hi[0] - self.lo[0],
            self.hi[1] - self.lo[1],
            self.hi[2] - self.lo[2],
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PmlParams {
    pub cells: usize,
    pub order: f64,
    pub sigma_scale: f64,
    pub alpha_max: f64,
}

fn coeffs(depth: f64, p: &PmlParams, dt: f64) -> (f64, f64) {
    if depth <= 0.0 {
        return (1.0, 0.0);
    }
    let l = p.cells as f64;
    let x = (depth / l).min(1.0);
    let sigma_max = p.sigma_scale * 0.8 * (p.order + 1.0);
    let sigma = sigma_max * x.powf(p.order);
    let alpha = p.alpha_max * (1.0 - x);
    let b = (-(sigma + alpha) * dt).exp();
    let c = if sigma + alpha > 0.0 {
        sigma / (sigma + alpha) * (b - 1.0)
    } else {
        0.0
    };
    (b, c)
}

pub(crate) fn axis_profile(n: usize, low: bool, high: bool, p: &PmlParams, dt: f64) -> AxisProfile {
    let len = n + 3;
    let mut prof = AxisProfile {
        be: vec![1.0; len],
        ce: vec![0.0; len],
        bh: vec![1.0; len],
        ch: vec![0.0; len],
    };
    let l = p.cells as f64;
    for pos in 0..=n {
        let xe = pos as f64;
        let xh = pos as f64 + 0.5;
        let mut de: f64 = 0.0;
        let mut dh: f64 = 0.0;
        if low {
            de = de.max(l - xe);
            dh = dh.max(l - xh);
        }
        if high {
            de = de.max(xe - (n as f64 - l));
            dh = dh.max(xh - (n as f64 - l));
        }
        let (b, c) = coeffs(de, p, dt);
        prof.be[pos + 1] = b;
        prof.ce[pos + 1] = c;
        let (b, c) = coeffs(dh, p, dt);
        prof.bh[pos + 1] = b;
        prof.ch[pos + 1] = c;
    }
    prof
}

/// Correction boxes for the absorbing slabs on the selected faces.
pub(crate) fn build_boxes(n: [usize; 3], faces: [[bool; 2]; 3], cells: usize) -> Vec<PsiBox> {
    let mut out = Vec::new();
    for axis in 0..3 {
        for (side, &on) in faces[axis].iter().enumerate() {
            if !on {
                continue;
            }
            for t in 0..3 {
                if t == axis {
                    continue;
                }
                let other = 3 - axis - t;
                let u = (t + 1) % 3;
                for electric in [true, false] {
                    let (target, source) = if electric {
                        (Component::electric(t), Component::magnetic(other))
                    } else {
                        (Component::magnetic(t), Component::electric(other))
                    };
                    let plus = axis == u;
                    let sign = match (electric, plus) {
                        (true, true) | (false, false) => 1.0,
                        _ => -1.0,
                    };
                    let mut lo = [0usize; 3];
                    let mut hi = [0usize; 3];
                    for d in 0..3 {
                        hi[d] = target.extent(n, d);
                    }
                    let nn = n[axis];
                    match (side, electric) {
                        (0, _) => {
                            lo[axis] = 0;
                            hi[axis] = cells;
                        }
                        (_, true) => {
                            lo[axis] = nn + 1 - cells;
                            hi[axis] = nn + 1;
                        }
                        (_, false) => {
                            lo[axis] = nn - cells;
                            hi[axis] = nn;
                        }
                    }
                    let size = (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]);
                    out.push(PsiBox {
                        target,
                        source,
                        axis,
                        sign,
                        lo,
                        hi,
                        data: vec![0.0; size],
                    });
                }
            }
        }
    }
    out
}

/// Applies one correction box. `coef` is the per-cell update coefficient
/// for E targets; H targets use the scalar `courant`.
pub(crate) fn apply_box(
    bx: &mut PsiBox,
    layout: &Layout,
    profile: &AxisProfile,
    target: &mut [f64],
    source: &[f64],
    coef: Option<&[f64]>,
    courant: f64,
) {
    let [s0, s1, s2] = bx.shape();
    let stride = layout.stride(bx.axis);
    let electric = bx.target.is_electric();
    let (bv, cv) = if electric {
        (&profile.be, &profile.ce)
    } else {
        (&profile.bh, &profile.ch)
    };
    let sign = bx.sign;
    let k0 = bx.lo[2];
    // Source offsets: E targets take a backward difference, H a forward one.
    let (lo_off, hi_off) = if electric { (stride, 0) } else { (0, stride) };
    let mut q = 0;
    for di in 0..s0 {
        let i = bx.lo[0] + di;
        for dj in 0..s1 {
            let j = bx.lo[1] + dj;
            let row = layout.at(i, j, k0);
            let psi = &mut bx.data[q..q + s2];
            let tgt = &mut target[row..row + s2];
            let src_hi = &source[row + hi_off..row + hi_off + s2];
            let src_lo = &source[row - lo_off..row - lo_off + s2];
            let along_k = bx.axis == 2;
            let (b_row, c_row) = if along_k {
                (0.0, 0.0)
            } else {
                let pos = [i, j][bx.axis] + 1;
                (bv[pos], cv[pos])
            };
            let bk = &bv[k0 + 1..k0 + 1 + s2];
            let ck = &cv[k0 + 1..k0 + 1 + s2];
            match coef {
                Some(c) => {
                    let cf = &c[row..row + s2];
                    for k in 0..s2 {
                        let (b, cc) = if along_k { (bk[k], ck[k]) } else { (b_row, c_row) };
                        let p = b * psi[k] + cc * (src_hi[k] - src_lo[k]);
                        psi[k] = p;
                        tgt[k] += sign * cf[k] * p;
                    }
                }
                None => {
                    let f = sign * courant;
                    for k in 0..s2 {
                        let (b, cc) = if along_k { (bk[k], ck[k]) } else { (b_row, c_row) };
                        let p = b * psi[k] + cc * (src_hi[k] - src_lo[k]);
                        psi[k] = p;
                        tgt[k] += f * p;
                    }
                }
            }
            q += s2;
        }
    }
}
