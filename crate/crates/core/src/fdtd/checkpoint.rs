//! Binary checkpoints of the field state.
//!
//! Layout (little endian): magic `PHCCKPT1`, u32 version, u64 step,
//! 3 x u64 dims, f64 cell size, f64 Courant factor, then the six components
//! Ex..Hz each as `(nx+1)(ny+1)(nz+1)` f64 values with k fastest, then a
//! u64 count of absorbing-layer memory values followed by the values.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::layout::Component;
use super::FieldState;

const MAGIC: &[u8; 8] = b"PHCCKPT1";
const VERSION: u32 = 1;

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn write_checkpoint(state: &FieldState, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_to(state, &mut w)?;
    w.flush()?;
    Ok(())
}

pub(crate) fn write_to(state: &FieldState, w: &mut impl Write) -> Result<()> {
    let n = state.dims();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&state.step_index().to_le_bytes())?;
    for d in n {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    w.write_all(&state.cell_nm().to_le_bytes())?;
    w.write_all(&state.courant().to_le_bytes())?;
    let l = state.layout();
    for c in Component::ALL {
        let arr = state.field(c);
        for i in 0..=n[0] {
            for j in 0..=n[1] {
                for k in 0..=n[2] {
                    w.write_all(&arr[l.at(i, j, k)].to_le_bytes())?;
                }
            }
        }
    }
    let total: usize = state.psi.iter().map(|b| b.data.len()).sum();
    w.write_all(&(total as u64).to_le_bytes())?;
    for b in &state.psi {
        for v in &b.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Restores fields, absorbing-layer memory and the step counter into a state
/// built from the same grid, source and boundary configuration.
pub fn read_checkpoint(state: &mut FieldState, path: impl AsRef<Path>) -> Result<()> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    read_from(state, &mut r)
}

pub(crate) fn read_from(state: &mut FieldState, r: &mut impl Read) -> Result<()> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let mut vb = [0u8; 4];
    r.read_exact(&mut vb)?;
    let version = u32::from_le_bytes(vb);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let step = read_u64(r)?;
    let n = state.dims();
    for d in 0..3 {
        let got = read_u64(r)? as usize;
        if got != n[d] {
            return Err(Error::Format(format!("grid mismatch on axis {d}: file {got}, state {}", n[d])));
        }
    }
    let cell = read_f64(r)?;
    let courant = read_f64(r)?;
    if cell != state.cell_nm() || courant != state.courant() {
        return Err(Error::Format("cell size or Courant factor mismatch".into()));
    }
    let l = *state.layout();
    for c in Component::ALL {
        let arr = state.field_mut(c);
        for i in 0..=n[0] {
            for j in 0..=n[1] {
                for k in 0..=n[2] {
                    arr[l.at(i, j, k)] = read_f64(r)?;
                }
            }
        }
    }
    let total = read_u64(r)? as usize;
    let expect: usize = state.psi.iter().map(|b| b.data.len()).sum();
    if total != expect {
        return Err(Error::Format(format!(
            "absorbing-layer memory size mismatch: file {total}, state {expect}"
        )));
    }
    for b in state.psi.iter_mut() {
        for v in b.data.iter_mut() {
            *v = read_f64(r)?;
        }
    }
    state.step = step;
    Ok(())
}
