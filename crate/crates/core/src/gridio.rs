//! Flat binary export of sampled arrays for external visualization.
//!
//! Little endian: magic `PHCGRID1`, u32 version, u32 rank, u32 component
//! count, u64 dims[rank], f64 spacing, f64 origin[rank], then the
//! components one after another, each `prod(dims)` f64 values with the last
//! axis fastest.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Axis, PermittivityGrid};

const MAGIC: &[u8; 8] = b"PHCGRID1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct GridArray {
    pub dims: Vec<usize>,
    pub spacing: f64,
    pub origin: Vec<f64>,
    pub components: Vec<Vec<f64>>,
}

impl GridArray {
    pub fn new(dims: Vec<usize>, spacing: f64, origin: Vec<f64>, components: Vec<Vec<f64>>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if origin.len() != dims.len() || components.iter().any(|c| c.len() != len) {
            return Err(Error::Format("component length does not match the dimensions".into()));
        }
        Ok(GridArray {
            dims,
            spacing,
            origin,
            components,
        })
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        w.write_all(&(self.components.len() as u32).to_le_bytes())?;
        for d in &self.dims {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        w.write_all(&self.spacing.to_le_bytes())?;
        for o in &self.origin {
            w.write_all(&o.to_le_bytes())?;
        }
        for c in &self.components {
            let mut buf = Vec::with_capacity(c.len() * 8);
            for v in c {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a grid file".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported grid version {version}")));
        }
        let rank = read_u32(r)? as usize;
        let ncomp = read_u32(r)? as usize;
        if rank > 8 || ncomp > 64 {
            return Err(Error::Format("implausible grid header".into()));
        }
        let dims = (0..rank).map(|_| read_u64(r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let spacing = read_f64(r)?;
        let origin = (0..rank).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
        let len: usize = dims.iter().product();
        let mut components = Vec::with_capacity(ncomp);
        for _ in 0..ncomp {
            let mut bytes = vec![0u8; len * 8];
            r.read_exact(&mut bytes)?;
            components.push(bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect());
        }
        Self::new(dims, spacing, origin, components)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

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

impl From<&PermittivityGrid> for GridArray {
    /// The three staggered permittivity components on the node lattice.
    fn from(g: &PermittivityGrid) -> Self {
        let n = g.dims();
        GridArray {
            dims: vec![n[0] + 1, n[1] + 1, n[2] + 1],
            spacing: g.cell_nm(),
            origin: g.origin_nm().to_vec(),
            components: Axis::ALL.iter().map(|&a| g.eps(a).to_vec()).collect(),
        }
    }
}

impl From<&crate::modes::ModeProfile> for GridArray {
    /// Normalized energy density and node permittivity.
    fn from(p: &crate::modes::ModeProfile) -> Self {
        GridArray {
            dims: vec![p.dims[0] + 1, p.dims[1] + 1, p.dims[2] + 1],
            spacing: p.cell_nm,
            origin: p.origin_nm.to_vec(),
            components: vec![p.density.clone(), p.eps.clone()],
        }
    }
}
