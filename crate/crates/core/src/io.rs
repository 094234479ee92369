//! Binary codecs for the FGRID field format and the VOXSET voxel-set format.
//!
//! FGRID: magic "FGRD", version u32 = 1, u32 n, u32 resolution per axis
//! (n entries), f64 period per axis (n entries), then resolution^n
//! little-endian f64 values, row-major with axis 0 slowest.
//!
//! VOXSET: magic "VOXS", version u32 = 1, u32 n, f64 voxel_size, f64 origin
//! (n entries), u64 count, then count x n little-endian i32 indices.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::domain::{GridField, TorusDomain};
use crate::error::{Error, Result};
use crate::evalmap::VoxelSet;

const FGRID_MAGIC: &[u8; 4] = b"FGRD";
const VOXSET_MAGIC: &[u8; 4] = b"VOXS";
const FORMAT_VERSION: u32 = 1;

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::Format(format!("truncated file while reading {what}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read, what: &str) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(f64::from_le_bytes(b))
}

fn read_i32(r: &mut impl Read, what: &str) -> Result<i32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(i32::from_le_bytes(b))
}

fn check_header(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let mut m = [0u8; 4];
    read_exact(r, &mut m, "magic")?;
    if &m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = read_u32(r, "version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    Ok(())
}

pub fn write_fgrid(path: &Path, field: &GridField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let d = field.domain;
    w.write_all(FGRID_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(d.n as u32).to_le_bytes())?;
    for _ in 0..d.n {
        w.write_all(&(d.resolution as u32).to_le_bytes())?;
    }
    for _ in 0..d.n {
        w.write_all(&d.period.to_le_bytes())?;
    }
    for v in &field.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_fgrid(path: &Path) -> Result<GridField> {
    let mut r = BufReader::new(File::open(path)?);
    check_header(&mut r, FGRID_MAGIC)?;
    let n = read_u32(&mut r, "dimension")? as usize;
    if n != 2 && n != 3 {
        return Err(Error::Format(format!("dimension {n} out of range")));
    }
    let mut resolutions = Vec::with_capacity(n);
    for _ in 0..n {
        resolutions.push(read_u32(&mut r, "resolution")?);
    }
    if resolutions.iter().any(|&x| x != resolutions[0]) {
        return Err(Error::Format("anisotropic resolutions are not supported".into()));
    }
    let mut periods = Vec::with_capacity(n);
    for _ in 0..n {
        periods.push(read_f64(&mut r, "period")?);
    }
    if periods.iter().any(|&p| p != periods[0]) {
        return Err(Error::Format("anisotropic periods are not supported".into()));
    }
    let domain = TorusDomain::new(n, resolutions[0] as usize, periods[0])
        .map_err(|e| Error::Format(e.to_string()))?;
    let count = domain.node_count();
    let mut values = vec![0.0f64; count];
    for v in values.iter_mut() {
        *v = read_f64(&mut r, "field value")?;
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after field values".into()));
    }
    GridField::new(domain, values).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_voxset(path: &Path, set: &VoxelSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(VOXSET_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(set.n as u32).to_le_bytes())?;
    w.write_all(&set.voxel_size.to_le_bytes())?;
    for i in 0..set.n {
        w.write_all(&set.origin[i].to_le_bytes())?;
    }
    w.write_all(&(set.indices.len() as u64).to_le_bytes())?;
    for idx in &set.indices {
        for i in 0..set.n {
            w.write_all(&idx[i].to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_voxset(path: &Path) -> Result<VoxelSet> {
    let mut r = BufReader::new(File::open(path)?);
    check_header(&mut r, VOXSET_MAGIC)?;
    let n = read_u32(&mut r, "dimension")? as usize;
    if n != 2 && n != 3 {
        return Err(Error::Format(format!("dimension {n} out of range")));
    }
    let voxel_size = read_f64(&mut r, "voxel size")?;
    if !(voxel_size > 0.0) || !voxel_size.is_finite() {
        return Err(Error::Format(format!("voxel size {voxel_size} must be positive")));
    }
    let mut origin = [0.0f64; 3];
    for o in origin.iter_mut().take(n) {
        *o = read_f64(&mut r, "origin")?;
    }
    let count = read_u64(&mut r, "count")? as usize;
    let mut indices = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        let mut idx = [0i32; 3];
        for e in idx.iter_mut().take(n) {
            *e = read_i32(&mut r, "voxel index")?;
        }
        indices.push(idx);
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after voxel indices".into()));
    }
    VoxelSet::from_indices(n, voxel_size, origin, indices)
}
