use std::io::{Read, Write};
use std::path::Path;

use super::{OccupancyGrid, VoxError};
use crate::geometry::Vec3;

pub const GRID_MAGIC: &[u8; 16] = b"GSPLAN-OCCGRID01";

/// Writes magic, origin and cell (f64 LE), dims (u32 LE) and the occupancy
/// bits packed LSB-first in linear-index order.
pub fn write_grid<W: Write>(mut w: W, grid: &OccupancyGrid) -> Result<(), VoxError> {
    w.write_all(GRID_MAGIC)?;
    for v in grid.origin().iter().chain(grid.cell().iter()) {
        w.write_all(&v.to_le_bytes())?;
    }
    for d in grid.dims() {
        let d = u32::try_from(d).map_err(|_| VoxError::Format("dimension exceeds u32".into()))?;
        w.write_all(&d.to_le_bytes())?;
    }
    let mut packed = vec![0u8; grid.len().div_ceil(8)];
    for (i, &b) in grid.bits().iter().enumerate() {
        if b {
            packed[i / 8] |= 1 << (i % 8);
        }
    }
    w.write_all(&packed)?;
    Ok(())
}

pub fn read_grid<R: Read>(mut r: R) -> Result<OccupancyGrid, VoxError> {
    let mut magic = [0u8; 16];
    r.read_exact(&mut magic)?;
    if &magic != GRID_MAGIC {
        return Err(VoxError::Format("bad magic".into()));
    }
    let mut f = [0f64; 6];
    for v in f.iter_mut() {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        *v = f64::from_le_bytes(b);
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let mut grid = OccupancyGrid::new(Vec3::new(f[0], f[1], f[2]), Vec3::new(f[3], f[4], f[5]), dims)
        .map_err(|e| VoxError::Format(e.to_string()))?;
    let mut packed = vec![0u8; grid.len().div_ceil(8)];
    r.read_exact(&mut packed)?;
    for (i, b) in grid.bits_mut().iter_mut().enumerate() {
        *b = packed[i / 8] >> (i % 8) & 1 == 1;
    }
    Ok(grid)
}

impl OccupancyGrid {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), VoxError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_grid(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VoxError> {
        read_grid(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
