//! `FLD1` snapshot files: one ASCII header line `FLD1 nx ny Lx Ly t\n`
//! followed by `nx*ny` little-endian IEEE-754 doubles in cell order.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

pub const MAGIC: &str = "FLD1";

/// Serialises a field with its grid and time stamp.
pub fn encode(field: &Field, grid: &Grid, t: f64) -> Result<Vec<u8>> {
    grid.check(field, "snapshot field")?;
    // `{}` on f64 prints the shortest string that round-trips
    let header = format!(
        "{MAGIC} {} {} {} {} {}\n",
        grid.nx(),
        grid.ny(),
        grid.lx(),
        grid.ly(),
        t
    );
    let mut out = Vec::with_capacity(header.len() + 8 * field.len());
    out.extend_from_slice(header.as_bytes());
    for v in field.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(mut reader: impl BufRead) -> Result<(Field, Grid, f64)> {
    let mut header = Vec::new();
    reader
        .read_until(b'\n', &mut header)
        .map_err(|e| Error::Structural(format!("unreadable FLD1 header: {e}")))?;
    if header.last() != Some(&b'\n') {
        return Err(Error::Structural("FLD1 header is not newline terminated".into()));
    }
    let header = std::str::from_utf8(&header[..header.len() - 1])
        .map_err(|_| Error::Structural("FLD1 header is not ASCII".into()))?;
    let parts: Vec<&str> = header.split(' ').collect();
    if parts.len() != 6 || parts[0] != MAGIC {
        return Err(Error::Structural(format!("bad FLD1 header: {header:?}")));
    }
    let bad = |what: &str| Error::Structural(format!("bad FLD1 {what} in header {header:?}"));
    let nx: usize = parts[1].parse().map_err(|_| bad("nx"))?;
    let ny: usize = parts[2].parse().map_err(|_| bad("ny"))?;
    let lx: f64 = parts[3].parse().map_err(|_| bad("Lx"))?;
    let ly: f64 = parts[4].parse().map_err(|_| bad("Ly"))?;
    let t: f64 = parts[5].parse().map_err(|_| bad("t"))?;
    let grid = Grid::new(nx, ny, lx, ly)?;

    let mut payload = Vec::with_capacity(8 * grid.cell_count());
    reader
        .read_to_end(&mut payload)
        .map_err(|e| Error::Structural(format!("unreadable FLD1 payload: {e}")))?;
    if payload.len() != 8 * grid.cell_count() {
        return Err(Error::Structural(format!(
            "FLD1 payload has {} bytes, expected {}",
            payload.len(),
            8 * grid.cell_count()
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((Field::from_vec(values), grid, t))
}

pub fn write(path: &Path, field: &Field, grid: &Grid, t: f64) -> Result<()> {
    let bytes = encode(field, grid, t)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<(Field, Grid, f64)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    decode(BufReader::new(file))
}
