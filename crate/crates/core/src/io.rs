//! Binary field dumps.
//!
//! Layout: magic `WKBF1`, `u8` dimension, `u32` points per axis, `f64` half
//! length, then `(re, im)` pairs of `f64`, row-major. All integers and floats
//! are little-endian. Real fields are written with `im = 0`.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::grid::GridSpec;

pub const FIELD_MAGIC: &[u8; 5] = b"WKBF1";

pub fn write_field<W: Write>(mut w: W, f: &ComplexField) -> Result<()> {
    let g = f.grid();
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&[g.dim() as u8])?;
    w.write_all(&(g.n() as u32).to_le_bytes())?;
    w.write_all(&g.half_len().to_le_bytes())?;
    let mut buf = Vec::with_capacity(16 * f.data().len());
    for z in f.data() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_real_field<W: Write>(w: W, f: &RealField) -> Result<()> {
    write_field(w, &f.to_complex())
}

pub fn read_field<R: Read>(mut r: R) -> Result<ComplexField> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let mut b1 = [0u8; 1];
    r.read_exact(&mut b1)?;
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let grid = GridSpec::new(b1[0] as usize, u32::from_le_bytes(b4) as usize, f64::from_le_bytes(b8))
        .map_err(|e| Error::Format(e.to_string()))?;
    let mut payload = vec![0u8; 16 * grid.len()];
    r.read_exact(&mut payload)?;
    let data = payload
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect();
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    ComplexField::from_vec(grid, data)
}

pub fn save_field(path: impl AsRef<Path>, f: &ComplexField) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_field(std::io::BufWriter::new(file), f)
}

pub fn load_field(path: impl AsRef<Path>) -> Result<ComplexField> {
    let file = std::fs::File::open(path)?;
    read_field(std::io::BufReader::new(file))
}
