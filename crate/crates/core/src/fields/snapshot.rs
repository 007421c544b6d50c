//! Plain-text field snapshots.
//!
//! ```text
//! # stochvar field snapshot
//! n 32
//! d 2
//! components 2
//! # k1 k2 re_1 im_1 re_2 im_2
//! 0 0 1.0000000000000000e0 0e0 ...
//! ```
//!
//! One row per stored coefficient in flat index order. Values are written
//! with 17 significant digits, so a write/read cycle is bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::grid::{TorusGrid, DIM};
use super::spectral::{SpectralField, SpectralVectorField};
use crate::error::{Error, Result};

const MAGIC: &str = "# stochvar field snapshot";

pub fn write_fields<W: Write>(mut w: W, fields: &[&SpectralField]) -> Result<()> {
    let grid = fields
        .first()
        .ok_or_else(|| Error::Config("no fields to write".into()))?
        .grid();
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "n {}", grid.n())?;
    writeln!(w, "d {DIM}")?;
    writeln!(w, "components {}", fields.len())?;
    write!(w, "# k1 k2")?;
    for c in 1..=fields.len() {
        write!(w, " re_{c} im_{c}")?;
    }
    writeln!(w)?;
    for idx in 0..grid.len() {
        let k = grid.wavevector(idx);
        write!(w, "{} {}", k[0], k[1])?;
        for f in fields {
            let c = f.coeffs()[idx];
            write!(w, " {:.16e} {:.16e}", c.re, c.im)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_fields<R: Read>(r: R) -> Result<Vec<SpectralField>> {
    let mut lines = BufReader::new(r).lines();
    let mut next_line = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Format("unexpected end of snapshot".into()))?
            .map_err(Error::from)
    };
    if next_line()?.trim() != MAGIC {
        return Err(Error::Format("missing snapshot header".into()));
    }
    let n = header_value(&next_line()?, "n")?;
    let d = header_value(&next_line()?, "d")?;
    if d != DIM {
        return Err(Error::Format(format!("unsupported dimension {d}")));
    }
    let width = header_value(&next_line()?, "components")?;
    let grid = TorusGrid::new(n).map_err(|e| Error::Format(e.to_string()))?;
    let _columns = next_line()?;
    let mut coeffs = vec![vec![Complex64::new(0.0, 0.0); grid.len()]; width];
    for _ in 0..grid.len() {
        let line = next_line()?;
        let mut it = line.split_ascii_whitespace();
        let mut int = || -> Result<i64> {
            it.next()
                .ok_or_else(|| Error::Format(format!("short row: {line}")))?
                .parse()
                .map_err(|_| Error::Format(format!("bad wavenumber in row: {line}")))
        };
        let k = [int()?, int()?];
        let idx = grid
            .flat_index(k)
            .ok_or_else(|| Error::Format(format!("wavevector {k:?} not on grid")))?;
        let vals: Vec<f64> = line
            .split_ascii_whitespace()
            .skip(2)
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("bad value in row: {line}")))?;
        if vals.len() != 2 * width {
            return Err(Error::Format(format!("expected {} values in row: {line}", 2 * width)));
        }
        for c in 0..width {
            coeffs[c][idx] = Complex64::new(vals[2 * c], vals[2 * c + 1]);
        }
    }
    coeffs
        .into_iter()
        .map(|c| SpectralField::from_coeffs(&grid, c))
        .collect()
}

fn header_value(line: &str, key: &str) -> Result<usize> {
    let mut it = line.split_ascii_whitespace();
    match (it.next(), it.next()) {
        (Some(k), Some(v)) if k == key => v
            .parse()
            .map_err(|_| Error::Format(format!("bad value for {key}: {v}"))),
        _ => Err(Error::Format(format!("expected `{key} <value>`, got `{line}`"))),
    }
}

pub fn save_fields(path: impl AsRef<Path>, fields: &[&SpectralField]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_fields(&mut w, fields)?;
    w.flush()?;
    Ok(())
}

pub fn load_fields(path: impl AsRef<Path>) -> Result<Vec<SpectralField>> {
    read_fields(File::open(path)?)
}

pub fn save_vector_field(path: impl AsRef<Path>, v: &SpectralVectorField) -> Result<()> {
    save_fields(path, &[&v.components[0], &v.components[1]])
}

/// Loads a two-component snapshot; the divergence-free flag is re-derived.
pub fn load_vector_field(path: impl AsRef<Path>) -> Result<SpectralVectorField> {
    let fields = load_fields(path)?;
    let [a, b]: [SpectralField; 2] = fields
        .try_into()
        .map_err(|_| Error::Format("expected two components".into()))?;
    Ok(SpectralVectorField::new([a, b]).check_div_free())
}
