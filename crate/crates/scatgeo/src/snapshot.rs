//! Binary state dumps: one JSON header line followed by little-endian
//! `(re, im)` `f64` pairs in grid order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::grid::{GridSpec, GridState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotHeader {
    pub dims: Vec<usize>,
    pub spacing: f64,
    pub extent: f64,
    pub time: f64,
    pub decomposition: scatgeo_core::ClusterDecomposition,
    pub masses: Vec<f64>,
}

pub fn write(path: &Path, state: &GridState, time: f64) -> Result<()> {
    let header = SnapshotHeader {
        dims: vec![state.grid.points; state.grid.dim],
        spacing: state.grid.spacing(),
        extent: state.grid.extent,
        time,
        decomposition: state.frame.decomposition().clone(),
        masses: state.frame.mass().masses().to_vec(),
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut f, &header)?;
    f.write_all(b"\n")?;
    for v in &state.values {
        f.write_all(&v.re.to_le_bytes())?;
        f.write_all(&v.im.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

/// Header and values of a snapshot.
pub fn read(path: &Path) -> Result<(SnapshotHeader, GridSpec, Vec<Complex64>)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: SnapshotHeader = serde_json::from_str(line.trim_end())?;
    let points = *header
        .dims
        .first()
        .ok_or_else(|| param_err!("empty dims"))?;
    let grid = GridSpec::new(header.dims.len(), header.extent, points)?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != grid.len() * 16 {
        return Err(param_err!(
            "snapshot holds {} bytes, expected {}",
            bytes.len(),
            grid.len() * 16
        ));
    }
    let f = |b: &[u8]| f64::from_le_bytes(b.try_into().expect("8 bytes"));
    let values = bytes
        .chunks(16)
        .map(|c| Complex64::new(f(&c[..8]), f(&c[8..])))
        .collect();
    Ok((header, grid, values))
}
