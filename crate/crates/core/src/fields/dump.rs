//! Field dump: a JSON header plus a sidecar of little-endian f64 values in
//! point-major order.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{FieldError, FormField, Grid, GridKind};
use crate::exterior::{basis_mask, mask_indices, n_components, DIM};

pub const DUMP_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub format_version: u32,
    pub grid: GridKind,
    pub dims: [usize; DIM],
    pub spacing: [f64; DIM],
    pub origin: [f64; DIM],
    pub grade: usize,
    /// Component labels such as `"dx1^dy2"`, in storage order.
    pub component_order: Vec<String>,
    pub values: usize,
    pub sidecar: String,
}

fn label(k: usize, c: usize) -> String {
    let names = ["dx1", "dx2", "dx3", "dy1", "dy2", "dy3"];
    let idx = mask_indices(basis_mask(k, c));
    if idx.is_empty() {
        "1".into()
    } else {
        idx.iter().map(|&i| names[i]).collect::<Vec<_>>().join("^")
    }
}

fn io(e: impl std::fmt::Display) -> FieldError {
    FieldError::Dump(e.to_string())
}

/// Writes `header_path` (JSON) and a sidecar `<header_path>.bin` next to it.
pub fn write_dump(field: &FormField<f64>, header_path: &Path) -> Result<DumpHeader, FieldError> {
    let g = field.grid();
    let sidecar = header_path.with_extension("bin");
    let header = DumpHeader {
        format_version: DUMP_FORMAT_VERSION,
        grid: g.kind(),
        dims: g.dims(),
        spacing: g.spacing(),
        origin: g.origin(),
        grade: field.grade(),
        component_order: (0..n_components(field.grade())).map(|c| label(field.grade(), c)).collect(),
        values: field.data().len(),
        sidecar: sidecar.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
    };
    let mut bytes = Vec::with_capacity(field.data().len() * 8);
    for v in field.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&sidecar, bytes).map_err(io)?;
    fs::write(header_path, serde_json::to_string_pretty(&header).map_err(io)?).map_err(io)?;
    Ok(header)
}

/// Reads a dump written by [`write_dump`]; the grid is rebuilt from the header.
pub fn read_dump(header_path: &Path) -> Result<FormField<f64>, FieldError> {
    let header: DumpHeader = serde_json::from_str(&fs::read_to_string(header_path).map_err(io)?).map_err(io)?;
    if header.format_version != DUMP_FORMAT_VERSION {
        return Err(FieldError::Dump(format!("unsupported format version {}", header.format_version)));
    }
    let grid: Arc<Grid> = match header.grid {
        GridKind::Torus => Grid::torus_with_dims(header.dims)?,
        GridKind::BallTorus { nx, nt } => Grid::ball_torus(nx, nt)?,
    };
    if grid.dims() != header.dims {
        return Err(FieldError::Dump("header dims do not match the grid kind".into()));
    }
    let sidecar = header_path.with_file_name(&header.sidecar);
    let bytes = fs::read(sidecar).map_err(io)?;
    if bytes.len() != header.values * 8 || header.values != grid.npoints() * n_components(header.grade) {
        return Err(FieldError::Dump("sidecar size does not match the header".into()));
    }
    let data = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
    Ok(FormField::from_data(&grid, header.grade, data))
}
