//! Field files: CSV in row-major node order (axis 0 slowest) with a JSON
//! sidecar holding the grid metadata.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ScalarField, TorusGrid};
use crate::error::{Error, Result};

pub const FIELD_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldMeta {
    pub schema_version: u32,
    pub grid: TorusGrid,
    pub columns: Vec<String>,
    #[serde(default)]
    pub extra: serde_json::Value,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

/// Writes one or more named fields as columns of a CSV file, preceded by
/// the node coordinates.
pub fn write_fields(
    path: &Path,
    grid: &TorusGrid,
    names: &[&str],
    fields: &[&ScalarField],
    extra: serde_json::Value,
) -> Result<()> {
    if names.len() != fields.len() {
        return Err(Error::InvalidArgument("one name per field is required".into()));
    }
    for f in fields {
        if f.values.len() != grid.len() {
            return Err(Error::ShapeMismatch("field does not match grid".into()));
        }
    }
    let axes = ["x1", "x2", "x3"];
    let mut out = String::with_capacity(grid.len() * 24 * (grid.dim + fields.len()));
    let header: Vec<&str> = axes[..grid.dim].iter().copied().chain(names.iter().copied()).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for idx in 0..grid.len() {
        let x = grid.coords(idx);
        let mut cells: Vec<String> = x[..grid.dim].iter().map(|v| format!("{v:.17e}")).collect();
        cells.extend(fields.iter().map(|f| format!("{:.17e}", f.values[idx])));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    let meta = FieldMeta {
        schema_version: FIELD_SCHEMA_VERSION,
        grid: grid.clone(),
        columns: names.iter().map(|s| s.to_string()).collect(),
        extra,
    };
    fs::write(sidecar(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Reads the fields written by [`write_fields`].
pub fn read_fields(path: &Path) -> Result<(FieldMeta, Vec<ScalarField>)> {
    let meta: FieldMeta = serde_json::from_str(&fs::read_to_string(sidecar(path))?)?;
    let text = fs::read_to_string(path)?;
    let grid = &meta.grid;
    let mut cols = vec![Vec::with_capacity(grid.len()); meta.columns.len()];
    for (line_no, line) in text.lines().skip(1).enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != grid.dim + meta.columns.len() {
            return Err(Error::ShapeMismatch(format!("line {} has {} cells", line_no + 2, cells.len())));
        }
        for (c, cell) in cells[grid.dim..].iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad number '{cell}'")))?;
            cols[c].push(v);
        }
    }
    let fields = cols
        .into_iter()
        .map(|v| ScalarField::from_values(grid, v))
        .collect::<Result<Vec<_>>>()?;
    Ok((meta, fields))
}
