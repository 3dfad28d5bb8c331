//! File formats: binary nodal fields (little-endian f64, row-major with the
//! last axis fastest) with JSON sidecars, complex torus fields (interleaved
//! re/im), boundary-operator matrices, spectra CSV, and deterministic
//! CSV/JSON report writing through atomic temp+rename.

use crate::boundary::BoundaryOperatorMap;
use crate::error::{LabError, Result};
use crate::grid::{Grid, C64};
use crate::spectral::SpectralData;
use crate::torus::Torus;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Write bytes atomically: temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into())
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FieldSidecar {
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    #[serde(rename = "box")]
    pub box_sides: Vec<f64>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Grid interior field to binary + JSON sidecar {dims, spacing, box}.
pub fn write_field(path: &Path, grid: &Grid, field: &[f64]) -> Result<()> {
    if field.len() != grid.n_interior() {
        return Err(LabError::InvalidArgument(
            "field length does not match the grid".into(),
        ));
    }
    let mut bytes = Vec::with_capacity(field.len() * 8);
    for v in field {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(path, &bytes)?;
    let sidecar = FieldSidecar {
        dims: grid.counts().to_vec(),
        spacing: grid.spacing().to_vec(),
        box_sides: grid.domain().sides().to_vec(),
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| LabError::Serde(e.to_string()))?;
    atomic_write(&sidecar_path(path), json.as_bytes())
}

/// Read a binary field and its sidecar back.
pub fn read_field(path: &Path) -> Result<(FieldSidecar, Vec<f64>)> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(LabError::Serde("field file length not a multiple of 8".into()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let json = std::fs::read_to_string(sidecar_path(path))?;
    let sidecar: FieldSidecar =
        serde_json::from_str(&json).map_err(|e| LabError::Serde(e.to_string()))?;
    let expect: usize = sidecar.dims.iter().product();
    if expect != values.len() {
        return Err(LabError::Serde(format!(
            "sidecar dims {:?} do not match {} stored values",
            sidecar.dims,
            values.len()
        )));
    }
    Ok((sidecar, values))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexFieldHeader {
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    pub xi_re: Vec<f64>,
    pub xi_im: Vec<f64>,
    pub lambda: f64,
    pub shift: Vec<f64>,
    pub residual: f64,
}

/// Complex torus field as interleaved re/im 64-bit floats plus a JSON header.
pub fn write_complex_field(
    path: &Path,
    torus: &Torus,
    data: &[C64],
    header: &ComplexFieldHeader,
) -> Result<()> {
    if data.len() != torus.len() {
        return Err(LabError::InvalidArgument(
            "field length does not match the torus".into(),
        ));
    }
    let mut bytes = Vec::with_capacity(data.len() * 16);
    for v in data {
        bytes.extend_from_slice(&v.re.to_le_bytes());
        bytes.extend_from_slice(&v.im.to_le_bytes());
    }
    atomic_write(path, &bytes)?;
    let json = serde_json::to_string_pretty(header).map_err(|e| LabError::Serde(e.to_string()))?;
    atomic_write(&sidecar_path(path), json.as_bytes())
}

pub fn read_complex_field(path: &Path) -> Result<(ComplexFieldHeader, Vec<C64>)> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 16 != 0 {
        return Err(LabError::Serde("complex field length not a multiple of 16".into()));
    }
    let values: Vec<C64> = bytes
        .chunks_exact(16)
        .map(|c| {
            num_complex::Complex::new(
                f64::from_le_bytes(c[0..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..16].try_into().unwrap()),
            )
        })
        .collect();
    let json = std::fs::read_to_string(sidecar_path(path))?;
    let header: ComplexFieldHeader =
        serde_json::from_str(&json).map_err(|e| LabError::Serde(e.to_string()))?;
    Ok((header, values))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapHeader {
    pub kind: String,
    pub rows: usize,
    pub cols: usize,
    pub domain_order: f64,
    pub codomain_order: f64,
    pub sigma_parts: usize,
}

/// Boundary operator map: column-major interleaved re/im matrix + JSON header
/// declaring kind, patches and orders.
pub fn write_map(path: &Path, map: &BoundaryOperatorMap) -> Result<()> {
    let rows = map.sigma.n_nodes();
    let cols = map.n_columns();
    let mut bytes = Vec::with_capacity(rows * cols * 16);
    for col in &map.columns {
        for v in col {
            bytes.extend_from_slice(&v.re.to_le_bytes());
            bytes.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    atomic_write(path, &bytes)?;
    let header = MapHeader {
        kind: format!("{:?}", map.kind),
        rows,
        cols,
        domain_order: map.kind.domain_order(),
        codomain_order: map.kind.codomain_order(),
        sigma_parts: map.sigma.parts().len(),
    };
    let json = serde_json::to_string_pretty(&header).map_err(|e| LabError::Serde(e.to_string()))?;
    atomic_write(&sidecar_path(path), json.as_bytes())
}

/// Spectra export: CSV of (k, lambda_k, residual).
pub fn spectrum_csv(sd: &SpectralData) -> String {
    let mut out = String::from("k,lambda_k,residual\n");
    for (k, (val, res)) in sd.eigenvalues.iter().zip(&sd.residuals).enumerate() {
        out.push_str(&format!("{},{},{}\n", k + 1, val, res));
    }
    out
}

/// Deterministic CSV assembly: fixed column order, shortest-roundtrip floats.
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            header: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, cells: Vec<String>) {
        assert_eq!(cells.len(), self.header.len(), "csv row arity mismatch");
        self.rows.push(cells);
    }

    pub fn columns(&self) -> &[String] {
        &self.header
    }

    pub fn to_string(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_string().as_bytes())
    }
}

/// Format an f64 for CSV: shortest round-trip representation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
