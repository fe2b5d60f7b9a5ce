//! Cell-centered scalar fields and the text snapshot format.
//!
//! Snapshot format: line 1 holds `nx ny`; the following `ny` lines hold `nx`
//! whitespace-separated values each, row `j = 0` first. Values are written
//! with Rust's shortest round-trip float formatting, so write/read cycles are
//! lossless and re-runs produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::io::BufRead;
use std::path::Path;

use crate::error::{MsmError, Result};
use crate::mesh::CartesianGrid;

/// Cap on `nx * ny` accepted from snapshot headers, to keep hostile inputs
/// from forcing huge allocations before any row data is seen.
pub const SNAPSHOT_CELL_CAP: usize = 1 << 24;

/// Scalar values attached to the cells of a grid, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: CartesianGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: CartesianGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(MsmError::Argument(format!(
                "field has {} values but grid has {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: CartesianGrid) -> Self {
        let n = grid.n_cells();
        ScalarField { grid, values: vec![0.0; n] }
    }

    pub fn constant(grid: CartesianGrid, value: f64) -> Self {
        let n = grid.n_cells();
        ScalarField { grid, values: vec![value; n] }
    }

    pub fn grid(&self) -> &CartesianGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Element-wise exponential, mapping a log-permeability field to the
    /// permeability field the flow solver consumes.
    pub fn exp(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|v| v.exp()).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Serializes to the text snapshot format.
    pub fn to_snapshot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.grid.nx, self.grid.ny);
        for j in 0..self.grid.ny {
            for i in 0..self.grid.nx {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{}", self.at(i, j));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        crate::ioutil::write_atomic(path, self.to_snapshot().as_bytes())
    }

    /// Reads a snapshot, attaching the parsed dimensions to a unit-square
    /// grid. Use [`read_snapshot_on`] when the target grid is known.
    pub fn read_snapshot<R: BufRead>(reader: R) -> Result<ScalarField> {
        let (nx, ny, values) = parse_snapshot(reader)?;
        let grid = CartesianGrid::unit_square(nx, ny)?;
        ScalarField::new(grid, values)
    }

    pub fn read_snapshot_path(path: &Path) -> Result<ScalarField> {
        let file = fs::File::open(path)?;
        Self::read_snapshot(std::io::BufReader::new(file))
    }
}

/// Reads a snapshot and validates its dimensions against `grid`.
pub fn read_snapshot_on<R: BufRead>(grid: &CartesianGrid, reader: R) -> Result<ScalarField> {
    let (nx, ny, values) = parse_snapshot(reader)?;
    if nx != grid.nx || ny != grid.ny {
        return Err(MsmError::Data(format!(
            "snapshot dimensions {nx} x {ny} do not match grid {} x {}",
            grid.nx, grid.ny
        )));
    }
    ScalarField::new(*grid, values)
}

/// Parses the snapshot text format, returning `(nx, ny, row-major values)`.
///
/// Rejects missing or trailing rows, rows of the wrong width, non-finite
/// values, and headers whose cell count exceeds [`SNAPSHOT_CELL_CAP`].
pub fn parse_snapshot<R: BufRead>(reader: R) -> Result<(usize, usize, Vec<f64>)> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(MsmError::parse(1, "empty snapshot")),
    };
    let mut parts = header.split_whitespace();
    let nx = parse_dim(parts.next(), 1, "nx")?;
    let ny = parse_dim(parts.next(), 1, "ny")?;
    if parts.next().is_some() {
        return Err(MsmError::parse(1, "header must hold exactly two integers"));
    }
    let n_cells = nx
        .checked_mul(ny)
        .filter(|&n| n <= SNAPSHOT_CELL_CAP)
        .ok_or_else(|| {
            MsmError::Resource(format!(
                "snapshot declares {nx} x {ny} cells, cap is {SNAPSHOT_CELL_CAP}"
            ))
        })?;
    let mut values = Vec::with_capacity(n_cells);
    for j in 0..ny {
        let line_no = j + 2;
        let row = match lines.next() {
            Some(line) => line?,
            None => return Err(MsmError::parse(line_no, format!("missing row {j}"))),
        };
        let mut count = 0usize;
        for tok in row.split_whitespace() {
            count += 1;
            if count > nx {
                return Err(MsmError::parse(
                    line_no,
                    format!("row {j} has more than {nx} values"),
                ));
            }
            let v: f64 = tok.parse().map_err(|_| {
                MsmError::parse(line_no, format!("invalid value {tok:?}"))
            })?;
            if !v.is_finite() {
                return Err(MsmError::parse(line_no, format!("non-finite value {tok}")));
            }
            values.push(v);
        }
        if count != nx {
            return Err(MsmError::parse(
                line_no,
                format!("row {j} has {count} values, expected {nx}"),
            ));
        }
    }
    // Trailing blank lines are tolerated; trailing data is not.
    for (extra, line) in lines.enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            return Err(MsmError::parse(
                ny + 2 + extra,
                "trailing data after final row",
            ));
        }
    }
    Ok((nx, ny, values))
}

fn parse_dim(tok: Option<&str>, line: usize, name: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| MsmError::parse(line, format!("missing {name}")))?;
    let v: usize = tok
        .parse()
        .map_err(|_| MsmError::parse(line, format!("invalid {name}: {tok:?}")))?;
    if v == 0 {
        return Err(MsmError::parse(line, format!("{name} must be positive")));
    }
    Ok(v)
}
