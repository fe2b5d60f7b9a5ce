//! Forward Darcy model: cell-centered finite-volume pressure solver,
//! flow-based upscaling, observation extraction, and the Gaussian
//! log-likelihood.
//!
//! The PDE is `-div(k grad p) = 0` on a rectangle with Dirichlet pressures
//! on the left and right edges and no-flow top and bottom. The five-point
//! scheme uses harmonic face transmissibilities, which keeps the discrete
//! solution exact for piecewise-constant permeability layered along the flow
//! axis; boundary faces use half-cell distances. The resulting SPD system is
//! solved by Jacobi-preconditioned conjugate gradients.

use std::io::BufRead;
use std::path::Path;

use crate::error::{MsmError, Result};
use crate::field::ScalarField;
use crate::ioutil;
use crate::mesh::CartesianGrid;

/// Default relative residual tolerance for the pressure solve.
pub const DEFAULT_SOLVER_TOL: f64 = 1e-10;

/// Dirichlet pressures on the left and right edges; the remaining edges are
/// no-flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySpec {
    pub left_pressure: f64,
    pub right_pressure: f64,
}

impl BoundarySpec {
    pub fn new(left_pressure: f64, right_pressure: f64) -> Result<Self> {
        if !(left_pressure.is_finite() && right_pressure.is_finite()) {
            return Err(MsmError::Argument(
                "boundary pressures must be finite".into(),
            ));
        }
        Ok(BoundarySpec { left_pressure, right_pressure })
    }

    /// Unit pressure drop from left to right.
    pub fn unit_drop() -> Self {
        BoundarySpec { left_pressure: 1.0, right_pressure: 0.0 }
    }
}

/// Assembled five-point system. Transmissibilities are stored per face;
/// the diagonal already includes the Dirichlet boundary terms.
struct System {
    nx: usize,
    ny: usize,
    diag: Vec<f64>,
    /// Interior x-face between `(i, j)` and `(i+1, j)` at `j * (nx-1) + i`.
    tx: Vec<f64>,
    /// Interior y-face between `(i, j)` and `(i, j+1)` at `j * nx + i`.
    ty: Vec<f64>,
    /// Boundary transmissibilities of the left and right Dirichlet columns.
    t_left: Vec<f64>,
    t_right: Vec<f64>,
    rhs: Vec<f64>,
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

fn check_permeability(k: &ScalarField, what: &str) -> Result<()> {
    if let Some(bad) = k.values().iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(MsmError::Data(format!(
            "{what} must be positive and finite, cell {bad} holds {}",
            k.value(bad)
        )));
    }
    Ok(())
}

fn assemble(kx: &ScalarField, ky: &ScalarField, bc: &BoundarySpec) -> Result<System> {
    if kx.grid() != ky.grid() {
        return Err(MsmError::Argument(
            "directional permeability fields must share one grid".into(),
        ));
    }
    check_permeability(kx, "x-permeability")?;
    check_permeability(ky, "y-permeability")?;
    let g = *kx.grid();
    let (nx, ny) = (g.nx, g.ny);
    let n = g.n_cells();
    let mut sys = System {
        nx,
        ny,
        diag: vec![0.0; n],
        tx: vec![0.0; (nx - 1) * ny],
        ty: vec![0.0; nx * (ny - 1)],
        t_left: vec![0.0; ny],
        t_right: vec![0.0; ny],
        rhs: vec![0.0; n],
    };
    for j in 0..ny {
        for i in 0..nx - 1 {
            let t = harmonic(kx.at(i, j), kx.at(i + 1, j)) * g.hy / g.hx;
            sys.tx[j * (nx - 1) + i] = t;
            sys.diag[g.index(i, j)] += t;
            sys.diag[g.index(i + 1, j)] += t;
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let t = harmonic(ky.at(i, j), ky.at(i, j + 1)) * g.hx / g.hy;
            sys.ty[j * nx + i] = t;
            sys.diag[g.index(i, j)] += t;
            sys.diag[g.index(i, j + 1)] += t;
        }
    }
    for j in 0..ny {
        // Half-cell distance to the Dirichlet edge.
        let tl = 2.0 * kx.at(0, j) * g.hy / g.hx;
        let tr = 2.0 * kx.at(nx - 1, j) * g.hy / g.hx;
        sys.t_left[j] = tl;
        sys.t_right[j] = tr;
        sys.diag[g.index(0, j)] += tl;
        sys.diag[g.index(nx - 1, j)] += tr;
        sys.rhs[g.index(0, j)] += tl * bc.left_pressure;
        sys.rhs[g.index(nx - 1, j)] += tr * bc.right_pressure;
    }
    Ok(sys)
}

impl System {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        for c in 0..x.len() {
            y[c] = self.diag[c] * x[c];
        }
        for j in 0..ny {
            for i in 0..nx - 1 {
                let t = self.tx[j * (nx - 1) + i];
                let a = j * nx + i;
                y[a] -= t * x[a + 1];
                y[a + 1] -= t * x[a];
            }
        }
        for j in 0..ny.saturating_sub(1) {
            for i in 0..nx {
                let t = self.ty[j * nx + i];
                let a = j * nx + i;
                y[a] -= t * x[a + nx];
                y[a + nx] -= t * x[a];
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned CG on the assembled system.
fn cg_solve(sys: &System, tol: f64) -> Result<Vec<f64>> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(MsmError::Argument(format!(
            "solver tolerance must lie in (0, 1), got {tol}"
        )));
    }
    let n = sys.rhs.len();
    let b_norm = dot(&sys.rhs, &sys.rhs).sqrt();
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let max_iter = 200 + 50 * (sys.nx + sys.ny);
    let mut x = vec![0.0; n];
    let mut r = sys.rhs.clone();
    let mut z: Vec<f64> = r.iter().zip(&sys.diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    for _ in 0..max_iter {
        sys.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(MsmError::Numerical(
                "conjugate gradients lost positive definiteness".into(),
            ));
        }
        let alpha = rz / pq;
        for c in 0..n {
            x[c] += alpha * p[c];
            r[c] -= alpha * q[c];
        }
        if dot(&r, &r).sqrt() <= tol * b_norm {
            return Ok(x);
        }
        for c in 0..n {
            z[c] = r[c] / sys.diag[c];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for c in 0..n {
            p[c] = z[c] + beta * p[c];
        }
    }
    Err(MsmError::Numerical(format!(
        "pressure solve did not reach tolerance {tol} within {max_iter} iterations"
    )))
}

/// Solves the pressure equation for an isotropic permeability field.
pub fn solve_pressure(k: &ScalarField, bc: &BoundarySpec, tol: f64) -> Result<ScalarField> {
    solve_pressure_directional(k, k, bc, tol)
}

/// Solves the pressure equation with separate x- and y-permeabilities
/// (diagonal tensor), as produced by [`upscale`].
pub fn solve_pressure_directional(
    kx: &ScalarField,
    ky: &ScalarField,
    bc: &BoundarySpec,
    tol: f64,
) -> Result<ScalarField> {
    let sys = assemble(kx, ky, bc)?;
    let p = cg_solve(&sys, tol)?;
    ScalarField::new(*kx.grid(), p)
}

/// Total flux entering through the left edge and leaving through the right
/// edge. For a converged solve the two agree (discrete mass conservation).
pub fn boundary_fluxes(
    p: &ScalarField,
    kx: &ScalarField,
    bc: &BoundarySpec,
) -> Result<(f64, f64)> {
    if p.grid() != kx.grid() {
        return Err(MsmError::Argument(
            "pressure and permeability grids must match".into(),
        ));
    }
    check_permeability(kx, "x-permeability")?;
    let g = p.grid();
    let mut influx = 0.0;
    let mut outflux = 0.0;
    for j in 0..g.ny {
        let tl = 2.0 * kx.at(0, j) * g.hy / g.hx;
        let tr = 2.0 * kx.at(g.nx - 1, j) * g.hy / g.hx;
        influx += tl * (bc.left_pressure - p.at(0, j));
        outflux += tr * (p.at(g.nx - 1, j) - bc.right_pressure);
    }
    Ok((influx, outflux))
}

fn check_refinement(fine: &CartesianGrid, coarse: &CartesianGrid) -> Result<(usize, usize)> {
    if fine.x0 != coarse.x0 || fine.y0 != coarse.y0 || fine.x1 != coarse.x1 || fine.y1 != coarse.y1
    {
        return Err(MsmError::Argument(
            "fine and coarse grids must cover the same domain".into(),
        ));
    }
    if fine.nx % coarse.nx != 0 || fine.ny % coarse.ny != 0 {
        return Err(MsmError::Argument(format!(
            "coarse grid {} x {} must divide fine grid {} x {}",
            coarse.nx, coarse.ny, fine.nx, fine.ny
        )));
    }
    Ok((fine.nx / coarse.nx, fine.ny / coarse.ny))
}

/// Extracts the fine permeability block under one coarse cell onto a local
/// grid with origin zero.
fn extract_block(k: &ScalarField, ci: usize, cj: usize, fnx: usize, fny: usize) -> ScalarField {
    let g = k.grid();
    let local =
        CartesianGrid::new(fnx, fny, 0.0, 0.0, fnx as f64 * g.hx, fny as f64 * g.hy).unwrap();
    let mut vals = Vec::with_capacity(fnx * fny);
    for lj in 0..fny {
        for li in 0..fnx {
            vals.push(k.at(ci * fnx + li, cj * fny + lj));
        }
    }
    ScalarField::new(local, vals).unwrap()
}

fn transpose_block(k: &ScalarField) -> ScalarField {
    let g = k.grid();
    let local = CartesianGrid::new(g.ny, g.nx, 0.0, 0.0, g.y1, g.x1).unwrap();
    let mut vals = Vec::with_capacity(g.n_cells());
    for lj in 0..g.nx {
        for li in 0..g.ny {
            vals.push(k.at(lj, li));
        }
    }
    ScalarField::new(local, vals).unwrap()
}

/// Effective x-permeability of a block from a unit-pressure-drop flow solve
/// with sealed lateral sides: `k_eff = Q L / (A dp)`.
fn effective_kx(block: &ScalarField) -> Result<f64> {
    let g = block.grid();
    let bc = BoundarySpec::unit_drop();
    let p = solve_pressure(block, &bc, 1e-12)?;
    let (influx, outflux) = boundary_fluxes(&p, block, &bc)?;
    let q = 0.5 * (influx + outflux);
    Ok(q * (g.x1 - g.x0) / (g.y1 - g.y0))
}

/// Flow-based upscaling of a fine isotropic permeability field to a coarse
/// grid: each coarse cell gets directional effective permeabilities from
/// local pressure-drop solves (x and y) with no-flow lateral sides. Exact
/// for laminates: arithmetic mean parallel to layering, harmonic across.
pub fn upscale(
    fine_k: &ScalarField,
    coarse: &CartesianGrid,
) -> Result<(ScalarField, ScalarField)> {
    check_permeability(fine_k, "fine permeability")?;
    let (fnx, fny) = check_refinement(fine_k.grid(), coarse)?;
    let mut kxx = ScalarField::zeros(*coarse);
    let mut kyy = ScalarField::zeros(*coarse);
    for cj in 0..coarse.ny {
        for ci in 0..coarse.nx {
            let block = extract_block(fine_k, ci, cj, fnx, fny);
            let cell = coarse.index(ci, cj);
            kxx.values_mut()[cell] = effective_kx(&block)?;
            kyy.values_mut()[cell] = effective_kx(&transpose_block(&block))?;
        }
    }
    Ok((kxx, kyy))
}

/// Averages a fine cell field onto a coarse grid covering the same domain
/// (plain mean over the fine cells under each coarse cell).
pub fn average_to_coarse(fine: &ScalarField, coarse: &CartesianGrid) -> Result<ScalarField> {
    let (fnx, fny) = check_refinement(fine.grid(), coarse)?;
    let mut out = ScalarField::zeros(*coarse);
    let scale = 1.0 / (fnx * fny) as f64;
    for cj in 0..coarse.ny {
        for ci in 0..coarse.nx {
            let mut acc = 0.0;
            for lj in 0..fny {
                for li in 0..fnx {
                    acc += fine.at(ci * fnx + li, cj * fny + lj);
                }
            }
            out.values_mut()[coarse.index(ci, cj)] = acc * scale;
        }
    }
    Ok(out)
}

/// Checkerboard half of the grid used for observations. Cell `(0, 0)` is
/// red; black cells satisfy `(i + j) mod 2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Red,
    Black,
}

/// Pressure values sampled on one checkerboard color, tagged with the grid
/// dimensions they came from. Indices are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationVector {
    pub nx: usize,
    pub ny: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl ObservationVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Serializes as CSV with an `i,j,pressure` header, rows in index order.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("i,j,pressure\n");
        for (&c, &v) in self.indices.iter().zip(&self.values) {
            let _ = writeln!(out, "{},{},{v}", c % self.nx, c / self.nx);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        ioutil::write_atomic(path, self.to_csv().as_bytes())
    }

    /// Parses the observation CSV for a grid of the given dimensions.
    /// Requires in-range cells, strictly increasing flat indices, and finite
    /// pressures; the header row is optional.
    pub fn parse_csv<R: BufRead>(nx: usize, ny: usize, reader: R) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(MsmError::Argument("grid dimensions must be positive".into()));
        }
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut last: Option<usize> = None;
        for (line_no, line) in reader.lines().enumerate() {
            let line_no = line_no + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if line_no == 1 && trimmed.chars().next().is_some_and(|c| c.is_alphabetic()) {
                continue;
            }
            let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if cols.len() != 3 {
                return Err(MsmError::parse(
                    line_no,
                    format!("expected 3 columns, got {}", cols.len()),
                ));
            }
            let i: usize = cols[0]
                .parse()
                .map_err(|_| MsmError::parse(line_no, format!("invalid i {:?}", cols[0])))?;
            let j: usize = cols[1]
                .parse()
                .map_err(|_| MsmError::parse(line_no, format!("invalid j {:?}", cols[1])))?;
            if i >= nx || j >= ny {
                return Err(MsmError::parse(
                    line_no,
                    format!("cell ({i}, {j}) outside grid {nx} x {ny}"),
                ));
            }
            let v: f64 = cols[2]
                .parse()
                .map_err(|_| MsmError::parse(line_no, format!("invalid pressure {:?}", cols[2])))?;
            if !v.is_finite() {
                return Err(MsmError::parse(line_no, format!("non-finite pressure {v}")));
            }
            let flat = j * nx + i;
            if let Some(prev) = last {
                if flat <= prev {
                    return Err(MsmError::parse(
                        line_no,
                        "rows must be sorted by cell with no duplicates".to_string(),
                    ));
                }
            }
            last = Some(flat);
            indices.push(flat);
            values.push(v);
        }
        Ok(ObservationVector { nx, ny, indices, values })
    }

    pub fn read_csv_path(grid: &CartesianGrid, path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::parse_csv(grid.nx, grid.ny, std::io::BufReader::new(file))
    }
}

/// Samples a pressure field on one checkerboard color.
pub fn observe(p: &ScalarField, parity: Parity) -> ObservationVector {
    let g = p.grid();
    let want = match parity {
        Parity::Red => 0,
        Parity::Black => 1,
    };
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for c in 0..g.n_cells() {
        let (i, j) = g.ij(c);
        if (i + j) % 2 == want {
            indices.push(c);
            values.push(p.value(c));
        }
    }
    ObservationVector { nx: g.nx, ny: g.ny, indices, values }
}

/// Sum of squared differences between two observation vectors taken on the
/// same grid and pattern.
pub fn misfit(sim: &ObservationVector, reference: &ObservationVector) -> Result<f64> {
    if sim.nx != reference.nx || sim.ny != reference.ny || sim.indices != reference.indices {
        return Err(MsmError::Data(
            "observation vectors cover different cells".into(),
        ));
    }
    Ok(sim
        .values
        .iter()
        .zip(&reference.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Gaussian log-likelihood `-sum (sim - ref)^2 / (2 sigma2)`, up to the
/// constant normalization that cancels in acceptance ratios.
pub fn log_likelihood(
    sim: &ObservationVector,
    reference: &ObservationVector,
    sigma2: f64,
) -> Result<f64> {
    // +inf is allowed: it is the flat likelihood (log-likelihood exactly
    // -0.0 for any finite misfit), under which a chain samples its prior.
    if sigma2.is_nan() || !(sigma2 > 0.0) {
        return Err(MsmError::Argument(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }
    Ok(-misfit(sim, reference)? / (2.0 * sigma2))
}
