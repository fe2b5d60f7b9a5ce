//! Karhunen-Loeve expansion of a Gaussian random field on a Cartesian grid.
//!
//! The prior log-permeability field is a zero-mean Gaussian field with the
//! squared-exponential covariance
//!
//! ```text
//! R(x, y) = sigma^2 exp(-(x1-y1)^2 / (2 Lx^2) - (x2-y2)^2 / (2 Ly^2))
//! ```
//!
//! discretized with midpoint quadrature at cell centers: the discrete
//! operator is `C[c][d] = R(center_c, center_d) * hx * hy`. Its eigenpairs
//! give the truncated expansion `Y(c) = sum_i sqrt(lambda_i) theta_i phi_i(c)`
//! with `theta_i` i.i.d. standard normal. Eigenfunctions are normalized so
//! that `hx hy * sum_c phi_i(c) phi_j(c) = delta_ij`, which makes the field
//! variance independent of grid resolution.
//!
//! Eigenpairs are computed by blocked subspace iteration with an
//! oversampling buffer: each sweep applies the operator once to the whole
//! block, Rayleigh-Ritz-projects onto the block span, and measures
//! convergence by the Ritz residuals of the leading pairs. The iteration is
//! deterministic (fixed-seed start block), so identical inputs give
//! bit-identical bases across runs.

use std::io::BufRead;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, QR};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{MsmError, Result};
use crate::field::ScalarField;
use crate::ioutil;
use crate::mesh::CartesianGrid;

/// Default cap on grid cells accepted by [`assemble_covariance`]: the dense
/// operator needs `n^2` doubles, so 16384 cells is already a 2 GiB matrix.
pub const DEFAULT_CELL_CAP: usize = 16384;

/// Parameters of the squared-exponential covariance kernel. Infinite
/// correlation lengths are accepted and give the constant kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceSpec {
    pub sigma2: f64,
    pub lx: f64,
    pub ly: f64,
}

impl CovarianceSpec {
    pub fn new(sigma2: f64, lx: f64, ly: f64) -> Result<Self> {
        if !sigma2.is_finite() || sigma2 <= 0.0 {
            return Err(MsmError::Argument(format!(
                "variance sigma2 must be finite and positive, got {sigma2}"
            )));
        }
        if lx.is_nan() || ly.is_nan() || lx <= 0.0 || ly <= 0.0 {
            return Err(MsmError::Argument(format!(
                "correlation lengths must be positive, got ({lx}, {ly})"
            )));
        }
        Ok(CovarianceSpec { sigma2, lx, ly })
    }

    /// Isotropic kernel.
    pub fn isotropic(sigma2: f64, l: f64) -> Result<Self> {
        Self::new(sigma2, l, l)
    }
}

/// Kernel value between two points.
pub fn covariance(a: (f64, f64), b: (f64, f64), spec: &CovarianceSpec) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    spec.sigma2 * (-dx * dx / (2.0 * spec.lx * spec.lx) - dy * dy / (2.0 * spec.ly * spec.ly)).exp()
}

/// Dense discrete covariance operator on a grid.
#[derive(Debug, Clone)]
pub struct CovarianceOperator {
    grid: CartesianGrid,
    spec: CovarianceSpec,
    matrix: DMatrix<f64>,
    weight: f64,
}

impl CovarianceOperator {
    pub fn grid(&self) -> &CartesianGrid {
        &self.grid
    }

    pub fn spec(&self) -> &CovarianceSpec {
        &self.spec
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Midpoint quadrature weight `hx * hy`.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Total spectral mass `sigma^2 * hx * hy * n`, i.e. the quadrature
    /// approximation of the integrated pointwise variance. Energy fractions
    /// are measured against this, not against a partial eigenvalue sum.
    pub fn total_trace(&self) -> f64 {
        self.spec.sigma2 * self.weight * self.grid.n_cells() as f64
    }
}

/// Assembles the covariance operator with the default cell cap.
pub fn assemble_covariance(grid: &CartesianGrid, spec: &CovarianceSpec) -> Result<CovarianceOperator> {
    assemble_covariance_capped(grid, spec, DEFAULT_CELL_CAP)
}

/// Assembles the covariance operator, refusing grids with more than
/// `cell_cap` cells.
pub fn assemble_covariance_capped(
    grid: &CartesianGrid,
    spec: &CovarianceSpec,
    cell_cap: usize,
) -> Result<CovarianceOperator> {
    let n = grid.n_cells();
    if n > cell_cap {
        return Err(MsmError::Resource(format!(
            "grid has {n} cells, dense covariance assembly is capped at {cell_cap}"
        )));
    }
    // The kernel separates into per-axis factors that only depend on index
    // offsets, so the n x n fill needs one exp() per distinct offset.
    let scale = spec.sigma2 * grid.hx * grid.hy;
    let ex: Vec<f64> = (0..grid.nx)
        .map(|d| {
            let dx = d as f64 * grid.hx;
            (-dx * dx / (2.0 * spec.lx * spec.lx)).exp()
        })
        .collect();
    let ey: Vec<f64> = (0..grid.ny)
        .map(|d| {
            let dy = d as f64 * grid.hy;
            (-dy * dy / (2.0 * spec.ly * spec.ly)).exp()
        })
        .collect();
    let mut matrix = DMatrix::<f64>::zeros(n, n);
    for c in 0..n {
        let (ci, cj) = grid.ij(c);
        for d in c..n {
            let (di, dj) = grid.ij(d);
            let v = scale * ex[ci.abs_diff(di)] * ey[cj.abs_diff(dj)];
            matrix[(c, d)] = v;
            matrix[(d, c)] = v;
        }
    }
    Ok(CovarianceOperator {
        grid: *grid,
        spec: *spec,
        matrix,
        weight: grid.hx * grid.hy,
    })
}

/// Controls for the blocked subspace iteration.
#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Extra block columns beyond the requested count. The effective buffer
    /// is `max(oversample, k / 2)`; a wider buffer trades memory for fewer
    /// sweeps.
    pub oversample: usize,
    pub max_sweeps: usize,
    /// Convergence threshold: every requested Ritz pair must satisfy
    /// `|C u - lambda u| <= rel_tol * lambda_1`.
    pub rel_tol: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { oversample: 16, max_sweeps: 600, rel_tol: 1e-11 }
    }
}

/// Leading eigenpairs of a covariance operator, eigenvalues descending,
/// eigenfunctions quadrature-orthonormal with the largest-magnitude entry of
/// each made positive.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub grid: CartesianGrid,
    pub spec: CovarianceSpec,
    /// Quadrature weight of the source operator.
    pub weight: f64,
    /// Analytic total spectral mass of the source operator.
    pub total_trace: f64,
    pub values: Vec<f64>,
    /// `n_cells x k`; column `i` holds eigenfunction `phi_i` at cell centers.
    pub functions: DMatrix<f64>,
}

impl EigenPairs {
    pub fn n_modes(&self) -> usize {
        self.values.len()
    }
}

/// Makes the largest-magnitude entry of a vector positive; ties resolve to
/// the first maximal entry in scan order.
fn fix_sign_column(col: &mut [f64]) {
    let mut best = 0usize;
    let mut mag = -1.0;
    for (idx, &v) in col.iter().enumerate() {
        if v.abs() > mag {
            mag = v.abs();
            best = idx;
        }
    }
    if col[best] < 0.0 {
        for v in col.iter_mut() {
            *v = -*v;
        }
    }
}

/// Eigendecomposition of a small symmetric matrix, columns sorted by
/// descending eigenvalue.
pub(crate) fn sorted_symmetric_eigen(b: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let dim = b.nrows();
    let se = b.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    for i in 0..dim {
        if !se.eigenvalues[i].is_finite() {
            return Err(MsmError::Numerical(
                "projected eigenproblem produced a non-finite eigenvalue".into(),
            ));
        }
    }
    order.sort_by(|&a, &b| se.eigenvalues[b].total_cmp(&se.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vectors = DMatrix::<f64>::zeros(dim, dim);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &se.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Computes the `k` leading eigenpairs of `op` by blocked subspace
/// iteration. Deterministic for fixed inputs.
pub fn eigendecompose(op: &CovarianceOperator, k: usize, opts: &EigenOptions) -> Result<EigenPairs> {
    let n = op.grid.n_cells();
    if k == 0 || k > n {
        return Err(MsmError::Argument(format!(
            "requested {k} eigenpairs from an operator of dimension {n}"
        )));
    }
    if !(opts.rel_tol > 0.0) || opts.max_sweeps == 0 {
        return Err(MsmError::Argument(
            "eigensolver tolerance and sweep cap must be positive".into(),
        ));
    }
    let kb = (k + opts.oversample.max(k / 2)).min(n);

    // Fixed-seed start block keeps the decomposition reproducible.
    let mut rng = ChaCha8Rng::seed_from_u64(0x4b4c_455f_4241_5349);
    let start = DMatrix::<f64>::from_fn(n, kb, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut q = QR::new(start).q();

    for _ in 0..opts.max_sweeps {
        let z = &op.matrix * &q;
        let mut b = q.transpose() * &z;
        // The projection is symmetric up to rounding; symmetrize before the
        // dense eigensolve.
        for r in 0..kb {
            for c in (r + 1)..kb {
                let v = 0.5 * (b[(r, c)] + b[(c, r)]);
                b[(r, c)] = v;
                b[(c, r)] = v;
            }
        }
        let (ritz_values, rotation) = sorted_symmetric_eigen(b)?;
        let ritz_vectors = &q * &rotation;
        let applied = z * &rotation;

        let lambda_1 = ritz_values[0].max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..k {
            let residual = (applied.column(i) - ritz_vectors.column(i) * ritz_values[i]).norm();
            worst = worst.max(residual);
        }
        if worst <= opts.rel_tol * lambda_1 {
            let mut functions = DMatrix::<f64>::zeros(n, k);
            let inv_sqrt_w = 1.0 / op.weight.sqrt();
            for i in 0..k {
                let mut col: Vec<f64> =
                    ritz_vectors.column(i).iter().map(|v| v * inv_sqrt_w).collect();
                fix_sign_column(&mut col);
                functions.set_column(i, &DVector::from_vec(col));
            }
            return Ok(EigenPairs {
                grid: op.grid,
                spec: op.spec,
                weight: op.weight,
                total_trace: op.total_trace(),
                values: ritz_values[..k].to_vec(),
                functions,
            });
        }
        // Power step: the next subspace is the image of the current one.
        // QR of the applied block re-orthonormalizes; rank-deficient
        // operators are fine because Householder Q stays orthonormal.
        q = QR::new(applied).q();
    }
    Err(MsmError::Numerical(format!(
        "subspace iteration did not reach rel_tol = {} within {} sweeps",
        opts.rel_tol, opts.max_sweeps
    )))
}

/// Truncation rule for building a [`KLBasis`] from computed eigenpairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// Keep exactly this many leading modes.
    FixedCount(usize),
    /// Keep the smallest leading set whose energy fraction reaches the
    /// target.
    EnergyTarget(f64),
}

/// Truncated Karhunen-Loeve basis: the sampling-facing subset of an
/// eigendecomposition.
#[derive(Debug, Clone)]
pub struct KLBasis {
    grid: CartesianGrid,
    values: Vec<f64>,
    scales: Vec<f64>,
    functions: DMatrix<f64>,
    energy: f64,
    total_trace: f64,
}

impl KLBasis {
    pub fn grid(&self) -> &CartesianGrid {
        &self.grid
    }

    pub fn n_modes(&self) -> usize {
        self.values.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    pub fn eigenvalue(&self, mode: usize) -> f64 {
        self.values[mode]
    }

    /// Eigenfunction values at cell centers, one entry per cell.
    pub fn eigenfunction(&self, mode: usize) -> Vec<f64> {
        self.functions.column(mode).iter().copied().collect()
    }

    pub fn eigenfunction_at(&self, mode: usize, cell: usize) -> f64 {
        self.functions[(cell, mode)]
    }

    /// Fraction of the total spectral mass captured by the kept modes.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn total_trace(&self) -> f64 {
        self.total_trace
    }

    /// Per-mode amplitudes `sqrt(lambda_i)`.
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Evaluates `Y(c) = sum_i sqrt(lambda_i) theta_i phi_i(c)`.
    pub fn synthesize_values(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.n_modes() {
            return Err(MsmError::Argument(format!(
                "coefficient vector has {} entries, basis has {} modes",
                theta.len(),
                self.n_modes()
            )));
        }
        let coeff = DVector::from_iterator(
            theta.len(),
            theta.iter().zip(&self.scales).map(|(t, s)| t * s),
        );
        let y = &self.functions * coeff;
        Ok(y.iter().copied().collect())
    }

    pub fn synthesize(&self, theta: &[f64]) -> Result<ScalarField> {
        ScalarField::new(self.grid, self.synthesize_values(theta)?)
    }
}

/// Truncates eigenpairs to a sampling basis.
///
/// Kept eigenvalues must be strictly positive; the energy fraction is taken
/// against the operator's analytic total trace.
pub fn truncate(pairs: &EigenPairs, rule: Truncation) -> Result<KLBasis> {
    let keep = match rule {
        Truncation::FixedCount(n) => {
            if n == 0 || n > pairs.n_modes() {
                return Err(MsmError::Argument(format!(
                    "cannot keep {n} modes, decomposition holds {}",
                    pairs.n_modes()
                )));
            }
            n
        }
        Truncation::EnergyTarget(tau) => {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(MsmError::Argument(format!(
                    "energy target must lie in (0, 1], got {tau}"
                )));
            }
            let target = tau * pairs.total_trace;
            let mut cum = 0.0;
            let mut keep = None;
            for (i, &v) in pairs.values.iter().enumerate() {
                cum += v;
                if cum >= target {
                    keep = Some(i + 1);
                    break;
                }
            }
            keep.ok_or_else(|| {
                MsmError::Numerical(format!(
                    "computed {} modes reach only {:.6} of the energy target {tau}; \
                     request more eigenpairs",
                    pairs.n_modes(),
                    pairs.values.iter().sum::<f64>() / pairs.total_trace
                ))
            })?
        }
    };
    let values = pairs.values[..keep].to_vec();
    if let Some(bad) = values.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(MsmError::Numerical(format!(
            "eigenvalue {} of the kept set is not strictly positive ({})",
            bad + 1,
            values[bad]
        )));
    }
    let energy = values.iter().sum::<f64>() / pairs.total_trace;
    let functions = pairs.functions.columns(0, keep).into_owned();
    Ok(KLBasis {
        grid: pairs.grid,
        scales: values.iter().map(|v| v.sqrt()).collect(),
        values,
        functions,
        energy,
        total_trace: pairs.total_trace,
    })
}

/// Coefficient vector of the multiscale prior, blocked by subdomain.
///
/// Subdomain `s` owns the contiguous slice `[s * n_c, (s + 1) * n_c)`;
/// within a subdomain, coordinates are ordered by descending local
/// eigenvalue and grouped into Gibbs blocks of `n_lb` consecutive
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaVector {
    values: Vec<f64>,
    m_c: usize,
    n_c: usize,
    n_lb: usize,
}

impl ThetaVector {
    pub fn zeros(m_c: usize, n_c: usize, n_lb: usize) -> Result<Self> {
        Self::from_values(vec![0.0; m_c * n_c], m_c, n_c, n_lb)
    }

    pub fn from_values(values: Vec<f64>, m_c: usize, n_c: usize, n_lb: usize) -> Result<Self> {
        if m_c == 0 || n_c == 0 || n_lb == 0 {
            return Err(MsmError::Argument(format!(
                "theta blocking must be positive, got m_c = {m_c}, n_c = {n_c}, n_lb = {n_lb}"
            )));
        }
        if n_c % n_lb != 0 {
            return Err(MsmError::Argument(format!(
                "per-subdomain coordinate count n_c = {n_c} must be divisible by \
                 the Gibbs block size n_lb = {n_lb}"
            )));
        }
        if values.len() != m_c * n_c {
            return Err(MsmError::Argument(format!(
                "theta vector has {} entries, blocking m_c = {m_c}, n_c = {n_c} needs {}",
                values.len(),
                m_c * n_c
            )));
        }
        Ok(ThetaVector { values, m_c, n_c, n_lb })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_subdomains(&self) -> usize {
        self.m_c
    }

    pub fn coords_per_subdomain(&self) -> usize {
        self.n_c
    }

    pub fn block_size(&self) -> usize {
        self.n_lb
    }

    pub fn blocks_per_subdomain(&self) -> usize {
        self.n_c / self.n_lb
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Coordinates of one subdomain.
    pub fn subdomain(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_c..(s + 1) * self.n_c]
    }

    /// Index range of Gibbs block `b` of subdomain `s` in the flat vector.
    pub fn block_range(&self, s: usize, b: usize) -> std::ops::Range<usize> {
        debug_assert!(s < self.m_c && b < self.blocks_per_subdomain());
        let start = s * self.n_c + b * self.n_lb;
        start..start + self.n_lb
    }

    pub fn block(&self, s: usize, b: usize) -> &[f64] {
        &self.values[self.block_range(s, b)]
    }

    pub fn block_mut(&mut self, s: usize, b: usize) -> &mut [f64] {
        let r = self.block_range(s, b);
        &mut self.values[r]
    }
}

const BASIS_CACHE_VERSION: &str = "msm-basis v1";
/// Caps on parsed cache contents, enforced before any large allocation.
const CACHE_MAX_MODES: usize = 16384;
const CACHE_MAX_ENTRIES: usize = 1 << 24;

/// Cache key: hash of everything the decomposition depends on.
pub fn basis_cache_key(grid: &CartesianGrid, spec: &CovarianceSpec, k: usize) -> String {
    let canon = format!(
        "grid={},{},{},{},{},{};spec={},{},{};k={k}",
        grid.nx, grid.ny, grid.x0, grid.y0, grid.x1, grid.y1, spec.sigma2, spec.lx, spec.ly
    );
    ioutil::sha256_hex(canon.as_bytes())
}

/// Serializes eigenpairs to the versioned cache format.
pub fn basis_cache_to_string(pairs: &EigenPairs, key: &str) -> String {
    use std::fmt::Write as _;
    let g = &pairs.grid;
    let n = g.n_cells();
    let k = pairs.n_modes();
    let mut out = String::new();
    let _ = writeln!(out, "{BASIS_CACHE_VERSION}");
    let _ = writeln!(out, "key {key}");
    let _ = writeln!(out, "grid {} {} {} {} {} {}", g.nx, g.ny, g.x0, g.y0, g.x1, g.y1);
    let _ = writeln!(out, "spec {} {} {}", pairs.spec.sigma2, pairs.spec.lx, pairs.spec.ly);
    let _ = writeln!(out, "modes {k}");
    let _ = writeln!(out, "weight {}", pairs.weight);
    let _ = writeln!(out, "trace {}", pairs.total_trace);
    out.push_str("values");
    for v in &pairs.values {
        let _ = write!(out, " {v}");
    }
    out.push('\n');
    out.push_str("phi\n");
    for c in 0..n {
        for i in 0..k {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", pairs.functions[(c, i)]);
        }
        out.push('\n');
    }
    out.push_str("end\n");
    out
}

fn cache_line<R: BufRead>(
    lines: &mut std::io::Lines<R>,
    line_no: usize,
    what: &str,
) -> Result<String> {
    match lines.next() {
        Some(line) => Ok(line?),
        None => Err(MsmError::parse(line_no, format!("missing {what}"))),
    }
}

fn cache_fields<'a>(line: &'a str, tag: &str, line_no: usize) -> Result<Vec<&'a str>> {
    let mut parts = line.split_whitespace();
    match parts.next() {
        Some(t) if t == tag => Ok(parts.collect()),
        _ => Err(MsmError::parse(line_no, format!("expected {tag:?} line"))),
    }
}

fn cache_f64(tok: &str, line_no: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| MsmError::parse(line_no, format!("invalid number {tok:?}")))?;
    if v.is_nan() {
        return Err(MsmError::parse(line_no, "NaN is not a valid cache value".to_string()));
    }
    Ok(v)
}

/// Parses the versioned basis cache format. Returns the stored key together
/// with the eigenpairs; callers decide whether the key matches their needs.
pub fn parse_basis_cache<R: BufRead>(reader: R) -> Result<(String, EigenPairs)> {
    let mut lines = reader.lines();
    let version = cache_line(&mut lines, 1, "version line")?;
    if version.trim_end() != BASIS_CACHE_VERSION {
        return Err(MsmError::parse(1, format!("unsupported version {version:?}")));
    }
    let key_line = cache_line(&mut lines, 2, "key line")?;
    let key_fields = cache_fields(&key_line, "key", 2)?;
    if key_fields.len() != 1
        || key_fields[0].len() != 64
        || !key_fields[0].bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
    {
        return Err(MsmError::parse(2, "key must be 64 lowercase hex digits".to_string()));
    }
    let key = key_fields[0].to_string();

    let grid_line = cache_line(&mut lines, 3, "grid line")?;
    let g = cache_fields(&grid_line, "grid", 3)?;
    if g.len() != 6 {
        return Err(MsmError::parse(3, "grid line needs 6 fields".to_string()));
    }
    let nx: usize = g[0].parse().map_err(|_| MsmError::parse(3, "invalid nx".to_string()))?;
    let ny: usize = g[1].parse().map_err(|_| MsmError::parse(3, "invalid ny".to_string()))?;
    let grid = CartesianGrid::new(
        nx,
        ny,
        cache_f64(g[2], 3)?,
        cache_f64(g[3], 3)?,
        cache_f64(g[4], 3)?,
        cache_f64(g[5], 3)?,
    )
    .map_err(|e| MsmError::parse(3, e.to_string()))?;

    let spec_line = cache_line(&mut lines, 4, "spec line")?;
    let s = cache_fields(&spec_line, "spec", 4)?;
    if s.len() != 3 {
        return Err(MsmError::parse(4, "spec line needs 3 fields".to_string()));
    }
    let spec = CovarianceSpec::new(cache_f64(s[0], 4)?, cache_f64(s[1], 4)?, cache_f64(s[2], 4)?)
        .map_err(|e| MsmError::parse(4, e.to_string()))?;

    let modes_line = cache_line(&mut lines, 5, "modes line")?;
    let m = cache_fields(&modes_line, "modes", 5)?;
    let k: usize = m
        .first()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| MsmError::parse(5, "invalid mode count".to_string()))?;
    if k == 0 || k > CACHE_MAX_MODES || k > grid.n_cells() {
        return Err(MsmError::parse(5, format!("mode count {k} out of range")));
    }
    let n = grid.n_cells();
    if n.checked_mul(k).filter(|&e| e <= CACHE_MAX_ENTRIES).is_none() {
        return Err(MsmError::Resource(format!(
            "cache declares {n} x {k} basis entries, cap is {CACHE_MAX_ENTRIES}"
        )));
    }

    let weight_line = cache_line(&mut lines, 6, "weight line")?;
    let w = cache_fields(&weight_line, "weight", 6)?;
    let weight = cache_f64(w.first().copied().unwrap_or(""), 6)?;
    if !(weight > 0.0 && weight.is_finite()) {
        return Err(MsmError::parse(6, "weight must be positive".to_string()));
    }

    let trace_line = cache_line(&mut lines, 7, "trace line")?;
    let t = cache_fields(&trace_line, "trace", 7)?;
    let total_trace = cache_f64(t.first().copied().unwrap_or(""), 7)?;
    if !(total_trace > 0.0 && total_trace.is_finite()) {
        return Err(MsmError::parse(7, "trace must be positive".to_string()));
    }

    let values_line = cache_line(&mut lines, 8, "values line")?;
    let v = cache_fields(&values_line, "values", 8)?;
    if v.len() != k {
        return Err(MsmError::parse(8, format!("expected {k} eigenvalues, got {}", v.len())));
    }
    let mut values = Vec::with_capacity(k);
    for tok in v {
        let x = cache_f64(tok, 8)?;
        if !x.is_finite() {
            return Err(MsmError::parse(8, format!("non-finite eigenvalue {tok}")));
        }
        values.push(x);
    }

    let phi_header = cache_line(&mut lines, 9, "phi header")?;
    if phi_header.trim_end() != "phi" {
        return Err(MsmError::parse(9, "expected \"phi\" line".to_string()));
    }
    let mut functions = DMatrix::<f64>::zeros(n, k);
    for c in 0..n {
        let line_no = 10 + c;
        let row = cache_line(&mut lines, line_no, "basis row")?;
        let mut count = 0usize;
        for tok in row.split_whitespace() {
            if count >= k {
                return Err(MsmError::parse(line_no, format!("row has more than {k} entries")));
            }
            let x = cache_f64(tok, line_no)?;
            if !x.is_finite() {
                return Err(MsmError::parse(line_no, format!("non-finite entry {tok}")));
            }
            functions[(c, count)] = x;
            count += 1;
        }
        if count != k {
            return Err(MsmError::parse(
                line_no,
                format!("row has {count} entries, expected {k}"),
            ));
        }
    }
    let end_line = cache_line(&mut lines, 10 + n, "end line")?;
    if end_line.trim_end() != "end" {
        return Err(MsmError::parse(10 + n, "expected \"end\" line".to_string()));
    }
    Ok((
        key,
        EigenPairs { grid, spec, weight, total_trace, values, functions },
    ))
}

/// Cache file path for a decomposition.
pub fn basis_cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("basis-{}.txt", &key[..16]))
}

/// Loads eigenpairs from the cache directory if a valid entry exists for
/// exactly this `(grid, spec, k)`; otherwise assembles, decomposes, and
/// (when a directory is given) writes the cache entry. Corrupt or
/// mismatched cache files are recomputed and overwritten.
pub fn load_or_compute(
    cache_dir: Option<&Path>,
    grid: &CartesianGrid,
    spec: &CovarianceSpec,
    k: usize,
    opts: &EigenOptions,
) -> Result<EigenPairs> {
    let key = basis_cache_key(grid, spec, k);
    if let Some(dir) = cache_dir {
        let path = basis_cache_path(dir, &key);
        if let Ok(file) = std::fs::File::open(&path) {
            if let Ok((stored_key, pairs)) = parse_basis_cache(std::io::BufReader::new(file)) {
                if stored_key == key
                    && pairs.grid == *grid
                    && pairs.spec == *spec
                    && pairs.n_modes() == k
                {
                    return Ok(pairs);
                }
            }
        }
    }
    let op = assemble_covariance(grid, spec)?;
    let pairs = eigendecompose(&op, k, opts)?;
    if let Some(dir) = cache_dir {
        let path = basis_cache_path(dir, &key);
        ioutil::write_atomic(&path, basis_cache_to_string(&pairs, &key).as_bytes())?;
    }
    Ok(pairs)
}
