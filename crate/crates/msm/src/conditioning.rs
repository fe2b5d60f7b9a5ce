//! Conditioning sampled fields on direct permeability measurements.
//!
//! A measured field is decomposed as `Y = Y_hat + Y_perp`: the kriged mean
//! `Y_hat` interpolates the measurements exactly, and sampled fluctuations
//! are projected onto the nullspace of the measurement operator so they
//! vanish at the measurement cells. Measurement locations snap to the
//! center of their containing cell, consistent with piecewise-constant
//! fields, which makes the conditioning exact at cell level.

use std::io::BufRead;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{MsmError, Result};
use crate::field::ScalarField;
use crate::ioutil;
use crate::kle::{covariance, CovarianceSpec, KLBasis, ThetaVector};
use crate::mesh::{CartesianGrid, DomainDecomposition};
use crate::sampler::{assemble_multiscale_field, SamplerConfig};

/// Cap on measurement rows accepted from CSV input.
pub const MEASUREMENT_ROW_CAP: usize = 65536;

const MEASUREMENT_HEADER: &str = "x,y,log_permeability";

/// Point measurements of the log-permeability field.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    locations: Vec<(f64, f64)>,
    values: Vec<f64>,
}

impl MeasurementSet {
    pub fn new(locations: Vec<(f64, f64)>, values: Vec<f64>) -> Result<Self> {
        if locations.is_empty() {
            return Err(MsmError::Data("measurement set is empty".into()));
        }
        if locations.len() != values.len() {
            return Err(MsmError::Argument(format!(
                "{} locations vs {} values",
                locations.len(),
                values.len()
            )));
        }
        for (a, &(x, y)) in locations.iter().enumerate() {
            if !(x.is_finite() && y.is_finite()) {
                return Err(MsmError::Data(format!("measurement {a} has non-finite location")));
            }
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(MsmError::Data(format!("measurement {bad} has non-finite value")));
        }
        Ok(MeasurementSet { locations, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn locations(&self) -> &[(f64, f64)] {
        &self.locations
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Serializes as CSV; the header line is part of the format.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from(MEASUREMENT_HEADER);
        out.push('\n');
        for (&(x, y), &v) in self.locations.iter().zip(&self.values) {
            let _ = writeln!(out, "{x},{y},{v}");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        ioutil::write_atomic(path, self.to_csv().as_bytes())
    }

    /// Parses the measurement CSV. The `x,y,log_permeability` header is
    /// required.
    pub fn parse_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(line) => line?,
            None => return Err(MsmError::parse(1, "empty measurement file")),
        };
        let normalized: String = header.split(',').map(str::trim).collect::<Vec<_>>().join(",");
        if normalized != MEASUREMENT_HEADER {
            return Err(MsmError::parse(
                1,
                format!("expected header {MEASUREMENT_HEADER:?}, got {header:?}"),
            ));
        }
        let mut locations = Vec::new();
        let mut values = Vec::new();
        for (line_no, line) in lines.enumerate() {
            let line_no = line_no + 2;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if locations.len() >= MEASUREMENT_ROW_CAP {
                return Err(MsmError::Resource(format!(
                    "more than {MEASUREMENT_ROW_CAP} measurement rows"
                )));
            }
            let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if cols.len() != 3 {
                return Err(MsmError::parse(
                    line_no,
                    format!("expected 3 columns, got {}", cols.len()),
                ));
            }
            let mut nums = [0.0f64; 3];
            for (slot, tok) in nums.iter_mut().zip(&cols) {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| MsmError::parse(line_no, format!("invalid number {tok:?}")))?;
                if !v.is_finite() {
                    return Err(MsmError::parse(line_no, format!("non-finite value {tok}")));
                }
                *slot = v;
            }
            locations.push((nums[0], nums[1]));
            values.push(nums[2]);
        }
        MeasurementSet::new(locations, values)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::parse_csv(std::io::BufReader::new(file))
    }

    /// Snaps each location to its containing cell. Rejects locations
    /// outside the domain and distinct measurements landing in one cell.
    pub fn snap_to_cells(&self, grid: &CartesianGrid) -> Result<Vec<usize>> {
        let mut cells = Vec::with_capacity(self.len());
        for (a, &(x, y)) in self.locations.iter().enumerate() {
            let cell = grid.cell_containing(x, y).ok_or_else(|| {
                MsmError::Data(format!("measurement {a} at ({x}, {y}) lies outside the domain"))
            })?;
            if cells.contains(&cell) {
                return Err(MsmError::Data(format!(
                    "measurement {a} shares cell {cell} with an earlier measurement"
                )));
            }
            cells.push(cell);
        }
        Ok(cells)
    }
}

/// Simple kriging of the zero-mean prior: `Y_hat(x) = r(x)^T C^-1 y` with
/// the kernel evaluated between snapped cell centers. Exact at the
/// measurement cells.
pub fn krige(
    meas: &MeasurementSet,
    grid: &CartesianGrid,
    spec: &CovarianceSpec,
) -> Result<ScalarField> {
    let cells = meas.snap_to_cells(grid)?;
    let m = cells.len();
    let mut c = DMatrix::<f64>::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            c[(a, b)] = covariance(grid.center(cells[a]), grid.center(cells[b]), spec);
        }
    }
    let chol = Cholesky::new(c).ok_or_else(|| {
        MsmError::Numerical(
            "measurement covariance is not positive definite; \
             measurement locations may be too close together"
            .into(),
        )
    })?;
    let weights = chol.solve(&DVector::from_column_slice(meas.values()));
    let mut out = ScalarField::zeros(*grid);
    for cell in 0..grid.n_cells() {
        let x = grid.center(cell);
        let mut acc = 0.0;
        for (a, &mc) in cells.iter().enumerate() {
            acc += weights[a] * covariance(x, grid.center(mc), spec);
        }
        out.values_mut()[cell] = acc;
    }
    Ok(out)
}

/// Measurement operator in coefficient space: row `a`, column `i` holds
/// `phi_i(cell_a) * sqrt(lambda_i)`, so `A theta` evaluates the synthesized
/// field at the measurement cells.
pub fn data_matrix(basis: &KLBasis, cells: &[usize]) -> Result<DMatrix<f64>> {
    if cells.is_empty() {
        return Err(MsmError::Argument("no measurement cells given".into()));
    }
    let n_cells = basis.grid().n_cells();
    let mut a = DMatrix::<f64>::zeros(cells.len(), basis.n_modes());
    for (row, &cell) in cells.iter().enumerate() {
        if cell >= n_cells {
            return Err(MsmError::Argument(format!(
                "measurement cell {cell} outside basis grid with {n_cells} cells"
            )));
        }
        for i in 0..basis.n_modes() {
            a[(row, i)] = basis.eigenfunction_at(i, cell) * basis.scales()[i];
        }
    }
    Ok(a)
}

/// Orthogonal projection onto the nullspace of a measurement operator:
/// `theta_hat = theta - A^T (A A^T)^+ A theta`. The pseudo-inverse handles
/// redundant measurement rows.
#[derive(Debug, Clone)]
pub struct Projector {
    a: DMatrix<f64>,
    pinv_aat: DMatrix<f64>,
}

impl Projector {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        let aat = &a * a.transpose();
        let m = aat.nrows();
        let se = aat.symmetric_eigen();
        let lam_max = se.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        if !lam_max.is_finite() {
            return Err(MsmError::Numerical(
                "measurement operator produced non-finite singular values".into(),
            ));
        }
        let cutoff = 1e-12 * lam_max;
        let mut pinv = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            let lam = se.eigenvalues[i];
            if lam > cutoff && lam > 0.0 {
                let v = se.eigenvectors.column(i);
                // pinv += v v^T / lam
                for r in 0..m {
                    for c in 0..m {
                        pinv[(r, c)] += v[r] * v[c] / lam;
                    }
                }
            }
        }
        Ok(Projector { a, pinv_aat: pinv })
    }

    pub fn n_measurements(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.a.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Applies the nullspace projection to a coefficient vector.
    pub fn apply(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.n_modes() {
            return Err(MsmError::Argument(format!(
                "coefficient vector has {} entries, operator has {} modes",
                theta.len(),
                self.n_modes()
            )));
        }
        let t = DVector::from_column_slice(theta);
        let residual = self.a.transpose() * (&self.pinv_aat * (&self.a * &t));
        Ok((t - residual).iter().copied().collect())
    }
}

/// Convenience wrapper over [`Projector`] for one-off projections.
pub fn project(theta: &[f64], a: &DMatrix<f64>) -> Result<Vec<f64>> {
    Projector::new(a.clone())?.apply(theta)
}

/// Conditioning data for sampling with a single global basis.
#[derive(Debug, Clone)]
pub struct Conditioning {
    kriged: ScalarField,
    cells: Vec<usize>,
    projector: Projector,
}

impl Conditioning {
    pub fn build(
        grid: &CartesianGrid,
        spec: &CovarianceSpec,
        basis: &KLBasis,
        meas: &MeasurementSet,
    ) -> Result<Self> {
        if basis.grid() != grid {
            return Err(MsmError::Argument("basis grid does not match target grid".into()));
        }
        let cells = meas.snap_to_cells(grid)?;
        let kriged = krige(meas, grid, spec)?;
        let projector = Projector::new(data_matrix(basis, &cells)?)?;
        Ok(Conditioning { kriged, cells, projector })
    }

    pub fn kriged(&self) -> &ScalarField {
        &self.kriged
    }

    pub fn measurement_cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn projector(&self) -> &Projector {
        &self.projector
    }

    /// Kriged mean plus the nullspace-projected fluctuation: honors every
    /// measurement at cell level for any coefficient vector.
    pub fn synthesize(&self, basis: &KLBasis, theta: &[f64]) -> Result<ScalarField> {
        let projected = self.projector.apply(theta)?;
        let fluct = basis.synthesize_values(&projected)?;
        let mut out = self.kriged.clone();
        for (v, f) in out.values_mut().iter_mut().zip(&fluct) {
            *v += f;
        }
        Ok(out)
    }
}

/// Synthesizes a conditioned field with an explicit kriged mean and
/// projector, for callers managing those pieces themselves.
pub fn conditioned_synthesize(
    basis: &KLBasis,
    theta: &[f64],
    kriged: &ScalarField,
    projector: &Projector,
) -> Result<ScalarField> {
    if kriged.grid() != basis.grid() {
        return Err(MsmError::Argument("kriged field grid does not match basis".into()));
    }
    let projected = projector.apply(theta)?;
    let fluct = basis.synthesize_values(&projected)?;
    let mut out = kriged.clone();
    for (v, f) in out.values_mut().iter_mut().zip(&fluct) {
        *v += f;
    }
    Ok(out)
}

/// Conditioning data for the multiscale sampler: a global kriged mean plus
/// one nullspace projector per subdomain holding measurements.
#[derive(Debug, Clone)]
pub struct MsmConditioning {
    kriged: ScalarField,
    projectors: Vec<Option<Projector>>,
    cells: Vec<usize>,
}

/// Builds per-subdomain conditioning: each measurement constrains only the
/// coefficient block of the subdomain containing it, through the local
/// basis evaluated at the measurement's local cell.
pub fn build_msm_conditioning(
    dd: &DomainDecomposition,
    local_basis: &KLBasis,
    spec: &CovarianceSpec,
    meas: &MeasurementSet,
) -> Result<MsmConditioning> {
    if *local_basis.grid() != dd.local_grid() {
        return Err(MsmError::Argument(
            "local basis grid does not match the decomposition's local grid".into(),
        ));
    }
    let grid = dd.grid();
    let cells = meas.snap_to_cells(grid)?;
    let kriged = krige(meas, grid, spec)?;
    let mut per_subdomain: Vec<Vec<usize>> = vec![Vec::new(); dd.n_subdomains()];
    for &cell in &cells {
        per_subdomain[dd.subdomain_of(cell)].push(dd.local_index_of(cell));
    }
    let mut projectors = Vec::with_capacity(dd.n_subdomains());
    for local_cells in &per_subdomain {
        if local_cells.is_empty() {
            projectors.push(None);
        } else {
            projectors.push(Some(Projector::new(data_matrix(local_basis, local_cells)?)?));
        }
    }
    Ok(MsmConditioning { kriged, projectors, cells })
}

impl MsmConditioning {
    pub fn kriged(&self) -> &ScalarField {
        &self.kriged
    }

    pub fn measurement_cells(&self) -> &[usize] {
        &self.cells
    }

    /// Projects each subdomain's coefficient block onto its measurement
    /// nullspace; blocks of measurement-free subdomains pass through.
    pub fn project_theta(&self, theta: &ThetaVector) -> Result<ThetaVector> {
        if theta.n_subdomains() != self.projectors.len() {
            return Err(MsmError::Argument(format!(
                "theta has {} subdomain blocks, conditioning has {}",
                theta.n_subdomains(),
                self.projectors.len()
            )));
        }
        let mut values = Vec::with_capacity(theta.len());
        for s in 0..theta.n_subdomains() {
            let block = theta.subdomain(s);
            match &self.projectors[s] {
                Some(p) => values.extend(p.apply(block)?),
                None => values.extend_from_slice(block),
            }
        }
        ThetaVector::from_values(
            values,
            theta.n_subdomains(),
            theta.coords_per_subdomain(),
            theta.block_size(),
        )
    }

    /// Conditioned multiscale synthesis: project blockwise, assemble the
    /// fluctuation field, add the kriged mean. Interface averaging is the
    /// caller's concern and runs after this step.
    pub fn assemble(
        &self,
        dd: &DomainDecomposition,
        basis: &KLBasis,
        theta: &ThetaVector,
    ) -> Result<ScalarField> {
        let projected = self.project_theta(theta)?;
        let mut field = assemble_multiscale_field(dd, basis, &projected)?;
        for (v, k) in field.values_mut().iter_mut().zip(self.kriged.values()) {
            *v += k;
        }
        Ok(field)
    }

    /// True when no measurement cell lies in the averaging band, i.e.
    /// averaging cannot disturb the conditioned values.
    pub fn band_clear(&self, dd: &DomainDecomposition, cfg: &SamplerConfig) -> Result<bool> {
        let band = dd.interface_band(cfg.hbar)?;
        Ok(self.cells.iter().all(|c| !band.contains(c)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kle::{
        assemble_covariance, eigendecompose, truncate, EigenOptions, Truncation,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn grid8() -> CartesianGrid {
        CartesianGrid::unit_square(8, 8).unwrap()
    }

    fn basis_on(grid: &CartesianGrid, spec: &CovarianceSpec, k: usize) -> KLBasis {
        let op = assemble_covariance(grid, spec).unwrap();
        truncate(
            &eigendecompose(&op, k, &EigenOptions::default()).unwrap(),
            Truncation::FixedCount(k),
        )
        .unwrap()
    }

    fn demo_measurements() -> MeasurementSet {
        MeasurementSet::new(
            vec![(0.1, 0.15), (0.6, 0.3), (0.35, 0.8)],
            vec![0.5, -1.0, 0.25],
        )
        .unwrap()
    }

    #[test]
    fn kriging_honors_measurements_at_snapped_cells() {
        let g = grid8();
        let spec = CovarianceSpec::isotropic(1.0, 0.2).unwrap();
        let meas = demo_measurements();
        let field = krige(&meas, &g, &spec).unwrap();
        let cells = meas.snap_to_cells(&g).unwrap();
        for (a, &cell) in cells.iter().enumerate() {
            assert!(
                (field.value(cell) - meas.values()[a]).abs() <= 1e-10,
                "measurement {a}: {} vs {}",
                field.value(cell),
                meas.values()[a]
            );
        }
        // Kriged fields decay toward the prior mean away from data.
        let far = g.cell_containing(0.99, 0.01).unwrap();
        assert!(field.value(far).abs() < 0.5);
    }

    #[test]
    fn snapping_rejects_outside_and_duplicate_cells() {
        let g = grid8();
        let outside =
            MeasurementSet::new(vec![(1.5, 0.5)], vec![0.0]).unwrap();
        assert!(outside.snap_to_cells(&g).is_err());
        // Two locations in the same cell (cells are 1/8 wide).
        let dup = MeasurementSet::new(vec![(0.01, 0.01), (0.05, 0.05)], vec![0.0, 1.0]).unwrap();
        assert!(dup.snap_to_cells(&g).is_err());
    }

    #[test]
    fn projection_zeroes_the_measurement_operator() {
        let g = grid8();
        let spec = CovarianceSpec::isotropic(1.0, 0.2).unwrap();
        let basis = basis_on(&g, &spec, 10);
        let cells = demo_measurements().snap_to_cells(&g).unwrap();
        let a = data_matrix(&basis, &cells).unwrap();
        let proj = Projector::new(a.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let theta: Vec<f64> = (0..10).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let hat = proj.apply(&theta).unwrap();
            let residual = &a * DVector::from_column_slice(&hat);
            assert!(residual.amax() <= 1e-12, "A theta_hat = {residual:?}");
            // Idempotence.
            let twice = proj.apply(&hat).unwrap();
            for (x, y) in hat.iter().zip(&twice) {
                assert!((x - y).abs() <= 1e-12);
            }
            // The removed component is orthogonal to the remainder.
            let dot: f64 = hat
                .iter()
                .zip(&theta)
                .map(|(h, t)| h * (t - h))
                .sum();
            assert!(dot.abs() <= 1e-10, "non-orthogonal projection, dot = {dot}");
        }
    }

    #[test]
    fn projection_handles_redundant_measurements() {
        // More measurements than modes: A A^T is singular and needs the
        // pseudo-inverse path; the projection must still zero A theta_hat.
        let g = grid8();
        let spec = CovarianceSpec::isotropic(1.0, 0.2).unwrap();
        let basis = basis_on(&g, &spec, 2);
        let cells = vec![0, 9, 18, 27];
        let a = data_matrix(&basis, &cells).unwrap();
        let proj = Projector::new(a.clone()).unwrap();
        let hat = proj.apply(&[1.5, -0.5]).unwrap();
        let residual = &a * DVector::from_column_slice(&hat);
        assert!(residual.amax() <= 1e-10);
    }

    #[test]
    fn conditioned_synthesis_honors_measurements_for_any_draw() {
        let g = grid8();
        let spec = CovarianceSpec::isotropic(1.0, 0.2).unwrap();
        let basis = basis_on(&g, &spec, 10);
        let meas = demo_measurements();
        let cond = Conditioning::build(&g, &spec, &basis, &meas).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..25 {
            let theta: Vec<f64> = (0..10).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let field = cond.synthesize(&basis, &theta).unwrap();
            for (a, &cell) in cond.measurement_cells().iter().enumerate() {
                assert!(
                    (field.value(cell) - meas.values()[a]).abs() <= 1e-8,
                    "draw violates measurement {a}"
                );
            }
        }
    }

    #[test]
    fn msm_conditioning_honors_measurements_blockwise() {
        let g = CartesianGrid::unit_square(16, 16).unwrap();
        let dd = DomainDecomposition::new(&g, 2, 2).unwrap();
        let spec = CovarianceSpec::isotropic(1.0, 0.2).unwrap();
        let local_basis = basis_on(&dd.local_grid(), &spec, 5);
        // One measurement per subdomain except subdomain 3, all away from
        // the interface band.
        let meas = MeasurementSet::new(
            vec![(0.15, 0.15), (0.85, 0.2), (0.2, 0.85)],
            vec![0.7, -0.4, 0.1],
        )
        .unwrap();
        let cond = build_msm_conditioning(&dd, &local_basis, &spec, &meas).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..15 {
            let vals: Vec<f64> = (0..20).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let theta = ThetaVector::from_values(vals, 4, 5, 1).unwrap();
            let field = cond.assemble(&dd, &local_basis, &theta).unwrap();
            for (a, &cell) in cond.measurement_cells().iter().enumerate() {
                assert!(
                    (field.value(cell) - meas.values()[a]).abs() <= 1e-8,
                    "draw violates measurement {a}"
                );
            }
        }
        // Subdomain 3 has no measurements: its block passes through.
        let vals: Vec<f64> = (0..20).map(|v| v as f64 * 0.1).collect();
        let theta = ThetaVector::from_values(vals.clone(), 4, 5, 1).unwrap();
        let projected = cond.project_theta(&theta).unwrap();
        assert_eq!(projected.subdomain(3), theta.subdomain(3));
        assert_ne!(projected.subdomain(0), theta.subdomain(0));
    }

    #[test]
    fn band_clearance_check() {
        let g = CartesianGrid::unit_square(16, 16).unwrap();
        let dd = DomainDecomposition::new(&g, 2, 2).unwrap();
        let spec = CovarianceSpec::isotropic(1.0, 0.2).unwrap();
        let local_basis = basis_on(&dd.local_grid(), &spec, 4);
        let cfg = SamplerConfig::new(
            0.5,
            1,
            0.05,
            crate::sampler::NeighborhoodShape::Circle,
            (0.1, 0.1),
            crate::sampler::AveragingRule::VariancePreserving,
            crate::sampler::AveragingScope::FullBand,
        )
        .unwrap();
        let clear = MeasurementSet::new(vec![(0.15, 0.15)], vec![0.0]).unwrap();
        let cond = build_msm_conditioning(&dd, &local_basis, &spec, &clear).unwrap();
        assert!(cond.band_clear(&dd, &cfg).unwrap());
        // A measurement right against the vertical interface sits in the
        // band.
        let banded = MeasurementSet::new(vec![(0.49, 0.15)], vec![0.0]).unwrap();
        let cond = build_msm_conditioning(&dd, &local_basis, &spec, &banded).unwrap();
        assert!(!cond.band_clear(&dd, &cfg).unwrap());
    }

    #[test]
    fn measurement_csv_round_trips_and_requires_header() {
        let meas = demo_measurements();
        let text = meas.to_csv();
        assert!(text.starts_with("x,y,log_permeability\n"));
        let back = MeasurementSet::parse_csv(std::io::Cursor::new(text.as_bytes())).unwrap();
        assert_eq!(back, meas);
        let headerless = "0.1,0.2,0.5\n";
        assert!(MeasurementSet::parse_csv(std::io::Cursor::new(headerless.as_bytes())).is_err());
        let cases: &[&str] = &[
            "",
            "x,y,log_permeability\n",
            "x,y,log_permeability\n0.1,0.2\n",
            "x,y,log_permeability\n0.1,0.2,nan\n",
            "x,y,log_permeability\n0.1,0.2,0.3,0.4\n",
            "x,y,log_permeability\na,0.2,0.3\n",
        ];
        for text in cases {
            assert!(
                MeasurementSet::parse_csv(std::io::Cursor::new(text.as_bytes())).is_err(),
                "expected rejection: {text:?}"
            );
        }
    }
}
