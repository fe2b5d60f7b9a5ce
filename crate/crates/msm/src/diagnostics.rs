//! Multi-chain convergence diagnostics: per-coordinate potential scale
//! reduction factors and the multivariate variant based on the largest
//! eigenvalue of the between/within covariance quotient.
//!
//! With `m` chains of `l` retained states each, the within-chain covariance
//! is `W = (1/(m(l-1))) sum_j sum_t dev dev^T` and the between-chain
//! covariance is `B = (l/(m-1)) sum_j (mean_j - mean)(mean_j - mean)^T`.
//! The per-coordinate factor is `sqrt(V_ii / W_ii)` with
//! `V = ((l-1)/l) W + (1 + 1/m) B/l`, and the multivariate factor is
//! `sqrt((l-1)/l + ((m+1)/m) lambda_max(W^{-1} B/l))`, computed through a
//! Cholesky similarity transform so the eigenproblem stays symmetric.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{MsmError, Result};
use crate::kle::sorted_symmetric_eigen;
use crate::mcmc::ChainRecord;

/// Borrowed row-major view of one chain's retained states.
#[derive(Debug, Clone, Copy)]
pub struct SampleMatrix<'a> {
    data: &'a [f64],
    pub rows: usize,
    pub dim: usize,
}

impl<'a> SampleMatrix<'a> {
    pub fn new(data: &'a [f64], rows: usize, dim: usize) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(MsmError::Argument("sample matrix must be non-empty".into()));
        }
        if data.len() != rows * dim {
            return Err(MsmError::Argument(format!(
                "sample data holds {} values, expected {} x {}",
                data.len(),
                rows,
                dim
            )));
        }
        Ok(SampleMatrix { data, rows, dim })
    }

    /// States after proposals `burn_in+1 ..= upto` of a recorded chain.
    pub fn from_record(record: &'a ChainRecord, burn_in: usize, upto: usize) -> Result<Self> {
        if upto > record.n_proposals() {
            return Err(MsmError::Argument(format!(
                "prefix {upto} exceeds the {} recorded proposals",
                record.n_proposals()
            )));
        }
        if upto < burn_in + 2 {
            return Err(MsmError::Argument(format!(
                "need at least two retained states, got burn-in {burn_in} with prefix {upto}"
            )));
        }
        SampleMatrix::new(record.theta_rows(burn_in + 1, upto), upto - burn_in, record.dim)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    fn mean(&self) -> DVector<f64> {
        let mut mean = DVector::zeros(self.dim);
        for r in 0..self.rows {
            for (i, v) in self.row(r).iter().enumerate() {
                mean[i] += v;
            }
        }
        mean / self.rows as f64
    }
}

/// Within-chain (`W`) and between-chain (`B`) covariance estimates.
pub fn chain_covariances(samples: &[SampleMatrix]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = samples.len();
    if m < 2 {
        return Err(MsmError::Argument(format!("need at least two chains, got {m}")));
    }
    let dim = samples[0].dim;
    let l = samples[0].rows;
    if l < 2 {
        return Err(MsmError::Argument(format!(
            "need at least two retained states per chain, got {l}"
        )));
    }
    for (j, s) in samples.iter().enumerate() {
        if s.dim != dim || s.rows != l {
            return Err(MsmError::Argument(format!(
                "chain {j} is {} x {}, expected {} x {}",
                s.rows, s.dim, l, dim
            )));
        }
    }

    let mut w = DMatrix::<f64>::zeros(dim, dim);
    let mut means = Vec::with_capacity(m);
    let mut dev = DVector::<f64>::zeros(dim);
    for s in samples {
        let mean = s.mean();
        for r in 0..s.rows {
            for (i, v) in s.row(r).iter().enumerate() {
                dev[i] = v - mean[i];
            }
            w.ger(1.0, &dev, &dev, 1.0);
        }
        means.push(mean);
    }
    w /= (m * (l - 1)) as f64;

    let mut grand = DVector::<f64>::zeros(dim);
    for mean in &means {
        grand += mean;
    }
    grand /= m as f64;
    let mut b = DMatrix::<f64>::zeros(dim, dim);
    for mean in &means {
        let d = mean - &grand;
        b.ger(1.0, &d, &d, 1.0);
    }
    b *= l as f64 / (m - 1) as f64;
    Ok((w, b))
}

/// Per-coordinate scale reduction factors from precomputed `W` and `B`.
///
/// A coordinate frozen at the same value in every chain scores `1.0`; one
/// frozen within chains but split across them scores `+inf`.
pub fn psrf_values(w: &DMatrix<f64>, b: &DMatrix<f64>, m: usize, l: usize) -> Vec<f64> {
    let lf = l as f64;
    let mf = m as f64;
    (0..w.nrows())
        .map(|i| {
            let w_ii = w[(i, i)];
            let b_ii = b[(i, i)];
            if w_ii == 0.0 {
                if b_ii == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                let v_ii = (lf - 1.0) / lf * w_ii + (1.0 + 1.0 / mf) * b_ii / lf;
                (v_ii / w_ii).sqrt()
            }
        })
        .collect()
}

/// Multivariate scale reduction factor from precomputed `W` and `B`.
pub fn mpsrf_value(w: &DMatrix<f64>, b: &DMatrix<f64>, m: usize, l: usize) -> Result<f64> {
    let dim = w.nrows();
    let b_over_l = b / l as f64;
    let chol = match Cholesky::new(w.clone()) {
        Some(c) => c,
        None => {
            // One retry with a relative diagonal jitter.
            let jitter = 1e-12 * w.trace() / dim as f64;
            let mut wj = w.clone();
            for i in 0..dim {
                wj[(i, i)] += jitter;
            }
            Cholesky::new(wj).ok_or_else(|| {
                MsmError::Numerical(
                    "within-chain covariance is singular; cannot form the multivariate factor"
                        .into(),
                )
            })?
        }
    };
    // M = L^-1 (B/l) L^-T is similar to W^-1 B/l but symmetric.
    let lower = chol.l();
    let y = lower.solve_lower_triangular(&b_over_l).ok_or_else(|| {
        MsmError::Numerical("triangular solve failed in the multivariate factor".into())
    })?;
    let z = lower.solve_lower_triangular(&y.transpose()).ok_or_else(|| {
        MsmError::Numerical("triangular solve failed in the multivariate factor".into())
    })?;
    let sym = (&z + z.transpose()) * 0.5;
    let (values, _) = sorted_symmetric_eigen(sym)?;
    let lambda_max = values[0].max(0.0);
    let lf = l as f64;
    let mf = m as f64;
    Ok(((lf - 1.0) / lf + (mf + 1.0) / mf * lambda_max).sqrt())
}

/// Convenience wrapper computing per-coordinate factors and their maximum.
pub fn psrf(samples: &[SampleMatrix]) -> Result<(Vec<f64>, f64)> {
    let (w, b) = chain_covariances(samples)?;
    let values = psrf_values(&w, &b, samples.len(), samples[0].rows);
    let max = values.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    Ok((values, max))
}

/// Convenience wrapper computing the multivariate factor.
pub fn mpsrf(samples: &[SampleMatrix]) -> Result<f64> {
    let (w, b) = chain_covariances(samples)?;
    mpsrf_value(&w, &b, samples.len(), samples[0].rows)
}

/// Diagnostics evaluated on one growing prefix of the chains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergencePoint {
    /// Number of proposals included (prefix length).
    pub iteration: u64,
    pub psrf_max: f64,
    pub mpsrf: f64,
}

/// Scale reduction factors along increasing chain prefixes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub burn_in: usize,
    pub points: Vec<ConvergencePoint>,
}

impl ConvergenceReport {
    pub fn final_point(&self) -> ConvergencePoint {
        *self.points.last().expect("reports hold at least one point")
    }

    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("iteration,psrf_max,mpsrf\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.iteration, p.psrf_max, p.mpsrf);
        }
        out
    }
}

/// Parses a CSV produced by [`ConvergenceReport::to_csv`].
pub fn parse_convergence_csv<R: std::io::BufRead>(reader: R) -> Result<Vec<ConvergencePoint>> {
    let mut lines = reader.lines();
    match lines.next() {
        Some(line) => {
            if line?.trim() != "iteration,psrf_max,mpsrf" {
                return Err(MsmError::parse(1, "unrecognized convergence header".to_string()));
            }
        }
        None => return Err(MsmError::parse(1, "empty convergence file".to_string())),
    }
    let mut points: Vec<ConvergencePoint> = Vec::new();
    for (row_no, line) in lines.enumerate() {
        let line_no = row_no + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() != 3 {
            return Err(MsmError::parse(line_no, format!("expected 3 columns, got {}", cols.len())));
        }
        let iteration: u64 = cols[0]
            .parse()
            .map_err(|_| MsmError::parse(line_no, "invalid iteration".to_string()))?;
        let psrf_max: f64 = cols[1]
            .parse()
            .map_err(|_| MsmError::parse(line_no, "invalid psrf value".to_string()))?;
        let mpsrf: f64 = cols[2]
            .parse()
            .map_err(|_| MsmError::parse(line_no, "invalid mpsrf value".to_string()))?;
        if psrf_max.is_nan() || mpsrf.is_nan() {
            return Err(MsmError::parse(line_no, "factor is NaN".to_string()));
        }
        if let Some(prev) = points.last() {
            if iteration <= prev.iteration {
                return Err(MsmError::parse(line_no, "iterations must increase".to_string()));
            }
        }
        points.push(ConvergencePoint { iteration, psrf_max, mpsrf });
    }
    if points.is_empty() {
        return Err(MsmError::parse(2, "convergence file holds no rows".to_string()));
    }
    Ok(points)
}

/// Evaluates the factors at about `n_points` evenly spaced prefix lengths
/// ending at the shortest common chain length. `burn_in` proposals are
/// dropped from the front of every prefix.
pub fn convergence_report(
    records: &[ChainRecord],
    burn_in: usize,
    n_points: usize,
) -> Result<ConvergenceReport> {
    if records.len() < 2 {
        return Err(MsmError::Argument(format!(
            "need at least two chains for convergence factors, got {}",
            records.len()
        )));
    }
    if n_points == 0 {
        return Err(MsmError::Argument("need at least one evaluation point".into()));
    }
    let dim = records[0].dim;
    if records.iter().any(|r| r.dim != dim) {
        return Err(MsmError::Argument("chains disagree on dimension".into()));
    }
    let n = records.iter().map(|r| r.n_proposals()).min().unwrap_or(0);
    if n < burn_in + 2 {
        return Err(MsmError::Argument(format!(
            "chains hold {n} proposals; burn-in {burn_in} leaves fewer than two states"
        )));
    }
    let span = n - burn_in;
    let mut prefixes: Vec<usize> = (1..=n_points)
        .map(|k| burn_in + (span * k) / n_points)
        .filter(|&t| t >= burn_in + 2)
        .collect();
    prefixes.dedup();
    debug_assert_eq!(prefixes.last(), Some(&n));

    let mut points = Vec::with_capacity(prefixes.len());
    for t in prefixes {
        let views: Vec<SampleMatrix> = records
            .iter()
            .map(|r| SampleMatrix::from_record(r, burn_in, t))
            .collect::<Result<_>>()?;
        let (w, b) = chain_covariances(&views)?;
        let values = psrf_values(&w, &b, views.len(), views[0].rows);
        let psrf_max = values.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        let mpsrf = mpsrf_value(&w, &b, views.len(), views[0].rows)?;
        points.push(ConvergencePoint { iteration: t as u64, psrf_max, mpsrf });
    }
    Ok(ConvergenceReport { burn_in, points })
}

/// Per-chain trace in CSV form: misfit and running acceptance rate.
pub fn trace_csv(record: &ChainRecord) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("iteration,misfit,acceptance_rate_so_far\n");
    let mut accepted = 0u64;
    for t in 0..=record.n_proposals() {
        if t > 0 && record.accepted_at(t) {
            accepted += 1;
        }
        let rate = if t == 0 { 0.0 } else { accepted as f64 / t as f64 };
        let _ = writeln!(out, "{t},{},{rate}", record.misfit_at(t));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Two chains {0,2} and {1,3}: W = 2, B = 1 by hand.
    #[test]
    fn scalar_fixture_matches_hand_computation() {
        let c1 = [0.0, 2.0];
        let c2 = [1.0, 3.0];
        let s1 = SampleMatrix::new(&c1, 2, 1).unwrap();
        let s2 = SampleMatrix::new(&c2, 2, 1).unwrap();
        let (w, b) = chain_covariances(&[s1, s2]).unwrap();
        assert_relative_eq!(w[(0, 0)], 2.0, max_relative = 1e-14);
        assert_relative_eq!(b[(0, 0)], 1.0, max_relative = 1e-14);
        let (values, max) = psrf(&[s1, s2]).unwrap();
        // V = 0.5*2 + 1.5*0.5 = 1.75, factor = sqrt(1.75/2) = sqrt(0.875).
        assert_relative_eq!(values[0], 0.875f64.sqrt(), max_relative = 1e-12);
        assert!((max - 0.9354143466934853).abs() <= 1e-10);
        let mv = mpsrf(&[s1, s2]).unwrap();
        assert_relative_eq!(mv, 0.875f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn identical_chains_floor_at_sample_size_factor() {
        let data = [0.4, -1.0, 0.7, 0.2, -0.3, 1.1];
        let s = SampleMatrix::new(&data, 3, 2).unwrap();
        let (values, max) = psrf(&[s, s, s]).unwrap();
        let floor = (2.0f64 / 3.0).sqrt(); // sqrt((l-1)/l), l = 3
        for v in values {
            assert_relative_eq!(v, floor, max_relative = 1e-12);
        }
        assert_relative_eq!(max, floor, max_relative = 1e-12);
        assert_relative_eq!(mpsrf(&[s, s, s]).unwrap(), floor, max_relative = 1e-12);
    }

    #[test]
    fn multivariate_factor_dominates_max_coordinate_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10 {
            let m = 2 + rng.random_range(0..3usize);
            let l = 10 + rng.random_range(0..40usize);
            let dim = 1 + rng.random_range(0..4usize);
            let shift: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let chains: Vec<Vec<f64>> = (0..m)
                .map(|j| {
                    (0..l * dim)
                        .map(|idx| {
                            let base: f64 = rng.sample(StandardNormal);
                            base + shift[idx % dim] * j as f64 * 0.3
                        })
                        .collect()
                })
                .collect();
            let views: Vec<SampleMatrix> =
                chains.iter().map(|c| SampleMatrix::new(c, l, dim).unwrap()).collect();
            let (_, max) = psrf(&views).unwrap();
            let mv = mpsrf(&views).unwrap();
            assert!(
                mv >= max - 1e-10,
                "multivariate factor {mv} fell below max coordinate factor {max}"
            );
        }
    }

    #[test]
    fn frozen_coordinates_are_classified() {
        // Coordinate 0 frozen at the same value everywhere -> 1.0.
        // Coordinate 1 frozen per chain but split across chains -> inf.
        let c1 = [5.0, 1.0, 5.0, 1.0];
        let c2 = [5.0, 2.0, 5.0, 2.0];
        let s1 = SampleMatrix::new(&c1, 2, 2).unwrap();
        let s2 = SampleMatrix::new(&c2, 2, 2).unwrap();
        let (values, max) = psrf(&[s1, s2]).unwrap();
        assert_eq!(values[0], 1.0);
        assert!(values[1].is_infinite());
        assert!(max.is_infinite());
        // W is singular and unsalvageable: the multivariate factor refuses.
        assert!(mpsrf(&[s1, s2]).is_err());
    }

    #[test]
    fn covariance_inputs_are_validated() {
        let data = [0.0, 1.0];
        let s = SampleMatrix::new(&data, 2, 1).unwrap();
        assert!(chain_covariances(&[s]).is_err());
        let one = SampleMatrix::new(&data[..1], 1, 1).unwrap();
        assert!(chain_covariances(&[one, one]).is_err());
        let wide = SampleMatrix::new(&data, 1, 2).unwrap();
        assert!(chain_covariances(&[s, wide]).is_err());
        assert!(SampleMatrix::new(&data, 2, 2).is_err());
        assert!(SampleMatrix::new(&data, 0, 1).is_err());
    }

    fn synthetic_record(chain_id: usize, n: usize, seed: u64) -> ChainRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut record = ChainRecord::new(chain_id, 2);
        let mut theta = [0.0f64, 0.0];
        let mut misfit = 10.0;
        record.test_push_row(false, false, misfit, &theta);
        for _ in 0..n {
            let coarse: bool = rng.random_bool(0.7);
            let accepted = coarse && rng.random_bool(0.6);
            if accepted {
                theta[0] += rng.sample::<f64, _>(StandardNormal) * 0.3;
                theta[1] += rng.sample::<f64, _>(StandardNormal) * 0.3;
                misfit = (misfit - 0.05).max(0.1);
            }
            record.test_push_row(coarse, accepted, misfit, &theta);
        }
        record
    }

    #[test]
    fn report_spaces_prefixes_and_ends_at_shortest_chain() {
        let records =
            vec![synthetic_record(0, 200, 1), synthetic_record(1, 200, 2), synthetic_record(2, 210, 3)];
        let report = convergence_report(&records, 20, 12).unwrap();
        assert_eq!(report.final_point().iteration, 200);
        for pair in report.points.windows(2) {
            assert!(pair[0].iteration < pair[1].iteration);
        }
        assert!(report.points.len() >= 10);
        for p in &report.points {
            assert!(p.mpsrf >= 0.0 && p.psrf_max >= 0.0);
        }
    }

    #[test]
    fn report_round_trips_through_csv() {
        let records = vec![synthetic_record(0, 120, 4), synthetic_record(1, 120, 5)];
        let report = convergence_report(&records, 0, 8).unwrap();
        let text = report.to_csv();
        let points = parse_convergence_csv(std::io::Cursor::new(text.as_bytes())).unwrap();
        assert_eq!(points.len(), report.points.len());
        for (a, b) in points.iter().zip(&report.points) {
            assert_eq!(a.iteration, b.iteration);
            assert_eq!(a.psrf_max.to_bits(), b.psrf_max.to_bits());
            assert_eq!(a.mpsrf.to_bits(), b.mpsrf.to_bits());
        }
    }

    #[test]
    fn convergence_csv_rejects_malformed_input() {
        let cases: &[&str] = &[
            "",
            "bad,header,row\n",
            "iteration,psrf_max,mpsrf\n",
            "iteration,psrf_max,mpsrf\n5,1.0\n",
            "iteration,psrf_max,mpsrf\n5,1.0,NaN\n",
            "iteration,psrf_max,mpsrf\n5,1.0,1.0\n5,1.0,1.0\n",
            "iteration,psrf_max,mpsrf\nx,1.0,1.0\n",
        ];
        for text in cases {
            assert!(
                parse_convergence_csv(std::io::Cursor::new(text.as_bytes())).is_err(),
                "expected rejection: {text:?}"
            );
        }
    }

    #[test]
    fn report_rejects_bad_windows() {
        let records = vec![synthetic_record(0, 50, 6), synthetic_record(1, 50, 7)];
        assert!(convergence_report(&records[..1], 0, 8).is_err());
        assert!(convergence_report(&records, 49, 8).is_err());
        assert!(convergence_report(&records, 0, 0).is_err());
        let mismatched = vec![synthetic_record(0, 50, 8), {
            let mut r = ChainRecord::new(1, 3);
            r.test_push_row(false, false, 1.0, &[0.0, 0.0, 0.0]);
            r
        }];
        assert!(convergence_report(&mismatched, 0, 4).is_err());
    }

    #[test]
    fn trace_csv_reports_running_acceptance() {
        let record = synthetic_record(0, 10, 9);
        let text = trace_csv(&record);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iteration,misfit,acceptance_rate_so_far");
        assert_eq!(lines.len(), 12);
        assert!(lines[1].starts_with("0,10,0"));
        let accepted = (1..=10).filter(|&t| record.accepted_at(t)).count();
        let last: Vec<&str> = lines[11].split(',').collect();
        let rate: f64 = last[2].parse().unwrap();
        assert_relative_eq!(rate, accepted as f64 / 10.0, max_relative = 1e-12);
    }
}
