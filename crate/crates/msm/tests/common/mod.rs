//! Independent oracles shared by the integration tests.
//!
//! Everything here is deliberately written from first principles and stays
//! off the library's numerical paths: the eigensolver is a dense cyclic
//! Jacobi iteration over a covariance matrix assembled by direct loops, the
//! normal CDF is a rational erf approximation, and the reference sampler is
//! a straight-line transcription of the classical single-block two-stage
//! chain that touches only the forward-model and basis primitives.

#![allow(dead_code)]

use msm::field::ScalarField;
use msm::forward::{
    log_likelihood, misfit, observe, solve_pressure, solve_pressure_directional, upscale,
    BoundarySpec, ObservationVector, Parity,
};
use msm::kle::{covariance, CovarianceSpec, KLBasis};
use msm::mesh::CartesianGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

// ---------------------------------------------------------------------------
// Dense Jacobi eigensolver oracle
// ---------------------------------------------------------------------------

/// Covariance matrix of the midpoint-quadrature operator, assembled by
/// direct loops over cell-center pairs: `M[i][j] = hx*hy * R(c_i, c_j)`.
pub fn dense_covariance_matrix(grid: &CartesianGrid, spec: &CovarianceSpec) -> Vec<Vec<f64>> {
    let n = grid.n_cells();
    let w = grid.hx * grid.hy;
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            m[i][j] = w * covariance(grid.center(i), grid.center(j), spec);
        }
    }
    m
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and matching unit eigenvectors
/// (each vector's largest-magnitude entry made positive, first maximal entry
/// winning ties in scan order).
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>, max_sweeps: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    assert!(n > 0, "empty matrix");
    for row in &a {
        assert_eq!(row.len(), n, "matrix must be square");
    }
    // v starts as the identity; columns accumulate the eigenvectors.
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let frob: f64 = a
        .iter()
        .flat_map(|r| r.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    let stop = 1e-15 * frob.max(f64::MIN_POSITIVE);

    for _sweep in 0..max_sweeps {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p][q] * a[p][q];
            }
        }
        if off.sqrt() <= stop {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq.abs() <= stop / (n as f64) {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Rotate rows and columns p, q of the symmetric matrix.
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                // Accumulate the rotation into the eigenvector columns.
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[y][y].total_cmp(&a[x][x]));
    let values: Vec<f64> = order.iter().map(|&i| a[i][i]).collect();
    let vectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&j| {
            let mut col: Vec<f64> = (0..n).map(|i| v[i][j]).collect();
            fix_sign(&mut col);
            col
        })
        .collect();
    (values, vectors)
}

/// Makes the largest-magnitude entry positive; the first maximal entry in
/// scan order decides ties.
pub fn fix_sign(col: &mut [f64]) {
    let mut best = 0usize;
    let mut mag = -1.0;
    for (idx, &x) in col.iter().enumerate() {
        if x.abs() > mag {
            mag = x.abs();
            best = idx;
        }
    }
    if col[best] < 0.0 {
        for x in col.iter_mut() {
            *x = -*x;
        }
    }
}

/// Sup-norm distance between two vectors up to a global sign flip.
pub fn sup_distance_up_to_sign(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let direct = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max);
    let flipped = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x + y).abs())
        .fold(0.0f64, f64::max);
    direct.min(flipped)
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov against the standard normal
// ---------------------------------------------------------------------------

/// Error function by the Abramowitz-Stegun rational approximation 7.1.26
/// (absolute error below 1.5e-7).
pub fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * z);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-z * z).exp())
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Two-sided Kolmogorov-Smirnov statistic of a sample against N(0, 1).
pub fn ks_statistic_normal(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty());
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in s.iter().enumerate() {
        let cdf = normal_cdf(x);
        let above = (i as f64 + 1.0) / n - cdf;
        let below = cdf - i as f64 / n;
        d = d.max(above).max(below);
    }
    d
}

/// One-percent critical value of the two-sided KS statistic,
/// `sqrt(-ln(0.005)/2) / sqrt(n) ~= 1.6276 / sqrt(n)`.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

// ---------------------------------------------------------------------------
// Classical two-stage chain oracle
// ---------------------------------------------------------------------------

/// A recorded classical run: one row per state, row 0 being the initial
/// draw, with acceptance flags aligned so row `t` describes proposal `t`.
pub struct ClassicalRun {
    pub thetas: Vec<Vec<f64>>,
    pub coarse_accepted: Vec<bool>,
    pub accepted: Vec<bool>,
}

/// Straight-line classical two-stage sampler: the whole coefficient vector
/// is one preconditioned Crank-Nicolson block, every proposal is screened by
/// the upscaled coarse solve, and survivors are promoted to the fine solve.
///
/// Randomness contract mirrored exactly: the initial state consumes `n`
/// standard normal draws scaled by `omega`; each proposal consumes `n`
/// standard normal draws in coordinate order, then one uniform for the
/// coarse test, then one uniform for the fine test only when the coarse
/// filter accepted.
#[allow(clippy::too_many_arguments)]
pub fn classical_two_stage_chain(
    basis: &KLBasis,
    coarse_grid: &CartesianGrid,
    bc: &BoundarySpec,
    fine_ref: &ObservationVector,
    coarse_ref: &ObservationVector,
    sigma_f2: f64,
    sigma_c2: f64,
    solver_tol: f64,
    beta: f64,
    omega: f64,
    seed: u64,
    steps: usize,
) -> ClassicalRun {
    let n = basis.n_modes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let eval_coarse = |theta: &[f64]| -> f64 {
        let k: ScalarField = basis.synthesize(theta).unwrap().exp();
        let (kxx, kyy) = upscale(&k, coarse_grid).unwrap();
        let p = solve_pressure_directional(&kxx, &kyy, bc, solver_tol).unwrap();
        log_likelihood(&observe(&p, Parity::Black), coarse_ref, sigma_c2).unwrap()
    };
    let eval_fine = |theta: &[f64]| -> f64 {
        let k: ScalarField = basis.synthesize(theta).unwrap().exp();
        let p = solve_pressure(&k, bc, solver_tol).unwrap();
        let m = misfit(&observe(&p, Parity::Black), fine_ref).unwrap();
        -m / (2.0 * sigma_f2)
    };

    let mut theta: Vec<f64> = (0..n)
        .map(|_| omega * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut ll_c = eval_coarse(&theta);
    let mut ll_f = eval_fine(&theta);

    let mut run = ClassicalRun {
        thetas: vec![theta.clone()],
        coarse_accepted: vec![false],
        accepted: vec![false],
    };

    let retain = (1.0 - beta * beta).sqrt();
    for _ in 0..steps {
        let proposal: Vec<f64> = theta
            .iter()
            .map(|&v| {
                let eps: f64 = rng.sample(StandardNormal);
                retain * v + beta * eps
            })
            .collect();
        let u_coarse: f64 = rng.random();
        let ll_c_prop = eval_coarse(&proposal);
        let alpha_c = (ll_c_prop - ll_c).exp().min(1.0);

        let mut coarse_ok = false;
        let mut fine_ok = false;
        if u_coarse < alpha_c {
            coarse_ok = true;
            let ll_f_prop = eval_fine(&proposal);
            let alpha_f = ((ll_f_prop - ll_f) - (ll_c_prop - ll_c)).exp().min(1.0);
            let u_fine: f64 = rng.random();
            if u_fine < alpha_f {
                fine_ok = true;
                theta = proposal;
                ll_c = ll_c_prop;
                ll_f = ll_f_prop;
            }
        }
        run.thetas.push(theta.clone());
        run.coarse_accepted.push(coarse_ok);
        run.accepted.push(fine_ok);
    }
    run
}
