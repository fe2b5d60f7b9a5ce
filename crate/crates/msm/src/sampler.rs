//! Proposal and field-assembly machinery for the multiscale sampler.
//!
//! A proposal updates one Gibbs block of the coefficient vector with a
//! preconditioned Crank-Nicolson step, which preserves the standard normal
//! prior exactly, so acceptance ratios reduce to likelihood ratios. The
//! multiscale field is synthesized per subdomain from one shared local
//! basis, then smoothed across subdomain interfaces by local averaging over
//! a band of cells around the interior interfaces.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{MsmError, Result};
use crate::field::ScalarField;
use crate::kle::{KLBasis, ThetaVector};
use crate::mesh::DomainDecomposition;

/// Shape of the averaging neighborhood around a band cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborhoodShape {
    /// Circle of radius equal to the band half-width.
    Circle,
    /// Ellipse with semi-axes tied to the prior correlation lengths.
    Ellipse,
}

/// How neighborhood values combine into the averaged value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AveragingRule {
    /// `sum / sqrt(n)`: keeps the prior variance of i.i.d. cell values.
    VariancePreserving,
    /// Plain mean; smooths but shrinks variance.
    Mean,
    /// Weights `1 / (1 + d / hbar)` by center distance `d`, normalized;
    /// smooths with emphasis on the cell itself.
    DistanceWeighted,
}

/// Which band cells an averaging pass rewrites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AveragingScope {
    /// The whole band, once per proposal.
    FullBand,
    /// Only band cells owned by the subdomain being updated.
    ActiveSubdomain,
}

/// Proposal and averaging controls shared by every chain of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    /// Crank-Nicolson step size in `[0, 1]`.
    pub beta: f64,
    /// Coordinates per Gibbs block.
    pub n_lb: usize,
    /// Band half-width around interior interfaces.
    pub hbar: f64,
    pub shape: NeighborhoodShape,
    /// Ellipse semi-axes, used when `shape` is `Ellipse`.
    pub semi_axes: (f64, f64),
    pub rule: AveragingRule,
    pub scope: AveragingScope,
}

impl SamplerConfig {
    pub fn new(
        beta: f64,
        n_lb: usize,
        hbar: f64,
        shape: NeighborhoodShape,
        semi_axes: (f64, f64),
        rule: AveragingRule,
        scope: AveragingScope,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) || !beta.is_finite() {
            return Err(MsmError::Argument(format!(
                "proposal step beta must lie in [0, 1], got {beta}"
            )));
        }
        if n_lb == 0 {
            return Err(MsmError::Argument("Gibbs block size must be positive".into()));
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(MsmError::Argument(format!(
                "band half-width must be positive and finite, got {hbar}"
            )));
        }
        if !(semi_axes.0 > 0.0 && semi_axes.1 > 0.0)
            || !(semi_axes.0.is_finite() && semi_axes.1.is_finite())
        {
            return Err(MsmError::Argument(format!(
                "neighborhood semi-axes must be positive and finite, got {semi_axes:?}"
            )));
        }
        Ok(SamplerConfig { beta, n_lb, hbar, shape, semi_axes, rule, scope })
    }

    /// Effective neighborhood semi-axes for the configured shape.
    pub fn axes(&self) -> (f64, f64) {
        match self.shape {
            NeighborhoodShape::Circle => (self.hbar, self.hbar),
            NeighborhoodShape::Ellipse => self.semi_axes,
        }
    }
}

/// Preconditioned Crank-Nicolson proposal on one block:
/// `theta' = sqrt(1 - beta^2) theta + beta eps`, `eps ~ N(0, I)`.
///
/// Exactly `block.len()` standard normal variates are drawn in coordinate
/// order regardless of `beta`; chain reproducibility depends on this draw
/// order, so `beta = 0` still consumes its draws.
pub fn pcn_propose<R: Rng + ?Sized>(block: &[f64], beta: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&beta) || !beta.is_finite() {
        return Err(MsmError::Argument(format!(
            "proposal step beta must lie in [0, 1], got {beta}"
        )));
    }
    let retain = (1.0 - beta * beta).sqrt();
    Ok(block
        .iter()
        .map(|&v| {
            let eps: f64 = rng.sample(StandardNormal);
            retain * v + beta * eps
        })
        .collect())
}

/// Gibbs visit order: subdomains in index order, blocks within a subdomain
/// in index order.
pub fn block_schedule(m_c: usize, n_c: usize, n_lb: usize) -> Result<Vec<(usize, usize)>> {
    if m_c == 0 || n_c == 0 || n_lb == 0 {
        return Err(MsmError::Argument(format!(
            "schedule dimensions must be positive, got m_c = {m_c}, n_c = {n_c}, n_lb = {n_lb}"
        )));
    }
    if n_c % n_lb != 0 {
        return Err(MsmError::Argument(format!(
            "coordinates per subdomain n_c = {n_c} must be divisible by block size n_lb = {n_lb}"
        )));
    }
    let blocks = n_c / n_lb;
    let mut schedule = Vec::with_capacity(m_c * blocks);
    for s in 0..m_c {
        for b in 0..blocks {
            schedule.push((s, b));
        }
    }
    Ok(schedule)
}

/// Synthesizes the multiscale log-permeability field: each subdomain's
/// coefficient block drives the shared local basis, scattered onto the
/// subdomain's cells. No interface smoothing is applied here.
pub fn assemble_multiscale_field(
    dd: &DomainDecomposition,
    basis: &KLBasis,
    theta: &ThetaVector,
) -> Result<ScalarField> {
    if *basis.grid() != dd.local_grid() {
        return Err(MsmError::Argument(
            "basis grid does not match the decomposition's local grid".into(),
        ));
    }
    if theta.n_subdomains() != dd.n_subdomains() {
        return Err(MsmError::Argument(format!(
            "theta has {} subdomain blocks, decomposition has {}",
            theta.n_subdomains(),
            dd.n_subdomains()
        )));
    }
    if theta.coords_per_subdomain() != basis.n_modes() {
        return Err(MsmError::Argument(format!(
            "theta holds {} coordinates per subdomain, basis has {} modes",
            theta.coords_per_subdomain(),
            basis.n_modes()
        )));
    }
    let mut out = ScalarField::zeros(*dd.grid());
    for s in 0..dd.n_subdomains() {
        let local = basis.synthesize_values(theta.subdomain(s))?;
        for (lc, &cell) in dd.cells_of(s)?.iter().enumerate() {
            out.values_mut()[cell] = local[lc];
        }
    }
    Ok(out)
}

fn averaged_value(
    field: &ScalarField,
    dd: &DomainDecomposition,
    cfg: &SamplerConfig,
    cell: usize,
) -> Result<f64> {
    let (ax, ay) = cfg.axes();
    let hood = dd.neighborhood(cell, ax, ay)?;
    debug_assert!(!hood.is_empty());
    match cfg.rule {
        AveragingRule::VariancePreserving => {
            let sum: f64 = hood.iter().map(|&c| field.value(c)).sum();
            Ok(sum / (hood.len() as f64).sqrt())
        }
        AveragingRule::Mean => {
            let sum: f64 = hood.iter().map(|&c| field.value(c)).sum();
            Ok(sum / hood.len() as f64)
        }
        AveragingRule::DistanceWeighted => {
            let g = dd.grid();
            let (cx, cy) = g.center(cell);
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for &c in &hood {
                let (px, py) = g.center(c);
                let d = ((cx - px).powi(2) + (cy - py).powi(2)).sqrt();
                let w = 1.0 / (1.0 + d / cfg.hbar);
                acc += w * field.value(c);
                wsum += w;
            }
            Ok(acc / wsum)
        }
    }
}

/// Rewrites interface-band cells with their neighborhood averages. All
/// averages read the input field, so the result does not depend on cell
/// visit order. `active` restricts the rewrite to one subdomain's band
/// cells; `None` rewrites the whole band.
pub fn local_average_scoped(
    field: &ScalarField,
    dd: &DomainDecomposition,
    cfg: &SamplerConfig,
    active: Option<usize>,
) -> Result<ScalarField> {
    if field.grid() != dd.grid() {
        return Err(MsmError::Argument(
            "field grid does not match the decomposition grid".into(),
        ));
    }
    let mut out = field.clone();
    for cell in dd.interface_band(cfg.hbar)? {
        if let Some(s) = active {
            if dd.subdomain_of(cell) != s {
                continue;
            }
        }
        out.values_mut()[cell] = averaged_value(field, dd, cfg, cell)?;
    }
    Ok(out)
}

/// Full-band local averaging; see [`local_average_scoped`].
pub fn local_average(
    field: &ScalarField,
    dd: &DomainDecomposition,
    cfg: &SamplerConfig,
) -> Result<ScalarField> {
    local_average_scoped(field, dd, cfg, None)
}
