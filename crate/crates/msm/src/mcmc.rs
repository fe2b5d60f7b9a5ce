//! Two-stage Metropolis-Hastings chains over the multiscale prior.
//!
//! Each proposal perturbs one Gibbs block by a preconditioned
//! Crank-Nicolson step and passes a coarse filter before the expensive fine
//! evaluation: the proposal is screened with the likelihood of an upscaled
//! coarse solve, and only coarse-accepted proposals are promoted to the
//! fine solve, where the second acceptance ratio corrects the screening so
//! the chain targets the fine posterior. Because the proposal preserves the
//! prior, both ratios involve likelihoods only.
//!
//! Randomness contract per proposal, in draw order: `n_lb` standard normal
//! variates (coordinate order), one uniform for the coarse test, and one
//! uniform for the fine test drawn only when the coarse filter accepts.
//! Replays and checkpoint restarts depend on this order.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::conditioning::MsmConditioning;
use crate::error::{MsmError, Result};
use crate::field::ScalarField;
use crate::forward::{
    log_likelihood, misfit, observe, solve_pressure, solve_pressure_directional, upscale,
    BoundarySpec, ObservationVector, Parity,
};
use crate::ioutil;
use crate::kle::{KLBasis, ThetaVector};
use crate::mesh::{CartesianGrid, DomainDecomposition};
use crate::sampler::{
    assemble_multiscale_field, block_schedule, local_average, local_average_scoped, pcn_propose,
    AveragingScope, SamplerConfig,
};

/// Coarse-filter acceptance probability `min(1, exp(llc' - llc))`.
pub fn coarse_acceptance(ll_c_prop: f64, ll_c_cur: f64) -> f64 {
    debug_assert!(!ll_c_prop.is_nan() && !ll_c_cur.is_nan());
    (ll_c_prop - ll_c_cur).exp().min(1.0)
}

/// Fine-stage acceptance probability
/// `min(1, exp((llf' - llf) - (llc' - llc)))`: the coarse ratio used for
/// screening is divided back out.
pub fn fine_acceptance(ll_f_prop: f64, ll_f_cur: f64, ll_c_prop: f64, ll_c_cur: f64) -> f64 {
    debug_assert!(!ll_f_prop.is_nan() && !ll_f_cur.is_nan());
    ((ll_f_prop - ll_f_cur) - (ll_c_prop - ll_c_cur)).exp().min(1.0)
}

/// Immutable per-run context shared by all chains.
#[derive(Debug, Clone, Copy)]
pub struct ChainContext<'a> {
    pub dd: &'a DomainDecomposition,
    pub coarse_grid: CartesianGrid,
    pub local_basis: &'a KLBasis,
    pub sampler: &'a SamplerConfig,
    pub bc: BoundarySpec,
    /// Reference observations on the fine grid (black cells).
    pub fine_ref: &'a ObservationVector,
    /// Reference observations on the coarse grid (black cells).
    pub coarse_ref: &'a ObservationVector,
    pub sigma_f2: f64,
    pub sigma_c2: f64,
    pub solver_tol: f64,
    pub conditioning: Option<&'a MsmConditioning>,
}

impl<'a> ChainContext<'a> {
    pub fn validate(&self) -> Result<()> {
        let fine = self.dd.grid();
        if *self.local_basis.grid() != self.dd.local_grid() {
            return Err(MsmError::Config(
                "local basis grid does not match the decomposition's local grid".into(),
            ));
        }
        if fine.nx % self.coarse_grid.nx != 0 || fine.ny % self.coarse_grid.ny != 0 {
            return Err(MsmError::Config(format!(
                "coarse grid {} x {} must divide fine grid {} x {}",
                self.coarse_grid.nx, self.coarse_grid.ny, fine.nx, fine.ny
            )));
        }
        if self.fine_ref.nx != fine.nx || self.fine_ref.ny != fine.ny {
            return Err(MsmError::Config(
                "fine reference observations cover a different grid".into(),
            ));
        }
        if self.coarse_ref.nx != self.coarse_grid.nx || self.coarse_ref.ny != self.coarse_grid.ny {
            return Err(MsmError::Config(
                "coarse reference observations cover a different grid".into(),
            ));
        }
        if !(self.sigma_f2 > 0.0) || !(self.sigma_c2 > 0.0) {
            return Err(MsmError::Config("noise variances must be positive".into()));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol < 1.0) {
            return Err(MsmError::Config("solver tolerance must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Synthesizes the log-permeability field of a coefficient vector:
    /// conditioned blockwise projection (when configured), subdomain
    /// synthesis, then interface averaging. `active` limits averaging to
    /// one subdomain's band cells under the `ActiveSubdomain` scope.
    pub fn synthesize(&self, theta: &ThetaVector, active: Option<usize>) -> Result<ScalarField> {
        let raw = match self.conditioning {
            Some(cond) => cond.assemble(self.dd, self.local_basis, theta)?,
            None => assemble_multiscale_field(self.dd, self.local_basis, theta)?,
        };
        match (self.sampler.scope, active) {
            (AveragingScope::ActiveSubdomain, Some(s)) => {
                local_average_scoped(&raw, self.dd, self.sampler, Some(s))
            }
            _ => local_average(&raw, self.dd, self.sampler),
        }
    }

    /// Coarse-filter log-likelihood: upscale the fine permeability, solve
    /// on the coarse grid with the directional tensor, observe black cells.
    pub fn coarse_log_likelihood(&self, log_perm: &ScalarField) -> Result<f64> {
        let k_fine = log_perm.exp();
        let (kxx, kyy) = upscale(&k_fine, &self.coarse_grid)?;
        let p = solve_pressure_directional(&kxx, &kyy, &self.bc, self.solver_tol)?;
        log_likelihood(&observe(&p, Parity::Black), self.coarse_ref, self.sigma_c2)
    }

    /// Fine log-likelihood and misfit.
    pub fn fine_evaluation(&self, log_perm: &ScalarField) -> Result<(f64, f64)> {
        let k = log_perm.exp();
        let p = solve_pressure(&k, &self.bc, self.solver_tol)?;
        let obs = observe(&p, Parity::Black);
        let m = misfit(&obs, self.fine_ref)?;
        Ok((-m / (2.0 * self.sigma_f2), m))
    }
}

/// Mutable state of one chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub chain_id: usize,
    pub theta: ThetaVector,
    pub log_like_coarse: f64,
    pub log_like_fine: f64,
    pub misfit_fine: f64,
    /// Completed proposals.
    pub iteration: u64,
    pub coarse_accepts: u64,
    pub fine_accepts: u64,
    pub rng: ChaCha8Rng,
}

/// Decision pair of one proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub coarse_accepted: bool,
    pub accepted: bool,
}

/// Short content hash of a coefficient vector, for failure diagnostics.
fn theta_hash(theta: &ThetaVector) -> String {
    let mut bytes = Vec::with_capacity(theta.len() * 8);
    for v in theta.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    ioutil::sha256_hex(&bytes)[..16].to_string()
}

fn step_failure(
    iteration: u64,
    subdomain: usize,
    block: usize,
    theta_p: &ThetaVector,
    err: MsmError,
) -> MsmError {
    MsmError::Numerical(format!(
        "proposal {iteration} (subdomain {subdomain}, block {block}, theta {}) failed: {err}",
        theta_hash(theta_p)
    ))
}

/// Draws the overdispersed initial state `theta ~ N(0, omega^2 I)` and
/// evaluates both likelihood stages.
pub fn init_chain(
    ctx: &ChainContext,
    chain_id: usize,
    base_seed: u64,
    omega: f64,
) -> Result<ChainState> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(MsmError::Argument(format!(
            "overdispersion factor must be positive, got {omega}"
        )));
    }
    ctx.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(chain_id as u64));
    let m_c = ctx.dd.n_subdomains();
    let n_c = ctx.local_basis.n_modes();
    let values: Vec<f64> = (0..m_c * n_c)
        .map(|_| omega * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let theta = ThetaVector::from_values(values, m_c, n_c, ctx.sampler.n_lb)?;
    let field = ctx.synthesize(&theta, None)?;
    let log_like_coarse = ctx.coarse_log_likelihood(&field)?;
    let (log_like_fine, misfit_fine) = ctx.fine_evaluation(&field)?;
    Ok(ChainState {
        chain_id,
        theta,
        log_like_coarse,
        log_like_fine,
        misfit_fine,
        iteration: 0,
        coarse_accepts: 0,
        fine_accepts: 0,
        rng,
    })
}

/// One two-stage proposal on the given Gibbs block. Updates the state in
/// place and reports both stage decisions.
pub fn msm_step(
    ctx: &ChainContext,
    state: &mut ChainState,
    subdomain: usize,
    block: usize,
) -> Result<StepOutcome> {
    let mut theta_p = state.theta.clone();
    let proposed = pcn_propose(theta_p.block(subdomain, block), ctx.sampler.beta, &mut state.rng)?;
    theta_p.block_mut(subdomain, block).copy_from_slice(&proposed);
    let u_coarse: f64 = state.rng.random();
    state.iteration += 1;

    let field = ctx
        .synthesize(&theta_p, Some(subdomain))
        .map_err(|e| step_failure(state.iteration, subdomain, block, &theta_p, e))?;
    let ll_c_prop = ctx
        .coarse_log_likelihood(&field)
        .map_err(|e| step_failure(state.iteration, subdomain, block, &theta_p, e))?;
    let alpha_c = coarse_acceptance(ll_c_prop, state.log_like_coarse);

    let mut outcome = StepOutcome { coarse_accepted: false, accepted: false };
    if u_coarse < alpha_c {
        outcome.coarse_accepted = true;
        state.coarse_accepts += 1;
        let (ll_f_prop, misfit_prop) = ctx
            .fine_evaluation(&field)
            .map_err(|e| step_failure(state.iteration, subdomain, block, &theta_p, e))?;
        let alpha_f =
            fine_acceptance(ll_f_prop, state.log_like_fine, ll_c_prop, state.log_like_coarse);
        let u_fine: f64 = state.rng.random();
        if u_fine < alpha_f {
            outcome.accepted = true;
            state.fine_accepts += 1;
            state.theta = theta_p;
            state.log_like_coarse = ll_c_prop;
            state.log_like_fine = ll_f_prop;
            state.misfit_fine = misfit_prop;
        }
    }
    Ok(outcome)
}

/// Per-proposal history of one chain: decision flags, the post-decision
/// misfit, and the post-decision coefficient vector. Row `t = 0` holds the
/// initial state with both flags clear.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    pub chain_id: usize,
    pub dim: usize,
    coarse_accepted: Vec<bool>,
    accepted: Vec<bool>,
    misfits: Vec<f64>,
    thetas: Vec<f64>,
}

impl ChainRecord {
    pub fn new(chain_id: usize, dim: usize) -> Self {
        ChainRecord {
            chain_id,
            dim,
            coarse_accepted: Vec::new(),
            accepted: Vec::new(),
            misfits: Vec::new(),
            thetas: Vec::new(),
        }
    }

    fn push_row(&mut self, coarse: bool, accepted: bool, misfit: f64, theta: &[f64]) {
        debug_assert_eq!(theta.len(), self.dim);
        self.coarse_accepted.push(coarse);
        self.accepted.push(accepted);
        self.misfits.push(misfit);
        self.thetas.extend_from_slice(theta);
    }

    pub fn push_initial(&mut self, state: &ChainState) {
        debug_assert!(self.misfits.is_empty());
        self.push_row(false, false, state.misfit_fine, state.theta.as_slice());
    }

    pub fn push(&mut self, state: &ChainState, outcome: StepOutcome) {
        self.push_row(
            outcome.coarse_accepted,
            outcome.accepted,
            state.misfit_fine,
            state.theta.as_slice(),
        );
    }

    /// Number of proposals recorded (excludes the initial row).
    pub fn n_proposals(&self) -> usize {
        self.misfits.len().saturating_sub(1)
    }

    /// Post-decision state after proposal `t` (`t = 0` is the initial state).
    pub fn theta_at(&self, t: usize) -> &[f64] {
        &self.thetas[t * self.dim..(t + 1) * self.dim]
    }

    /// Contiguous rows `from_t..=upto_t` of the post-decision states.
    pub fn theta_rows(&self, from_t: usize, upto_t: usize) -> &[f64] {
        &self.thetas[from_t * self.dim..(upto_t + 1) * self.dim]
    }

    #[cfg(test)]
    pub(crate) fn test_push_row(&mut self, coarse: bool, accepted: bool, misfit: f64, theta: &[f64]) {
        self.push_row(coarse, accepted, misfit, theta);
    }

    pub fn misfit_at(&self, t: usize) -> f64 {
        self.misfits[t]
    }

    pub fn coarse_accepted_at(&self, t: usize) -> bool {
        self.coarse_accepted[t]
    }

    pub fn accepted_at(&self, t: usize) -> bool {
        self.accepted[t]
    }

    pub fn acceptance_rate(&self) -> f64 {
        let n = self.n_proposals();
        if n == 0 {
            return 0.0;
        }
        self.accepted.iter().filter(|&&a| a).count() as f64 / n as f64
    }

    pub fn coarse_acceptance_rate(&self) -> f64 {
        let n = self.n_proposals();
        if n == 0 {
            return 0.0;
        }
        self.coarse_accepted.iter().filter(|&&a| a).count() as f64 / n as f64
    }

    /// Serializes the record as CSV, one row per proposal plus the initial
    /// row.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("iteration,coarse_accepted,accepted,misfit");
        for i in 0..self.dim {
            let _ = write!(out, ",theta_{i}");
        }
        out.push('\n');
        for t in 0..self.misfits.len() {
            let _ = write!(
                out,
                "{t},{},{},{}",
                self.coarse_accepted[t] as u8, self.accepted[t] as u8, self.misfits[t]
            );
            for v in self.theta_at(t) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        ioutil::write_atomic(path, self.to_csv().as_bytes())
    }

    /// Parses a record CSV produced by [`to_csv`](Self::to_csv).
    pub fn parse_csv<R: std::io::BufRead>(chain_id: usize, reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(line) => line?,
            None => return Err(MsmError::parse(1, "empty record file")),
        };
        let head_cols: Vec<&str> = header.trim().split(',').collect();
        if head_cols.len() < 5
            || head_cols[..4] != ["iteration", "coarse_accepted", "accepted", "misfit"]
        {
            return Err(MsmError::parse(1, "unrecognized record header".to_string()));
        }
        let dim = head_cols.len() - 4;
        for (i, col) in head_cols[4..].iter().enumerate() {
            if *col != format!("theta_{i}") {
                return Err(MsmError::parse(1, format!("unexpected column {col:?}")));
            }
        }
        let mut record = ChainRecord::new(chain_id, dim);
        for (row_no, line) in lines.enumerate() {
            let line_no = row_no + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.trim().split(',').collect();
            if cols.len() != 4 + dim {
                return Err(MsmError::parse(
                    line_no,
                    format!("expected {} columns, got {}", 4 + dim, cols.len()),
                ));
            }
            let t: usize = cols[0]
                .parse()
                .map_err(|_| MsmError::parse(line_no, "invalid iteration".to_string()))?;
            if t != row_no {
                return Err(MsmError::parse(
                    line_no,
                    format!("iteration {t} out of order, expected {row_no}"),
                ));
            }
            let flag = |tok: &str| -> Result<bool> {
                match tok {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    _ => Err(MsmError::parse(line_no, format!("invalid flag {tok:?}"))),
                }
            };
            let coarse = flag(cols[1])?;
            let accepted = flag(cols[2])?;
            if accepted && !coarse {
                return Err(MsmError::parse(
                    line_no,
                    "row accepted without coarse acceptance".to_string(),
                ));
            }
            if t == 0 && (coarse || accepted) {
                return Err(MsmError::parse(line_no, "initial row cannot be accepted".to_string()));
            }
            let misfit: f64 = cols[3]
                .parse()
                .map_err(|_| MsmError::parse(line_no, "invalid misfit".to_string()))?;
            if !misfit.is_finite() {
                return Err(MsmError::parse(line_no, "non-finite misfit".to_string()));
            }
            let mut theta = Vec::with_capacity(dim);
            for tok in &cols[4..] {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| MsmError::parse(line_no, format!("invalid value {tok:?}")))?;
                if !v.is_finite() {
                    return Err(MsmError::parse(line_no, "non-finite coefficient".to_string()));
                }
                theta.push(v);
            }
            record.push_row(coarse, accepted, misfit, &theta);
        }
        if record.misfits.is_empty() {
            return Err(MsmError::parse(2, "record holds no rows".to_string()));
        }
        Ok(record)
    }

    pub fn read_csv_path(chain_id: usize, path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::parse_csv(chain_id, std::io::BufReader::new(file))
    }
}

/// Serializable dump of a chain's exact state; version 1.
///
/// Bit-exact restarts require serde_json's `float_roundtrip` feature:
/// the default float parser may be off by one ulp, which would silently
/// fork the trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub chain_id: usize,
    pub subdomains: usize,
    pub coords_per_subdomain: usize,
    pub block_size: usize,
    pub theta: Vec<f64>,
    pub log_like_coarse: f64,
    pub log_like_fine: f64,
    pub misfit_fine: f64,
    pub iteration: u64,
    pub coarse_accepts: u64,
    pub fine_accepts: u64,
    /// ChaCha state triple: seed, stream, and 128-bit word position split
    /// into two 64-bit halves for JSON friendliness.
    pub rng_seed: [u8; 32],
    pub rng_stream: u64,
    pub rng_word_pos_hi: u64,
    pub rng_word_pos_lo: u64,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn from_state(state: &ChainState) -> Self {
        let word_pos = state.rng.get_word_pos();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            chain_id: state.chain_id,
            subdomains: state.theta.n_subdomains(),
            coords_per_subdomain: state.theta.coords_per_subdomain(),
            block_size: state.theta.block_size(),
            theta: state.theta.as_slice().to_vec(),
            log_like_coarse: state.log_like_coarse,
            log_like_fine: state.log_like_fine,
            misfit_fine: state.misfit_fine,
            iteration: state.iteration,
            coarse_accepts: state.coarse_accepts,
            fine_accepts: state.fine_accepts,
            rng_seed: state.rng.get_seed(),
            rng_stream: state.rng.get_stream(),
            rng_word_pos_hi: (word_pos >> 64) as u64,
            rng_word_pos_lo: word_pos as u64,
        }
    }

    /// Rebuilds the chain state, validating structure and value sanity.
    pub fn restore(&self) -> Result<ChainState> {
        if self.version != CHECKPOINT_VERSION {
            return Err(MsmError::Data(format!(
                "checkpoint version {} unsupported, expected {CHECKPOINT_VERSION}",
                self.version
            )));
        }
        for (name, v) in [
            ("log_like_coarse", self.log_like_coarse),
            ("log_like_fine", self.log_like_fine),
            ("misfit_fine", self.misfit_fine),
        ] {
            if !v.is_finite() {
                return Err(MsmError::Data(format!("checkpoint {name} is not finite")));
            }
        }
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(MsmError::Data("checkpoint theta holds non-finite values".into()));
        }
        let theta = ThetaVector::from_values(
            self.theta.clone(),
            self.subdomains,
            self.coords_per_subdomain,
            self.block_size,
        )
        .map_err(|e| MsmError::Data(format!("checkpoint blocking invalid: {e}")))?;
        let mut rng = ChaCha8Rng::from_seed(self.rng_seed);
        rng.set_stream(self.rng_stream);
        rng.set_word_pos(((self.rng_word_pos_hi as u128) << 64) | self.rng_word_pos_lo as u128);
        Ok(ChainState {
            chain_id: self.chain_id,
            theta,
            log_like_coarse: self.log_like_coarse,
            log_like_fine: self.log_like_fine,
            misfit_fine: self.misfit_fine,
            iteration: self.iteration,
            coarse_accepts: self.coarse_accepts,
            fine_accepts: self.fine_accepts,
            rng,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| MsmError::parse(e.line().max(1), format!("checkpoint: {e}")))
    }
}

/// Checkpoint file path for one chain.
pub fn checkpoint_path(dir: &Path, chain_id: usize) -> PathBuf {
    dir.join(format!("chain{chain_id}.json"))
}

pub fn save_checkpoint(dir: &Path, state: &ChainState) -> Result<()> {
    let cp = Checkpoint::from_state(state);
    ioutil::write_atomic(&checkpoint_path(dir, state.chain_id), cp.to_json().as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<ChainState> {
    let text = std::fs::read_to_string(path)?;
    Checkpoint::from_json(&text)?.restore()
}

/// Controls for running chains.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Proposals per chain.
    pub proposals: u64,
    pub base_seed: u64,
    /// Initial-state overdispersion.
    pub omega: f64,
    pub checkpoint_dir: Option<PathBuf>,
    /// Checkpoint cadence in proposals; 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            proposals: 1000,
            base_seed: 0,
            omega: 2.0,
            checkpoint_dir: None,
            checkpoint_every: 0,
        }
    }
}

/// Advances a chain by `proposals` steps, appending to `record`. The
/// schedule position is derived from the iteration counter, so a restored
/// chain continues exactly where it stopped.
pub fn advance_chain(
    ctx: &ChainContext,
    state: &mut ChainState,
    record: &mut ChainRecord,
    proposals: u64,
    opts: &RunOptions,
) -> Result<()> {
    let schedule = block_schedule(
        ctx.dd.n_subdomains(),
        ctx.local_basis.n_modes(),
        ctx.sampler.n_lb,
    )?;
    for _ in 0..proposals {
        let idx = (state.iteration % schedule.len() as u64) as usize;
        let (s, b) = schedule[idx];
        let outcome = msm_step(ctx, state, s, b)?;
        record.push(state, outcome);
        if let Some(dir) = &opts.checkpoint_dir {
            if opts.checkpoint_every > 0 && state.iteration % opts.checkpoint_every == 0 {
                save_checkpoint(dir, state)?;
            }
        }
    }
    Ok(())
}

/// Runs one chain from a fresh overdispersed start.
pub fn run_chain(ctx: &ChainContext, chain_id: usize, opts: &RunOptions) -> Result<ChainRecord> {
    let mut state = init_chain(ctx, chain_id, opts.base_seed, opts.omega)?;
    let mut record = ChainRecord::new(chain_id, state.theta.len());
    record.push_initial(&state);
    advance_chain(ctx, &mut state, &mut record, opts.proposals, opts)?;
    if let Some(dir) = &opts.checkpoint_dir {
        save_checkpoint(dir, &state)?;
    }
    Ok(record)
}

/// Runs `n_chains` independent chains (one thread each) and returns their
/// results in chain order. Failures are per-chain so completed chains
/// survive a sibling's abort.
pub fn run_chains(
    ctx: &ChainContext,
    n_chains: usize,
    opts: &RunOptions,
) -> Vec<Result<ChainRecord>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..n_chains)
            .map(|chain_id| scope.spawn(move || run_chain(ctx, chain_id, opts)))
            .collect();
        handles
            .into_iter()
            .enumerate()
            .map(|(chain_id, h)| {
                h.join().unwrap_or_else(|_| {
                    Err(MsmError::Numerical(format!("chain {chain_id} thread panicked")))
                })
            })
            .collect()
    })
}
