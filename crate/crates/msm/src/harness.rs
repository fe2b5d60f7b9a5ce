//! Experiment orchestration: reference-data generation, full sampling
//! runs with a reproducibility manifest, cross-run comparison, and a
//! conditioned-synthesis demonstration.
//!
//! A run writes everything under one output directory:
//!
//! ```text
//! out/
//!   manifest.toml                    written last, hashes of every file
//!   chains/chainN.csv                per-proposal history
//!   checkpoints/chainN.json          final (and periodic) chain state
//!   diagnostics/convergence.csv      scale reduction factors over prefixes
//!   diagnostics/chainN_trace.csv     misfit and running acceptance rate
//!   diagnostics/acceptance.csv       per-chain and overall rates
//!   snapshots/chainN_iterT.txt       requested field snapshots
//! ```
//!
//! Nothing under the output directory embeds absolute paths or
//! timestamps, so a repeated run over identical inputs reproduces every
//! byte.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::conditioning::{build_msm_conditioning, Conditioning, MeasurementSet, MsmConditioning};
use crate::config::{CoarseDataKind, Config};
use crate::diagnostics::{
    convergence_report, parse_convergence_csv, trace_csv, ConvergencePoint,
};
use crate::error::{MsmError, Result};
use crate::field::{read_snapshot_on, ScalarField};
use crate::forward::{
    average_to_coarse, observe, solve_pressure, solve_pressure_directional, upscale, BoundarySpec,
    ObservationVector, Parity,
};
use crate::ioutil;
use crate::kle::{load_or_compute, truncate, EigenOptions, KLBasis, ThetaVector, Truncation};
use crate::mcmc::{run_chains, ChainContext, ChainRecord, RunOptions};

/// Keeps the reference coefficients distinct from chain 0's initial draw
/// when the same base seed is reused for generation and sampling.
const REFERENCE_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

pub const MANIFEST_VERSION: u32 = 1;

fn is_sha256_hex(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// One output file entry in the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    /// Path relative to the run directory, with `/` separators.
    pub path: String,
    pub sha256: String,
}

/// Hashes of the input files a run consumed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestInputs {
    pub reference_field: String,
    pub reference_observations: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurements: Option<String>,
}

/// Reproducibility record of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub crate_name: String,
    pub crate_version: String,
    /// Hash of the resolved configuration in canonical TOML form.
    pub config_hash: String,
    pub seed: u64,
    pub chains: usize,
    pub proposals: u64,
    pub inputs: ManifestInputs,
    pub files: Vec<ManifestFile>,
}

impl Manifest {
    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("manifest serialization cannot fail")
    }

    pub fn from_toml_str(text: &str) -> Result<Manifest> {
        let manifest: Manifest =
            toml::from_str(text).map_err(|e| MsmError::Config(format!("manifest: {e}")))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path)?;
        Manifest::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(MsmError::Data(format!(
                "manifest version {} unsupported, expected {MANIFEST_VERSION}",
                self.version
            )));
        }
        let mut hashes = vec![
            ("config_hash", &self.config_hash),
            ("inputs.reference_field", &self.inputs.reference_field),
            ("inputs.reference_observations", &self.inputs.reference_observations),
        ];
        if let Some(m) = &self.inputs.measurements {
            hashes.push(("inputs.measurements", m));
        }
        for (name, h) in hashes {
            if !is_sha256_hex(h) {
                return Err(MsmError::Data(format!("manifest {name} is not a sha256 hex digest")));
            }
        }
        let mut seen = BTreeSet::new();
        for f in &self.files {
            if f.path.is_empty()
                || f.path.starts_with('/')
                || f.path.split('/').any(|part| part.is_empty() || part == "." || part == "..")
            {
                return Err(MsmError::Data(format!(
                    "manifest file path {:?} must be a clean relative path",
                    f.path
                )));
            }
            if !is_sha256_hex(&f.sha256) {
                return Err(MsmError::Data(format!(
                    "manifest entry {:?} has an invalid sha256 digest",
                    f.path
                )));
            }
            if !seen.insert(&f.path) {
                return Err(MsmError::Data(format!("manifest lists {:?} twice", f.path)));
            }
        }
        Ok(())
    }
}

/// Collects written files and their digests for the manifest.
struct OutputWriter {
    root: PathBuf,
    files: Vec<ManifestFile>,
}

impl OutputWriter {
    fn new(root: &Path) -> Self {
        OutputWriter { root: root.to_path_buf(), files: Vec::new() }
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        ioutil::write_atomic(&self.root.join(rel), bytes)?;
        self.files.push(ManifestFile { path: rel.to_string(), sha256: ioutil::sha256_hex(bytes) });
        Ok(())
    }

    /// Hashes a file that was written through another code path.
    fn record_existing(&mut self, rel: &str) -> Result<()> {
        let digest = ioutil::sha256_file(&self.root.join(rel))?;
        self.files.push(ManifestFile { path: rel.to_string(), sha256: digest });
        Ok(())
    }

    fn into_files(mut self) -> Vec<ManifestFile> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        self.files
    }
}

/// What `generate_reference` produced.
#[derive(Debug, Clone)]
pub struct ReferenceSummary {
    pub field_path: PathBuf,
    pub observations_path: PathBuf,
    pub field_sha256: String,
    pub observations_sha256: String,
    pub n_observations: usize,
}

/// Draws a reference log-permeability field from the prior on the fine
/// grid, solves for its pressure, and writes the field snapshot plus the
/// black-cell observation CSV to the configured reference paths.
pub fn generate_reference(cfg: &Config, seed: Option<u64>) -> Result<ReferenceSummary> {
    cfg.validate()?;
    let grid = cfg.fine_grid()?;
    let spec = cfg.covariance_spec()?;
    let pairs = load_or_compute(
        cfg.kle.cache_dir.as_deref(),
        &grid,
        &spec,
        cfg.kle.n_modes,
        &EigenOptions::default(),
    )?;
    let basis = truncate(&pairs, Truncation::FixedCount(cfg.kle.n_modes))?;
    let seed = seed.unwrap_or(cfg.run.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ REFERENCE_SEED_SALT);
    let theta: Vec<f64> =
        (0..cfg.kle.n_modes).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let field = basis.synthesize(&theta)?;
    let pressure = solve_pressure(&field.exp(), &BoundarySpec::unit_drop(), cfg.run.solver_tol)?;
    let obs = observe(&pressure, Parity::Black);

    let field_text = field.to_snapshot();
    let obs_text = obs.to_csv();
    ioutil::write_atomic(&cfg.reference.field, field_text.as_bytes())?;
    ioutil::write_atomic(&cfg.reference.observations, obs_text.as_bytes())?;
    Ok(ReferenceSummary {
        field_path: cfg.reference.field.clone(),
        observations_path: cfg.reference.observations.clone(),
        field_sha256: ioutil::sha256_hex(field_text.as_bytes()),
        observations_sha256: ioutil::sha256_hex(obs_text.as_bytes()),
        n_observations: obs.indices().len(),
    })
}

/// Per-chain acceptance counts of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainAcceptance {
    pub chain_id: usize,
    pub proposals: u64,
    pub coarse_rate: f64,
    pub rate: f64,
}

/// What `run_experiment` produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub chains: usize,
    pub proposals: u64,
    /// Final convergence point; absent for single-chain runs.
    pub convergence: Option<ConvergencePoint>,
    pub per_chain: Vec<ChainAcceptance>,
    pub overall_coarse_rate: f64,
    pub overall_rate: f64,
}

impl RunSummary {
    pub fn to_text(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(out, "run complete: {} chains x {} proposals", self.chains, self.proposals);
        let _ = writeln!(out, "output directory: {}", self.out_dir.display());
        if let Some(p) = self.convergence {
            let _ = writeln!(
                out,
                "final mpsrf = {} (max psrf = {}) after {} proposals",
                p.mpsrf, p.psrf_max, p.iteration
            );
        }
        for c in &self.per_chain {
            let _ = writeln!(
                out,
                "chain {}: coarse acceptance {:.4}, acceptance {:.4}",
                c.chain_id, c.coarse_rate, c.rate
            );
        }
        let _ = write!(
            out,
            "overall: coarse acceptance {:.4}, acceptance {:.4}",
            self.overall_coarse_rate, self.overall_rate
        );
        out
    }
}

fn acceptance_csv(per_chain: &[ChainAcceptance], coarse: f64, rate: f64, total: u64) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("chain,proposals,coarse_acceptance_rate,acceptance_rate\n");
    for c in per_chain {
        let _ = writeln!(out, "{},{},{},{}", c.chain_id, c.proposals, c.coarse_rate, c.rate);
    }
    let _ = writeln!(out, "overall,{total},{coarse},{rate}");
    out
}

/// One row of `diagnostics/acceptance.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptanceRow {
    pub label: String,
    pub proposals: u64,
    pub coarse_rate: f64,
    pub rate: f64,
}

/// Parses `diagnostics/acceptance.csv`.
pub fn parse_acceptance_csv<R: std::io::BufRead>(reader: R) -> Result<Vec<AcceptanceRow>> {
    let mut lines = reader.lines();
    match lines.next() {
        Some(line) => {
            if line?.trim() != "chain,proposals,coarse_acceptance_rate,acceptance_rate" {
                return Err(MsmError::parse(1, "unrecognized acceptance header".to_string()));
            }
        }
        None => return Err(MsmError::parse(1, "empty acceptance file".to_string())),
    }
    let mut rows = Vec::new();
    for (row_no, line) in lines.enumerate() {
        let line_no = row_no + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() != 4 {
            return Err(MsmError::parse(line_no, format!("expected 4 columns, got {}", cols.len())));
        }
        let proposals: u64 = cols[1]
            .parse()
            .map_err(|_| MsmError::parse(line_no, "invalid proposal count".to_string()))?;
        let coarse_rate: f64 = cols[2]
            .parse()
            .map_err(|_| MsmError::parse(line_no, "invalid coarse rate".to_string()))?;
        let rate: f64 = cols[3]
            .parse()
            .map_err(|_| MsmError::parse(line_no, "invalid acceptance rate".to_string()))?;
        for v in [coarse_rate, rate] {
            if !(0.0..=1.0).contains(&v) {
                return Err(MsmError::parse(line_no, "rate outside [0, 1]".to_string()));
            }
        }
        rows.push(AcceptanceRow { label: cols[0].to_string(), proposals, coarse_rate, rate });
    }
    if rows.is_empty() {
        return Err(MsmError::parse(2, "acceptance file holds no rows".to_string()));
    }
    Ok(rows)
}

/// Runs the configured experiment end to end and writes the output tree.
pub fn run_experiment(cfg: &Config) -> Result<RunSummary> {
    cfg.validate()?;
    let grid = cfg.fine_grid()?;
    let coarse_grid = cfg.coarse_grid()?;
    let dd = cfg.decomposition()?;
    let spec = cfg.covariance_spec()?;
    let n_c = cfg.modes_per_subdomain()?;
    let local_grid = dd.local_grid();
    let pairs = load_or_compute(
        cfg.kle.cache_dir.as_deref(),
        &local_grid,
        &spec,
        n_c,
        &EigenOptions::default(),
    )?;
    let local_basis = truncate(&pairs, Truncation::FixedCount(n_c))?;

    // Reference data. The fine pressure is re-solved from the reference
    // field to build the coarse-grid observations.
    let ref_field = {
        let file = std::fs::File::open(&cfg.reference.field)?;
        read_snapshot_on(&grid, std::io::BufReader::new(file))?
    };
    let fine_ref = ObservationVector::read_csv_path(&grid, &cfg.reference.observations)?;
    let bc = BoundarySpec::unit_drop();
    let ref_k = ref_field.exp();
    let coarse_ref = match cfg.likelihood.coarse_data {
        CoarseDataKind::AveragedPressure => {
            let p_ref = solve_pressure(&ref_k, &bc, cfg.run.solver_tol)?;
            observe(&average_to_coarse(&p_ref, &coarse_grid)?, Parity::Black)
        }
        CoarseDataKind::UpscaledSolve => {
            let (kxx, kyy) = upscale(&ref_k, &coarse_grid)?;
            observe(
                &solve_pressure_directional(&kxx, &kyy, &bc, cfg.run.solver_tol)?,
                Parity::Black,
            )
        }
    };

    let conditioning: Option<MsmConditioning> = match &cfg.conditioning {
        Some(section) => {
            let meas = MeasurementSet::read_csv_path(&section.measurements)?;
            Some(build_msm_conditioning(&dd, &local_basis, &spec, &meas)?)
        }
        None => None,
    };

    let sampler = cfg.sampler_config()?;
    let ctx = ChainContext {
        dd: &dd,
        coarse_grid,
        local_basis: &local_basis,
        sampler: &sampler,
        bc,
        fine_ref: &fine_ref,
        coarse_ref: &coarse_ref,
        sigma_f2: cfg.likelihood.sigma_f2,
        sigma_c2: cfg.likelihood.sigma_c2,
        solver_tol: cfg.run.solver_tol,
        conditioning: conditioning.as_ref(),
    };

    let out = cfg.output.dir.clone();
    let opts = RunOptions {
        proposals: cfg.run.proposals,
        base_seed: cfg.run.seed,
        omega: cfg.sampler.overdispersion,
        checkpoint_dir: Some(out.join("checkpoints")),
        checkpoint_every: cfg.run.checkpoint_every,
    };
    let records: Vec<ChainRecord> =
        run_chains(&ctx, cfg.run.chains, &opts).into_iter().collect::<Result<_>>()?;

    let mut writer = OutputWriter::new(&out);
    for record in &records {
        writer.write(&format!("chains/chain{}.csv", record.chain_id), record.to_csv().as_bytes())?;
        writer.write(
            &format!("diagnostics/chain{}_trace.csv", record.chain_id),
            trace_csv(record).as_bytes(),
        )?;
    }

    let convergence = if records.len() >= 2 {
        let burn_in = cfg.burn_in_for(cfg.run.proposals);
        let report = convergence_report(&records, burn_in, cfg.run.convergence_points)?;
        writer.write("diagnostics/convergence.csv", report.to_csv().as_bytes())?;
        Some(report.final_point())
    } else {
        None
    };

    let per_chain: Vec<ChainAcceptance> = records
        .iter()
        .map(|r| ChainAcceptance {
            chain_id: r.chain_id,
            proposals: r.n_proposals() as u64,
            coarse_rate: r.coarse_acceptance_rate(),
            rate: r.acceptance_rate(),
        })
        .collect();
    let total: u64 = per_chain.iter().map(|c| c.proposals).sum();
    let overall_coarse_rate = per_chain
        .iter()
        .map(|c| c.coarse_rate * c.proposals as f64)
        .sum::<f64>()
        / total.max(1) as f64;
    let overall_rate =
        per_chain.iter().map(|c| c.rate * c.proposals as f64).sum::<f64>() / total.max(1) as f64;
    writer.write(
        "diagnostics/acceptance.csv",
        acceptance_csv(&per_chain, overall_coarse_rate, overall_rate, total).as_bytes(),
    )?;

    // Requested field snapshots, synthesized from the recorded states.
    let m_c = dd.n_subdomains();
    for record in &records {
        for &t in &cfg.run.snapshot_iterations {
            let theta = ThetaVector::from_values(
                record.theta_at(t as usize).to_vec(),
                m_c,
                n_c,
                cfg.sampler.block_size,
            )?;
            let field = ctx.synthesize(&theta, None)?;
            writer.write(
                &format!("snapshots/chain{}_iter{t}.txt", record.chain_id),
                field.to_snapshot().as_bytes(),
            )?;
        }
    }

    // Final checkpoints were written by the chains themselves.
    for record in &records {
        writer.record_existing(&format!("checkpoints/chain{}.json", record.chain_id))?;
    }

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        crate_name: env!("CARGO_PKG_NAME").to_string(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: ioutil::sha256_hex(cfg.to_toml_string().as_bytes()),
        seed: cfg.run.seed,
        chains: cfg.run.chains,
        proposals: cfg.run.proposals,
        inputs: ManifestInputs {
            reference_field: ioutil::sha256_file(&cfg.reference.field)?,
            reference_observations: ioutil::sha256_file(&cfg.reference.observations)?,
            measurements: match &cfg.conditioning {
                Some(section) => Some(ioutil::sha256_file(&section.measurements)?),
                None => None,
            },
        },
        files: writer.into_files(),
    };
    ioutil::write_atomic(&out.join("manifest.toml"), manifest.to_toml_string().as_bytes())?;

    Ok(RunSummary {
        out_dir: out,
        chains: cfg.run.chains,
        proposals: cfg.run.proposals,
        convergence,
        per_chain,
        overall_coarse_rate,
        overall_rate,
    })
}

/// Digest of one run in a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct RunDigest {
    pub index: usize,
    pub dir: String,
    pub final_iteration: u64,
    pub final_psrf_max: f64,
    pub final_mpsrf: f64,
    pub overall_coarse_rate: f64,
    pub overall_rate: f64,
}

/// Outcome of `compare_runs`.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub digests: Vec<RunDigest>,
    pub csv_path: PathBuf,
}

impl Comparison {
    pub fn to_text(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(out, "comparison written to {}", self.csv_path.display());
        for d in &self.digests {
            let _ = writeln!(
                out,
                "run {} ({}): final mpsrf = {} (max psrf = {}) at {} proposals; coarse acceptance {:.4}, acceptance {:.4}",
                d.index,
                d.dir,
                d.final_mpsrf,
                d.final_psrf_max,
                d.final_iteration,
                d.overall_coarse_rate,
                d.overall_rate
            );
        }
        out.trim_end().to_string()
    }
}

/// Compares the convergence traces of runs over identical inputs and
/// writes them as one long-format CSV (`run,iteration,psrf_max,mpsrf`).
/// Runs whose input hashes differ are refused: their factors would
/// describe different posteriors.
pub fn compare_runs(dirs: &[PathBuf], out_csv: &Path) -> Result<Comparison> {
    if dirs.len() < 2 {
        return Err(MsmError::Argument(format!(
            "need at least two runs to compare, got {}",
            dirs.len()
        )));
    }
    let manifests: Vec<Manifest> =
        dirs.iter().map(|d| Manifest::load(&d.join("manifest.toml"))).collect::<Result<_>>()?;
    for (dir, manifest) in dirs.iter().zip(&manifests).skip(1) {
        if manifest.inputs != manifests[0].inputs {
            return Err(MsmError::Argument(format!(
                "run {} used different input data than run {}; refusing to compare",
                dir.display(),
                dirs[0].display()
            )));
        }
    }

    use std::fmt::Write as _;
    let mut csv = String::from("run,iteration,psrf_max,mpsrf\n");
    let mut digests = Vec::with_capacity(dirs.len());
    for (index, dir) in dirs.iter().enumerate() {
        let conv_path = dir.join("diagnostics").join("convergence.csv");
        let file = std::fs::File::open(&conv_path)?;
        let points = parse_convergence_csv(std::io::BufReader::new(file))?;
        for p in &points {
            let _ = writeln!(csv, "{index},{},{},{}", p.iteration, p.psrf_max, p.mpsrf);
        }
        let acc_path = dir.join("diagnostics").join("acceptance.csv");
        let file = std::fs::File::open(&acc_path)?;
        let rows = parse_acceptance_csv(std::io::BufReader::new(file))?;
        let overall = rows.iter().find(|r| r.label == "overall").ok_or_else(|| {
            MsmError::Data(format!("{} lacks an overall acceptance row", acc_path.display()))
        })?;
        let last = points.last().expect("convergence files hold at least one row");
        digests.push(RunDigest {
            index,
            dir: dir.display().to_string(),
            final_iteration: last.iteration,
            final_psrf_max: last.psrf_max,
            final_mpsrf: last.mpsrf,
            overall_coarse_rate: overall.coarse_rate,
            overall_rate: overall.rate,
        });
    }
    ioutil::write_atomic(out_csv, csv.as_bytes())?;
    Ok(Comparison { digests, csv_path: out_csv.to_path_buf() })
}

/// What `condition_demo` produced.
#[derive(Debug, Clone)]
pub struct DemoSummary {
    pub out_dir: PathBuf,
    pub draws: usize,
    pub n_measurements: usize,
    pub max_abs_error: f64,
}

/// Draws conditioned global samples and reports how closely they honor
/// the point measurements. Writes a report, the kriged mean, and the
/// first conditioned sample under the output directory.
pub fn condition_demo(cfg: &Config, draws: usize, seed: u64) -> Result<DemoSummary> {
    cfg.validate()?;
    if draws == 0 {
        return Err(MsmError::Argument("need at least one draw".into()));
    }
    let section = cfg.conditioning.as_ref().ok_or_else(|| {
        MsmError::Config("the conditioning demo needs a [conditioning] section".into())
    })?;
    let grid = cfg.fine_grid()?;
    let spec = cfg.covariance_spec()?;
    let pairs = load_or_compute(
        cfg.kle.cache_dir.as_deref(),
        &grid,
        &spec,
        cfg.kle.n_modes,
        &EigenOptions::default(),
    )?;
    let basis: KLBasis = truncate(&pairs, Truncation::FixedCount(cfg.kle.n_modes))?;
    let meas = MeasurementSet::read_csv_path(&section.measurements)?;
    let cond = Conditioning::build(&grid, &spec, &basis, &meas)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_abs_error = 0.0f64;
    let mut per_measurement = vec![0.0f64; meas.len()];
    let mut first_sample: Option<ScalarField> = None;
    for _ in 0..draws {
        let theta: Vec<f64> =
            (0..basis.n_modes()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let field = cond.synthesize(&basis, &theta)?;
        for (a, &cell) in cond.measurement_cells().iter().enumerate() {
            let err = (field.value(cell) - meas.values()[a]).abs();
            per_measurement[a] = per_measurement[a].max(err);
            max_abs_error = max_abs_error.max(err);
        }
        if first_sample.is_none() {
            first_sample = Some(field);
        }
    }

    use std::fmt::Write as _;
    let mut report = String::new();
    let _ = writeln!(report, "conditioned synthesis check");
    let _ = writeln!(report, "measurements = {}", meas.len());
    let _ = writeln!(report, "draws = {draws}");
    let _ = writeln!(report, "max_abs_error = {max_abs_error}");
    for (a, ((x, y), err)) in meas.locations().iter().zip(&per_measurement).enumerate() {
        let _ = writeln!(
            report,
            "measurement {a}: x = {x}, y = {y}, target = {}, max_abs_error = {err}",
            meas.values()[a]
        );
    }
    let out = cfg.output.dir.clone();
    ioutil::write_atomic(&out.join("report.txt"), report.as_bytes())?;
    ioutil::write_atomic(&out.join("kriged.txt"), cond.kriged().to_snapshot().as_bytes())?;
    let sample = first_sample.expect("at least one draw");
    ioutil::write_atomic(&out.join("sample.txt"), sample.to_snapshot().as_bytes())?;
    Ok(DemoSummary { out_dir: out, draws, n_measurements: meas.len(), max_abs_error })
}
