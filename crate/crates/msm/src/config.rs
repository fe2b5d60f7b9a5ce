//! Run configuration: a TOML schema with strict validation, path
//! resolution relative to the config file, and derived constructors for
//! the geometry, prior, and sampler objects.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{MsmError, Result};
use crate::kle::CovarianceSpec;
use crate::mesh::{CartesianGrid, DomainDecomposition};
use crate::sampler::{AveragingRule, AveragingScope, NeighborhoodShape, SamplerConfig};

fn default_zero() -> f64 {
    0.0
}
fn default_one() -> f64 {
    1.0
}
fn default_overdispersion() -> f64 {
    2.0
}
fn default_convergence_points() -> usize {
    16
}
fn default_solver_tol() -> f64 {
    crate::forward::DEFAULT_SOLVER_TOL
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "default_zero")]
    pub x0: f64,
    #[serde(default = "default_zero")]
    pub y0: f64,
    #[serde(default = "default_one")]
    pub x1: f64,
    #[serde(default = "default_one")]
    pub y1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoarseSection {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionSection {
    pub mx: usize,
    pub my: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceSection {
    pub sigma2: f64,
    pub lx: f64,
    pub ly: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KleSection {
    /// Total retained modes across all subdomains.
    pub n_modes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NeighborhoodKind {
    #[default]
    Circle,
    Ellipse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AveragingKind {
    #[default]
    VariancePreserving,
    Mean,
    DistanceWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScopeKind {
    /// Average every band cell once per proposal.
    #[default]
    FullBand,
    /// Average only the active subdomain's band cells per proposal.
    ActiveSubdomain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub beta: f64,
    /// Coordinates updated per proposal within a subdomain.
    pub block_size: usize,
    /// Interface band half-width; default half the smaller correlation
    /// length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_halfwidth: Option<f64>,
    #[serde(default)]
    pub neighborhood: NeighborhoodKind,
    /// Elliptical neighborhood semi-axes; default half the correlation
    /// lengths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semi_axis_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semi_axis_y: Option<f64>,
    #[serde(default)]
    pub averaging: AveragingKind,
    #[serde(default)]
    pub scope: ScopeKind,
    /// Scale of the overdispersed initial states.
    #[serde(default = "default_overdispersion")]
    pub overdispersion: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CoarseDataKind {
    /// Coarse reference observations are cell averages of the fine
    /// reference pressure.
    #[default]
    AveragedPressure,
    /// Coarse reference observations come from a coarse solve on the
    /// upscaled reference permeability.
    UpscaledSolve,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LikelihoodSection {
    pub sigma_f2: f64,
    pub sigma_c2: f64,
    #[serde(default)]
    pub coarse_data: CoarseDataKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub chains: usize,
    pub proposals: u64,
    pub seed: u64,
    #[serde(default = "default_zero")]
    pub burn_in_fraction: f64,
    /// Checkpoint cadence in proposals; 0 checkpoints only at the end.
    #[serde(default)]
    pub checkpoint_every: u64,
    #[serde(default = "default_convergence_points")]
    pub convergence_points: usize,
    /// Iterations at which per-chain field snapshots are written.
    #[serde(default)]
    pub snapshot_iterations: Vec<u64>,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    /// Reference log-permeability snapshot.
    pub field: PathBuf,
    /// Reference observation CSV (fine grid, black cells).
    pub observations: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditioningSection {
    /// Point measurement CSV used for kriging and projection.
    pub measurements: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_output_dir")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_output_dir() }
    }
}

/// Complete run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub grid: GridSection,
    pub coarse: CoarseSection,
    pub decomposition: DecompositionSection,
    pub covariance: CovarianceSection,
    pub kle: KleSection,
    pub sampler: SamplerSection,
    pub likelihood: LikelihoodSection,
    pub run: RunSection,
    pub reference: ReferenceSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditioning: Option<ConditioningSection>,
    #[serde(default)]
    pub output: OutputSection,
}

impl Config {
    /// A ready-to-run example: 16 x 16 fine grid, 8 x 8 coarse grid,
    /// 2 x 2 decomposition, 20 total modes in blocks of 5.
    pub const EXAMPLE_TOML: &'static str = r#"[grid]
nx = 16
ny = 16

[coarse]
nx = 8
ny = 8

[decomposition]
mx = 2
my = 2

[covariance]
sigma2 = 1.0
lx = 0.2
ly = 0.2

[kle]
n_modes = 20

[sampler]
beta = 0.5
block_size = 1

[likelihood]
sigma_f2 = 1e-3
sigma_c2 = 5e-3

[run]
chains = 4
proposals = 20000
seed = 7

[reference]
field = "reference/field.txt"
observations = "reference/observations.csv"
"#;

    pub fn example() -> Config {
        Config::from_toml_str(Self::EXAMPLE_TOML).expect("example config parses")
    }

    pub fn from_toml_str(text: &str) -> Result<Config> {
        let cfg: Config =
            toml::from_str(text).map_err(|e| MsmError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// Loads, validates, and resolves relative paths against the config
    /// file's directory.
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Config::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    /// Joins every relative path in the config onto `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        resolve(&mut self.reference.field);
        resolve(&mut self.reference.observations);
        if let Some(cond) = &mut self.conditioning {
            resolve(&mut cond.measurements);
        }
        if let Some(dir) = &mut self.kle.cache_dir {
            resolve(dir);
        }
        resolve(&mut self.output.dir);
    }

    pub fn fine_grid(&self) -> Result<CartesianGrid> {
        CartesianGrid::new(
            self.grid.nx,
            self.grid.ny,
            self.grid.x0,
            self.grid.y0,
            self.grid.x1,
            self.grid.y1,
        )
        .map_err(|e| MsmError::Config(format!("grid: {e}")))
    }

    pub fn coarse_grid(&self) -> Result<CartesianGrid> {
        CartesianGrid::new(
            self.coarse.nx,
            self.coarse.ny,
            self.grid.x0,
            self.grid.y0,
            self.grid.x1,
            self.grid.y1,
        )
        .map_err(|e| MsmError::Config(format!("coarse: {e}")))
    }

    pub fn decomposition(&self) -> Result<DomainDecomposition> {
        let grid = self.fine_grid()?;
        DomainDecomposition::new(&grid, self.decomposition.mx, self.decomposition.my)
            .map_err(|e| MsmError::Config(format!("decomposition: {e}")))
    }

    pub fn covariance_spec(&self) -> Result<CovarianceSpec> {
        CovarianceSpec::new(self.covariance.sigma2, self.covariance.lx, self.covariance.ly)
            .map_err(|e| MsmError::Config(format!("covariance: {e}")))
    }

    pub fn n_subdomains(&self) -> usize {
        self.decomposition.mx * self.decomposition.my
    }

    /// Modes retained per subdomain.
    pub fn modes_per_subdomain(&self) -> Result<usize> {
        let m_c = self.n_subdomains();
        if m_c == 0 || self.kle.n_modes == 0 || self.kle.n_modes % m_c != 0 {
            return Err(MsmError::Config(format!(
                "kle.n_modes = {} must be a positive multiple of the {} subdomains",
                self.kle.n_modes, m_c
            )));
        }
        Ok(self.kle.n_modes / m_c)
    }

    /// Interface band half-width, defaulted to half the smaller
    /// correlation length.
    pub fn band_halfwidth(&self) -> f64 {
        self.sampler
            .band_halfwidth
            .unwrap_or_else(|| 0.5 * self.covariance.lx.min(self.covariance.ly))
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig> {
        let shape = match self.sampler.neighborhood {
            NeighborhoodKind::Circle => NeighborhoodShape::Circle,
            NeighborhoodKind::Ellipse => NeighborhoodShape::Ellipse,
        };
        let rule = match self.sampler.averaging {
            AveragingKind::VariancePreserving => AveragingRule::VariancePreserving,
            AveragingKind::Mean => AveragingRule::Mean,
            AveragingKind::DistanceWeighted => AveragingRule::DistanceWeighted,
        };
        let scope = match self.sampler.scope {
            ScopeKind::FullBand => AveragingScope::FullBand,
            ScopeKind::ActiveSubdomain => AveragingScope::ActiveSubdomain,
        };
        let ax = self.sampler.semi_axis_x.unwrap_or(0.5 * self.covariance.lx);
        let ay = self.sampler.semi_axis_y.unwrap_or(0.5 * self.covariance.ly);
        SamplerConfig::new(
            self.sampler.beta,
            self.sampler.block_size,
            self.band_halfwidth(),
            shape,
            (ax, ay),
            rule,
            scope,
        )
        .map_err(|e| MsmError::Config(format!("sampler: {e}")))
    }

    /// Burn-in proposal count for a run of the given length.
    pub fn burn_in_for(&self, proposals: u64) -> usize {
        (self.run.burn_in_fraction * proposals as f64).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.fine_grid()?;
        self.coarse_grid()?;
        if grid.nx % self.coarse.nx != 0 || grid.ny % self.coarse.ny != 0 {
            return Err(MsmError::Config(format!(
                "coarse {} x {} must divide grid {} x {}",
                self.coarse.nx, self.coarse.ny, grid.nx, grid.ny
            )));
        }
        let dd = self.decomposition()?;
        self.covariance_spec()?;
        let n_c = self.modes_per_subdomain()?;
        let local_cells = dd.local_grid().n_cells();
        if n_c > local_cells {
            return Err(MsmError::Config(format!(
                "kle.n_modes gives {n_c} modes per subdomain, more than the {local_cells} local cells"
            )));
        }
        if self.sampler.block_size == 0 || n_c % self.sampler.block_size != 0 {
            return Err(MsmError::Config(format!(
                "sampler.block_size = {} must divide the {n_c} modes per subdomain",
                self.sampler.block_size
            )));
        }
        self.sampler_config()?;
        if !(self.sampler.overdispersion > 0.0 && self.sampler.overdispersion.is_finite()) {
            return Err(MsmError::Config(format!(
                "sampler.overdispersion must be positive, got {}",
                self.sampler.overdispersion
            )));
        }
        if !(self.likelihood.sigma_f2 > 0.0) || !(self.likelihood.sigma_c2 > 0.0) {
            return Err(MsmError::Config(
                "likelihood.sigma_f2 and likelihood.sigma_c2 must be positive".into(),
            ));
        }
        if self.run.chains == 0 {
            return Err(MsmError::Config("run.chains must be at least 1".into()));
        }
        if self.run.proposals == 0 {
            return Err(MsmError::Config("run.proposals must be at least 1".into()));
        }
        if !(self.run.burn_in_fraction >= 0.0 && self.run.burn_in_fraction < 1.0) {
            return Err(MsmError::Config(format!(
                "run.burn_in_fraction must lie in [0, 1), got {}",
                self.run.burn_in_fraction
            )));
        }
        if self.run.convergence_points == 0 {
            return Err(MsmError::Config("run.convergence_points must be at least 1".into()));
        }
        if !(self.run.solver_tol > 0.0 && self.run.solver_tol < 1.0) {
            return Err(MsmError::Config(format!(
                "run.solver_tol must lie in (0, 1), got {}",
                self.run.solver_tol
            )));
        }
        for &t in &self.run.snapshot_iterations {
            if t > self.run.proposals {
                return Err(MsmError::Config(format!(
                    "run.snapshot_iterations entry {t} exceeds run.proposals = {}",
                    self.run.proposals
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn example_config_parses_with_defaults() {
        let cfg = Config::example();
        assert_eq!(cfg.grid.nx, 16);
        assert_eq!(cfg.coarse.ny, 8);
        assert_eq!(cfg.n_subdomains(), 4);
        assert_eq!(cfg.modes_per_subdomain().unwrap(), 5);
        // Defaults.
        assert_eq!(cfg.grid.x0, 0.0);
        assert_eq!(cfg.grid.x1, 1.0);
        assert_eq!(cfg.sampler.overdispersion, 2.0);
        assert_eq!(cfg.sampler.neighborhood, NeighborhoodKind::Circle);
        assert_eq!(cfg.sampler.averaging, AveragingKind::VariancePreserving);
        assert_eq!(cfg.sampler.scope, ScopeKind::FullBand);
        assert_eq!(cfg.likelihood.coarse_data, CoarseDataKind::AveragedPressure);
        assert_eq!(cfg.run.burn_in_fraction, 0.0);
        assert_eq!(cfg.run.checkpoint_every, 0);
        assert_eq!(cfg.run.convergence_points, 16);
        assert!(cfg.run.snapshot_iterations.is_empty());
        assert_eq!(cfg.run.solver_tol, 1e-10);
        assert_eq!(cfg.output.dir, PathBuf::from("out"));
        assert!(cfg.conditioning.is_none());
        // Derived values.
        assert_relative_eq!(cfg.band_halfwidth(), 0.1, max_relative = 1e-15);
        assert_eq!(cfg.burn_in_for(20000), 0);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut cfg = Config::example();
        cfg.sampler.band_halfwidth = Some(0.07);
        cfg.sampler.neighborhood = NeighborhoodKind::Ellipse;
        cfg.sampler.averaging = AveragingKind::DistanceWeighted;
        cfg.sampler.scope = ScopeKind::ActiveSubdomain;
        cfg.likelihood.coarse_data = CoarseDataKind::UpscaledSolve;
        cfg.run.burn_in_fraction = 0.25;
        cfg.run.snapshot_iterations = vec![100, 500];
        cfg.conditioning =
            Some(ConditioningSection { measurements: PathBuf::from("wells.csv") });
        cfg.kle.cache_dir = Some(PathBuf::from("cache"));
        let text = cfg.to_toml_string();
        let back = Config::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn enums_use_snake_case_names() {
        let text = Config::EXAMPLE_TOML.replace(
            "block_size = 1",
            "block_size = 1\nneighborhood = \"ellipse\"\naveraging = \"distance_weighted\"\nscope = \"active_subdomain\"",
        );
        let cfg = Config::from_toml_str(&text).unwrap();
        assert_eq!(cfg.sampler.neighborhood, NeighborhoodKind::Ellipse);
        assert_eq!(cfg.sampler.averaging, AveragingKind::DistanceWeighted);
        assert_eq!(cfg.sampler.scope, ScopeKind::ActiveSubdomain);
    }

    #[test]
    fn unknown_fields_and_missing_sections_are_rejected() {
        let with_unknown = Config::EXAMPLE_TOML.replace("beta = 0.5", "beta = 0.5\nbogus = 1");
        assert!(Config::from_toml_str(&with_unknown).is_err());
        let missing = Config::EXAMPLE_TOML.replace("[reference]", "[badsection]");
        assert!(Config::from_toml_str(&missing).is_err());
    }

    fn expect_invalid(edit: impl FnOnce(&mut Config)) {
        let mut cfg = Config::example();
        edit(&mut cfg);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn validation_catches_structural_mistakes() {
        expect_invalid(|c| c.coarse.nx = 7); // does not divide 16
        expect_invalid(|c| c.decomposition.mx = 3); // does not divide 16
        expect_invalid(|c| c.kle.n_modes = 18); // not a multiple of 4
        expect_invalid(|c| c.sampler.block_size = 3); // does not divide 5
        expect_invalid(|c| c.kle.n_modes = 4 * 70); // exceeds 64 local cells
        expect_invalid(|c| c.sampler.beta = 1.5);
        expect_invalid(|c| c.sampler.overdispersion = 0.0);
        expect_invalid(|c| c.likelihood.sigma_f2 = 0.0);
        expect_invalid(|c| c.run.chains = 0);
        expect_invalid(|c| c.run.proposals = 0);
        expect_invalid(|c| c.run.burn_in_fraction = 1.0);
        expect_invalid(|c| c.run.convergence_points = 0);
        expect_invalid(|c| c.run.solver_tol = 0.0);
        expect_invalid(|c| c.run.snapshot_iterations = vec![30000]);
        expect_invalid(|c| c.grid.x1 = 0.0); // empty extent
        expect_invalid(|c| c.covariance.sigma2 = -1.0);
        expect_invalid(|c| c.sampler.band_halfwidth = Some(-0.1));
    }

    #[test]
    fn paths_resolve_against_the_config_directory() {
        let mut cfg = Config::example();
        cfg.conditioning =
            Some(ConditioningSection { measurements: PathBuf::from("wells.csv") });
        cfg.kle.cache_dir = Some(PathBuf::from("/abs/cache"));
        cfg.resolve_paths(Path::new("/base"));
        assert_eq!(cfg.reference.field, PathBuf::from("/base/reference/field.txt"));
        assert_eq!(
            cfg.reference.observations,
            PathBuf::from("/base/reference/observations.csv")
        );
        assert_eq!(
            cfg.conditioning.as_ref().unwrap().measurements,
            PathBuf::from("/base/wells.csv")
        );
        // Absolute paths stay put.
        assert_eq!(cfg.kle.cache_dir.as_ref().unwrap(), &PathBuf::from("/abs/cache"));
        assert_eq!(cfg.output.dir, PathBuf::from("/base/out"));
    }

    #[test]
    fn load_reads_and_resolves_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, Config::EXAMPLE_TOML).unwrap();
        let cfg = Config::load(&path).unwrap();
        assert_eq!(cfg.reference.field, dir.path().join("reference/field.txt"));
        assert!(Config::load(&dir.path().join("missing.toml")).is_err());
    }

    #[test]
    fn burn_in_fraction_floors() {
        let mut cfg = Config::example();
        cfg.run.burn_in_fraction = 0.25;
        assert_eq!(cfg.burn_in_for(1000), 250);
        assert_eq!(cfg.burn_in_for(1001), 250);
        assert_eq!(cfg.burn_in_for(3), 0);
    }
}
