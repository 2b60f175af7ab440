//! Experiment configuration files and the built-in presets.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use simplex_langevin_core::calculus::{Quadratic, Zero};
use simplex_langevin_core::{
    generator, BoundaryPolicy, Geometry, GraphSpec, MeanFunction, PhiDivergence, ProbabilityVector, SdeConfig,
    SimplexFunctional, WeightedGraph,
};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

pub const PRESETS: [(&str, &str); 2] = [
    ("example5", include_str!("../presets/example5.json")),
    ("example6", include_str!("../presets/example6.json")),
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub graph: GraphSpec,
    /// A mean name such as `geometric`, `logarithmic` or `phi:kl`.
    pub mean: String,
    /// `none`, `phi-divergence:<generator>` or `quadratic-well`.
    #[serde(default = "no_potential")]
    pub potential: String,
    pub beta: f64,
    pub dt: f64,
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub boundary: BoundaryPolicy,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Initial state; uniform when absent.
    #[serde(default)]
    pub p0: Option<Vec<f64>>,
    /// Keep every `record_every`-th state in trajectory files.
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default = "one")]
    pub ensemble: usize,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Relative threshold below which eigenvalues of L(p) count as zero.
    #[serde(default)]
    pub zero_tolerance: Option<f64>,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub twopoint: TwoPointSettings,
}

/// Output file names, resolved against `--out`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub trajectory: PathBuf,
    pub summary: PathBuf,
    pub density: PathBuf,
    pub histogram: PathBuf,
    pub twopoint_summary: PathBuf,
    pub report: PathBuf,
    pub plot_data: PathBuf,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            trajectory: "trajectory.csv".into(),
            summary: "summary.json".into(),
            density: "density.csv".into(),
            histogram: "histogram.csv".into(),
            twopoint_summary: "twopoint.json".into(),
            report: "validate.json".into(),
            plot_data: "plot_data.csv".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoPointSettings {
    pub bins: usize,
    pub burn_in: f64,
    pub grid_points: usize,
    pub quadrature_nodes: usize,
}

impl Default for TwoPointSettings {
    fn default() -> Self {
        Self {
            bins: 50,
            burn_in: 0.1,
            grid_points: 200,
            quadrature_nodes: 200,
        }
    }
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn no_potential() -> String {
    "none".into()
}

fn default_epsilon() -> f64 {
    1e-3
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        if cfg.ensemble == 0 {
            return Err(CliError::Config("ensemble must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn preset(name: &str) -> CliResult<Self> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                let known: Vec<_> = PRESETS.iter().map(|(n, _)| *n).collect();
                CliError::Config(format!("unknown preset `{name}` (known: {})", known.join(", ")))
            })?;
        Self::parse(text)
    }

    /// Reads `path`, falling back to a preset name when no such file exists.
    pub fn load(source: &str) -> CliResult<Self> {
        let path = Path::new(source);
        if !path.exists() && PRESETS.iter().any(|(n, _)| *n == source) {
            return Self::preset(source);
        }
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{source}: {e}")))?;
        Self::parse(&text)
    }

    pub fn sde(&self) -> SdeConfig {
        let mut sde = SdeConfig::new(self.beta, self.dt, self.steps, self.seed);
        sde.boundary = self.boundary;
        sde.epsilon = self.epsilon;
        sde.record_every = self.record_every;
        sde
    }

    /// Builds the graph, geometry, potential and initial state.
    pub fn instance(&self) -> CliResult<Instance> {
        let graph = WeightedGraph::from_spec(&self.graph).map_err(CliError::config)?;
        let mean = MeanFunction::from_name(&self.mean).map_err(CliError::config)?;
        let potential = build_potential(&self.potential, &graph)?;
        let mut geometry = Geometry::new(graph, mean);
        if let Some(tau) = self.zero_tolerance {
            if !(tau > 0.0) {
                return Err(CliError::Config(format!("zero_tolerance must be positive, got {tau}")));
            }
            geometry = geometry.with_zero_tolerance(tau);
        }
        let n = geometry.n();
        let p0 = match &self.p0 {
            Some(v) => ProbabilityVector::interior(v.clone()).map_err(CliError::config)?.into_vector(),
            None => ProbabilityVector::uniform(n).into_vector(),
        };
        if p0.len() != n {
            return Err(CliError::Config(format!("p0 has {} entries, graph has {n} vertices", p0.len())));
        }
        let sde = self.sde();
        sde.validate(n).map_err(CliError::config)?;
        Ok(Instance {
            geometry,
            potential,
            sde,
            p0,
        })
    }
}

pub fn build_potential(name: &str, graph: &WeightedGraph) -> CliResult<Arc<dyn SimplexFunctional>> {
    if name == "none" {
        return Ok(Arc::new(Zero));
    }
    if name == "quadratic-well" {
        // ½‖p − π‖²
        let pi = graph.volume().as_vector().clone();
        let n = pi.len();
        let c = 0.5 * pi.norm_squared();
        let q = Quadratic::new(DMatrix::identity(n, n), -pi, c).map_err(CliError::config)?;
        return Ok(Arc::new(q));
    }
    if let Some(g) = name.strip_prefix("phi-divergence:") {
        return Ok(Arc::new(PhiDivergence::new(generator(g).map_err(CliError::config)?, graph)));
    }
    Err(CliError::Config(format!(
        "unknown potential `{name}` (expected none, quadratic-well or phi-divergence:<generator>)"
    )))
}

pub struct Instance {
    pub geometry: Geometry,
    pub potential: Arc<dyn SimplexFunctional>,
    pub sde: SdeConfig,
    pub p0: DVector<f64>,
}

/// `trajectory.csv` for a single run, `trajectory_<k>.csv` for ensemble member `k`.
pub fn member_path(base: &Path, member: usize, ensemble: usize) -> PathBuf {
    if ensemble == 1 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectory");
    let name = match base.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{member}.{ext}"),
        None => format!("{stem}_{member}"),
    };
    base.with_file_name(name)
}
