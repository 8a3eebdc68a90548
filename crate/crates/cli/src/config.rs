use crate::CliError;
use driftpost::{
    DriftSpec, FunctionFamily, GridMeasure, NetSettings, PriorNet, QuadratureConfig, SimScheme, TestFunction,
    TransitionKlConfig, TransitionModel,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// One experiment, read from a JSON file. Relative paths resolve against the
/// directory holding the config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// The data-generating drift `b0`.
    #[serde(default)]
    pub truth: Option<DriftSpec>,
    /// Further drifts audited by `validate`.
    #[serde(default)]
    pub drifts: Vec<DriftSpec>,
    #[serde(default)]
    pub delta: Option<f64>,
    /// Number of transitions for `simulate` and `posterior`.
    #[serde(default)]
    pub n: Option<usize>,
    /// Values of `n` for `consistency`.
    #[serde(default)]
    pub n_schedule: Vec<usize>,
    #[serde(default)]
    pub scheme: Option<SimScheme>,
    #[serde(default)]
    pub model: Option<TransitionModel>,
    #[serde(default)]
    pub net: Option<NetConfig>,
    #[serde(default)]
    pub criterion: Option<CriterionConfig>,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub validation: ValidationGrid,
    /// Observation CSV for `ingest` and `posterior`.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub divergence: Option<DivergenceConfig>,
    #[serde(default)]
    pub identifiability: Option<IdentifiabilityConfig>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationGrid {
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_half_width() -> f64 {
    10.0
}

fn default_points() -> usize {
    201
}

impl Default for ValidationGrid {
    fn default() -> Self {
        ValidationGrid {
            half_width: default_half_width(),
            points: default_points(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetConfig {
    Covering {
        family: FunctionFamily,
        m_max: usize,
        l_max: usize,
        eps_schedule: Vec<f64>,
        /// Defaults to `2^-m`.
        #[serde(default)]
        q1: Option<Vec<f64>>,
        /// Defaults to `2^-l`.
        #[serde(default)]
        q2: Option<Vec<f64>>,
        #[serde(default)]
        atom_cap: Option<usize>,
    },
    Explicit {
        atoms: Vec<DriftSpec>,
        weights: Vec<f64>,
    },
    /// A net written by the `net` command.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CriterionConfig {
    L2Ball { radius: f64 },
    Weak { f: TestFunction, nu: NuConfig, epsilon: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NuConfig {
    Uniform {
        half_width: f64,
        points_per_axis: usize,
        total_mass: f64,
    },
    /// CSV with columns `x1..xd,weight`.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftPair {
    pub b: DriftSpec,
    pub b0: DriftSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceConfig {
    pub pairs: Vec<DriftPair>,
    #[serde(default)]
    pub transition: Option<TransitionKlConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifiabilityConfig {
    pub a: DriftSpec,
    pub b: DriftSpec,
    pub functions: Vec<TestFunction>,
    #[serde(default = "default_grid_half_width")]
    pub grid_half_width: f64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

fn default_grid_half_width() -> f64 {
    2.0
}

fn default_grid_points() -> usize {
    9
}

/// A parsed config with the raw bytes it came from.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub bytes: Vec<u8>,
    pub base: PathBuf,
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut de = serde_json::Deserializer::from_slice(&bytes);
    let config: ExperimentConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let inner = e.inner();
        CliError::Config(format!(
            "{}: line {}, column {}, field `{}`: {inner}",
            path.display(),
            inner.line(),
            inner.column(),
            e.path()
        ))
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, bytes, base })
}

impl Loaded {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn truth(&self) -> Result<&DriftSpec, CliError> {
        self.config.truth.as_ref().ok_or_else(|| missing("truth"))
    }

    pub fn delta(&self) -> Result<f64, CliError> {
        self.config.delta.ok_or_else(|| missing("delta"))
    }

    pub fn n(&self) -> Result<usize, CliError> {
        self.config.n.ok_or_else(|| missing("n"))
    }

    pub fn model(&self) -> TransitionModel {
        self.config.model.unwrap_or_else(TransitionModel::exact_ou)
    }

    /// The configured scheme, or the exact scheme for Ornstein-Uhlenbeck truths and 64 Euler substeps otherwise.
    pub fn scheme(&self, truth: &DriftSpec) -> SimScheme {
        self.config.scheme.unwrap_or_else(|| {
            if truth.ou_rate().is_some() {
                SimScheme::exact_ou()
            } else {
                SimScheme::euler(64)
            }
        })
    }

    pub fn net(&self, seed: u64) -> Result<PriorNet, CliError> {
        match self.config.net.as_ref().ok_or_else(|| missing("net"))? {
            NetConfig::Covering {
                family,
                m_max,
                l_max,
                eps_schedule,
                q1,
                q2,
                atom_cap,
            } => {
                let mut settings = NetSettings::dyadic(*m_max, *l_max, eps_schedule.clone(), seed);
                if let Some(q) = q1 {
                    settings.q1 = q.clone();
                }
                if let Some(q) = q2 {
                    settings.q2 = q.clone();
                }
                if let Some(cap) = atom_cap {
                    settings.atom_cap = *cap;
                }
                Ok(driftpost::build_net(family, &settings)?)
            }
            NetConfig::Explicit { atoms, weights } => Ok(PriorNet::explicit(atoms.clone(), weights.clone())?),
            NetConfig::File { path } => {
                let path = self.resolve(path);
                let text = std::fs::read(&path)
                    .map_err(|e| CliError::Config(format!("cannot read net {}: {e}", path.display())))?;
                serde_json::from_slice(&text)
                    .map_err(|e| CliError::Config(format!("net {}: {e}", path.display())))
            }
        }
    }

    pub fn nu(&self, nu: &NuConfig, dim: usize) -> Result<GridMeasure, CliError> {
        match nu {
            NuConfig::Uniform {
                half_width,
                points_per_axis,
                total_mass,
            } => Ok(GridMeasure::uniform(dim, *half_width, *points_per_axis, *total_mass)?),
            NuConfig::Csv { path } => {
                let path = self.resolve(path);
                let file = std::fs::File::open(&path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                Ok(GridMeasure::read_csv(file)?)
            }
        }
    }
}

fn missing(field: &str) -> CliError {
    CliError::Config(format!("config field `{field}` is required by this command"))
}

