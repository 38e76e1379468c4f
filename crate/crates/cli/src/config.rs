use std::path::{Path, PathBuf};

use dcot::eval::SynthSpec;
use dcot::io::{format_partition, parse_partition};
use dcot::loss::LossFamily;
use dcot::model::{InitKind, InitStrategy, SubjectPartition};
use dcot::similarity::{DegeneratePolicy, Kernel, DEFAULT_NEIGHBOR_CAP, DIFFERENT_LABEL, SAME_LABEL};
use dcot::solver::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Coo,
    Dense,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Coo => "coo",
            Format::Dense => "dct",
        }
    }
}

/// A run description, read from JSON. Relative paths are resolved against
/// the directory holding the config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides every other seed in the file when set.
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub threads: usize,
    pub format: Format,
    pub synth: Option<SynthConfig>,
    pub data: Option<DataConfig>,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub solver: SolverConfig,
    pub evaluate: Option<EvaluateConfig>,
    pub grid: GridConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub shape: Vec<usize>,
    pub ranks: Vec<usize>,
    /// Partition grammar, e.g. `mode=1: [1,2,3], [4,5]`.
    pub partition: String,
    pub family: LossFamily,
    pub noise: f64,
    pub missing: f64,
    pub seed: u64,
    pub core_scale: Option<f64>,
    pub subject_core_scale: f64,
    /// 1-based modes with identity factors.
    pub identity_modes: Vec<usize>,
    pub shared_global_core: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let d = SynthSpec::default();
        SynthConfig {
            shape: d.shape,
            ranks: d.ranks,
            partition: String::new(),
            family: d.family,
            noise: d.noise,
            missing: d.missing,
            seed: d.seed,
            core_scale: d.core_scale,
            subject_core_scale: d.subject_core_scale,
            identity_modes: Vec::new(),
            shared_global_core: false,
        }
    }
}

impl SynthConfig {
    pub fn to_spec(&self) -> Result<SynthSpec, CliError> {
        let identity_modes = self
            .identity_modes
            .iter()
            .map(|&m| m.checked_sub(1).ok_or_else(|| CliError::Config("identity_modes are 1-based".into())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SynthSpec {
            shape: self.shape.clone(),
            ranks: self.ranks.clone(),
            partition: parse_partition(&self.partition).map_err(CliError::config)?,
            family: self.family,
            noise: self.noise,
            missing: self.missing,
            seed: self.seed,
            core_scale: self.core_scale,
            subject_core_scale: self.subject_core_scale,
            identity_modes,
            shared_global_core: self.shared_global_core,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Observed entries (COO text or dense binary with NaN for missing).
    pub observed: PathBuf,
    /// Optional held-out entries scored after fitting.
    #[serde(default)]
    pub test: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub ranks: Vec<usize>,
    /// One init kind for all modes or one per mode.
    pub init: Vec<InitKind>,
    pub init_seed: u64,
    pub partition: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            ranks: Vec::new(),
            init: vec![InitKind::Hosvd],
            init_seed: 0,
            partition: String::new(),
        }
    }
}

impl ModelConfig {
    pub fn strategy(&self) -> InitStrategy {
        InitStrategy::per_mode(self.init.clone(), self.init_seed)
    }

    pub fn subject_partition(&self) -> Result<SubjectPartition, CliError> {
        parse_partition(&self.partition).map_err(CliError::config)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub family: LossFamily,
    pub similarity: SimilarityConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    /// Every cell is smoothed only with itself.
    #[default]
    None,
    Kernel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityConfig {
    pub kind: SimilarityKind,
    pub kernel: Kernel,
    /// Per mode: a feature file, or `null` for no smoothing along that mode.
    pub features: Vec<Option<PathBuf>>,
    /// Per mode: a label file, or `null` for full consistency.
    pub labels: Vec<Option<PathBuf>>,
    /// Shared bandwidths; `null` picks ten around each mode's median distance.
    pub bandwidths: Option<Vec<f64>>,
    pub neighbor_cap: usize,
    pub normalized: bool,
    pub same_label: f64,
    pub different_label: f64,
    pub degenerate: DegeneratePolicy,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            kind: SimilarityKind::None,
            kernel: Kernel::Gaussian,
            features: Vec::new(),
            labels: Vec::new(),
            bandwidths: None,
            neighbor_cap: DEFAULT_NEIGHBOR_CAP,
            normalized: true,
            same_label: SAME_LABEL,
            different_label: DIFFERENT_LABEL,
            degenerate: DegeneratePolicy::Skip,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Dense prediction file, or a directory holding a fitted model.
    pub prediction: PathBuf,
    /// Reference entries (COO or dense).
    pub reference: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Candidate weights; `null` uses the 61-point grid from 1e-3 to 1e3.
    pub lambdas: Option<Vec<f64>>,
    pub train_fraction: f64,
    pub split_seed: u64,
    /// Search factor, G and H weights independently (cartesian product).
    pub per_block: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { lambdas: None, train_fraction: 0.9, split_seed: 0, per_block: false }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        if cfg.threads == 0 {
            cfg.threads = 1;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(o) = self.output.as_mut() {
            fix(o);
        }
        if let Some(d) = self.data.as_mut() {
            fix(&mut d.observed);
            if let Some(t) = d.test.as_mut() {
                fix(t);
            }
        }
        if let Some(e) = self.evaluate.as_mut() {
            fix(&mut e.prediction);
            fix(&mut e.reference);
        }
        let sim = &mut self.loss.similarity;
        sim.features.iter_mut().chain(sim.labels.iter_mut()).flatten().for_each(fix);
    }

    /// Pushes the top-level seed into every seeded section.
    pub fn apply_seed(&mut self) {
        if let Some(s) = self.seed {
            if let Some(syn) = self.synth.as_mut() {
                syn.seed = s;
            }
            self.model.init_seed = s;
            self.grid.split_seed = s;
        }
    }

    pub fn partition_text(&self) -> Result<String, CliError> {
        Ok(format_partition(&self.model.subject_partition()?))
    }
}
