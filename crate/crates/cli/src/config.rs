//! JSON run configurations. Relative paths resolve against the directory
//! holding the config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use romkit::{SampledMeasure, SnapshotEnsemble, Truncation};
use serde::de::DeserializeOwned;
use serde::Deserialize;

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn resolve(config_path: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        return p.to_path_buf();
    }
    config_path.parent().unwrap_or(Path::new(".")).join(p)
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum TruncationSpec {
    Rank(usize),
    Energy(f64),
}

impl From<TruncationSpec> for Truncation {
    fn from(t: TruncationSpec) -> Self {
        match t {
            TruncationSpec::Rank(n) => Truncation::Rank(n),
            TruncationSpec::Energy(e) => Truncation::Energy(e),
        }
    }
}

/// Where snapshots and parameter samples come from.
#[derive(Debug, Clone, Deserialize)]
pub struct Source {
    pub snapshots: String,
    /// Optional parameter CSV, one row per snapshot column.
    #[serde(default)]
    pub params: Option<String>,
    /// The last parameter column holds the sample weight.
    #[serde(default)]
    pub weights_column: bool,
    /// Rescale the weights to sum to one.
    #[serde(default)]
    pub probability: bool,
}

pub fn load_measure(
    config_path: &Path,
    params: Option<&str>,
    weights_column: bool,
    probability: bool,
    n: usize,
) -> Result<SampledMeasure> {
    let measure = match params {
        Some(p) => SampledMeasure::load(&resolve(config_path, p), weights_column, Some(n))?,
        None => {
            if weights_column {
                bail!("weights_column is set but no params file is given");
            }
            SampledMeasure::uniform_unlabelled(n)?
        }
    };
    Ok(if probability { measure.normalized() } else { measure })
}

impl Source {
    pub fn load(&self, config_path: &Path) -> Result<SnapshotEnsemble> {
        let data = romkit::io::read_matrix_csv(&resolve(config_path, &self.snapshots))?;
        let measure = load_measure(
            config_path,
            self.params.as_deref(),
            self.weights_column,
            self.probability,
            data.ncols(),
        )?;
        Ok(SnapshotEnsemble::new(data, measure)?)
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct PodConfig {
    #[serde(flatten)]
    pub source: Source,
    #[serde(default)]
    pub truncation: Option<TruncationSpec>,
    /// Write spatial and parametric modes as CSV.
    #[serde(default = "yes")]
    pub export_modes: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
pub struct SubsystemSpec {
    pub name: String,
    pub snapshots: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PartitionSpec {
    pub m1: Vec<usize>,
    pub m2: Vec<usize>,
    /// Each subsystem depends only on its own parameter group, so kernel
    /// fibres must be constant (audited).
    #[serde(default)]
    pub independent: bool,
}

/// Coupled manifest, as written by `simulate`. Unknown keys are ignored so
/// the manifest can carry extra metadata.
#[derive(Debug, Clone, Deserialize)]
pub struct CoupledConfig {
    pub subsystems: Vec<SubsystemSpec>,
    #[serde(default)]
    pub params: Option<String>,
    #[serde(default)]
    pub weights_column: bool,
    #[serde(default)]
    pub probability: bool,
    #[serde(default)]
    pub scales: Option<[f64; 2]>,
    #[serde(default)]
    pub partition: Option<PartitionSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    #[serde(default)]
    pub eps: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TensorConfig {
    #[serde(flatten)]
    pub source: Source,
    /// Parameter grid, row-major (the first axis varies slowest).
    pub grid: Vec<usize>,
    #[serde(default)]
    pub eps: f64,
    #[serde(default)]
    pub max_bond: Option<usize>,
    #[serde(default)]
    pub splits: Vec<SplitSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    /// One sample per row, `n * n` entries row-major.
    pub samples: String,
    pub n: usize,
    pub manifold: romkit::structured::Manifold,
    #[serde(default)]
    pub params: Option<String>,
    #[serde(default)]
    pub weights_column: bool,
    #[serde(default)]
    pub probability: bool,
    #[serde(default)]
    pub truncation: Option<TruncationSpec>,
}
