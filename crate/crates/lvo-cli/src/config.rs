//! Pipeline configuration: a sectioned TOML file mapping onto the library's
//! config types, fully validated before any stage runs.

use std::path::{Path, PathBuf};

use lvo::flow::DEFAULT_MAX_INVERSE_DEPTH;
use lvo::kitti::{DEFAULT_FRAME_PERIOD, DEFAULT_LENGTHS};
use lvo::loss::{LossWeights, PredictConfig};
use lvo::net::{LvoConfig, TrainConfig};
use lvo::octree::OctreeConfig;
use lvo::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// `[dataset]`: where the sequence lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Directory holding one subdirectory per sequence.
    pub root: PathBuf,
    pub sequence: String,
    /// Seconds between frames (speed binning only).
    pub frame_period: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            root: PathBuf::from("data"),
            sequence: String::from("00"),
            frame_period: DEFAULT_FRAME_PERIOD,
        }
    }
}

/// `[association]`: how rasters become network inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssociationSection {
    /// Block-average pooling factor applied to flow and depth before
    /// association (1 = native resolution).
    pub downsample: usize,
    /// Inverse-depth saturation cap, 1/m.
    pub max_inverse_depth: f32,
}

impl Default for AssociationSection {
    fn default() -> Self {
        AssociationSection {
            downsample: 1,
            max_inverse_depth: DEFAULT_MAX_INVERSE_DEPTH,
        }
    }
}

/// `[odometry]`: which model to run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdometrySection {
    /// Checkpoint to load; defaults to the train stage's output
    /// (`<output.dir>/train/model.ckpt`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

/// `[evaluation]`: sub-sequence lengths for the error metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub lengths: Vec<f64>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            lengths: DEFAULT_LENGTHS.to_vec(),
        }
    }
}

/// `[output]`: where stages write.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
        }
    }
}

/// The full pipeline configuration. Every section is optional in the file
/// and falls back to its default.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: DatasetSection,
    pub association: AssociationSection,
    pub network: LvoConfig,
    pub training: TrainConfig,
    pub loss: LossWeights,
    pub prediction: PredictConfig,
    pub octree: OctreeConfig,
    pub odometry: OdometrySection,
    pub evaluation: EvaluationSection,
    pub output: OutputSection,
}

impl PipelineConfig {
    /// Parse and validate a TOML config file.
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dataset.frame_period > 0.0 && self.dataset.frame_period.is_finite()) {
            return Err(Error::invalid("dataset.frame_period must be positive"));
        }
        if self.dataset.sequence.is_empty() {
            return Err(Error::invalid("dataset.sequence must not be empty"));
        }
        if self.association.downsample == 0 {
            return Err(Error::invalid("association.downsample must be >= 1"));
        }
        if !(self.association.max_inverse_depth > 0.0
            && self.association.max_inverse_depth.is_finite())
        {
            return Err(Error::invalid(
                "association.max_inverse_depth must be positive",
            ));
        }
        self.network.validate()?;
        self.training.validate()?;
        self.loss.validate()?;
        self.prediction.validate()?;
        self.octree.validate()?;
        if self.evaluation.lengths.is_empty() {
            return Err(Error::invalid("evaluation.lengths must not be empty"));
        }
        if self
            .evaluation
            .lengths
            .iter()
            .any(|&l| !(l > 0.0 && l.is_finite()))
        {
            return Err(Error::invalid("evaluation.lengths must be positive"));
        }
        Ok(())
    }

    /// Command-line overrides: `--seed` retargets both training and
    /// prediction, `--deterministic` forces the mean estimator, `--out`
    /// replaces the output directory.
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        deterministic: bool,
        out: Option<PathBuf>,
    ) {
        if let Some(s) = seed {
            self.training.seed = s;
            self.prediction.seed = s;
        }
        if deterministic {
            self.prediction.deterministic = true;
        }
        if let Some(dir) = out {
            self.output.dir = dir;
        }
    }

    /// Hash of the canonical (re-serialized) form, independent of file
    /// formatting.
    pub fn sha256(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        hex_digest(canonical.as_bytes())
    }

    /// Directory a stage writes into.
    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.output.dir.join(stage)
    }

    /// The checkpoint the odometry stage should load.
    pub fn checkpoint_path(&self) -> PathBuf {
        self.odometry
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.stage_dir("train").join("model.ckpt"))
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
