//! Datasets, experiment configuration, grid evaluation and result tables.

mod dataset;
mod io;
mod run;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{cone, cuboid, cylinder, gen_synthetic_dataset, icosphere, sample_normalized, torus, Dataset, Sample, ShapeClass};
pub use io::{load_off, load_xyz, parse_off, read_xyz, save_cloud, write_ply, write_xyz, CloudIoError, OffError};
pub use run::{
    apply_parameter, evaluate, load_off_dataset, run_experiment, run_sweep, sweep_csv, AttackOutcome, ExperimentOutput, Grid, ResultsRow,
    ResultsTable, SampleOutcome, DEFENSE_PARAMETERS,
};

use crate::attacks::{AttackConfig, AttackError};
use crate::defenses::{DefenseConfig, DefenseError};
use crate::geometry::GeometryError;
use crate::net::NetError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("unknown parameter {name:?}; valid names: {valid}")]
    UnknownParameter { name: String, valid: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Off { path: PathBuf, source: OffError },
    #[error(transparent)]
    CloudIo(#[from] CloudIoError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Defense(#[from] DefenseError),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

fn default_classes() -> Vec<ShapeClass> {
    ShapeClass::ALL.to_vec()
}

/// Synthetic train/test splits drawn from independent streams of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "default_classes")]
    pub classes: Vec<ShapeClass>,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub points: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: default_classes(),
            train_per_class: 120,
            test_per_class: 30,
            points: 1024,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn generate(&self, split: Split) -> Result<Dataset> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
        let per_class = match split {
            Split::Train => self.train_per_class,
            Split::Test => {
                rng.set_stream(1);
                self.test_per_class
            }
        };
        if self.classes.is_empty() {
            return Err(ExperimentError::Config("synthetic dataset needs at least one class".into()));
        }
        Ok(gen_synthetic_dataset(&self.classes, per_class, self.points, split.name(), &mut rng)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    /// `<path>/<class>/<split>/*.off`, classes in sorted directory order.
    OffDirectory { path: PathBuf, points: usize, seed: u64 },
}

impl DatasetSource {
    pub fn load(&self, split: Split) -> Result<Dataset> {
        match self {
            DatasetSource::Synthetic(spec) => spec.generate(split),
            DatasetSource::OffDirectory { path, points, seed } => load_off_dataset(path, split, *points, *seed),
        }
    }
}

/// Which mesh the attacks and the Hausdorff metric treat as the benign
/// surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceSource {
    /// The stored generating mesh, or an alpha shape when there is none.
    #[default]
    Generating,
    /// Always an alpha shape of the benign cloud.
    AlphaShape,
}

fn default_sample_limit() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: PathBuf,
    pub attacks: Vec<AttackConfig>,
    pub defenses: Vec<DefenseConfig>,
    pub dataset: DatasetSource,
    #[serde(default = "default_sample_limit")]
    pub sample_limit: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub dump_clouds: bool,
    #[serde(default)]
    pub surface: SurfaceSource,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.attacks.is_empty() {
            return Err(ExperimentError::Config("attack grid is empty".into()));
        }
        if self.defenses.is_empty() {
            return Err(ExperimentError::Config("defense grid is empty".into()));
        }
        Ok(())
    }
}
