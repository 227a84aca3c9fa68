//! JSON configuration schema and its lowering into core run types.
//!
//! Every field has a default, CLI flags override fields one-to-one, and
//! the fully merged config is written next to the outputs of every run,
//! so a run directory always carries its own provenance (all seeds
//! included).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use fedspace_core::data::{self, DataError, LabeledDataset, PublicSet};
use fedspace_core::experiment::{Algorithm, ExperimentError, ModelSpec, RunConfig, RunData};
use fedspace_core::graph::{GraphError, TopologySpec};
use fedspace_core::meta::{InitKind, LossKind, MetaError, Schedule};
use fedspace_core::nn::{Head, TrainLoss};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match &e {
            // failures of the run itself, not of its description
            ExperimentError::Meta(MetaError::NumericOverflow { .. })
            | ExperimentError::Nn(_)
            | ExperimentError::Cmfd(fedspace_core::cmfd::CmfdError::Nn { .. }) => {
                CliError::Runtime(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologyConfig {
    Ring { n: usize, k: usize },
    Ba { n: usize, m: usize },
}

impl TopologyConfig {
    pub fn to_spec(self) -> TopologySpec {
        match self {
            TopologyConfig::Ring { n, k } => TopologySpec::Ring { n, k },
            TopologyConfig::Ba { n, m } => TopologySpec::ScaleFree { n, m },
        }
    }

    pub fn node_count(self) -> usize {
        self.to_spec().node_count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EtaConfig {
    Constant { value: f64 },
    InverseT { scale: f64 },
    InverseSqrt { scale: f64 },
}

impl EtaConfig {
    pub fn to_schedule(self) -> Schedule {
        match self {
            EtaConfig::Constant { value } => Schedule::Constant(value),
            EtaConfig::InverseT { scale } => Schedule::InverseT(scale),
            EtaConfig::InverseSqrt { scale } => Schedule::InverseSqrt(scale),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadConfig {
    Identity,
    Softmax,
}

impl From<HeadConfig> for Head {
    fn from(h: HeadConfig) -> Head {
        match h {
            HeadConfig::Identity => Head::Identity,
            HeadConfig::Softmax => Head::Softmax,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainLossConfig {
    SquaredError,
    CrossEntropy,
}

impl From<TrainLossConfig> for TrainLoss {
    fn from(l: TrainLossConfig) -> TrainLoss {
        match l {
            TrainLossConfig::SquaredError => TrainLoss::SquaredError,
            TrainLossConfig::CrossEntropy => TrainLoss::CrossEntropy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaLossConfig {
    Mse,
    Kl,
}

impl From<MetaLossConfig> for LossKind {
    fn from(l: MetaLossConfig) -> LossKind {
        match l {
            MetaLossConfig::Mse => LossKind::Mse,
            MetaLossConfig::Kl => LossKind::Kl,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitConfig {
    Zero,
    Gaussian { scale: f64 },
}

impl From<InitConfig> for InitKind {
    fn from(i: InitConfig) -> InitKind {
        match i {
            InitConfig::Zero => InitKind::Zero,
            InitConfig::Gaussian { scale } => InitKind::Gaussian { scale },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: Vec<usize>,
    #[serde(default = "default_head")]
    pub head: HeadConfig,
    #[serde(default)]
    pub dropout: Option<f64>,
}

fn default_head() -> HeadConfig {
    HeadConfig::Softmax
}

impl ModelConfig {
    pub fn to_spec(&self) -> ModelSpec {
        ModelSpec {
            layers: self.layers.clone(),
            head: self.head.into(),
            dropout: self.dropout,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionRule {
    Ring,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    #[serde(default = "default_rule")]
    pub rule: PartitionRule,
    #[serde(default = "default_labels_per_device")]
    pub labels_per_device: usize,
    #[serde(default = "default_per_device")]
    pub per_device: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_rule() -> PartitionRule {
    PartitionRule::Ring
}

fn default_labels_per_device() -> usize {
    2
}

fn default_per_device() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    Blobs {
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_per_class")]
        per_class: usize,
        #[serde(default = "default_spread")]
        spread: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_test_per_class")]
        test_per_class: usize,
        partition: PartitionConfig,
    },
    Mnist {
        images: String,
        labels: String,
        test_images: String,
        test_labels: String,
        #[serde(default = "default_classes")]
        classes: usize,
        partition: PartitionConfig,
    },
}

fn default_classes() -> usize {
    10
}
fn default_per_class() -> usize {
    400
}
fn default_spread() -> f64 {
    0.3
}
fn default_test_per_class() -> usize {
    50
}

/// Complete run description; serialized back out as the resolved config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfigFile {
    pub algorithm: String,
    pub topology: TopologyConfig,
    pub dynamic_topology: bool,
    pub topology_seed: u64,
    pub eta: EtaConfig,
    pub epsilon: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub distill_minibatch: usize,
    pub metric_cadence: usize,
    pub master_seed: u64,
    pub dataset: Option<DatasetConfig>,
    pub public_size: usize,
    pub public_seed: u64,
    /// One entry is broadcast to every device; otherwise one per device.
    pub models: Vec<ModelConfig>,
    pub train_loss: TrainLossConfig,
    // function-space runs
    pub grid_size: usize,
    pub dim_out: usize,
    pub skew: f64,
    pub loss: MetaLossConfig,
    pub init: InitConfig,
    pub threads: usize,
    pub out_dir: Option<String>,
    pub dump_functions: bool,
    pub dump_checkpoints: bool,
    pub telemetry: bool,
}

impl Default for ConfigFile {
    fn default() -> Self {
        ConfigFile {
            algorithm: "cmfd".into(),
            topology: TopologyConfig::Ring { n: 10, k: 1 },
            dynamic_topology: false,
            topology_seed: 0,
            eta: EtaConfig::Constant { value: 0.001 },
            epsilon: 0.1,
            epochs: 100,
            minibatch: 100,
            distill_minibatch: 100,
            metric_cadence: 1,
            master_seed: 1,
            dataset: Some(DatasetConfig::Blobs {
                classes: 10,
                per_class: 400,
                spread: 0.3,
                seed: 0,
                test_per_class: 50,
                partition: PartitionConfig {
                    rule: PartitionRule::Ring,
                    labels_per_device: 2,
                    per_device: 200,
                    seed: 0,
                },
            }),
            public_size: 500,
            public_seed: 0,
            models: vec![ModelConfig {
                layers: vec![2, 64, 10],
                head: HeadConfig::Softmax,
                dropout: None,
            }],
            train_loss: TrainLossConfig::CrossEntropy,
            grid_size: 64,
            dim_out: 1,
            skew: 0.5,
            loss: MetaLossConfig::Mse,
            init: InitConfig::Zero,
            threads: 1,
            out_dir: None,
            dump_functions: false,
            dump_checkpoints: false,
            telemetry: false,
        }
    }
}

impl ConfigFile {
    pub fn from_json(json: &str) -> Result<Self, CliError> {
        serde_json::from_str(json).map_err(|e| CliError::config(format!("bad config: {e}")))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Materializes data and lowers into the core run config.
    pub fn build_run(&self, algorithm: Algorithm) -> Result<(RunConfig, RunData), CliError> {
        let n = self.topology.node_count();
        let dataset = self
            .dataset
            .as_ref()
            .ok_or_else(|| CliError::config("this run needs a `dataset` section"))?;
        let (source, test, partition) = materialize_source(dataset)?;
        let locals = match partition.rule {
            PartitionRule::Ring => data::partition_ring(
                &source,
                n,
                partition.labels_per_device,
                partition.per_device,
                partition.seed,
            )?,
            PartitionRule::Random => data::partition_random_pairs(
                &source,
                n,
                partition.labels_per_device,
                partition.per_device,
                partition.seed,
            )?,
        };
        let public = if matches!(algorithm, Algorithm::Cmfd) || self.telemetry {
            Some(data::make_public(&source, self.public_size, self.public_seed)?)
        } else {
            None
        };
        let models = self.expand_models(n)?;
        let cfg = RunConfig {
            algorithm,
            topology: self.topology.to_spec(),
            dynamic_topology: self.dynamic_topology,
            topology_seed: self.topology_seed,
            eta: self.eta.to_schedule(),
            epsilon: self.epsilon,
            epochs: self.epochs,
            minibatch: self.minibatch,
            distill_minibatch: self.distill_minibatch,
            metric_cadence: self.metric_cadence,
            master_seed: self.master_seed,
            models,
            train_loss: self.train_loss.into(),
            collect_digests: self.telemetry,
        };
        Ok((
            cfg,
            RunData {
                locals,
                public,
                test,
            },
        ))
    }

    pub fn expand_models(&self, n: usize) -> Result<Vec<ModelSpec>, CliError> {
        if self.models.is_empty() {
            return Err(CliError::config("at least one model spec is required"));
        }
        if self.models.len() == 1 {
            return Ok(vec![self.models[0].to_spec(); n]);
        }
        if self.models.len() != n {
            return Err(CliError::config(format!(
                "{} models specified for {} devices",
                self.models.len(),
                n
            )));
        }
        Ok(self.models.iter().map(ModelConfig::to_spec).collect())
    }

    pub fn to_meta_spec(&self) -> fedspace_core::experiment::MetaRunSpec {
        fedspace_core::experiment::MetaRunSpec {
            topology: self.topology.to_spec(),
            topology_seed: self.topology_seed,
            grid_size: self.grid_size,
            dim_out: self.dim_out,
            skew: self.skew,
            loss: self.loss.into(),
            eta: self.eta.to_schedule(),
            epsilon: self.epsilon,
            epochs: self.epochs,
            init: self.init.into(),
            master_seed: self.master_seed,
        }
    }
}

fn materialize_source(
    dataset: &DatasetConfig,
) -> Result<(LabeledDataset, LabeledDataset, PartitionConfig), CliError> {
    match dataset {
        DatasetConfig::Blobs {
            classes,
            per_class,
            spread,
            seed,
            test_per_class,
            partition,
        } => {
            let source = data::synth_blobs(*classes, *per_class, *spread, *seed)?;
            // the held-out split draws from an independent stream
            let test = data::synth_blobs(*classes, *test_per_class, *spread, seed ^ 0x7e57)?;
            Ok((source, test, partition.clone()))
        }
        DatasetConfig::Mnist {
            images,
            labels,
            test_images,
            test_labels,
            classes,
            partition,
        } => {
            let source = crate::io::load_mnist(images, labels, *classes)?;
            let test = crate::io::load_mnist(test_images, test_labels, *classes)?;
            Ok((source, test, partition.clone()))
        }
    }
}

/// `PublicSet` accessor used by telemetry-only flows.
pub fn public_for(
    cfg: &ConfigFile,
) -> Result<Option<PublicSet>, CliError> {
    match &cfg.dataset {
        Some(ds) => {
            let (source, _, _) = materialize_source(ds)?;
            Ok(Some(data::make_public(&source, cfg.public_size, cfg.public_seed)?))
        }
        None => Ok(None),
    }
}
