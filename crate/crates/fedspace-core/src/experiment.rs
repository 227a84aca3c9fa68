//! Experiment runner: synchronous epochs, per-device test accuracy,
//! summary metrics, and the fixed CSV record layout.
//!
//! Accuracy is always evaluated against a held-out test set covering all
//! classes (the global distribution), never against device-local data.
//! The summary mirrors the accuracy-table metrics: mean accuracy,
//! best-minus-worst device accuracy, the mean per-device standard
//! deviation over the last 100 recorded epochs, and top-5 accuracy when
//! there are more than five classes.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::cmfd::{self, CmfdError, DeviceState, EpochStats, RoundConfig};
use crate::data::{DataError, LabeledDataset, PublicSet};
use crate::exec::ParallelFor;
use crate::float;
use crate::funcspace::{FederatedFunction, FuncSpaceError, FunctionGrid, MeasureSet, SampleGrid};
use crate::graph::{self, GraphError, TopologySpec};
use crate::meta::{self, InitKind, Loss, LossKind, MetaConfig, MetaError, MetaTrace, Schedule};
use crate::nn::{Head, MlpModel, NnError, TrainLoss};
use crate::rng::{tag, Rng};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("{got} models specified for {expected} devices")]
    ModelCount { expected: usize, got: usize },
    #[error("{got} local datasets for {expected} devices")]
    PartitionCount { expected: usize, got: usize },
    #[error("distillation requires a public input set")]
    MissingPublicSet,
    #[error("metric cadence must be at least 1")]
    CadenceZero,
    #[error(
        "parameter averaging requires one architecture; device {device} differs from device 0"
    )]
    HeterogeneousParamAveraging { device: usize },
    #[error("model {device} is {got_in}->{got_out} but the task is {want_in}->{want_out}")]
    ModelShape {
        device: usize,
        got_in: usize,
        got_out: usize,
        want_in: usize,
        want_out: usize,
    },
    #[error("dynamic topologies are only defined for the scale-free family")]
    DynamicRing,
    #[error("graph error: {0}")]
    Graph(#[from] GraphError),
    #[error("round error: {0}")]
    Cmfd(#[from] CmfdError),
    #[error("model error: {0}")]
    Nn(#[from] NnError),
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("function-space error: {0}")]
    FuncSpace(#[from] FuncSpaceError),
    #[error("meta-algorithm error: {0}")]
    Meta(#[from] MetaError),
}

/// Which aggregation runs in phase 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Cmfd,
    ParamAvg,
}

/// Per-device model description.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub layers: Vec<usize>,
    pub head: Head,
    pub dropout: Option<f64>,
}

/// Full specification of a neural-network run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub topology: TopologySpec,
    /// Regenerate the (scale-free) topology every epoch.
    pub dynamic_topology: bool,
    pub topology_seed: u64,
    pub eta: Schedule,
    pub epsilon: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub distill_minibatch: usize,
    /// Evaluate metrics every this many epochs (≥ 1).
    pub metric_cadence: usize,
    pub master_seed: u64,
    pub models: Vec<ModelSpec>,
    pub train_loss: TrainLoss,
    /// Record an FNV-1a digest of every broadcast (CMFD telemetry).
    pub collect_digests: bool,
}

/// Materialized data for a run.
#[derive(Debug, Clone)]
pub struct RunData {
    pub locals: Vec<LabeledDataset>,
    pub public: Option<PublicSet>,
    pub test: LabeledDataset,
}

/// One recorded epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    /// Per-device test accuracy (empty for function-space runs).
    pub acc: Vec<f64>,
    /// Per-device top-5 accuracy when the task has more than 5 classes.
    pub top5: Option<Vec<f64>>,
    /// Mean distillation loss across devices (CMFD only).
    pub distill_loss: Option<f64>,
    /// Function disagreement (function-space runs only).
    pub d_t: Option<f64>,
    /// Total bytes moved this epoch, all links, both directions.
    pub bytes: u64,
}

impl MetricsRecord {
    pub fn mean_acc(&self) -> f64 {
        if self.acc.is_empty() {
            return f64::NAN;
        }
        self.acc.iter().sum::<f64>() / self.acc.len() as f64
    }

    pub fn max_min(&self) -> f64 {
        if self.acc.is_empty() {
            return f64::NAN;
        }
        let max = self.acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.acc.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }
}

/// Window used for the stability metric.
pub const DEV_WINDOW: usize = 100;

/// Summary row comparable across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub final_epoch: usize,
    /// Mean device accuracy at the final recorded epoch.
    pub acc: f64,
    /// Best minus worst device accuracy at the final recorded epoch.
    pub max_min: f64,
    /// Mean over devices of the per-device accuracy standard deviation
    /// over the last `DEV_WINDOW` recorded epochs.
    pub dev: f64,
    /// Records actually used for `dev`.
    pub dev_window: usize,
    /// True when fewer than `DEV_WINDOW` records were available.
    pub dev_window_truncated: bool,
    pub top5: Option<f64>,
    pub per_device_acc: Vec<f64>,
    pub mean_distill_loss_final: Option<f64>,
    pub total_bytes: u64,
}

/// Output of a run: the record stream plus its summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub summary: Summary,
    /// `(epoch, device, digest)` of each broadcast, when requested.
    pub digests: Vec<(usize, usize, u64)>,
    /// Final per-device models.
    pub models: Vec<MlpModel>,
}

fn init_models(cfg: &RunConfig) -> Result<Vec<MlpModel>, ExperimentError> {
    let n = cfg.topology.node_count();
    if cfg.models.len() != n {
        return Err(ExperimentError::ModelCount {
            expected: n,
            got: cfg.models.len(),
        });
    }
    match cfg.algorithm {
        Algorithm::ParamAvg => {
            // One architecture, one shared initialization stream: all
            // devices start from identical parameters.
            for (i, spec) in cfg.models.iter().enumerate() {
                if spec.layers != cfg.models[0].layers {
                    return Err(ExperimentError::HeterogeneousParamAveraging { device: i });
                }
            }
            let spec = &cfg.models[0];
            let mut rng = Rng::derive(cfg.master_seed, &[tag::MODEL_INIT]);
            let template = MlpModel::init_he(&spec.layers, spec.head, spec.dropout, &mut rng)?;
            Ok(vec![template; n])
        }
        Algorithm::Cmfd => cfg
            .models
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let mut rng = Rng::derive(cfg.master_seed, &[tag::MODEL_INIT, i as u64]);
                Ok(MlpModel::init_he(
                    &spec.layers,
                    spec.head,
                    spec.dropout,
                    &mut rng,
                )?)
            })
            .collect(),
    }
}

/// Per-device accuracy and top-5 accuracy on the test set.
fn evaluate_accuracy<E: ParallelFor>(
    devices: &[DeviceState],
    test: &LabeledDataset,
    exec: &E,
) -> (Vec<f64>, Vec<f64>) {
    let mut results: Vec<(f64, f64)> = vec![(0.0, 0.0); devices.len()];
    exec.for_each(&mut results, |i, slot| {
        let model = &devices[i].model;
        let mut hits = 0usize;
        let mut top5 = 0usize;
        for k in 0..test.len() {
            let y = match model.forward(test.input(k)) {
                Ok(y) => y,
                Err(_) => return,
            };
            let label = test.label(k);
            let mut arg = 0usize;
            let mut best = f64::NEG_INFINITY;
            let mut above = 0usize;
            for (m, &v) in y.iter().enumerate() {
                if v > best {
                    best = v;
                    arg = m;
                }
                if v > y[label] {
                    above += 1;
                }
            }
            if arg == label {
                hits += 1;
            }
            if above < 5 {
                top5 += 1;
            }
        }
        let total = test.len() as f64;
        *slot = (hits as f64 / total, top5 as f64 / total);
    });
    (
        results.iter().map(|r| r.0).collect(),
        results.iter().map(|r| r.1).collect(),
    )
}

fn record_for(
    epoch: usize,
    devices: &[DeviceState],
    test: &LabeledDataset,
    stats: Option<&EpochStats>,
    exec: &impl ParallelFor,
) -> MetricsRecord {
    let (acc, top5) = evaluate_accuracy(devices, test, exec);
    MetricsRecord {
        epoch,
        acc,
        top5: if test.classes() > 5 { Some(top5) } else { None },
        distill_loss: stats.and_then(|s| s.mean_distill_loss),
        d_t: None,
        bytes: stats.map_or(0, |s| s.total_bytes),
    }
}

/// Runs a neural-network experiment and returns the record stream plus
/// its summary. Deterministic for any executor.
pub fn run<E: ParallelFor>(
    cfg: &RunConfig,
    data: &RunData,
    exec: &E,
) -> Result<RunOutput, ExperimentError> {
    if cfg.metric_cadence == 0 {
        return Err(ExperimentError::CadenceZero);
    }
    let n = cfg.topology.node_count();
    if data.locals.len() != n {
        return Err(ExperimentError::PartitionCount {
            expected: n,
            got: data.locals.len(),
        });
    }
    if cfg.dynamic_topology && !matches!(cfg.topology, TopologySpec::ScaleFree { .. }) {
        return Err(ExperimentError::DynamicRing);
    }
    let public = match (cfg.algorithm, &data.public) {
        (Algorithm::Cmfd, Some(p)) => Some(p),
        (Algorithm::Cmfd, None) => return Err(ExperimentError::MissingPublicSet),
        (Algorithm::ParamAvg, p) => p.as_ref(),
    };
    for (device, spec) in cfg.models.iter().enumerate() {
        let got_in = spec.layers.first().copied().unwrap_or(0);
        let got_out = spec.layers.last().copied().unwrap_or(0);
        if got_in != data.test.dim() || got_out != data.test.classes() {
            return Err(ExperimentError::ModelShape {
                device,
                got_in,
                got_out,
                want_in: data.test.dim(),
                want_out: data.test.classes(),
            });
        }
    }

    let models = init_models(cfg)?;
    let mut devices: Vec<DeviceState> = models
        .into_iter()
        .zip(data.locals.iter().cloned())
        .map(|(model, local)| DeviceState::new(model, local))
        .collect();

    let static_topology = if cfg.dynamic_topology {
        None
    } else {
        Some(cfg.topology.build(cfg.topology_seed)?)
    };

    let mut records = Vec::new();
    if cfg.epochs == 0 {
        records.push(record_for(0, &devices, &data.test, None, exec));
    }
    let mut digests = Vec::new();
    let mut total_bytes = 0u64;
    for t in 1..=cfg.epochs {
        let epoch_topology;
        let topology = match &static_topology {
            Some(topo) => topo,
            None => {
                epoch_topology = cfg
                    .topology
                    .build(graph::epoch_seed(cfg.topology_seed, t))?;
                &epoch_topology
            }
        };
        let round = RoundConfig {
            eta: cfg.eta.rate(t),
            epsilon: cfg.epsilon,
            minibatch: cfg.minibatch,
            distill_minibatch: cfg.distill_minibatch,
            loss: cfg.train_loss,
            master_seed: cfg.master_seed,
            epoch: t,
        };
        let stats = match cfg.algorithm {
            Algorithm::Cmfd => cmfd::cmfd_epoch(
                &mut devices,
                topology,
                public.expect("checked above"),
                &round,
                exec,
            )?,
            Algorithm::ParamAvg => cmfd::param_avg_epoch(&mut devices, topology, &round, exec)?,
        };
        total_bytes += stats.total_bytes;
        if cfg.collect_digests {
            for (d, dev) in devices.iter().enumerate() {
                if let Some(outputs) = &dev.shared_outputs {
                    digests.push((t, d, cmfd::outputs_digest(outputs)));
                }
            }
        }
        if t % cfg.metric_cadence == 0 || t == cfg.epochs {
            records.push(record_for(t, &devices, &data.test, Some(&stats), exec));
        }
    }

    let mut summary = summarize(&records);
    summary.total_bytes = total_bytes;
    Ok(RunOutput {
        records,
        summary,
        digests,
        models: devices.into_iter().map(|d| d.model).collect(),
    })
}

/// Summary of a record stream; a pure function of the stream.
pub fn summarize(records: &[MetricsRecord]) -> Summary {
    let last = records.last();
    let final_epoch = last.map_or(0, |r| r.epoch);
    let per_device_acc = last.map_or_else(Vec::new, |r| r.acc.clone());
    let n = per_device_acc.len();

    let window = records.len().min(DEV_WINDOW);
    let tail = &records[records.len() - window..];
    let dev = if n == 0 || window == 0 {
        f64::NAN
    } else {
        let mut acc = 0.0;
        for d in 0..n {
            let mean: f64 = tail.iter().map(|r| r.acc[d]).sum::<f64>() / window as f64;
            let var: f64 = tail
                .iter()
                .map(|r| {
                    let e = r.acc[d] - mean;
                    e * e
                })
                .sum::<f64>()
                / window as f64;
            acc += float::sqrt(var);
        }
        acc / n as f64
    };

    Summary {
        final_epoch,
        acc: last.map_or(f64::NAN, MetricsRecord::mean_acc),
        max_min: last.map_or(f64::NAN, MetricsRecord::max_min),
        dev,
        dev_window: window,
        dev_window_truncated: window < DEV_WINDOW,
        top5: last.and_then(|r| {
            r.top5
                .as_ref()
                .map(|t| t.iter().sum::<f64>() / t.len().max(1) as f64)
        }),
        per_device_acc,
        mean_distill_loss_final: last.and_then(|r| r.distill_loss),
        total_bytes: 0,
    }
}

fn field(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

/// CSV with the fixed header `epoch,device,acc,top5,distill_loss,d_t,bytes`;
/// one row per device per recorded epoch (absent metrics are empty fields).
pub fn metrics_csv(records: &[MetricsRecord], devices: usize) -> String {
    let mut out = String::from("epoch,device,acc,top5,distill_loss,d_t,bytes\n");
    for r in records {
        for d in 0..devices {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.epoch,
                d,
                field(r.acc.get(d).copied()),
                field(r.top5.as_ref().and_then(|t| t.get(d)).copied()),
                field(r.distill_loss),
                field(r.d_t),
                r.bytes,
            ));
        }
    }
    out
}

/// JSON-lines export of the same records (one object per device-epoch).
pub fn metrics_jsonl(records: &[MetricsRecord], devices: usize) -> String {
    let mut out = String::new();
    for r in records {
        for d in 0..devices {
            let mut fields = vec![
                format!("\"epoch\":{}", r.epoch),
                format!("\"device\":{d}"),
            ];
            if let Some(a) = r.acc.get(d) {
                fields.push(format!("\"acc\":{a}"));
            }
            if let Some(t) = r.top5.as_ref().and_then(|t| t.get(d)) {
                fields.push(format!("\"top5\":{t}"));
            }
            if let Some(c) = r.distill_loss {
                fields.push(format!("\"distill_loss\":{c}"));
            }
            if let Some(dt) = r.d_t {
                fields.push(format!("\"d_t\":{dt}"));
            }
            fields.push(format!("\"bytes\":{}", r.bytes));
            out.push_str(&format!("{{{}}}\n", fields.join(",")));
        }
    }
    out
}

/// Specification of a function-space run on the canonical instance.
#[derive(Debug, Clone)]
pub struct MetaRunSpec {
    pub topology: TopologySpec,
    pub topology_seed: u64,
    pub grid_size: usize,
    pub dim_out: usize,
    /// Two-block measure skew in `[0, 1)`; 0 gives the IID case.
    pub skew: f64,
    pub loss: LossKind,
    pub eta: Schedule,
    pub epsilon: f64,
    pub epochs: usize,
    pub init: InitKind,
    pub master_seed: u64,
}

/// Output of a function-space run: the full trace plus the record stream.
#[derive(Debug, Clone)]
pub struct MetaRunOutput {
    pub trace: MetaTrace,
    pub records: Vec<MetricsRecord>,
    pub grid: SampleGrid,
}

/// Builds the canonical instance (uniform 1-D grid, two-block measures,
/// a smooth target) and runs the function-space algorithm on it.
pub fn run_meta_experiment<E: ParallelFor>(
    spec: &MetaRunSpec,
    exec: &E,
) -> Result<MetaRunOutput, ExperimentError> {
    let n = spec.topology.node_count();
    let topology = spec.topology.build(spec.topology_seed)?;
    let grid = SampleGrid::uniform_1d(spec.grid_size, spec.dim_out)?;
    let measures = MeasureSet::two_block(n, spec.grid_size, spec.skew)?;
    let loss = Loss::new(spec.loss, canonical_target(&grid, spec.loss))?;
    let f_init = initial_function(n, &grid, spec.init, spec.master_seed);
    let cfg = MetaConfig {
        schedule: spec.eta,
        epsilon: spec.epsilon,
        epochs: spec.epochs,
    };
    let trace = meta::run_meta(&cfg, &topology, &measures, &loss, f_init, exec)?;
    let per_link = (spec.grid_size * spec.dim_out * 4) as u64;
    let bytes = 2 * per_link * topology.edge_count() as u64;
    let records = (1..=spec.epochs)
        .map(|t| MetricsRecord {
            epoch: t,
            acc: Vec::new(),
            top5: None,
            distill_loss: None,
            d_t: Some(trace.d_t[t - 1]),
            bytes,
        })
        .collect();
    Ok(MetaRunOutput {
        trace,
        records,
        grid,
    })
}

/// Smooth target on the 1-D grid: sinusoids for MSE, a normalized
/// positive row profile for KL.
pub fn canonical_target(grid: &SampleGrid, loss: LossKind) -> FunctionGrid {
    let m = grid.dim_out();
    match loss {
        LossKind::Mse => FunctionGrid::from_fn(grid, |x, out| {
            for (k, slot) in out.iter_mut().enumerate() {
                let phase = k as f64 / m as f64;
                *slot =
                    float::sin(2.0 * core::f64::consts::PI * (x[0] + phase)) + 0.5;
            }
        }),
        LossKind::Kl => FunctionGrid::from_fn(grid, |x, out| {
            let mut total = 0.0;
            for (k, slot) in out.iter_mut().enumerate() {
                let phase = k as f64 / m as f64;
                *slot = float::exp(float::sin(
                    2.0 * core::f64::consts::PI * (x[0] + phase),
                ));
                total += *slot;
            }
            for slot in out.iter_mut() {
                *slot /= total;
            }
        }),
    }
}

/// Initial federated function: zero grids or device-seeded Gaussian grids.
pub fn initial_function(
    devices: usize,
    grid: &SampleGrid,
    init: InitKind,
    master_seed: u64,
) -> FederatedFunction {
    match init {
        InitKind::Zero => FederatedFunction::zeros(devices, grid.len(), grid.dim_out()),
        InitKind::Gaussian { scale } => {
            let parts = (0..devices)
                .map(|i| {
                    let mut rng = Rng::derive(master_seed, &[tag::MODEL_INIT, i as u64]);
                    let values = (0..grid.len() * grid.dim_out())
                        .map(|_| scale * rng.gaussian())
                        .collect();
                    FunctionGrid::from_values(grid.len(), grid.dim_out(), values)
                        .expect("sized from the grid")
                })
                .collect();
            FederatedFunction::new(parts).expect("identical shapes")
        }
    }
}
