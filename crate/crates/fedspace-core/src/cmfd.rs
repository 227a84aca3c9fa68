//! Distillation-based consensus for neural networks, the
//! parameter-averaging baseline, and a two-parameter toy model.
//!
//! Per synchronous epoch, every device first runs one pass of minibatch
//! SGD on its local data (phase 1), evaluates its updated model on the
//! shared public inputs, and broadcasts those outputs to its neighbors.
//! After the barrier (phase 2), each device treats the average of its
//! neighbors' outputs as labels and takes one epoch of minibatch gradient
//! steps on the squared distance to them, with step size `ε·n_i`. No
//! parameters ever cross a link, so devices may run different
//! architectures; the only cross-device payload is output vectors on the
//! public set.
//!
//! The baseline replaces phase 2 with raw parameter mixing
//! `w_i ← ŵ_i − ε·Σ_{j∈Neigh(i)} (ŵ_i − ŵ_j)`, which requires every
//! device to run the same architecture from the same initialization.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::data::{LabeledDataset, PublicSet};
use crate::exec::ParallelFor;
use crate::funcspace::FunctionGrid;
use crate::graph::Topology;
use crate::nn::{BatchTargets, MlpModel, NnError, TrainLoss};
use crate::rng::{tag, Rng};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CmfdError {
    #[error("model error on device {device}: {source}")]
    Nn { device: usize, source: NnError },
    #[error("no output report from neighbor device {from}")]
    MissingNeighborReport { from: usize },
    #[error("device {device} has no local data")]
    EmptyLocalData { device: usize },
    #[error(
        "parameter averaging requires one architecture; device {device} differs from device 0"
    )]
    HeterogeneousParamAveraging { device: usize },
    #[error("device {device} output width {got} differs from {want}")]
    OutputWidth {
        device: usize,
        got: usize,
        want: usize,
    },
    #[error("expected {expected} devices, got {got}")]
    DeviceCount { expected: usize, got: usize },
}

/// One device: its model and private data, plus the outputs it last
/// broadcast on the public set.
#[derive(Debug, Clone)]
pub struct DeviceState {
    pub model: MlpModel,
    pub local: LabeledDataset,
    /// `ŷ_{i,x}` for `x ∈ D_s` from the most recent phase 1.
    pub shared_outputs: Option<FunctionGrid>,
}

impl DeviceState {
    pub fn new(model: MlpModel, local: LabeledDataset) -> Self {
        Self {
            model,
            local,
            shared_outputs: None,
        }
    }
}

/// Per-epoch parameters resolved by the runner.
#[derive(Debug, Clone, Copy)]
pub struct RoundConfig {
    /// Local SGD rate `η_t`.
    pub eta: f64,
    /// Sharing rate `ε`.
    pub epsilon: f64,
    pub minibatch: usize,
    pub distill_minibatch: usize,
    pub loss: TrainLoss,
    pub master_seed: u64,
    /// Epoch index `t ≥ 1`; seeds the per-device shuffle streams.
    pub epoch: usize,
}

/// Traffic and distillation-loss accounting for one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Mean over devices of `c(w̃)` on the full public set (CMFD only).
    pub mean_distill_loss: Option<f64>,
    /// Bytes sent over one link in one direction (4-byte encoding).
    pub per_link_bytes_each_way: u64,
    /// Total bytes this epoch, both directions over every link.
    pub total_bytes: u64,
}

/// One pass of minibatch SGD over a seeded shuffle of the device's local
/// data; gradients are of the summed loss, step size `eta`.
pub fn local_sgd_epoch(
    model: &mut MlpModel,
    local: &LabeledDataset,
    loss: TrainLoss,
    eta: f64,
    minibatch: usize,
    rng: &mut Rng,
) -> Result<(), NnError> {
    let mut order: Vec<usize> = (0..local.len()).collect();
    rng.shuffle(&mut order);
    let dim = local.dim();
    let use_dropout = model.dropout_rate().unwrap_or(0.0) > 0.0;
    for chunk in order.chunks(minibatch.max(1)) {
        let mut inputs = Vec::with_capacity(chunk.len() * dim);
        let mut labels = Vec::with_capacity(chunk.len());
        for &i in chunk {
            inputs.extend_from_slice(local.input(i));
            labels.push(local.label(i));
        }
        let grad = if use_dropout {
            model.batch_gradient_dropout(
                &inputs,
                chunk.len(),
                BatchTargets::Labels(&labels),
                loss,
                rng,
            )?
        } else {
            model.batch_gradient(&inputs, chunk.len(), BatchTargets::Labels(&labels), loss)?
        };
        model.apply_gradient(&grad, eta);
    }
    Ok(())
}

/// Model outputs on every public input, as a grid function.
pub fn compute_shared_outputs(
    model: &MlpModel,
    public: &PublicSet,
) -> Result<FunctionGrid, NnError> {
    let mut out = FunctionGrid::zeros(public.len(), model.dim_out());
    for s in 0..public.len() {
        let y = model.forward(public.input(s))?;
        out.row_mut(s).copy_from_slice(&y);
    }
    Ok(out)
}

/// Distillation targets: the arithmetic mean of the neighbors' reported
/// outputs, `target(x) = (1/n_i)·Σ_{j∈Neigh(i)} ŷ_{j,x}`. The device's
/// own outputs are not part of the average.
pub fn aggregate_targets<'a, F>(neighbors: &[usize], report: F) -> Result<FunctionGrid, CmfdError>
where
    F: Fn(usize) -> Option<&'a FunctionGrid>,
{
    debug_assert!(!neighbors.is_empty());
    let mut acc: Option<FunctionGrid> = None;
    for &j in neighbors {
        let outputs = report(j).ok_or(CmfdError::MissingNeighborReport { from: j })?;
        match &mut acc {
            None => acc = Some(outputs.clone()),
            Some(a) => a.axpy(1.0, outputs),
        }
    }
    let mut total = acc.expect("neighbors checked nonempty");
    let scale = 1.0 / neighbors.len() as f64;
    for v in total.values_mut() {
        *v *= scale;
    }
    Ok(total)
}

/// Distillation loss `c(w) = Σ_{x∈D_s} ‖f(x; w) − target(x)‖²`.
pub fn distillation_loss(
    model: &MlpModel,
    public: &PublicSet,
    targets: &FunctionGrid,
) -> Result<f64, NnError> {
    model.batch_loss(
        public.inputs_flat(),
        public.len(),
        BatchTargets::Values(targets.values()),
        TrainLoss::SquaredError,
    )
}

/// One epoch of minibatch gradient steps on the distillation loss with
/// step size `ε·n_i`, minibatch order from a seeded shuffle.
pub fn distillation_step(
    model: &mut MlpModel,
    public: &PublicSet,
    targets: &FunctionGrid,
    epsilon: f64,
    degree: usize,
    minibatch: usize,
    rng: &mut Rng,
) -> Result<(), NnError> {
    let mut order: Vec<usize> = (0..public.len()).collect();
    rng.shuffle(&mut order);
    let dim = public.dim();
    let m = targets.cols();
    let rate = epsilon * degree as f64;
    for chunk in order.chunks(minibatch.max(1)) {
        let mut inputs = Vec::with_capacity(chunk.len() * dim);
        let mut values = Vec::with_capacity(chunk.len() * m);
        for &i in chunk {
            inputs.extend_from_slice(public.input(i));
            values.extend_from_slice(targets.row(i));
        }
        let grad = model.batch_gradient(
            &inputs,
            chunk.len(),
            BatchTargets::Values(&values),
            TrainLoss::SquaredError,
        )?;
        model.apply_gradient(&grad, rate);
    }
    Ok(())
}

fn validate_devices(devices: &[DeviceState], topology: &Topology) -> Result<(), CmfdError> {
    if devices.len() != topology.node_count() {
        return Err(CmfdError::DeviceCount {
            expected: topology.node_count(),
            got: devices.len(),
        });
    }
    for (i, d) in devices.iter().enumerate() {
        if d.local.is_empty() {
            return Err(CmfdError::EmptyLocalData { device: i });
        }
    }
    Ok(())
}

/// One synchronous CMFD epoch over all devices.
pub fn cmfd_epoch<E: ParallelFor>(
    devices: &mut [DeviceState],
    topology: &Topology,
    public: &PublicSet,
    cfg: &RoundConfig,
    exec: &E,
) -> Result<EpochStats, CmfdError> {
    validate_devices(devices, topology)?;
    let m = devices[0].model.dim_out();
    for (i, d) in devices.iter().enumerate() {
        if d.model.dim_out() != m {
            return Err(CmfdError::OutputWidth {
                device: i,
                got: d.model.dim_out(),
                want: m,
            });
        }
    }

    // Phase 1: local SGD, then outputs on the public set.
    let mut errors: Vec<Option<CmfdError>> = (0..devices.len()).map(|_| None).collect();
    {
        let cfg = *cfg;
        let mut work: Vec<(&mut DeviceState, &mut Option<CmfdError>)> =
            devices.iter_mut().zip(errors.iter_mut()).collect();
        exec.for_each(&mut work, |i, (dev, err_slot)| {
            let mut rng = Rng::derive(
                cfg.master_seed,
                &[tag::LOCAL_SHUFFLE, cfg.epoch as u64, i as u64],
            );
            let res = local_sgd_epoch(
                &mut dev.model,
                &dev.local,
                cfg.loss,
                cfg.eta,
                cfg.minibatch,
                &mut rng,
            )
            .and_then(|()| {
                dev.shared_outputs = Some(compute_shared_outputs(&dev.model, public)?);
                Ok(())
            });
            if let Err(source) = res {
                dev.shared_outputs = None;
                **err_slot = Some(CmfdError::Nn { device: i, source });
            }
        });
    }
    // Executors cannot return errors from inside the closure; surface
    // the per-device slots after the barrier.
    if let Some(e) = errors.iter_mut().find_map(Option::take) {
        return Err(e);
    }
    let snapshot: Vec<FunctionGrid> = devices
        .iter()
        .enumerate()
        .map(|(i, d)| {
            d.shared_outputs
                .clone()
                .ok_or(CmfdError::MissingNeighborReport { from: i })
        })
        .collect::<Result<_, _>>()?;

    // Barrier: phase 2 reads only the snapshot.
    let mut distill_losses = vec![0.0f64; devices.len()];
    {
        let cfg = *cfg;
        let snapshot_ref = &snapshot;
        let losses_slots: &mut [f64] = &mut distill_losses;
        let errs: &mut [Option<CmfdError>] = &mut errors;
        let mut work: Vec<(usize, &mut DeviceState, &mut f64, &mut Option<CmfdError>)> = devices
            .iter_mut()
            .zip(losses_slots.iter_mut())
            .zip(errs.iter_mut())
            .enumerate()
            .map(|(i, ((d, l), e))| (i, d, l, e))
            .collect();
        exec.for_each(&mut work, |_, (i, dev, loss_slot, err_slot)| {
            let i = *i;
            let mut run = || -> Result<f64, CmfdError> {
                let targets = aggregate_targets(topology.neighbors(i), |j| {
                    snapshot_ref.get(j)
                })?;
                let c = distillation_loss(&dev.model, public, &targets)
                    .map_err(|source| CmfdError::Nn { device: i, source })?;
                let mut rng = Rng::derive(
                    cfg.master_seed,
                    &[tag::DISTILL_SHUFFLE, cfg.epoch as u64, i as u64],
                );
                distillation_step(
                    &mut dev.model,
                    public,
                    &targets,
                    cfg.epsilon,
                    topology.degree(i),
                    cfg.distill_minibatch,
                    &mut rng,
                )
                .map_err(|source| CmfdError::Nn { device: i, source })?;
                Ok(c)
            };
            match run() {
                Ok(c) => **loss_slot = c,
                Err(e) => **err_slot = Some(e),
            }
        });
    }
    if let Some(e) = errors.into_iter().find_map(|e| e) {
        return Err(e);
    }

    let per_link = (public.len() * m * 4) as u64;
    Ok(EpochStats {
        mean_distill_loss: Some(
            distill_losses.iter().sum::<f64>() / devices.len() as f64,
        ),
        per_link_bytes_each_way: per_link,
        total_bytes: 2 * per_link * topology.edge_count() as u64,
    })
}

/// One synchronous parameter-averaging epoch.
pub fn param_avg_epoch<E: ParallelFor>(
    devices: &mut [DeviceState],
    topology: &Topology,
    cfg: &RoundConfig,
    exec: &E,
) -> Result<EpochStats, CmfdError> {
    validate_devices(devices, topology)?;
    let arch = devices[0].model.layer_sizes().to_vec();
    for (i, d) in devices.iter().enumerate() {
        if d.model.layer_sizes() != arch {
            return Err(CmfdError::HeterogeneousParamAveraging { device: i });
        }
    }

    // Phase 1: identical local SGD streams as CMFD.
    {
        let cfg = *cfg;
        exec.for_each(devices, |i, dev| {
            let mut rng = Rng::derive(
                cfg.master_seed,
                &[tag::LOCAL_SHUFFLE, cfg.epoch as u64, i as u64],
            );
            let _ = local_sgd_epoch(
                &mut dev.model,
                &dev.local,
                cfg.loss,
                cfg.eta,
                cfg.minibatch,
                &mut rng,
            );
        });
    }

    // Barrier: snapshot the temporal parameters.
    let snapshot: Vec<Vec<f64>> = devices.iter().map(|d| d.model.to_flat_params()).collect();

    // Phase 2: w_i ← ŵ_i − ε·Σ_j (ŵ_i − ŵ_j), no per-degree scaling
    // beyond the sum itself.
    {
        let eps = cfg.epsilon;
        let snapshot_ref = &snapshot;
        exec.for_each(devices, |i, dev| {
            let own = &snapshot_ref[i];
            let mut next = own.clone();
            for &j in topology.neighbors(i) {
                let other = &snapshot_ref[j];
                for (slot, (a, b)) in next.iter_mut().zip(own.iter().zip(other)) {
                    *slot -= eps * (a - b);
                }
            }
            dev.model
                .set_flat_params(&next)
                .expect("snapshot has matching shape");
        });
    }

    let n_w = devices[0].model.param_count();
    let per_link = (n_w * 4) as u64;
    Ok(EpochStats {
        mean_distill_loss: None,
        per_link_bytes_each_way: per_link,
        total_bytes: 2 * per_link * topology.edge_count() as u64,
    })
}

/// 64-bit FNV-1a over the 4-byte little-endian encoding of the outputs,
/// the telemetry digest for cross-run diffing.
pub fn outputs_digest(outputs: &FunctionGrid) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    for &v in outputs.values() {
        for byte in (v as f32).to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(PRIME);
        }
    }
    hash
}

/// Two devices estimating `f*(x) = x` with `f_i(x) = w_a·w_b·x`: both
/// optimal regions (`w_a·w_b = 1`) are one point in function space, so
/// distillation-style coupling and parameter mixing behave differently.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyState {
    /// `(w_a, w_b)` per device.
    pub devices: [[f64; 2]; 2],
}

impl ToyState {
    pub fn product(&self, i: usize) -> f64 {
        self.devices[i][0] * self.devices[i][1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyScheme {
    Distill,
    ParamAvg,
}

/// Direction of the distillation update for device `i`:
/// `−(w_a^i·w_b^i − w_a^j·w_b^j)·(w_b^i, w_a^i)`.
pub fn toy_distill_direction(state: &ToyState, i: usize) -> (f64, f64) {
    let j = 1 - i;
    let gap = state.product(i) - state.product(j);
    let [wa, wb] = state.devices[i];
    (-gap * wb, -gap * wa)
}

fn toy_local_gradient(state: &ToyState, i: usize) -> (f64, f64) {
    // local loss (w_a·w_b − 1)² against the shared truth f*(x) = x
    let gap = state.product(i) - 1.0;
    let [wa, wb] = state.devices[i];
    (2.0 * gap * wb, 2.0 * gap * wa)
}

/// Iterates the toy dynamics: a local gradient step on each device's own
/// fit, then either a distillation step toward the other device's outputs
/// or a parameter-mixing step. Returns the trajectory including the
/// initial state.
pub fn run_toy(
    scheme: ToyScheme,
    init: ToyState,
    steps: usize,
    eta: f64,
    epsilon: f64,
) -> Vec<ToyState> {
    let mut trajectory = Vec::with_capacity(steps + 1);
    let mut state = init;
    trajectory.push(state);
    for _ in 0..steps {
        // phase 1: local gradient step toward each device's own optimum
        let mut temporal = state;
        for i in 0..2 {
            let (ga, gb) = toy_local_gradient(&state, i);
            temporal.devices[i][0] -= eta * ga;
            temporal.devices[i][1] -= eta * gb;
        }
        // phase 2: cross-device coupling from the shared temporal state
        let mut next = temporal;
        match scheme {
            ToyScheme::Distill => {
                for i in 0..2 {
                    let (da, db) = toy_distill_direction(&temporal, i);
                    // single neighbor: n_i = 1
                    next.devices[i][0] += epsilon * da;
                    next.devices[i][1] += epsilon * db;
                }
            }
            ToyScheme::ParamAvg => {
                for i in 0..2 {
                    let j = 1 - i;
                    for k in 0..2 {
                        next.devices[i][k] -= epsilon
                            * (temporal.devices[i][k] - temporal.devices[j][k]);
                    }
                }
            }
        }
        state = next;
        trajectory.push(state);
    }
    trajectory
}

/// Magnitude of the next full update (local + coupling) for each device;
/// vanishes when both devices sit on the shared optimum.
pub fn toy_update_magnitude(state: &ToyState, eta: f64, epsilon: f64) -> [f64; 2] {
    let after = run_toy(ToyScheme::Distill, *state, 1, eta, epsilon);
    let next = after[1];
    let mut out = [0.0; 2];
    for i in 0..2 {
        let dx = next.devices[i][0] - state.devices[i][0];
        let dy = next.devices[i][1] - state.devices[i][1];
        out[i] = crate::float::sqrt(dx * dx + dy * dy);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use crate::exec::Serial;
    use crate::graph::ring_lattice;
    use crate::nn::Head;

    fn blob_device(seed: u64, layers: &[usize]) -> DeviceState {
        let mut rng = Rng::new(seed);
        let model = MlpModel::init_he(layers, Head::Softmax, None, &mut rng).unwrap();
        let local = synth_blobs(4, 20, 0.2, seed).unwrap();
        DeviceState::new(model, local)
    }

    fn public_from(seed: u64) -> PublicSet {
        let pool = synth_blobs(4, 50, 0.2, seed).unwrap();
        crate::data::make_public(&pool, 60, seed).unwrap()
    }

    #[test]
    fn aggregate_single_and_cancelling_neighbors() {
        let y = FunctionGrid::from_values(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let neg = y.scale(-1.0);
        let outputs = [y.clone(), neg];
        let got = aggregate_targets(&[0], |j| outputs.get(j)).unwrap();
        assert_eq!(got, outputs[0]);
        let zero = aggregate_targets(&[0, 1], |j| outputs.get(j)).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn aggregate_matches_mean_oracle() {
        let mut rng = Rng::new(3);
        let outs: Vec<FunctionGrid> = (0..3)
            .map(|_| {
                FunctionGrid::from_values(
                    4,
                    2,
                    (0..8).map(|_| rng.next_f64()).collect(),
                )
                .unwrap()
            })
            .collect();
        let got = aggregate_targets(&[0, 1, 2], |j| outs.get(j)).unwrap();
        for s in 0..4 {
            for m in 0..2 {
                let want = (outs[0].row(s)[m] + outs[1].row(s)[m] + outs[2].row(s)[m]) / 3.0;
                assert!((got.row(s)[m] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn aggregate_names_missing_device() {
        let y = FunctionGrid::zeros(2, 1);
        let err = aggregate_targets(&[0, 7], |j| if j == 0 { Some(&y) } else { None }).unwrap_err();
        assert_eq!(err, CmfdError::MissingNeighborReport { from: 7 });
    }

    #[test]
    fn distillation_loss_cases() {
        let dev = blob_device(1, &[2, 8, 4]);
        let public = public_from(2);
        let own = compute_shared_outputs(&dev.model, &public).unwrap();
        assert!(distillation_loss(&dev.model, &public, &own).unwrap() < 1e-20);

        // single input, scalar gap g → g²
        let m = MlpModel::from_flat_params(&[1, 1], Head::Identity, &[1.0, 0.0]).unwrap();
        let single = crate::data::LabeledDataset::new(vec![2.0], 1, vec![0], 1).unwrap();
        let p = crate::data::make_public(&single, 1, 0).unwrap();
        let target = FunctionGrid::from_values(1, 1, vec![5.0]).unwrap();
        // f(2) = 2, target 5, gap 3 → 9
        assert!((distillation_loss(&m, &p, &target).unwrap() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn distillation_step_closed_form_and_descent() {
        // linear 1-parameter model, one x: w ← w̃ − ε·n_i·2(w̃x − target)·x
        let mut m = MlpModel::from_flat_params(&[1, 1], Head::Identity, &[2.0, 0.0]).unwrap();
        let single = crate::data::LabeledDataset::new(vec![3.0], 1, vec![0], 1).unwrap();
        let p = crate::data::make_public(&single, 1, 0).unwrap();
        let target = FunctionGrid::from_values(1, 1, vec![1.0]).unwrap();
        let mut rng = Rng::new(5);
        distillation_step(&mut m, &p, &target, 0.01, 2, 8, &mut rng).unwrap();
        let want = 2.0 - 0.01 * 2.0 * 2.0 * (2.0 * 3.0 - 1.0) * 3.0;
        let got = m.to_flat_params()[0];
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        // bias gradient: 2(w̃x − t)·1
        let want_b = 0.0 - 0.01 * 2.0 * 2.0 * (2.0 * 3.0 - 1.0);
        assert!((m.to_flat_params()[1] - want_b).abs() < 1e-12);

        // a small step decreases the distillation loss on a random case
        let dev = blob_device(7, &[2, 8, 4]);
        let public = public_from(8);
        let other = blob_device(9, &[2, 6, 4]);
        let targets = compute_shared_outputs(&other.model, &public).unwrap();
        let before = distillation_loss(&dev.model, &public, &targets).unwrap();
        let mut model = dev.model.clone();
        let mut rng = Rng::new(6);
        distillation_step(&mut model, &public, &targets, 1e-4, 1, 20, &mut rng).unwrap();
        let after = distillation_loss(&model, &public, &targets).unwrap();
        assert!(after < before, "{after} !< {before}");

        // matched targets: zero gradient, parameters unchanged
        let own = compute_shared_outputs(&dev.model, &public).unwrap();
        let mut same = dev.model.clone();
        distillation_step(&mut same, &public, &own, 0.1, 3, 20, &mut Rng::new(7)).unwrap();
        assert_eq!(same.to_flat_params(), dev.model.to_flat_params());
    }

    #[test]
    fn local_sgd_epoch_cases() {
        let mut dev = blob_device(11, &[2, 8, 4]);
        let before = dev.model.to_flat_params();
        let mut rng = Rng::new(1);
        local_sgd_epoch(
            &mut dev.model,
            &dev.local,
            TrainLoss::CrossEntropy,
            0.0,
            10,
            &mut rng,
        )
        .unwrap();
        assert_eq!(dev.model.to_flat_params(), before);

        // single example, MSE, linear model: closed-form one-step update
        let mut m = MlpModel::from_flat_params(&[1, 1], Head::Identity, &[0.5, 0.0]).unwrap();
        let local = crate::data::LabeledDataset::new(vec![2.0], 1, vec![0], 1).unwrap();
        let mut rng = Rng::new(2);
        local_sgd_epoch(&mut m, &local, TrainLoss::SquaredError, 0.1, 1, &mut rng).unwrap();
        // one-hot target for label 0 is 1.0; grad = 2(w·x − 1)·x
        let want = 0.5 - 0.1 * 2.0 * (0.5 * 2.0 - 1.0) * 2.0;
        assert!((m.to_flat_params()[0] - want).abs() < 1e-12);
    }

    #[test]
    fn local_sgd_epoch_matches_replayed_steps() {
        // replay oracle: identical shuffle stream, explicit sgd_step calls
        let dev = blob_device(13, &[2, 6, 4]);
        let mut trained = dev.model.clone();
        let mut rng = Rng::derive(99, &[tag::LOCAL_SHUFFLE, 1, 0]);
        local_sgd_epoch(
            &mut trained,
            &dev.local,
            TrainLoss::CrossEntropy,
            0.01,
            7,
            &mut rng,
        )
        .unwrap();

        let mut replay = dev.model.clone();
        let mut rng = Rng::derive(99, &[tag::LOCAL_SHUFFLE, 1, 0]);
        let mut order: Vec<usize> = (0..dev.local.len()).collect();
        rng.shuffle(&mut order);
        for chunk in order.chunks(7) {
            let mut inputs = Vec::new();
            let mut labels = Vec::new();
            for &i in chunk {
                inputs.extend_from_slice(dev.local.input(i));
                labels.push(dev.local.label(i));
            }
            let g = replay
                .batch_gradient(
                    &inputs,
                    chunk.len(),
                    BatchTargets::Labels(&labels),
                    TrainLoss::CrossEntropy,
                )
                .unwrap();
            replay = replay.sgd_step(&g, 0.01);
        }
        assert_eq!(trained.to_flat_params(), replay.to_flat_params());
    }

    #[test]
    fn cmfd_epoch_symmetry_fixed_point() {
        // identical data and identical models: neighbor targets equal own
        // outputs, so the distillation gradient is exactly zero
        let topo = ring_lattice(4, 1).unwrap();
        let template = blob_device(21, &[2, 8, 4]);
        let mut devices: Vec<DeviceState> = (0..4).map(|_| template.clone()).collect();
        let public = public_from(22);
        let cfg = RoundConfig {
            eta: 0.0, // freeze phase 1 so symmetry is preserved exactly
            epsilon: 0.05,
            minibatch: 10,
            distill_minibatch: 20,
            loss: TrainLoss::CrossEntropy,
            master_seed: 5,
            epoch: 1,
        };
        let before = devices[0].model.to_flat_params();
        let stats = cmfd_epoch(&mut devices, &topo, &public, &cfg, &Serial).unwrap();
        for d in &devices {
            assert_eq!(d.model.to_flat_params(), before);
        }
        assert!(stats.mean_distill_loss.unwrap() < 1e-20);
    }

    #[test]
    fn cmfd_epoch_traffic_accounting() {
        let topo = ring_lattice(4, 1).unwrap();
        let mut devices: Vec<DeviceState> =
            (0..4).map(|s| blob_device(30 + s as u64, &[2, 8, 4])).collect();
        let public = public_from(31);
        let cfg = RoundConfig {
            eta: 0.001,
            epsilon: 0.01,
            minibatch: 10,
            distill_minibatch: 20,
            loss: TrainLoss::CrossEntropy,
            master_seed: 6,
            epoch: 1,
        };
        let stats = cmfd_epoch(&mut devices, &topo, &public, &cfg, &Serial).unwrap();
        // |D_s| = 60, M = 4, 4 bytes
        assert_eq!(stats.per_link_bytes_each_way, 60 * 4 * 4);
        assert_eq!(stats.total_bytes, 2 * 4 * 60 * 4 * 4); // 4 links
    }

    #[test]
    fn param_avg_requires_homogeneous_models() {
        let topo = ring_lattice(4, 1).unwrap();
        let mut devices = vec![
            blob_device(40, &[2, 8, 4]),
            blob_device(41, &[2, 8, 4]),
            blob_device(42, &[2, 6, 4]),
            blob_device(43, &[2, 8, 4]),
        ];
        let cfg = RoundConfig {
            eta: 0.001,
            epsilon: 0.01,
            minibatch: 10,
            distill_minibatch: 20,
            loss: TrainLoss::CrossEntropy,
            master_seed: 7,
            epoch: 1,
        };
        let err = param_avg_epoch(&mut devices, &topo, &cfg, &Serial).unwrap_err();
        assert_eq!(err, CmfdError::HeterogeneousParamAveraging { device: 2 });
        // heterogeneous CMFD is fine
        let public = public_from(44);
        assert!(cmfd_epoch(&mut devices, &topo, &public, &cfg, &Serial).is_ok());
    }

    #[test]
    fn param_avg_mixes_toward_neighbors() {
        // two devices, frozen phase 1, ε = 1/2 → both land on the average
        let pair = crate::graph::Topology::from_edges(2, &[(0, 1)]).unwrap();
        let mut a = blob_device(50, &[2, 4, 4]);
        let mut b = blob_device(51, &[2, 4, 4]);
        // same architecture, different parameters
        let pa = a.model.to_flat_params();
        let pb = b.model.to_flat_params();
        let want: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| 0.5 * (x + y)).collect();
        let mut devices = vec![a.clone(), b.clone()];
        let cfg = RoundConfig {
            eta: 0.0,
            epsilon: 0.5,
            minibatch: 10,
            distill_minibatch: 10,
            loss: TrainLoss::CrossEntropy,
            master_seed: 8,
            epoch: 3,
        };
        let stats = param_avg_epoch(&mut devices, &pair, &cfg, &Serial).unwrap();
        for d in &devices {
            for (g, w) in d.model.to_flat_params().iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
        let n_w = a.model.param_count() as u64;
        assert_eq!(stats.per_link_bytes_each_way, n_w * 4);
        assert_eq!(stats.total_bytes, 2 * n_w * 4);
        let _ = (a.model.to_flat_params(), b.model.to_flat_params());
        a.shared_outputs = None;
        b.shared_outputs = None;
    }

    #[test]
    fn digest_is_stable_and_value_sensitive() {
        let y = FunctionGrid::from_values(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let d1 = outputs_digest(&y);
        let d2 = outputs_digest(&y);
        assert_eq!(d1, d2);
        let z = FunctionGrid::from_values(2, 2, vec![0.1, 0.2, 0.3, 0.5]).unwrap();
        assert_ne!(d1, outputs_digest(&z));
        // FNV-1a of the empty stream is the offset basis
        let empty = FunctionGrid::zeros(0, 0);
        assert_eq!(outputs_digest(&empty), 0xcbf29ce484222325);
    }

    #[test]
    fn toy_directions_match_hand_values() {
        // equal products: the distillation direction vanishes
        let stopped = ToyState {
            devices: [[0.5, 2.0], [-1.0, -1.0]],
        };
        let (da, db) = toy_distill_direction(&stopped, 0);
        assert_eq!((da, db), (0.0, 0.0));

        // products 0.25 vs 2: direction ∝ +1.75·(0.5, 0.5)
        let state = ToyState {
            devices: [[0.5, 0.5], [-2.0, -1.0]],
        };
        let (da, db) = toy_distill_direction(&state, 0);
        assert!((da - 1.75 * 0.5).abs() < 1e-12);
        assert!((db - 1.75 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn toy_distillation_reaches_shared_optimum() {
        let init = ToyState {
            devices: [[0.5, 0.5], [-2.0, -1.0]],
        };
        let traj = run_toy(ToyScheme::Distill, init, 4000, 0.05, 0.1);
        let last = traj.last().unwrap();
        for i in 0..2 {
            assert!(
                (last.product(i) - 1.0).abs() < 1e-3,
                "device {i}: product {}",
                last.product(i)
            );
        }
        let residual = toy_update_magnitude(last, 0.05, 0.1);
        assert!(residual[0] < 1e-3 && residual[1] < 1e-3, "{residual:?}");
        // device 1 stays in its own optimal region (third quadrant)
        assert!(last.devices[1][0] < 0.0 && last.devices[1][1] < 0.0);
    }

    #[test]
    fn toy_param_avg_first_step_moves_away() {
        let init = ToyState {
            devices: [[0.5, 0.5], [-2.0, -1.0]],
        };
        let traj = run_toy(ToyScheme::ParamAvg, init, 1, 0.05, 0.1);
        // device 0 has product < 1; mixing with the opposite-sign device
        // drags the product further from 1 on the first step
        assert!(traj[1].product(0) < traj[0].product(0));
    }
}
