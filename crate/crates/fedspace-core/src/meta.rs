//! Consensus-based subgradient descent in the discretized function space,
//! with executable forms of its convergence bounds.
//!
//! Per epoch every device takes a measure-corrected subgradient step
//! `g_i = f_i − η_t·d_i·ν_i`, then a consensus step mixes neighbors:
//! `f ← (I − εL)·g`. The disagreement `D_t` (RMS distance of the device
//! functions from their mean) contracts by `κ₂ = 1 − ελ₂` per step, which
//! gives the envelope `γ_t`; the gap of the best mean-function loss over
//! the optimum is bounded by an explicit expression in `κ₂`, the step
//! schedule, and the non-IIDness-weighted Lipschitz constant
//! `L_m = max_i √S_i·L_i`.
//!
//! Lipschitz constants are not knowable a priori, so a run records the
//! empirical supremum of subgradient norms (at the device iterates and at
//! their mean) and reports bounds with 10% headroom on top; see
//! [`MetaTrace::lipschitz`].

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::exec::ParallelFor;
use crate::float;
use crate::funcspace::{
    self, fed_norm, mean_part, rms_distance, FederatedFunction, FuncSpaceError, FunctionGrid,
    MeasureSet,
};
use crate::graph::{self, GraphError, Topology};
use crate::sum::Accumulator;

/// Slack allowed when asserting the exact inequalities.
pub const ENVELOPE_TOL: f64 = 1e-9;

/// Multiplicative headroom on the empirical Lipschitz estimate.
pub const LIPSCHITZ_HEADROOM: f64 = 1.1;

/// Positivity floor for the KL domain projection.
pub const KL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetaError {
    #[error("expected {expected} devices, got {got}")]
    DeviceCount { expected: usize, got: usize },
    #[error("function space error: {0}")]
    FuncSpace(#[from] FuncSpaceError),
    #[error("graph error: {0}")]
    Graph(#[from] GraphError),
    #[error("KL loss requires strictly positive values (row {row})")]
    KlDomain { row: usize },
    #[error("KL target rows must be positive and sum to 1 (row {row})")]
    KlTarget { row: usize },
    #[error("non-finite values at epoch {epoch}; run aborted")]
    NumericOverflow { epoch: usize },
    #[error("the best-gap bound needs t >= 2, got t = {t}")]
    EpochTooSmall { t: usize },
    #[error("learning rate must be positive, got {eta}")]
    InvalidRate { eta: f64 },
}

/// Loss criterion applied pointwise on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `l(y, y') = ‖y − y'‖²`
    Mse,
    /// `l(y, y') = Σ_m y_m log(y_m / y'_m)`, prediction first.
    Kl,
}

/// A loss functional `f ↦ Σ_s w_s · l(f(x_s), f*(x_s))` with fixed target.
#[derive(Debug, Clone)]
pub struct Loss {
    kind: LossKind,
    target: FunctionGrid,
}

impl Loss {
    pub fn new(kind: LossKind, target: FunctionGrid) -> Result<Self, MetaError> {
        if kind == LossKind::Kl {
            for s in 0..target.rows() {
                let row = target.row(s);
                if row.iter().any(|&v| v <= 0.0) {
                    return Err(MetaError::KlTarget { row: s });
                }
                let total: f64 = row.iter().sum();
                if float::abs(total - 1.0) > 1e-9 {
                    return Err(MetaError::KlTarget { row: s });
                }
            }
        }
        Ok(Self { kind, target })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn target(&self) -> &FunctionGrid {
        &self.target
    }

    /// Loss value under the given measure weights.
    pub fn value(&self, f: &FunctionGrid, weights: &[f64]) -> Result<f64, MetaError> {
        if !f.same_shape(&self.target) {
            return Err(FuncSpaceError::ShapeMismatch {
                left_rows: f.rows(),
                left_cols: f.cols(),
                right_rows: self.target.rows(),
                right_cols: self.target.cols(),
            }
            .into());
        }
        let mut acc = Accumulator::new();
        for s in 0..f.rows() {
            let w = weights[s];
            if w == 0.0 {
                continue;
            }
            let (fr, tr) = (f.row(s), self.target.row(s));
            let mut point = Accumulator::new();
            match self.kind {
                LossKind::Mse => {
                    for (a, b) in fr.iter().zip(tr) {
                        let d = a - b;
                        point.add(d * d);
                    }
                }
                LossKind::Kl => {
                    for (a, b) in fr.iter().zip(tr) {
                        if *a <= 0.0 {
                            return Err(MetaError::KlDomain { row: s });
                        }
                        point.add(a * float::ln(a / b));
                    }
                }
            }
            acc.add(w * point.value());
        }
        Ok(acc.value())
    }

    /// Pointwise Fréchet subgradient grid: `2(f − f*)` for MSE,
    /// `log(f/f*) + 1` per coordinate for KL.
    pub fn subgradient(&self, f: &FunctionGrid) -> Result<FunctionGrid, MetaError> {
        if !f.same_shape(&self.target) {
            return Err(FuncSpaceError::ShapeMismatch {
                left_rows: f.rows(),
                left_cols: f.cols(),
                right_rows: self.target.rows(),
                right_cols: self.target.cols(),
            }
            .into());
        }
        let mut out = FunctionGrid::zeros(f.rows(), f.cols());
        for s in 0..f.rows() {
            let (fr, tr) = (f.row(s), self.target.row(s));
            let dr = out.row_mut(s);
            match self.kind {
                LossKind::Mse => {
                    for m in 0..fr.len() {
                        dr[m] = 2.0 * (fr[m] - tr[m]);
                    }
                }
                LossKind::Kl => {
                    for m in 0..fr.len() {
                        if fr[m] <= 0.0 {
                            return Err(MetaError::KlDomain { row: s });
                        }
                        dr[m] = float::ln(fr[m] / tr[m]) + 1.0;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// `g = f − η·(d ⊙ ν)`: subgradient step corrected by the density ratio.
pub fn local_step(f: &FunctionGrid, d: &FunctionGrid, nu: &[f64], eta: f64) -> FunctionGrid {
    let mut g = f.clone();
    g.axpy(-eta, &d.scale_rows(nu));
    g
}

/// Neighbor-averaging consensus:
/// `f_i = g_i − ε·n_i·(g_i − (1/n_i)·Σ_{j∈Neigh(i)} g_j)`.
pub fn consensus_step(
    g: &FederatedFunction,
    topology: &Topology,
    eps: f64,
) -> Result<FederatedFunction, MetaError> {
    let n = topology.node_count();
    if g.part_count() != n {
        return Err(MetaError::DeviceCount {
            expected: n,
            got: g.part_count(),
        });
    }
    let mut parts = Vec::with_capacity(n);
    for i in 0..n {
        parts.push(consensus_part(g, topology, eps, i));
    }
    Ok(FederatedFunction::new(parts)?)
}

fn consensus_part(g: &FederatedFunction, topology: &Topology, eps: f64, i: usize) -> FunctionGrid {
    let deg = topology.degree(i) as f64;
    let mut out = g.part(i).scale(1.0 - eps * deg);
    for &j in topology.neighbors(i) {
        out.axpy(eps, g.part(j));
    }
    out
}

/// Same update written as `(I − εL)·g`; kept as the cross-check route for
/// the per-device form.
pub fn consensus_step_matrix(
    g: &FederatedFunction,
    topology: &Topology,
    eps: f64,
) -> Result<FederatedFunction, MetaError> {
    let p = topology.consensus_matrix(eps);
    Ok(funcspace::matrix_apply(&p, g)?)
}

/// Learning-rate schedule over epochs `t = 1, 2, …` (all non-increasing).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    /// `η_t = c`
    Constant(f64),
    /// `η_t = c / t`
    InverseT(f64),
    /// `η_t = c / √t`
    InverseSqrt(f64),
}

impl Schedule {
    pub fn rate(&self, t: usize) -> f64 {
        debug_assert!(t >= 1);
        match *self {
            Schedule::Constant(c) => c,
            Schedule::InverseT(c) => c / t as f64,
            Schedule::InverseSqrt(c) => c / float::sqrt(t as f64),
        }
    }

    pub fn initial(&self) -> f64 {
        self.rate(1)
    }
}

/// Initialization of the starting federated function `f₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitKind {
    /// All-zero grids; makes `‖f₁‖_F` exactly 0.
    Zero,
    /// Device-seeded Gaussian grid values.
    Gaussian { scale: f64 },
}

/// Run configuration for the function-space algorithm.
#[derive(Debug, Clone)]
pub struct MetaConfig {
    pub schedule: Schedule,
    pub epsilon: f64,
    pub epochs: usize,
}

/// Per-epoch record of a run plus everything the bounds need.
#[derive(Debug, Clone)]
pub struct MetaTrace {
    pub epochs: usize,
    /// `η_t`
    pub eta: Vec<f64>,
    /// Disagreement `D_t`, one entry per epoch (state before update `t`).
    pub d_t: Vec<f64>,
    /// `L_μ(f̄_t)`
    pub loss_mean: Vec<f64>,
    /// Best loss so far, `L_μ(f_best,t)`; non-increasing.
    pub loss_best: Vec<f64>,
    /// Disagreement envelope `γ_t`; NaN when `ε` is out of theory range.
    pub gamma: Vec<f64>,
    /// Best-gap bound; NaN at `t = 1` and when `ε` is out of range.
    pub thm2_rhs: Vec<f64>,
    /// KL positivity projections fired per epoch (always 0 for MSE).
    pub kl_clamps: Vec<usize>,
    /// `‖f₁‖_F`
    pub f1_norm: f64,
    pub lambda2: f64,
    pub kappa2: f64,
    pub epsilon: f64,
    /// Whether `0 < ε ≤ 1/(2Δ)` held (bounds only apply if so).
    pub eps_valid: bool,
    /// Empirical per-device Lipschitz estimates (headroom included).
    pub lipschitz: Vec<f64>,
    /// `L_m = max_i √S_i·L_i`
    pub l_m: f64,
    /// `‖f̄₂ − f*‖²_μ`; NaN when the run is shorter than 2 epochs.
    pub c1: f64,
    /// `L_μ(f*)`
    pub target_loss: f64,
    pub final_function: FederatedFunction,
}

impl MetaTrace {
    /// `C₂ = 4·L_m·κ₂ / (1 − κ₂)`
    pub fn c2(&self) -> f64 {
        4.0 * self.l_m * self.kappa2 / (1.0 - self.kappa2)
    }
}

struct DeviceSlot {
    g: FunctionGrid,
    dnorm: f64,
    error: Option<MetaError>,
}

/// Runs the algorithm for `cfg.epochs` epochs from `f_init`.
///
/// Phase 1 (independent per device): subgradient and local step. Barrier.
/// Phase 2 (independent per device): neighbor-average consensus, reading
/// only phase-1 outputs. Deterministic for any executor.
pub fn run_meta<E: ParallelFor>(
    cfg: &MetaConfig,
    topology: &Topology,
    measures: &MeasureSet,
    loss: &Loss,
    f_init: FederatedFunction,
    exec: &E,
) -> Result<MetaTrace, MetaError> {
    let n = topology.node_count();
    if measures.device_count() != n || f_init.part_count() != n {
        return Err(MetaError::DeviceCount {
            expected: n,
            got: f_init.part_count(),
        });
    }
    if cfg.schedule.initial() <= 0.0 {
        return Err(MetaError::InvalidRate {
            eta: cfg.schedule.initial(),
        });
    }
    let summary = graph::spectral_summary(topology)?;
    let eps_valid = cfg.epsilon > 0.0 && cfg.epsilon <= summary.epsilon_max();
    let kappa2 = summary.kappa2(cfg.epsilon);
    let global = measures.global();

    let mut f = f_init;
    let mut init_clamps = 0usize;
    if loss.kind() == LossKind::Kl {
        for i in 0..n {
            init_clamps += project_positive(f.part_mut(i));
        }
    }
    let f1_norm = fed_norm(&f, global)?;
    let target_loss = loss.value(loss.target(), global)?;

    let epochs = cfg.epochs;
    let mut trace = MetaTrace {
        epochs,
        eta: Vec::with_capacity(epochs),
        d_t: Vec::with_capacity(epochs),
        loss_mean: Vec::with_capacity(epochs),
        loss_best: Vec::with_capacity(epochs),
        gamma: vec![f64::NAN; epochs],
        thm2_rhs: vec![f64::NAN; epochs],
        kl_clamps: Vec::with_capacity(epochs),
        f1_norm,
        lambda2: summary.lambda2,
        kappa2,
        epsilon: cfg.epsilon,
        eps_valid,
        lipschitz: vec![0.0; n],
        l_m: 0.0,
        c1: f64::NAN,
        target_loss,
        final_function: FederatedFunction::zeros(0, 0, 0),
    };

    let mut dnorm_sup = vec![0.0f64; n];
    let mut best = f64::INFINITY;

    for t in 1..=epochs {
        if !f.is_finite() {
            return Err(MetaError::NumericOverflow { epoch: t });
        }
        let eta = cfg.schedule.rate(t);
        let mean = mean_part(&f);
        if t == 2 {
            let diff = mean.sub(loss.target());
            let d = funcspace::norm(&diff, global)?;
            trace.c1 = d * d;
        }
        trace.d_t.push(rms_distance(&f, global)?);
        let lm = loss.value(&mean, global)?;
        best = best.min(lm);
        trace.loss_mean.push(lm);
        trace.loss_best.push(best);
        trace.eta.push(eta);

        // Lipschitz bookkeeping also covers the mean iterate, where the
        // optimality argument evaluates a subgradient.
        let d_mean = loss.subgradient(&mean)?;
        for i in 0..n {
            let nrm = funcspace::norm(&d_mean, measures.local(i))?;
            if nrm > dnorm_sup[i] {
                dnorm_sup[i] = nrm;
            }
        }

        // Phase 1: local subgradient steps.
        let mut slots: Vec<DeviceSlot> = (0..n)
            .map(|_| DeviceSlot {
                g: FunctionGrid::zeros(0, 0),
                dnorm: 0.0,
                error: None,
            })
            .collect();
        {
            let f_ref = &f;
            exec.for_each(&mut slots, |i, slot| {
                match loss.subgradient(f_ref.part(i)) {
                    Ok(d) => match funcspace::norm(&d, measures.local(i)) {
                        Ok(nrm) => {
                            slot.dnorm = nrm;
                            slot.g = local_step(f_ref.part(i), &d, measures.nu(i), eta);
                        }
                        Err(e) => slot.error = Some(e.into()),
                    },
                    Err(e) => slot.error = Some(e),
                }
            });
        }
        let mut g_parts = Vec::with_capacity(n);
        for (i, slot) in slots.into_iter().enumerate() {
            if let Some(e) = slot.error {
                return Err(e);
            }
            if slot.dnorm > dnorm_sup[i] {
                dnorm_sup[i] = slot.dnorm;
            }
            g_parts.push(slot.g);
        }
        let g = FederatedFunction::new(g_parts)?;

        // Phase 2: consensus on the shared phase-1 snapshot.
        let mut new_parts: Vec<FunctionGrid> =
            (0..n).map(|_| FunctionGrid::zeros(0, 0)).collect();
        {
            let g_ref = &g;
            exec.for_each(&mut new_parts, |i, out| {
                *out = consensus_part(g_ref, topology, cfg.epsilon, i);
            });
        }
        let mut clamps = 0usize;
        if loss.kind() == LossKind::Kl {
            for part in &mut new_parts {
                clamps += project_positive(part);
            }
        }
        if t == 1 {
            clamps += init_clamps;
        }
        trace.kl_clamps.push(clamps);
        f = FederatedFunction::new(new_parts)?;
    }
    if !f.is_finite() {
        return Err(MetaError::NumericOverflow { epoch: epochs });
    }

    for i in 0..n {
        trace.lipschitz[i] = dnorm_sup[i] * LIPSCHITZ_HEADROOM;
    }
    trace.l_m = (0..n)
        .map(|i| float::sqrt(measures.s_sup(i)) * trace.lipschitz[i])
        .fold(0.0, f64::max);

    if eps_valid {
        trace.gamma = gamma_series(f1_norm, n, kappa2, trace.l_m, &cfg.schedule, epochs);
        trace.thm2_rhs = best_gap_bound_series(
            trace.c1,
            trace.c2(),
            trace.l_m,
            kappa2,
            f1_norm,
            n,
            &cfg.schedule,
            epochs,
        );
    }
    trace.final_function = f;
    Ok(trace)
}

/// Clamps entries to `KL_FLOOR` and renormalizes each row to sum 1;
/// returns how many entries were clamped.
fn project_positive(f: &mut FunctionGrid) -> usize {
    let mut clamped = 0;
    for s in 0..f.rows() {
        let row = f.row_mut(s);
        let mut dirty = false;
        for v in row.iter_mut() {
            if *v < KL_FLOOR {
                *v = KL_FLOOR;
                clamped += 1;
                dirty = true;
            }
        }
        if dirty {
            let total: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v /= total;
            }
        }
    }
    clamped
}

/// Disagreement envelope
/// `γ_t = (1/√n)·‖f₁‖_F·κ₂^{t−1} + L_m·Σ_{τ=1}^{t−1} η_τ·κ₂^{t−τ}`
/// for `t = 1..=epochs`, via the recurrence `γ_{t+1} = κ₂·(γ_t + L_m·η_t)`.
pub fn gamma_series(
    f1_norm: f64,
    n: usize,
    kappa2: f64,
    l_m: f64,
    schedule: &Schedule,
    epochs: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(epochs);
    let mut gamma = f1_norm / float::sqrt(n as f64);
    for t in 1..=epochs {
        out.push(gamma);
        gamma = kappa2 * (gamma + l_m * schedule.rate(t));
    }
    out
}

/// `γ_t` evaluated directly from its definition (spot-check route).
pub fn gamma_at(
    t: usize,
    f1_norm: f64,
    n: usize,
    kappa2: f64,
    l_m: f64,
    schedule: &Schedule,
) -> f64 {
    let mut acc = Accumulator::new();
    for tau in 1..t {
        acc.add(schedule.rate(tau) * float::powi(kappa2, (t - tau) as u32));
    }
    f1_norm / float::sqrt(n as f64) * float::powi(kappa2, (t - 1) as u32) + l_m * acc.value()
}

/// Asymptotic disagreement level under a non-increasing schedule:
/// `η₁·(1 − ελ₂)·L_m / (ελ₂)`.
pub fn limit_disagreement(eta1: f64, eps: f64, lambda2: f64, l_m: f64) -> f64 {
    eta1 * (1.0 - eps * lambda2) * l_m / (eps * lambda2)
}

/// Constant-rate asymptotic best gap:
/// `(η·L_m/2)·(1 + 4√n·L_m·(1 − ελ₂)/(ελ₂))`.
pub fn limit_best_gap(eta: f64, l_m: f64, n: usize, eps: f64, lambda2: f64) -> f64 {
    let ratio = (1.0 - eps * lambda2) / (eps * lambda2);
    eta * l_m / 2.0 * (1.0 + 4.0 * float::sqrt(n as f64) * l_m * ratio)
}

/// Best-gap bound at epoch `t ≥ 2`:
/// `[C₁ + L_m·Σ_{τ=2}^t η_τ² + C₂·(1 − κ₂^{t−1})·(η₁‖f₁‖_F + √n·L_m·Σ_{τ=1}^{t−1} η_τ²)] / (2·Σ_{τ=2}^t η_τ)`.
#[allow(clippy::too_many_arguments)]
pub fn best_gap_bound_at(
    t: usize,
    c1: f64,
    c2: f64,
    l_m: f64,
    kappa2: f64,
    f1_norm: f64,
    n: usize,
    schedule: &Schedule,
) -> Result<f64, MetaError> {
    if t < 2 {
        return Err(MetaError::EpochTooSmall { t });
    }
    let mut eta_sum = Accumulator::new();
    let mut eta_sq_from2 = Accumulator::new();
    let mut eta_sq_to_prev = Accumulator::new();
    for tau in 1..=t {
        let e = schedule.rate(tau);
        if tau >= 2 {
            eta_sum.add(e);
            eta_sq_from2.add(e * e);
        }
        if tau < t {
            eta_sq_to_prev.add(e * e);
        }
    }
    let damp = 1.0 - float::powi(kappa2, (t - 1) as u32);
    let numer = c1
        + l_m * eta_sq_from2.value()
        + c2 * damp
            * (schedule.initial() * f1_norm + float::sqrt(n as f64) * l_m * eta_sq_to_prev.value());
    Ok(numer / (2.0 * eta_sum.value()))
}

/// Best-gap bound for every epoch of a run; index 0 (t = 1) is NaN.
#[allow(clippy::too_many_arguments)]
pub fn best_gap_bound_series(
    c1: f64,
    c2: f64,
    l_m: f64,
    kappa2: f64,
    f1_norm: f64,
    n: usize,
    schedule: &Schedule,
    epochs: usize,
) -> Vec<f64> {
    let mut out = vec![f64::NAN; epochs];
    let sqrt_n = float::sqrt(n as f64);
    let eta1 = schedule.initial();
    let mut eta_sum = Accumulator::new();
    let mut eta_sq_from2 = Accumulator::new();
    let mut eta_sq_to_prev = Accumulator::new();
    let mut kappa_pow = 1.0; // κ₂^{t−1}
    for t in 1..=epochs {
        let e = schedule.rate(t);
        if t >= 2 {
            eta_sum.add(e);
            eta_sq_from2.add(e * e);
            kappa_pow *= kappa2;
            let prev = schedule.rate(t - 1);
            eta_sq_to_prev.add(prev * prev);
            let numer = c1
                + l_m * eta_sq_from2.value()
                + c2 * (1.0 - kappa_pow) * (eta1 * f1_norm + sqrt_n * l_m * eta_sq_to_prev.value());
            out[t - 1] = numer / (2.0 * eta_sum.value());
        }
    }
    out
}

/// Summary of the bound constants of a completed run.
#[derive(Debug, Clone)]
pub struct BoundReport {
    /// `‖f̄₂ − f*‖²_μ` (NaN for runs shorter than two epochs).
    pub c1: f64,
    /// `4·L_m·κ₂/(1 − κ₂)`
    pub c2: f64,
    pub l_m: f64,
    pub kappa2: f64,
    pub lambda2: f64,
    pub epsilon: f64,
    pub eps_valid: bool,
    /// Asymptotic disagreement level.
    pub limit_disagreement: f64,
    /// Constant-rate asymptotic best gap (uses `η₁`).
    pub limit_best_gap: f64,
}

/// Bound constants from a completed run and its schedule.
pub fn bound_report(trace: &MetaTrace, schedule: &Schedule, n: usize) -> BoundReport {
    let eta1 = schedule.initial();
    let (limit_d, limit_b, c2) = if trace.eps_valid {
        (
            limit_disagreement(eta1, trace.epsilon, trace.lambda2, trace.l_m),
            limit_best_gap(eta1, trace.l_m, n, trace.epsilon, trace.lambda2),
            trace.c2(),
        )
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    BoundReport {
        c1: trace.c1,
        c2,
        l_m: trace.l_m,
        kappa2: trace.kappa2,
        lambda2: trace.lambda2,
        epsilon: trace.epsilon,
        eps_valid: trace.eps_valid,
        limit_disagreement: limit_d,
        limit_best_gap: limit_b,
    }
}

/// Result of checking a per-epoch inequality over a trace.
#[derive(Debug, Clone, Default)]
pub struct EnvelopeCheck {
    /// Epochs (1-based) where the inequality failed beyond tolerance.
    pub violations: Vec<usize>,
    /// Largest observed `lhs − rhs`.
    pub max_excess: f64,
}

impl EnvelopeCheck {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `D_t ≤ γ_t` at every recorded epoch.
pub fn check_disagreement_envelope(trace: &MetaTrace) -> EnvelopeCheck {
    let mut check = EnvelopeCheck {
        max_excess: f64::NEG_INFINITY,
        ..Default::default()
    };
    for t in 1..=trace.epochs {
        let excess = trace.d_t[t - 1] - trace.gamma[t - 1];
        if excess > check.max_excess {
            check.max_excess = excess;
        }
        if excess > ENVELOPE_TOL {
            check.violations.push(t);
        }
    }
    check
}

/// Checks `L_μ(f_best,t) − L_μ(f*) ≤ bound(t)` for every `t ≥ 2`.
pub fn check_best_gap_envelope(trace: &MetaTrace) -> EnvelopeCheck {
    let mut check = EnvelopeCheck {
        max_excess: f64::NEG_INFINITY,
        ..Default::default()
    };
    for t in 2..=trace.epochs {
        let gap = trace.loss_best[t - 1] - trace.target_loss;
        let excess = gap - trace.thm2_rhs[t - 1];
        if excess > check.max_excess {
            check.max_excess = excess;
        }
        if excess > ENVELOPE_TOL {
            check.violations.push(t);
        }
    }
    check
}

/// CSV export with the fixed column set.
pub fn metatrace_csv(trace: &MetaTrace) -> String {
    let mut out = String::from("epoch,D_t,gamma_t,loss_mean,loss_best,thm2_rhs\n");
    for t in 1..=trace.epochs {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            t,
            trace.d_t[t - 1],
            trace.gamma[t - 1],
            trace.loss_mean[t - 1],
            trace.loss_best[t - 1],
            trace.thm2_rhs[t - 1],
        ));
    }
    out
}
