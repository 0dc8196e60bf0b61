//! FPLinQ benchmark: weighted sum rate power control by the quadratic
//! transform of fractional programming, with continuous powers.
//!
//! Each iteration updates, in order, the SINRs `γ`, the quadratic-transform
//! auxiliaries `y` and the powers `p`, each block in closed form. Every block
//! update maximizes the same surrogate, so the weighted sum rate never
//! decreases.

use nalgebra::DVector;

use crate::channel_model::NetworkInstance;
use crate::error::{Error, Result};
use crate::interference::{affine_eval, PowerVector};
use crate::solvers_dc::{SolveResult, POWER_FLOOR};

/// Benchmark horizon used for the performance ratio.
pub const DEFAULT_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct FpState {
    pub p: DVector<f64>,
    pub gamma: DVector<f64>,
    pub y: DVector<f64>,
}

impl FpState {
    /// Full power, with `γ` and `y` consistent with it.
    pub fn full_power(inst: &NetworkInstance) -> Self {
        let p = DVector::from_element(inst.k(), inst.p_max);
        let gamma = sinr_affine(inst, &p);
        let y = auxiliaries(inst, &inst.weights, &p, &gamma);
        Self { p, gamma, y }
    }
}

fn sinr_affine(inst: &NetworkInstance, p: &DVector<f64>) -> DVector<f64> {
    let interference = affine_eval(inst, p);
    DVector::from_fn(inst.k(), |i, _| inst.gains[(i, i)] * p[i] / interference[i])
}

fn auxiliaries(inst: &NetworkInstance, w: &DVector<f64>, p: &DVector<f64>, gamma: &DVector<f64>) -> DVector<f64> {
    let total = &inst.gains * p;
    DVector::from_fn(inst.k(), |i, _| {
        let g = inst.gains[(i, i)];
        (w[i] * (1.0 + gamma[i]) * g * p[i]).sqrt() / (inst.noise + total[i])
    })
}

/// One γ → y → p sweep. Powers are clamped to `[floor, p_max]`.
pub fn fplinq_step(inst: &NetworkInstance, w: &DVector<f64>, state: &FpState, floor: f64) -> FpState {
    let k = inst.k();
    let gamma = sinr_affine(inst, &state.p);
    let y = auxiliaries(inst, w, &state.p, &gamma);
    let y2 = y.map(|v| v * v);
    // Σ_j y_j² G_ji for each i.
    let weighted = inst.gains.tr_mul(&y2);
    let p = DVector::from_fn(k, |i, _| {
        let g = inst.gains[(i, i)];
        let raw = y2[i] * w[i] * (1.0 + gamma[i]) * g / (weighted[i] * weighted[i]);
        if raw.is_nan() {
            floor
        } else {
            raw.clamp(floor, inst.p_max)
        }
    });
    FpState { p, gamma, y }
}

fn weighted_rate(inst: &NetworkInstance, w: &DVector<f64>, p: &DVector<f64>) -> f64 {
    let gamma = sinr_affine(inst, p);
    w.iter().zip(gamma.iter()).map(|(w, g)| w * g.ln_1p()).sum()
}

/// Runs `iters` sweeps from full power. The trace holds the weighted sum
/// rate (nats) at iterations `0..=iters`.
pub fn fplinq_solve(inst: &NetworkInstance, w: &DVector<f64>, iters: usize) -> Result<SolveResult> {
    if iters == 0 {
        return Err(Error::InvalidConfig("FPLinQ needs at least one iteration".into()));
    }
    if w.len() != inst.k() {
        return Err(Error::DimensionMismatch {
            expected: inst.k(),
            got: w.len(),
        });
    }
    let mut state = FpState::full_power(inst);
    let mut trace = Vec::with_capacity(iters + 1);
    let mut trajectory = Vec::with_capacity(iters + 1);
    trace.push((0, weighted_rate(inst, w, &state.p)));
    trajectory.push(state.p.as_slice().to_vec());
    for it in 1..=iters {
        state = fplinq_step(inst, w, &state, POWER_FLOOR);
        trace.push((it, weighted_rate(inst, w, &state.p)));
        trajectory.push(state.p.as_slice().to_vec());
    }
    Ok(SolveResult {
        p_final: PowerVector::new(state.p, inst.p_max)?,
        objective_trace: trace,
        trajectory,
        converged: true,
        inner_iterations_total: 0,
    })
}
