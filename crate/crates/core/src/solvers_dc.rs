//! Weighted sum rate objectives and the difference-of-convex solvers.
//!
//! Both objectives split as `concave − concave` once the logarithm is
//! expanded, and linearizing the subtracted term at `p⁽ᵏ⁾` gives a concave
//! minorant. For the log-SINR objective the minorant's maximizer is the
//! closed-form map `min{Ĩ(p), p_max}` with
//!
//! ```text
//! Ĩ_i(p) = w_i / Σ_j w_j J[j][i] / I_j(p)
//! ```
//!
//! For the full objective the minorant is maximized by a primal-dual inner
//! loop on the split `p = q`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel_model::NetworkInstance;
use crate::error::{Error, Result};
use crate::interference::{check_dim, check_positive, InterferenceFunction, InterferenceModel, PowerVector};

/// Default lower bound on normalized power; keeps every log term finite.
pub const POWER_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub tol_fixed_point: f64,
    pub tol_outer: f64,
    pub tol_inner: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub max_fp_iter: usize,
    /// Initial dual step `α`.
    pub dual_step: f64,
    /// Geometric decay of `α` per inner iteration.
    pub dual_decay: f64,
    /// Lower bound `ε` imposed on every power.
    pub power_floor: f64,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub armijo_initial_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_fixed_point: 1e-8,
            tol_outer: 1e-6,
            tol_inner: 1e-6,
            max_outer: 50,
            max_inner: 200,
            max_fp_iter: 500,
            dual_step: 0.05,
            dual_decay: 0.98,
            power_floor: POWER_FLOOR,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            armijo_initial_step: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let tols = [self.tol_fixed_point, self.tol_outer, self.tol_inner];
        if tols.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if self.max_outer == 0 || self.max_inner == 0 || self.max_fp_iter == 0 {
            return Err(Error::InvalidConfig("iteration caps must be at least 1".into()));
        }
        if !(self.power_floor > 0.0 && self.power_floor < 1.0) {
            return Err(Error::InvalidConfig("power_floor must lie in (0, 1)".into()));
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) || !(self.armijo_initial_step > 0.0) {
            return Err(Error::InvalidConfig("invalid line search parameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub p_final: PowerVector,
    /// `(iteration, objective)`; iteration 0 is the starting point.
    pub objective_trace: Vec<(usize, f64)>,
    /// Power iterate matching each trace entry.
    pub trajectory: Vec<Vec<f64>>,
    pub converged: bool,
    pub inner_iterations_total: usize,
}

impl SolveResult {
    pub fn final_objective(&self) -> f64 {
        self.objective_trace.last().expect("trace is never empty").1
    }

    /// `iteration,wsr_nats` rows, header included.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iteration,wsr_nats\n");
        for (it, v) in &self.objective_trace {
            s.push_str(&format!("{it},{v}\n"));
        }
        s
    }
}

fn clamp(p: DVector<f64>, floor: f64, p_max: f64) -> DVector<f64> {
    p.map(|x| x.clamp(floor, p_max))
}

/// `γ_i = G_ii p_i / I_i(p)`.
pub fn sinr(inst: &NetworkInstance, model: &dyn InterferenceFunction, p: &DVector<f64>) -> Result<DVector<f64>> {
    let interference = model.eval(inst, p)?;
    Ok(DVector::from_fn(inst.k(), |i, _| inst.gains[(i, i)] * p[i] / interference[i]))
}

/// `Σ w_i ln(1 + γ_i)` in nats, with the instance's weights.
pub fn wsr(inst: &NetworkInstance, model: &dyn InterferenceFunction, p: &DVector<f64>) -> Result<f64> {
    let gamma = sinr(inst, model, p)?;
    Ok(inst.weights.iter().zip(gamma.iter()).map(|(w, g)| w * g.ln_1p()).sum())
}

/// High-SINR approximation `Σ w_i ln γ_i`.
pub fn wsr_log_approx(
    inst: &NetworkInstance,
    model: &dyn InterferenceFunction,
    p: &DVector<f64>,
) -> Result<f64> {
    let gamma = sinr(inst, model, p)?;
    Ok(inst.weights.iter().zip(gamma.iter()).map(|(w, g)| w * g.ln()).sum())
}

/// `Σ_j w_j J[j][i] / I_j(p)` for every `i`: the gradient of
/// `Σ_j w_j ln I_j` at `p`.
pub fn log_interference_gradient(
    inst: &NetworkInstance,
    model: &dyn InterferenceModel,
    w: &DVector<f64>,
    p: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dim(inst, p)?;
    if w.len() != inst.k() {
        return Err(Error::DimensionMismatch {
            expected: inst.k(),
            got: w.len(),
        });
    }
    let interference = model.eval(inst, p)?;
    let jac = model.jacobian(inst, p)?;
    let scale = w.component_div(&interference);
    Ok(jac.tr_mul(&scale))
}

pub fn tilde_interference(
    inst: &NetworkInstance,
    model: &dyn InterferenceModel,
    w: &DVector<f64>,
    p: &DVector<f64>,
) -> Result<DVector<f64>> {
    let denom = log_interference_gradient(inst, model, w, p)?;
    if let Some(link) = denom.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::ZeroDenominator { link });
    }
    Ok(w.component_div(&denom))
}

/// The capped derived map `p ↦ min{Ĩ(p), p_max}` as an interference function
/// in its own right, so the standard-function checks apply to it.
pub struct DerivedMap<'a> {
    pub model: &'a dyn InterferenceModel,
    pub weights: DVector<f64>,
    name: String,
}

impl<'a> DerivedMap<'a> {
    pub fn new(model: &'a dyn InterferenceModel, weights: DVector<f64>) -> Self {
        let name = format!("derived-{}", model.name());
        Self { model, weights, name }
    }
}

impl InterferenceFunction for DerivedMap<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn eval(&self, inst: &NetworkInstance, p: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(tilde_interference(inst, self.model, &self.weights, p)?.map(|x| x.min(inst.p_max)))
    }
}

/// One iteration of the closed-form fixed-point rule, floored at `floor`.
pub fn special_case_step(
    inst: &NetworkInstance,
    model: &dyn InterferenceModel,
    w: &DVector<f64>,
    p: &DVector<f64>,
    floor: f64,
) -> Result<DVector<f64>> {
    Ok(clamp(tilde_interference(inst, model, w, p)?, floor, inst.p_max))
}

fn require_theorem_hypotheses(model: &dyn InterferenceModel) -> Result<()> {
    let flags = model.flags();
    if !flags.claims_log_concave {
        return Err(Error::HypothesisNotMet("model is not log-concave"));
    }
    if !flags.claims_scale_invariant_gradient {
        return Err(Error::HypothesisNotMet("model gradient is not scale invariant"));
    }
    Ok(())
}

/// Fixed-point solver for the log-SINR problem, started at full power.
pub fn solve_special_case(
    inst: &NetworkInstance,
    model: &dyn InterferenceModel,
    w: &DVector<f64>,
    config: &SolverConfig,
) -> Result<SolveResult> {
    let p0 = DVector::from_element(inst.k(), inst.p_max);
    solve_special_case_from(inst, model, w, config, &p0)
}

pub fn solve_special_case_from(
    inst: &NetworkInstance,
    model: &dyn InterferenceModel,
    w: &DVector<f64>,
    config: &SolverConfig,
    p0: &DVector<f64>,
) -> Result<SolveResult> {
    config.validate()?;
    require_theorem_hypotheses(model)?;
    check_dim(inst, p0)?;
    check_positive(p0)?;
    let objective = |p: &DVector<f64>| -> Result<f64> {
        let gamma = sinr(inst, model, p)?;
        Ok(w.iter().zip(gamma.iter()).map(|(w, g)| w * g.ln()).sum())
    };

    let mut p = p0.clone();
    let mut trace = vec![(0, objective(&p)?)];
    let mut trajectory = vec![p.as_slice().to_vec()];
    let mut converged = false;
    for it in 1..=config.max_fp_iter {
        let next = special_case_step(inst, model, w, &p, config.power_floor)?;
        let step = (&next - &p).amax();
        p = next;
        trace.push((it, objective(&p)?));
        trajectory.push(p.as_slice().to_vec());
        if step < config.tol_fixed_point {
            converged = true;
            break;
        }
    }
    Ok(SolveResult {
        p_final: PowerVector::new(p, inst.p_max)?,
        objective_trace: trace,
        trajectory,
        converged,
        inner_iterations_total: 0,
    })
}

/// `r_i = w_i / p_i − Σ_j w_j J[j][i] / I_j(p)`; zero at interior fixed
/// points of the closed-form rule.
pub fn stationarity_residual(
    inst: &NetworkInstance,
    model: &dyn InterferenceModel,
    w: &DVector<f64>,
    p: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_positive(p)?;
    let grad = log_interference_gradient(inst, model, w, p)?;
    Ok(w.component_div(p) - grad)
}

/// The stationary point of the Lagrangian in `p` before clamping:
/// `w_i / (c_i + λ_i) − I_i(q) / G_ii` with `c` the linearized
/// log-interference gradient at `p_lin`.
///
/// Links whose bracket `c_i + λ_i` is not positive have a Lagrangian that
/// increases in `p_i` everywhere; they get `+∞`, so clamping yields `p_max`.
pub fn pda_p_update_unclamped(
    inst: &NetworkInstance,
    model: &dyn InterferenceModel,
    w: &DVector<f64>,
    p_lin: &DVector<f64>,
    q: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<DVector<f64>> {
    let c = log_interference_gradient(inst, model, w, p_lin)?;
    pda_p_from_gradient(inst, model, w, &c, q, lambda)
}

fn pda_p_from_gradient(
    inst: &NetworkInstance,
    model: &dyn InterferenceModel,
    w: &DVector<f64>,
    c: &DVector<f64>,
    q: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<DVector<f64>> {
    let iq = model.eval(inst, q)?;
    let mut out = DVector::zeros(inst.k());
    for i in 0..inst.k() {
        let bracket = c[i] + lambda[i];
        out[i] = if bracket > 0.0 {
            w[i] / bracket - iq[i] / inst.gains[(i, i)]
        } else {
            f64::INFINITY
        };
    }
    Ok(out)
}

/// Primal update of the inner primal-dual loop, clamped to `[ε, p_max]`.
#[allow(clippy::too_many_arguments)]
pub fn pda_p_update(
    inst: &NetworkInstance,
    model: &dyn InterferenceModel,
    w: &DVector<f64>,
    p_lin: &DVector<f64>,
    q: &DVector<f64>,
    lambda: &DVector<f64>,
    floor: f64,
) -> Result<DVector<f64>> {
    let raw = pda_p_update_unclamped(inst, model, w, p_lin, q, lambda)?;
    Ok(clamp(raw, floor, inst.p_max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QUpdate {
    pub q: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `Σ_i w_i ln(G_ii p_i + I_i(q)) + λᵀq`.
fn q_objective(
    inst: &NetworkInstance,
    model: &dyn InterferenceModel,
    w: &DVector<f64>,
    p: &DVector<f64>,
    lambda: &DVector<f64>,
    q: &DVector<f64>,
) -> Result<(f64, DVector<f64>)> {
    let iq = model.eval(inst, q)?;
    let signal_plus = DVector::from_fn(inst.k(), |i, _| inst.gains[(i, i)] * p[i] + iq[i]);
    let value = w
        .iter()
        .zip(signal_plus.iter())
        .map(|(w, s)| w * s.ln())
        .sum::<f64>()
        + lambda.dot(q);
    Ok((value, signal_plus))
}

/// Maximizes `Σ_i w_i ln(G_ii p_i + I_i(q)) + λᵀq` over `q ∈ [ε, p_max]^K`
/// by projected gradient ascent with Armijo backtracking, warm-started at
/// `q0`.
#[allow(clippy::too_many_arguments)]
pub fn pda_q_update_exact(
    inst: &NetworkInstance,
    model: &dyn InterferenceModel,
    w: &DVector<f64>,
    p: &DVector<f64>,
    lambda: &DVector<f64>,
    q0: &DVector<f64>,
    config: &SolverConfig,
) -> Result<QUpdate> {
    let (lo, hi) = (config.power_floor, inst.p_max);
    let mut q = clamp(q0.clone(), lo, hi);
    let (mut value, mut signal_plus) = q_objective(inst, model, w, p, lambda, &q)?;
    for it in 1..=config.max_inner {
        let jac = model.jacobian(inst, &q)?;
        let grad = jac.tr_mul(&w.component_div(&signal_plus)) + lambda;
        let projected_step = clamp(&q + &grad, lo, hi) - &q;
        if projected_step.amax() < config.tol_inner {
            return Ok(QUpdate {
                q,
                iterations: it - 1,
                converged: true,
            });
        }
        let mut t = config.armijo_initial_step;
        let mut accepted = false;
        for _ in 0..80 {
            let cand = clamp(&q + &grad * t, lo, hi);
            let (cand_value, cand_signal) = q_objective(inst, model, w, p, lambda, &cand)?;
            let predicted = grad.dot(&(&cand - &q));
            if cand_value >= value + config.armijo_c * predicted {
                q = cand;
                value = cand_value;
                signal_plus = cand_signal;
                accepted = true;
                break;
            }
            t *= config.armijo_shrink;
        }
        if !accepted {
            // No representable ascent step left.
            return Ok(QUpdate {
                q,
                iterations: it,
                converged: false,
            });
        }
    }
    Ok(QUpdate {
        q,
        iterations: config.max_inner,
        converged: false,
    })
}

/// `λ + α (p − q)`.
pub fn pda_lambda_update(lambda: &DVector<f64>, p: &DVector<f64>, q: &DVector<f64>, alpha: f64) -> DVector<f64> {
    lambda + (p - q) * alpha
}

/// Concave minorant of the full objective at the linearization point, up to
/// a constant: `Σ w_i ln(G_ii x_i + I_i(x)) − cᵀx`.
fn dca_surrogate(
    inst: &NetworkInstance,
    model: &dyn InterferenceModel,
    w: &DVector<f64>,
    c: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<f64> {
    let ix = model.eval(inst, x)?;
    let f: f64 = (0..inst.k())
        .map(|i| w[i] * (inst.gains[(i, i)] * x[i] + ix[i]).ln())
        .sum();
    Ok(f - c.dot(x))
}

/// Outer DCA over linearization points, each convex subproblem solved by the
/// primal-dual loop (closed-form `p`, exact `q`, dual ascent on `λ`).
///
/// The next outer iterate is whichever of the inner loop's final `p` and `q`
/// scores higher on the minorant, and is only accepted if it does not
/// decrease it; otherwise the solver stops at the current point.
pub fn solve_pda_exact(
    inst: &NetworkInstance,
    model: &dyn InterferenceModel,
    w: &DVector<f64>,
    config: &SolverConfig,
) -> Result<SolveResult> {
    config.validate()?;
    require_theorem_hypotheses(model)?;
    let k = inst.k();
    let objective = |p: &DVector<f64>| -> Result<f64> {
        let gamma = sinr(inst, model, p)?;
        Ok(w.iter().zip(gamma.iter()).map(|(w, g)| w * g.ln_1p()).sum())
    };

    let mut p = DVector::from_element(k, inst.p_max);
    let mut current = objective(&p)?;
    let mut trace = vec![(0, current)];
    let mut trajectory = vec![p.as_slice().to_vec()];
    let mut converged = false;
    let mut inner_total = 0;

    for outer in 1..=config.max_outer {
        let c = log_interference_gradient(inst, model, w, &p)?;
        let mut q = p.clone();
        let mut lambda = DVector::zeros(k);
        let mut alpha = config.dual_step;
        let mut p_inner = p.clone();
        for _ in 0..config.max_inner {
            inner_total += 1;
            p_inner = clamp(
                pda_p_from_gradient(inst, model, w, &c, &q, &lambda)?,
                config.power_floor,
                inst.p_max,
            );
            q = pda_q_update_exact(inst, model, w, &p_inner, &lambda, &q, config)?.q;
            lambda = pda_lambda_update(&lambda, &p_inner, &q, alpha);
            alpha *= config.dual_decay;
            if (&p_inner - &q).amax() < config.tol_inner {
                break;
            }
        }

        let base = dca_surrogate(inst, model, w, &c, &p)?;
        let s_p = dca_surrogate(inst, model, w, &c, &p_inner)?;
        let s_q = dca_surrogate(inst, model, w, &c, &q)?;
        let (best, best_s) = if s_p >= s_q { (p_inner, s_p) } else { (q, s_q) };
        if best_s >= base {
            p = best;
        }
        let next = objective(&p)?;
        let delta = (next - current).abs();
        current = next;
        trace.push((outer, current));
        trajectory.push(p.as_slice().to_vec());
        if delta < config.tol_outer {
            converged = true;
            break;
        }
    }

    Ok(SolveResult {
        p_final: PowerVector::new(p, inst.p_max)?,
        objective_trace: trace,
        trajectory,
        converged,
        inner_iterations_total: inner_total,
    })
}

/// Exhaustive search of the full objective over a uniform grid on
/// `[ε, p_max]²`. Reference optimum for two-link instances.
pub fn grid_search_k2(
    inst: &NetworkInstance,
    model: &dyn InterferenceFunction,
    points: usize,
    floor: f64,
) -> Result<(f64, DVector<f64>)> {
    if inst.k() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: inst.k(),
        });
    }
    let axis: Vec<f64> = (0..points)
        .map(|n| floor + (inst.p_max - floor) * n as f64 / (points - 1) as f64)
        .collect();
    let mut best = (f64::NEG_INFINITY, DVector::zeros(2));
    for &a in &axis {
        for &b in &axis {
            let p = DVector::from_column_slice(&[a, b]);
            let v = wsr(inst, model, &p)?;
            if v > best.0 {
                best = (v, p);
            }
        }
    }
    Ok(best)
}

/// Column-stacked trajectory, mostly for inspection in tests.
pub fn trajectory_matrix(result: &SolveResult) -> DMatrix<f64> {
    let k = result.p_final.len();
    DMatrix::from_fn(k, result.trajectory.len(), |i, t| result.trajectory[t][i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_model::synthetic_instance;
    use crate::interference::reference_maps::ExpFirst;
    use crate::interference::{random_power, Affine, Rayleigh};
    use crate::rng;
    use approx::assert_relative_eq;

    fn desk() -> NetworkInstance {
        NetworkInstance::from_rows(2, &[1.0, 0.5, 0.2, 1.0], 0.1).unwrap()
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn ones(k: usize) -> DVector<f64> {
        DVector::from_element(k, 1.0)
    }

    #[test]
    fn sinr_and_wsr_desk() {
        let inst = desk();
        let p = ones(2);
        let g = sinr(&inst, &Affine, &p).unwrap();
        assert_relative_eq!(g[0], 1.0 / 0.6, epsilon = 1e-14);
        assert_relative_eq!(g[1], 1.0 / 0.3, epsilon = 1e-14);
        let r = wsr(&inst, &Affine, &p).unwrap();
        assert_relative_eq!(r, (1.0 + 1.0 / 0.6f64).ln() + (1.0 + 1.0 / 0.3f64).ln(), epsilon = 1e-14);
        assert!((r - 2.4471).abs() < 1e-4);
        let la = wsr_log_approx(&inst, &Affine, &p).unwrap();
        assert!((la - 1.7148).abs() < 1e-4);

        let doubled = inst.clone().with_weights(v(&[3.0, 3.0]));
        assert_relative_eq!(wsr(&doubled, &Affine, &p).unwrap(), 3.0 * r, epsilon = 1e-13);
    }

    #[test]
    fn single_link_rate() {
        let inst = NetworkInstance::from_rows(1, &[1.0], 1.0).unwrap();
        assert_relative_eq!(wsr(&inst, &Affine, &ones(1)).unwrap(), 2f64.ln());
        let g = sinr(&inst, &Affine, &v(&[1e-12])).unwrap();
        assert!(g[0] < 1e-11);
    }

    #[test]
    fn log_approx_zero_at_unit_sinr() {
        // γ_i = G_ii p_i / σ = 1 without interference.
        let inst = NetworkInstance::from_rows(2, &[0.5, 0.0, 0.0, 0.25], 0.5).unwrap();
        let p = v(&[1.0, 2.0]);
        assert_relative_eq!(wsr_log_approx(&inst, &Affine, &p).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn tilde_interference_desk() {
        let inst = desk();
        let t = tilde_interference(&inst, &Affine, &ones(2), &ones(2)).unwrap();
        assert_relative_eq!(t[0], 0.3 / 0.2, epsilon = 1e-14);
        assert_relative_eq!(t[1], 0.6 / 0.5, epsilon = 1e-14);
        let t2 = tilde_interference(&inst, &Affine, &v(&[2.0, 2.0]), &ones(2)).unwrap();
        assert_relative_eq!(t, t2, epsilon = 1e-15);
    }

    #[test]
    fn tilde_interference_strictly_subhomogeneous() {
        let mut r = rng::stream(10, 0);
        for s in 0..100 {
            let inst = synthetic_instance(4, s, &mut r);
            let p = random_power(4, 1.0, &mut r);
            let alpha = 1.0 + 9.0 * rand::Rng::gen::<f64>(&mut r) + 1e-6;
            for model in [&Affine as &dyn InterferenceModel, &Rayleigh] {
                let a = tilde_interference(&inst, model, &inst.weights, &p).unwrap() * alpha;
                let b = tilde_interference(&inst, model, &inst.weights, &(&p * alpha)).unwrap();
                assert!(a.iter().zip(b.iter()).all(|(x, y)| x > y));
            }
        }
    }

    #[test]
    fn desk_trajectory_from_half_power() {
        let inst = desk();
        let cfg = SolverConfig::default();
        let res = solve_special_case_from(&inst, &Affine, &ones(2), &cfg, &v(&[0.5, 0.5])).unwrap();
        assert!(res.converged);
        let expected = [[0.5, 0.5], [1.0, 0.7], [1.0, 0.9], [1.0, 1.0]];
        for (got, want) in res.trajectory.iter().zip(expected.iter()) {
            assert_relative_eq!(got[0], want[0], max_relative = 4.0 * f64::EPSILON);
            assert_relative_eq!(got[1], want[1], max_relative = 4.0 * f64::EPSILON);
        }
        assert_eq!(res.p_final.as_slice(), &[1.0, 1.0]);
        let full = solve_special_case(&inst, &Affine, &ones(2), &cfg).unwrap();
        assert_eq!(full.p_final.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn special_case_single_link_is_unbounded() {
        let inst = NetworkInstance::from_rows(1, &[3.0], 1.0).unwrap();
        let err = solve_special_case(&inst, &Affine, &ones(1), &SolverConfig::default());
        assert!(matches!(err, Err(Error::ZeroDenominator { link: 0 })));
    }

    #[test]
    fn special_case_requires_hypotheses() {
        let inst = desk();
        let err = solve_special_case(&inst, &ExpFirst, &ones(2), &SolverConfig::default());
        assert!(matches!(err, Err(Error::HypothesisNotMet(_))));
    }

    #[test]
    fn stationarity_desk() {
        let inst = desk();
        let r = stationarity_residual(&inst, &Affine, &ones(2), &ones(2)).unwrap();
        assert_relative_eq!(r[0], 1.0 - 0.2 / 0.3, epsilon = 1e-14);
        let r3 = stationarity_residual(&inst, &Affine, &v(&[3.0, 3.0]), &ones(2)).unwrap();
        assert_relative_eq!(r3, r * 3.0, epsilon = 1e-14);
    }

    #[test]
    fn stationarity_vanishes_at_interior_fixed_point() {
        let mut r = rng::stream(12, 0);
        let cfg = SolverConfig {
            tol_fixed_point: 1e-13,
            max_fp_iter: 100_000,
            ..SolverConfig::default()
        };
        let mut interior = 0;
        for s in 0..60 {
            let inst = synthetic_instance(3, s, &mut r);
            let res = solve_special_case(&inst, &Affine, &inst.weights, &cfg).unwrap();
            assert!(res.converged);
            let p = res.p_final.to_dvector();
            let t = tilde_interference(&inst, &Affine, &inst.weights, &p).unwrap();
            let r = stationarity_residual(&inst, &Affine, &inst.weights, &p).unwrap();
            for i in (0..3).filter(|&i| p[i] < inst.p_max) {
                interior += 1;
                assert!((t[i] - p[i]).abs() < 1e-10);
                assert!(r[i].abs() < 1e-6, "{r}");
            }
            // Capped links sit where the unconstrained rule wants more power.
            for i in (0..3).filter(|&i| p[i] >= inst.p_max) {
                assert!(t[i] >= inst.p_max && r[i] >= -1e-9);
            }
        }
        assert!(interior > 0);
    }

    #[test]
    fn pda_p_update_desk() {
        let inst = desk();
        let w = ones(2);
        let raw = pda_p_update_unclamped(&inst, &Affine, &w, &ones(2), &ones(2), &DVector::zeros(2)).unwrap();
        assert_relative_eq!(raw[0], 1.5 - 0.6, epsilon = 1e-14);
        assert_relative_eq!(raw[1], 1.2 - 0.3, epsilon = 1e-14);

        let huge = DVector::from_element(2, 1e12);
        let p = pda_p_update(&inst, &Affine, &w, &ones(2), &ones(2), &huge, 1e-9).unwrap();
        assert_eq!(p.as_slice(), &[1e-9, 1e-9]);

        let very_negative = DVector::from_element(2, -1e12);
        let p = pda_p_update(&inst, &Affine, &w, &ones(2), &ones(2), &very_negative, 1e-9).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn pda_p_update_without_q_term_is_fixed_point_step() {
        // With λ = 0 the bracket equals Ĩ's denominator; removing the
        // subtracted term leaves w_i / c_i.
        let mut r = rng::stream(13, 0);
        for s in 0..30 {
            let inst = synthetic_instance(4, s, &mut r);
            let p = random_power(4, 1.0, &mut r);
            let q = random_power(4, 1.0, &mut r);
            let raw = pda_p_update_unclamped(&inst, &Affine, &inst.weights, &p, &q, &DVector::zeros(4)).unwrap();
            let iq = Affine.eval(&inst, &q).unwrap();
            let restored = DVector::from_fn(4, |i, _| raw[i] + iq[i] / inst.gains[(i, i)]);
            let t = tilde_interference(&inst, &Affine, &inst.weights, &p).unwrap();
            assert_relative_eq!(restored.map(|x| x.min(1.0)), t.map(|x| x.min(1.0)), max_relative = 1e-12);
        }
    }

    #[test]
    fn q_update_limits() {
        let inst = desk();
        let w = ones(2);
        let cfg = SolverConfig::default();
        let p = v(&[0.5, 0.5]);
        let big = DVector::from_element(2, 100.0);
        let q = pda_q_update_exact(&inst, &Affine, &w, &p, &big, &v(&[0.3, 0.3]), &cfg).unwrap();
        assert!(q.converged);
        assert_eq!(q.q.as_slice(), &[1.0, 1.0]);
        let neg = DVector::from_element(2, -1e9);
        let q = pda_q_update_exact(&inst, &Affine, &w, &p, &neg, &v(&[0.3, 0.3]), &cfg).unwrap();
        assert_eq!(q.q.as_slice(), &[1e-9, 1e-9]);
    }

    #[test]
    fn q_update_single_link_follows_lambda_sign() {
        let inst = NetworkInstance::from_rows(1, &[2.0], 1.0).unwrap();
        let cfg = SolverConfig::default();
        let p = v(&[0.5]);
        let up = pda_q_update_exact(&inst, &Affine, &ones(1), &p, &v(&[0.1]), &v(&[0.5]), &cfg).unwrap();
        assert!(up.converged);
        assert_relative_eq!(up.q[0], 1.0, epsilon = 1e-12);
        let down = pda_q_update_exact(&inst, &Affine, &ones(1), &p, &v(&[-0.1]), &v(&[0.5]), &cfg).unwrap();
        assert_eq!(down.q[0], 1e-9);
    }

    #[test]
    fn q_update_satisfies_box_kkt() {
        let mut r = rng::stream(14, 0);
        // Rayleigh instances near the floor are badly conditioned for plain
        // projected gradient; give the ascent room to finish.
        let cfg = SolverConfig {
            max_inner: 20_000,
            ..SolverConfig::default()
        };
        for s in 0..30 {
            let inst = synthetic_instance(3, s, &mut r);
            let p = random_power(3, 1.0, &mut r);
            let lambda = DVector::from_fn(3, |_, _| rand::Rng::gen_range(&mut r, -2.0..2.0));
            for model in [&Affine as &dyn InterferenceModel, &Rayleigh] {
                let res = pda_q_update_exact(&inst, model, &inst.weights, &p, &lambda, &ones(3), &cfg).unwrap();
                assert!(res.converged);
                let q = &res.q;
                let iq = model.eval(&inst, q).unwrap();
                let sp = DVector::from_fn(3, |i, _| inst.gains[(i, i)] * p[i] + iq[i]);
                let grad = model.jacobian(&inst, q).unwrap().tr_mul(&inst.weights.component_div(&sp)) + &lambda;
                let pg = clamp(q + &grad, 1e-9, 1.0) - q;
                assert!(pg.amax() < 1e-6);
            }
        }
    }

    #[test]
    fn lambda_update() {
        let l = pda_lambda_update(&DVector::zeros(2), &v(&[0.9, 0.9]), &ones(2), 0.1);
        assert_relative_eq!(l[0], -0.01, epsilon = 1e-15);
        assert_relative_eq!(l[1], -0.01, epsilon = 1e-15);
        let base = v(&[0.3, -0.2]);
        assert_eq!(pda_lambda_update(&base, &ones(2), &ones(2), 0.7), base);
        assert_eq!(pda_lambda_update(&base, &v(&[0.1, 0.4]), &ones(2), 0.0), base);
    }

    #[test]
    fn pda_single_link_uses_full_power() {
        // K = 1 has no interferer: the linearized term vanishes and the rate
        // is increasing in p.
        let inst = NetworkInstance::from_rows(1, &[5.0], 1.0).unwrap();
        let res = solve_pda_exact(&inst, &Affine, &ones(1), &SolverConfig::default()).unwrap();
        assert!((res.p_final.as_slice()[0] - 1.0).abs() < 1e-6);
        assert!(res.converged);

        // A single useful link next to a negligible neighbour saturates.
        let inst = NetworkInstance::from_rows(2, &[5.0, 1e-6, 1e-6, 5.0], 1.0).unwrap();
        let res = solve_pda_exact(&inst, &Affine, &ones(2), &SolverConfig::default()).unwrap();
        assert!(res.p_final.as_slice().iter().all(|&x| (x - 1.0).abs() < 1e-6));
    }

    #[test]
    fn pda_trace_is_monotone() {
        let mut r = rng::stream(15, 0);
        for s in 0..20 {
            let inst = synthetic_instance(3, s, &mut r);
            for model in [&Affine as &dyn InterferenceModel, &Rayleigh] {
                let res = solve_pda_exact(&inst, model, &inst.weights, &SolverConfig::default()).unwrap();
                for pair in res.objective_trace.windows(2) {
                    assert!(pair[1].1 >= pair[0].1 - 1e-9, "{:?}", res.objective_trace);
                }
            }
        }
    }

    #[test]
    fn grid_search_finds_the_obvious_optimum() {
        let inst = NetworkInstance::from_rows(2, &[5.0, 1e-6, 1e-6, 5.0], 1.0).unwrap();
        let (best, p) = grid_search_k2(&inst, &Affine, 50, 1e-9).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 1.0]);
        assert_relative_eq!(best, wsr(&inst, &Affine, &ones(2)).unwrap());
    }

    #[test]
    fn solve_result_csv() {
        let res = solve_special_case(&desk(), &Affine, &ones(2), &SolverConfig::default()).unwrap();
        let csv = res.trace_csv();
        assert!(csv.starts_with("iteration,wsr_nats\n0,"));
        assert_eq!(csv.lines().count(), res.objective_trace.len() + 1);
        let json = serde_json::to_string(&res).unwrap();
        let back: SolveResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back, res);
        assert_eq!(trajectory_matrix(&res).ncols(), res.trajectory.len());
    }
}
