//! Interference functions, randomized checks of the standard-function axioms
//! and the classic fixed-point power control iteration.
//!
//! A model maps a power vector `p` to the per-link interference `I(p)` seen
//! by each receiver. Jacobians use the orientation `J[(j, i)] = ∂I_j/∂p_i`,
//! so sums over interfered receivers `j` for a fixed transmitter `i` are
//! column reductions.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel_model::NetworkInstance;
use crate::error::{Error, Result};
use crate::rng;

/// A validated power vector, `0 < p_i ≤ p_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PowerVector(Vec<f64>);

impl PowerVector {
    pub fn new(p: DVector<f64>, p_max: f64) -> Result<Self> {
        check_positive(&p)?;
        if let Some(link) = p.iter().position(|&x| x > p_max) {
            return Err(Error::InvalidConfig(format!(
                "power {} of link {link} exceeds p_max {p_max}",
                p[link]
            )));
        }
        Ok(Self(p.as_slice().to_vec()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Structural properties a model claims about itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFlags {
    pub claims_log_concave: bool,
    pub claims_scale_invariant_gradient: bool,
}

/// A map `p ↦ I(p)`.
pub trait InterferenceFunction: Sync {
    fn name(&self) -> &str;

    fn eval(&self, inst: &NetworkInstance, p: &DVector<f64>) -> Result<DVector<f64>>;
}

/// An interference function with an analytic Jacobian.
pub trait InterferenceModel: InterferenceFunction {
    /// `J[(j, i)] = ∂I_j/∂p_i`.
    fn jacobian(&self, inst: &NetworkInstance, p: &DVector<f64>) -> Result<DMatrix<f64>>;

    fn flags(&self) -> ModelFlags;
}

pub(crate) fn check_dim(inst: &NetworkInstance, p: &DVector<f64>) -> Result<()> {
    if p.len() != inst.k() {
        return Err(Error::DimensionMismatch {
            expected: inst.k(),
            got: p.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_positive(p: &DVector<f64>) -> Result<()> {
    match p.iter().position(|&x| !(x > 0.0)) {
        Some(link) => Err(Error::NonPositivePower {
            link,
            value: p[link],
        }),
        None => Ok(()),
    }
}

/// Interference treated as noise: `I_i(p) = Σ_{j≠i} G_ij p_j + σ`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Affine;

impl InterferenceFunction for Affine {
    fn name(&self) -> &str {
        "affine"
    }

    fn eval(&self, inst: &NetworkInstance, p: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(inst, p)?;
        Ok(affine_eval(inst, p))
    }
}

impl InterferenceModel for Affine {
    fn jacobian(&self, inst: &NetworkInstance, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim(inst, p)?;
        Ok(affine_jacobian(inst))
    }

    fn flags(&self) -> ModelFlags {
        ModelFlags {
            claims_log_concave: true,
            claims_scale_invariant_gradient: true,
        }
    }
}

/// Unchecked affine evaluation; `p.len()` must equal `K`.
pub fn affine_eval(inst: &NetworkInstance, p: &DVector<f64>) -> DVector<f64> {
    let g = &inst.gains;
    let k = inst.k();
    DVector::from_fn(k, |i, _| {
        let mut acc = inst.noise;
        for j in (0..k).filter(|&j| j != i) {
            acc += g[(i, j)] * p[j];
        }
        acc
    })
}

/// The Jacobian is `G` with its diagonal removed, independent of `p`.
pub fn affine_jacobian(inst: &NetworkInstance) -> DMatrix<f64> {
    let mut j = inst.gains.clone();
    j.fill_diagonal(0.0);
    j
}

/// `I_i(p) = σ + Σ_{j≠i} p_i ln(1 + G_ij p_j / p_i)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Rayleigh;

impl InterferenceFunction for Rayleigh {
    fn name(&self) -> &str {
        "rayleigh"
    }

    fn eval(&self, inst: &NetworkInstance, p: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(inst, p)?;
        check_positive(p)?;
        let g = &inst.gains;
        let k = inst.k();
        Ok(DVector::from_fn(k, |i, _| {
            let mut acc = inst.noise;
            for j in (0..k).filter(|&j| j != i) {
                acc += p[i] * (g[(i, j)] * p[j] / p[i]).ln_1p();
            }
            acc
        }))
    }
}

impl InterferenceModel for Rayleigh {
    fn jacobian(&self, inst: &NetworkInstance, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim(inst, p)?;
        check_positive(p)?;
        let g = &inst.gains;
        let k = inst.k();
        let mut jac = DMatrix::zeros(k, k);
        for row in 0..k {
            let mut diag = 0.0;
            for j in (0..k).filter(|&j| j != row) {
                let x = g[(row, j)] * p[j];
                let denom = x + p[row];
                diag += (x / p[row]).ln_1p() - x / denom;
                jac[(row, j)] = g[(row, j)] * p[row] / denom;
            }
            jac[(row, row)] = diag;
        }
        Ok(jac)
    }

    fn flags(&self) -> ModelFlags {
        ModelFlags {
            claims_log_concave: true,
            claims_scale_invariant_gradient: true,
        }
    }
}

/// Functions that are deliberately not (or trivially) standard, for
/// exercising the checkers.
pub mod reference_maps {
    use super::*;

    /// `I(p) = p`: positive and monotone but only weakly scalable.
    #[derive(Debug, Clone, Copy)]
    pub struct Identity;

    impl InterferenceFunction for Identity {
        fn name(&self) -> &str {
            "identity"
        }

        fn eval(&self, inst: &NetworkInstance, p: &DVector<f64>) -> Result<DVector<f64>> {
            check_dim(inst, p)?;
            Ok(p.clone())
        }
    }

    /// `I(p) = c`.
    #[derive(Debug, Clone)]
    pub struct Constant(pub DVector<f64>);

    impl InterferenceFunction for Constant {
        fn name(&self) -> &str {
            "constant"
        }

        fn eval(&self, inst: &NetworkInstance, p: &DVector<f64>) -> Result<DVector<f64>> {
            check_dim(inst, p)?;
            Ok(self.0.clone())
        }
    }

    /// `I_j(p) = exp(p_0) + σ` for every `j`. Log-convex in `p_0`.
    #[derive(Debug, Clone, Copy)]
    pub struct ExpFirst;

    impl InterferenceFunction for ExpFirst {
        fn name(&self) -> &str {
            "exp-first"
        }

        fn eval(&self, inst: &NetworkInstance, p: &DVector<f64>) -> Result<DVector<f64>> {
            check_dim(inst, p)?;
            Ok(DVector::from_element(inst.k(), p[0].exp() + inst.noise))
        }
    }

    impl InterferenceModel for ExpFirst {
        fn jacobian(&self, inst: &NetworkInstance, p: &DVector<f64>) -> Result<DMatrix<f64>> {
            check_dim(inst, p)?;
            let mut j = DMatrix::zeros(inst.k(), inst.k());
            j.column_mut(0).fill(p[0].exp());
            Ok(j)
        }

        fn flags(&self) -> ModelFlags {
            ModelFlags {
                claims_log_concave: false,
                claims_scale_invariant_gradient: false,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axiom {
    Positivity,
    Scalability,
    Monotonicity,
    Feasibility,
    LogConcavityRatio,
}

/// Inputs reproducing a failed trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub instance_seed: u64,
    pub trial_seed: u64,
    pub trial: usize,
    pub p: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_other: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Link (and for the ratio test, partial-derivative column) that failed.
    pub link: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomOutcome {
    pub axiom: Axiom,
    pub trials: usize,
    pub failures: usize,
    pub counterexample: Option<Counterexample>,
}

impl AxiomOutcome {
    fn new(axiom: Axiom) -> Self {
        Self {
            axiom,
            trials: 0,
            failures: 0,
            counterexample: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    fn record(&mut self, ok: bool, cex: impl FnOnce() -> Counterexample) {
        self.trials += 1;
        if !ok {
            self.failures += 1;
            if self.counterexample.is_none() {
                self.counterexample = Some(cex());
            }
        }
    }

    fn merge(&mut self, other: &AxiomOutcome) {
        debug_assert_eq!(self.axiom, other.axiom);
        self.trials += other.trials;
        self.failures += other.failures;
        if self.counterexample.is_none() {
            self.counterexample = other.counterexample.clone();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub model: String,
    pub tolerance: f64,
    pub strict_slack: f64,
    pub outcomes: Vec<AxiomOutcome>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(AxiomOutcome::passed)
    }

    pub fn outcome(&self, axiom: Axiom) -> Option<&AxiomOutcome> {
        self.outcomes.iter().find(|o| o.axiom == axiom)
    }

    /// Accumulates another report on the same model and axiom set.
    pub fn merge(&mut self, other: &AxiomReport) {
        for o in &other.outcomes {
            match self.outcomes.iter_mut().find(|m| m.axiom == o.axiom) {
                Some(m) => m.merge(o),
                None => self.outcomes.push(o.clone()),
            }
        }
    }
}

/// Tolerances for the randomized checks. Non-strict inequalities get `tol`,
/// the strict scalability inequality must hold with margin `strict_slack`.
/// Both are relative to `max(1, |rhs|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckTolerances {
    pub tol: f64,
    pub strict_slack: f64,
    pub feasibility_max_iter: usize,
}

impl Default for CheckTolerances {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            strict_slack: 1e-12,
            feasibility_max_iter: 10_000,
        }
    }
}

fn scaled(tol: f64, reference: f64) -> f64 {
    tol * reference.abs().max(1.0)
}

/// Log-uniform power vector in `[1e-3, 1] · p_max`.
pub fn random_power<R: Rng + ?Sized>(k: usize, p_max: f64, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(k, |_, _| p_max * 10f64.powf(rng.gen_range(-3.0..=0.0)))
}

/// An ordered pair `(p, p')` with `p ≥ p'` componentwise; roughly half the
/// components are left equal.
pub fn random_ordered_pair<R: Rng + ?Sized>(
    k: usize,
    p_max: f64,
    rng: &mut R,
) -> (DVector<f64>, DVector<f64>) {
    let lower = random_power(k, p_max, rng);
    let upper = DVector::from_fn(k, |i, _| {
        if rng.gen_bool(0.5) {
            lower[i]
        } else {
            lower[i] * rng.gen_range(1.0..=10.0)
        }
    });
    (upper, lower)
}

/// Randomized check of positivity, strict scalability, monotonicity and
/// feasibility of the capped map `min{I(p), p_max}`.
pub fn check_standard_axioms(
    model: &dyn InterferenceFunction,
    inst: &NetworkInstance,
    trials: usize,
    seed: u64,
    tols: CheckTolerances,
) -> Result<AxiomReport> {
    assert!(trials >= 1, "trials must be at least 1");
    let k = inst.k();
    let mut positivity = AxiomOutcome::new(Axiom::Positivity);
    let mut scalability = AxiomOutcome::new(Axiom::Scalability);
    let mut monotonicity = AxiomOutcome::new(Axiom::Monotonicity);
    let mut feasibility = AxiomOutcome::new(Axiom::Feasibility);

    for trial in 0..trials {
        let trial_seed = rng::child_seed(seed, trial as u64);
        let mut r = rng::stream(trial_seed, 0);
        let base = |p: &DVector<f64>| Counterexample {
            instance_seed: inst.seed,
            trial_seed,
            trial,
            p: p.as_slice().to_vec(),
            p_other: None,
            alpha: None,
            link: 0,
            column: None,
            lhs: 0.0,
            rhs: 0.0,
        };

        let p = random_power(k, inst.p_max, &mut r);
        let ip = model.eval(inst, &p)?;
        let bad = ip.iter().position(|&v| !(v > 0.0));
        positivity.record(bad.is_none(), || Counterexample {
            link: bad.unwrap_or(0),
            lhs: ip[bad.unwrap_or(0)],
            ..base(&p)
        });

        let alpha: f64 = 1.0 + r.gen_range(0.0..9.0f64).max(f64::EPSILON);
        let scaled_p = &p * alpha;
        let i_scaled = model.eval(inst, &scaled_p)?;
        let bad = (0..k).find(|&i| {
            !(alpha * ip[i] > i_scaled[i] + scaled(tols.strict_slack, i_scaled[i]))
        });
        scalability.record(bad.is_none(), || {
            let i = bad.unwrap_or(0);
            Counterexample {
                alpha: Some(alpha),
                link: i,
                lhs: alpha * ip[i],
                rhs: i_scaled[i],
                ..base(&p)
            }
        });

        let (hi, lo) = random_ordered_pair(k, inst.p_max, &mut r);
        let i_hi = model.eval(inst, &hi)?;
        let i_lo = model.eval(inst, &lo)?;
        let bad = (0..k).find(|&i| !(i_hi[i] >= i_lo[i] - scaled(tols.tol, i_lo[i])));
        monotonicity.record(bad.is_none(), || {
            let i = bad.unwrap_or(0);
            Counterexample {
                p_other: Some(lo.as_slice().to_vec()),
                link: i,
                lhs: i_hi[i],
                rhs: i_lo[i],
                ..base(&hi)
            }
        });

        let start = random_power(k, inst.p_max, &mut r);
        let fixed = yates_iterate(model, inst, &start, tols.tol * 1e-3, tols.feasibility_max_iter)?;
        let capped = model.eval(inst, &fixed.p)?.map(|v| v.min(inst.p_max));
        let bad = (0..k).find(|&i| !(fixed.p[i] >= capped[i] - scaled(tols.tol, capped[i])));
        let ok = fixed.converged && bad.is_none();
        feasibility.record(ok, || {
            let i = bad.unwrap_or(0);
            Counterexample {
                p_other: Some(fixed.p.as_slice().to_vec()),
                link: i,
                lhs: fixed.p[i],
                rhs: capped[i],
                ..base(&start)
            }
        });
    }

    Ok(AxiomReport {
        model: model.name().to_string(),
        tolerance: tols.tol,
        strict_slack: tols.strict_slack,
        outcomes: vec![positivity, scalability, monotonicity, feasibility],
    })
}

/// Checks that `∇I_j(p)/I_j(p) ≤ ∇I_j(p')/I_j(p')` componentwise on random
/// ordered pairs `p ≥ p'`, the gradient-ratio property of non-negative
/// log-concave functions that the derived fixed-point map relies on.
pub fn check_log_concavity_ratio(
    model: &dyn InterferenceModel,
    inst: &NetworkInstance,
    trials: usize,
    seed: u64,
    tols: CheckTolerances,
) -> Result<AxiomReport> {
    assert!(trials >= 1, "trials must be at least 1");
    let k = inst.k();
    let mut outcome = AxiomOutcome::new(Axiom::LogConcavityRatio);
    for trial in 0..trials {
        let trial_seed = rng::child_seed(seed, trial as u64);
        let mut r = rng::stream(trial_seed, 0);
        let (hi, lo) = random_ordered_pair(k, inst.p_max, &mut r);
        let (i_hi, j_hi) = (model.eval(inst, &hi)?, model.jacobian(inst, &hi)?);
        let (i_lo, j_lo) = (model.eval(inst, &lo)?, model.jacobian(inst, &lo)?);
        let mut violation = None;
        'outer: for j in 0..k {
            for i in 0..k {
                let lhs = j_hi[(j, i)] / i_hi[j];
                let rhs = j_lo[(j, i)] / i_lo[j];
                if !(lhs <= rhs + scaled(tols.tol, rhs)) {
                    violation = Some((j, i, lhs, rhs));
                    break 'outer;
                }
            }
        }
        outcome.record(violation.is_none(), || {
            let (j, i, lhs, rhs) = violation.unwrap();
            Counterexample {
                instance_seed: inst.seed,
                trial_seed,
                trial,
                p: hi.as_slice().to_vec(),
                p_other: Some(lo.as_slice().to_vec()),
                alpha: None,
                link: j,
                column: Some(i),
                lhs,
                rhs,
            }
        });
    }
    Ok(AxiomReport {
        model: model.name().to_string(),
        tolerance: tols.tol,
        strict_slack: tols.strict_slack,
        outcomes: vec![outcome],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub p: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Standard power control: `p ← min{I(p), p_max}` until the sup-norm step
/// falls below `tol`.
pub fn yates_iterate(
    model: &dyn InterferenceFunction,
    inst: &NetworkInstance,
    p0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPoint> {
    check_dim(inst, p0)?;
    check_positive(p0)?;
    let mut p = p0.clone();
    for it in 1..=max_iter {
        let next = model.eval(inst, &p)?.map(|v| v.min(inst.p_max));
        let step = (&next - &p).amax();
        p = next;
        if step < tol {
            return Ok(FixedPoint {
                p,
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(FixedPoint {
        p,
        iterations: max_iter,
        converged: false,
    })
}
