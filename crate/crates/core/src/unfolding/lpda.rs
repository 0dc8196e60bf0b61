//! The unrolled learned primal-dual iteration.
//!
//! Per iteration, with affine interference `I(p) = G̃p + σ` (`G̃` is `G`
//! with its diagonal zeroed):
//!
//! ```text
//! p ← clamp(w / (G̃ᵀ(w / I(p)) + λ) − I(q) / diag(G), ε, p_max)
//! q ← Φ(p, G; Θ)
//! λ ← λ + α_k (p − q)
//! ```
//!
//! starting from `p = q = 𝟙`, `λ = 0`.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{self, MlpParameters, MlpVars};
use super::tape::{Backend, Eager, Tape};
use crate::channel_model::NetworkInstance;
use crate::interference::{Affine, InterferenceFunction};
use crate::solvers_dc::{self, POWER_FLOOR};
use crate::{Error, Result};

pub const DEFAULT_UNROLL: usize = 8;
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Lower bound on `G̃ᵀ(w/I) + λ` before dividing. A non-positive bracket
/// means the Lagrangian increases in `p_i` everywhere, and the tiny floor
/// sends that link to `p_max` with zero gradient through the cap.
const BRACKET_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnfoldingParameters {
    pub mlp: MlpParameters,
    /// One dual step per unrolled iteration; the unroll depth is its length.
    pub alphas: Vec<f64>,
    /// Gain used to normalize the network's gain features.
    pub g_max: f64,
}

impl UnfoldingParameters {
    pub fn init<R: Rng + ?Sized>(k: usize, hidden: &[usize], unroll: usize, g_max: f64, rng: &mut R) -> Self {
        Self {
            mlp: MlpParameters::glorot(mlp::layer_dims(k, hidden), rng),
            alphas: vec![DEFAULT_ALPHA; unroll],
            g_max,
        }
    }

    pub fn k(&self) -> usize {
        self.mlp.output_dim()
    }

    pub fn unroll(&self) -> usize {
        self.alphas.len()
    }

    pub fn num_params(&self) -> usize {
        self.mlp.num_params() + self.alphas.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.mlp.validate()?;
        let k = self.k();
        if self.mlp.input_dim() != mlp::input_dim(k) {
            return Err(Error::DimensionMismatch {
                expected: mlp::input_dim(k),
                got: self.mlp.input_dim(),
            });
        }
        if self.alphas.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidConfig("dual steps must be finite".into()));
        }
        if !(self.g_max > 0.0 && self.g_max.is_finite()) {
            return Err(Error::InvalidConfig(format!("G_max must be positive, got {}", self.g_max)));
        }
        Ok(())
    }

    /// MLP layers (weights then biases) followed by the dual steps.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.mlp.flatten_into(&mut out);
        out.extend_from_slice(&self.alphas);
        out
    }

    pub fn unflatten(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "flat parameter length");
        let rest = self.mlp.unflatten_from(flat);
        self.alphas.copy_from_slice(rest);
    }
}

/// What produces `q` each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QMap {
    #[default]
    Network,
    /// `q ≡ p`; reduces the iteration to the plain primal update.
    Primal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpdaOutput {
    pub p: DVector<f64>,
    /// WSR in nats after each iteration, `N` entries.
    pub trace: Vec<f64>,
    pub p_iterates: Vec<DVector<f64>>,
    pub q_iterates: Vec<DVector<f64>>,
}

/// Instance data lifted onto a backend as constants.
struct Problem<V> {
    k: usize,
    cross: V,
    cross_t: V,
    direct: V,
    w: V,
    features: V,
    noise: f64,
    p_max: f64,
}

impl<V: Clone> Problem<V> {
    fn lift<B: Backend<V = V>>(b: &mut B, inst: &NetworkInstance, w: &DVector<f64>, g_max: f64) -> Self {
        let k = inst.k();
        let mut cross = Vec::with_capacity(k * k);
        let mut cross_t = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                cross.push(if i == j { 0.0 } else { inst.gains[(i, j)] });
                cross_t.push(if i == j { 0.0 } else { inst.gains[(j, i)] });
            }
        }
        Self {
            k,
            cross: b.constant(cross),
            cross_t: b.constant(cross_t),
            direct: b.constant(inst.direct_gains().as_slice().to_vec()),
            w: b.constant(w.as_slice().to_vec()),
            features: b.constant(mlp::gain_features(inst, g_max)),
            noise: inst.noise,
            p_max: inst.p_max,
        }
    }

    fn interference<B: Backend<V = V>>(&self, b: &mut B, p: &V) -> V {
        let x = b.matvec(&self.cross, self.k, self.k, p);
        b.add_const(&x, self.noise)
    }

    fn wsr<B: Backend<V = V>>(&self, b: &mut B, p: &V) -> V {
        let i = self.interference(b, p);
        let s = b.mul(&self.direct, p);
        let sinr = b.div(&s, &i);
        let one_plus = b.add_const(&sinr, 1.0);
        let rates = b.ln(&one_plus);
        b.dot(&self.w, &rates)
    }

    /// Returns the unclamped update and the clamped one.
    fn p_update<B: Backend<V = V>>(&self, b: &mut B, p: &V, q: &V, lambda: &V) -> (V, V) {
        let ip = self.interference(b, p);
        let ratio = b.div(&self.w, &ip);
        let grad = b.matvec(&self.cross_t, self.k, self.k, &ratio);
        let bracket = b.add(&grad, lambda);
        let bracket = b.max_const(&bracket, BRACKET_FLOOR);
        let lead = b.div(&self.w, &bracket);
        let iq = self.interference(b, q);
        let offset = b.div(&iq, &self.direct);
        let raw = b.sub(&lead, &offset);
        let floored = b.max_const(&raw, POWER_FLOOR);
        let capped = b.min_const(&floored, self.p_max);
        (raw, capped)
    }
}

struct Unrolled<V> {
    raw_updates: Vec<V>,
    p_iterates: Vec<V>,
    q_iterates: Vec<V>,
    wsr: Vec<V>,
}

fn unroll<B: Backend>(
    b: &mut B,
    problem: &Problem<B::V>,
    net: &MlpVars<B::V>,
    alphas: &[B::V],
    qmap: QMap,
    trace_every_iteration: bool,
) -> Unrolled<B::V> {
    let k = problem.k;
    let mut p = b.constant(vec![problem.p_max; k]);
    let mut q = b.constant(vec![problem.p_max; k]);
    let mut lambda = b.constant(vec![0.0; k]);
    let mut out = Unrolled {
        raw_updates: Vec::with_capacity(alphas.len()),
        p_iterates: Vec::with_capacity(alphas.len()),
        q_iterates: Vec::with_capacity(alphas.len()),
        wsr: Vec::new(),
    };
    for (it, alpha) in alphas.iter().enumerate() {
        let (raw, capped) = problem.p_update(b, &p, &q, &lambda);
        out.raw_updates.push(raw);
        p = capped;
        q = match qmap {
            QMap::Network => {
                let input = b.concat(&[p.clone(), problem.features.clone()]);
                net.apply(b, &input)
            }
            QMap::Primal => p.clone(),
        };
        let gap = b.sub(&p, &q);
        let step = b.scale(alpha, &gap);
        lambda = b.add(&lambda, &step);
        if trace_every_iteration || it + 1 == alphas.len() {
            let v = problem.wsr(b, &p);
            out.wsr.push(v);
        }
        out.p_iterates.push(p.clone());
        out.q_iterates.push(q.clone());
    }
    out
}

fn check_inputs(inst: &NetworkInstance, w: &DVector<f64>, params: &UnfoldingParameters) -> Result<()> {
    params.validate()?;
    if params.k() != inst.k() {
        return Err(Error::KMismatch {
            expected: params.k(),
            found: inst.k(),
        });
    }
    if w.len() != inst.k() {
        return Err(Error::DimensionMismatch {
            expected: inst.k(),
            got: w.len(),
        });
    }
    Ok(())
}

pub fn lpda_forward(inst: &NetworkInstance, w: &DVector<f64>, params: &UnfoldingParameters) -> Result<LpdaOutput> {
    lpda_forward_with(inst, w, params, QMap::Network)
}

pub fn lpda_forward_with(
    inst: &NetworkInstance,
    w: &DVector<f64>,
    params: &UnfoldingParameters,
    qmap: QMap,
) -> Result<LpdaOutput> {
    check_inputs(inst, w, params)?;
    let mut b = Eager;
    let problem = Problem::lift(&mut b, inst, w, params.g_max);
    let net = MlpVars::lift(&mut b, &params.mlp);
    let alphas: Vec<Vec<f64>> = params.alphas.iter().map(|&a| vec![a]).collect();
    let run = unroll(&mut b, &problem, &net, &alphas, qmap, true);
    let to_dv = |v: &Vec<f64>| DVector::from_vec(v.clone());
    Ok(LpdaOutput {
        p: run.p_iterates.last().map(to_dv).unwrap_or_else(|| DVector::from_element(inst.k(), inst.p_max)),
        trace: run.wsr.iter().map(|v| v[0]).collect(),
        p_iterates: run.p_iterates.iter().map(to_dv).collect(),
        q_iterates: run.q_iterates.iter().map(to_dv).collect(),
    })
}

/// Smallest distance of any unclamped primal update to the power floor or
/// cap over the whole run. Gradients are only piecewise smooth; finite
/// differences are meaningful when this exceeds the difference step.
pub fn cap_margin(inst: &NetworkInstance, w: &DVector<f64>, params: &UnfoldingParameters) -> Result<f64> {
    check_inputs(inst, w, params)?;
    let mut b = Eager;
    let problem = Problem::lift(&mut b, inst, w, params.g_max);
    let net = MlpVars::lift(&mut b, &params.mlp);
    let alphas: Vec<Vec<f64>> = params.alphas.iter().map(|&a| vec![a]).collect();
    let run = unroll(&mut b, &problem, &net, &alphas, QMap::Network, false);
    Ok(run
        .raw_updates
        .iter()
        .flatten()
        .map(|&r| (r - POWER_FLOOR).abs().min((r - inst.p_max).abs()))
        .fold(f64::INFINITY, f64::min))
}

/// `−Σ w_i ln(1 + γ_i(p))` under affine interference.
pub fn loss(inst: &NetworkInstance, w: &DVector<f64>, p: &DVector<f64>) -> Result<f64> {
    let gamma = solvers_dc::sinr(inst, &Affine as &dyn InterferenceFunction, p)?;
    Ok(-w.iter().zip(gamma.iter()).map(|(w, g)| w * g.ln_1p()).sum::<f64>())
}

/// Loss at `p^(N)` and its gradient in the [`UnfoldingParameters::flatten`]
/// layout.
pub fn loss_and_gradient(
    inst: &NetworkInstance,
    w: &DVector<f64>,
    params: &UnfoldingParameters,
) -> Result<(f64, Vec<f64>)> {
    check_inputs(inst, w, params)?;
    if params.unroll() == 0 {
        let p = DVector::from_element(inst.k(), inst.p_max);
        return Ok((loss(inst, w, &p)?, vec![0.0; params.num_params()]));
    }
    let mut tape = Tape::new();
    let net = MlpVars::lift(&mut tape, &params.mlp);
    let alphas: Vec<_> = params.alphas.iter().map(|&a| tape.leaf(vec![a])).collect();
    let problem = Problem::lift(&mut tape, inst, w, params.g_max);
    let run = unroll(&mut tape, &problem, &net, &alphas, QMap::Network, false);
    let wsr = *run.wsr.last().expect("one trace node per run");
    let neg = tape.scale_const(&wsr, -1.0);
    let grads = tape.backward(neg);

    let mut flat = Vec::with_capacity(params.num_params());
    for l in 0..params.mlp.num_layers() {
        flat.extend(grads.wrt(net.weights[l], params.mlp.weights[l].len()));
        flat.extend(grads.wrt(net.biases[l], params.mlp.biases[l].len()));
    }
    for a in &alphas {
        flat.extend(grads.wrt(*a, 1));
    }
    Ok((tape.val(neg)[0], flat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_model::{generate_instance, synthetic_instance, ScenarioConfig, WeightMode};
    use crate::rng::stream;
    use approx::assert_relative_eq;
    use rand::seq::SliceRandom;

    fn desk() -> NetworkInstance {
        NetworkInstance::from_rows(2, &[1.0, 0.5, 0.2, 1.0], 0.1).unwrap()
    }

    fn small_params(k: usize, unroll: usize, seed: u64) -> UnfoldingParameters {
        let mut rng = stream(seed, 0);
        let mut params = UnfoldingParameters::init(k, &[7, 5], unroll, 100.0, &mut rng);
        for a in params.alphas.iter_mut() {
            *a = rng.gen_range(0.01..0.5);
        }
        for b in params.mlp.biases.iter_mut().flatten() {
            *b = rng.gen_range(-0.3..0.3);
        }
        params
    }

    #[test]
    fn zero_depth_returns_full_power() {
        let params = small_params(2, 0, 1);
        let inst = desk();
        let out = lpda_forward(&inst, &inst.weights, &params).unwrap();
        assert_eq!(out.p.as_slice(), &[1.0, 1.0]);
        assert!(out.trace.is_empty());
    }

    #[test]
    fn primal_map_reproduces_the_plain_update() {
        let mut params = small_params(2, 1, 2);
        params.alphas = vec![0.0];
        let inst = desk();
        let out = lpda_forward_with(&inst, &inst.weights, &params, QMap::Primal).unwrap();
        assert_relative_eq!(out.p[0], 0.9, epsilon = 1e-12);
        assert_relative_eq!(out.p[1], 0.9, epsilon = 1e-12);
        assert_eq!(out.q_iterates[0], out.p);
    }

    #[test]
    fn default_depth_is_eight() {
        let mut rng = stream(0, 0);
        let params = UnfoldingParameters::init(3, &mlp::default_hidden_widths(3), DEFAULT_UNROLL, 10.0, &mut rng);
        assert_eq!(params.unroll(), 8);
        assert!(params.alphas.iter().all(|&a| a == DEFAULT_ALPHA));
    }

    #[test]
    fn single_link_loss() {
        let inst = NetworkInstance::from_rows(1, &[1.0], 1.0).unwrap();
        let l = loss(&inst, &inst.weights, &DVector::from_element(1, 1.0)).unwrap();
        assert_relative_eq!(l, -std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn trace_matches_reported_iterates() {
        let mut rng = stream(3, 0);
        let inst = synthetic_instance(3, 3, &mut rng);
        let params = small_params(3, 5, 3);
        let out = lpda_forward(&inst, &inst.weights, &params).unwrap();
        assert_eq!(out.trace.len(), 5);
        for (p, t) in out.p_iterates.iter().zip(&out.trace) {
            assert_relative_eq!(-loss(&inst, &inst.weights, p).unwrap(), *t, max_relative = 1e-12);
        }
        let (l, _) = loss_and_gradient(&inst, &inst.weights, &params).unwrap();
        assert_relative_eq!(l, -out.trace[4], max_relative = 1e-12);
    }

    #[test]
    fn iterates_stay_in_range() {
        let cfg = ScenarioConfig::with_links(6, 0);
        let params = small_params(6, 8, 4);
        for seed in 0..10 {
            let inst = generate_instance(&cfg, WeightMode::Uniform01, seed).unwrap();
            let out = lpda_forward(&inst, &inst.weights, &params).unwrap();
            for p in &out.p_iterates {
                assert!(p.iter().all(|&x| (POWER_FLOOR..=1.0).contains(&x)));
            }
            for q in &out.q_iterates {
                assert!(q.iter().all(|&x| x > 0.0 && x < 1.0));
            }
        }
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let mut rng = stream(5, 0);
        let inst = synthetic_instance(4, 5, &mut rng);
        let params = small_params(4, 8, 5);
        let a = lpda_forward(&inst, &inst.weights, &params).unwrap();
        let b = lpda_forward(&inst, &inst.weights, &params).unwrap();
        assert_eq!(a, b);
        let ga = loss_and_gradient(&inst, &inst.weights, &params).unwrap();
        let gb = loss_and_gradient(&inst, &inst.weights, &params).unwrap();
        assert_eq!(ga, gb);
    }

    #[test]
    fn link_count_mismatch() {
        let params = small_params(3, 2, 6);
        let inst = desk();
        assert!(matches!(
            lpda_forward(&inst, &inst.weights, &params),
            Err(Error::KMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn permuting_links_permutes_the_first_update() {
        let mut rng = stream(7, 0);
        let inst = synthetic_instance(4, 7, &mut rng);
        let mut perm: Vec<usize> = (0..4).collect();
        perm.shuffle(&mut rng);
        let gains = nalgebra::DMatrix::from_fn(4, 4, |i, j| inst.gains[(perm[i], perm[j])]);
        let weights = DVector::from_fn(4, |i, _| inst.weights[perm[i]]);
        let permuted = NetworkInstance::new(gains, weights.clone(), 1.0, inst.noise, 0).unwrap();

        let params = small_params(4, 1, 7);
        let a = lpda_forward(&inst, &inst.weights, &params).unwrap();
        let b = lpda_forward(&permuted, &weights, &params).unwrap();
        for (i, &src) in perm.iter().enumerate() {
            assert_relative_eq!(b.p_iterates[0][i], a.p_iterates[0][src], max_relative = 1e-14);
        }
        // the network input is permuted consistently: p entries and both gain axes
        let ea = mlp::mlp_input_encode(&inst, &a.p_iterates[0], params.g_max).unwrap();
        let eb = mlp::mlp_input_encode(&permuted, &b.p_iterates[0], params.g_max).unwrap();
        for i in 0..4 {
            assert_relative_eq!(eb[i], ea[perm[i]], max_relative = 1e-14);
            for j in 0..4 {
                assert_eq!(eb[4 + 4 * i + j], ea[4 + 4 * perm[i] + perm[j]]);
            }
        }
    }

    #[test]
    fn flatten_round_trip() {
        let params = small_params(3, 4, 8);
        let flat = params.flatten();
        assert_eq!(flat.len(), params.num_params());
        let mut other = small_params(3, 4, 9);
        other.unflatten(&flat);
        assert_eq!(other, params);
    }
}
