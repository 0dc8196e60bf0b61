#![allow(dead_code)]

use nalgebra::DVector;
use powerctl::channel_model::{generate_instance, synthetic_instance, NetworkInstance, ScenarioConfig, WeightMode};
use powerctl::rng::stream;
use powerctl::unfolding::lpda::{cap_margin, loss, loss_and_gradient, lpda_forward, UnfoldingParameters};
use powerctl::unfolding::mlp::default_hidden_widths;
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Gradients this small are compared absolutely; below it central
/// differences are dominated by rounding.
pub const FD_ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Default)]
pub struct GradCheck {
    pub configs: usize,
    pub skipped_configs: usize,
    pub scalars: usize,
    pub failures: usize,
    pub worst_rel: f64,
}

fn random_params(k: usize, unroll: usize, g_max: f64, seed: u64) -> UnfoldingParameters {
    let mut rng = stream(seed, 0);
    let mut params = UnfoldingParameters::init(k, &default_hidden_widths(k), unroll, g_max, &mut rng);
    for a in params.alphas.iter_mut() {
        *a = rng.gen_range(0.0..0.5);
    }
    for b in params.mlp.biases.iter_mut().flatten() {
        *b = rng.gen_range(-0.5..0.5);
    }
    params
}

fn objective(inst: &NetworkInstance, w: &DVector<f64>, params: &UnfoldingParameters) -> f64 {
    let out = lpda_forward(inst, w, params).unwrap();
    loss(inst, w, &out.p).unwrap()
}

/// Compares the reverse-mode gradient of every trainable scalar with central
/// differences on `configs` random K=3, N=4 configurations. Configurations
/// whose unclamped updates come within the step of a clamp are skipped.
pub fn unfolding_gradient_check(configs: usize, seed: u64) -> GradCheck {
    let k = 3;
    let unroll = 4;
    let scenario = ScenarioConfig::with_links(k, seed);
    let mut report = GradCheck::default();
    let mut index = 0u64;
    while report.configs < configs {
        index += 1;
        let inst = if index.is_multiple_of(2) {
            let mut rng = stream(seed, index);
            synthetic_instance(k, index, &mut rng)
        } else {
            generate_instance(&scenario, WeightMode::Uniform01, seed.wrapping_add(index)).unwrap()
        };
        let w = inst.weights.clone();
        let params = random_params(k, unroll, scenario.gain_ceiling(), seed ^ index);
        if cap_margin(&inst, &w, &params).unwrap() < 1e-6 {
            report.skipped_configs += 1;
            continue;
        }
        report.configs += 1;

        let (_, grad) = loss_and_gradient(&inst, &w, &params).unwrap();
        let flat = params.flatten();
        let mut probe = params.clone();
        for i in 0..flat.len() {
            let h = FD_STEP * flat[i].abs().max(1.0);
            let mut x = flat.clone();
            x[i] = flat[i] + h;
            probe.unflatten(&x);
            let up = objective(&inst, &w, &probe);
            x[i] = flat[i] - h;
            probe.unflatten(&x);
            let down = objective(&inst, &w, &probe);
            let fd = (up - down) / (2.0 * h);
            let err = (grad[i] - fd).abs();
            let scale = grad[i].abs().max(fd.abs());
            report.scalars += 1;
            if scale > FD_ABS_FLOOR {
                report.worst_rel = report.worst_rel.max(err / scale);
            }
            if err > FD_REL_TOL * scale && err > FD_ABS_FLOOR {
                report.failures += 1;
            }
        }
    }
    report
}
