//! Unsupervised end-to-end training on freshly generated networks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::lpda::{loss_and_gradient, UnfoldingParameters, DEFAULT_UNROLL};
use super::mlp;
use crate::channel_model::{generate_instance, NetworkInstance, ScenarioConfig, WeightMode};
use crate::rng::{child_seed, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Networks generated per epoch.
    pub n_train: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_initial: f64,
    /// Multiplies the learning rate after every epoch.
    pub lr_decay: f64,
    pub adam: AdamConfig,
    pub weight_mode: WeightMode,
    pub k: usize,
    pub unroll: usize,
    /// Empty means the default widths for `k`.
    pub hidden: Vec<usize>,
    pub seed: u64,
    /// Propagation parameters; its link count and seed are ignored.
    pub scenario: ScenarioConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_train: 1000,
            batch_size: 64,
            epochs: 200,
            lr_initial: 1e-3,
            lr_decay: 0.99,
            adam: AdamConfig::default(),
            weight_mode: WeightMode::Uniform01,
            k: 10,
            unroll: DEFAULT_UNROLL,
            hidden: Vec::new(),
            seed: 0,
            scenario: ScenarioConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.n_train == 0 || self.batch_size == 0 || self.k == 0 || self.unroll == 0 {
            return bad("n_train, batch_size, k and unroll must be positive");
        }
        if !(self.lr_initial >= 0.0 && self.lr_initial.is_finite()) {
            return bad("lr_initial must be finite and non-negative");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        self.scenario_config().validate()
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        if self.hidden.is_empty() {
            mlp::default_hidden_widths(self.k)
        } else {
            self.hidden.clone()
        }
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        ScenarioConfig {
            num_links: self.k,
            rng_seed: self.seed,
            ..self.scenario.clone()
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr_initial * self.lr_decay.powi(epoch as i32)
    }

    pub fn initial_parameters(&self) -> UnfoldingParameters {
        let mut rng = stream(self.seed, 1);
        UnfoldingParameters::init(
            self.k,
            &self.hidden_widths(),
            self.unroll,
            self.scenario_config().gain_ceiling(),
            &mut rng,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: UnfoldingParameters,
    pub log: Vec<EpochLog>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> Option<f64> {
        self.log.last().map(|e| e.mean_train_loss)
    }

    pub fn log_csv(&self) -> String {
        let mut s = String::from("epoch,mean_train_loss_nats,lr\n");
        for e in &self.log {
            s.push_str(&format!("{},{:.12e},{:.12e}\n", e.epoch, e.mean_train_loss, e.lr));
        }
        s
    }
}

/// The networks of one epoch; instance `i` of epoch `e` has seed
/// `child(child(seed, e), i)`.
pub fn epoch_instances(config: &TrainConfig, epoch: usize) -> Result<Vec<NetworkInstance>> {
    let scenario = config.scenario_config();
    let epoch_seed = child_seed(config.seed, epoch as u64);
    (0..config.n_train)
        .into_par_iter()
        .map(|i| generate_instance(&scenario, config.weight_mode, child_seed(epoch_seed, i as u64)))
        .collect()
}

/// Mean loss and mean gradient over a batch; per-instance results are
/// reduced in index order so the sum does not depend on scheduling.
pub fn batch_loss_and_gradient(
    batch: &[NetworkInstance],
    params: &UnfoldingParameters,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let parts: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|inst| loss_and_gradient(inst, &inst.weights, params))
        .collect::<Result<_>>()?;
    let n = batch.len() as f64;
    let mut grad = vec![0.0; params.num_params()];
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        for (acc, x) in grad.iter_mut().zip(g) {
            *acc += x;
        }
    }
    grad.iter_mut().for_each(|x| *x /= n);
    Ok((loss / n, grad))
}

pub fn mean_loss(instances: &[NetworkInstance], params: &UnfoldingParameters) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let losses: Vec<f64> = instances
        .par_iter()
        .map(|inst| {
            let out = super::lpda::lpda_forward(inst, &inst.weights, params)?;
            super::lpda::loss(inst, &inst.weights, &out.p)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(config, |_, _| {})
}

/// Trains from [`TrainConfig::initial_parameters`], calling `on_epoch` after
/// each epoch.
pub fn train_with(
    config: &TrainConfig,
    on_epoch: impl FnMut(&EpochLog, &UnfoldingParameters),
) -> Result<TrainOutcome> {
    train_from(config, config.initial_parameters(), on_epoch)
}

pub fn train_from(
    config: &TrainConfig,
    mut params: UnfoldingParameters,
    mut on_epoch: impl FnMut(&EpochLog, &UnfoldingParameters),
) -> Result<TrainOutcome> {
    config.validate()?;
    params.validate()?;
    if params.k() != config.k {
        return Err(Error::KMismatch {
            expected: config.k,
            found: params.k(),
        });
    }
    let mut flat = params.flatten();
    let mut state = AdamState::new(flat.len());
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        let instances = epoch_instances(config, epoch)?;
        let mut total = 0.0;
        for (b, batch) in instances.chunks(config.batch_size).enumerate() {
            let (loss, grad) = batch_loss_and_gradient(batch, &params)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch: epoch + 1, batch: b });
            }
            total += loss * batch.len() as f64;
            adam_step(&mut flat, &grad, &mut state, lr, &config.adam);
            params.unflatten(&flat);
        }
        let entry = EpochLog {
            epoch: epoch + 1,
            mean_train_loss: total / instances.len() as f64,
            lr,
        };
        on_epoch(&entry, &params);
        log.push(entry);
    }
    Ok(TrainOutcome { params, log })
}
