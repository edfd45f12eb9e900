//! Training loop: seeded shuffling, mini-batch graphs, Adam updates,
//! per-epoch loss reporting.

pub mod adam;
pub mod checkpoint;

pub use adam::{Adam, AdamConfig, StepError};
pub use checkpoint::{load, save, CheckpointError, TrainedModel};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{example_loss, forward, ModelInput};
use crate::tensor::{Graph, Tensor};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub lr: f64,
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { batch_size: 32, epochs: 30, seed: 1, lr: 0.002, grad_clip: None }
    }
}

/// One line of the epoch log. Term losses are means over the examples the
/// term applied to; absent terms serialize as null.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_answer: Option<f64>,
    pub loss_no_answer: Option<f64>,
    pub loss_verifier: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error(transparent)]
    Step(#[from] StepError),
}

/// Owns the model plus optimizer state. Each call to [`Trainer::epoch`]
/// shuffles with the trainer's RNG, so back-to-back epochs see different
/// orders while two trainers with the same seed stay in lockstep.
pub struct Trainer {
    pub model: TrainedModel,
    tcfg: TrainConfig,
    adam: Adam<f32>,
    rng: ChaCha8Rng,
    epochs_done: usize,
}

impl Trainer {
    pub fn new(model: TrainedModel, tcfg: TrainConfig) -> Self {
        let adam = Adam::new(AdamConfig { lr: tcfg.lr, ..AdamConfig::default() }, &model.params);
        let rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
        Trainer { model, tcfg, adam, rng, epochs_done: 0 }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.tcfg
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn epoch(&mut self, data: &[ModelInput]) -> Result<EpochMetrics, TrainError> {
        if data.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let start = Instant::now();
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);

        let mut sums = TermSums::default();
        for chunk in order.chunks(self.tcfg.batch_size) {
            let mut g: Graph<f32> = Graph::new();
            let bound = self.model.params.bind(&mut g);
            let mut batch_total = None;
            for &i in chunk {
                let ex = &data[i];
                let fwd = forward(&mut g, &bound, ex, &self.model.config, true, &mut self.rng);
                let lv = example_loss(&mut g, &fwd, ex, &self.model.config);
                sums.absorb(&g, &lv);
                batch_total = Some(match batch_total {
                    None => lv.total,
                    Some(acc) => g.add(acc, lv.total),
                });
            }
            let batch_loss = g.scale(batch_total.unwrap(), 1.0 / chunk.len() as f64);
            g.backward(batch_loss);

            let mut grads: Vec<Option<Tensor<f32>>> = Vec::new();
            bound.visit(&mut |_, var| grads.push(g.grad(*var).cloned()));
            if let Some(max_norm) = self.tcfg.grad_clip {
                clip_global_norm(&mut grads, max_norm);
            }
            self.adam.step(&mut self.model.params, &grads)?;
        }

        self.epochs_done += 1;
        Ok(sums.metrics(self.epochs_done, start.elapsed().as_millis() as u64))
    }

    /// Runs `tcfg.epochs` epochs, invoking `on_epoch` after each. Returning
    /// `false` from the callback stops early.
    pub fn run(
        &mut self,
        data: &[ModelInput],
        mut on_epoch: impl FnMut(&EpochMetrics) -> bool,
    ) -> Result<Vec<EpochMetrics>, TrainError> {
        let mut log = Vec::new();
        for _ in 0..self.tcfg.epochs {
            let m = self.epoch(data)?;
            let keep_going = on_epoch(&m);
            log.push(m);
            if !keep_going {
                break;
            }
        }
        Ok(log)
    }
}

#[derive(Default)]
struct TermSums {
    total: (f64, usize),
    answer: (f64, usize),
    no_answer: (f64, usize),
    verifier: (f64, usize),
}

impl TermSums {
    fn absorb(&mut self, g: &Graph<f32>, lv: &crate::model::LossVars) {
        let read = |v| g.value(v).data()[0] as f64;
        self.total.0 += read(lv.total);
        self.total.1 += 1;
        if let Some(v) = lv.l_a {
            self.answer.0 += read(v);
            self.answer.1 += 1;
        }
        if let Some(v) = lv.l_na {
            self.no_answer.0 += read(v);
            self.no_answer.1 += 1;
        }
        if let Some(v) = lv.l_av {
            self.verifier.0 += read(v);
            self.verifier.1 += 1;
        }
    }

    fn metrics(&self, epoch: usize, wall_ms: u64) -> EpochMetrics {
        let mean = |(s, n): (f64, usize)| if n == 0 { None } else { Some(s / n as f64) };
        EpochMetrics {
            epoch,
            loss_total: self.total.0 / self.total.1 as f64,
            loss_answer: mean(self.answer),
            loss_no_answer: mean(self.no_answer),
            loss_verifier: mean(self.verifier),
            wall_ms,
        }
    }
}

/// Scales every gradient by `max_norm / norm` when the global L2 norm across
/// all tensors exceeds `max_norm`.
pub fn clip_global_norm(grads: &mut [Option<Tensor<f32>>], max_norm: f64) {
    let mut sq = 0.0f64;
    for g in grads.iter().flatten() {
        for x in g.data() {
            sq += (*x as f64) * (*x as f64);
        }
    }
    let norm = sq.sqrt();
    if norm <= max_norm || norm == 0.0 {
        return;
    }
    let k = (max_norm / norm) as f32;
    for g in grads.iter_mut().flatten() {
        for x in g.data_mut() {
            *x *= k;
        }
    }
}
