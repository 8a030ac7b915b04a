//! The training loop: mini-batch Adam with class-weighted cross-entropy,
//! validation F1 checkpoint selection, and bit-reproducible runs.

use crate::dataset::SplitDataset;
use crate::eval::{confusion, Metrics};
use crate::par::map_indices;

use super::loss::weighted_bce_with_logit;
use super::model::{input_tensor, Architecture, Gradients, Model};
use super::ops::sigmoid;
use super::optim::{Adam, AdamConfig, LrSchedule};
use super::tensor::Tensor;
use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub arch: Architecture,
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: Architecture::default(),
            epochs: 300,
            batch_size: 128,
            schedule: LrSchedule {
                base: 0.01,
                decay_factor: 5.0,
                decay_period: 40,
            },
            adam: AdamConfig::default(),
            seed: 42,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Mean weighted loss over the train split.
    pub train_loss: f64,
    pub val: Metrics,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub history: Vec<EpochStats>,
    /// Epoch whose end-of-epoch parameters were kept: the earliest epoch
    /// attaining the maximum validation F1 (replacement requires a strictly
    /// greater score).
    pub best_epoch: usize,
    pub best_val_f1: f64,
}

/// Trains a fresh model on `data.train`, selecting the checkpoint by
/// validation F1.
///
/// Examples are visited in their stored order, sliced into consecutive
/// batches; per-example gradients are computed independently (in parallel
/// when the feature is on) and reduced in example order, so a run is a pure
/// function of data, config, and seed.
pub fn train(data: &SplitDataset, cfg: &TrainConfig) -> Result<(Model, TrainReport), NnError> {
    if data.train.is_empty() {
        return Err(NnError::EmptySplit { which: "train" });
    }
    if data.validation.is_empty() {
        return Err(NnError::EmptySplit { which: "validation" });
    }
    if data.train.iter().all(|e| e.target) || data.train.iter().all(|e| !e.target) {
        return Err(NnError::SingleClass);
    }
    assert!(cfg.batch_size >= 1, "batch size must be at least 1");
    assert!(cfg.epochs >= 1, "must train for at least one epoch");

    let side = data.train[0].input.rows();
    let mut model = Model::new(side, cfg.arch, cfg.seed)?;
    let inputs: Vec<Tensor> = check_sides(data, side)?;
    let (w0, w1) = data.class_weights;
    let weight_of = |target: bool| if target { w1 } else { w0 };

    let n_train = data.train.len();
    let order: Vec<usize> = (0..n_train).collect();
    let val_targets: Vec<bool> = data.validation.iter().map(|e| e.target).collect();
    let mut adam = Adam::new(cfg.adam, &model.param_sizes());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Model)> = None;

    for epoch in 0..cfg.epochs {
        let lr = cfg.schedule.at(epoch);
        let mut loss_sum = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let per_example: Vec<(f64, Gradients)> = {
                let model = &model;
                let inputs = &inputs;
                map_indices(batch.len(), move |b| {
                    let i = batch[b];
                    let example = &data.train[i];
                    let (logit, acts) = model
                        .forward(&inputs[i])
                        .expect("shapes were validated before training");
                    let (loss, dlogit) =
                        weighted_bce_with_logit(logit, example.target, weight_of(example.target));
                    let grads = model
                        .backward(&acts, dlogit)
                        .expect("backward mirrors forward shapes");
                    (loss, grads)
                })
            };
            // Reduce in example order: addition order never depends on the
            // thread count.
            let mut total = Gradients::zeros_like(&model);
            let mut batch_loss = 0.0;
            for (loss, grads) in &per_example {
                batch_loss += loss;
                total.add(grads);
            }
            if !batch_loss.is_finite() {
                return Err(NnError::NonFiniteLoss { epoch, batch: batch_idx });
            }
            loss_sum += batch_loss;
            total.scale(1.0 / batch.len() as f64);
            adam.step(lr, &mut model.param_slices_mut(), &total.slices())?;
        }

        let val_probs = predict_tensors(&model, &inputs[n_train..n_train + data.validation.len()]);
        let val_preds = classify(&val_probs);
        let val = confusion(&val_preds, &val_targets).expect("lengths match by construction");
        let train_loss = loss_sum / n_train as f64;
        log::debug!(
            "epoch {epoch:>3}  lr {lr:.5}  train loss {train_loss:.6}  val F1 {:.3}",
            val.f1
        );
        history.push(EpochStats {
            epoch,
            lr,
            train_loss,
            val,
        });
        if best.as_ref().is_none_or(|(_, f1, _)| val.f1 > *f1) {
            best = Some((epoch, val.f1, model.clone()));
        }
    }

    let (best_epoch, best_val_f1, best_model) = best.expect("at least one epoch ran");
    Ok((
        best_model,
        TrainReport {
            history,
            best_epoch,
            best_val_f1,
        },
    ))
}

fn check_sides(data: &SplitDataset, side: usize) -> Result<Vec<Tensor>, NnError> {
    data.train
        .iter()
        .chain(&data.validation)
        .map(|e| {
            if e.input.rows() != side || e.input.cols() != side {
                return Err(NnError::ShapeMismatch(format!(
                    "example for pair {}-{} is {}x{}, expected {side}x{side}",
                    e.pair.0,
                    e.pair.1,
                    e.input.rows(),
                    e.input.cols()
                )));
            }
            Ok(input_tensor(&e.input))
        })
        .collect()
}

/// Synchronization probabilities for a slice of examples.
pub fn predict(model: &Model, examples: &[crate::dataset::Example]) -> Result<Vec<f64>, NnError> {
    let tensors: Vec<Tensor> = examples
        .iter()
        .map(|e| {
            if e.input.rows() != model.input_side || e.input.cols() != model.input_side {
                return Err(NnError::ShapeMismatch(format!(
                    "example is {}x{}, model expects {side}x{side}",
                    e.input.rows(),
                    e.input.cols(),
                    side = model.input_side
                )));
            }
            Ok(input_tensor(&e.input))
        })
        .collect::<Result<_, _>>()?;
    Ok(predict_tensors(model, &tensors))
}

fn predict_tensors(model: &Model, inputs: &[Tensor]) -> Vec<f64> {
    map_indices(inputs.len(), |i| {
        let (logit, _) = model
            .forward(&inputs[i])
            .expect("prediction shapes were validated");
        sigmoid(logit)
    })
}

/// Thresholds probabilities at 0.5; exactly 0.5 counts as synchronized.
pub fn classify(probabilities: &[f64]) -> Vec<bool> {
    probabilities.iter().map(|p| *p >= 0.5).collect()
}
