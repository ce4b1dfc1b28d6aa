use serde::{Deserialize, Serialize};

use super::{loss_and_gradient, mape, DeepDeffModel, LossKind};
use crate::error::{Error, Result};
use crate::features::Sample;
use crate::numerics::{adam_step, AdamConfig, AdamState, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// `None` picks the loss that matches the model kind.
    pub loss: Option<LossKind>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            dropout: 0.2,
            max_epochs: 200,
            batch_size: 32,
            patience: 20,
            loss: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_mape: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_validation_mape: Option<f64>,
    pub stopped_early: bool,
    /// Filled in by the caller once the restored model has been scored.
    pub test_mape: Option<f64>,
}

/// Epoch-at-a-time training loop. [`train`] drives it to completion; the
/// browser demo steps it between animation frames.
#[derive(Clone, Debug)]
pub struct Trainer {
    model: DeepDeffModel,
    config: TrainConfig,
    loss: LossKind,
    adam: Vec<AdamState>,
    rng: SeededRng,
    best: Option<DeepDeffModel>,
    since_best: usize,
    report: TrainReport,
}

impl Trainer {
    pub fn new(model: DeepDeffModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam_config = AdamConfig {
            lr: config.learning_rate,
            ..AdamConfig::default()
        };
        let adam = model
            .named_params()
            .iter()
            .map(|(_, m)| AdamState::for_param(m, adam_config))
            .collect();
        Ok(Self {
            loss: config.loss.unwrap_or(model.spec.kind.default_loss()),
            model,
            config,
            adam,
            rng: SeededRng::new(config.seed),
            best: None,
            since_best: 0,
            report: TrainReport::default(),
        })
    }

    pub fn model(&self) -> &DeepDeffModel {
        &self.model
    }

    pub fn report(&self) -> &TrainReport {
        &self.report
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn is_done(&self) -> bool {
        self.report.epochs.len() >= self.config.max_epochs || self.report.stopped_early
    }

    /// One pass over shuffled mini-batches followed by validation.
    pub fn run_epoch(&mut self, train: &[Sample], validation: &[Sample]) -> Result<EpochRecord> {
        if train.is_empty() || validation.is_empty() {
            return Err(Error::Input("training and validation sets must be non-empty".into()));
        }
        let epoch = self.report.epochs.len() + 1;
        let mut order: Vec<usize> = (0..train.len()).collect();
        self.rng.shuffle(&mut order);

        let mut weighted = 0.0;
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, grads) =
                loss_and_gradient(&self.model, &batch, self.loss, true, self.config.dropout, &mut self.rng)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            weighted += loss * batch.len() as f64;
            let grads = grads.named_params();
            for ((param, (_, grad)), state) in self.model.params_mut().into_iter().zip(grads).zip(&mut self.adam) {
                adam_step(param, grad, state)?;
            }
        }
        let train_loss = weighted / train.len() as f64;
        let validation_mape = evaluate(&self.model, validation)?;
        if !validation_mape.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: validation_mape,
            });
        }

        let improved = self.report.best_validation_mape.is_none_or(|best| validation_mape < best);
        if improved {
            self.report.best_epoch = Some(epoch);
            self.report.best_validation_mape = Some(validation_mape);
            self.best = Some(self.model.clone());
            self.since_best = 0;
        } else {
            self.since_best += 1;
            if self.since_best >= self.config.patience {
                self.report.stopped_early = true;
            }
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            validation_mape,
        };
        self.report.epochs.push(record);
        Ok(record)
    }

    /// The best-validation weights (or the current ones if no epoch ran) and the report.
    pub fn finish(self) -> (DeepDeffModel, TrainReport) {
        (self.best.unwrap_or(self.model), self.report)
    }
}

/// Trains with early stopping and restores the weights of the best validation epoch.
pub fn train(
    model: DeepDeffModel,
    train_set: &[Sample],
    validation: &[Sample],
    config: &TrainConfig,
) -> Result<(DeepDeffModel, TrainReport)> {
    if train_set.is_empty() || validation.is_empty() {
        return Err(Error::Input("training and validation sets must be non-empty".into()));
    }
    let mut trainer = Trainer::new(model, *config)?;
    while !trainer.is_done() {
        trainer.run_epoch(train_set, validation)?;
    }
    Ok(trainer.finish())
}

/// Inference-mode predictions, one per sample.
pub fn predict(model: &DeepDeffModel, samples: &[Sample]) -> Result<Vec<f64>> {
    samples.iter().map(|s| model.predict_one(s)).collect()
}

/// MAPE of inference-mode predictions.
pub fn evaluate(model: &DeepDeffModel, samples: &[Sample]) -> Result<f64> {
    let predictions = predict(model, samples)?;
    let actuals: Vec<f64> = samples.iter().map(|s| s.target).collect();
    mape(&predictions, &actuals)
}
