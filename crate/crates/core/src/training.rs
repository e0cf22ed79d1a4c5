//! Minibatch training with Adam, step learning-rate decay, validation-based
//! model selection and early stopping; fine-tuning; prediction in °C.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{month_index, GridField, GridSeries, MonthStamp};
use crate::model::{Checkpoint, Model, Provenance};
use crate::nn::{adam_step, mse_loss, mse_loss_grad, AdamConfig, AdamState, NormMode, Param, StepLr, Tensor4};
use crate::stacking::{assemble_input, max_offset, Sample, TemporalCase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size_epochs: usize,
    pub lr_factor: f64,
    /// `None` disables early stopping.
    pub early_stop_patience: Option<usize>,
    pub seed: u64,
    pub shuffle: bool,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            learning_rate: 1e-5,
            weight_decay: 1e-3,
            epochs: 40,
            batch_size: 16,
            step_size_epochs: 10,
            lr_factor: 0.1,
            early_stop_patience: Some(5),
            seed: 0,
            shuffle: true,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_epsilon: adam.epsilon,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("lr_factor", self.lr_factor),
            ("adam_epsilon", self.adam_epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight_decay must be non-negative, got {}", self.weight_decay)));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.batch_size == 0 || self.step_size_epochs == 0 {
            return Err(Error::Config("batch_size and step_size_epochs must be positive".into()));
        }
        if let Some(p) = self.early_stop_patience {
            if p == 0 {
                return Err(Error::Config("early_stop_patience must be positive".into()));
            }
            if self.epochs > 0 && p > self.epochs {
                return Err(Error::Config(format!(
                    "early_stop_patience {p} exceeds epochs {}",
                    self.epochs
                )));
            }
        }
        Ok(())
    }

    pub fn scheduler(&self) -> StepLr {
        StepLr {
            base: self.learning_rate,
            step_size: self.step_size_epochs,
            factor: self.lr_factor,
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_mse: f64,
    pub val_mse: f64,
    /// Validation MAE in °C.
    pub val_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub stopped_early: bool,
}

impl TrainHistory {
    /// One line per epoch.
    pub fn log_text(&self) -> String {
        let mut s = String::new();
        for r in &self.epochs {
            s.push_str(&format!(
                "epoch={} lr={:e} train_mse={:.6e} val_mse={:.6e} val_mae_c={:.4}\n",
                r.epoch, r.learning_rate, r.train_mse, r.val_mse, r.val_mae
            ));
        }
        s.push_str(&format!(
            "best_epoch={} best_val_mse={:.6e}{}\n",
            self.best_epoch,
            self.best_validation_loss,
            if self.stopped_early { " stopped_early" } else { "" }
        ));
        s
    }

    /// Write `history.json` and `train.log` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("history.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(&path, e))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        let path = dir.join("train.log");
        std::fs::write(&path, self.log_text()).map_err(|e| Error::io(&path, e))
    }
}

/// Tracks the best validation loss; strict improvement resets the counter.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: Option<usize>,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: Option<usize>) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Record a loss; returns true when it is a new best.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.patience.is_some_and(|p| self.since_best >= p)
    }

    pub fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }
}

struct Prepared {
    inputs: Vec<Tensor4<f32>>,
    targets: Vec<Tensor4<f32>>,
}

impl Prepared {
    fn new(model: &Model<f32>, samples: &[Sample], what: &str) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Input(format!("{what} set is empty")));
        }
        let c = model.config().in_channels;
        let norm = &model.config().norm_stats;
        let mut inputs = Vec::with_capacity(samples.len());
        let mut targets = Vec::with_capacity(samples.len());
        for s in samples {
            if s.input.channels() != c {
                return Err(Error::Dimension(format!(
                    "{what} sample for {} has {} channels, model expects {c}",
                    s.target_stamp,
                    s.input.channels()
                )));
            }
            let (h, w) = s.target.shape();
            let t = s.target.values().iter().map(|&v| norm.normalize(v) as f32).collect();
            targets.push(Tensor4::new([1, 1, h, w], t)?);
            inputs.push(s.input.clone());
        }
        Ok(Prepared { inputs, targets })
    }

    fn len(&self) -> usize {
        self.inputs.len()
    }

    fn batch(&self, idx: &[usize]) -> Result<(Tensor4<f32>, Tensor4<f32>)> {
        let x: Vec<&Tensor4<f32>> = idx.iter().map(|&i| &self.inputs[i]).collect();
        let y: Vec<&Tensor4<f32>> = idx.iter().map(|&i| &self.targets[i]).collect();
        Ok((Tensor4::stack(&x)?, Tensor4::stack(&y)?))
    }
}

/// Mean squared error (normalized units) and MAE in °C of eval-mode
/// predictions.
fn evaluate_set(model: &Model<f32>, data: &Prepared, batch_size: usize) -> Result<(f64, f64)> {
    let order: Vec<usize> = (0..data.len()).collect();
    let mut se = 0.0;
    let mut ae = 0.0;
    let mut n = 0usize;
    for chunk in order.chunks(batch_size) {
        let (x, y) = data.batch(chunk)?;
        let p = model.infer(&x)?;
        for (a, b) in p.data().iter().zip(y.data()) {
            let d = *a as f64 - *b as f64;
            se += d * d;
            ae += d.abs();
        }
        n += y.len();
    }
    let std = model.config().norm_stats.std;
    Ok((se / n as f64, ae / n as f64 * std))
}

/// Mean of minibatch losses of the current parameters with batch
/// statistics and nothing updated.
fn frozen_train_loss(model: &mut Model<f32>, data: &Prepared, batch_size: usize) -> Result<f64> {
    let order: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for chunk in order.chunks(batch_size) {
        let (x, y) = data.batch(chunk)?;
        let p = model.forward(&x, NormMode::TrainFrozen)?;
        total += mse_loss(&p, &y)? * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Train `model` in place; on return it holds the parameters of the epoch
/// with the lowest validation loss, which the checkpoint also carries.
pub fn train(
    model: &mut Model<f32>,
    train_samples: &[Sample],
    val_samples: &[Sample],
    cfg: &TrainConfig,
) -> Result<(Checkpoint, TrainHistory)> {
    train_observed(model, train_samples, val_samples, cfg, &mut |_| {})
}

/// [`train`] with a callback after every epoch record.
pub fn train_observed(
    model: &mut Model<f32>,
    train_samples: &[Sample],
    val_samples: &[Sample],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<(Checkpoint, TrainHistory)> {
    cfg.validate()?;
    let train_set = Prepared::new(model, train_samples, "training")?;
    let val_set = Prepared::new(model, val_samples, "validation")?;
    let sched = cfg.scheduler();
    let mut adam = AdamState::new(cfg.adam());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stopper = EarlyStopping::new(cfg.early_stop_patience);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let (val_mse, val_mae) = evaluate_set(model, &val_set, cfg.batch_size)?;
    let initial = EpochRecord {
        epoch: 0,
        learning_rate: sched.rate(0),
        train_mse: frozen_train_loss(model, &train_set, cfg.batch_size)?,
        val_mse,
        val_mae,
    };
    on_epoch(&initial);
    stopper.observe(0, val_mse);
    let mut best = model.snapshot();
    let mut records = vec![initial];
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        let lr = sched.rate(epoch - 1);
        adam.config.learning_rate = lr;
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (x, y) = train_set.batch(chunk)?;
            model.zero_grad();
            let p = model.forward(&x, NormMode::Train)?;
            let loss = mse_loss(&p, &y)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, step, loss });
            }
            model.backward(&mse_loss_grad(&p, &y)?)?;
            let mut params: Vec<&mut Param<f32>> = model.params_mut().into_iter().map(|(_, p)| p).collect();
            adam_step(&mut params, &mut adam)?;
            total += loss * chunk.len() as f64;
        }
        let (val_mse, val_mae) = evaluate_set(model, &val_set, cfg.batch_size)?;
        if !val_mse.is_finite() {
            return Err(Error::Divergence {
                epoch,
                step: order.len().div_ceil(cfg.batch_size),
                loss: val_mse,
            });
        }
        let record = EpochRecord {
            epoch,
            learning_rate: lr,
            train_mse: total / train_set.len() as f64,
            val_mse,
            val_mae,
        };
        on_epoch(&record);
        records.push(record);
        if stopper.observe(epoch, val_mse) {
            best = model.snapshot();
        }
        if stopper.should_stop() {
            stopped_early = true;
            break;
        }
    }

    model.restore(&best)?;
    let (best_epoch, best_validation_loss) = stopper.best();
    let history = TrainHistory {
        epochs: records,
        best_epoch,
        best_validation_loss,
        stopped_early,
    };
    let provenance = Provenance {
        dataset_ids: Vec::new(),
        epochs_run: history.epochs.len() - 1,
        best_epoch,
        best_validation_loss: Some(best_validation_loss),
        parent: None,
    };
    Ok((Checkpoint::from_model(model, Some(cfg.clone()), provenance), history))
}

/// Continue training from `checkpoint` on new samples, assembled for
/// `case` with the checkpoint's normalization statistics.
pub fn finetune(
    checkpoint: &Checkpoint,
    case: &TemporalCase,
    train_samples: &[Sample],
    val_samples: &[Sample],
    cfg: &TrainConfig,
) -> Result<(Checkpoint, TrainHistory)> {
    if checkpoint.case() != *case {
        return Err(Error::Config(format!(
            "checkpoint was trained for case {}, samples are for {case}",
            checkpoint.case()
        )));
    }
    let mut model = checkpoint.to_model()?;
    let (mut out, history) = train(&mut model, train_samples, val_samples, cfg)?;
    let parent = &checkpoint.manifest.provenance;
    out.manifest.provenance.dataset_ids = parent.dataset_ids.clone();
    out.manifest.provenance.parent = Some(format!(
        "{} best_epoch={} best_val_mse={:?}",
        parent.dataset_ids.join("+"),
        parent.best_epoch,
        parent.best_validation_loss
    ));
    Ok((out, history))
}

/// Forecast for `target` in °C from the history in `series`. `target` may
/// be the month right after the series ends.
pub fn predict(model: &Model<f32>, series: &GridSeries, elevation: Option<&GridField>, target: MonthStamp) -> Result<GridField> {
    Ok(predict_many(model, series, elevation, &[target])?.remove(0))
}

/// Batched [`predict`].
pub fn predict_many(
    model: &Model<f32>,
    series: &GridSeries,
    elevation: Option<&GridField>,
    targets: &[MonthStamp],
) -> Result<Vec<GridField>> {
    let cfg = model.config();
    let elevation = match (cfg.elevation, elevation) {
        (true, Some(e)) => Some(e),
        (true, None) => return Err(Error::Input("model needs an elevation field".into())),
        (false, _) => None,
    };
    let need = max_offset(&cfg.case_id);
    let mut inputs = Vec::with_capacity(targets.len());
    for &stamp in targets {
        let k = month_index(series.start(), stamp).map_err(|_| history_error(&cfg.case_id, stamp, series))?;
        if k < need || k > series.len() {
            return Err(history_error(&cfg.case_id, stamp, series));
        }
        inputs.push(assemble_input(series, elevation, &cfg.norm_stats, &cfg.case_id, k)?);
    }
    let (h, w) = series.shape();
    let mut out = Vec::with_capacity(targets.len());
    for chunk in inputs.chunks(16) {
        let refs: Vec<&Tensor4<f32>> = chunk.iter().collect();
        let p = model.infer(&Tensor4::stack(&refs)?)?;
        for n in 0..chunk.len() {
            let values = p
                .sample(n)
                .iter()
                .map(|&z| cfg.norm_stats.denormalize(z as f64))
                .collect();
            out.push(GridField::new(h, w, values)?);
        }
    }
    Ok(out)
}

fn history_error(case: &TemporalCase, stamp: MonthStamp, series: &GridSeries) -> Error {
    Error::InsufficientHistory(format!(
        "case {case} needs {} months before {stamp}; series covers {}",
        max_offset(case),
        series.range()
    ))
}
