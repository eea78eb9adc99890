use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FilterArch, FilterError, FilterInput, FilterModel};
use crate::geom::Vec2;
use crate::ndgrad::{Adam, AdamConfig, Graph};

/// One supervised example: what the filter sees and where the evader is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub input: FilterInput,
    pub target: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterTrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for FilterTrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 128,
            max_epochs: 200,
            patience: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nll: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedFilter {
    /// Parameters from the epoch with the lowest validation NLL.
    pub model: FilterModel,
    pub curve: Vec<EpochLoss>,
    pub best_epoch: usize,
}

impl TrainedFilter {
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("epoch,train_nll,val_nll\n");
        for e in &self.curve {
            s.push_str(&format!("{},{},{}\n", e.epoch, e.train_nll, e.val_nll));
        }
        s
    }
}

/// Mean NLL of `model` over `pairs`.
pub fn mean_nll(model: &FilterModel, pairs: &[TrainingPair]) -> Result<f64, FilterError> {
    if pairs.is_empty() {
        return Err(FilterError::Config("no pairs to evaluate".into()));
    }
    let mut total = 0.0;
    for chunk in pairs.chunks(1024) {
        let inputs: Vec<_> = chunk.iter().map(|p| p.input).collect();
        let targets: Vec<_> = chunk.iter().map(|p| p.target).collect();
        let mut g = Graph::new();
        let l = model.nll_graph(&mut g, &inputs, &targets)?;
        total += g.value(l).data()[0] * chunk.len() as f64;
    }
    Ok(total / pairs.len() as f64)
}

/// Adam on the mean mixture NLL with early stopping on `val`. When `val`
/// is empty the training loss drives early stopping instead.
pub fn train_filter(
    arch: FilterArch,
    train: &[TrainingPair],
    val: &[TrainingPair],
    cfg: &FilterTrainConfig,
) -> Result<TrainedFilter, FilterError> {
    let model = FilterModel::new(arch, cfg.seed)?;
    continue_training(model, train, val, cfg)
}

/// Same as [`train_filter`] starting from existing parameters.
pub fn continue_training(
    mut model: FilterModel,
    train: &[TrainingPair],
    val: &[TrainingPair],
    cfg: &FilterTrainConfig,
) -> Result<TrainedFilter, FilterError> {
    if train.is_empty() {
        return Err(FilterError::Config("training set is empty".into()));
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 || !(cfg.lr > 0.0) {
        return Err(FilterError::Config("batch size, epochs and lr must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_F117);
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::new();
    let mut best = (f64::INFINITY, 0, model.params().clone());
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let inputs: Vec<_> = batch.iter().map(|&i| train[i].input).collect();
            let targets: Vec<_> = batch.iter().map(|&i| train[i].target).collect();
            model.params_mut().zero_grad();
            let mut g = Graph::new();
            let loss = model.nll_graph(&mut g, &inputs, &targets)?;
            let value = g.value(loss).data()[0];
            if !value.is_finite() {
                return Err(FilterError::Numeric("loss"));
            }
            sum += value * batch.len() as f64;
            g.backward(loss)?.accumulate_into(model.params_mut());
            adam.step(model.params_mut())?;
        }
        let train_nll = sum / train.len() as f64;
        let val_nll = if val.is_empty() { train_nll } else { mean_nll(&model, val)? };
        curve.push(EpochLoss { epoch, train_nll, val_nll });
        log::debug!("filter epoch {epoch}: train {train_nll:.4} val {val_nll:.4}");
        if val_nll < best.0 {
            best = (val_nll, epoch, model.params().clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let (_, best_epoch, params) = best;
    let model = FilterModel::from_parts(model.arch().clone(), params)?;
    Ok(TrainedFilter {
        model,
        curve,
        best_epoch,
    })
}
