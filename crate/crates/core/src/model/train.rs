use std::collections::BTreeMap;
use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::features::{one_hot, FeatureFrame, SplitSpec};
use crate::model::arch::ArchConfig;
use crate::model::network::{argmax, AttentionBiGru, Mode};
use crate::nn::{cross_entropy, early_stopping, reduce_lr_on_plateau, Adam, Parameterized, PlateauConfig, Tensor};
use crate::postprocess::{metrics, Confusion};
use crate::rng::{derive_seed, SimRng};

pub const TRAIN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub version: u32,
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub folds: usize,
    pub seed: u64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub min_lr: f64,
    pub early_stopping_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            version: TRAIN_FORMAT_VERSION,
            epochs: 300,
            batch: 12,
            learning_rate: 1e-3,
            folds: 4,
            seed: 0,
            plateau_factor: 0.5,
            plateau_patience: 10,
            min_lr: 1e-6,
            early_stopping_patience: 30,
        }
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        Self {
            batch: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != TRAIN_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "training config version {} (expected {TRAIN_FORMAT_VERSION})",
                self.version
            )));
        }
        if self.epochs == 0 {
            return Err(Error::domain("training needs at least 1 epoch"));
        }
        if self.batch == 0 {
            return Err(Error::domain("batch must be >= 1"));
        }
        if self.folds < 2 {
            return Err(Error::domain("folds must be >= 2"));
        }
        if !(self.learning_rate > 0.0) || !(self.min_lr >= 0.0) || !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return Err(Error::domain("learning rate, min_lr and plateau factor must be positive (factor <= 1)"));
        }
        Ok(())
    }

    pub fn plateau(&self) -> PlateauConfig {
        PlateauConfig {
            factor: self.plateau_factor,
            patience: self.plateau_patience,
            min_lr: self.min_lr,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(format!("training config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
        Self::from_toml(&text).map_err(|e| e.at(path))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("training config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_precision: f64,
    pub val_recall: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
    /// Epoch whose weights were kept (highest validation accuracy).
    pub best_epoch: usize,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,accuracy,precision,recall,val_loss,val_accuracy,val_precision,val_recall,lr\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.epoch, r.loss, r.accuracy, r.precision, r.recall, r.val_loss, r.val_accuracy, r.val_precision, r.val_recall, r.lr
            ));
        }
        s
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.records.get(self.best_epoch)
    }
}

pub struct TrainedFold {
    pub fold: usize,
    pub model: AttentionBiGru,
    pub history: History,
}

fn labels_of(frame: &FeatureFrame) -> Result<Vec<usize>> {
    frame.label_indices().ok_or_else(|| Error::domain("training frames must be labeled"))
}

/// Stack frames into a (B, T, F) input and (B, T, classes) one-hot targets.
fn stack(frames: &[&FeatureFrame]) -> Result<(Tensor, Tensor, Vec<usize>)> {
    let (t, f) = (frames[0].rows, frames[0].cols);
    let mut x = Vec::with_capacity(frames.len() * t * f);
    let mut labels = Vec::with_capacity(frames.len() * t);
    for fr in frames {
        if fr.rows != t || fr.cols != f {
            return Err(Error::domain(format!("frame {}x{} in a batch of {t}x{f}", fr.rows, fr.cols)));
        }
        x.extend_from_slice(&fr.data);
        labels.extend(labels_of(fr)?);
    }
    let b = frames.len();
    Ok((
        Tensor::from_vec(&[b, t, f], x)?,
        Tensor::from_vec(&[b, t, NUM_CLASSES], one_hot(&labels)?)?,
        labels,
    ))
}

struct Scores {
    loss: f64,
    accuracy: f64,
    precision: f64,
    recall: f64,
}

fn scores(loss_sum: f64, rows: usize, conf: &Confusion) -> Scores {
    let m = metrics(conf);
    Scores {
        loss: loss_sum / rows.max(1) as f64,
        accuracy: m.accuracy,
        precision: m.precision,
        recall: m.recall,
    }
}

fn add_predictions(conf: &mut Confusion, probs: &Tensor, labels: &[usize]) -> Result<()> {
    let pred: Vec<usize> = probs.data.chunks(NUM_CLASSES).map(argmax).collect();
    conf.add(labels, &pred)
}

/// Loss and metrics with dropout off.
pub fn evaluate_frames(model: &AttentionBiGru, frames: &[&FeatureFrame], batch: usize) -> Result<(f64, Confusion)> {
    let mut conf = Confusion::default();
    let (mut loss_sum, mut rows) = (0.0, 0);
    for chunk in frames.chunks(batch.max(1)) {
        let (x, y, labels) = stack(chunk)?;
        let (probs, _) = model.forward(&x, Mode::Inference)?;
        loss_sum += cross_entropy(&probs, &y)? * labels.len() as f64;
        rows += labels.len();
        add_predictions(&mut conf, &probs, &labels)?;
    }
    Ok((loss_sum / rows.max(1) as f64, conf))
}

/// Train one fold with Adam, plateau LR reduction and early stopping on
/// validation accuracy; the best-epoch weights are restored.
pub fn train_fold(
    mut model: AttentionBiGru,
    train: &[&FeatureFrame],
    val: &[&FeatureFrame],
    cfg: &TrainConfig,
    fold: usize,
) -> Result<TrainedFold> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::domain(format!("fold {fold}: training and validation sets must be non-empty")));
    }
    let mut opt = Adam::new(cfg.learning_rate);
    let mut lr = cfg.learning_rate;
    let mut history = History::default();
    let mut best: Option<(f64, AttentionBiGru)> = None;
    let (mut val_losses, mut val_accs) = (Vec::new(), Vec::new());
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.epochs {
        SimRng::derived(cfg.seed, &[fold as u64, epoch as u64, 0x5EED]).shuffle(&mut order);
        let mut conf = Confusion::default();
        let (mut loss_sum, mut rows) = (0.0, 0);
        opt.lr = lr;
        for (b, idx) in order.chunks(cfg.batch).enumerate() {
            let frames: Vec<&FeatureFrame> = idx.iter().map(|&i| train[i]).collect();
            let (x, y, labels) = stack(&frames)?;
            model.zero_grad();
            let mode = Mode::Training {
                seed: derive_seed(cfg.seed, &[fold as u64, epoch as u64, b as u64]),
            };
            let (loss, probs) = model.loss_and_grad(&x, &y, mode)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("fold {fold}, epoch {epoch}, batch {b}: loss is {loss}")));
            }
            opt.step(model.params_mut())?;
            loss_sum += loss * labels.len() as f64;
            rows += labels.len();
            add_predictions(&mut conf, &probs, &labels)?;
        }
        let tr = scores(loss_sum, rows, &conf);
        let (val_loss, val_conf) = evaluate_frames(&model, val, cfg.batch)?;
        let va = scores(val_loss, 1, &val_conf);
        if !val_loss.is_finite() {
            return Err(Error::Diverged(format!("fold {fold}, epoch {epoch}: validation loss is {val_loss}")));
        }
        let record = EpochRecord {
            epoch,
            loss: tr.loss,
            accuracy: tr.accuracy,
            precision: tr.precision,
            recall: tr.recall,
            val_loss: va.loss,
            val_accuracy: va.accuracy,
            val_precision: va.precision,
            val_recall: va.recall,
            lr,
        };
        info!(
            "fold {fold} epoch {epoch:>3}: loss {:.4} acc {:.4} | val loss {:.4} acc {:.4} | lr {:.2e}",
            record.loss, record.accuracy, record.val_loss, record.val_accuracy, lr
        );
        history.records.push(record);
        if best.as_ref().is_none_or(|(acc, _)| va.accuracy > *acc) {
            best = Some((va.accuracy, model.clone()));
        }
        val_losses.push(va.loss);
        val_accs.push(va.accuracy);
        lr = reduce_lr_on_plateau(&val_losses, lr, &cfg.plateau());
        let stop = early_stopping(&val_accs, cfg.early_stopping_patience);
        history.best_epoch = stop.best_epoch;
        if stop.stop {
            info!("fold {fold}: early stop after epoch {epoch}, best epoch {}", stop.best_epoch);
            break;
        }
    }
    let (_, model) = best.expect("at least one epoch ran");
    Ok(TrainedFold { fold, model, history })
}

/// Train one model per fold; fold `k` validates on fold k's trials and
/// trains on the rest. Frames are looked up by trial id.
pub fn train_kfold(
    frames: &BTreeMap<String, FeatureFrame>,
    split: &SplitSpec,
    arch: &ArchConfig,
    cfg: &TrainConfig,
) -> Result<Vec<TrainedFold>> {
    cfg.validate()?;
    if split.folds.len() != cfg.folds {
        return Err(Error::domain(format!(
            "split has {} fold assignments, training expects {}",
            split.folds.len(),
            cfg.folds
        )));
    }
    let lookup = |ids: &[String]| -> Result<Vec<&FeatureFrame>> {
        ids.iter()
            .map(|id| frames.get(id).ok_or_else(|| Error::domain(format!("no features for trial {id}"))))
            .collect()
    };
    let jobs: Vec<(usize, Vec<&FeatureFrame>, Vec<&FeatureFrame>)> = (0..cfg.folds)
        .map(|k| {
            let (tr, va) = split.fold_sets(k)?;
            Ok((k, lookup(&tr)?, lookup(&va)?))
        })
        .collect::<Result<_>>()?;
    jobs.into_par_iter()
        .map(|(k, tr, va)| {
            let model = AttentionBiGru::build(arch, derive_seed(cfg.seed, &[k as u64]))?;
            train_fold(model, &tr, &va, cfg, k)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::InteractionLabel;

    fn arch() -> ArchConfig {
        ArchConfig {
            seq_len: 8,
            feature_dim: 3,
            bigru1_units: 4,
            bigru2_units: 4,
            heads: 1,
            key_dim: 2,
            dense_units: 4,
            ..ArchConfig::default()
        }
    }

    /// Class determined by the sign of feature 0.
    fn frame(class: InteractionLabel, seed: u64) -> FeatureFrame {
        let mut rng = SimRng::new(seed);
        let s = if class.index() == 0 { -1.0 } else { 1.0 };
        let data = (0..24).map(|i| if i % 3 == 0 { s + 0.1 * rng.gaussian() } else { rng.gaussian() }).collect();
        FeatureFrame::new(8, 3, data, Some(vec![class; 8])).unwrap()
    }

    #[test]
    fn learns_a_separable_toy_problem_deterministically() {
        let classes = [InteractionLabel::SteadyState, InteractionLabel::Pushing];
        let train: Vec<FeatureFrame> = (0..8).map(|i| frame(classes[i % 2], i as u64)).collect();
        let val: Vec<FeatureFrame> = (0..4).map(|i| frame(classes[i % 2], 100 + i as u64)).collect();
        let tr: Vec<&FeatureFrame> = train.iter().collect();
        let va: Vec<&FeatureFrame> = val.iter().collect();
        let cfg = TrainConfig {
            epochs: 25,
            batch: 4,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let m = AttentionBiGru::build(&arch(), 1).unwrap();
        let a = train_fold(m.clone(), &tr, &va, &cfg, 0).unwrap();
        let best = a.history.best().unwrap().val_accuracy;
        assert!(best >= 0.99, "{}", a.history.to_csv());
        let max = a.history.records.iter().map(|r| r.val_accuracy).fold(0.0, f64::max);
        assert_eq!(best, max);
        let (_, conf) = evaluate_frames(&a.model, &va, 4).unwrap();
        assert_eq!(metrics(&conf).accuracy, best);

        let b = train_fold(m, &tr, &va, &cfg, 0).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let m = AttentionBiGru::build(&arch(), 1).unwrap();
        let f = frame(InteractionLabel::Pushing, 0);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(train_fold(m.clone(), &[&f], &[&f], &cfg, 0).is_err());
        assert!(train_fold(m, &[], &[&f], &TrainConfig::default(), 0).is_err());
    }

    #[test]
    fn config_toml() {
        let c = TrainConfig::desk();
        assert_eq!(TrainConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert!(TrainConfig::from_toml("version = 2").is_err());
    }
}
