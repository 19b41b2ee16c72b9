//! Whole-pipeline helpers shared by the CLI and tests: trial preprocessing
//! and ensemble classification.

use std::borrow::Borrow;
use std::collections::BTreeMap;

use log::warn;
use rayon::prelude::*;

use crate::domain::{InteractionLabel, Trial};
use crate::error::{Error, Result};
use crate::features::{
    normalize_length, robust_fit, robust_transform, split_dataset, trial_features, FeatureFrame, RobustScalerParams,
    SplitSpec,
};
use crate::model::AttentionBiGru;
use crate::postprocess::PredictionTrace;

/// Scaled per-trial features with the scaler and split they were built with.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub frames: BTreeMap<String, FeatureFrame>,
    pub scaler: RobustScalerParams,
    pub split: SplitSpec,
}

/// Length-normalize and extract features for one trial.
pub fn raw_features(trial: &Trial, target_len: usize) -> Result<FeatureFrame> {
    trial_features(&normalize_length(trial, target_len)?)
}

/// Normalize, extract, split (stratified by class) and scale a labeled
/// dataset. The scaler is fitted on the training and validation trials only.
pub fn preprocess(trials: &[Trial], target_len: usize, folds: usize, seed: u64) -> Result<Preprocessed> {
    let mut ids = std::collections::HashSet::new();
    let mut entries: Vec<(String, InteractionLabel)> = Vec::with_capacity(trials.len());
    for t in trials {
        let class = t
            .class()
            .ok_or_else(|| Error::domain(format!("trial {} has no interaction class", t.trial_id)))?;
        if !ids.insert(t.trial_id.as_str()) {
            return Err(Error::domain(format!("duplicate trial id {}", t.trial_id)));
        }
        entries.push((t.trial_id.clone(), class));
    }
    let raw: Vec<FeatureFrame> = trials
        .par_iter()
        .map(|t| raw_features(t, target_len).map_err(|e| Error::domain(format!("trial {}: {e}", t.trial_id))))
        .collect::<Result<_>>()?;
    let mut raw: BTreeMap<String, FeatureFrame> = entries.iter().map(|(id, _)| id.clone()).zip(raw).collect();
    let split = split_dataset(&entries, folds, seed)?;
    let fit = split.fit_ids();
    let scaler = robust_fit(fit.iter().map(|id| &raw[id]))?;
    if scaler.degenerate.iter().any(|&d| d) {
        let cols: Vec<usize> = (0..scaler.len()).filter(|&c| scaler.degenerate[c]).collect();
        warn!("{} feature columns have zero IQR and pass through unscaled: {cols:?}", cols.len());
    }
    let frames = std::mem::take(&mut raw)
        .into_iter()
        .map(|(id, f)| robust_transform(&f, &scaler).map(|s| (id, s)))
        .collect::<Result<_>>()?;
    Ok(Preprocessed { frames, scaler, split })
}

/// Run every model on a scaled frame and post-process: one label column per
/// model, the mode ensemble and the smoothed ensemble. Truth comes from the
/// frame's labels when present.
pub fn classify_frame<M: Borrow<AttentionBiGru>>(models: &[M], frame: &FeatureFrame) -> Result<PredictionTrace> {
    if models.is_empty() {
        return Err(Error::domain("no trained models"));
    }
    let per_fold = models
        .iter()
        .map(|m| m.borrow().predict_labels(frame))
        .collect::<Result<Vec<_>>>()?;
    PredictionTrace::from_folds(per_fold, frame.label_indices())
}
