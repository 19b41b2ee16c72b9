//! Fold ensembling, the prediction smoother and evaluation metrics.

use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::{InteractionLabel, NUM_CLASSES};
use crate::error::{Error, Result};

/// Points on each side of the smoothed position.
pub const SMOOTH_WINDOW: usize = 20;

pub fn check_labels(labels: &[usize]) -> Result<()> {
    match labels.iter().position(|&l| l >= NUM_CLASSES) {
        Some(i) => Err(Error::domain(format!(
            "label {} at position {i} outside [0, {}]",
            labels[i],
            NUM_CLASSES - 1
        ))),
        None => Ok(()),
    }
}

/// Most frequent label; ties go to the lowest class index.
pub fn mode_of<'a>(labels: impl IntoIterator<Item = &'a usize>) -> usize {
    let mut counts = [0usize; NUM_CLASSES];
    for &l in labels {
        counts[l] += 1;
    }
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

/// Per-position plurality vote across fold predictions.
pub fn ensemble_mode(per_fold: &[Vec<usize>]) -> Result<Vec<usize>> {
    let first = per_fold.first().ok_or_else(|| Error::domain("ensemble needs at least one fold"))?;
    let t = first.len();
    for (k, f) in per_fold.iter().enumerate() {
        if f.len() != t {
            return Err(Error::domain(format!("fold {k} has {} labels, fold 0 has {t}", f.len())));
        }
        check_labels(f)?;
    }
    let mut column = Vec::with_capacity(per_fold.len());
    Ok((0..t)
        .map(|i| {
            column.clear();
            column.extend(per_fold.iter().map(|f| f[i]));
            mode_of(&column)
        })
        .collect())
}

/// Single non-causal pass over a frozen copy: a position with at least
/// `window` labels on both sides takes the common mode of the preceding and
/// succeeding windows when those two modes agree; every other position is
/// copied.
pub fn smooth_with(labels: &[usize], window: usize) -> Vec<usize> {
    let mut out = labels.to_vec();
    if window == 0 || labels.len() < 2 * window + 1 {
        return out;
    }
    for i in window..labels.len() - window {
        let before = mode_of(&labels[i - window..i]);
        let after = mode_of(&labels[i + 1..=i + window]);
        if before == after {
            out[i] = before;
        }
    }
    out
}

pub fn smooth(labels: &[usize]) -> Vec<usize> {
    smooth_with(labels, SMOOTH_WINDOW)
}

/// Lengths of maximal runs of equal labels.
pub fn run_lengths(labels: &[usize]) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        let j = labels[i..].iter().position(|&l| l != labels[i]).map_or(labels.len(), |p| i + p);
        runs.push(j - i);
        i = j;
    }
    runs
}

/// Number of runs shorter than `min_len`.
pub fn short_runs(labels: &[usize], min_len: usize) -> usize {
    run_lengths(labels).into_iter().filter(|&r| r < min_len).count()
}

/// Per-fold, ensembled and smoothed labels of one trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionTrace {
    pub per_fold: Vec<Vec<usize>>,
    pub ensembled: Vec<usize>,
    pub smoothed: Vec<usize>,
    pub truth: Option<Vec<usize>>,
}

impl PredictionTrace {
    pub fn from_folds(per_fold: Vec<Vec<usize>>, truth: Option<Vec<usize>>) -> Result<Self> {
        let ensembled = ensemble_mode(&per_fold)?;
        let smoothed = smooth(&ensembled);
        let trace = Self { per_fold, ensembled, smoothed, truth };
        trace.validate()?;
        Ok(trace)
    }

    pub fn len(&self) -> usize {
        self.ensembled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ensembled.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.len();
        let mut series: Vec<&Vec<usize>> = self.per_fold.iter().collect();
        series.push(&self.ensembled);
        series.push(&self.smoothed);
        if let Some(tr) = &self.truth {
            series.push(tr);
        }
        if self.per_fold.is_empty() {
            return Err(Error::domain("trace has no fold predictions"));
        }
        for s in series {
            if s.len() != t {
                return Err(Error::domain(format!("trace series of length {} in a trace of length {t}", s.len())));
            }
            check_labels(s)?;
        }
        Ok(())
    }
}

/// `counts[true][pred]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: Vec<Vec<u64>>,
}

impl Default for Confusion {
    fn default() -> Self {
        Self {
            counts: vec![vec![0; NUM_CLASSES]; NUM_CLASSES],
        }
    }
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn add(&mut self, truth: &[usize], pred: &[usize]) -> Result<()> {
        if truth.len() != pred.len() {
            return Err(Error::domain(format!("{} true labels vs {} predictions", truth.len(), pred.len())));
        }
        check_labels(truth)?;
        check_labels(pred)?;
        for (&t, &p) in truth.iter().zip(pred) {
            self.counts[t][p] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Confusion) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    /// CSV grid with class names on both axes (rows = true, columns = predicted).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\pred");
        for l in InteractionLabel::ALL {
            s.push(',');
            s.push_str(l.name());
        }
        s.push('\n');
        for (l, row) in InteractionLabel::ALL.iter().zip(&self.counts) {
            s.push_str(l.name());
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

pub fn confusion(truth: &[usize], pred: &[usize]) -> Result<Confusion> {
    let mut c = Confusion::default();
    c.add(truth, pred)?;
    Ok(c)
}

/// Accuracy plus support-weighted precision, recall and F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub total: u64,
    pub confusion: Confusion,
}

pub fn metrics(conf: &Confusion) -> MetricsReport {
    let total = conf.total();
    let n = NUM_CLASSES;
    let trace: u64 = (0..n).map(|i| conf.counts[i][i]).sum();
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    for c in 0..n {
        let support: u64 = conf.counts[c].iter().sum();
        if support == 0 {
            continue;
        }
        let predicted: u64 = (0..n).map(|i| conf.counts[i][c]).sum();
        let tp = conf.counts[c][c];
        let pc = ratio(tp, predicted);
        let rc = ratio(tp, support);
        let fc = if pc + rc > 0.0 { 2.0 * pc * rc / (pc + rc) } else { 0.0 };
        let w = support as f64;
        p += w * pc;
        r += w * rc;
        f += w * fc;
    }
    let tot = total.max(1) as f64;
    MetricsReport {
        accuracy: ratio(trace, total),
        precision: p / tot,
        recall: r / tot,
        f1: f / tot,
        total,
        confusion: conf.clone(),
    }
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        format!(
            "metric,value\naccuracy,{}\nprecision,{}\nrecall,{}\nf1,{}\npackets,{}\n",
            self.accuracy, self.precision, self.recall, self.f1, self.total
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "packets    {}", self.total)?;
        writeln!(f, "accuracy   {:.4}", self.accuracy)?;
        writeln!(f, "precision  {:.4}", self.precision)?;
        writeln!(f, "recall     {:.4}", self.recall)?;
        write!(f, "f1         {:.4}", self.f1)
    }
}
