//! Trial → fixed-length scaled feature matrices, targets and dataset splits.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::domain::{CsiPacket, Dims, InteractionLabel, Trial, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SimRng};

pub const DEFAULT_SEQ_LEN: usize = 1560;
pub const DEFAULT_FOLDS: usize = 4;

/// T × F feature matrix (row-major) with optional per-packet labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub labels: Option<Vec<InteractionLabel>>,
    pub scaler_applied: bool,
}

impl FeatureFrame {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>, labels: Option<Vec<InteractionLabel>>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!("{} values for a {rows}x{cols} frame", data.len())));
        }
        if let Some(l) = &labels {
            if l.len() != rows {
                return Err(Error::shape(format!("{} labels for {rows} rows", l.len())));
            }
        }
        Ok(Self { rows, cols, data, labels, scaler_applied: false })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn label_indices(&self) -> Option<Vec<usize>> {
        self.labels.as_ref().map(|l| l.iter().map(|x| x.index()).collect())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Column names of the per-packet feature layout.
pub fn feature_names(dims: Dims) -> Vec<String> {
    let mut names = vec!["time_diff".to_string(), "noise".into(), "agc".into()];
    names.extend((0..dims.n_rx).map(|r| format!("rssi_{r}")));
    for kind in ["mag", "phase"] {
        for t in 0..dims.n_tx {
            for r in 0..dims.n_rx {
                for s in 0..dims.n_sc {
                    names.push(format!("{kind}_t{t}_r{r}_s{s}"));
                }
            }
        }
    }
    names
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PadSide {
    Front,
    Back,
}

fn leading_steady(labels: &[InteractionLabel]) -> usize {
    labels.iter().take_while(|l| l.is_steady()).count()
}

fn trailing_steady(labels: &[InteractionLabel]) -> usize {
    labels.iter().rev().take_while(|l| l.is_steady()).count()
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Clip or pad a trial to exactly `target_len` packets.
///
/// Clipping removes packets from the outer edge of the steady-state segment;
/// padding replicates the steady-side edge packet, extrapolating timestamps at
/// the median inter-arrival time and labeling the copies steady-state.
/// Unlabeled trials are clipped/padded at the tail.
pub fn normalize_length(trial: &Trial, target_len: usize) -> Result<Trial> {
    if trial.is_empty() {
        return Err(Error::domain("cannot normalize an empty trial"));
    }
    if target_len == 0 {
        return Err(Error::domain("target length must be >= 1"));
    }
    let n = trial.len();
    let mut out = trial.clone();
    if n == target_len {
        return Ok(out);
    }
    let labels = trial.labels();

    if n > target_len {
        let mut excess = n - target_len;
        let (mut front, mut back) = (0usize, 0usize);
        match &labels {
            None => back = excess,
            Some(l) => {
                let (lead, trail) = (leading_steady(l), trailing_steady(l));
                if lead == 0 && trail == 0 {
                    if l.iter().all(|x| !x.is_steady()) {
                        warn!("trial {}: no steady-state packets; clipping {excess} from the start", trial.trial_id);
                    } else {
                        warn!("trial {}: steady-state only in the interior; clipping {excess} from the start", trial.trial_id);
                    }
                    front = excess;
                } else {
                    // Outermost steady edge first (the beginning when both ends are steady).
                    let order: [(usize, PadSide); 2] = if lead > 0 {
                        [(lead, PadSide::Front), (trail, PadSide::Back)]
                    } else {
                        [(trail, PadSide::Back), (lead, PadSide::Front)]
                    };
                    for (run, side) in order {
                        let take = excess.min(run.min(n - front - back));
                        match side {
                            PadSide::Front => front += take,
                            PadSide::Back => back += take,
                        }
                        excess -= take;
                    }
                    if excess > 0 {
                        warn!(
                            "trial {}: steady segment too short, clipping {excess} interaction packets",
                            trial.trial_id
                        );
                        match order[0].1 {
                            PadSide::Front => front += excess,
                            PadSide::Back => back += excess,
                        }
                    }
                }
            }
        }
        out.packets = trial.packets[front..n - back].to_vec();
        return Ok(out);
    }

    let deficit = target_len - n;
    let side = match &labels {
        None => PadSide::Back,
        Some(l) if l[0].is_steady() => PadSide::Front,
        Some(l) if l[n - 1].is_steady() => PadSide::Back,
        Some(_) => {
            warn!("trial {}: no steady-state edge; padding the tail", trial.trial_id);
            PadSide::Back
        }
    };
    let gaps: Vec<f64> = trial.packets.windows(2).map(|w| w[1].timestamp - w[0].timestamp).collect();
    let dt = median(gaps);
    let pad_label = labels.as_ref().map(|_| InteractionLabel::SteadyState);
    let replicate = |edge: &CsiPacket, k: usize, sign: f64| CsiPacket {
        timestamp: edge.timestamp + sign * k as f64 * dt,
        label: pad_label,
        ..edge.clone()
    };
    match side {
        PadSide::Front => {
            let edge = &trial.packets[0];
            let mut packets: Vec<CsiPacket> = (1..=deficit).rev().map(|k| replicate(edge, k, -1.0)).collect();
            packets.extend_from_slice(&trial.packets);
            out.packets = packets;
        }
        PadSide::Back => {
            let edge = &trial.packets[n - 1];
            out.packets.extend((1..=deficit).map(|k| replicate(edge, k, 1.0)));
        }
    }
    Ok(out)
}

/// `diff[0] = 0`, `diff[i] = t[i] - t[i-1]`.
pub fn packet_time_diffs(trial: &Trial) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(trial.len());
    let mut prev = None;
    for (i, p) in trial.packets.iter().enumerate() {
        let d = match prev {
            None => 0.0,
            Some(t) => p.timestamp - t,
        };
        if d < 0.0 {
            return Err(Error::domain(format!("timestamp decreases at packet {i}")));
        }
        out.push(d);
        prev = Some(p.timestamp);
    }
    Ok(out)
}

/// Principal value in (−π, π].
pub fn principal_phase(theta: f64) -> f64 {
    if theta <= -PI {
        theta + 2.0 * PI
    } else {
        theta
    }
}

/// `[time_diff, noise, agc, rssi..., |csi|..., arg(csi)...]`, CSI flattened
/// row-major over (tx, rx, subcarrier).
pub fn packet_to_features(p: &CsiPacket, dims: Dims, time_diff: f64) -> Result<Vec<f64>> {
    if p.csi.dims != dims || p.csi.data.len() != dims.len() {
        return Err(Error::shape(format!("packet CSI {} does not match {dims}", p.csi.dims)));
    }
    if p.rssi.len() != dims.n_rx {
        return Err(Error::shape(format!("{} RSSI values for {} receive antennas", p.rssi.len(), dims.n_rx)));
    }
    let mut v = Vec::with_capacity(dims.feature_dim());
    v.extend([time_diff, p.noise, p.agc]);
    v.extend_from_slice(&p.rssi);
    v.extend(p.csi.data.iter().map(|c| c.norm()));
    v.extend(p.csi.data.iter().map(|c| principal_phase(c.arg())));
    Ok(v)
}

/// Unscaled features for every packet of a trial.
pub fn trial_features(trial: &Trial) -> Result<FeatureFrame> {
    let diffs = packet_time_diffs(trial)?;
    let cols = trial.dims.feature_dim();
    let mut data = Vec::with_capacity(trial.len() * cols);
    for (p, d) in trial.packets.iter().zip(diffs) {
        data.extend(packet_to_features(p, trial.dims, d)?);
    }
    FeatureFrame::new(trial.len(), cols, data, trial.labels())
}

/// Quantile of sorted data by linear interpolation between order statistics:
/// `h = (n-1) q`, `x[⌊h⌋] + (h - ⌊h⌋)(x[⌊h⌋+1] - x[⌊h⌋])`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustScalerParams {
    pub median: Vec<f64>,
    /// Q3 − Q1 per column.
    pub iqr: Vec<f64>,
    /// Columns whose IQR is zero; they are centered and divided by 1.
    pub degenerate: Vec<bool>,
}

impl RobustScalerParams {
    pub fn len(&self) -> usize {
        self.median.len()
    }

    pub fn is_empty(&self) -> bool {
        self.median.is_empty()
    }

    pub fn divisor(&self, col: usize) -> f64 {
        if self.degenerate[col] {
            1.0
        } else {
            self.iqr[col]
        }
    }
}

/// Fit per-column median and interquartile range over every row of the given
/// training frames.
pub fn robust_fit<'a>(frames: impl IntoIterator<Item = &'a FeatureFrame>) -> Result<RobustScalerParams> {
    let frames: Vec<&FeatureFrame> = frames.into_iter().collect();
    let rows: usize = frames.iter().map(|f| f.rows).sum();
    if rows == 0 {
        return Err(Error::domain("robust scaler needs at least one training row"));
    }
    let cols = frames.iter().find(|f| f.rows > 0).map(|f| f.cols).unwrap_or(0);
    if cols == 0 || frames.iter().any(|f| f.rows > 0 && f.cols != cols) {
        return Err(Error::shape("training frames disagree on feature count"));
    }
    let mut median = Vec::with_capacity(cols);
    let mut iqr = Vec::with_capacity(cols);
    let mut degenerate = Vec::with_capacity(cols);
    let mut column = Vec::with_capacity(rows);
    for c in 0..cols {
        column.clear();
        for f in &frames {
            column.extend((0..f.rows).map(|r| f.data[r * cols + c]));
        }
        if column.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite training value in column {c}")));
        }
        column.sort_by(f64::total_cmp);
        let m = quantile_sorted(&column, 0.5);
        let spread = quantile_sorted(&column, 0.75) - quantile_sorted(&column, 0.25);
        median.push(m);
        iqr.push(spread);
        degenerate.push(spread <= 0.0);
    }
    Ok(RobustScalerParams { median, iqr, degenerate })
}

/// `(x − median) / IQR` per column.
pub fn robust_transform(frame: &FeatureFrame, params: &RobustScalerParams) -> Result<FeatureFrame> {
    if frame.cols != params.len() {
        return Err(Error::shape(format!(
            "frame has {} columns, scaler was fitted on {}",
            frame.cols,
            params.len()
        )));
    }
    let divisors: Vec<f64> = (0..params.len()).map(|c| params.divisor(c)).collect();
    let mut data = frame.data.clone();
    for row in data.chunks_mut(frame.cols) {
        for ((v, m), d) in row.iter_mut().zip(&params.median).zip(&divisors) {
            *v = (*v - m) / d;
        }
    }
    Ok(FeatureFrame {
        data,
        scaler_applied: true,
        ..frame.clone()
    })
}

/// T × 13 one-hot matrix (row-major).
pub fn one_hot(labels: &[usize]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; labels.len() * NUM_CLASSES];
    for (i, &l) in labels.iter().enumerate() {
        if l >= NUM_CLASSES {
            return Err(Error::domain(format!("label {l} at row {i} outside [0, {}]", NUM_CLASSES - 1)));
        }
        out[i * NUM_CLASSES + l] = 1.0;
    }
    Ok(out)
}

/// Train/validation/test trial ids and k-fold assignments over train ∪ val.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub folds: Vec<Vec<String>>,
}

impl SplitSpec {
    /// (training ids, validation ids) of fold `k`: validation is fold k,
    /// training the union of the others.
    pub fn fold_sets(&self, k: usize) -> Result<(Vec<String>, Vec<String>)> {
        let val = self
            .folds
            .get(k)
            .ok_or_else(|| Error::domain(format!("no assignment for fold {k} ({} folds)", self.folds.len())))?
            .clone();
        let train = self
            .folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != k)
            .flat_map(|(_, f)| f.iter().cloned())
            .collect();
        Ok((train, val))
    }

    /// Every id that is used for fitting (all folds' union).
    pub fn fit_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.folds.iter().flatten().cloned().collect();
        ids.sort();
        ids
    }
}

fn group_by_class(entries: &[(String, InteractionLabel)]) -> BTreeMap<InteractionLabel, Vec<String>> {
    let mut groups: BTreeMap<InteractionLabel, Vec<String>> = BTreeMap::new();
    for (id, class) in entries {
        groups.entry(*class).or_default().push(id.clone());
    }
    for ids in groups.values_mut() {
        ids.sort();
    }
    groups
}

/// Distribute `total` slots across groups proportionally to `ideal`, never
/// exceeding `caps`: floors first, then largest remainders (ties by group order).
fn allocate(total: usize, ideal: &[f64], caps: &[usize]) -> Vec<usize> {
    let mut alloc: Vec<usize> = ideal.iter().zip(caps).map(|(x, &c)| (x.floor() as usize).min(c)).collect();
    let mut left = total.saturating_sub(alloc.iter().sum());
    let mut order: Vec<usize> = (0..ideal.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - ideal[a].floor();
        let fb = ideal[b] - ideal[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    while left > 0 {
        let before = left;
        for &g in &order {
            if left > 0 && alloc[g] < caps[g] {
                alloc[g] += 1;
                left -= 1;
            }
        }
        if left == before {
            break;
        }
    }
    alloc
}

/// Stratified 60:20:20 split plus `folds`-way assignment of train ∪ val.
pub fn split_dataset(entries: &[(String, InteractionLabel)], folds: usize, seed: u64) -> Result<SplitSpec> {
    let n = entries.len();
    let n_train = (0.6 * n as f64).round() as usize;
    let n_val = (0.2 * n as f64).round() as usize;
    let groups = group_by_class(entries);
    let mut shuffled: Vec<(InteractionLabel, Vec<String>)> = groups
        .into_iter()
        .map(|(class, mut ids)| {
            SimRng::derived(seed, &[0x5B17, class.index() as u64]).shuffle(&mut ids);
            (class, ids)
        })
        .collect();

    let sizes: Vec<usize> = shuffled.iter().map(|(_, ids)| ids.len()).collect();
    let train_ideal: Vec<f64> = sizes.iter().map(|&s| 0.6 * s as f64).collect();
    let train_alloc = allocate(n_train, &train_ideal, &sizes);
    let rest: Vec<usize> = sizes.iter().zip(&train_alloc).map(|(s, t)| s - t).collect();
    let val_ideal: Vec<f64> = sizes.iter().map(|&s| 0.2 * s as f64).collect();
    let val_alloc = allocate(n_val, &val_ideal, &rest);

    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (((_, ids), &nt), &nv) in shuffled.iter_mut().zip(&train_alloc).zip(&val_alloc) {
        train.extend_from_slice(&ids[..nt]);
        val.extend_from_slice(&ids[nt..nt + nv]);
        test.extend_from_slice(&ids[nt + nv..]);
    }
    train.sort();
    val.sort();
    test.sort();

    let class_of: BTreeMap<&str, InteractionLabel> = entries.iter().map(|(id, c)| (id.as_str(), *c)).collect();
    let pool: Vec<(String, InteractionLabel)> = train
        .iter()
        .chain(&val)
        .map(|id| (id.clone(), class_of[id.as_str()]))
        .collect();
    let folds = kfold_assign(&pool, folds, seed)?;
    Ok(SplitSpec { seed, train, val, test, folds })
}

/// Stratified k-fold partition: each class is shuffled and dealt round-robin
/// with a counter that continues across classes, so fold sizes differ by at
/// most one.
pub fn kfold_assign(entries: &[(String, InteractionLabel)], k: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if k < 2 {
        return Err(Error::domain(format!("need at least 2 folds, got {k}")));
    }
    if entries.len() < k {
        return Err(Error::domain(format!("{} trials cannot fill {k} folds", entries.len())));
    }
    let mut folds = vec![Vec::new(); k];
    let mut next = 0usize;
    for (class, mut ids) in group_by_class(entries) {
        let mut rng = SimRng::new(derive_seed(seed, &[0xF01D, class.index() as u64]));
        rng.shuffle(&mut ids);
        for id in ids {
            folds[next % k].push(id);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort();
    }
    Ok(folds)
}
