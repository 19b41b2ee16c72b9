use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::Param;

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update of every parameter from its accumulated gradient.
    pub fn step(&mut self, params: Vec<&mut Param>) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::domain(format!(
                "optimizer state tracks {} parameters, got {}",
                self.m.len(),
                params.len()
            )));
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            if m.len() != p.value.len() {
                return Err(Error::domain(format!("optimizer state size mismatch for {}", p.name)));
            }
            for i in 0..m.len() {
                let g = p.grad.data[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p.value.data[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauConfig {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            factor: 0.5,
            patience: 10,
            min_lr: 1e-6,
        }
    }
}

fn epochs_since_best(history: &[f64], better: impl Fn(f64, f64) -> bool) -> (usize, usize) {
    let mut best = 0;
    for (i, &v) in history.iter().enumerate().skip(1) {
        if better(v, history[best]) {
            best = i;
        }
    }
    (best, history.len() - 1 - best)
}

/// Learning rate after the latest epoch of a minimized metric (validation
/// loss): multiplied by `factor` each time `patience` epochs pass without a
/// new minimum, floored at `min_lr`.
pub fn reduce_lr_on_plateau(history: &[f64], lr: f64, cfg: &PlateauConfig) -> f64 {
    if history.is_empty() || cfg.patience == 0 {
        return lr;
    }
    let (_, since) = epochs_since_best(history, |a, b| a < b);
    if since > 0 && since % cfg.patience == 0 {
        (lr * cfg.factor).max(cfg.min_lr)
    } else {
        lr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EarlyStop {
    pub stop: bool,
    pub best_epoch: usize,
}

/// Stop once `patience` epochs pass without a new maximum of the monitored
/// metric (validation accuracy). The best epoch is the earliest maximum.
pub fn early_stopping(history: &[f64], patience: usize) -> EarlyStop {
    if history.is_empty() {
        return EarlyStop { stop: false, best_epoch: 0 };
    }
    let (best, since) = epochs_since_best(history, |a, b| a > b);
    EarlyStop {
        stop: since >= patience,
        best_epoch: best,
    }
}
