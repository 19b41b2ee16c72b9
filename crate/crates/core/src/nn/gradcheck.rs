use std::fmt;

use crate::error::Result;
use crate::nn::attention::{AttentionCache, MultiHeadSelfAttention};
use crate::nn::dense::{Dense, DenseCache};
use crate::nn::gru::{BiGru, BiGruCache, Gru, GruCache};
use crate::nn::loss::{weighted_skip_add, weighted_skip_add_backward};
use crate::nn::tensor::{Param, Parameterized, Tensor};
use crate::rng::SimRng;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Below this magnitude, errors are measured relative to the floor instead
/// of the (vanishing) gradient itself.
pub const DEFAULT_FLOOR: f64 = 1e-6;

/// Floor for whole-network checks. Central differences at `DEFAULT_EPS` on a
/// loss computed through long recurrences carry about 1e-10 of absolute
/// rounding noise, so gradients below this floor are held to an absolute
/// error of `1e-3 * tolerance` instead of a relative one.
pub const NETWORK_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub eps: f64,
    pub floor: f64,
    /// Check at most this many randomly chosen entries per parameter.
    pub max_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            floor: DEFAULT_FLOOR,
            max_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.entries.iter().map(|e| e.checked).sum()
    }

    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries.iter().max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "{:<24} n={:<6} rel={:.3e} abs={:.3e}", e.name, e.checked, e.max_rel_err, e.max_abs_err)?;
        }
        write!(f, "max rel err {:.3e} over {} entries", self.max_rel_err(), self.checked())
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compare analytic gradients with central differences.
///
/// `loss_and_grad` must compute the loss and accumulate parameter gradients
/// (they are zeroed first); `loss` must compute the same loss without side
/// effects.
pub fn grad_check<M: Parameterized>(
    model: &mut M,
    opts: &GradCheckOptions,
    mut loss_and_grad: impl FnMut(&mut M) -> Result<f64>,
    mut loss: impl FnMut(&M) -> Result<f64>,
) -> Result<GradCheckReport> {
    model.zero_grad();
    loss_and_grad(model)?;
    let analytic: Vec<(String, Vec<f64>)> = model.params().iter().map(|p| (p.name.clone(), p.grad.data.clone())).collect();
    let mut rng = SimRng::derived(opts.seed, &[0x6C4E]);
    let mut report = GradCheckReport::default();
    for (pi, (name, grad)) in analytic.iter().enumerate() {
        let mut idx: Vec<usize> = (0..grad.len()).collect();
        if let Some(k) = opts.max_per_param {
            if k < idx.len() {
                rng.shuffle(&mut idx);
                idx.truncate(k);
            }
        }
        let mut entry = GradCheckEntry {
            name: name.clone(),
            checked: 0,
            max_rel_err: 0.0,
            max_abs_err: 0.0,
        };
        for i in idx {
            let orig = model.params()[pi].value.data[i];
            model.params_mut()[pi].value.data[i] = orig + opts.eps;
            let lp = loss(model)?;
            model.params_mut()[pi].value.data[i] = orig - opts.eps;
            let lm = loss(model)?;
            model.params_mut()[pi].value.data[i] = orig;
            let numeric = (lp - lm) / (2.0 * opts.eps);
            entry.checked += 1;
            entry.max_abs_err = entry.max_abs_err.max((grad[i] - numeric).abs());
            entry.max_rel_err = entry.max_rel_err.max(relative_error(grad[i], numeric, opts.floor));
        }
        report.entries.push(entry);
    }
    Ok(report)
}

/// A layer with a single input tensor and a hand-written backward pass.
pub trait Differentiable: Parameterized {
    type Cache;
    fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, Self::Cache)>;
    fn backward_input(&mut self, cache: &Self::Cache, dy: &Tensor) -> Result<Tensor>;
}

impl Differentiable for Dense {
    type Cache = DenseCache;
    fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, DenseCache)> {
        self.forward(x)
    }
    fn backward_input(&mut self, cache: &DenseCache, dy: &Tensor) -> Result<Tensor> {
        self.backward(cache, dy)
    }
}

impl Differentiable for Gru {
    type Cache = GruCache;
    fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, GruCache)> {
        self.forward(x)
    }
    fn backward_input(&mut self, cache: &GruCache, dy: &Tensor) -> Result<Tensor> {
        Ok(self.backward(cache, dy, true)?.expect("input gradient requested"))
    }
}

impl Differentiable for BiGru {
    type Cache = BiGruCache;
    fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, BiGruCache)> {
        self.forward(x)
    }
    fn backward_input(&mut self, cache: &BiGruCache, dy: &Tensor) -> Result<Tensor> {
        Ok(self.backward(cache, dy, true)?.expect("input gradient requested"))
    }
}

impl Differentiable for MultiHeadSelfAttention {
    type Cache = AttentionCache;
    fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, AttentionCache)> {
        self.forward(x)
    }
    fn backward_input(&mut self, cache: &AttentionCache, dy: &Tensor) -> Result<Tensor> {
        Ok(self.backward(cache, dy, true)?.expect("input gradient requested"))
    }
}

/// Layer plus its input as a trainable parameter, scored by a fixed random
/// linear probe `Σ w ⊙ y`.
struct Probe<L> {
    layer: L,
    input: Param,
    weights: Vec<f64>,
}

impl<L: Parameterized> Parameterized for Probe<L> {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.layer.params();
        v.push(&self.input);
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.layer.params_mut();
        v.push(&mut self.input);
        v
    }
}

fn random_tensor(shape: &[usize], rng: &mut SimRng) -> Tensor {
    let n = shape.iter().product();
    Tensor {
        shape: shape.to_vec(),
        data: (0..n).map(|_| rng.gaussian()).collect(),
    }
}

/// Check every parameter and input entry of a layer on a random input.
pub fn grad_check_layer<L: Differentiable>(layer: L, input_shape: &[usize], opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut rng = SimRng::derived(opts.seed, &[0x1A7E]);
    let input = Param::new("input", random_tensor(input_shape, &mut rng));
    let (y, _) = layer.forward_cached(&input.value)?;
    let weights: Vec<f64> = (0..y.len()).map(|_| rng.gaussian()).collect();
    let mut probe = Probe { layer, input, weights };
    grad_check(
        &mut probe,
        opts,
        |p| {
            let (y, cache) = p.layer.forward_cached(&p.input.value)?;
            let dy = Tensor {
                shape: y.shape.clone(),
                data: p.weights.clone(),
            };
            let dx = p.layer.backward_input(&cache, &dy)?;
            p.input.grad.data.iter_mut().zip(&dx.data).for_each(|(g, d)| *g += d);
            Ok(y.data.iter().zip(&p.weights).map(|(a, b)| a * b).sum())
        },
        |p| {
            let (y, _) = p.layer.forward_cached(&p.input.value)?;
            Ok(y.data.iter().zip(&p.weights).map(|(a, b)| a * b).sum())
        },
    )
}

struct SkipProbe {
    pre: Param,
    att: Param,
    weights: Vec<f64>,
    w_pre: f64,
    w_att: f64,
}

impl Parameterized for SkipProbe {
    fn params(&self) -> Vec<&Param> {
        vec![&self.pre, &self.att]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.pre, &mut self.att]
    }
}

/// Check both input gradients of the weighted skip addition.
pub fn grad_check_skip_add(shape: &[usize], w_pre: f64, w_att: f64, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut rng = SimRng::derived(opts.seed, &[0x5C1B]);
    let pre = Param::new("pre", random_tensor(shape, &mut rng));
    let att = Param::new("att", random_tensor(shape, &mut rng));
    let weights = (0..pre.value.len()).map(|_| rng.gaussian()).collect();
    let mut probe = SkipProbe { pre, att, weights, w_pre, w_att };
    let score = |p: &SkipProbe| -> Result<f64> {
        let y = weighted_skip_add(&p.pre.value, &p.att.value, p.w_pre, p.w_att)?;
        Ok(y.data.iter().zip(&p.weights).map(|(a, b)| a * b).sum())
    };
    grad_check(
        &mut probe,
        opts,
        |p| {
            let dy = Tensor {
                shape: p.pre.value.shape.clone(),
                data: p.weights.clone(),
            };
            let (dpre, datt) = weighted_skip_add_backward(&dy, p.w_pre, p.w_att);
            p.pre.grad.data.iter_mut().zip(&dpre.data).for_each(|(g, d)| *g += d);
            p.att.grad.data.iter_mut().zip(&datt.data).for_each(|(g, d)| *g += d);
            score(p)
        },
        score,
    )
}
