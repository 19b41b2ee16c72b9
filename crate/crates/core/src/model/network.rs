use crate::domain::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::features::{one_hot, FeatureFrame};
use crate::model::arch::{ArchConfig, EffectiveDims};
use crate::nn::attention::AttentionCache;
use crate::nn::dense::DenseCache;
use crate::nn::gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
use crate::nn::gru::BiGruCache;
use crate::nn::tensor::prefix_names;
use crate::nn::{
    add_positional, cross_entropy, cross_entropy_logit_grad, dropout, dropout_backward, softmax_rows, weighted_skip_add,
    weighted_skip_add_backward, Activation, BiGru, Dense, MultiHeadSelfAttention, Param, Parameterized, Tensor,
};
use crate::rng::{derive_seed, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Inference,
    /// Dropout active, masks drawn from this seed.
    Training { seed: u64 },
}

/// positional encoding → BiGRU₁ → dropout → BiGRU₂ → dropout → self-attention
/// → weighted skip add → dense → dropout → concat with BiGRU₂ output → dense
/// softmax, applied per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBiGru {
    pub arch: ArchConfig,
    pub dims: EffectiveDims,
    pub bigru1: BiGru,
    pub bigru2: BiGru,
    pub attention: MultiHeadSelfAttention,
    pub dense: Dense,
    pub output: Dense,
}

pub struct ForwardCache {
    bigru1: BiGruCache,
    mask1: Option<Vec<f64>>,
    bigru2: BiGruCache,
    mask2: Option<Vec<f64>>,
    attention: AttentionCache,
    dense: DenseCache,
    mask3: Option<Vec<f64>>,
    output: DenseCache,
}

fn concat_last(a: &Tensor, b: &Tensor) -> Tensor {
    let (ca, cb) = (a.cols(), b.cols());
    let mut data = Vec::with_capacity(a.len() + b.len());
    for (ra, rb) in a.data.chunks(ca).zip(b.data.chunks(cb)) {
        data.extend_from_slice(ra);
        data.extend_from_slice(rb);
    }
    let mut shape = a.shape.clone();
    *shape.last_mut().unwrap() = ca + cb;
    Tensor { shape, data }
}

fn split_last(x: &Tensor, first: usize) -> (Tensor, Tensor) {
    let c = x.cols();
    let mut a = Vec::with_capacity(x.rows() * first);
    let mut b = Vec::with_capacity(x.rows() * (c - first));
    for row in x.data.chunks(c) {
        a.extend_from_slice(&row[..first]);
        b.extend_from_slice(&row[first..]);
    }
    let mut sa = x.shape.clone();
    let mut sb = x.shape.clone();
    *sa.last_mut().unwrap() = first;
    *sb.last_mut().unwrap() = c - first;
    (Tensor { shape: sa, data: a }, Tensor { shape: sb, data: b })
}

fn add_into(a: &mut Tensor, b: &Tensor) {
    a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

impl AttentionBiGru {
    pub fn build(arch: &ArchConfig, seed: u64) -> Result<Self> {
        let dims = arch.effective()?;
        let mut rng = SimRng::derived(seed, &[0xB111D]);
        let mut bigru1 = BiGru::new(dims.feature_dim, dims.bigru1_units, &mut rng);
        let mut bigru2 = BiGru::new(dims.bigru1_out(), dims.bigru2_units, &mut rng);
        let mut attention = MultiHeadSelfAttention::new(dims.bigru2_out(), dims.heads, dims.key_dim, &mut rng)?;
        let mut dense = Dense::new(dims.bigru2_out(), dims.dense_units, arch.dense_activation, &mut rng);
        let mut output = Dense::new(dims.concat_width(), dims.classes, Activation::None, &mut rng);
        prefix_names(bigru1.params_mut(), "bigru1.");
        prefix_names(bigru2.params_mut(), "bigru2.");
        prefix_names(attention.params_mut(), "attention.");
        prefix_names(dense.params_mut(), "dense.");
        prefix_names(output.params_mut(), "output.");
        Ok(Self {
            arch: arch.clone(),
            dims,
            bigru1,
            bigru2,
            attention,
            dense,
            output,
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let n = x.shape.len();
        let ok = (n == 2 || n == 3) && x.shape[n - 1] == self.dims.feature_dim && x.shape[n - 2] == self.dims.seq_len;
        if !ok {
            return Err(Error::domain(format!(
                "model expects (T={}, F={}) sequences, got {:?}",
                self.dims.seq_len, self.dims.feature_dim, x.shape
            )));
        }
        Ok(())
    }

    /// Per-time-step class probabilities for (T, F) or (B, T, F) input.
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, ForwardCache)> {
        self.check_input(x)?;
        let (training, seed) = match mode {
            Mode::Inference => (false, 0),
            Mode::Training { seed } => (true, seed),
        };
        let drop = |x: &Tensor, k: usize| dropout(x, self.arch.dropouts[k], training, derive_seed(seed, &[k as u64]));
        let [w_pre, w_att] = self.arch.skip_weights;

        let x = add_positional(x)?;
        let (h1, bigru1) = self.bigru1.forward(&x)?;
        let (h1, mask1) = drop(&h1, 0)?;
        let (h2, bigru2) = self.bigru2.forward(&h1)?;
        let (pre, mask2) = drop(&h2, 1)?;
        let (att, attention) = self.attention.forward(&pre)?;
        let mixed = weighted_skip_add(&pre, &att, w_pre, w_att)?;
        let (d, dense) = self.dense.forward(&mixed)?;
        let (d, mask3) = drop(&d, 2)?;
        let (mut probs, output) = self.output.forward(&concat_last(&d, &pre))?;
        softmax_rows(&mut probs.data, self.dims.classes);
        let cache = ForwardCache {
            bigru1,
            mask1,
            bigru2,
            mask2,
            attention,
            dense,
            mask3,
            output,
        };
        Ok((probs, cache))
    }

    /// Accumulate parameter gradients given the gradient of the loss with
    /// respect to the output logits.
    pub fn backward(&mut self, cache: &ForwardCache, dlogits: &Tensor) -> Result<()> {
        let [w_pre, w_att] = self.arch.skip_weights;
        let dconcat = self.output.backward(&cache.output, dlogits)?;
        let (dd, mut dpre) = split_last(&dconcat, self.dims.dense_units);
        let dd = dropout_backward(&dd, cache.mask3.as_deref());
        let dmixed = self.dense.backward(&cache.dense, &dd)?;
        let (dpre_skip, datt) = weighted_skip_add_backward(&dmixed, w_pre, w_att);
        add_into(&mut dpre, &dpre_skip);
        let dpre_att = self.attention.backward(&cache.attention, &datt, true)?.expect("requested");
        add_into(&mut dpre, &dpre_att);
        let dh2 = dropout_backward(&dpre, cache.mask2.as_deref());
        let dh1 = self.bigru2.backward(&cache.bigru2, &dh2, true)?.expect("requested");
        let dh1 = dropout_backward(&dh1, cache.mask1.as_deref());
        self.bigru1.backward(&cache.bigru1, &dh1, false)?;
        Ok(())
    }

    /// Cross-entropy of a batch against one-hot targets (rows × classes),
    /// accumulating gradients. Returns the loss and the probabilities.
    pub fn loss_and_grad(&mut self, x: &Tensor, targets: &Tensor, mode: Mode) -> Result<(f64, Tensor)> {
        let (probs, cache) = self.forward(x, mode)?;
        let loss = cross_entropy(&probs, targets)?;
        let dlogits = cross_entropy_logit_grad(&probs, targets)?;
        self.backward(&cache, &dlogits)?;
        Ok((loss, probs))
    }

    pub fn loss(&self, x: &Tensor, targets: &Tensor, mode: Mode) -> Result<f64> {
        let (probs, _) = self.forward(x, mode)?;
        cross_entropy(&probs, targets)
    }

    fn frame_tensor(&self, frame: &FeatureFrame) -> Result<Tensor> {
        Tensor::from_vec(&[frame.rows, frame.cols], frame.data.clone())
    }

    /// (T, classes) probabilities for one frame, dropout off.
    pub fn predict(&self, frame: &FeatureFrame) -> Result<Tensor> {
        Ok(self.forward(&self.frame_tensor(frame)?, Mode::Inference)?.0)
    }

    pub fn predict_labels(&self, frame: &FeatureFrame) -> Result<Vec<usize>> {
        let p = self.predict(frame)?;
        Ok(p.data.chunks(self.dims.classes).map(argmax).collect())
    }

    /// Overwrite parameters by name; every architecture parameter must be
    /// supplied exactly once with the expected shape.
    pub fn load_params(&mut self, named: &[(String, Tensor)]) -> Result<()> {
        let expected = self.arch.param_shapes()?;
        if named.len() != expected.len() {
            return Err(Error::shape(format!("{} tensors supplied, architecture has {}", named.len(), expected.len())));
        }
        for ((name, shape), p) in expected.iter().zip(self.params_mut()) {
            debug_assert_eq!(name, &p.name);
            let (_, t) = named
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| Error::shape(format!("layer {name}: missing")))?;
            if &t.shape != shape {
                return Err(Error::shape(format!("layer {name}: expected {shape:?}, found {:?}", t.shape)));
            }
            p.value = t.clone();
        }
        Ok(())
    }
}

impl Parameterized for AttentionBiGru {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.bigru1.params();
        v.extend(self.bigru2.params());
        v.extend(self.attention.params());
        v.extend(self.dense.params());
        v.extend(self.output.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.bigru1.params_mut();
        v.extend(self.bigru2.params_mut());
        v.extend(self.attention.params_mut());
        v.extend(self.dense.params_mut());
        v.extend(self.output.params_mut());
        v
    }
}

/// Finite-difference check of the whole network's loss gradient on random
/// input and labels, with dropout active under a fixed mask seed.
pub fn grad_check_model(arch: &ArchConfig, batch: usize, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut model = AttentionBiGru::build(arch, opts.seed)?;
    let d = model.dims;
    let mut rng = SimRng::derived(opts.seed, &[0xC4EC]);
    let n = batch * d.seq_len;
    let x = Tensor::from_vec(
        &[batch, d.seq_len, d.feature_dim],
        (0..n * d.feature_dim).map(|_| rng.gaussian()).collect(),
    )?;
    let labels: Vec<usize> = (0..n).map(|_| rng.below(NUM_CLASSES)).collect();
    let targets = Tensor::from_vec(&[batch, d.seq_len, NUM_CLASSES], one_hot(&labels)?)?;
    let mode = Mode::Training {
        seed: derive_seed(opts.seed, &[0xD20]),
    };
    grad_check(
        &mut model,
        opts,
        |m| Ok(m.loss_and_grad(&x, &targets, mode)?.0),
        |m| m.loss(&x, &targets, mode),
    )
}
