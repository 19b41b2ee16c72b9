use crate::error::{Error, Result};
use crate::nn::gru::{batch_time, with_last_dim};
use crate::nn::init::glorot_uniform;
use crate::nn::loss::softmax_rows;
use crate::nn::tensor::{affine, gemm, gemm_raw, Param, Parameterized, Tensor};
use crate::rng::SimRng;

/// Strided sub-matrix of a row-major buffer.
#[derive(Clone, Copy)]
struct View {
    off: usize,
    rs: usize,
    cs: usize,
}

impl View {
    fn rows(off: usize, rs: usize) -> Self {
        Self { off, rs, cs: 1 }
    }

    fn t(self) -> Self {
        Self { off: self.off, rs: self.cs, cs: self.rs }
    }

    fn last(&self, r: usize, c: usize) -> usize {
        self.off + (r - 1) * self.rs + (c - 1) * self.cs
    }
}

/// `c[vc] = a[va]·b[vb] + beta·c[vc]` for m×k by k×n views.
#[allow(clippy::too_many_arguments)]
fn mm(m: usize, k: usize, n: usize, a: &[f64], va: View, b: &[f64], vb: View, beta: f64, c: &mut [f64], vc: View) {
    assert!(va.last(m, k) < a.len() && vb.last(k, n) < b.len() && vc.last(m, n) < c.len());
    // SAFETY: the assertion bounds the furthest element each view reaches;
    // `c` is a unique borrow distinct from `a` and `b`.
    unsafe {
        gemm_raw(
            m,
            k,
            n,
            1.0,
            a.as_ptr().add(va.off),
            va.rs as isize,
            va.cs as isize,
            b.as_ptr().add(vb.off),
            vb.rs as isize,
            vb.cs as isize,
            beta,
            c.as_mut_ptr().add(vc.off),
            vc.rs as isize,
            vc.cs as isize,
        )
    }
}

/// Multi-head scaled dot-product self-attention without masking.
///
/// Head `h` uses columns `h·key_dim .. (h+1)·key_dim` of `w_query`, `w_key`
/// and `w_value` (each model_dim × heads·key_dim); the concatenated head
/// outputs are projected back to model_dim by `w_final`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadSelfAttention {
    pub heads: usize,
    pub key_dim: usize,
    pub w_query: Param,
    pub w_key: Param,
    pub w_value: Param,
    pub w_final: Param,
}

pub struct AttentionCache {
    batch: usize,
    t_len: usize,
    x: Tensor,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    attn: Vec<f64>,
    concat: Vec<f64>,
}

impl MultiHeadSelfAttention {
    pub fn new(model_dim: usize, heads: usize, key_dim: usize, rng: &mut SimRng) -> Result<Self> {
        if heads == 0 || key_dim == 0 || model_dim == 0 {
            return Err(Error::domain("attention needs heads, key_dim and model_dim >= 1"));
        }
        let hk = heads * key_dim;
        let mut proj = |n: &str| Param::new(n, glorot_uniform(model_dim, hk, rng));
        let (w_query, w_key, w_value) = (proj("w_query"), proj("w_key"), proj("w_value"));
        let w_final = Param::new("w_final", glorot_uniform(hk, model_dim, rng));
        Ok(Self { heads, key_dim, w_query, w_key, w_value, w_final })
    }

    pub fn from_params(heads: usize, key_dim: usize, wq: Tensor, wk: Tensor, wv: Tensor, wf: Tensor) -> Result<Self> {
        if heads == 0 || key_dim == 0 {
            return Err(Error::domain("attention needs heads and key_dim >= 1"));
        }
        let d = wq.shape.first().copied().unwrap_or(0);
        let hk = heads * key_dim;
        for (n, t) in [("w_query", &wq), ("w_key", &wk), ("w_value", &wv)] {
            if t.shape != [d, hk] {
                return Err(Error::domain(format!("{n} has shape {:?}, expected [{d}, {hk}]", t.shape)));
            }
        }
        if wf.shape != [hk, d] {
            return Err(Error::domain(format!("w_final has shape {:?}, expected [{hk}, {d}]", wf.shape)));
        }
        Ok(Self {
            heads,
            key_dim,
            w_query: Param::new("w_query", wq),
            w_key: Param::new("w_key", wk),
            w_value: Param::new("w_value", wv),
            w_final: Param::new("w_final", wf),
        })
    }

    pub fn model_dim(&self) -> usize {
        self.w_query.value.shape[0]
    }

    fn hk(&self) -> usize {
        self.heads * self.key_dim
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, AttentionCache)> {
        let (batch, t_len) = batch_time(x)?;
        let d = self.model_dim();
        x.expect_cols(d, "attention input")?;
        let (hk, kd) = (self.hk(), self.key_dim);
        let rows = batch * t_len;
        let q = affine(&x.data, rows, &self.w_query.value, None);
        let k = affine(&x.data, rows, &self.w_key.value, None);
        let v = affine(&x.data, rows, &self.w_value.value, None);
        let scale = 1.0 / (kd as f64).sqrt();
        let tt = t_len * t_len;
        let mut attn = vec![0.0; batch * self.heads * tt];
        let mut concat = vec![0.0; rows * hk];
        for b in 0..batch {
            for h in 0..self.heads {
                let head = View::rows(b * t_len * hk + h * kd, hk);
                let a_off = (b * self.heads + h) * tt;
                let scores = &mut attn[a_off..a_off + tt];
                mm(t_len, kd, t_len, &q, head, &k, head.t(), 0.0, scores, View::rows(0, t_len));
                scores.iter_mut().for_each(|s| *s *= scale);
                softmax_rows(scores, t_len);
                mm(t_len, t_len, kd, &attn, View::rows(a_off, t_len), &v, head, 0.0, &mut concat, head);
            }
        }
        let out = affine(&concat, rows, &self.w_final.value, None);
        let cache = AttentionCache { batch, t_len, x: x.clone(), q, k, v, attn, concat };
        Ok((Tensor { shape: with_last_dim(&x.shape, d), data: out }, cache))
    }

    /// Attention weights (batch, head, T, T) from a forward cache.
    pub fn weights<'a>(&self, cache: &'a AttentionCache) -> &'a [f64] {
        &cache.attn
    }

    pub fn backward(&mut self, cache: &AttentionCache, dout: &Tensor, need_dx: bool) -> Result<Option<Tensor>> {
        let d = self.model_dim();
        let (hk, kd) = (self.hk(), self.key_dim);
        let (batch, t_len) = (cache.batch, cache.t_len);
        let rows = batch * t_len;
        if dout.data.len() != rows * d {
            return Err(Error::shape(format!("attention output gradient {:?}", dout.shape)));
        }
        gemm(true, false, hk, d, rows, 1.0, &cache.concat, &dout.data, 1.0, &mut self.w_final.grad.data);
        let mut dconcat = vec![0.0; rows * hk];
        gemm(false, true, rows, hk, d, 1.0, &dout.data, &self.w_final.value.data, 0.0, &mut dconcat);

        let scale = 1.0 / (kd as f64).sqrt();
        let tt = t_len * t_len;
        let mut dq = vec![0.0; rows * hk];
        let mut dk = vec![0.0; rows * hk];
        let mut dv = vec![0.0; rows * hk];
        let mut ds = vec![0.0; tt];
        let sq = View::rows(0, t_len);
        for b in 0..batch {
            for h in 0..self.heads {
                let head = View::rows(b * t_len * hk + h * kd, hk);
                let a_off = (b * self.heads + h) * tt;
                let av = View::rows(a_off, t_len);
                // dA = dO_h · V_hᵀ ; dV_h = Aᵀ · dO_h
                mm(t_len, kd, t_len, &dconcat, head, &cache.v, head.t(), 0.0, &mut ds, sq);
                mm(t_len, t_len, kd, &cache.attn, av.t(), &dconcat, head, 0.0, &mut dv, head);
                let a = &cache.attn[a_off..a_off + tt];
                for (g, p) in ds.chunks_mut(t_len).zip(a.chunks(t_len)) {
                    let dot: f64 = g.iter().zip(p).map(|(x, y)| x * y).sum();
                    g.iter_mut().zip(p).for_each(|(x, y)| *x = y * (*x - dot) * scale);
                }
                mm(t_len, t_len, kd, &ds, sq, &cache.k, head, 0.0, &mut dq, head);
                mm(t_len, t_len, kd, &ds, sq.t(), &cache.q, head, 0.0, &mut dk, head);
            }
        }
        let x = &cache.x.data;
        gemm(true, false, d, hk, rows, 1.0, x, &dq, 1.0, &mut self.w_query.grad.data);
        gemm(true, false, d, hk, rows, 1.0, x, &dk, 1.0, &mut self.w_key.grad.data);
        gemm(true, false, d, hk, rows, 1.0, x, &dv, 1.0, &mut self.w_value.grad.data);
        if !need_dx {
            return Ok(None);
        }
        let mut dx = Tensor::zeros(&cache.x.shape);
        gemm(false, true, rows, d, hk, 1.0, &dq, &self.w_query.value.data, 0.0, &mut dx.data);
        gemm(false, true, rows, d, hk, 1.0, &dk, &self.w_key.value.data, 1.0, &mut dx.data);
        gemm(false, true, rows, d, hk, 1.0, &dv, &self.w_value.value.data, 1.0, &mut dx.data);
        Ok(Some(dx))
    }
}

impl Parameterized for MultiHeadSelfAttention {
    fn params(&self) -> Vec<&Param> {
        vec![&self.w_query, &self.w_key, &self.w_value, &self.w_final]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w_query, &mut self.w_key, &mut self.w_value, &mut self.w_final]
    }
}
