use crate::error::{Error, Result};
use crate::nn::init::{glorot_uniform, orthogonal};
use crate::nn::tensor::{add_column_sums, affine, gemm, prefix_names, Param, Parameterized, Tensor};
use crate::rng::SimRng;

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// (batch, time) of a (B, T, F) or (T, F) tensor.
pub(crate) fn batch_time(x: &Tensor) -> Result<(usize, usize)> {
    match x.shape.len() {
        2 => Ok((1, x.shape[0])),
        3 => Ok((x.shape[0], x.shape[1])),
        _ => Err(Error::domain(format!("expected a (T, F) or (B, T, F) tensor, got {:?}", x.shape))),
    }
}

pub(crate) fn with_last_dim(shape: &[usize], last: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    *s.last_mut().unwrap() = last;
    s
}

/// Fully gated recurrent unit scanned over a sequence:
///
/// ```text
/// z  = σ(x·W1u + h_prev·W2u + Bu)
/// r  = σ(x·W1r + h_prev·W2r + Br)
/// h̃  = tanh(x·W1h + (h_prev ⊙ r)·W2h + Bh)
/// h  = (1 − z) ⊙ h_prev + z ⊙ h̃
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Gru {
    pub w1_u: Param,
    pub w2_u: Param,
    pub b_u: Param,
    pub w1_r: Param,
    pub w2_r: Param,
    pub b_r: Param,
    pub w1_h: Param,
    pub w2_h: Param,
    pub b_h: Param,
    /// Scan right to left (outputs stay aligned with input time).
    pub reverse: bool,
}

pub struct GruCache {
    batch: usize,
    t_len: usize,
    x: Tensor,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    cand: Vec<f64>,
    h_reset: Vec<f64>,
}

impl Gru {
    pub fn new(input: usize, units: usize, reverse: bool, rng: &mut SimRng) -> Self {
        let mut kernel = |n: &str| Param::new(n, glorot_uniform(input, units, rng));
        let (w1_u, w1_r, w1_h) = (kernel("w1_u"), kernel("w1_r"), kernel("w1_h"));
        let mut rec = |n: &str| Param::new(n, orthogonal(units, rng));
        let (w2_u, w2_r, w2_h) = (rec("w2_u"), rec("w2_r"), rec("w2_h"));
        let bias = |n: &str| Param::zeros(n, &[units]);
        Self {
            w1_u,
            w2_u,
            b_u: bias("b_u"),
            w1_r,
            w2_r,
            b_r: bias("b_r"),
            w1_h,
            w2_h,
            b_h: bias("b_h"),
            reverse,
        }
    }

    /// All weights and biases zero.
    pub fn zeroed(input: usize, units: usize) -> Self {
        let z = |n: &str, s: &[usize]| Param::zeros(n, s);
        Self {
            w1_u: z("w1_u", &[input, units]),
            w2_u: z("w2_u", &[units, units]),
            b_u: z("b_u", &[units]),
            w1_r: z("w1_r", &[input, units]),
            w2_r: z("w2_r", &[units, units]),
            b_r: z("b_r", &[units]),
            w1_h: z("w1_h", &[input, units]),
            w2_h: z("w2_h", &[units, units]),
            b_h: z("b_h", &[units]),
            reverse: false,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1_u.value.shape[0]
    }

    pub fn units(&self) -> usize {
        self.w2_u.value.shape[0]
    }

    pub fn validate(&self) -> Result<()> {
        let (i, h) = (self.input_dim(), self.units());
        for (k, p) in self.params().into_iter().enumerate() {
            let want: &[usize] = match k % 3 {
                0 => &[i, h],
                1 => &[h, h],
                _ => &[h],
            };
            if p.value.shape != want {
                return Err(Error::domain(format!("GRU parameter {} has shape {:?}, expected {want:?}", p.name, p.value.shape)));
            }
        }
        Ok(())
    }

    /// One step: `h_t` for a single input vector and previous state.
    pub fn cell(&self, x_t: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
        let x = Tensor::from_vec(&[1, 1, x_t.len()], x_t.to_vec())?;
        Ok(self.forward_with_state(&x, Some(h_prev))?.0.data)
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, GruCache)> {
        self.forward_with_state(x, None)
    }

    /// Scan over (B, T, in) or (T, in) with optional initial state (B, units).
    pub fn forward_with_state(&self, x: &Tensor, h0: Option<&[f64]>) -> Result<(Tensor, GruCache)> {
        let (batch, t_len) = batch_time(x)?;
        x.expect_cols(self.input_dim(), "GRU input")?;
        let h = self.units();
        let rows = batch * t_len;
        let xu = affine(&x.data, rows, &self.w1_u.value, Some(&self.b_u.value));
        let xr = affine(&x.data, rows, &self.w1_r.value, Some(&self.b_r.value));
        let xh = affine(&x.data, rows, &self.w1_h.value, Some(&self.b_h.value));

        let mut state = match h0 {
            Some(s) if s.len() == batch * h => s.to_vec(),
            Some(s) => return Err(Error::domain(format!("initial GRU state has {} values, expected {}", s.len(), batch * h))),
            None => vec![0.0; batch * h],
        };
        let mut cache = GruCache {
            batch,
            t_len,
            x: x.clone(),
            h_prev: vec![0.0; rows * h],
            z: vec![0.0; rows * h],
            r: vec![0.0; rows * h],
            cand: vec![0.0; rows * h],
            h_reset: vec![0.0; rows * h],
        };
        let mut out = vec![0.0; rows * h];
        let (mut au, mut ar, mut ah, mut hr) = (vec![0.0; batch * h], vec![0.0; batch * h], vec![0.0; batch * h], vec![0.0; batch * h]);

        for step in 0..t_len {
            let t = if self.reverse { t_len - 1 - step } else { step };
            for b in 0..batch {
                let o = (b * t_len + t) * h;
                au[b * h..(b + 1) * h].copy_from_slice(&xu[o..o + h]);
                ar[b * h..(b + 1) * h].copy_from_slice(&xr[o..o + h]);
                ah[b * h..(b + 1) * h].copy_from_slice(&xh[o..o + h]);
            }
            gemm(false, false, batch, h, h, 1.0, &state, &self.w2_u.value.data, 1.0, &mut au);
            gemm(false, false, batch, h, h, 1.0, &state, &self.w2_r.value.data, 1.0, &mut ar);
            for i in 0..batch * h {
                au[i] = sigmoid(au[i]);
                ar[i] = sigmoid(ar[i]);
                hr[i] = state[i] * ar[i];
            }
            gemm(false, false, batch, h, h, 1.0, &hr, &self.w2_h.value.data, 1.0, &mut ah);
            for b in 0..batch {
                let o = (b * t_len + t) * h;
                for j in 0..h {
                    let i = b * h + j;
                    let cand = ah[i].tanh();
                    let hp = state[i];
                    let z = au[i];
                    cache.h_prev[o + j] = hp;
                    cache.z[o + j] = z;
                    cache.r[o + j] = ar[i];
                    cache.cand[o + j] = cand;
                    cache.h_reset[o + j] = hr[i];
                    let hn = (1.0 - z) * hp + z * cand;
                    state[i] = hn;
                    out[o + j] = hn;
                }
            }
        }
        let shape = with_last_dim(&x.shape, h);
        Ok((Tensor { shape, data: out }, cache))
    }

    /// Backpropagation through time. Accumulates parameter gradients and
    /// returns the input gradient when `need_dx`.
    pub fn backward(&mut self, cache: &GruCache, dout: &Tensor, need_dx: bool) -> Result<Option<Tensor>> {
        let h = self.units();
        let (batch, t_len) = (cache.batch, cache.t_len);
        let rows = batch * t_len;
        if dout.data.len() != rows * h {
            return Err(Error::shape(format!("GRU output gradient {:?}", dout.shape)));
        }
        let mut da_u = vec![0.0; rows * h];
        let mut da_r = vec![0.0; rows * h];
        let mut da_h = vec![0.0; rows * h];
        let mut carry = vec![0.0; batch * h];
        let mut dhp = vec![0.0; batch * h];
        let mut dah = vec![0.0; batch * h];
        let mut dau = vec![0.0; batch * h];
        let mut dar = vec![0.0; batch * h];
        let mut dhr = vec![0.0; batch * h];

        for step in (0..t_len).rev() {
            let t = if self.reverse { t_len - 1 - step } else { step };
            for b in 0..batch {
                let o = (b * t_len + t) * h;
                for j in 0..h {
                    let i = b * h + j;
                    let g = dout.data[o + j] + carry[i];
                    let (z, cand, hp) = (cache.z[o + j], cache.cand[o + j], cache.h_prev[o + j]);
                    dhp[i] = g * (1.0 - z);
                    dah[i] = g * z * (1.0 - cand * cand);
                    dau[i] = g * (cand - hp) * z * (1.0 - z);
                }
            }
            gemm(false, true, batch, h, h, 1.0, &dah, &self.w2_h.value.data, 0.0, &mut dhr);
            for b in 0..batch {
                let o = (b * t_len + t) * h;
                for j in 0..h {
                    let i = b * h + j;
                    let (r, hp) = (cache.r[o + j], cache.h_prev[o + j]);
                    dhp[i] += dhr[i] * r;
                    dar[i] = dhr[i] * hp * r * (1.0 - r);
                    da_u[o + j] = dau[i];
                    da_r[o + j] = dar[i];
                    da_h[o + j] = dah[i];
                }
            }
            gemm(false, true, batch, h, h, 1.0, &dau, &self.w2_u.value.data, 1.0, &mut dhp);
            gemm(false, true, batch, h, h, 1.0, &dar, &self.w2_r.value.data, 1.0, &mut dhp);
            std::mem::swap(&mut carry, &mut dhp);
        }

        let inp = self.input_dim();
        let x = &cache.x.data;
        gemm(true, false, h, h, rows, 1.0, &cache.h_prev, &da_u, 1.0, &mut self.w2_u.grad.data);
        gemm(true, false, h, h, rows, 1.0, &cache.h_prev, &da_r, 1.0, &mut self.w2_r.grad.data);
        gemm(true, false, h, h, rows, 1.0, &cache.h_reset, &da_h, 1.0, &mut self.w2_h.grad.data);
        gemm(true, false, inp, h, rows, 1.0, x, &da_u, 1.0, &mut self.w1_u.grad.data);
        gemm(true, false, inp, h, rows, 1.0, x, &da_r, 1.0, &mut self.w1_r.grad.data);
        gemm(true, false, inp, h, rows, 1.0, x, &da_h, 1.0, &mut self.w1_h.grad.data);
        add_column_sums(&da_u, h, &mut self.b_u.grad.data);
        add_column_sums(&da_r, h, &mut self.b_r.grad.data);
        add_column_sums(&da_h, h, &mut self.b_h.grad.data);

        if !need_dx {
            return Ok(None);
        }
        let mut dx = Tensor::zeros(&cache.x.shape);
        gemm(false, true, rows, inp, h, 1.0, &da_u, &self.w1_u.value.data, 0.0, &mut dx.data);
        gemm(false, true, rows, inp, h, 1.0, &da_r, &self.w1_r.value.data, 1.0, &mut dx.data);
        gemm(false, true, rows, inp, h, 1.0, &da_h, &self.w1_h.value.data, 1.0, &mut dx.data);
        Ok(Some(dx))
    }
}

impl Parameterized for Gru {
    fn params(&self) -> Vec<&Param> {
        vec![
            &self.w1_u, &self.w2_u, &self.b_u, &self.w1_r, &self.w2_r, &self.b_r, &self.w1_h, &self.w2_h, &self.b_h,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.w1_u,
            &mut self.w2_u,
            &mut self.b_u,
            &mut self.w1_r,
            &mut self.w2_r,
            &mut self.b_r,
            &mut self.w1_h,
            &mut self.w2_h,
            &mut self.b_h,
        ]
    }
}

/// Forward and reverse scans concatenated along the feature axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGru {
    pub fwd: Gru,
    pub bwd: Gru,
}

pub struct BiGruCache {
    fwd: GruCache,
    bwd: GruCache,
}

impl BiGru {
    pub fn new(input: usize, units: usize, rng: &mut SimRng) -> Self {
        let fwd = Gru::new(input, units, false, rng);
        let bwd = Gru::new(input, units, true, rng);
        Self::from_parts(fwd, bwd).expect("freshly built halves agree")
    }

    pub fn from_parts(mut fwd: Gru, mut bwd: Gru) -> Result<Self> {
        if fwd.units() != bwd.units() || fwd.input_dim() != bwd.input_dim() {
            return Err(Error::domain(format!(
                "bidirectional halves disagree: {}→{} vs {}→{}",
                fwd.input_dim(),
                fwd.units(),
                bwd.input_dim(),
                bwd.units()
            )));
        }
        fwd.reverse = false;
        bwd.reverse = true;
        prefix_names(fwd.params_mut(), "fwd.");
        prefix_names(bwd.params_mut(), "bwd.");
        Ok(Self { fwd, bwd })
    }

    pub fn units(&self) -> usize {
        self.fwd.units()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.units()
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, BiGruCache)> {
        let (f, fc) = self.fwd.forward(x)?;
        let (b, bc) = self.bwd.forward(x)?;
        let h = self.units();
        let mut data = Vec::with_capacity(f.len() * 2);
        for (fr, br) in f.data.chunks(h).zip(b.data.chunks(h)) {
            data.extend_from_slice(fr);
            data.extend_from_slice(br);
        }
        let shape = with_last_dim(&x.shape, 2 * h);
        Ok((Tensor { shape, data }, BiGruCache { fwd: fc, bwd: bc }))
    }

    pub fn backward(&mut self, cache: &BiGruCache, dout: &Tensor, need_dx: bool) -> Result<Option<Tensor>> {
        let h = self.units();
        let shape = with_last_dim(&dout.shape, h);
        let mut df = Vec::with_capacity(dout.len() / 2);
        let mut db = Vec::with_capacity(dout.len() / 2);
        for row in dout.data.chunks(2 * h) {
            df.extend_from_slice(&row[..h]);
            db.extend_from_slice(&row[h..]);
        }
        let dxf = self.fwd.backward(&cache.fwd, &Tensor { shape: shape.clone(), data: df }, need_dx)?;
        let dxb = self.bwd.backward(&cache.bwd, &Tensor { shape, data: db }, need_dx)?;
        Ok(match (dxf, dxb) {
            (Some(mut a), Some(b)) => {
                a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
                Some(a)
            }
            _ => None,
        })
    }
}

impl Parameterized for BiGru {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.fwd.params();
        v.extend(self.bwd.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.fwd.params_mut();
        v.extend(self.bwd.params_mut());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_halve_the_state() {
        let g = Gru::zeroed(3, 4);
        let h = g.cell(&[0.3, -1.0, 2.0], &[1.0, -2.0, 0.5, 8.0]).unwrap();
        assert_eq!(h, vec![0.5, -1.0, 0.25, 4.0]);
        assert_eq!(g.cell(&[1.0, 1.0, 1.0], &[0.0; 4]).unwrap(), vec![0.0; 4]);
        assert!(g.cell(&[1.0, 1.0], &[0.0; 4]).is_err());
    }

    #[test]
    fn cell_matches_hand_evaluation() {
        let mut rng = SimRng::new(5);
        let g = Gru::new(2, 2, false, &mut rng);
        let x = [0.4, -0.7];
        let hp = [0.1, -0.3];
        let mv = |w: &Param, v: &[f64]| -> Vec<f64> {
            let n = w.value.shape[1];
            (0..n).map(|j| v.iter().enumerate().map(|(i, a)| a * w.value.data[i * n + j]).sum()).collect()
        };
        let add = |a: Vec<f64>, b: Vec<f64>| a.iter().zip(&b).map(|(x, y)| x + y).collect::<Vec<f64>>();
        let z: Vec<f64> = add(mv(&g.w1_u, &x), mv(&g.w2_u, &hp)).iter().map(|a| sigmoid(*a)).collect();
        let r: Vec<f64> = add(mv(&g.w1_r, &x), mv(&g.w2_r, &hp)).iter().map(|a| sigmoid(*a)).collect();
        let hr: Vec<f64> = hp.iter().zip(&r).map(|(a, b)| a * b).collect();
        let c: Vec<f64> = add(mv(&g.w1_h, &x), mv(&g.w2_h, &hr)).iter().map(|a| a.tanh()).collect();
        let want: Vec<f64> = (0..2).map(|j| (1.0 - z[j]) * hp[j] + z[j] * c[j]).collect();
        let got = g.cell(&x, &hp).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn bidirectional_single_step_and_width() {
        let mut rng = SimRng::new(9);
        let bi = BiGru::new(3, 4, &mut rng);
        let x = Tensor::from_vec(&[1, 3], vec![0.2, 0.1, -0.5]).unwrap();
        let (y, _) = bi.forward(&x).unwrap();
        assert_eq!(y.shape, vec![1, 8]);
        let f = bi.fwd.cell(&x.data, &[0.0; 4]).unwrap();
        let b = bi.bwd.cell(&x.data, &[0.0; 4]).unwrap();
        assert_eq!(&y.data[..4], &f[..]);
        assert_eq!(&y.data[4..], &b[..]);
        assert_eq!(bi.params()[0].name, "fwd.w1_u");
    }

    #[test]
    fn palindrome_mirror_symmetry() {
        let mut rng = SimRng::new(2);
        let g = Gru::new(2, 3, false, &mut rng);
        let mut gb = g.clone();
        gb.reverse = true;
        let bi = BiGru::from_parts(g, gb).unwrap();
        let seq = [0.1, 0.5, -0.3, 0.9, 0.2, 0.2, -0.3, 0.9, 0.1, 0.5];
        let x = Tensor::from_vec(&[5, 2], seq.to_vec()).unwrap();
        let (y, _) = bi.forward(&x).unwrap();
        for t in 0..5 {
            let fwd = &y.data[t * 6..t * 6 + 3];
            let bwd = &y.data[(4 - t) * 6 + 3..(4 - t) * 6 + 6];
            for (a, b) in fwd.iter().zip(bwd) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mismatched_halves_rejected() {
        let mut rng = SimRng::new(2);
        let a = Gru::new(2, 3, false, &mut rng);
        let b = Gru::new(2, 4, true, &mut rng);
        assert!(matches!(BiGru::from_parts(a, b), Err(Error::Domain(_))));
    }
}
