use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::init::glorot_uniform;
use crate::nn::loss::softmax_rows;
use crate::nn::tensor::{add_column_sums, affine, gemm, Param, Parameterized, Tensor};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    None,
    Relu,
    Softmax,
}

/// Fully connected layer applied to the last axis: `y = act(x·W + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
    pub activation: Activation,
}

pub struct DenseCache {
    x: Tensor,
    y: Vec<f64>,
}

impl Dense {
    pub fn new(input: usize, output: usize, activation: Activation, rng: &mut SimRng) -> Self {
        Self {
            weight: Param::new("weight", glorot_uniform(input, output, rng)),
            bias: Param::zeros("bias", &[output]),
            activation,
        }
    }

    pub fn from_params(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weight.shape.len() != 2 || bias.shape != [weight.shape[1]] {
            return Err(Error::domain(format!(
                "dense weight {:?} and bias {:?} disagree",
                weight.shape, bias.shape
            )));
        }
        Ok(Self {
            weight: Param::new("weight", weight),
            bias: Param::new("bias", bias),
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.shape[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.shape[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, DenseCache)> {
        x.expect_cols(self.input_dim(), "dense input")?;
        let rows = x.rows();
        let out = self.output_dim();
        let mut y = affine(&x.data, rows, &self.weight.value, Some(&self.bias.value));
        match self.activation {
            Activation::None => {}
            Activation::Relu => y.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Softmax => softmax_rows(&mut y, out),
        }
        let mut shape = x.shape.clone();
        *shape.last_mut().unwrap() = out;
        let cache = DenseCache { x: x.clone(), y: y.clone() };
        Ok((Tensor { shape, data: y }, cache))
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &DenseCache, dy: &Tensor) -> Result<Tensor> {
        let (inp, out) = (self.input_dim(), self.output_dim());
        if dy.data.len() != cache.y.len() {
            return Err(Error::shape(format!("dense output gradient {:?}", dy.shape)));
        }
        let rows = cache.x.rows();
        let mut dz = dy.data.clone();
        match self.activation {
            Activation::None => {}
            Activation::Relu => dz.iter_mut().zip(&cache.y).for_each(|(g, y)| {
                if *y <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::Softmax => {
                for (g, y) in dz.chunks_mut(out).zip(cache.y.chunks(out)) {
                    let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                    g.iter_mut().zip(y).for_each(|(a, b)| *a = b * (*a - dot));
                }
            }
        }
        gemm(true, false, inp, out, rows, 1.0, &cache.x.data, &dz, 1.0, &mut self.weight.grad.data);
        add_column_sums(&dz, out, &mut self.bias.grad.data);
        let mut dx = Tensor::zeros(&cache.x.shape);
        gemm(false, true, rows, inp, out, 1.0, &dz, &self.weight.value.data, 0.0, &mut dx.data);
        Ok(dx)
    }
}

impl Parameterized for Dense {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_through() {
        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            w.data[i * 3 + i] = 1.0;
        }
        let d = Dense::from_params(w, Tensor::zeros(&[3]), Activation::None).unwrap();
        let x = Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, -0.25]).unwrap();
        assert_eq!(d.forward(&x).unwrap().0, x);
    }

    #[test]
    fn softmax_of_zero_row_is_uniform() {
        let d = Dense::from_params(Tensor::zeros(&[4, 2]), Tensor::zeros(&[2]), Activation::Softmax).unwrap();
        let (y, _) = d.forward(&Tensor::from_vec(&[1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
        assert_eq!(y.data, vec![0.5, 0.5]);
    }

    #[test]
    fn shape_mismatch_is_domain_error() {
        let d = Dense::new(3, 2, Activation::Relu, &mut SimRng::new(0));
        assert!(matches!(d.forward(&Tensor::zeros(&[2, 4])), Err(Error::Domain(_))));
    }
}
