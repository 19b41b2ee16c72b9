use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::rng::SimRng;

/// Inverted dropout. Returns the output and, in training mode, the scaling
/// mask (0 or 1/(1−ratio)) needed for the backward pass.
pub fn dropout(x: &Tensor, ratio: f64, training: bool, seed: u64) -> Result<(Tensor, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::domain(format!("dropout ratio {ratio} outside [0, 1)")));
    }
    if !training || ratio == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 / (1.0 - ratio);
    let mut rng = SimRng::new(seed);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.uniform() < ratio { 0.0 } else { keep })
        .collect();
    let data = x.data.iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((Tensor { shape: x.shape.clone(), data }, Some(mask)))
}

pub fn dropout_backward(dy: &Tensor, mask: Option<&[f64]>) -> Tensor {
    match mask {
        None => dy.clone(),
        Some(m) => Tensor {
            shape: dy.shape.clone(),
            data: dy.data.iter().zip(m).map(|(g, k)| g * k).collect(),
        },
    }
}
