use crate::error::Result;
use crate::nn::tensor::Tensor;

/// Fixed sinusoidal table: `pe[t, 2i] = sin(t / 10000^(2i/dim))`,
/// `pe[t, 2i+1] = cos(t / 10000^(2i/dim))`.
pub fn positional_encoding(t_len: usize, dim: usize) -> Tensor {
    let mut data = vec![0.0; t_len * dim];
    for t in 0..t_len {
        for j in 0..dim {
            let pair = (j / 2 * 2) as f64;
            let angle = t as f64 / 10000f64.powf(pair / dim as f64);
            data[t * dim + j] = if j % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor { shape: vec![t_len, dim], data }
}

/// Adds the encoding to every sequence of a (…, T, dim) tensor.
pub fn add_positional(x: &Tensor) -> Result<Tensor> {
    let dims = x.shape.len();
    let (t_len, dim) = if dims >= 2 {
        (x.shape[dims - 2], x.shape[dims - 1])
    } else {
        (1, x.cols())
    };
    let pe = positional_encoding(t_len, dim);
    let mut out = x.clone();
    for seq in out.data.chunks_mut(t_len * dim) {
        seq.iter_mut().zip(&pe.data).for_each(|(v, p)| *v += p);
    }
    Ok(out)
}
