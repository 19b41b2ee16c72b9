use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

pub const LOG_EPS: f64 = 1e-12;

/// In-place numerically stable softmax over each row of width `cols`.
pub fn softmax_rows(data: &mut [f64], cols: usize) {
    for row in data.chunks_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
}

fn check_pair(probs: &Tensor, targets: &Tensor) -> Result<()> {
    if probs.shape != targets.shape || probs.shape.is_empty() {
        return Err(Error::domain(format!(
            "probabilities {:?} and targets {:?} differ",
            probs.shape, targets.shape
        )));
    }
    Ok(())
}

/// Mean over rows of `−Σ target·ln(prob + ε)`.
pub fn cross_entropy(probs: &Tensor, targets: &Tensor) -> Result<f64> {
    check_pair(probs, targets)?;
    let rows = probs.rows();
    if rows == 0 {
        return Err(Error::domain("cross-entropy of an empty batch"));
    }
    let total: f64 = probs
        .data
        .iter()
        .zip(&targets.data)
        .filter(|(_, t)| **t != 0.0)
        .map(|(p, t)| -t * (p + LOG_EPS).ln())
        .sum();
    Ok(total / rows as f64)
}

/// Gradient of [`cross_entropy`] with respect to the pre-softmax logits:
/// `(probs − targets) / rows`.
pub fn cross_entropy_logit_grad(probs: &Tensor, targets: &Tensor) -> Result<Tensor> {
    check_pair(probs, targets)?;
    let n = probs.rows() as f64;
    let data = probs.data.iter().zip(&targets.data).map(|(p, t)| (p - t) / n).collect();
    Ok(Tensor { shape: probs.shape.clone(), data })
}

/// `w_pre·pre + w_att·att`.
pub fn weighted_skip_add(pre: &Tensor, att: &Tensor, w_pre: f64, w_att: f64) -> Result<Tensor> {
    if pre.shape != att.shape {
        return Err(Error::domain(format!("skip add of {:?} and {:?}", pre.shape, att.shape)));
    }
    let data = pre.data.iter().zip(&att.data).map(|(a, b)| w_pre * a + w_att * b).collect();
    Ok(Tensor { shape: pre.shape.clone(), data })
}

/// Gradients of [`weighted_skip_add`]: `(w_pre·dy, w_att·dy)`.
pub fn weighted_skip_add_backward(dy: &Tensor, w_pre: f64, w_att: f64) -> (Tensor, Tensor) {
    let scale = |w: f64| Tensor {
        shape: dy.shape.clone(),
        data: dy.data.iter().map(|g| w * g).collect(),
    };
    (scale(w_pre), scale(w_att))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_examples() {
        let mut t = Tensor::zeros(&[2, 13]);
        t.data[3] = 1.0;
        t.data[13 + 7] = 1.0;
        assert!(cross_entropy(&t, &t).unwrap() < 1e-11);
        let u = Tensor::from_vec(&[2, 13], vec![1.0 / 13.0; 26]).unwrap();
        assert!((cross_entropy(&u, &t).unwrap() - 13f64.ln()).abs() < 1e-10);
        assert!(cross_entropy(&u, &Tensor::zeros(&[2, 12])).is_err());
    }

    #[test]
    fn logit_gradient_matches_finite_differences() {
        let logits = vec![0.3, -1.2, 0.8, 2.0, 0.1, -0.4];
        let mut targets = Tensor::zeros(&[2, 3]);
        targets.data[2] = 1.0;
        targets.data[3] = 1.0;
        let loss = |l: &[f64]| {
            let mut p = l.to_vec();
            softmax_rows(&mut p, 3);
            cross_entropy(&Tensor::from_vec(&[2, 3], p).unwrap(), &targets).unwrap()
        };
        let mut p = logits.clone();
        softmax_rows(&mut p, 3);
        let g = cross_entropy_logit_grad(&Tensor::from_vec(&[2, 3], p).unwrap(), &targets).unwrap();
        let eps = 1e-5;
        for i in 0..6 {
            let mut a = logits.clone();
            let mut b = logits.clone();
            a[i] += eps;
            b[i] -= eps;
            let num = (loss(&a) - loss(&b)) / (2.0 * eps);
            assert!((num - g.data[i]).abs() < 1e-8, "{i}: {num} vs {}", g.data[i]);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut d = vec![1000.0, 1001.0, -5.0, 0.0, 0.0, 0.0];
        softmax_rows(&mut d, 3);
        for r in d.chunks(3) {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn skip_add_examples() {
        let pre = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        let att = Tensor::from_vec(&[1], vec![0.0]).unwrap();
        assert_eq!(weighted_skip_add(&pre, &att, 0.7, 0.3).unwrap().data, vec![0.7]);
        let v = Tensor::from_vec(&[3], vec![0.25, -2.0, 8.0]).unwrap();
        assert_eq!(weighted_skip_add(&v, &v, 0.5, 0.5).unwrap(), v);
        let (a, b) = weighted_skip_add_backward(&Tensor::from_vec(&[1], vec![1.0]).unwrap(), 0.7, 0.3);
        assert_eq!((a.data[0], b.data[0]), (0.7, 0.3));
        assert!(weighted_skip_add(&pre, &v, 0.7, 0.3).is_err());
    }
}
