//! Per-window instance normalization and its inverse.
//!
//! Statistics are computed per channel over the L lookback steps with
//! the population divisor, in f64 regardless of the training precision.
//! μ and σ are data-derived constants, so the only piece that must live
//! on the tape is the de-normalizing affine map applied to predictions.

use crate::error::{PamError, Result};
use crate::tensor::{Real, Tensor};

/// Standardizes each channel of an L×N window: (x − μ)/√(σ² + ε).
/// Returns the normalized window plus per-channel μ and σ (population
/// std) for the inverse map.
pub fn instance_normalize<T: Real>(
    x: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    if x.rank() != 2 {
        return Err(PamError::Domain(format!(
            "instance_normalize expects an L×N window, got shape {:?}",
            x.shape()
        )));
    }
    let (l, n) = (x.rows(), x.cols());
    let mut mu = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut out = Tensor::zeros(vec![l, n]);
    for j in 0..n {
        let mean = (0..l).map(|i| x.at(i, j).to_f64()).sum::<f64>() / l as f64;
        let var = (0..l)
            .map(|i| {
                let d = x.at(i, j).to_f64() - mean;
                d * d
            })
            .sum::<f64>()
            / l as f64;
        let denom = (var + eps).sqrt();
        for i in 0..l {
            *out.at_mut(i, j) = T::from_f64((x.at(i, j).to_f64() - mean) / denom);
        }
        mu.push(T::from_f64(mean));
        sigma.push(T::from_f64(var.sqrt()));
    }
    let mu = Tensor::new(vec![n], mu).expect("mu shape");
    let sigma = Tensor::new(vec![n], sigma).expect("sigma shape");
    Ok((out, mu, sigma))
}

/// Inverse of [`instance_normalize`] applied to an H×N prediction:
/// ŷ·√(σ² + ε) + μ per channel.
pub fn instance_denormalize<T: Real>(
    yhat: &Tensor<T>,
    mu: &Tensor<T>,
    sigma: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    if yhat.rank() != 2 || mu.len() != yhat.cols() || sigma.len() != yhat.cols() {
        return Err(PamError::Dimension {
            op: "instance_denormalize",
            left: yhat.shape().to_vec(),
            right: vec![mu.len(), sigma.len()],
        });
    }
    let (scale, shift) = denorm_factors(mu, sigma, eps);
    let (h, n) = (yhat.rows(), yhat.cols());
    let mut out = Tensor::zeros(vec![h, n]);
    for i in 0..h {
        for j in 0..n {
            *out.at_mut(i, j) = yhat.at(i, j) * scale[j] + shift[j];
        }
    }
    Ok(out)
}

/// Per-column affine coefficients of the inverse map: scale √(σ²+ε)
/// and shift μ. The forward pass feeds these into the taped column
/// scaling so gradients pass through de-normalization.
pub fn denorm_factors<T: Real>(mu: &Tensor<T>, sigma: &Tensor<T>, eps: f64) -> (Vec<T>, Vec<T>) {
    let scale = sigma
        .data()
        .iter()
        .map(|&s| {
            let s = s.to_f64();
            T::from_f64((s * s + eps).sqrt())
        })
        .collect();
    (scale, mu.data().to_vec())
}
