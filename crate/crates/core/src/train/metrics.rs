//! Reconstruction losses and PSNR.

use crate::error::Result;
use crate::tensor::Tensor4;

/// Reported PSNR for a lossless reconstruction.
pub const PSNR_CAP_DB: f64 = 100.0;

const PEAK: f64 = 255.0;

/// Batch mean of per-sample squared error norms, `(1/L) Σ_l ‖x_l − x̂_l‖²`.
pub fn mse_loss(x: &Tensor4, x_hat: &Tensor4) -> Result<f64> {
    x.ensure_same_shape(x_hat, "mse_loss")?;
    let total: f64 = x.data().iter().zip(x_hat.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(total / x.batch() as f64)
}

/// Mean squared error per scalar.
pub fn pixel_mse(x: &Tensor4, x_hat: &Tensor4) -> Result<f64> {
    x.ensure_same_shape(x_hat, "pixel_mse")?;
    let total: f64 = x.data().iter().zip(x_hat.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(total / x.len() as f64)
}

/// `10·log10(255² / mse)`; `+∞` when `mse` is zero.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

/// PSNR of `x_hat` against `x`, both on the `[0, 255]` scale.
pub fn psnr(x: &Tensor4, x_hat: &Tensor4) -> Result<f64> {
    Ok(psnr_from_mse(pixel_mse(x, x_hat)?))
}

/// Per-image PSNRs of a batch.
pub fn psnr_per_item(x: &Tensor4, x_hat: &Tensor4) -> Result<Vec<f64>> {
    x.ensure_same_shape(x_hat, "psnr_per_item")?;
    Ok((0..x.batch())
        .map(|n| {
            let (a, b) = (x.item(n), x_hat.item(n));
            let mse = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / a.len() as f64;
            psnr_from_mse(mse)
        })
        .collect())
}
