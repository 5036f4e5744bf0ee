//! Pixel scaling, real/complex reshaping and transmit power normalization.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

pub const PIXEL_MAX: f64 = 255.0;

fn check_range(t: &Tensor4, hi: f64) -> Result<()> {
    match t.data().iter().find(|v| !(0.0..=hi).contains(*v)) {
        Some(&value) => Err(Error::PixelRange { value, lo: 0.0, hi }),
        None => Ok(()),
    }
}

/// `[0, 255] -> [0, 1]`.
pub fn normalize_pixels(image: &Tensor4) -> Result<Tensor4> {
    check_range(image, PIXEL_MAX)?;
    Ok(image.map(|v| v / PIXEL_MAX))
}

/// `[0, 1] -> [0, 255]`.
pub fn denormalize_pixels(image: &Tensor4) -> Result<Tensor4> {
    check_range(image, 1.0)?;
    Ok(image.map(|v| v * PIXEL_MAX))
}

/// Pairs consecutive row-major scalars of each batch item into complex
/// symbols `(re, im)`.
pub fn reshape_to_complex(feature: &Tensor4) -> Result<Vec<Vec<Complex64>>> {
    let per_item = feature.channels() * feature.height() * feature.width();
    if !per_item.is_multiple_of(2) {
        return Err(Error::OddElementCount(per_item));
    }
    Ok((0..feature.batch())
        .map(|n| {
            feature
                .item(n)
                .chunks_exact(2)
                .map(|p| Complex64::new(p[0], p[1]))
                .collect()
        })
        .collect())
}

/// Inverse of [`reshape_to_complex`] onto per-item shape `(c, h, w)`.
pub fn complex_to_feature(symbols: &[Vec<Complex64>], chw: [usize; 3]) -> Result<Tensor4> {
    let per_item = chw.iter().product::<usize>();
    let mut data = Vec::with_capacity(symbols.len() * per_item);
    for z in symbols {
        if 2 * z.len() != per_item {
            return Err(Error::Shape {
                op: "complex_to_feature",
                dim: "symbol count",
                got: z.len(),
                expected: per_item / 2,
            });
        }
        for s in z {
            data.push(s.re);
            data.push(s.im);
        }
    }
    Tensor4::from_vec([symbols.len(), chw[0], chw[1], chw[2]], data)
}

/// `z = sqrt(k·P̃) · z̃ / sqrt(z̃ᴴz̃)`.
pub fn power_normalize(z: &[Complex64], k: usize, power: f64) -> Result<Vec<Complex64>> {
    let norm = z.iter().map(|s| s.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    if power.is_nan() || power <= 0.0 {
        return Err(Error::invalid(
            "power_normalize",
            format!("power {power} must be positive"),
        ));
    }
    let scale = (k as f64 * power).sqrt() / norm;
    Ok(z.iter().map(|s| s * scale).collect())
}

pub fn squared_norm(z: &[Complex64]) -> f64 {
    z.iter().map(|s| s.norm_sqr()).sum()
}
