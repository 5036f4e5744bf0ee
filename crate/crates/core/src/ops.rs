//! Forward and adjoint kernels for the layer primitives.
//!
//! Every convolution variant is expressed through three grouped kernels:
//! the forward cross-correlation, its adjoint with respect to the input
//! (which is also the transposed convolution), and its adjoint with respect
//! to the weights. Depthwise layers are the `groups == channels` case.

use crate::error::{Error, Result};
use crate::tensor::{conv_out_dim, tconv_out_dim, ConvKernel, Tensor4};

/// Geometry of one grouped convolution, seen from the forward direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

/// Range of output positions `o` for which `o * stride + k - padding` lands
/// inside `[0, in_len)`.
#[inline]
fn valid_range(out_len: usize, in_len: usize, stride: usize, k: usize, padding: usize) -> (usize, usize) {
    let lo = if padding > k { (padding - k).div_ceil(stride) } else { 0 };
    let hi = if in_len + padding > k {
        ((in_len - 1 + padding - k) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn check_groups(op: &'static str, cin: usize, cout: usize, weight: &Tensor4, groups: usize) -> Result<()> {
    if groups == 0 || !cin.is_multiple_of(groups) || !cout.is_multiple_of(groups) {
        return Err(Error::invalid(
            op,
            format!("{groups} groups do not divide {cin} input / {cout} output channels"),
        ));
    }
    if weight.shape()[1] != cin / groups {
        return Err(Error::Shape {
            op,
            dim: "kernel input channels",
            got: weight.shape()[1],
            expected: cin / groups,
        });
    }
    if weight.height() != weight.width() || weight.height() == 0 {
        return Err(Error::invalid(op, "kernel must be square with K >= 1"));
    }
    Ok(())
}

/// Grouped cross-correlation. `weight` is `(Cout, Cin / groups, K, K)`.
pub(crate) fn conv_forward(
    input: &Tensor4,
    weight: &Tensor4,
    bias: Option<&[f64]>,
    geo: ConvGeometry,
) -> Result<Tensor4> {
    const OP: &str = "conv2d";
    input.ensure_nonempty(OP)?;
    let [n_batch, cin, h, w] = input.shape();
    let [cout, cpg, k, _] = weight.shape();
    check_groups(OP, cin, cout, weight, geo.groups)?;
    if geo.stride == 0 {
        return Err(Error::invalid(OP, "stride must be >= 1"));
    }
    if let Some(b) = bias {
        if b.len() != cout {
            return Err(Error::Shape {
                op: OP,
                dim: "bias length",
                got: b.len(),
                expected: cout,
            });
        }
    }
    let (ho, wo) = match (
        conv_out_dim(h, k, geo.stride, geo.padding),
        conv_out_dim(w, k, geo.stride, geo.padding),
    ) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::invalid(
                OP,
                format!("kernel {k} larger than padded input {h}x{w}"),
            ))
        }
    };
    let out_per_group = cout / geo.groups;
    let (s, p) = (geo.stride, geo.padding);
    let mut out = Tensor4::zeros([n_batch, cout, ho, wo]);
    let wdata = weight.data();
    let xdata = input.data();
    let odata = out.data_mut();
    for n in 0..n_batch {
        for co in 0..cout {
            let g = co / out_per_group;
            let obase = (n * cout + co) * ho * wo;
            let oplane = &mut odata[obase..obase + ho * wo];
            if let Some(b) = bias {
                oplane.fill(b[co]);
            }
            for cl in 0..cpg {
                let ci = g * cpg + cl;
                let xplane = &xdata[(n * cin + ci) * h * w..][..h * w];
                for kh in 0..k {
                    let (oh_lo, oh_hi) = valid_range(ho, h, s, kh, p);
                    for kw in 0..k {
                        let wv = wdata[((co * cpg + cl) * k + kh) * k + kw];
                        let (ow_lo, ow_hi) = valid_range(wo, w, s, kw, p);
                        for oh in oh_lo..oh_hi {
                            let ih = oh * s + kh - p;
                            let xrow = &xplane[ih * w..(ih + 1) * w];
                            let orow = &mut oplane[oh * wo..(oh + 1) * wo];
                            for ow in ow_lo..ow_hi {
                                orow[ow] += wv * xrow[ow * s + kw - p];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`conv_forward`] with respect to its input: scatters `grad_out`
/// back onto an input of spatial size `in_hw`. This is the transposed
/// convolution.
pub(crate) fn conv_adjoint_input(
    grad_out: &Tensor4,
    weight: &Tensor4,
    geo: ConvGeometry,
    in_channels: usize,
    in_hw: (usize, usize),
) -> Result<Tensor4> {
    const OP: &str = "conv_transpose";
    grad_out.ensure_nonempty(OP)?;
    let [n_batch, cout, ho, wo] = grad_out.shape();
    let [wcout, cpg, k, _] = weight.shape();
    if wcout != cout {
        return Err(Error::Shape {
            op: OP,
            dim: "kernel output channels",
            got: wcout,
            expected: cout,
        });
    }
    check_groups(OP, in_channels, cout, weight, geo.groups)?;
    let (h, w) = in_hw;
    let (s, p) = (geo.stride, geo.padding);
    if conv_out_dim(h, k, s, p) != Some(ho) || conv_out_dim(w, k, s, p) != Some(wo) {
        return Err(Error::invalid(
            OP,
            format!("output {h}x{w} is not consistent with input {ho}x{wo} for K={k}, stride={s}, padding={p}"),
        ));
    }
    let out_per_group = cout / geo.groups;
    let mut grad_in = Tensor4::zeros([n_batch, in_channels, h, w]);
    let wdata = weight.data();
    let gdata = grad_out.data();
    let idata = grad_in.data_mut();
    for n in 0..n_batch {
        for co in 0..cout {
            let g = co / out_per_group;
            let gplane = &gdata[(n * cout + co) * ho * wo..][..ho * wo];
            for cl in 0..cpg {
                let ci = g * cpg + cl;
                let iplane = &mut idata[(n * in_channels + ci) * h * w..][..h * w];
                for kh in 0..k {
                    let (oh_lo, oh_hi) = valid_range(ho, h, s, kh, p);
                    for kw in 0..k {
                        let wv = wdata[((co * cpg + cl) * k + kh) * k + kw];
                        let (ow_lo, ow_hi) = valid_range(wo, w, s, kw, p);
                        for oh in oh_lo..oh_hi {
                            let ih = oh * s + kh - p;
                            let grow = &gplane[oh * wo..(oh + 1) * wo];
                            let irow = &mut iplane[ih * w..(ih + 1) * w];
                            for ow in ow_lo..ow_hi {
                                irow[ow * s + kw - p] += wv * grow[ow];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(grad_in)
}

/// Adjoint of [`conv_forward`] with respect to its weights.
pub(crate) fn conv_adjoint_weight(
    input: &Tensor4,
    grad_out: &Tensor4,
    kernel_size: usize,
    geo: ConvGeometry,
) -> Result<Tensor4> {
    let [n_batch, cin, h, w] = input.shape();
    let [gn, cout, ho, wo] = grad_out.shape();
    if gn != n_batch {
        return Err(Error::Shape {
            op: "conv_weight_grad",
            dim: "batch",
            got: gn,
            expected: n_batch,
        });
    }
    let cpg = cin / geo.groups;
    let out_per_group = cout / geo.groups;
    let k = kernel_size;
    let (s, p) = (geo.stride, geo.padding);
    let mut grad_w = Tensor4::zeros([cout, cpg, k, k]);
    let xdata = input.data();
    let gdata = grad_out.data();
    let wdata = grad_w.data_mut();
    for co in 0..cout {
        let g = co / out_per_group;
        for cl in 0..cpg {
            let ci = g * cpg + cl;
            for kh in 0..k {
                let (oh_lo, oh_hi) = valid_range(ho, h, s, kh, p);
                for kw in 0..k {
                    let (ow_lo, ow_hi) = valid_range(wo, w, s, kw, p);
                    let mut acc = 0.0;
                    for n in 0..n_batch {
                        let xplane = &xdata[(n * cin + ci) * h * w..][..h * w];
                        let gplane = &gdata[(n * cout + co) * ho * wo..][..ho * wo];
                        for oh in oh_lo..oh_hi {
                            let ih = oh * s + kh - p;
                            let xrow = &xplane[ih * w..(ih + 1) * w];
                            let grow = &gplane[oh * wo..(oh + 1) * wo];
                            for ow in ow_lo..ow_hi {
                                acc += grow[ow] * xrow[ow * s + kw - p];
                            }
                        }
                    }
                    wdata[((co * cpg + cl) * k + kh) * k + kw] = acc;
                }
            }
        }
    }
    Ok(grad_w)
}

/// Per-channel sum over batch and space.
pub(crate) fn channel_sums(t: &Tensor4) -> Vec<f64> {
    let [n_batch, c, _, _] = t.shape();
    let mut sums = vec![0.0; c];
    for n in 0..n_batch {
        for (ch, s) in sums.iter_mut().enumerate() {
            *s += t.plane(n, ch).iter().sum::<f64>();
        }
    }
    sums
}

fn check_input_channels(op: &'static str, input: &Tensor4, expected: usize) -> Result<()> {
    if input.channels() != expected {
        return Err(Error::Shape {
            op,
            dim: "input channels",
            got: input.channels(),
            expected,
        });
    }
    Ok(())
}

fn check_depthwise_kernel(op: &'static str, kernel: &ConvKernel) -> Result<()> {
    if kernel.weight.shape()[1] != 1 {
        return Err(Error::Shape {
            op,
            dim: "depthwise kernel group slot",
            got: kernel.weight.shape()[1],
            expected: 1,
        });
    }
    Ok(())
}

/// Standard cross-correlation with a `(Cout, Cin, K, K)` kernel.
pub fn conv2d(input: &Tensor4, kernel: &ConvKernel, stride: usize, padding: usize) -> Result<Tensor4> {
    check_input_channels("conv2d", input, kernel.weight.shape()[1])?;
    conv_forward(
        input,
        &kernel.weight,
        kernel.bias.as_deref(),
        ConvGeometry {
            stride,
            padding,
            groups: 1,
        },
    )
}

/// Per-channel spatial filtering with a `(C, 1, K, K)` kernel.
pub fn depthwise_conv2d(input: &Tensor4, kernel: &ConvKernel, stride: usize, padding: usize) -> Result<Tensor4> {
    check_depthwise_kernel("depthwise_conv2d", kernel)?;
    check_input_channels("depthwise_conv2d", input, kernel.weight.batch())?;
    let groups = input.channels();
    conv_forward(
        input,
        &kernel.weight,
        kernel.bias.as_deref(),
        ConvGeometry {
            stride,
            padding,
            groups,
        },
    )
}

/// 1x1 channel mixing.
pub fn pointwise_conv2d(input: &Tensor4, kernel: &ConvKernel) -> Result<Tensor4> {
    if kernel.kernel_size() != 1 {
        return Err(Error::invalid(
            "pointwise_conv2d",
            format!("kernel size {} != 1", kernel.kernel_size()),
        ));
    }
    conv2d(input, kernel, 1, 0)
}

pub(crate) fn tconv_output_hw(
    op: &'static str,
    input: &Tensor4,
    k: usize,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Result<(usize, usize)> {
    if stride == 0 {
        return Err(Error::invalid(op, "stride must be >= 1"));
    }
    if output_padding >= stride {
        return Err(Error::invalid(
            op,
            format!("output_padding {output_padding} must be smaller than stride {stride}"),
        ));
    }
    match (
        tconv_out_dim(input.height(), k, stride, padding, output_padding),
        tconv_out_dim(input.width(), k, stride, padding, output_padding),
    ) {
        (Some(h), Some(w)) => Ok((h, w)),
        _ => Err(Error::invalid(op, "padding removes the whole output")),
    }
}

fn add_channel_bias(out: &mut Tensor4, bias: &[f64]) -> Result<()> {
    let [n_batch, c, h, w] = out.shape();
    if bias.len() != c {
        return Err(Error::Shape {
            op: "bias",
            dim: "bias length",
            got: bias.len(),
            expected: c,
        });
    }
    let data = out.data_mut();
    for n in 0..n_batch {
        for (ch, &b) in bias.iter().enumerate() {
            for v in &mut data[(n * c + ch) * h * w..][..h * w] {
                *v += b;
            }
        }
    }
    Ok(())
}

pub(crate) fn tconv_forward(
    input: &Tensor4,
    weight: &Tensor4,
    bias: Option<&[f64]>,
    geo: ConvGeometry,
    output_padding: usize,
) -> Result<Tensor4> {
    const OP: &str = "tconv2d";
    input.ensure_nonempty(OP)?;
    let k = weight.height();
    let (h, w) = tconv_output_hw(OP, input, k, geo.stride, geo.padding, output_padding)?;
    let out_channels = weight.shape()[1] * geo.groups;
    let mut out = conv_adjoint_input(input, weight, geo, out_channels, (h, w))?;
    if let Some(b) = bias {
        add_channel_bias(&mut out, b)?;
    }
    Ok(out)
}

/// Transposed (fractionally strided) convolution with a `(Cin, Cout, K, K)`
/// kernel: the adjoint of [`conv2d`] with the same kernel, plus bias.
pub fn tconv2d(
    input: &Tensor4,
    kernel: &ConvKernel,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Result<Tensor4> {
    check_input_channels("tconv2d", input, kernel.weight.batch())?;
    tconv_forward(
        input,
        &kernel.weight,
        kernel.bias.as_deref(),
        ConvGeometry {
            stride,
            padding,
            groups: 1,
        },
        output_padding,
    )
}

/// Per-channel transposed convolution with a `(C, 1, K, K)` kernel.
pub fn depthwise_tconv2d(
    input: &Tensor4,
    kernel: &ConvKernel,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Result<Tensor4> {
    check_depthwise_kernel("depthwise_tconv2d", kernel)?;
    check_input_channels("depthwise_tconv2d", input, kernel.weight.batch())?;
    let groups = input.channels();
    tconv_forward(
        input,
        &kernel.weight,
        kernel.bias.as_deref(),
        ConvGeometry {
            stride,
            padding,
            groups,
        },
        output_padding,
    )
}

pub fn prelu(input: &Tensor4, slopes: &[f64]) -> Result<Tensor4> {
    if slopes.len() != input.channels() {
        return Err(Error::Shape {
            op: "prelu",
            dim: "slope count",
            got: slopes.len(),
            expected: input.channels(),
        });
    }
    let [n_batch, c, h, w] = input.shape();
    let mut out = input.clone();
    let data = out.data_mut();
    for n in 0..n_batch {
        for (ch, &a) in slopes.iter().enumerate() {
            for v in &mut data[(n * c + ch) * h * w..][..h * w] {
                if *v < 0.0 {
                    *v *= a;
                }
            }
        }
    }
    Ok(out)
}

#[inline]
pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(input: &Tensor4) -> Tensor4 {
    input.map(sigmoid_scalar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    /// Six-nested-loop direct convolution, written independently of the
    /// row-range machinery above.
    fn naive_conv(x: &Tensor4, k: &ConvKernel, stride: usize, pad: usize) -> Tensor4 {
        let [n, cin, h, w] = x.shape();
        let [cout, _, ks, _] = k.weight.shape();
        let ho = (h + 2 * pad - ks) / stride + 1;
        let wo = (w + 2 * pad - ks) / stride + 1;
        let mut y = Tensor4::zeros([n, cout, ho, wo]);
        for b in 0..n {
            for co in 0..cout {
                for oh in 0..ho {
                    for ow in 0..wo {
                        let mut acc = k.bias.as_ref().map_or(0.0, |bb| bb[co]);
                        for ci in 0..cin {
                            for kh in 0..ks {
                                for kw in 0..ks {
                                    let ih = (oh * stride + kh) as isize - pad as isize;
                                    let iw = (ow * stride + kw) as isize - pad as isize;
                                    if ih < 0 || iw < 0 || ih >= h as isize || iw >= w as isize {
                                        continue;
                                    }
                                    acc += x.get(b, ci, ih as usize, iw as usize) * k.weight.get(co, ci, kh, kw);
                                }
                            }
                        }
                        y.set(b, co, oh, ow, acc);
                    }
                }
            }
        }
        y
    }

    /// Expands a depthwise `(C,1,K,K)` kernel into a dense block-diagonal one.
    fn block_diagonal(dw: &ConvKernel) -> ConvKernel {
        let [c, _, k, _] = dw.weight.shape();
        let mut full = Tensor4::zeros([c, c, k, k]);
        for ch in 0..c {
            for kh in 0..k {
                for kw in 0..k {
                    full.set(ch, ch, kh, kw, dw.weight.get(ch, 0, kh, kw));
                }
            }
        }
        ConvKernel::new(full, dw.bias.clone())
    }

    fn assert_close(a: &Tensor4, b: &Tensor4, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn conv_sum_of_ones() {
        let x = Tensor4::full([1, 1, 3, 3], 1.0);
        let k = ConvKernel::without_bias(Tensor4::full([1, 1, 3, 3], 1.0));
        let y = conv2d(&x, &k, 1, 0).unwrap();
        assert_eq!(y.shape(), [1, 1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn conv_identity_kernel() {
        let x = Tensor4::random_uniform([2, 1, 5, 4], -1.0, 1.0, &mut rng());
        let k = ConvKernel::without_bias(Tensor4::full([1, 1, 1, 1], 1.0));
        assert_eq!(conv2d(&x, &k, 1, 0).unwrap(), x);
    }

    #[test]
    fn conv_matches_naive_loops() {
        let mut r = rng();
        let x = Tensor4::random_uniform([2, 3, 8, 8], -1.0, 1.0, &mut r);
        let k = ConvKernel::new(
            Tensor4::random_uniform([4, 3, 5, 5], -1.0, 1.0, &mut r),
            Some(vec![0.1, -0.2, 0.3, 0.0]),
        );
        let y = conv2d(&x, &k, 2, 2).unwrap();
        assert_eq!(y.shape(), [2, 4, 4, 4]);
        assert_close(&y, &naive_conv(&x, &k, 2, 2), 1e-12);
    }

    #[test]
    fn conv_reports_channel_mismatch() {
        let x = Tensor4::zeros([1, 2, 4, 4]);
        let k = ConvKernel::without_bias(Tensor4::zeros([1, 3, 3, 3]));
        let err = conv2d(&x, &k, 1, 1).unwrap_err();
        assert!(matches!(
            err,
            Error::Shape {
                dim: "input channels",
                got: 2,
                expected: 3,
                ..
            }
        ));
    }

    #[test]
    fn depthwise_selector_kernels() {
        let x = Tensor4::random_uniform([1, 2, 4, 4], 0.5, 1.0, &mut rng());
        let mut w = Tensor4::zeros([2, 1, 1, 1]);
        w.set(0, 0, 0, 0, 1.0);
        let y = depthwise_conv2d(&x, &ConvKernel::without_bias(w), 1, 0).unwrap();
        assert_eq!(y.plane(0, 0), x.plane(0, 0));
        assert!(y.plane(0, 1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn depthwise_sum_of_ones() {
        let x = Tensor4::full([1, 3, 3, 3], 1.0);
        let k = ConvKernel::without_bias(Tensor4::full([3, 1, 3, 3], 1.0));
        let y = depthwise_conv2d(&x, &k, 1, 0).unwrap();
        assert_eq!(y.shape(), [1, 3, 1, 1]);
        assert!(y.data().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn depthwise_equals_block_diagonal_conv() {
        let mut r = rng();
        let x = Tensor4::random_uniform([1, 4, 6, 6], -1.0, 1.0, &mut r);
        let k = ConvKernel::new(
            Tensor4::random_uniform([4, 1, 3, 3], -1.0, 1.0, &mut r),
            Some(vec![0.5; 4]),
        );
        let y = depthwise_conv2d(&x, &k, 1, 1).unwrap();
        assert_close(&y, &conv2d(&x, &block_diagonal(&k), 1, 1).unwrap(), 1e-12);
    }

    #[test]
    fn pointwise_cases() {
        let mut r = rng();
        let x = Tensor4::random_uniform([2, 3, 4, 4], -1.0, 1.0, &mut r);
        let mut eye = Tensor4::zeros([3, 3, 1, 1]);
        for c in 0..3 {
            eye.set(c, c, 0, 0, 1.0);
        }
        assert_eq!(pointwise_conv2d(&x, &ConvKernel::without_bias(eye)).unwrap(), x);

        let v = 1.5;
        let c = Tensor4::full([1, 3, 2, 2], v);
        let row = Tensor4::from_vec([1, 3, 1, 1], vec![0.5, -2.0, 4.0]).unwrap();
        let y = pointwise_conv2d(&c, &ConvKernel::new(row, Some(vec![0.0]))).unwrap();
        assert!(y.data().iter().all(|&o| (o - v * 2.5).abs() < 1e-15));

        let k = ConvKernel::new(
            Tensor4::random_uniform([5, 3, 1, 1], -1.0, 1.0, &mut r),
            Some(vec![0.1; 5]),
        );
        assert_eq!(pointwise_conv2d(&x, &k).unwrap(), conv2d(&x, &k, 1, 0).unwrap());

        let wide = ConvKernel::without_bias(Tensor4::zeros([3, 3, 3, 3]));
        assert!(pointwise_conv2d(&x, &wide).is_err());
    }

    #[test]
    fn tconv_single_pixel_broadcast() {
        let v = 2.5;
        let x = Tensor4::full([1, 1, 1, 1], v);
        let w = Tensor4::random_uniform([1, 1, 3, 3], -1.0, 1.0, &mut rng());
        let y = tconv2d(&x, &ConvKernel::without_bias(w.clone()), 1, 0, 0).unwrap();
        assert_eq!(y.shape(), [1, 1, 3, 3]);
        assert_close(&y, &w.scale(v), 1e-15);
    }

    #[test]
    fn tconv_shape_and_output_padding() {
        let x = Tensor4::zeros([1, 2, 4, 4]);
        let k = ConvKernel::without_bias(Tensor4::zeros([2, 3, 5, 5]));
        assert_eq!(tconv2d(&x, &k, 2, 2, 1).unwrap().shape(), [1, 3, 8, 8]);
        assert!(matches!(tconv2d(&x, &k, 2, 2, 2), Err(Error::InvalidArgument { .. })));
        assert!(tconv2d(&x, &k, 1, 2, 1).is_err());
    }

    #[test]
    fn depthwise_tconv_broadcast_and_block_diagonal() {
        let mut r = rng();
        let x = Tensor4::from_vec([1, 2, 1, 1], vec![2.0, -3.0]).unwrap();
        let w = Tensor4::random_uniform([2, 1, 3, 3], -1.0, 1.0, &mut r);
        let y = depthwise_tconv2d(&x, &ConvKernel::without_bias(w.clone()), 1, 0, 0).unwrap();
        for (c, v) in [(0, 2.0), (1, -3.0)] {
            for (a, b) in y.plane(0, c).iter().zip(w.plane(c, 0)) {
                assert!((a - v * b).abs() < 1e-15);
            }
        }

        let x = Tensor4::random_uniform([2, 3, 4, 4], -1.0, 1.0, &mut r);
        let k = ConvKernel::new(
            Tensor4::random_uniform([3, 1, 5, 5], -1.0, 1.0, &mut r),
            Some(vec![0.2, 0.0, -0.1]),
        );
        let y = depthwise_tconv2d(&x, &k, 2, 2, 1).unwrap();
        assert_eq!(y.shape(), [2, 3, 8, 8]);
        assert_close(&y, &tconv2d(&x, &block_diagonal(&k), 2, 2, 1).unwrap(), 1e-12);
    }

    #[test]
    fn prelu_cases() {
        let x = Tensor4::from_vec([1, 2, 1, 2], vec![1.0, 0.0, -2.0, 3.0]).unwrap();
        let y = prelu(&x, &[0.5, 0.25]).unwrap();
        assert_eq!(y.data(), &[1.0, 0.0, -0.5, 3.0]);
        let relu = prelu(&x, &[0.0, 0.0]).unwrap();
        assert_eq!(relu.data(), &[1.0, 0.0, 0.0, 3.0]);
        assert!(prelu(&x, &[0.1]).is_err());
    }

    #[test]
    fn sigmoid_cases() {
        let x = Tensor4::from_vec([1, 1, 1, 3], vec![0.0, 800.0, -800.0]).unwrap();
        let y = sigmoid(&x);
        assert_eq!(y.data()[0], 0.5);
        assert!((y.data()[1] - 1.0).abs() < 1e-15);
        assert!(y.data()[2] >= 0.0 && y.data()[2] < 1e-300);
        let x = Tensor4::random_uniform([1, 2, 3, 3], -6.0, 6.0, &mut rng());
        let pos = sigmoid(&x);
        let neg = sigmoid(&x.scale(-1.0));
        for (a, b) in pos.data().iter().zip(neg.data()) {
            assert!((a + b - 1.0).abs() < 1e-15);
        }
    }
}
