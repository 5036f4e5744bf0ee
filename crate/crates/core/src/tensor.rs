//! Dense 4-D tensors in N-C-H-W order and convolution kernels.

use rand::Rng;

use crate::error::{Error, Result};

/// A dense `(batch, channels, height, width)` array of `f64`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: [usize; 4], value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Shape {
                op: "Tensor4::from_vec",
                dim: "data length",
                got: data.len(),
                expected,
            });
        }
        Ok(Self { shape, data })
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn random_uniform<R: Rng + ?Sized>(shape: [usize; 4], lo: f64, hi: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + h) * self.shape[3] + w
    }

    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.index(n, c, h, w)]
    }

    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, v: f64) {
        let i = self.index(n, c, h, w);
        self.data[i] = v;
    }

    /// Elements belonging to batch item `n`.
    pub fn item(&self, n: usize) -> &[f64] {
        let per = self.shape[1] * self.shape[2] * self.shape[3];
        &self.data[n * per..(n + 1) * per]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [f64] {
        let per = self.shape[1] * self.shape[2] * self.shape[3];
        &mut self.data[n * per..(n + 1) * per]
    }

    /// Spatial plane `(n, c)`.
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let hw = self.shape[2] * self.shape[3];
        let start = (n * self.shape[1] + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|x| x * factor)
    }

    /// Elementwise sum; shapes must match exactly.
    pub fn add(&self, other: &Tensor4) -> Result<Self> {
        self.ensure_same_shape(other, "add")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self {
            shape: self.shape,
            data,
        })
    }

    pub fn add_assign(&mut self, other: &Tensor4) -> Result<()> {
        self.ensure_same_shape(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Tensor4) -> Result<f64> {
        self.ensure_same_shape(other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub(crate) fn ensure_same_shape(&self, other: &Tensor4, op: &'static str) -> Result<()> {
        const DIMS: [&str; 4] = ["batch", "channels", "height", "width"];
        for ((dim, &expected), &got) in DIMS.iter().zip(&self.shape).zip(&other.shape) {
            if got != expected {
                return Err(Error::Shape { op, dim, got, expected });
            }
        }
        Ok(())
    }

    pub(crate) fn ensure_nonempty(&self, op: &'static str) -> Result<()> {
        if let Some(i) = self.shape.iter().position(|&d| d == 0) {
            const DIMS: [&str; 4] = ["batch", "channels", "height", "width"];
            return Err(Error::invalid(op, format!("{} dimension is zero", DIMS[i])));
        }
        Ok(())
    }
}

/// Learnable contents of one convolution.
///
/// Standard kernels are `(Cout, Cin, K, K)`, depthwise ones `(C, 1, K, K)`.
/// Transposed kernels reuse the layout of the forward convolution they are
/// the adjoint of, i.e. `(Cin, Cout, K, K)` from the transposed layer's view.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel {
    pub weight: Tensor4,
    pub bias: Option<Vec<f64>>,
}

impl ConvKernel {
    pub fn new(weight: Tensor4, bias: Option<Vec<f64>>) -> Self {
        Self { weight, bias }
    }

    pub fn without_bias(weight: Tensor4) -> Self {
        Self { weight, bias: None }
    }

    pub fn kernel_size(&self) -> usize {
        self.weight.height()
    }
}

/// Output spatial size of a forward convolution, `None` when the kernel does
/// not fit the padded input.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Output spatial size of a transposed convolution.
pub fn tconv_out_dim(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Option<usize> {
    if input == 0 || stride == 0 {
        return None;
    }
    ((input - 1) * stride + kernel + output_padding)
        .checked_sub(2 * padding)
        .filter(|&d| d > 0)
}
