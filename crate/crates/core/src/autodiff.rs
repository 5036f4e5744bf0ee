//! Tape-based reverse-mode differentiation over the codec primitives.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::ops::{channel_sums, conv_adjoint_input, conv_adjoint_weight, conv_forward, tconv_forward, ConvGeometry};
use crate::tensor::Tensor4;

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geo: ConvGeometry,
    },
    TConv {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geo: ConvGeometry,
    },
    PRelu {
        input: Var,
        slopes: Var,
    },
    Sigmoid {
        input: Var,
    },
    Scale {
        input: Var,
        factor: f64,
    },
    AddConst {
        input: Var,
    },
    /// Multiplies each batch item's interleaved complex pairs by one gain.
    ComplexGain {
        input: Var,
        gains: Vec<(f64, f64)>,
    },
    /// `alpha * x / |x|` per batch item; `norms` holds `|x|` per item.
    PowerNorm {
        input: Var,
        alphas: Vec<f64>,
        norms: Vec<f64>,
    },
    /// Mean squared error against a constant target; scalar output.
    MseMean {
        input: Var,
        target: Tensor4,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor4,
    op: Op,
    needs_grad: bool,
}

/// Records a forward computation so that [`Tape::backward`] can replay it.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct GradRecord {
    tape: u64,
    grads: Vec<Option<Tensor4>>,
}

impl GradRecord {
    /// Gradient of `var`, or `None` if it does not influence the output or
    /// was recorded as a constant.
    pub fn get(&self, var: Var) -> Option<&Tensor4> {
        if var.tape != self.tape {
            return None;
        }
        self.grads.get(var.index).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor4> {
        if var.tape != self.tape {
            return None;
        }
        self.grads.get_mut(var.index).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, var: Var) -> Result<&Node> {
        if var.tape != self.id {
            return Err(Error::Unrecorded { node: var.index });
        }
        self.nodes.get(var.index).ok_or(Error::Unrecorded { node: var.index })
    }

    fn push(&mut self, value: Tensor4, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    /// A leaf whose gradient is tracked (parameters, or inputs under test).
    pub fn param(&mut self, value: Tensor4) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor4) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> Result<&Tensor4> {
        Ok(&self.check(var)?.value)
    }

    fn needs(&self, vars: &[Option<Var>]) -> bool {
        vars.iter().flatten().any(|v| self.nodes[v.index].needs_grad)
    }

    fn bias_slice(&self, bias: Option<Var>) -> Result<Option<&[f64]>> {
        bias.map(|b| self.check(b).map(|n| n.value.data())).transpose()
    }

    fn grouped_conv(&mut self, input: Var, weight: Var, bias: Option<Var>, geo: ConvGeometry) -> Result<Var> {
        let x = &self.check(input)?.value;
        let w = &self.check(weight)?.value;
        let y = conv_forward(x, w, self.bias_slice(bias)?, geo)?;
        let needs = self.needs(&[Some(input), Some(weight), bias]);
        Ok(self.push(
            y,
            Op::Conv {
                input,
                weight,
                bias,
                geo,
            },
            needs,
        ))
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        self.grouped_conv(
            input,
            weight,
            bias,
            ConvGeometry {
                stride,
                padding,
                groups: 1,
            },
        )
    }

    pub fn depthwise_conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let groups = self.check(input)?.value.channels();
        self.grouped_conv(
            input,
            weight,
            bias,
            ConvGeometry {
                stride,
                padding,
                groups,
            },
        )
    }

    pub fn pointwise_conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let k = self.check(weight)?.value.height();
        if k != 1 {
            return Err(Error::invalid("pointwise_conv2d", format!("kernel size {k} != 1")));
        }
        self.conv2d(input, weight, bias, 1, 0)
    }

    fn grouped_tconv(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geo: ConvGeometry,
        output_padding: usize,
    ) -> Result<Var> {
        let x = &self.check(input)?.value;
        let w = &self.check(weight)?.value;
        if w.batch() != x.channels() {
            return Err(Error::Shape {
                op: "tconv2d",
                dim: "input channels",
                got: x.channels(),
                expected: w.batch(),
            });
        }
        let y = tconv_forward(x, w, self.bias_slice(bias)?, geo, output_padding)?;
        let needs = self.needs(&[Some(input), Some(weight), bias]);
        Ok(self.push(
            y,
            Op::TConv {
                input,
                weight,
                bias,
                geo,
            },
            needs,
        ))
    }

    pub fn tconv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Var> {
        self.grouped_tconv(
            input,
            weight,
            bias,
            ConvGeometry {
                stride,
                padding,
                groups: 1,
            },
            output_padding,
        )
    }

    pub fn depthwise_tconv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Var> {
        let groups = self.check(input)?.value.channels();
        self.grouped_tconv(
            input,
            weight,
            bias,
            ConvGeometry {
                stride,
                padding,
                groups,
            },
            output_padding,
        )
    }

    /// Per-channel PReLU; `slopes` holds one value per channel of `input`.
    pub fn prelu(&mut self, input: Var, slopes: Var) -> Result<Var> {
        let x = &self.check(input)?.value;
        let a = &self.check(slopes)?.value;
        let y = crate::ops::prelu(x, a.data())?;
        let needs = self.needs(&[Some(input), Some(slopes)]);
        Ok(self.push(y, Op::PRelu { input, slopes }, needs))
    }

    pub fn sigmoid(&mut self, input: Var) -> Result<Var> {
        let y = crate::ops::sigmoid(&self.check(input)?.value);
        let needs = self.needs(&[Some(input)]);
        Ok(self.push(y, Op::Sigmoid { input }, needs))
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Result<Var> {
        let y = self.check(input)?.value.scale(factor);
        let needs = self.needs(&[Some(input)]);
        Ok(self.push(y, Op::Scale { input, factor }, needs))
    }

    /// Adds a constant tensor, e.g. a channel-noise realization.
    pub fn add_constant(&mut self, input: Var, constant: &Tensor4) -> Result<Var> {
        let y = self.check(input)?.value.add(constant)?;
        let needs = self.needs(&[Some(input)]);
        Ok(self.push(y, Op::AddConst { input }, needs))
    }

    /// Multiplies every interleaved (re, im) pair of batch item `n` by the
    /// complex gain `gains[n]`.
    pub fn complex_gain(&mut self, input: Var, gains: &[(f64, f64)]) -> Result<Var> {
        let x = &self.check(input)?.value;
        if gains.len() != x.batch() {
            return Err(Error::Shape {
                op: "complex_gain",
                dim: "gain count",
                got: gains.len(),
                expected: x.batch(),
            });
        }
        let mut y = x.clone();
        for (n, &(hr, hi)) in gains.iter().enumerate() {
            let item = y.item_mut(n);
            if item.len() % 2 != 0 {
                return Err(Error::OddElementCount(item.len()));
            }
            for pair in item.chunks_exact_mut(2) {
                let (a, b) = (pair[0], pair[1]);
                pair[0] = hr * a - hi * b;
                pair[1] = hi * a + hr * b;
            }
        }
        let needs = self.needs(&[Some(input)]);
        Ok(self.push(
            y,
            Op::ComplexGain {
                input,
                gains: gains.to_vec(),
            },
            needs,
        ))
    }

    /// Rescales each batch item so its squared norm equals `k * power`,
    /// where `k` is half the item's element count.
    pub fn power_normalize(&mut self, input: Var, power: f64) -> Result<Var> {
        let x = &self.check(input)?.value;
        let mut y = x.clone();
        let mut alphas = Vec::with_capacity(x.batch());
        let mut norms = Vec::with_capacity(x.batch());
        for n in 0..x.batch() {
            let item = y.item_mut(n);
            if item.len() % 2 != 0 {
                return Err(Error::OddElementCount(item.len()));
            }
            let k = (item.len() / 2) as f64;
            let norm = item.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroNorm);
            }
            let alpha = (k * power).sqrt();
            let s = alpha / norm;
            item.iter_mut().for_each(|v| *v *= s);
            alphas.push(alpha);
            norms.push(norm);
        }
        let needs = self.needs(&[Some(input)]);
        Ok(self.push(y, Op::PowerNorm { input, alphas, norms }, needs))
    }

    /// Mean over all elements of `(input - target)^2`, as a `1x1x1x1` tensor.
    pub fn mse(&mut self, input: Var, target: &Tensor4) -> Result<Var> {
        let x = &self.check(input)?.value;
        x.ensure_same_shape(target, "mse")?;
        let loss = x
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / x.len() as f64;
        let needs = self.needs(&[Some(input)]);
        Ok(self.push(
            Tensor4::full([1, 1, 1, 1], loss),
            Op::MseMean {
                input,
                target: target.clone(),
            },
            needs,
        ))
    }

    /// Reverse pass from `output`, seeded with `upstream` (same shape).
    pub fn backward(&self, output: Var, upstream: &Tensor4) -> Result<GradRecord> {
        let out_node = self.check(output)?;
        out_node.value.ensure_same_shape(upstream, "backward")?;
        let mut grads: Vec<Option<Tensor4>> = vec![None; self.nodes.len()];
        grads[output.index] = Some(upstream.clone());

        for idx in (0..=output.index).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                grads[idx] = None;
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Conv {
                    input,
                    weight,
                    bias,
                    geo,
                } => {
                    let x = &self.nodes[input.index].value;
                    let w = &self.nodes[weight.index].value;
                    if self.nodes[input.index].needs_grad {
                        let dx = conv_adjoint_input(&g, w, *geo, x.channels(), (x.height(), x.width()))?;
                        accumulate(&mut grads, *input, dx)?;
                    }
                    if self.nodes[weight.index].needs_grad {
                        let dw = conv_adjoint_weight(x, &g, w.height(), *geo)?;
                        accumulate(&mut grads, *weight, dw)?;
                    }
                    self.bias_grad(&mut grads, *bias, &g)?;
                }
                Op::TConv {
                    input,
                    weight,
                    bias,
                    geo,
                } => {
                    let x = &self.nodes[input.index].value;
                    let w = &self.nodes[weight.index].value;
                    if self.nodes[input.index].needs_grad {
                        let dx = conv_forward(&g, w, None, *geo)?;
                        accumulate(&mut grads, *input, dx)?;
                    }
                    if self.nodes[weight.index].needs_grad {
                        let dw = conv_adjoint_weight(&g, x, w.height(), *geo)?;
                        accumulate(&mut grads, *weight, dw)?;
                    }
                    self.bias_grad(&mut grads, *bias, &g)?;
                }
                Op::PRelu { input, slopes } => {
                    let x = &self.nodes[input.index].value;
                    let a = self.nodes[slopes.index].value.data();
                    let [n_batch, c, h, w] = x.shape();
                    let mut dx = g.clone();
                    let mut da = vec![0.0; c];
                    let xd = x.data();
                    let gd = g.data();
                    let dxd = dx.data_mut();
                    for n in 0..n_batch {
                        for ch in 0..c {
                            let base = (n * c + ch) * h * w;
                            for i in base..base + h * w {
                                if xd[i] < 0.0 {
                                    dxd[i] = a[ch] * gd[i];
                                    da[ch] += gd[i] * xd[i];
                                }
                            }
                        }
                    }
                    if self.nodes[input.index].needs_grad {
                        accumulate(&mut grads, *input, dx)?;
                    }
                    if self.nodes[slopes.index].needs_grad {
                        let shape = self.nodes[slopes.index].value.shape();
                        accumulate(&mut grads, *slopes, Tensor4::from_vec(shape, da)?)?;
                    }
                }
                Op::Sigmoid { input } => {
                    let mut dx = g;
                    for (d, &s) in dx.data_mut().iter_mut().zip(node.value.data()) {
                        *d *= s * (1.0 - s);
                    }
                    accumulate(&mut grads, *input, dx)?;
                }
                Op::Scale { input, factor } => {
                    accumulate(&mut grads, *input, g.scale(*factor))?;
                }
                Op::AddConst { input } => {
                    accumulate(&mut grads, *input, g)?;
                }
                Op::ComplexGain { input, gains } => {
                    let mut dx = g;
                    for (n, &(hr, hi)) in gains.iter().enumerate() {
                        for pair in dx.item_mut(n).chunks_exact_mut(2) {
                            let (ga, gb) = (pair[0], pair[1]);
                            pair[0] = hr * ga + hi * gb;
                            pair[1] = -hi * ga + hr * gb;
                        }
                    }
                    accumulate(&mut grads, *input, dx)?;
                }
                Op::PowerNorm { input, alphas, norms } => {
                    let y = &node.value;
                    let mut dx = g;
                    for n in 0..y.batch() {
                        let (alpha, norm) = (alphas[n], norms[n]);
                        let yi = y.item(n);
                        let gi = dx.item_mut(n);
                        // u = y / alpha is the unit direction of the input.
                        let ug: f64 = yi.iter().zip(gi.iter()).map(|(a, b)| a * b).sum::<f64>() / alpha;
                        let s = alpha / norm;
                        for (d, &yv) in gi.iter_mut().zip(yi) {
                            *d = s * (*d - yv / alpha * ug);
                        }
                    }
                    accumulate(&mut grads, *input, dx)?;
                }
                Op::MseMean { input, target } => {
                    let x = &self.nodes[input.index].value;
                    let scale = 2.0 * g.data()[0] / x.len() as f64;
                    let data = x
                        .data()
                        .iter()
                        .zip(target.data())
                        .map(|(a, b)| scale * (a - b))
                        .collect();
                    accumulate(&mut grads, *input, Tensor4::from_vec(x.shape(), data)?)?;
                }
            }
        }
        Ok(GradRecord { tape: self.id, grads })
    }

    fn bias_grad(&self, grads: &mut [Option<Tensor4>], bias: Option<Var>, g: &Tensor4) -> Result<()> {
        if let Some(b) = bias {
            if self.nodes[b.index].needs_grad {
                let shape = self.nodes[b.index].value.shape();
                accumulate(grads, b, Tensor4::from_vec(shape, channel_sums(g))?)?;
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor4>], var: Var, g: Tensor4) -> Result<()> {
    match &mut grads[var.index] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}
