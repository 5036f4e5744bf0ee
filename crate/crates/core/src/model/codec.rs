//! The end-to-end codec: learnable parameters plus encode/decode passes.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::arch::{Activation, ArchitectureSpec, LayerKind, LayerSpec};
use super::signal::{complex_to_feature, normalize_pixels, reshape_to_complex, PIXEL_MAX};
use super::variant::VariantId;
use crate::autodiff::{Tape, Var};
use crate::channel::Channel;
use crate::error::{Error, Result};
use crate::tensor::Tensor4;

pub const PRELU_INIT: f64 = 0.25;

/// Source size `n` and transmitted complex symbols `k`; `ρ = k / n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bandwidth {
    pub n: usize,
    pub k: usize,
}

impl Bandwidth {
    pub fn rho(&self) -> f64 {
        self.k as f64 / self.n as f64
    }
}

/// Indices into the parameter list for one layer.
#[derive(Clone, Copy, Debug)]
struct LayerSlots {
    /// Depthwise stage of a separable layer.
    depthwise: Option<(usize, usize)>,
    /// Full convolution, or the pointwise stage of a separable layer.
    main: (usize, usize),
    slopes: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CodecModel {
    architecture: ArchitectureSpec,
    variant: VariantId,
    power: f64,
    params: Vec<(String, Tensor4)>,
}

/// Names and shapes of every parameter tensor of `arch`, in storage order.
pub fn parameter_layout(arch: &ArchitectureSpec) -> Vec<(String, [usize; 4])> {
    let mut out = Vec::new();
    let sides = [("enc", &arch.encoder), ("dec", &arch.decoder)];
    for (prefix, layers) in sides {
        for (i, l) in layers.iter().enumerate() {
            let name = format!("{prefix}{}", i + 1);
            out.extend(
                layer_parameter_shapes(l)
                    .into_iter()
                    .map(|(suffix, shape)| (format!("{name}.{suffix}"), shape)),
            );
        }
    }
    out
}

/// Parameter tensors of a single layer as `(suffix, shape)`.
pub fn layer_parameter_shapes(l: &LayerSpec) -> Vec<(&'static str, [usize; 4])> {
    let (cin, cout, k) = (l.in_channels, l.out_channels, l.kernel);
    let mut v = match l.kind {
        LayerKind::Conv => vec![("weight", [cout, cin, k, k]), ("bias", [1, cout, 1, 1])],
        LayerKind::TConv => vec![("weight", [cin, cout, k, k]), ("bias", [1, cout, 1, 1])],
        LayerKind::DSConv | LayerKind::DSTConv => vec![
            ("dw.weight", [cin, 1, k, k]),
            ("dw.bias", [1, cin, 1, 1]),
            ("pw.weight", [cout, cin, 1, 1]),
            ("pw.bias", [1, cout, 1, 1]),
        ],
    };
    if l.activation == Activation::PRelu {
        v.push(("prelu", [1, cout, 1, 1]));
    }
    v
}

fn glorot_limit(shape: [usize; 4]) -> f64 {
    let receptive = (shape[2] * shape[3]) as f64;
    (6.0 / (receptive * (shape[0] + shape[1]) as f64)).sqrt()
}

impl CodecModel {
    /// Builds a freshly initialized model: Glorot-uniform kernels, zero
    /// biases, PReLU slopes of 0.25, all drawn from `seed`.
    pub fn new(architecture: ArchitectureSpec, variant: VariantId, power: f64, seed: u64) -> Result<Self> {
        architecture.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = parameter_layout(&architecture)
            .into_iter()
            .map(|(name, shape)| {
                let t = if name.ends_with("weight") {
                    let lim = glorot_limit(shape);
                    Tensor4::random_uniform(shape, -lim, lim, &mut rng)
                } else if name.ends_with("prelu") {
                    Tensor4::full(shape, PRELU_INIT)
                } else {
                    Tensor4::zeros(shape)
                };
                (name, t)
            })
            .collect();
        Self::from_parts(architecture, variant, power, params)
    }

    /// Assembles a model from explicit parameters, checking names and shapes
    /// against the architecture.
    pub fn from_parts(
        architecture: ArchitectureSpec,
        variant: VariantId,
        power: f64,
        params: Vec<(String, Tensor4)>,
    ) -> Result<Self> {
        architecture.validate()?;
        if !power.is_finite() || power <= 0.0 {
            return Err(Error::Architecture(format!("transmit power {power} must be positive")));
        }
        let layout = parameter_layout(&architecture);
        if layout.len() != params.len() {
            return Err(Error::Architecture(format!(
                "expected {} parameter tensors, got {}",
                layout.len(),
                params.len()
            )));
        }
        for ((name, shape), (pname, t)) in layout.iter().zip(&params) {
            if name != pname || *shape != t.shape() {
                return Err(Error::Architecture(format!(
                    "parameter `{pname}` {:?} does not match expected `{name}` {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(Self {
            architecture,
            variant,
            power,
            params,
        })
    }

    pub fn architecture(&self) -> &ArchitectureSpec {
        &self.architecture
    }

    pub fn variant(&self) -> VariantId {
        self.variant
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn bandwidth(&self) -> Bandwidth {
        Bandwidth {
            n: self.architecture.input_shape.source_symbols(),
            k: self.architecture.symbols(),
        }
    }

    pub fn parameters(&self) -> &[(String, Tensor4)] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut Tensor4> {
        self.params.iter_mut().map(|(_, t)| t)
    }

    pub fn parameter(&self, name: &str) -> Option<&Tensor4> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Scalar count by walking every stored tensor.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|(_, t)| t.len()).sum()
    }

    fn slots(&self) -> Vec<LayerSlots> {
        let mut idx = 0;
        let mut take = || {
            idx += 1;
            idx - 1
        };
        self.architecture
            .layers()
            .map(|l| {
                let depthwise = l.kind.is_separable().then(|| (take(), take()));
                let main = (take(), take());
                let slopes = (l.activation == Activation::PRelu).then(&mut take);
                LayerSlots {
                    depthwise,
                    main,
                    slopes,
                }
            })
            .collect()
    }

    /// Records every parameter on `tape`; `trainable` selects whether they
    /// receive gradients.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|(_, t)| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect()
    }

    fn layer_on_tape(&self, tape: &mut Tape, vars: &[Var], spec: &LayerSpec, slots: LayerSlots, x: Var) -> Result<Var> {
        let (w, b) = (vars[slots.main.0], Some(vars[slots.main.1]));
        let (s, p) = (spec.stride, spec.padding);
        let op = spec.output_padding.unwrap_or(0);
        let mut y = match (spec.kind, slots.depthwise) {
            (LayerKind::Conv, _) => tape.conv2d(x, w, b, s, p)?,
            (LayerKind::TConv, _) => tape.tconv2d(x, w, b, s, p, op)?,
            (LayerKind::DSConv, Some((dw, db))) => {
                let h = tape.depthwise_conv2d(x, vars[dw], Some(vars[db]), s, p)?;
                tape.pointwise_conv2d(h, w, b)?
            }
            (LayerKind::DSTConv, Some((dw, db))) => {
                let h = tape.depthwise_tconv2d(x, vars[dw], Some(vars[db]), s, p, op)?;
                tape.pointwise_conv2d(h, w, b)?
            }
            _ => unreachable!("separable layers always own depthwise slots"),
        };
        y = match spec.activation {
            Activation::PRelu => tape.prelu(y, vars[slots.slopes.expect("PReLU layers own slopes")])?,
            Activation::Sigmoid => tape.sigmoid(y)?,
            Activation::None => y,
        };
        Ok(y)
    }

    /// Encoder layers plus power normalization, from a `[0, 1]` input.
    /// Returns the interleaved real feature map `(N, c, H̄, W̄)`.
    pub fn encode_on_tape(&self, tape: &mut Tape, vars: &[Var], x_normalized: Var) -> Result<Var> {
        self.check_image_shape(tape.value(x_normalized)?.shape())?;
        let slots = self.slots();
        let mut h = x_normalized;
        for (spec, slot) in self.architecture.encoder.iter().zip(&slots) {
            h = self.layer_on_tape(tape, vars, spec, *slot, h)?;
        }
        tape.power_normalize(h, self.power)
    }

    /// Decoder layers from a received feature map; output in `[0, 1]`.
    pub fn decode_on_tape(&self, tape: &mut Tape, vars: &[Var], received: Var) -> Result<Var> {
        let slots = self.slots();
        let offset = self.architecture.encoder.len();
        let mut h = received;
        for (spec, slot) in self.architecture.decoder.iter().zip(&slots[offset..]) {
            h = self.layer_on_tape(tape, vars, spec, *slot, h)?;
        }
        Ok(h)
    }

    /// encode → channel → decode → MSE against the normalized images.
    /// Returns `(loss, reconstruction in [0, 1])`.
    pub fn loss_on_tape(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        images_normalized: &Tensor4,
        channel: &mut Channel,
    ) -> Result<(Var, Var)> {
        let x = tape.constant(images_normalized.clone());
        let z = self.encode_on_tape(tape, vars, x)?;
        let zh = channel.transmit_on_tape(tape, z)?;
        let out = self.decode_on_tape(tape, vars, zh)?;
        let loss = tape.mse(out, images_normalized)?;
        Ok((loss, out))
    }

    fn check_image_shape(&self, shape: [usize; 4]) -> Result<()> {
        let s = self.architecture.input_shape;
        for (dim, got, expected) in [
            ("channels", shape[1], s.channels),
            ("height", shape[2], s.height),
            ("width", shape[3], s.width),
        ] {
            if got != expected {
                return Err(Error::Shape {
                    op: "encode",
                    dim,
                    got,
                    expected,
                });
            }
        }
        if shape[0] == 0 {
            return Err(Error::invalid("encode", "empty batch"));
        }
        Ok(())
    }

    fn latent_chw(&self) -> [usize; 3] {
        let (h, w) = self.architecture.latent_hw;
        [self.architecture.channel_count, h, w]
    }

    /// Maps a batch of `[0, 255]` images to one power-normalized complex
    /// vector of length `k` per image.
    pub fn encode(&self, image: &Tensor4) -> Result<Vec<Vec<Complex64>>> {
        self.check_image_shape(image.shape())?;
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let x = tape.constant(normalize_pixels(image)?);
        let z = self.encode_on_tape(&mut tape, &vars, x)?;
        reshape_to_complex(tape.value(z)?)
    }

    /// Reconstructs `[0, 255]` images from received symbol vectors.
    pub fn decode(&self, received: &[Vec<Complex64>]) -> Result<Tensor4> {
        let k = self.architecture.symbols();
        if let Some(bad) = received.iter().find(|z| z.len() != k) {
            return Err(Error::Shape {
                op: "decode",
                dim: "symbol count",
                got: bad.len(),
                expected: k,
            });
        }
        if received.is_empty() {
            return Err(Error::invalid("decode", "empty batch"));
        }
        let feature = complex_to_feature(received, self.latent_chw())?;
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let zh = tape.constant(feature);
        let out = self.decode_on_tape(&mut tape, &vars, zh)?;
        Ok(tape.value(out)?.scale(PIXEL_MAX))
    }

    /// Online reconstruction: decode(channel(encode(image))).
    pub fn reconstruct(&self, image: &Tensor4, channel: &mut Channel) -> Result<Tensor4> {
        let z = self.encode(image)?;
        let received: Vec<Vec<Complex64>> = z.iter().map(|v| channel.transmit(v)).collect();
        self.decode(&received)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelConfig;
    use crate::model::arch::{default_base_architecture, InputShape};
    use crate::model::signal::squared_norm;
    use crate::model::variant::build_variant;

    fn model(variant: VariantId, side: usize, seed: u64) -> CodecModel {
        let base = default_base_architecture(InputShape::square(side), 8).unwrap();
        CodecModel::new(build_variant(variant, &base).unwrap(), variant, 1.0, seed).unwrap()
    }

    fn image(side: usize, seed: u64) -> Tensor4 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor4::random_uniform([2, 3, side, side], 0.0, 255.0, &mut rng)
    }

    #[test]
    fn baseline_parameter_count() {
        let base = default_base_architecture(InputShape::REFERENCE, 8).unwrap();
        let m = CodecModel::new(base, VariantId::Baseline, 1.0, 0).unwrap();
        assert_eq!(m.scalar_count(), 143_659);
        assert_eq!(m.bandwidth(), Bandwidth { n: 196_608, k: 16_384 });
        assert!((m.bandwidth().rho() - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn encode_length_and_power() {
        let m = model(VariantId::R60E2D2, 32, 1);
        let z = m.encode(&image(32, 2)).unwrap();
        assert_eq!(z.len(), 2);
        for item in &z {
            assert_eq!(item.len(), 256);
            assert!((squared_norm(item) - 256.0).abs() <= 1e-6 * 256.0);
        }
        assert_eq!(z, m.encode(&image(32, 2)).unwrap());
    }

    #[test]
    fn decode_shape_and_range() {
        let m = model(VariantId::R100, 32, 3);
        let x = image(32, 4);
        let mut ch = Channel::new(ChannelConfig::from_snr(0.0, 1.0, 5).unwrap()).unwrap();
        let y = m.reconstruct(&x, &mut ch).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert!(y.data().iter().all(|v| (0.0..=255.0).contains(v)));
        let mut quiet = Channel::new(ChannelConfig::noiseless(1.0, 0)).unwrap();
        let a = m.reconstruct(&x, &mut quiet).unwrap();
        let b = m.reconstruct(&x, &mut quiet).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shape_errors() {
        let m = model(VariantId::Baseline, 32, 0);
        assert!(matches!(
            m.encode(&image(16, 0)),
            Err(Error::Shape { dim: "height", .. })
        ));
        assert!(matches!(
            m.decode(&[vec![Complex64::new(1.0, 0.0); 10]]),
            Err(Error::Shape { .. })
        ));
        let mut bad = image(32, 0);
        bad.data_mut()[0] = 300.0;
        assert!(matches!(m.encode(&bad), Err(Error::PixelRange { .. })));
    }

    #[test]
    fn from_parts_rejects_mismatched_params() {
        let m = model(VariantId::R20, 32, 0);
        let mut params = m.parameters().to_vec();
        params.pop();
        assert!(CodecModel::from_parts(m.architecture().clone(), m.variant(), 1.0, params).is_err());
        let mut params = m.parameters().to_vec();
        params[0].0 = "enc9.weight".into();
        assert!(CodecModel::from_parts(m.architecture().clone(), m.variant(), 1.0, params).is_err());
    }

    #[test]
    fn parameter_names() {
        let m = model(VariantId::R60E2D2, 32, 0);
        let names: Vec<&str> = m.parameters().iter().map(|(n, _)| n.as_str()).take(7).collect();
        assert_eq!(
            names,
            [
                "enc1.weight",
                "enc1.bias",
                "enc1.prelu",
                "enc2.dw.weight",
                "enc2.dw.bias",
                "enc2.pw.weight",
                "enc2.pw.bias"
            ]
        );
        assert_eq!(m.parameter("enc1.prelu").unwrap().data(), &[PRELU_INIT; 16]);
    }
}
