//! Declarative description of the 5+5-layer encoder/decoder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{conv_out_dim, tconv_out_dim};

pub const LAYERS_PER_SIDE: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Conv,
    DSConv,
    TConv,
    DSTConv,
}

impl LayerKind {
    pub fn is_transposed(self) -> bool {
        matches!(self, LayerKind::TConv | LayerKind::DSTConv)
    }

    pub fn is_separable(self) -> bool {
        matches!(self, LayerKind::DSConv | LayerKind::DSTConv)
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv => "Conv",
            LayerKind::DSConv => "DSConv",
            LayerKind::TConv => "TConv",
            LayerKind::DSTConv => "DSTConv",
        }
    }

    /// The kind a layer of this side takes when (not) replaced.
    pub fn with_separable(self, separable: bool) -> LayerKind {
        match (self.is_transposed(), separable) {
            (false, false) => LayerKind::Conv,
            (false, true) => LayerKind::DSConv,
            (true, false) => LayerKind::TConv,
            (true, true) => LayerKind::DSTConv,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activation {
    PRelu,
    Sigmoid,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// Present exactly for transposed kinds.
    pub output_padding: Option<usize>,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.kernel == 0 || self.stride == 0 {
            return Err(Error::Architecture(format!("zero-sized hyperparameter in {self:?}")));
        }
        match (self.kind.is_transposed(), self.output_padding) {
            (true, Some(op)) if op < self.stride => Ok(()),
            (true, Some(op)) => Err(Error::Architecture(format!(
                "output_padding {op} must be below stride {}",
                self.stride
            ))),
            (true, None) => Err(Error::Architecture("transposed layer without output_padding".into())),
            (false, Some(_)) => Err(Error::Architecture("output_padding on a forward layer".into())),
            (false, None) => Ok(()),
        }
    }

    /// Spatial output size for a square input of side `input`.
    pub fn output_dim(&self, input: usize) -> Option<usize> {
        if self.kind.is_transposed() {
            tconv_out_dim(
                input,
                self.kernel,
                self.stride,
                self.padding,
                self.output_padding.unwrap_or(0),
            )
        } else {
            conv_out_dim(input, self.kernel, self.stride, self.padding)
        }
    }

    pub fn output_hw(&self, (h, w): (usize, usize)) -> Option<(usize, usize)> {
        Some((self.output_dim(h)?, self.output_dim(w)?))
    }
}

/// Source image dimensions `W x H x C`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputShape {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl InputShape {
    /// 256x256 RGB, the geometry of the complexity tables.
    pub const REFERENCE: InputShape = InputShape {
        width: 256,
        height: 256,
        channels: 3,
    };

    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
        }
    }

    pub fn square(side: usize) -> Self {
        Self::new(side, side, 3)
    }

    /// Number of source symbols `n = W * H * C`.
    pub fn source_symbols(&self) -> usize {
        self.width * self.height * self.channels
    }
}

impl std::fmt::Display for InputShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.width, self.height, self.channels)
    }
}

impl std::str::FromStr for InputShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('x').collect();
        let parse = |p: &str| {
            p.trim()
                .parse::<usize>()
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| Error::Config(format!("bad input shape `{s}`; expected WxHxC")))
        };
        match parts.as_slice() {
            [w, h, c] => Ok(Self::new(parse(w)?, parse(h)?, parse(c)?)),
            [w, h] => Ok(Self::new(parse(w)?, parse(h)?, 3)),
            _ => Err(Error::Config(format!("bad input shape `{s}`; expected WxHxC"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
    pub input_shape: InputShape,
    /// Output channel count `c` of the encoder.
    pub channel_count: usize,
    /// Latent spatial dims `(H̄, W̄)`.
    pub latent_hw: (usize, usize),
}

impl ArchitectureSpec {
    /// Transmitted complex symbols `k = c * H̄ * W̄ / 2`.
    pub fn symbols(&self) -> usize {
        self.channel_count * self.latent_hw.0 * self.latent_hw.1 / 2
    }

    pub fn layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.encoder.iter().chain(&self.decoder)
    }

    /// Output `(H, W)` of every layer, encoder first.
    pub fn layer_output_hw(&self) -> Result<Vec<(usize, usize)>> {
        let mut hw = (self.input_shape.height, self.input_shape.width);
        let mut dims = Vec::with_capacity(self.encoder.len() + self.decoder.len());
        for (i, layer) in self.layers().enumerate() {
            hw = layer.output_hw(hw).ok_or_else(|| {
                Error::Architecture(format!("layer {} cannot process a {}x{} input", i + 1, hw.0, hw.1))
            })?;
            dims.push(hw);
        }
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder.len() != LAYERS_PER_SIDE || self.decoder.len() != LAYERS_PER_SIDE {
            return Err(Error::Architecture(format!(
                "expected {LAYERS_PER_SIDE}+{LAYERS_PER_SIDE} layers, got {}+{}",
                self.encoder.len(),
                self.decoder.len()
            )));
        }
        for (side, layers, transposed) in [("encoder", &self.encoder, false), ("decoder", &self.decoder, true)] {
            for (i, l) in layers.iter().enumerate() {
                l.validate()?;
                if l.kind.is_transposed() != transposed {
                    return Err(Error::Architecture(format!(
                        "{side} layer {} has kind {}",
                        i + 1,
                        l.kind.name()
                    )));
                }
                let last = i + 1 == layers.len();
                if l.activation == Activation::None && !(side == "encoder" && last) {
                    return Err(Error::Architecture(format!(
                        "{side} layer {} lacks an activation",
                        i + 1
                    )));
                }
            }
        }
        if self.encoder[LAYERS_PER_SIDE - 1].activation != Activation::None {
            return Err(Error::Architecture("final encoder layer must be linear".into()));
        }
        let mut channels = self.input_shape.channels;
        for (i, l) in self.layers().enumerate() {
            if l.in_channels != channels {
                return Err(Error::Architecture(format!(
                    "layer {} expects {} input channels, previous layer gives {channels}",
                    i + 1,
                    l.in_channels
                )));
            }
            channels = l.out_channels;
            if i + 1 == LAYERS_PER_SIDE && channels != self.channel_count {
                return Err(Error::Architecture(format!(
                    "encoder emits {channels} channels, c is {}",
                    self.channel_count
                )));
            }
        }
        if channels != self.input_shape.channels {
            return Err(Error::Architecture(
                "decoder does not restore the image channel count".into(),
            ));
        }
        let dims = self.layer_output_hw()?;
        if dims[LAYERS_PER_SIDE - 1] != self.latent_hw {
            return Err(Error::Architecture(format!(
                "encoder produces {:?}, latent dims declared as {:?}",
                dims[LAYERS_PER_SIDE - 1],
                self.latent_hw
            )));
        }
        let out = dims[dims.len() - 1];
        if out != (self.input_shape.height, self.input_shape.width) {
            return Err(Error::Architecture(format!(
                "decoder produces {}x{}, input is {}x{}",
                out.0, out.1, self.input_shape.height, self.input_shape.width
            )));
        }
        if !(self.channel_count * self.latent_hw.0 * self.latent_hw.1).is_multiple_of(2) {
            return Err(Error::Architecture("c * H̄ * W̄ must be even".into()));
        }
        Ok(())
    }
}

const KERNEL: usize = 5;
const PADDING: usize = 2;
const ENCODER_STRIDES: [usize; LAYERS_PER_SIDE] = [2, 2, 1, 1, 1];
const HIDDEN_FILTERS: [usize; LAYERS_PER_SIDE - 1] = [16, 32, 32, 32];

/// Latent spatial dims the base encoder produces for `input`.
pub fn base_latent_hw(input: InputShape) -> Option<(usize, usize)> {
    let mut hw = (input.height, input.width);
    for stride in ENCODER_STRIDES {
        hw = (
            conv_out_dim(hw.0, KERNEL, stride, PADDING)?,
            conv_out_dim(hw.1, KERNEL, stride, PADDING)?,
        );
    }
    Some(hw)
}

/// The all-standard-convolution codec: 5x5 kernels, padding 2, encoder
/// strides (2,2,1,1,1) with filters (16,32,32,32,c), and a mirrored decoder
/// ending in 3 sigmoid channels.
pub fn default_base_architecture(input_shape: InputShape, channel_count: usize) -> Result<ArchitectureSpec> {
    if channel_count == 0 {
        return Err(Error::Architecture("channel count c must be positive".into()));
    }
    let mut encoder = Vec::with_capacity(LAYERS_PER_SIDE);
    let mut dims = vec![(input_shape.height, input_shape.width)];
    let mut cin = input_shape.channels;
    for (i, &stride) in ENCODER_STRIDES.iter().enumerate() {
        let last = i + 1 == LAYERS_PER_SIDE;
        let cout = if last { channel_count } else { HIDDEN_FILTERS[i] };
        let layer = LayerSpec {
            kind: LayerKind::Conv,
            in_channels: cin,
            out_channels: cout,
            kernel: KERNEL,
            stride,
            padding: PADDING,
            output_padding: None,
            activation: if last { Activation::None } else { Activation::PRelu },
        };
        let hw = layer
            .output_hw(*dims.last().unwrap())
            .ok_or_else(|| Error::Architecture(format!("input {input_shape} too small for encoder layer {}", i + 1)))?;
        dims.push(hw);
        encoder.push(layer);
        cin = cout;
    }
    let latent_hw = dims[LAYERS_PER_SIDE];

    let mut decoder = Vec::with_capacity(LAYERS_PER_SIDE);
    let mut hw = latent_hw;
    for i in 0..LAYERS_PER_SIDE {
        let mirror = LAYERS_PER_SIDE - 1 - i;
        let stride = ENCODER_STRIDES[mirror];
        let target = dims[mirror];
        let last = i + 1 == LAYERS_PER_SIDE;
        let cout = if last {
            input_shape.channels
        } else {
            encoder[mirror].in_channels
        };
        let output_padding = |inp: usize, want: usize| -> Result<usize> {
            let base = ((inp - 1) * stride + KERNEL).checked_sub(2 * PADDING);
            match base {
                Some(b) if want >= b && want - b < stride => Ok(want - b),
                _ => Err(Error::Architecture(format!(
                    "decoder layer {} cannot map {inp} back to {want} (input {input_shape} does not round-trip)",
                    i + 1
                ))),
            }
        };
        let op_h = output_padding(hw.0, target.0)?;
        let op_w = output_padding(hw.1, target.1)?;
        if op_h != op_w {
            return Err(Error::Architecture(format!(
                "decoder layer {} would need different output padding per axis",
                i + 1
            )));
        }
        decoder.push(LayerSpec {
            kind: LayerKind::TConv,
            in_channels: cin,
            out_channels: cout,
            kernel: KERNEL,
            stride,
            padding: PADDING,
            output_padding: Some(op_h),
            activation: if last { Activation::Sigmoid } else { Activation::PRelu },
        });
        hw = target;
        cin = cout;
    }
    let arch = ArchitectureSpec {
        encoder,
        decoder,
        input_shape,
        channel_count,
        latent_hw,
    };
    arch.validate()?;
    Ok(arch)
}
