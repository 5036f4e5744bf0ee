//! The selective replacement strategy: which encoder/decoder layers become
//! depthwise separable in each model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::arch::{ArchitectureSpec, LayerKind, LAYERS_PER_SIDE};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum VariantId {
    Baseline,
    R20,
    R40,
    R60E1D1,
    R60E2D1,
    R60E2D2,
    R60E2D3,
    R60E1D2,
    R60E3D2,
    R80,
    R100,
}

type Mask = [bool; LAYERS_PER_SIDE];

const NONE: Mask = [false; 5];
const EARLY: Mask = [true, true, true, false, false];
const MIDDLE: Mask = [false, true, true, true, false];
const LATE: Mask = [false, false, true, true, true];

impl VariantId {
    /// Every model, in complexity-table order.
    pub const ALL: [VariantId; 11] = [
        VariantId::Baseline,
        VariantId::R20,
        VariantId::R40,
        VariantId::R60E1D1,
        VariantId::R60E2D1,
        VariantId::R60E2D2,
        VariantId::R60E2D3,
        VariantId::R60E1D2,
        VariantId::R60E3D2,
        VariantId::R80,
        VariantId::R100,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantId::Baseline => "baseline",
            VariantId::R20 => "dsc-jscc-20",
            VariantId::R40 => "dsc-jscc-40",
            VariantId::R60E1D1 => "dsc-jscc-60-e1d1",
            VariantId::R60E2D1 => "dsc-jscc-60-e2d1",
            VariantId::R60E2D2 => "dsc-jscc-60-e2d2",
            VariantId::R60E2D3 => "dsc-jscc-60-e2d3",
            VariantId::R60E1D2 => "dsc-jscc-60-e1d2",
            VariantId::R60E3D2 => "dsc-jscc-60-e3d2",
            VariantId::R80 => "dsc-jscc-80",
            VariantId::R100 => "dsc-jscc-100",
        }
    }

    /// Which encoder and decoder layers are separable.
    pub fn masks(self) -> (Mask, Mask) {
        let prefix = |n: usize| -> Mask { std::array::from_fn(|i| i < n) };
        match self {
            VariantId::Baseline => (NONE, NONE),
            VariantId::R20 => (prefix(1), prefix(1)),
            VariantId::R40 => (prefix(2), prefix(2)),
            VariantId::R60E1D1 => (EARLY, EARLY),
            VariantId::R60E2D1 => (MIDDLE, EARLY),
            VariantId::R60E2D2 => (MIDDLE, MIDDLE),
            VariantId::R60E2D3 => (MIDDLE, LATE),
            VariantId::R60E1D2 => (EARLY, MIDDLE),
            VariantId::R60E3D2 => (LATE, MIDDLE),
            VariantId::R80 => (prefix(4), prefix(4)),
            VariantId::R100 => (prefix(5), prefix(5)),
        }
    }

    pub fn encoder_kinds(self) -> [LayerKind; LAYERS_PER_SIDE] {
        self.masks().0.map(|s| LayerKind::Conv.with_separable(s))
    }

    pub fn decoder_kinds(self) -> [LayerKind; LAYERS_PER_SIDE] {
        self.masks().1.map(|s| LayerKind::TConv.with_separable(s))
    }
}

impl fmt::Display for VariantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariantId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        if key == "dsc-jscc-60" {
            return Ok(VariantId::R60E1D1);
        }
        if key == "deep-jscc" {
            return Ok(VariantId::Baseline);
        }
        VariantId::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

impl From<VariantId> for String {
    fn from(v: VariantId) -> String {
        v.name().to_string()
    }
}

impl TryFrom<String> for VariantId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Rewrites the layer kinds of an all-standard `base` per `variant`. All
/// other hyperparameters are left untouched.
pub fn build_variant(variant: VariantId, base: &ArchitectureSpec) -> Result<ArchitectureSpec> {
    base.validate()?;
    if base.layers().any(|l| l.kind.is_separable()) {
        return Err(Error::Architecture(
            "base architecture must use standard layers only".into(),
        ));
    }
    let mut arch = base.clone();
    for (layer, kind) in arch.encoder.iter_mut().zip(variant.encoder_kinds()) {
        layer.kind = kind;
    }
    for (layer, kind) in arch.decoder.iter_mut().zip(variant.decoder_kinds()) {
        layer.kind = kind;
    }
    Ok(arch)
}
