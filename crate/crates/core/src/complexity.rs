//! Analytical parameter and FLOP accounting.
//!
//! One multiply-accumulate counts as one FLOP. Biases, activations, pixel
//! scaling and power normalization are not counted. Transposed layers are
//! counted at their output resolution.

use std::fmt::Write as _;

use crate::error::Result;
use crate::model::{
    build_variant, Activation, ArchitectureSpec, CodecModel, InputShape, LayerKind, LayerSpec, VariantId,
};

pub fn layer_params(spec: &LayerSpec) -> u64 {
    let (cin, cout, k) = (spec.in_channels as u64, spec.out_channels as u64, spec.kernel as u64);
    let core = if spec.kind.is_separable() {
        (k * k * cin + cin) + (cin * cout + cout)
    } else {
        k * k * cin * cout + cout
    };
    core + if spec.activation == Activation::PRelu { cout } else { 0 }
}

pub fn layer_flops(spec: &LayerSpec, out_h: usize, out_w: usize) -> u64 {
    let (cin, cout, k) = (spec.in_channels as u64, spec.out_channels as u64, spec.kernel as u64);
    let area = (out_h * out_w) as u64;
    if spec.kind.is_separable() {
        k * k * cin * area + cin * cout * area
    } else {
        k * k * cin * cout * area
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Encoder,
    Decoder,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerRow {
    /// 1-based within its side.
    pub index: usize,
    pub side: Side,
    pub kind: LayerKind,
    pub out_hw: (usize, usize),
    pub params: u64,
    pub flops: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComplexityReport {
    pub variant: VariantId,
    pub input_shape: InputShape,
    pub rows: Vec<LayerRow>,
    pub params: u64,
    pub flops: u64,
}

/// Rounds `value / unit` to one decimal, returned in tenths of `unit`.
///
/// The value is first rounded half-up to hundredths, then that result is
/// rounded half-up to tenths, reproducing how the published table rounds
/// (e.g. 136,649 -> 136.65 K -> 136.7 K).
pub fn display_tenths(value: u64, unit: u64) -> u64 {
    let hundredths = (value * 100 + unit / 2) / unit;
    (hundredths + 5) / 10
}

fn fmt_tenths(tenths: u64) -> String {
    format!("{}.{}", tenths / 10, tenths % 10)
}

impl ComplexityReport {
    pub fn params_k_tenths(&self) -> u64 {
        display_tenths(self.params, 1_000)
    }

    pub fn flops_m_tenths(&self) -> u64 {
        display_tenths(self.flops, 1_000_000)
    }

    /// Parameters in K to one decimal, e.g. `"143.7"`.
    pub fn params_display(&self) -> String {
        fmt_tenths(self.params_k_tenths())
    }

    /// FLOPs in M to one decimal.
    pub fn flops_display(&self) -> String {
        fmt_tenths(self.flops_m_tenths())
    }
}

/// Complexity of an already-built architecture.
pub fn architecture_complexity(variant: VariantId, arch: &ArchitectureSpec) -> Result<ComplexityReport> {
    arch.validate()?;
    let dims = arch.layer_output_hw()?;
    let n_enc = arch.encoder.len();
    let rows: Vec<LayerRow> = arch
        .layers()
        .zip(&dims)
        .enumerate()
        .map(|(i, (spec, &(h, w)))| LayerRow {
            index: if i < n_enc { i + 1 } else { i + 1 - n_enc },
            side: if i < n_enc { Side::Encoder } else { Side::Decoder },
            kind: spec.kind,
            out_hw: (h, w),
            params: layer_params(spec),
            flops: layer_flops(spec, h, w),
        })
        .collect();
    Ok(ComplexityReport {
        variant,
        input_shape: arch.input_shape,
        params: rows.iter().map(|r| r.params).sum(),
        flops: rows.iter().map(|r| r.flops).sum(),
        rows,
    })
}

/// Complexity of `variant` built on `base`.
pub fn model_complexity(variant: VariantId, base: &ArchitectureSpec) -> Result<ComplexityReport> {
    architecture_complexity(variant, &build_variant(variant, base)?)
}

/// Reports for every model, in table order.
pub fn all_variants(base: &ArchitectureSpec) -> Result<Vec<ComplexityReport>> {
    VariantId::ALL.iter().map(|&v| model_complexity(v, base)).collect()
}

/// Percentage reductions going from `from` to `to`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reduction {
    pub params_pct: f64,
    pub flops_pct: f64,
}

pub fn reduction(from: &ComplexityReport, to: &ComplexityReport) -> Reduction {
    let pct = |a: u64, b: u64| 100.0 * (a as f64 - b as f64) / a as f64;
    Reduction {
        params_pct: pct(from.params, to.params),
        flops_pct: pct(from.flops, to.flops),
    }
}

pub fn reduction_report(from: VariantId, to: VariantId, base: &ArchitectureSpec) -> Result<Reduction> {
    Ok(reduction(&model_complexity(from, base)?, &model_complexity(to, base)?))
}

/// Counts every scalar of every instantiated tensor of `model`, one by one.
pub fn oracle_param_count(model: &CodecModel) -> u64 {
    model
        .parameters()
        .iter()
        .map(|(_, t)| t.data().iter().count() as u64)
        .sum()
}

/// Aligned plain-text table, one row per report.
pub fn format_table(reports: &[ComplexityReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<18} {:>14} {:>16} {:>10} {:>10}",
        "model", "params", "flops", "params(K)", "FLOPs(M)"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<18} {:>14} {:>16} {:>10} {:>10}",
            r.variant.name(),
            r.params,
            r.flops,
            r.params_display(),
            r.flops_display()
        );
    }
    out
}

/// Per-layer breakdown of one report.
pub fn format_layers(report: &ComplexityReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<6} {:<8} {:>9} {:>10} {:>12}",
        "layer", "kind", "output", "params", "flops"
    );
    for r in &report.rows {
        let tag = match r.side {
            Side::Encoder => format!("E{}", r.index),
            Side::Decoder => format!("D{}", r.index),
        };
        let _ = writeln!(
            out,
            "{:<6} {:<8} {:>9} {:>10} {:>12}",
            tag,
            r.kind.name(),
            format!("{}x{}", r.out_hw.0, r.out_hw.1),
            r.params,
            r.flops
        );
    }
    out
}

pub const CSV_HEADER: &str = "variant,params,flops,params_display,flops_display";

pub fn to_csv(reports: &[ComplexityReport]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.variant.name(),
            r.params,
            r.flops,
            r.params_display(),
            r.flops_display()
        );
    }
    out
}
