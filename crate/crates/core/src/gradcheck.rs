//! Central finite-difference checks of the reverse-mode gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::channel::{Channel, ChannelConfig};
use crate::error::Result;
use crate::model::CodecModel;
use crate::tensor::Tensor4;

/// Differentiable primitives that can be checked in isolation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Primitive {
    Conv2d,
    DepthwiseConv2d,
    PointwiseConv2d,
    TConv2d,
    DepthwiseTConv2d,
    PRelu,
    Sigmoid,
    PowerNormalize,
    ComplexGain,
    Mse,
}

impl Primitive {
    pub const ALL: [Primitive; 10] = [
        Primitive::Conv2d,
        Primitive::DepthwiseConv2d,
        Primitive::PointwiseConv2d,
        Primitive::TConv2d,
        Primitive::DepthwiseTConv2d,
        Primitive::PRelu,
        Primitive::Sigmoid,
        Primitive::PowerNormalize,
        Primitive::ComplexGain,
        Primitive::Mse,
    ];
}

pub const FD_STEP: f64 = 1e-4;

/// Largest relative error seen for each named operand over all trials.
///
/// The relative error of one operand is `max_i |analytic_i - numeric_i|`
/// divided by the larger of the two gradients' max-norms.
#[derive(Clone, Debug)]
pub struct FdReport {
    pub primitive: Primitive,
    pub per_param: Vec<(&'static str, f64)>,
}

impl FdReport {
    pub fn max_rel_error(&self) -> f64 {
        self.per_param.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }
}

type Builder = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

/// One randomized instance of a primitive: named operands and a builder that
/// records the primitive on a tape.
struct Case {
    names: Vec<&'static str>,
    operands: Vec<Tensor4>,
    build: Builder,
}

fn uniform(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4 {
    Tensor4::random_uniform(shape, -1.0, 1.0, rng)
}

/// Values in `±[0.05, 1]`, keeping clear of the PReLU kink.
fn away_from_zero(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4 {
    let mut t = Tensor4::random_uniform(shape, 0.05, 1.0, rng);
    for v in t.data_mut() {
        if rng.random_bool(0.5) {
            *v = -*v;
        }
    }
    t
}

fn conv_case(rng: &mut ChaCha8Rng, depthwise: bool, transposed: bool, pointwise: bool) -> Case {
    let n = rng.random_range(1..=2);
    let cin = rng.random_range(1..=3);
    let cout = if depthwise { cin } else { rng.random_range(1..=3) };
    let k = if pointwise {
        1
    } else {
        [1, 3, 5][rng.random_range(0..3)]
    };
    let stride = if pointwise { 1 } else { rng.random_range(1..=2) };
    let padding = if pointwise { 0 } else { rng.random_range(0..=k / 2) };
    let output_padding = if transposed { rng.random_range(0..stride) } else { 0 };
    let hw = rng.random_range(k.max(3)..=6);
    let x = uniform([n, cin, hw, hw], rng);
    let wshape = match (depthwise, transposed) {
        (true, _) => [cin, 1, k, k],
        (false, false) => [cout, cin, k, k],
        (false, true) => [cin, cout, k, k],
    };
    let w = uniform(wshape, rng);
    let b = uniform([1, cout, 1, 1], rng);
    Case {
        names: vec!["input", "weight", "bias"],
        operands: vec![x, w, b],
        build: Box::new(move |t, v| match (depthwise, transposed) {
            (false, false) if pointwise => t.pointwise_conv2d(v[0], v[1], Some(v[2])),
            (false, false) => t.conv2d(v[0], v[1], Some(v[2]), stride, padding),
            (true, false) => t.depthwise_conv2d(v[0], v[1], Some(v[2]), stride, padding),
            (false, true) => t.tconv2d(v[0], v[1], Some(v[2]), stride, padding, output_padding),
            (true, true) => t.depthwise_tconv2d(v[0], v[1], Some(v[2]), stride, padding, output_padding),
        }),
    }
}

fn make_case(primitive: Primitive, rng: &mut ChaCha8Rng) -> Case {
    let small = |rng: &mut ChaCha8Rng| -> [usize; 4] {
        [
            rng.random_range(1..=2),
            2 * rng.random_range(1..=2),
            rng.random_range(1..=4),
            rng.random_range(1..=4),
        ]
    };
    match primitive {
        Primitive::Conv2d => conv_case(rng, false, false, false),
        Primitive::DepthwiseConv2d => conv_case(rng, true, false, false),
        Primitive::PointwiseConv2d => conv_case(rng, false, false, true),
        Primitive::TConv2d => conv_case(rng, false, true, false),
        Primitive::DepthwiseTConv2d => conv_case(rng, true, true, false),
        Primitive::PRelu => {
            let shape = small(rng);
            let x = away_from_zero(shape, rng);
            let a = Tensor4::random_uniform([1, shape[1], 1, 1], 0.0, 0.5, rng);
            Case {
                names: vec!["input", "slopes"],
                operands: vec![x, a],
                build: Box::new(|t, v| t.prelu(v[0], v[1])),
            }
        }
        Primitive::Sigmoid => {
            let x = Tensor4::random_uniform(small(rng), -4.0, 4.0, rng);
            Case {
                names: vec!["input"],
                operands: vec![x],
                build: Box::new(|t, v| t.sigmoid(v[0])),
            }
        }
        Primitive::PowerNormalize => {
            let x = uniform(small(rng), rng);
            let power = rng.random_range(0.5..2.0);
            Case {
                names: vec!["input"],
                operands: vec![x],
                build: Box::new(move |t, v| t.power_normalize(v[0], power)),
            }
        }
        Primitive::ComplexGain => {
            let shape = small(rng);
            let gains: Vec<(f64, f64)> = (0..shape[0])
                .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            Case {
                names: vec!["input"],
                operands: vec![uniform(shape, rng)],
                build: Box::new(move |t, v| t.complex_gain(v[0], &gains)),
            }
        }
        Primitive::Mse => {
            let shape = small(rng);
            let target = uniform(shape, rng);
            Case {
                names: vec!["input"],
                operands: vec![uniform(shape, rng)],
                build: Box::new(move |t, v| t.mse(v[0], &target)),
            }
        }
    }
}

/// `<primitive(operands), weights>`, the scalar probed by the check.
fn probe(case: &Case, operands: &[Tensor4], weights: &Tensor4) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = operands.iter().map(|o| tape.param(o.clone())).collect();
    let out = (case.build)(&mut tape, &vars)?;
    tape.value(out)?.dot(weights)
}

/// Compares reverse-mode gradients of `primitive` against central finite
/// differences over `trials` random instances. Deterministic in `seed`.
pub fn finite_diff_check(primitive: Primitive, trials: usize, seed: u64) -> Result<FdReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Vec<(&'static str, f64)> = Vec::new();
    for _ in 0..trials {
        let case = make_case(primitive, &mut rng);
        let mut tape = Tape::new();
        let vars: Vec<Var> = case.operands.iter().map(|o| tape.param(o.clone())).collect();
        let out = (case.build)(&mut tape, &vars)?;
        let weights = uniform(tape.value(out)?.shape(), &mut rng);
        let grads = tape.backward(out, &weights)?;

        for (slot, (&name, var)) in case.names.iter().zip(&vars).enumerate() {
            let analytic = grads
                .get(*var)
                .cloned()
                .unwrap_or_else(|| Tensor4::zeros(case.operands[slot].shape()));
            let mut numeric = Tensor4::zeros(analytic.shape());
            let mut operands = case.operands.clone();
            for i in 0..analytic.len() {
                let orig = operands[slot].data()[i];
                operands[slot].data_mut()[i] = orig + FD_STEP;
                let plus = probe(&case, &operands, &weights)?;
                operands[slot].data_mut()[i] = orig - FD_STEP;
                let minus = probe(&case, &operands, &weights)?;
                operands[slot].data_mut()[i] = orig;
                numeric.data_mut()[i] = (plus - minus) / (2.0 * FD_STEP);
            }
            let diff = analytic
                .data()
                .iter()
                .zip(numeric.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let scale = analytic.max_abs().max(numeric.max_abs()).max(f64::MIN_POSITIVE);
            let rel = diff / scale;
            match worst.iter_mut().find(|(n, _)| *n == name) {
                Some((_, e)) => *e = e.max(rel),
                None => worst.push((name, rel)),
            }
        }
    }
    Ok(FdReport {
        primitive,
        per_param: worst,
    })
}

/// Result of probing random scalar parameters through a whole codec.
#[derive(Clone, Debug)]
pub struct EndToEndReport {
    /// `(parameter name, flat index, analytic, numeric)` per probe.
    pub probes: Vec<(String, usize, f64, f64)>,
    /// Parameter tensors whose gradient is identically zero.
    pub dead_parameters: Vec<String>,
}

impl EndToEndReport {
    /// Largest `|a - n| / max(|a|, |n|)` over the probes.
    pub fn max_rel_error(&self) -> f64 {
        self.probes
            .iter()
            .map(|&(_, _, a, n)| {
                let scale = a.abs().max(n.abs());
                if scale == 0.0 {
                    0.0
                } else {
                    (a - n).abs() / scale
                }
            })
            .fold(0.0, f64::max)
    }
}

fn codec_loss(model: &CodecModel, images: &Tensor4) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = model.register(&mut tape, false);
    let mut channel = Channel::new(ChannelConfig::noiseless(model.power(), 0))?;
    let (loss, _) = model.loss_on_tape(&mut tape, &vars, images, &mut channel)?;
    Ok(tape.value(loss)?.data()[0])
}

/// Checks the gradient of the reconstruction loss through
/// encode → noiseless channel → decode at `probes` random scalar parameters.
pub fn end_to_end_check(model: &CodecModel, images: &Tensor4, probes: usize, seed: u64) -> Result<EndToEndReport> {
    let mut tape = Tape::new();
    let vars = model.register(&mut tape, true);
    let mut channel = Channel::new(ChannelConfig::noiseless(model.power(), 0))?;
    let (loss, _) = model.loss_on_tape(&mut tape, &vars, images, &mut channel)?;
    let grads = tape.backward(loss, &Tensor4::full([1, 1, 1, 1], 1.0))?;

    let dead_parameters = model
        .parameters()
        .iter()
        .zip(&vars)
        .filter(|(_, v)| grads.get(**v).is_none_or(|g| g.max_abs() == 0.0))
        .map(|((name, _), _)| name.clone())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = model.scalar_count();
    let mut out = Vec::with_capacity(probes);
    for _ in 0..probes {
        let mut flat = rng.random_range(0..total);
        let slot = model
            .parameters()
            .iter()
            .position(|(_, t)| {
                if flat < t.len() {
                    true
                } else {
                    flat -= t.len();
                    false
                }
            })
            .expect("flat index within the parameter count");
        let analytic = grads.get(vars[slot]).map_or(0.0, |g| g.data()[flat]);
        let mut perturbed = model.clone();
        let orig = model.parameters()[slot].1.data()[flat];
        let set = |m: &mut CodecModel, v: f64| {
            m.parameters_mut().nth(slot).expect("slot exists").data_mut()[flat] = v;
        };
        set(&mut perturbed, orig + FD_STEP);
        let plus = codec_loss(&perturbed, images)?;
        set(&mut perturbed, orig - FD_STEP);
        let minus = codec_loss(&perturbed, images)?;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        out.push((model.parameters()[slot].0.clone(), flat, analytic, numeric));
    }
    Ok(EndToEndReport {
        probes: out,
        dead_parameters,
    })
}
