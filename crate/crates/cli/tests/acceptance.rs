//! Acceptance suite. Runs every headline criterion at its stated tolerance
//! and prints one PASS/FAIL line each; exits non-zero if any fail.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dsc_jscc::autodiff::Tape;
use dsc_jscc::channel::{Channel, ChannelConfig};
use dsc_jscc::complexity::{self, architecture_complexity, layer_params, model_complexity, oracle_param_count};
use dsc_jscc::config::ExperimentConfig;
use dsc_jscc::gradcheck::{end_to_end_check, finite_diff_check, Primitive};
use dsc_jscc::model::{
    default_base_architecture, squared_norm, Activation, CodecModel, InputShape, LayerKind, LayerSpec, VariantId,
};
use dsc_jscc::tensor::Tensor4;
use dsc_jscc::train::{evaluate_sweep, smoothed_endpoints, synthetic_dataset, train};

const PARAMS_K: [f64; 11] = [143.7, 136.7, 101.0, 53.6, 30.9, 25.4, 48.4, 48.0, 31.9, 18.4, 12.3];
const FLOPS_M: [f64; 11] = [
    832.4, 790.4, 644.3, 449.5, 369.8, 205.9, 254.1, 285.6, 232.7, 163.9, 92.8,
];

const DESK_CONFIG: &str = r#"{
  "variant": "dsc-jscc-60-e2d2",
  "input": "32x32",
  "c": 8,
  "max_steps": 200,
  "train_snr_db": 10,
  "synthetic_images": {"train": 64, "test": 32, "seed": 11},
  "eval_snr_db": [0, 10, 19],
  "eval_draws": 3,
  "seed": 5
}"#;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn tenths(x: f64) -> u64 {
    (x * 10.0).round() as u64
}

fn reference_base() -> dsc_jscc::model::ArchitectureSpec {
    default_base_architecture(InputShape::REFERENCE, 8).unwrap()
}

fn params_table() -> Outcome {
    let base = reference_base();
    let mut misses = Vec::new();
    for (v, &want) in VariantId::ALL.iter().zip(&PARAMS_K) {
        let r = model_complexity(*v, &base).unwrap();
        if r.params_k_tenths() != tenths(want) {
            misses.push(format!("{v}: {} (count {}) vs {want}", r.params_display(), r.params));
        }
    }
    outcome(
        misses.is_empty(),
        if misses.is_empty() {
            "11/11 cells exact".into()
        } else {
            misses.join("; ")
        },
    )
}

fn flops_table() -> Outcome {
    let base = reference_base();
    let mut misses = Vec::new();
    for (v, &want) in VariantId::ALL.iter().zip(&FLOPS_M) {
        let r = model_complexity(*v, &base).unwrap();
        if r.flops_m_tenths() != tenths(want) {
            misses.push(format!("{v}: {} vs {want}", r.flops_display()));
        }
    }
    let hits = 11 - misses.len();
    outcome(
        misses.is_empty(),
        if misses.is_empty() {
            "11/11 cells exact".into()
        } else {
            format!("{hits}/11 exact; {}", misses.join("; "))
        },
    )
}

fn reductions() -> Outcome {
    let base = reference_base();
    let a = complexity::reduction_report(VariantId::Baseline, VariantId::R60E1D1, &base).unwrap();
    let b = complexity::reduction_report(VariantId::R60E1D1, VariantId::R60E2D2, &base).unwrap();
    let got = [a.params_pct, a.flops_pct, b.params_pct, b.flops_pct];
    let want = [62.7, 46.0, 52.6, 54.2];
    let pass = got.iter().zip(&want).all(|(g, w)| (g - w).abs() <= 0.1);
    outcome(
        pass,
        format!(
            "got {:.2}/{:.2}/{:.2}/{:.2}%, want {want:?} ±0.1",
            got[0], got[1], got[2], got[3]
        ),
    )
}

/// Counts one per weight index tuple, straight from each layer's definition.
fn enumerate_layer(l: &LayerSpec) -> u64 {
    let (cin, cout, k) = (l.in_channels, l.out_channels, l.kernel);
    let mut n = 0u64;
    if l.kind.is_separable() {
        for _c in 0..cin {
            for _y in 0..k {
                for _x in 0..k {
                    n += 1;
                }
            }
            n += 1;
        }
        for _o in 0..cout {
            for _c in 0..cin {
                n += 1;
            }
            n += 1;
        }
    } else {
        for _o in 0..cout {
            for _c in 0..cin {
                for _y in 0..k {
                    for _x in 0..k {
                        n += 1;
                    }
                }
            }
            n += 1;
        }
    }
    if l.activation == Activation::PRelu {
        n += cout as u64;
    }
    n
}

fn random_layer(rng: &mut ChaCha8Rng) -> LayerSpec {
    let kinds = [LayerKind::Conv, LayerKind::DSConv, LayerKind::TConv, LayerKind::DSTConv];
    let kind = kinds[rng.random_range(0..4)];
    let stride = rng.random_range(1..=3);
    LayerSpec {
        kind,
        in_channels: rng.random_range(1..=48),
        out_channels: rng.random_range(1..=48),
        kernel: [1, 3, 5, 7][rng.random_range(0..4)],
        stride,
        padding: rng.random_range(0..=3),
        output_padding: kind.is_transposed().then(|| rng.random_range(0..stride)),
        activation: [Activation::PRelu, Activation::Sigmoid, Activation::None][rng.random_range(0..3)],
    }
}

fn oracle_equivalence() -> Outcome {
    let base = reference_base();
    let mut bad = Vec::new();
    for v in VariantId::ALL {
        let arch = dsc_jscc::model::build_variant(v, &base).unwrap();
        let model = CodecModel::new(arch.clone(), v, 1.0, 0).unwrap();
        let analytic = model_complexity(v, &base).unwrap().params;
        let by_layer: u64 = arch.layers().map(enumerate_layer).sum();
        if analytic != oracle_param_count(&model) || analytic != by_layer {
            bad.push(format!(
                "{v}: {analytic} vs {} / {by_layer}",
                oracle_param_count(&model)
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..200 {
        let l = random_layer(&mut rng);
        if layer_params(&l) != enumerate_layer(&l) {
            bad.push(format!("random spec {i}: {l:?}"));
        }
    }
    // Random architectures with arbitrary replacement masks, instantiated.
    for i in 0..20 {
        let side = [8, 16, 24, 32][rng.random_range(0..4)];
        let mut arch = default_base_architecture(InputShape::square(side), rng.random_range(1..=12)).unwrap();
        for l in arch.encoder.iter_mut().chain(arch.decoder.iter_mut()) {
            l.kind = l.kind.with_separable(rng.random_bool(0.5));
        }
        let model = CodecModel::new(arch.clone(), VariantId::Baseline, 1.0, i).unwrap();
        let analytic = architecture_complexity(VariantId::Baseline, &arch).unwrap().params;
        if analytic != oracle_param_count(&model) {
            bad.push(format!("random architecture {i}"));
        }
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            "11 variants + 200 random layer specs + 20 random masks agree".into()
        } else {
            bad.join("; ")
        },
    )
}

fn gradient_suite() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for (i, p) in Primitive::ALL.iter().enumerate() {
        let r = finite_diff_check(*p, 5, 100 + i as u64).unwrap();
        let tol = match p {
            Primitive::PRelu | Primitive::Sigmoid => 1e-6,
            _ => 1e-4,
        };
        if r.max_rel_error() >= tol {
            pass = false;
            notes.push(format!("{p:?} {:.2e}", r.max_rel_error()));
        }
    }
    let conv7 = finite_diff_check(Primitive::Conv2d, 10, 7).unwrap().max_rel_error();
    pass &= conv7 < 1e-4;

    let mut worst_e2e = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for (i, v) in [VariantId::Baseline, VariantId::R60E2D2, VariantId::R100]
        .into_iter()
        .enumerate()
    {
        let base = default_base_architecture(InputShape::square(8), 2).unwrap();
        let arch = dsc_jscc::model::build_variant(v, &base).unwrap();
        let model = CodecModel::new(arch, v, 1.0, 10 + i as u64).unwrap();
        let images = Tensor4::random_uniform([2, 3, 8, 8], 0.0, 1.0, &mut rng);
        let r = end_to_end_check(&model, &images, 5, 20 + i as u64).unwrap();
        if !r.dead_parameters.is_empty() {
            pass = false;
            notes.push(format!("{v}: zero gradient for {:?}", r.dead_parameters));
        }
        worst_e2e = worst_e2e.max(r.max_rel_error());
    }
    pass &= worst_e2e < 1e-3;
    outcome(
        pass,
        format!(
            "{} primitives ok, conv seed 7 {conv7:.1e}, end-to-end worst {worst_e2e:.1e}{}",
            Primitive::ALL.len(),
            notes.iter().map(|n| format!("; {n}")).collect::<String>()
        ),
    )
}

fn power_constraint() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    for i in 0..1000u64 {
        let v = VariantId::ALL[rng.random_range(0..VariantId::ALL.len())];
        let base = default_base_architecture(InputShape::square(8), rng.random_range(1..=6)).unwrap();
        let power = rng.random_range(0.1..10.0);
        let model = CodecModel::new(dsc_jscc::model::build_variant(v, &base).unwrap(), v, power, i).unwrap();
        let image = Tensor4::random_uniform([1, 3, 8, 8], 0.0, 255.0, &mut rng);
        let k = model.bandwidth().k as f64;
        for z in model.encode(&image).unwrap() {
            worst = worst.max((squared_norm(&z) - k * power).abs() / (k * power));
        }
    }
    outcome(
        worst <= 1e-6,
        format!("1000 draws, worst relative deviation {worst:.2e}"),
    )
}

fn channel_statistics() -> Outcome {
    let sigma2 = 0.37;
    let mut ch = Channel::new(ChannelConfig {
        noise_power: sigma2,
        ..ChannelConfig::noiseless(1.0, 8)
    })
    .unwrap();
    let n = 1_000_000;
    let noise = ch.noise(n);
    let var = noise.iter().map(|x| x.norm_sqr()).sum::<f64>() / n as f64;
    let var_ok = (var / sigma2 - 1.0).abs() <= 0.02;

    let z: Vec<Complex64> = (0..4096)
        .map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos()))
        .collect();
    let mut clean = Channel::new(ChannelConfig::noiseless(1.0, 3)).unwrap();
    let identity = clean.transmit(&z) == z;
    let mut tape = Tape::new();
    let feature = Tensor4::random_uniform([2, 4, 4, 4], -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(1));
    let x = tape.constant(feature.clone());
    let y = clean.transmit_on_tape(&mut tape, x).unwrap();
    let tape_identity = tape.value(y).unwrap() == &feature;
    outcome(
        var_ok && identity && tape_identity,
        format!(
            "variance ratio {:.4} over 1e6 symbols, zero-noise identity {}",
            var / sigma2,
            identity && tape_identity
        ),
    )
}

fn desk_training() -> Outcome {
    let cfg = ExperimentConfig::from_json(DESK_CONFIG).unwrap();
    let syn = cfg.synthetic_images.clone().unwrap();
    let side = cfg.input_shape().unwrap().width;
    let data = synthetic_dataset(syn.train, side, syn.seed).unwrap();
    let test = synthetic_dataset(syn.test, side, syn.seed + 1).unwrap();
    let untrained = CodecModel::new(cfg.architecture().unwrap(), cfg.variant, cfg.power, cfg.seed).unwrap();
    let mut model = untrained.clone();
    let report = train(&mut model, &data, &cfg.train_config(), cfg.train_channel().unwrap()).unwrap();
    let (first, last) = smoothed_endpoints(&report.losses(), 20).unwrap();

    let snrs = [0.0, 10.0, 19.0];
    let before = evaluate_sweep(&untrained, &test, &snrs, 3, cfg.seed).unwrap();
    let after = evaluate_sweep(&model, &test, &snrs, 3, cfg.seed).unwrap();
    let loss_ok = last <= 0.5 * first;
    let beats = before.iter().zip(&after).all(|(b, a)| a.mean_psnr_db >= b.mean_psnr_db);
    let drops: Vec<f64> = after
        .windows(2)
        .map(|w| w[0].mean_psnr_db - w[1].mean_psnr_db)
        .filter(|d| *d > 0.0)
        .collect();
    let monotone = drops.is_empty() || (drops.len() == 1 && drops[0] <= 0.1);
    let fmt = |rows: &[dsc_jscc::train::SweepRow]| {
        rows.iter()
            .map(|r| format!("{:.2}", r.mean_psnr_db))
            .collect::<Vec<_>>()
            .join("/")
    };
    outcome(
        loss_ok && beats && monotone,
        format!(
            "smoothed loss {first:.4} -> {last:.4} ({:.0}%), PSNR@0/10/19 dB trained {} vs untrained {}",
            100.0 * last / first,
            fmt(&after),
            fmt(&before)
        ),
    )
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dsc-jscc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("desk.json");
    std::fs::write(&cfg, DESK_CONFIG).unwrap();
    let run = |name: &str| -> Result<(Vec<u8>, Vec<u8>), String> {
        let out = dir.path().join(name);
        let (c, o) = (cfg.to_str().unwrap(), out.to_str().unwrap());
        for args in [
            vec!["--config", c, "--out", o, "train"],
            vec!["--config", c, "--out", o, "eval"],
        ] {
            let r = cli(&args);
            if !r.status.success() {
                return Err(String::from_utf8_lossy(&r.stderr).into_owned());
            }
        }
        Ok((
            std::fs::read(out.join("loss.csv")).unwrap(),
            std::fs::read(out.join("sweep.csv")).unwrap(),
        ))
    };
    match (run("a"), run("b")) {
        (Ok(a), Ok(b)) => outcome(
            a == b,
            format!(
                "loss CSV identical: {}, sweep CSV identical: {}",
                a.0 == b.0,
                a.1 == b.1
            ),
        ),
        (Err(e), _) | (_, Err(e)) => outcome(false, format!("CLI failed: {e}")),
    }
}

fn golden() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let mut bad = Vec::new();
    for (file, args) in [
        ("variants.txt", vec!["variants"]),
        ("analyze_all.txt", vec!["analyze", "--all"]),
    ] {
        let expected = std::fs::read_to_string(dir.join(file)).unwrap_or_default();
        let got = cli(&args);
        if !got.status.success() || String::from_utf8_lossy(&got.stdout) != expected {
            bad.push(file);
        }
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            "variants, analyze --all match".into()
        } else {
            format!("mismatch: {bad:?}")
        },
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("parameter table (0.1 K, exact)", params_table),
        ("FLOP table (0.1 M, exact, MAC convention)", flops_table),
        ("reduction claims (±0.1 pp)", reductions),
        ("parameter oracle equivalence", oracle_equivalence),
        ("gradient suite", gradient_suite),
        ("power constraint (1e-6 rel)", power_constraint),
        ("channel statistics", channel_statistics),
        ("desk-scale training", desk_training),
        ("train + eval determinism", cli_determinism),
        ("golden CLI output", golden),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        println!(
            "{} | {name} | {} | {:.1}s",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
