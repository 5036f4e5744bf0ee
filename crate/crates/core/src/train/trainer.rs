//! Training loop and SNR-sweep evaluation.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tape;
use crate::channel::{Channel, ChannelConfig};
use crate::error::{Error, Result};
use crate::model::{normalize_pixels, CodecModel};
use crate::tensor::Tensor4;
use crate::train::adam::{adam_step, AdamState};
use crate::train::dataset::Dataset;
use crate::train::metrics::{mse_loss, psnr_per_item, PSNR_CAP_DB};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stops after this many optimizer steps when set, regardless of `epochs`.
    pub max_steps: Option<usize>,
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 20,
            max_steps: None,
            snr_db: 10.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("train", "learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("train", "batch size must be positive"));
        }
        if self.epochs == 0 && self.max_steps.is_none() {
            return Err(Error::invalid("train", "epochs must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    /// Pixel-mean squared error on `[0, 1]` images; the optimized quantity.
    pub mse: f64,
    /// Batch mean of per-sample squared error norms on `[0, 1]` images.
    pub sample_sq_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub history: Vec<StepRecord>,
}

impl TrainReport {
    pub fn losses(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.mse).collect()
    }

    /// Mean loss over the first and last `window` steps.
    pub fn smoothed_endpoints(&self, window: usize) -> Option<(f64, f64)> {
        smoothed_endpoints(&self.losses(), window)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,epoch,mse,sample_sq_error\n");
        for r in &self.history {
            let _ = writeln!(out, "{},{},{:e},{:e}", r.step, r.epoch, r.mse, r.sample_sq_error);
        }
        out
    }
}

pub fn smoothed_endpoints(losses: &[f64], window: usize) -> Option<(f64, f64)> {
    if window == 0 || losses.len() < window {
        return None;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Some((mean(&losses[..window]), mean(&losses[losses.len() - window..])))
}

/// Minimizes the reconstruction MSE through the simulated channel with Adam.
///
/// Mini-batch order comes from a shuffle stream seeded by `cfg.seed`; the
/// channel noise comes from `channel.seed`. A fresh noise realization is
/// drawn for every batch.
pub fn train(model: &mut CodecModel, data: &Dataset, cfg: &TrainConfig, channel: ChannelConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    let mut channel = Channel::new(channel)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model.parameters().iter().map(|(_, t)| t.shape()));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::new();
    let step_limit = cfg.max_steps.unwrap_or(usize::MAX);

    let mut epoch = 0;
    while history.len() < step_limit && (cfg.max_steps.is_some() || epoch < cfg.epochs) {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size) {
            if history.len() >= step_limit {
                break;
            }
            let images = normalize_pixels(&data.batch(chunk))?;
            let mut tape = Tape::new();
            let vars = model.register(&mut tape, true);
            let (loss, out) = model.loss_on_tape(&mut tape, &vars, &images, &mut channel)?;
            let mse = tape.value(loss)?.data()[0];
            if !mse.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: history.len(),
                    loss: mse,
                });
            }
            let sample_sq_error = mse_loss(&images, tape.value(out)?)?;
            let mut grads = tape.backward(loss, &Tensor4::full([1, 1, 1, 1], 1.0))?;
            let grads: Vec<Tensor4> = vars
                .iter()
                .zip(model.parameters())
                .map(|(&v, (_, p))| grads.take(v).unwrap_or_else(|| Tensor4::zeros(p.shape())))
                .collect();
            adam_step(model.parameters_mut(), &grads, &mut adam, cfg.learning_rate)?;
            history.push(StepRecord {
                step: history.len(),
                epoch,
                mse,
                sample_sq_error,
            });
        }
        epoch += 1;
    }
    Ok(TrainReport { history })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub snr_db: f64,
    pub mean_psnr_db: f64,
    pub std_psnr_db: f64,
    pub n_images: usize,
    pub n_draws: usize,
}

pub const SWEEP_CSV_HEADER: &str = "snr_db,mean_psnr_db,std_psnr_db,n_images,n_draws";

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{},{}",
            r.snr_db, r.mean_psnr_db, r.std_psnr_db, r.n_images, r.n_draws
        );
    }
    out
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Channel seed for one (SNR point, image) pair.
pub fn derived_seed(master: u64, snr_index: usize, image_index: usize) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(snr_index as u64)) ^ image_index as u64)
}

const EVAL_BATCH: usize = 32;

/// Mean and standard deviation of PSNR over every image and noise draw at
/// each SNR point. `f64::INFINITY` in `snr_list` means a noiseless channel.
/// Lossless reconstructions count as [`PSNR_CAP_DB`].
pub fn evaluate_sweep(
    model: &CodecModel,
    data: &Dataset,
    snr_list: &[f64],
    draws_per_image: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if data.is_empty() {
        return Err(Error::Dataset("evaluation set is empty".into()));
    }
    if draws_per_image == 0 {
        return Err(Error::invalid("evaluate_sweep", "draws_per_image must be positive"));
    }
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut encoded = Vec::with_capacity(data.len());
    for chunk in indices.chunks(EVAL_BATCH) {
        encoded.extend(model.encode(&data.batch(chunk))?);
    }
    let power = model.power();
    let mut rows = Vec::with_capacity(snr_list.len());
    for (si, &snr) in snr_list.iter().enumerate() {
        let mut psnrs = Vec::with_capacity(data.len() * draws_per_image);
        for chunk in indices.chunks(EVAL_BATCH) {
            let mut received = Vec::with_capacity(chunk.len() * draws_per_image);
            for &i in chunk {
                let s = derived_seed(seed, si, i);
                let cfg = if snr == f64::INFINITY {
                    ChannelConfig::noiseless(power, s)
                } else {
                    ChannelConfig::from_snr(snr, power, s)?
                };
                let mut channel = Channel::new(cfg)?;
                for _ in 0..draws_per_image {
                    received.push(channel.transmit(&encoded[i]));
                }
            }
            let decoded = model.decode(&received)?;
            let repeated: Vec<usize> = chunk
                .iter()
                .flat_map(|&i| std::iter::repeat_n(i, draws_per_image))
                .collect();
            let originals = data.batch(&repeated);
            psnrs.extend(
                psnr_per_item(&originals, &decoded)?
                    .into_iter()
                    .map(|p| p.min(PSNR_CAP_DB)),
            );
        }
        let n = psnrs.len() as f64;
        let mean = psnrs.iter().sum::<f64>() / n;
        let var = psnrs.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
        rows.push(SweepRow {
            snr_db: snr,
            mean_psnr_db: mean,
            std_psnr_db: var.sqrt(),
            n_images: data.len(),
            n_draws: draws_per_image,
        });
    }
    Ok(rows)
}
