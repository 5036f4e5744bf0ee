//! Noisy channel between encoder and decoder.
//!
//! Noise is circularly symmetric complex Gaussian with power `σ²` per complex
//! symbol (`σ²/2` per real component). Gaussian draws come from
//! `rand_distr::StandardNormal` on a `ChaCha8Rng` stream seeded from the
//! config, so a given seed replays bitwise.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelModel {
    #[default]
    Awgn,
    /// One `h ~ CN(0, 1)` per transmitted vector, then AWGN.
    RayleighSlowFading,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Average transmit power `P̃`.
    pub power: f64,
    /// Noise power `σ²` per complex symbol; zero only in noiseless mode.
    pub noise_power: f64,
    pub seed: u64,
    #[serde(default)]
    pub model: ChannelModel,
}

/// `σ² = P̃ · 10^(-snr_db / 10)`.
pub fn sigma_from_snr(snr_db: f64, power: f64) -> Result<f64> {
    if !power.is_finite() || power <= 0.0 {
        return Err(Error::invalid(
            "sigma_from_snr",
            format!("transmit power {power} must be positive"),
        ));
    }
    if !snr_db.is_finite() {
        return Err(Error::invalid("sigma_from_snr", "SNR must be finite"));
    }
    Ok(power * 10f64.powf(-snr_db / 10.0))
}

impl ChannelConfig {
    pub fn from_snr(snr_db: f64, power: f64, seed: u64) -> Result<Self> {
        Ok(Self {
            power,
            noise_power: sigma_from_snr(snr_db, power)?,
            seed,
            model: ChannelModel::Awgn,
        })
    }

    pub fn noiseless(power: f64, seed: u64) -> Self {
        Self {
            power,
            noise_power: 0.0,
            seed,
            model: ChannelModel::Awgn,
        }
    }

    pub fn with_model(mut self, model: ChannelModel) -> Self {
        self.model = model;
        self
    }

    /// `10·log10(P̃/σ²)`; infinite in noiseless mode.
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.power / self.noise_power).log10()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.power.is_finite() || self.power <= 0.0 {
            return Err(Error::invalid(
                "channel",
                format!("transmit power {} must be positive", self.power),
            ));
        }
        if !self.noise_power.is_finite() || self.noise_power < 0.0 {
            return Err(Error::invalid(
                "channel",
                format!("noise power {} must be finite and >= 0", self.noise_power),
            ));
        }
        Ok(())
    }
}

/// A channel instance owning its own PRNG stream.
#[derive(Clone, Debug)]
pub struct Channel {
    config: ChannelConfig,
    rng: ChaCha8Rng,
}

impl Channel {
    pub fn new(config: ChannelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    fn gaussian_pair(&mut self, variance: f64) -> Complex64 {
        let sd = (variance / 2.0).sqrt();
        let re: f64 = StandardNormal.sample(&mut self.rng);
        let im: f64 = StandardNormal.sample(&mut self.rng);
        Complex64::new(sd * re, sd * im)
    }

    /// `k` i.i.d. `CN(0, σ²)` noise samples.
    pub fn noise(&mut self, k: usize) -> Vec<Complex64> {
        if self.config.noise_power == 0.0 {
            return vec![Complex64::new(0.0, 0.0); k];
        }
        let var = self.config.noise_power;
        (0..k).map(|_| self.gaussian_pair(var)).collect()
    }

    /// A slow-fading coefficient `h ~ CN(0, 1)`.
    pub fn fading_gain(&mut self) -> Complex64 {
        self.gaussian_pair(1.0)
    }

    /// `ẑ = z + n`.
    pub fn awgn(&mut self, z: &[Complex64]) -> Vec<Complex64> {
        if self.config.noise_power == 0.0 {
            return z.to_vec();
        }
        let noise = self.noise(z.len());
        z.iter().zip(noise).map(|(a, n)| a + n).collect()
    }

    /// `ẑ = h·z + n` with a fresh `h` for this vector.
    pub fn rayleigh_slow_fading(&mut self, z: &[Complex64]) -> Vec<Complex64> {
        let h = self.fading_gain();
        self.faded_with_gain(z, h)
    }

    /// Slow fading with a given coefficient, then AWGN.
    pub fn faded_with_gain(&mut self, z: &[Complex64], h: Complex64) -> Vec<Complex64> {
        let faded: Vec<Complex64> = z.iter().map(|a| h * a).collect();
        self.awgn(&faded)
    }

    /// Applies the configured channel model to one transmitted vector.
    pub fn transmit(&mut self, z: &[Complex64]) -> Vec<Complex64> {
        match self.config.model {
            ChannelModel::Awgn => self.awgn(z),
            ChannelModel::RayleighSlowFading => self.rayleigh_slow_fading(z),
        }
    }

    /// Records the channel on a tape for a batch of interleaved feature maps.
    /// Gradients pass through the additive noise unchanged.
    pub fn transmit_on_tape(&mut self, tape: &mut Tape, z: Var) -> Result<Var> {
        let shape = tape.value(z)?.shape();
        let per_item = shape[1] * shape[2] * shape[3];
        if per_item % 2 != 0 {
            return Err(Error::OddElementCount(per_item));
        }
        let mut z = z;
        if self.config.model == ChannelModel::RayleighSlowFading {
            let gains: Vec<(f64, f64)> = (0..shape[0])
                .map(|_| {
                    let h = self.fading_gain();
                    (h.re, h.im)
                })
                .collect();
            z = tape.complex_gain(z, &gains)?;
        }
        if self.config.noise_power == 0.0 {
            return Ok(z);
        }
        let mut noise = Vec::with_capacity(shape[0] * per_item);
        for _ in 0..shape[0] {
            for n in self.noise(per_item / 2) {
                noise.push(n.re);
                noise.push(n.im);
            }
        }
        tape.add_constant(z, &Tensor4::from_vec(shape, noise)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snr_conversion() {
        assert_eq!(sigma_from_snr(0.0, 1.0).unwrap(), 1.0);
        assert!((sigma_from_snr(10.0, 1.0).unwrap() - 0.1).abs() < 1e-15);
        // 10^(-1.9)
        assert!((sigma_from_snr(19.0, 1.0).unwrap() - 0.012589254117941673).abs() < 1e-15);
        assert!((sigma_from_snr(10.0, 2.0).unwrap() - 0.2).abs() < 1e-15);
        assert!(sigma_from_snr(0.0, 0.0).is_err());
        let cfg = ChannelConfig::from_snr(7.0, 1.0, 0).unwrap();
        assert!((cfg.snr_db() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_is_identity() {
        let z: Vec<Complex64> = (0..16).map(|i| Complex64::new(i as f64, -(i as f64) * 0.5)).collect();
        let mut ch = Channel::new(ChannelConfig::noiseless(1.0, 3)).unwrap();
        assert_eq!(ch.awgn(&z), z);
        assert_eq!(ch.faded_with_gain(&z, Complex64::new(1.0, 0.0)), z);
    }

    #[test]
    fn seeded_noise_replays() {
        let z = vec![Complex64::new(1.0, 1.0); 64];
        let cfg = ChannelConfig::from_snr(5.0, 1.0, 99).unwrap();
        let a = Channel::new(cfg).unwrap().awgn(&z);
        let b = Channel::new(cfg).unwrap().awgn(&z);
        assert_eq!(a, b);
        let c = Channel::new(ChannelConfig { seed: 100, ..cfg }).unwrap().awgn(&z);
        assert_ne!(a, c);
    }

    #[test]
    fn slow_fading_uses_one_gain_per_vector() {
        let z: Vec<Complex64> = (1..=8).map(|i| Complex64::new(i as f64, 0.5)).collect();
        let cfg = ChannelConfig::noiseless(1.0, 4).with_model(ChannelModel::RayleighSlowFading);
        let out = Channel::new(cfg).unwrap().transmit(&z);
        let ratio = out[0] / z[0];
        for (o, i) in out.iter().zip(&z) {
            assert!((o / i - ratio).norm() < 1e-12);
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(Channel::new(ChannelConfig {
            power: -1.0,
            noise_power: 0.1,
            seed: 0,
            model: ChannelModel::Awgn
        })
        .is_err());
        assert!(Channel::new(ChannelConfig {
            power: 1.0,
            noise_power: f64::NAN,
            seed: 0,
            model: ChannelModel::Awgn
        })
        .is_err());
    }
}
