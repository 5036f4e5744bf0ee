//! Experiment configuration files (JSON).
//!
//! Exactly one of `rho` and `c` is normally given and the other is derived:
//! `n = W·H·C`, `k = ⌊ρ·n⌋`, `c = ⌊2k / (H̄·W̄)⌋`. Giving both is accepted
//! only when they agree.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, ChannelModel};
use crate::error::{Error, Result};
use crate::model::{base_latent_hw, build_variant, default_base_architecture, ArchitectureSpec, InputShape, VariantId};
use crate::train::TrainConfig;

/// An exact non-negative rational, parsed from `"1/12"`, `"0.25"` or a JSON number.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn parse(s: &str) -> Result<Ratio> {
        let bad = || Error::Config(format!("bad ratio `{s}`; expected `a/b` or a decimal"));
        let s = s.trim();
        let r = if let Some((a, b)) = s.split_once('/') {
            let num = a.trim().parse::<u64>().map_err(|_| bad())?;
            let den = b.trim().parse::<u64>().map_err(|_| bad())?;
            Ratio { num, den }
        } else {
            let (int, frac) = s.split_once('.').unwrap_or((s, ""));
            if (int.is_empty() && frac.is_empty()) || !(int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit())) {
                return Err(bad());
            }
            let den = u32::try_from(frac.len())
                .ok()
                .and_then(|e| 10u64.checked_pow(e))
                .ok_or_else(bad)?;
            let digits = format!("{int}{frac}");
            let num = if digits.is_empty() {
                0
            } else {
                digits.parse::<u64>().map_err(|_| bad())?
            };
            Ratio { num, den }
        };
        if r.den == 0 {
            return Err(bad());
        }
        Ok(r)
    }

    /// `⌊self · n⌋`, or `None` on overflow.
    pub fn floor_times(self, n: usize) -> Option<usize> {
        let v = (self.num as u128).checked_mul(n as u128)? / self.den as u128;
        usize::try_from(v).ok()
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum RatioInput {
    Number(f64),
    Text(String),
}

impl RatioInput {
    fn to_ratio(&self) -> Result<Ratio> {
        match self {
            // Display gives the shortest decimal that round-trips, so 0.1 stays 1/10.
            RatioInput::Number(x) if x.is_finite() && *x >= 0.0 => Ratio::parse(&format!("{x}")),
            RatioInput::Number(x) => Err(Error::Config(format!("ratio {x} must be finite and non-negative"))),
            RatioInput::Text(s) => Ratio::parse(s),
        }
    }
}

/// Procedurally generated images used in place of a dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticImages {
    pub train: usize,
    #[serde(default)]
    pub test: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_variant() -> VariantId {
    VariantId::Baseline
}
fn default_input() -> String {
    InputShape::REFERENCE.to_string()
}
fn default_power() -> f64 {
    1.0
}
fn default_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    32
}
fn default_epochs() -> usize {
    20
}
fn default_train_snr() -> f64 {
    10.0
}
fn default_snr_list() -> Vec<f64> {
    vec![0.0, 5.0, 10.0, 15.0, 19.0]
}
fn default_draws() -> usize {
    1
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Raw configuration file contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_variant")]
    pub variant: VariantId,
    /// `WxH` or `WxHxC`.
    #[serde(default = "default_input")]
    pub input: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho: Option<RatioInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<usize>,
    #[serde(default = "default_power")]
    pub power: f64,
    #[serde(default)]
    pub channel: ChannelModel,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(default = "default_train_snr")]
    pub train_snr_db: f64,
    #[serde(default = "default_snr_list")]
    pub eval_snr_db: Vec<f64>,
    #[serde(default = "default_draws")]
    pub eval_draws: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_dir: Option<PathBuf>,
    /// Center-crop side applied to every loaded image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic_images: Option<SyntheticImages>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

/// The bandwidth quantities implied by a configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Derived {
    pub input: InputShape,
    pub latent_hw: (usize, usize),
    pub n: usize,
    /// `⌊ρ·n⌋` when ρ was given, otherwise `c·H̄·W̄/2`.
    pub k: usize,
    pub c: usize,
    pub rho: Ratio,
}

impl fmt::Display for Derived {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "input={} latent={}x{} n={} k={} c={} rho={}",
            self.input, self.latent_hw.1, self.latent_hw.0, self.n, self.k, self.c, self.rho
        )
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.derive()?;
        cfg.train_config().validate()?;
        if cfg.eval_draws == 0 {
            return Err(Error::Config("eval_draws must be positive".into()));
        }
        if cfg.eval_snr_db.iter().any(|s| s.is_nan()) {
            return Err(Error::Config("eval_snr_db contains NaN".into()));
        }
        ChannelConfig::from_snr(cfg.train_snr_db, cfg.power, 0)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn with_rho(mut self, rho: &str) -> Self {
        self.rho = Some(RatioInput::Text(rho.to_string()));
        self
    }

    pub fn input_shape(&self) -> Result<InputShape> {
        self.input.parse()
    }

    pub fn derive(&self) -> Result<Derived> {
        let input = self.input_shape()?;
        let latent_hw = base_latent_hw(input)
            .ok_or_else(|| Error::Config(format!("input {input} is too small for the encoder")))?;
        let n = input.source_symbols();
        let area = latent_hw.0 * latent_hw.1;
        let rho = self.rho.as_ref().map(RatioInput::to_ratio).transpose()?;
        let (k, c, rho) = match (rho, self.c) {
            (None, None) => return Err(Error::Config("one of `rho` or `c` is required".into())),
            (Some(r), c_given) => {
                let k = r
                    .floor_times(n)
                    .ok_or_else(|| Error::Config(format!("rho {r} overflows")))?;
                let c = 2 * k / area;
                if let Some(cg) = c_given {
                    if cg != c {
                        return Err(Error::Config(format!("rho {r} implies c={c}, but c={cg} was given")));
                    }
                }
                (k, c, r)
            }
            (None, Some(c)) => {
                let k = c * area / 2;
                (
                    k,
                    c,
                    Ratio {
                        num: k as u64,
                        den: n as u64,
                    },
                )
            }
        };
        if c == 0 {
            return Err(Error::Config(format!("rho {rho} leaves no encoder channels (c = 0)")));
        }
        if (c * area) % 2 != 0 {
            return Err(Error::Config(format!(
                "c·H̄·W̄ = {} is odd; symbols must pair up",
                c * area
            )));
        }
        Ok(Derived {
            input,
            latent_hw,
            n,
            k,
            c,
            rho,
        })
    }

    pub fn architecture(&self) -> Result<ArchitectureSpec> {
        let d = self.derive()?;
        build_variant(self.variant, &default_base_architecture(d.input, d.c)?)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            max_steps: self.max_steps,
            snr_db: self.train_snr_db,
            seed: self.seed,
        }
    }

    /// Training channel; its noise stream is seeded apart from the shuffle stream.
    pub fn train_channel(&self) -> Result<ChannelConfig> {
        Ok(
            ChannelConfig::from_snr(self.train_snr_db, self.power, self.seed ^ 0x6E6F_6973_6500_0000)?
                .with_model(self.channel),
        )
    }
}
