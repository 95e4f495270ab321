use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ltirelay::{ChannelParams, RateUnit, SolverOptions};
use num_complex::Complex64;
use serde::Deserialize;

use crate::Failure;

#[derive(Parser, Debug)]
#[command(name = "ltirelay", version, about = "Capacity of the Gaussian relay channel under LTI relaying")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Rate report with the optimal mode allocation and baselines.
    Capacity(Common),
    /// Rates of several schemes over a grid of one parameter.
    Sweep(SweepArgs),
    /// Per-bin optimization cross-checked against the mode optimizer.
    Oracle(OracleArgs),
    /// Block mutual information versus spectral rate over block sizes.
    Verify(VerifyArgs),
    /// Filter-bank synthesis of the optimal allocation.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Source-to-relay gain.
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    /// Relay-to-destination gain.
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    /// Relay power as a multiple of the source power.
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    /// Source power.
    #[arg(long = "P", allow_negative_numbers = true)]
    pub power: Option<f64>,
    /// Noise variance [default: 1].
    #[arg(long, allow_negative_numbers = true)]
    pub sigma2: Option<f64>,
    /// Seed of the multistart search [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of multistart runs [default: 64].
    #[arg(long)]
    pub starts: Option<usize>,
    /// Report rates in nats instead of bits.
    #[arg(long)]
    pub nats: bool,
    /// Output file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// JSON file with any of the flag values; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
pub enum SweepParam {
    #[value(name = "P")]
    #[serde(rename = "P")]
    Power,
    #[value(name = "gamma")]
    #[serde(rename = "gamma")]
    Gamma,
    #[value(name = "a")]
    #[serde(rename = "a")]
    A,
    #[value(name = "b")]
    #[serde(rename = "b")]
    B,
}

impl SweepParam {
    pub fn label(self) -> &'static str {
        match self {
            Self::Power => "P",
            Self::Gamma => "gamma",
            Self::A => "a",
            Self::B => "b",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Lti,
    LtiComplex,
    Fd,
    Iaf,
    IafFull,
    Direct,
    Cutset,
    CutsetClassical,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Self::Lti => "lti",
            Self::LtiComplex => "lti-complex",
            Self::Fd => "fd",
            Self::Iaf => "iaf",
            Self::IafFull => "iaf-full",
            Self::Direct => "direct",
            Self::Cutset => "cutset",
            Self::CutsetClassical => "cutset-classical",
        }
    }
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Swept parameter.
    #[arg(long, value_enum)]
    pub param: Option<SweepParam>,
    /// Explicit comma-separated values.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub values: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true)]
    pub min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub max: Option<f64>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, value_enum)]
    pub spacing: Option<Spacing>,
    /// Comma-separated schemes [default: lti,iaf,direct,cutset].
    #[arg(long, value_enum, value_delimiter = ',')]
    pub schemes: Option<Vec<Scheme>>,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of frequency bins [default: 64].
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated block sizes [default: 32,64,128,256].
    #[arg(long = "block-sizes", value_delimiter = ',')]
    pub block_sizes: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    /// Transition half-width in radians [default: 0.01π].
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// Filter half-length [default: 4096].
    #[arg(long = "L")]
    pub half_len: Option<usize>,
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub gamma: Option<f64>,
    #[serde(rename = "P")]
    pub power: Option<f64>,
    pub sigma2: Option<f64>,
    pub seed: Option<u64>,
    pub starts: Option<usize>,
    pub nats: Option<bool>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub param: Option<SweepParam>,
    pub values: Option<Vec<f64>>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub count: Option<usize>,
    pub spacing: Option<Spacing>,
    pub schemes: Option<Vec<Scheme>>,
    pub n: Option<usize>,
    pub block_sizes: Option<Vec<usize>>,
    pub delta: Option<f64>,
    #[serde(rename = "L")]
    pub half_len: Option<usize>,
}

impl Config {
    pub fn load(path: Option<&PathBuf>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::Usage(format!("malformed config {}: {e}", path.display())))
    }
}

/// Flags merged over the config file.
pub struct Resolved {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub gamma: Option<f64>,
    pub power: Option<f64>,
    pub sigma2: f64,
    pub opts: SolverOptions,
    pub unit: RateUnit,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

impl Resolved {
    pub fn new(common: &Common, config: &Config) -> Result<Self, Failure> {
        let opts = SolverOptions {
            n_starts: common.starts.or(config.starts).unwrap_or(64),
            seed: common.seed.or(config.seed).unwrap_or(0),
            ..SolverOptions::default()
        };
        opts.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(Self {
            a: common.a.or(config.a),
            b: common.b.or(config.b),
            gamma: common.gamma.or(config.gamma),
            power: common.power.or(config.power),
            sigma2: common.sigma2.or(config.sigma2).unwrap_or(1.0),
            opts,
            unit: if common.nats || config.nats.unwrap_or(false) {
                RateUnit::Nats
            } else {
                RateUnit::Bits
            },
            out: common.out.clone().or_else(|| config.out.clone()),
            format: common.format.or(config.format),
        })
    }

    fn require(value: Option<f64>, flag: &str) -> Result<f64, Failure> {
        value.ok_or_else(|| Failure::Usage(format!("missing required value --{flag}")))
    }

    /// Channel parameters with `skip` left free for a sweep.
    pub fn params_with(&self, skip: Option<SweepParam>) -> Result<ChannelParams, Failure> {
        let pick = |v: Option<f64>, flag: &str, p: SweepParam| {
            if skip == Some(p) {
                Ok(v.unwrap_or(1.0))
            } else {
                Self::require(v, flag)
            }
        };
        let a = pick(self.a, "a", SweepParam::A)?;
        let b = pick(self.b, "b", SweepParam::B)?;
        let gamma = pick(self.gamma, "gamma", SweepParam::Gamma)?;
        let power = pick(self.power, "P", SweepParam::Power)?;
        ChannelParams::new(Complex64::new(a, 0.0), Complex64::new(b, 0.0), self.sigma2, power, gamma)
            .map_err(|e| Failure::Usage(e.to_string()))
    }

    pub fn params(&self) -> Result<ChannelParams, Failure> {
        self.params_with(None)
    }
}
