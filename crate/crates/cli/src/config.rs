//! Run configuration. Every table rejects unknown keys.

use std::path::Path;
use std::sync::Arc;

use doeblin::doeblin_fn::{
    envelope_family, parse_local_table, two_state_fixture, DoeblinFunction, EnvelopeCertificate, VariationMode,
    DEFAULT_BUDGET,
};
use doeblin::coupling::DEFAULT_PREFIX_BUDGET;
use doeblin::nonmixing::{bhs_function, conjugate, DefaultBlockRule, XI_MAX, XI_MIN};
use doeblin::sequence::Alphabet;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must match the subcommand when present.
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub g: Option<GConfig>,
    #[serde(default)]
    pub budget: Budgets,
    pub couple: Option<CoupleConfig>,
    pub ychain: Option<YChainConfig>,
    pub mixing: Option<MixingConfig>,
    pub varprofile: Option<VarProfileConfig>,
    pub tvprofile: Option<TvProfileConfig>,
    pub stationary: Option<StationaryConfig>,
    pub symmetry: Option<SymmetryConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GConfig {
    Uniform {
        alphabet: String,
    },
    /// The memory-one table `g(0·x) = 0.7` if `x_0 = 0`, else `0.4`.
    TwoState,
    /// A local table file, relative to the config file.
    Table {
        path: String,
    },
    Envelope {
        c: f64,
        horizon: usize,
    },
    Bhs {
        scales: Vec<usize>,
        thresholds: Option<Vec<usize>>,
        xi_min: Option<f64>,
        xi_max: Option<f64>,
    },
    Conjugate {
        base: Box<GConfig>,
    },
}

/// A built Doeblin function with whatever certificate came with it.
pub struct BuiltG {
    pub g: DoeblinFunction,
    pub envelope: Option<EnvelopeCertificate>,
    pub conjugated: bool,
}

impl GConfig {
    pub fn build(&self, config_dir: &Path) -> Result<BuiltG, CliError> {
        let plain = |g| Ok(BuiltG { g, envelope: None, conjugated: false });
        match self {
            GConfig::Uniform { alphabet } => {
                let a = Alphabet::new(alphabet.chars().collect())?;
                plain(DoeblinFunction::uniform(&a))
            }
            GConfig::TwoState => plain(two_state_fixture()),
            GConfig::Table { path } => {
                let full = config_dir.join(path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| CliError::Config(format!("table file {}: {e}", full.display())))?;
                plain(parse_local_table(&text)?)
            }
            GConfig::Envelope { c, horizon } => {
                let (g, cert) = envelope_family(*c, *horizon)?;
                Ok(BuiltG { g, envelope: Some(cert), conjugated: false })
            }
            GConfig::Bhs { scales, thresholds, xi_min, xi_max } => {
                let thresholds = thresholds.clone().unwrap_or_else(|| (0..scales.len()).map(|j| 2 * j).collect());
                let rule = DefaultBlockRule::new(
                    scales.clone(),
                    thresholds,
                    xi_min.unwrap_or(XI_MIN),
                    xi_max.unwrap_or(XI_MAX),
                )?;
                plain(bhs_function(Arc::new(rule)))
            }
            GConfig::Conjugate { base } => {
                let inner = base.build(config_dir)?;
                Ok(BuiltG { g: conjugate(&inner.g)?, envelope: None, conjugated: !inner.conjugated })
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    /// Entries per block-law table.
    #[serde(default = "default_prefix_budget")]
    pub prefix: u128,
    /// Pasts enumerated per variation or exhaustive search.
    #[serde(default = "default_budget")]
    pub enumeration: u128,
}

fn default_prefix_budget() -> u128 {
    DEFAULT_PREFIX_BUDGET
}

fn default_budget() -> u128 {
    DEFAULT_BUDGET
}

impl Default for Budgets {
    fn default() -> Self {
        Self { prefix: DEFAULT_PREFIX_BUDGET, enumeration: DEFAULT_BUDGET }
    }
}

impl Budgets {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.prefix == 0 || self.enumeration == 0 {
            return Err(CliError::Config("budgets must be positive".into()));
        }
        Ok(())
    }
}

/// `K` as a number or `"auto"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum KChoice {
    Fixed(u64),
    Named(String),
}

impl Default for KChoice {
    fn default() -> Self {
        KChoice::Named("auto".into())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleConfig {
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default)]
    pub k: KChoice,
    pub steps: u64,
    #[serde(default = "one")]
    pub replicas: usize,
    pub x0: Option<String>,
    pub x0_tilde: Option<String>,
    #[serde(default = "yes")]
    pub record_steps: bool,
    /// Per-level probabilities that make `Y` exactly Markov.
    pub thinning: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YChainConfig {
    #[serde(default = "default_n")]
    pub n: u64,
    pub k: u64,
    /// Success probability per level; the last one repeats.
    pub p: Vec<f64>,
    pub excursions: u64,
    #[serde(default)]
    pub record_steps: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventConfig {
    SpinUp,
    Words { words: Vec<String> },
    Signature { len: usize, #[serde(default)] alternating: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Exact,
    Simulated,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingConfig {
    pub method: MethodKind,
    pub a: EventConfig,
    /// Defaults to `a`.
    pub b: Option<EventConfig>,
    pub n_max: usize,
    #[serde(default = "default_length")]
    pub length: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "one")]
    pub replicas: usize,
    pub x0: Option<String>,
    /// Start from the constant past with every spin equal to this sign
    /// (mapped through `F` when `g` is a conjugate).
    pub phase_lock: Option<i8>,
    /// Lag range `[lo, hi]` for the reported Cesàro tail.
    pub tail: Option<[usize; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarProfileConfig {
    pub n_max: usize,
    #[serde(default = "default_mode")]
    pub mode: VariationMode,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TvProfileConfig {
    /// Pairs of states in `head|cX` or `head|pW` notation.
    pub pairs: Vec<[String; 2]>,
    pub b_max: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationaryConfig {
    pub depth: Option<usize>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetryConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
}

fn default_n() -> u64 {
    4
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn default_length() -> usize {
    4096
}

fn default_mode() -> VariationMode {
    VariationMode::Exact
}

fn default_samples() -> usize {
    10_000
}

fn default_tol() -> f64 {
    1e-13
}

fn default_iters() -> usize {
    100_000
}

fn default_horizon() -> usize {
    64
}

pub fn parse(text: &str) -> Result<(RunConfig, toml::Value), CliError> {
    let value: toml::Value = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    config.budget.validate()?;
    Ok((config, value))
}
