use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ConvergenceTable,
    #[serde(rename = "example_5_1")]
    Example51,
    #[serde(rename = "example_5_2")]
    Example52,
    #[serde(rename = "example_5_3")]
    Example53,
    #[serde(rename = "example_5_4")]
    Example54,
    Illposedness,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::ConvergenceTable,
        ExperimentKind::Example51,
        ExperimentKind::Example52,
        ExperimentKind::Example53,
        ExperimentKind::Example54,
        ExperimentKind::Illposedness,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::ConvergenceTable => "convergence_table",
            ExperimentKind::Example51 => "example_5_1",
            ExperimentKind::Example52 => "example_5_2",
            ExperimentKind::Example53 => "example_5_3",
            ExperimentKind::Example54 => "example_5_4",
            ExperimentKind::Illposedness => "illposedness",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!("unknown experiment `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the Tikhonov parameter is chosen from the noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GammaPolicy {
    Zero,
    /// `γ = 10⁻² θ^{4/5}`
    PaperFormula,
    Explicit(f64),
}

impl GammaPolicy {
    pub fn resolve(&self, theta: f64) -> f64 {
        match *self {
            GammaPolicy::Zero => 0.0,
            GammaPolicy::PaperFormula => crate::inverse::choose_gamma(theta),
            GammaPolicy::Explicit(v) => v,
        }
    }
}

impl FromStr for GammaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "zero" => Ok(GammaPolicy::Zero),
            "paper" | "paper_formula" => Ok(GammaPolicy::PaperFormula),
            other => match other.parse::<f64>() {
                Ok(v) if v >= 0.0 && v.is_finite() => Ok(GammaPolicy::Explicit(v)),
                _ => Err(Error::Config(format!(
                    "gamma_policy `{other}`: expected zero, paper_formula or a non-negative number"
                ))),
            },
        }
    }
}

impl TryFrom<String> for GammaPolicy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GammaPolicy> for String {
    fn from(p: GammaPolicy) -> String {
        p.to_string()
    }
}

impl fmt::Display for GammaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaPolicy::Zero => f.write_str("zero"),
            GammaPolicy::PaperFormula => f.write_str("paper_formula"),
            GammaPolicy::Explicit(v) => write!(f, "{v:e}"),
        }
    }
}

/// Config file contents. Every key is optional; see [`ExperimentConfig::resolve`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub experiment: Option<ExperimentKind>,
    pub alpha: Option<f64>,
    pub s: Option<f64>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    #[serde(rename = "T")]
    pub t: Option<f64>,
    pub mu_list: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub gamma_policy: Option<GammaPolicy>,
    pub output_dir: Option<PathBuf>,
    pub sigma: Option<f64>,
    pub eta: Option<f64>,
    pub max_iter: Option<usize>,
    /// CSV of `x,value` samples replacing the experiment's built-in target.
    pub target_csv: Option<PathBuf>,
    /// Noise level for the stopping rule and `γ`, replacing the one measured
    /// against the synthetic clean data.
    pub theta: Option<f64>,
}

impl RawConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Keys set in `other` win.
    pub fn merge(self, other: RawConfig) -> RawConfig {
        RawConfig {
            experiment: other.experiment.or(self.experiment),
            alpha: other.alpha.or(self.alpha),
            s: other.s.or(self.s),
            n: other.n.or(self.n),
            k: other.k.or(self.k),
            t: other.t.or(self.t),
            mu_list: other.mu_list.or(self.mu_list),
            seed: other.seed.or(self.seed),
            gamma_policy: other.gamma_policy.or(self.gamma_policy),
            output_dir: other.output_dir.or(self.output_dir),
            sigma: other.sigma.or(self.sigma),
            eta: other.eta.or(self.eta),
            max_iter: other.max_iter.or(self.max_iter),
            target_csv: other.target_csv.or(self.target_csv),
            theta: other.theta.or(self.theta),
        }
    }
}

pub const DEFAULT_SEED: u64 = 20_240_601;
pub const EXAMPLE_51_PAIRS: [(f64, f64); 4] = [(0.3, 0.2), (0.3, 0.9), (0.8, 0.2), (0.8, 0.9)];
pub const LIGHT_NOISE: [f64; 3] = [0.001, 0.005, 0.01];
pub const HEAVY_NOISE: [f64; 3] = [0.05, 0.1, 0.15];
pub const MOROZOV_NOISE: [f64; 4] = [0.005, 0.01, 0.05, 0.1];

/// Fully resolved, validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// `None` for the convergence table and `example_5_1`, which run fixed order pairs
    /// unless a single pair is requested.
    pub alpha: Option<f64>,
    pub s: Option<f64>,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "T")]
    pub t: f64,
    pub mu_list: Vec<f64>,
    pub seed: u64,
    pub gamma_policy: GammaPolicy,
    pub output_dir: PathBuf,
    pub sigma: f64,
    pub eta: f64,
    pub max_iter: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

fn check_open_unit(name: &'static str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if !(x > 0.0 && x < 1.0) => Err(Error::Config(format!("{name} = {x} must lie in (0, 1)"))),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    /// Fill defaults and validate. Grid defaults: `Δt = 1/100` (`K = 100`) and
    /// node spacing `1/100` on the length-2 domain (`N = 200`).
    pub fn resolve(raw: RawConfig) -> Result<Self> {
        let experiment = raw
            .experiment
            .ok_or_else(|| Error::Config("missing key `experiment`".into()))?;
        check_open_unit("alpha", raw.alpha)?;
        check_open_unit("s", raw.s)?;
        use ExperimentKind::*;
        let (alpha, s) = match experiment {
            ConvergenceTable | Example51 => (raw.alpha, raw.s),
            _ => (Some(raw.alpha.unwrap_or(0.5)), Some(raw.s.unwrap_or(0.5))),
        };
        if experiment == Example51 && alpha.is_some() != s.is_some() {
            return Err(Error::Config("example_5_1 needs both alpha and s, or neither".into()));
        }
        let n = raw.n.unwrap_or(if experiment == Illposedness { 128 } else { 200 });
        if n < 4 {
            return Err(Error::Config(format!("N = {n} must be at least 4")));
        }
        let k = raw.k.unwrap_or(100);
        if k < 2 {
            return Err(Error::Config(format!("K = {k} must be at least 2")));
        }
        let t = raw.t.unwrap_or(1.0);
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Config(format!("T = {t} must be positive")));
        }
        let mu_list = raw.mu_list.unwrap_or_else(|| match experiment {
            Example52 => LIGHT_NOISE.iter().chain(&HEAVY_NOISE).copied().collect(),
            Example53 | Example54 => MOROZOV_NOISE.to_vec(),
            Example51 => vec![0.0],
            ConvergenceTable | Illposedness => vec![0.01],
        });
        if let Some(bad) = mu_list.iter().find(|m| !(**m >= 0.0 && m.is_finite())) {
            return Err(Error::Config(format!("mu_list entry {bad} must be non-negative")));
        }
        let gamma_policy = raw.gamma_policy.unwrap_or(match experiment {
            Example53 | Example54 => GammaPolicy::PaperFormula,
            _ => GammaPolicy::Zero,
        });
        let sigma = raw.sigma.unwrap_or(1.01);
        if !(sigma > 1.0) {
            return Err(Error::Config(format!("sigma = {sigma} must exceed 1")));
        }
        let eta = raw.eta.unwrap_or(1e-3);
        if !(eta > 0.0) {
            return Err(Error::Config(format!("eta = {eta} must be positive")));
        }
        let max_iter = raw.max_iter.unwrap_or(100);
        if max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if let Some(theta) = raw.theta {
            if !(theta >= 0.0 && theta.is_finite()) {
                return Err(Error::Config(format!("theta = {theta} must be non-negative")));
            }
        }
        Ok(Self {
            experiment,
            alpha,
            s,
            n,
            k,
            t,
            mu_list,
            seed: raw.seed.unwrap_or(DEFAULT_SEED),
            gamma_policy,
            output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("results")),
            sigma,
            eta,
            max_iter,
            target_csv: raw.target_csv,
            theta: raw.theta,
        })
    }

    /// The order pair for single-pair experiments.
    pub fn orders(&self) -> (f64, f64) {
        (self.alpha.unwrap_or(0.5), self.s.unwrap_or(0.5))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
