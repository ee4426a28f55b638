//! Experiment configuration: a strict, versioned TOML schema.

use crate::CliError;
use dbmlab::meso_stats::Shape;
use dbmlab::Potential;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Freeconv,
    Simulate,
    Homog,
    Meso,
    Gaps,
    Beta,
}

impl Kind {
    pub const ALL: [Kind; 6] = [Kind::Freeconv, Kind::Simulate, Kind::Homog, Kind::Meso, Kind::Gaps, Kind::Beta];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Freeconv => "freeconv",
            Kind::Simulate => "simulate",
            Kind::Homog => "homog",
            Kind::Meso => "meso",
            Kind::Gaps => "gaps",
            Kind::Beta => "beta",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// Explicit sorted values; length must equal N.
    List {
        values: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        g: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        big_g: Option<f64>,
    },
    /// Classical locations of a reference density.
    Quantiles { density: DensitySpec },
    Constant { value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    Uniform { a: f64, b: f64 },
    Semicircle,
}

impl PotentialSpec {
    pub fn build(&self, n: usize) -> Result<Potential, CliError> {
        Ok(match self {
            PotentialSpec::List { values, g, big_g } => {
                Potential::new(values.clone(), g.unwrap_or(1.0 / n as f64), big_g.unwrap_or(1.0))?
            }
            PotentialSpec::Quantiles {
                density: DensitySpec::Uniform { a, b },
            } => Potential::uniform(n, *a, *b),
            PotentialSpec::Quantiles {
                density: DensitySpec::Semicircle,
            } => Potential::semicircle(n),
            PotentialSpec::Constant { value } => Potential::constant(n, *value),
        })
    }
}

/// Time scales and exponents. Which ones are read depends on the kind.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Times {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_ell: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_b: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsSpec {
    /// Explicit test function; otherwise a Gaussian at scale N^alpha/N.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_function: Option<Shape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_window: Option<usize>,
    /// Pass/fail threshold of the experiment's headline statistic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub kind: Kind,
    pub n: usize,
    pub replicas: usize,
    pub seed: u64,
    /// Not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub potential: PotentialSpec,
    #[serde(default)]
    pub times: Times,
    #[serde(default)]
    pub stats: StatsSpec,
}

const REQUIRED: [&str; 6] = ["version", "kind", "n", "replicas", "seed", "potential"];

/// One violated constraint and where it comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl ExperimentConfig {
    /// A small runnable config of each kind.
    pub fn example(kind: Kind) -> Self {
        let mut c = Self {
            version: CONFIG_VERSION,
            kind,
            n: 100,
            replicas: 8,
            seed: 1,
            out: None,
            potential: PotentialSpec::Quantiles {
                density: DensitySpec::Uniform { a: -1.0, b: 1.0 },
            },
            times: Times {
                t: Some(0.25),
                ..Times::default()
            },
            stats: StatsSpec::default(),
        };
        match kind {
            Kind::Freeconv => c.replicas = 1,
            Kind::Simulate => {
                c.times.dt = Some(1e-3);
                c.replicas = 100;
            }
            Kind::Homog => {
                c.times = Times {
                    omega0: Some(0.8),
                    omega1: Some(0.3),
                    ..Times::default()
                };
                c.replicas = 2;
            }
            Kind::Meso => {
                c.stats.alpha = Some(0.6);
                c.replicas = 100;
            }
            Kind::Gaps => {
                c.potential = PotentialSpec::Constant { value: 0.0 };
                c.times.t = Some(1.0);
                c.stats.half_window = Some(10);
            }
            Kind::Beta => {
                c.potential = PotentialSpec::Constant { value: 0.0 };
                c.times.t = None;
                c.stats.beta = Some(2.0);
                c.stats.test_function = Some(Shape::Gaussian { center: 0.0, width: 0.5 });
            }
        }
        c
    }

    /// Strict parse. All missing required keys are reported together.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Parse(e.to_string()))?;
        let missing: Vec<String> = REQUIRED
            .iter()
            .filter(|k| !table.contains_key(**k))
            .map(|k| k.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(CliError::Missing(missing));
        }
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(CliError::Parse(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Parse(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form (sorted keys, `out` removed).
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config is plain data");
        if let Some(m) = v.as_object_mut() {
            m.remove("out");
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Every violated constraint, each citing the hypothesis it comes from.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let mut push = |field, message: String| v.push(Violation { field, message });
        if self.n < 2 {
            push("n", format!("N = {} but at least 2 particles are required", self.n));
        }
        if self.replicas < 1 {
            push("replicas", "at least one replica is required".into());
        }
        if let PotentialSpec::List { values, .. } = &self.potential {
            if values.len() != self.n {
                push("potential.values", format!("{} values given for N = {}", values.len(), self.n));
            }
            if values.windows(2).any(|w| !(w[1] >= w[0])) {
                push("potential.values", "initial data must be sorted and finite".into());
            }
        }
        if let PotentialSpec::Quantiles {
            density: DensitySpec::Uniform { a, b },
        } = self.potential
        {
            if !(b > a) {
                push("potential.density", format!("uniform law needs a < b, got [{a}, {b}]"));
            }
        }
        let t = self.times.t;
        let needs_t = matches!(self.kind, Kind::Freeconv | Kind::Simulate | Kind::Meso | Kind::Gaps);
        if needs_t && !t.is_some_and(|t| t > 0.0 && t.is_finite()) {
            push("times.t", "a positive free-convolution time t is required".into());
        }
        if let Some(dt) = self.times.dt {
            if !(dt > 0.0) {
                push("times.dt", format!("dt = {dt} must be positive"));
            }
        }
        match self.kind {
            Kind::Homog => match (self.times.omega0, self.times.omega1) {
                (Some(w0), Some(w1)) => {
                    let mut p = dbmlab::homogenization::HomogParams::new(w0, w1);
                    p.eps_b = self.times.eps_b;
                    for m in p.violations() {
                        push("times", m);
                    }
                    if let Some(wl) = self.times.omega_ell {
                        if !(wl > w1 && wl < w0 / 2.0) {
                            push("times.omega_ell", format!("omega_ell = {wl} must lie in (omega1, omega0/2) for the short-range cut"));
                        }
                    }
                }
                _ => push(
                    "times",
                    "homog needs omega0 and omega1 (t0 = N^omega0/N, t1 = N^omega1/N with 0 < omega1 < omega0/2)".into(),
                ),
            },
            Kind::Meso => {
                if let (Some(a), Some(t)) = (self.stats.alpha, t) {
                    let omega = 1.0 + t.ln() / (self.n as f64).ln();
                    if !(a > omega / 2.0 && a < omega) {
                        push(
                            "stats.alpha",
                            format!("alpha = {a} outside the mesoscopic window omega/2 < alpha < omega with t = N^omega/N, omega = {omega:.4}"),
                        );
                    }
                }
                if self.stats.alpha.is_none() && self.stats.test_function.is_none() {
                    push("stats", "meso needs alpha or an explicit test_function".into());
                }
                if self.replicas < 100 {
                    push("replicas", format!("the characteristic-function estimator needs at least 100 samples, got {}", self.replicas));
                }
            }
            Kind::Beta => {
                if !self.stats.beta.is_some_and(|b| b >= 1.0) {
                    push("stats.beta", "beta >= 1 is required for the ordered log-gas".into());
                }
                if self.stats.test_function.is_none() {
                    push("stats.test_function", "beta needs a test function".into());
                }
                if !matches!(self.potential, PotentialSpec::Constant { value } if value == 0.0) {
                    push("potential", "beta runs use the Gaussian potential; set potential = constant 0".into());
                }
            }
            Kind::Gaps => {
                let h = self.stats.half_window.unwrap_or(10);
                if 2 * h + 2 >= self.n {
                    push("stats.half_window", format!("window of {} gaps does not fit in N = {}", 2 * h + 1, self.n));
                }
            }
            Kind::Freeconv | Kind::Simulate => {}
        }
        v
    }
}

/// Serialize then parse.
pub fn io_roundtrip(cfg: &ExperimentConfig) -> Result<ExperimentConfig, CliError> {
    ExperimentConfig::from_toml(&cfg.to_toml()?)
}
