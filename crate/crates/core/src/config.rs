//! Experiment configuration, read from TOML or JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inequalities::{DEFAULT_TOL, DEFAULT_TOL_EQ};
use crate::measures::Grid1D;
use crate::models::{make_young, EntropyModel, PotentialPair, ScalarFn, YoungKind, YoungPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid1D> {
        Grid1D::new(self.a, self.b, self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EntropySpec {
    #[default]
    Boltzmann,
    Power {
        gamma: f64,
    },
}

impl EntropySpec {
    pub fn build(&self) -> Result<EntropyModel> {
        match *self {
            EntropySpec::Boltzmann => Ok(EntropyModel::boltzmann()),
            EntropySpec::Power { gamma } => EntropyModel::power(gamma),
        }
    }
}

fn zero_expr() -> String {
    "0".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(default = "zero_expr")]
    pub v: String,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "zero_expr")]
    pub w: String,
    #[serde(default)]
    pub nu: f64,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self { v: zero_expr(), lambda: 0.0, w: zero_expr(), nu: 0.0 }
    }
}

impl PotentialSpec {
    pub fn build(&self) -> Result<PotentialPair> {
        Ok(PotentialPair::new(ScalarFn::parse(&self.v)?, self.lambda, ScalarFn::parse(&self.w)?, self.nu))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum YoungSpec {
    Quadratic { sigma: f64 },
    PowerPls { p: f64 },
    PowerGn { p: f64, r_gamma: f64 },
    /// Conjugate computed numerically from the expression for `c`.
    Numeric { c: String },
}

impl Default for YoungSpec {
    fn default() -> Self {
        YoungSpec::Quadratic { sigma: 1.0 }
    }
}

impl YoungSpec {
    pub fn build(&self) -> Result<YoungPair> {
        match self {
            YoungSpec::Quadratic { sigma } => make_young(YoungKind::QuadraticSigma { sigma: *sigma }),
            YoungSpec::PowerPls { p } => make_young(YoungKind::PowerPls { p: *p }),
            YoungSpec::PowerGn { p, r_gamma } => make_young(YoungKind::PowerGn { p: *p, r_gamma: *r_gamma }),
            YoungSpec::Numeric { c } => YoungPair::numeric(ScalarFn::parse(c)?),
        }
    }
}

/// Inclusive seed range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRange {
    pub start: u64,
    pub end: u64,
}

impl SeedRange {
    pub fn iter(&self) -> impl Iterator<Item = u64> {
        self.start..=self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_tol_eq")]
    pub tol_eq: f64,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_tol_eq() -> f64 {
    DEFAULT_TOL_EQ
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, tol_eq: DEFAULT_TOL_EQ }
    }
}

fn default_initial() -> String {
    "exp(-(x-1)^2/2)".into()
}

fn default_sample_every() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub t_end: f64,
    /// Fixed step; adaptive when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    /// Unnormalized initial density.
    #[serde(default = "default_initial")]
    pub initial: String,
}

/// One entry of a suite. Inputs are expressions in `x`, or the keywords
/// `random` (seeded), `reference` (stationary density) and `gibbs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub checker: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Run once per seed of the config's seed range.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub seeded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho0: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    /// Shift `rho0` so its barycentre matches that of `rho1`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub match_barycentre: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// Interval ends; `"inf"` and `"-inf"` are accepted as strings.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "extended_real")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "extended_real")]
    pub hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Duality variant: `general`, `plog` or `gn`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy: Option<EntropySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub young: Option<YoungSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowSpec>,
}

/// Reals that may be infinite, written as strings when they are.
mod extended_real {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) if x.is_finite() => s.serialize_f64(*x),
            Some(x) if *x > 0.0 => s.serialize_str("inf"),
            Some(x) if *x < 0.0 => s.serialize_str("-inf"),
            _ => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Num(x)) if !x.is_nan() => Ok(Some(x)),
            Some(Repr::Num(_)) => Err(serde::de::Error::custom("NaN is not a valid bound")),
            Some(Repr::Text(t)) => match t.as_str() {
                "inf" | "+inf" | "infinity" => Ok(Some(f64::INFINITY)),
                "-inf" | "-infinity" => Ok(Some(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got \"{other}\""))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub grid: GridSpec,
    #[serde(default)]
    pub entropy: EntropySpec,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub young: YoungSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<SeedRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub suite: Vec<CheckSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigFormat {
    Toml,
    Json,
}

impl ConfigFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Ok(ConfigFormat::Toml),
            Some("json") => Ok(ConfigFormat::Json),
            other => Err(Error::Parse(format!("unsupported config extension {other:?}, expected .toml or .json"))),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, format: ConfigFormat) -> Result<Self> {
        let cfg: Self = match format {
            ConfigFormat::Toml => toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?,
            ConfigFormat::Json => serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let format = ConfigFormat::from_path(path)?;
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text, format).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_string(&self, format: ConfigFormat) -> Result<String> {
        match format {
            ConfigFormat::Toml => toml::to_string(self).map_err(|e| Error::Parse(e.to_string())),
            ConfigFormat::Json => serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string())),
        }
    }

    /// Rejects unknown checkers and inconsistent settings without running anything.
    pub fn validate(&self) -> Result<()> {
        self.grid.build()?;
        if let Some(s) = self.seeds {
            if s.start > s.end {
                return Err(Error::Parse(format!("seeds: start {} exceeds end {}", s.start, s.end)));
            }
        }
        for (i, c) in self.suite.iter().enumerate() {
            if crate::suite::find_checker(&c.checker).is_none() {
                return Err(Error::Parse(format!("suite[{i}].checker: unknown checker \"{}\"", c.checker)));
            }
            if c.seeded && self.seeds.is_none() {
                return Err(Error::Parse(format!("suite[{i}]: seeded check needs a `seeds` range")));
            }
            if let Some(g) = &c.grid {
                g.build()?;
            }
            if let Some(v) = &c.variant {
                if !matches!(v.as_str(), "general" | "plog" | "gn") {
                    return Err(Error::Parse(format!("suite[{i}].variant: unknown duality variant \"{v}\"")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
name = "demo"
seeds = { start = 1, end = 3 }

[grid]
a = -10.0
b = 10.0
n = 401

[potential]
v = "x^2/2"
lambda = 1.0

[[suite]]
checker = "check_hwbi"
seeded = true

[[suite]]
checker = "check_concentration"
lo = 0.0
hi = inf
eps = 2.0
"#;

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::parse(SAMPLE, ConfigFormat::Toml).unwrap();
        assert_eq!(cfg.suite.len(), 2);
        assert_eq!(cfg.suite[1].hi, Some(f64::INFINITY));
        for format in [ConfigFormat::Toml, ConfigFormat::Json] {
            let text = cfg.to_string(format).unwrap();
            let back = ExperimentConfig::parse(&text, format).unwrap();
            let again = back.to_string(format).unwrap();
            assert_eq!(text, again);
        }
        for format in [ConfigFormat::Toml, ConfigFormat::Json] {
            let back = ExperimentConfig::parse(&cfg.to_string(format).unwrap(), format).unwrap();
            assert_eq!(cfg, back);
        }
    }

    #[test]
    fn unknown_checker_is_named() {
        let bad = SAMPLE.replace("check_hwbi", "frobnicate");
        let err = ExperimentConfig::parse(&bad, ConfigFormat::Toml).unwrap_err().to_string();
        assert!(err.contains("frobnicate"), "{err}");
    }

    #[test]
    fn unknown_field_is_rejected() {
        let bad = SAMPLE.replace("lambda = 1.0", "lambda = 1.0\nlamda = 2.0");
        let err = ExperimentConfig::parse(&bad, ConfigFormat::Toml).unwrap_err().to_string();
        assert!(err.contains("lamda"), "{err}");
        assert!(err.contains("line"), "{err}");
    }
}
