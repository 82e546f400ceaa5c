//! Versioned scenario files and the bundled presets.
//!
//! A scenario is a TOML document with `[model]`, `[bath]`, `[initial]` and
//! `[run]` tables (plus an optional `[sweep]`). Scalars may be given where a
//! per-site list is accepted.

use serde::{Deserialize, Serialize};

use crate::bath::Convention;
use crate::error::{Error, Result};
use crate::model::Distance;
use crate::noise::NoiseMethod;
use crate::propagation::Unraveling;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Values {
    Scalar(f64),
    List(Vec<f64>),
}

impl Values {
    pub fn expand(&self, m: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            Values::Scalar(x) => Ok(vec![*x; m]),
            Values::List(v) if v.len() == m => Ok(v.clone()),
            Values::List(v) => Err(Error::validation(format!("{what} has {} entries for {m} sites", v.len()))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Energies {
    /// `omega` as given (a scalar for all sites or a list).
    #[default]
    Uniform,
    /// `omega_j = omega0 xi_j`, `xi_j` uniform in `[0, 1)`.
    Disorder,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hopping {
    /// `1 / (dist d0)` with the configured distance.
    #[default]
    Smooth,
    /// `j_nearest` between ring neighbours only.
    Nearest,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub m: usize,
    #[serde(default = "default_d0")]
    pub d0: f64,
    #[serde(default = "yes")]
    pub rc_enabled: bool,
    #[serde(default)]
    pub energies: Energies,
    #[serde(default = "zero_values")]
    pub omega: Values,
    #[serde(default = "default_omega0")]
    pub omega0: f64,
    #[serde(default = "one")]
    pub disorder_seed: u64,
    #[serde(default)]
    pub hopping: Hopping,
    #[serde(default)]
    pub distance: Distance,
    #[serde(default = "one_f64")]
    pub j_nearest: f64,
    /// Explicit hopping matrix; replaces the generator when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_coupling")]
    pub coupling: Values,
    /// Defaults to the energy of the symmetric antenna mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_rc: Option<f64>,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    #[serde(default = "zero_values")]
    pub g: Values,
    #[serde(default = "default_gamma")]
    pub gamma: Values,
    /// Defaults to `beta_gamma / mean(gamma)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default = "default_beta_gamma")]
    pub beta_gamma: f64,
    #[serde(default)]
    pub convention: Convention,
}

impl Default for BathSection {
    fn default() -> Self {
        Self {
            g: zero_values(),
            gamma: default_gamma(),
            beta: None,
            beta_gamma: default_beta_gamma(),
            convention: Convention::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    #[default]
    Site,
    Symmetric,
    Momentum,
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default)]
    pub state: InitialKind,
    /// 1-based antenna site.
    #[serde(default = "one_usize")]
    pub site: usize,
    /// Momentum index `1..=M`; `M` is q = 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub re: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub im: Vec<f64>,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self { state: InitialKind::Site, site: 1, momentum: None, re: Vec::new(), im: Vec::new() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Sse,
    Master,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_tmax")]
    pub t_max: f64,
    #[serde(default = "default_stride")]
    pub output_stride: usize,
    #[serde(default = "default_nm")]
    pub nm: usize,
    #[serde(default = "one")]
    pub seed: u64,
    #[serde(default)]
    pub unraveling: Unraveling,
    #[serde(default)]
    pub noise: NoiseMethod,
    #[serde(default = "default_modes")]
    pub n_modes: usize,
    /// Cutoff in units of the largest bath decay rate.
    #[serde(default = "default_cutoff")]
    pub omega_max_factor: f64,
    #[serde(default = "yes")]
    pub step_check: bool,
    #[serde(default = "default_step_tol")]
    pub step_tolerance: f64,
    #[serde(default = "default_order")]
    pub validity_order: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    G,
    Gamma,
    Kappa,
    Omega0Disorder,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "g" => Ok(Self::G),
            "gamma" => Ok(Self::Gamma),
            "kappa" => Ok(Self::Kappa),
            "omega0-disorder" => Ok(Self::Omega0Disorder),
            _ => Err(Error::validation(format!(
                "unknown sweep parameter {s:?} (expected g, gamma, kappa or omega0-disorder)"
            ))),
        }
    }
}

impl std::fmt::Display for SweepParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::G => "g",
            Self::Gamma => "gamma",
            Self::Kappa => "kappa",
            Self::Omega0Disorder => "omega0-disorder",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
    #[serde(default = "default_tmax")]
    pub readout: f64,
    /// Optional second parameter; one sweep table per value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_parameter: Option<SweepParam>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series_values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    pub model: ModelSection,
    #[serde(default)]
    pub bath: BathSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

impl ScenarioFile {
    /// Parses a scenario, or the `[scenario]` table of a run manifest.
    pub fn parse(text: &str) -> Result<Self> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let file: ScenarioFile = if let Some(inner) = value.get("scenario") {
            inner.clone().try_into().map_err(|e: toml::de::Error| Error::Config(format!("[scenario]: {e}")))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        if file.version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "scenario schema version {} is not supported (expected {SCHEMA_VERSION})",
                file.version
            )));
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = preset_text(name)
            .ok_or_else(|| Error::validation(format!("unknown preset {name:?}; available: {}", PRESETS.join(", "))))?;
        Self::parse(text)
    }

    pub fn set(&mut self, param: SweepParam, value: f64) {
        match param {
            SweepParam::G => self.bath.g = Values::Scalar(value),
            SweepParam::Gamma => self.bath.gamma = Values::Scalar(value),
            SweepParam::Kappa => self.model.kappa = value,
            SweepParam::Omega0Disorder => {
                self.model.energies = Energies::Disorder;
                self.model.omega0 = value;
            }
        }
    }
}

pub const PRESETS: [&str; 6] =
    ["dimer-check", "ring-closed", "ring-disorder", "ring-dephasing", "ring-nonmarkov", "markov-sweep"];

pub fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "dimer-check" => DIMER,
        "ring-closed" => RING_CLOSED,
        "ring-disorder" => RING_DISORDER,
        "ring-dephasing" => RING_DEPHASING,
        "ring-nonmarkov" => RING_NONMARKOV,
        "markov-sweep" => MARKOV_SWEEP,
        _ => return None,
    })
}

const DIMER: &str = r#"version = 1
name = "dimer-check"

[model]
m = 2
rc_enabled = false
omega = 0.0
j = [[1.5, 1.8], [1.8, 1.0]]
coupling = 0.0
kappa = 0.0

[bath]
g = 0.3
gamma = 10.0

[initial]
state = "site"
site = 1

[run]
t_max = 5.0
output_stride = 25
nm = 1000
"#;

const RING_CLOSED: &str = r#"version = 1
name = "ring-closed"

[model]
m = 32
omega = 0.0
hopping = "nearest"
coupling = 0.5
kappa = 1.0

[bath]
g = 0.0

[initial]
state = "site"
site = 1

[run]
t_max = 10.0
nm = 1
"#;

const RING_DISORDER: &str = r#"version = 1
name = "ring-disorder"

[model]
m = 32
energies = "disorder"
omega0 = 20.0
disorder_seed = 1
hopping = "nearest"
coupling = 0.5
kappa = 1.0

[bath]
g = 0.0

[initial]
state = "site"
site = 1

[run]
t_max = 10.0
nm = 1
"#;

const RING_DEPHASING: &str = r#"version = 1
name = "ring-dephasing"

[model]
m = 32
omega = 0.0
coupling = 0.5
kappa = 1.0

[bath]
g = 0.4
gamma = 100.0

[initial]
state = "site"
site = 1

[run]
t_max = 5.0
nm = 500
"#;

const RING_NONMARKOV: &str = r#"version = 1
name = "ring-nonmarkov"

[model]
m = 32
omega = 0.0
coupling = 0.5
kappa = 1.0

[bath]
g = 0.4
gamma = 10.0

[initial]
state = "site"
site = 1

[run]
t_max = 5.0
nm = 500
"#;

const MARKOV_SWEEP: &str = r#"version = 1
name = "markov-sweep"

[model]
m = 32
omega = 0.0
coupling = 0.5
kappa = 1.0

[bath]
g = 0.1
gamma = 100.0

[initial]
state = "site"
site = 1

[run]
t_max = 5.0
nm = 500

[sweep]
parameter = "g"
values = [0.0, 0.1, 0.2, 0.3, 0.4]
readout = 5.0
series_parameter = "gamma"
series_values = [100.0, 10.0]
"#;

fn default_d0() -> f64 {
    0.2
}
fn yes() -> bool {
    true
}
fn zero_values() -> Values {
    Values::Scalar(0.0)
}
fn default_omega0() -> f64 {
    20.0
}
fn one_f64() -> f64 {
    1.0
}

fn one() -> u64 {
    1
}
fn one_usize() -> usize {
    1
}
fn default_coupling() -> Values {
    Values::Scalar(0.5)
}
fn default_kappa() -> f64 {
    1.0
}
fn default_gamma() -> Values {
    Values::Scalar(100.0)
}
fn default_beta_gamma() -> f64 {
    0.25
}
fn default_dt() -> f64 {
    1e-3
}
fn default_tmax() -> f64 {
    5.0
}
fn default_stride() -> usize {
    10
}
fn default_nm() -> usize {
    500
}
fn default_modes() -> usize {
    400
}
fn default_cutoff() -> f64 {
    20.0
}
fn default_step_tol() -> f64 {
    1e-3
}
fn default_order() -> usize {
    5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_round_trip() {
        for name in PRESETS {
            let f = ScenarioFile::preset(name).unwrap();
            assert_eq!(f.name, name);
            assert_eq!(ScenarioFile::parse(&f.to_toml()).unwrap(), f);
        }
        assert!(ScenarioFile::preset("nope").is_err());
    }

    #[test]
    fn errors_carry_position() {
        let e = ScenarioFile::parse("version = 1\n[model]\nm = \"x\"\n").unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        assert!(ScenarioFile::parse("version = 2\n[model]\nm = 3\n").is_err());
        assert!(ScenarioFile::parse("version = 1\n[model]\nm = 3\nbogus = 1\n").is_err());
    }

    #[test]
    fn manifest_wrapper_is_accepted() {
        let f = ScenarioFile::preset("ring-closed").unwrap();
        let mut t = toml::Table::new();
        t.insert("scenario".into(), toml::Value::try_from(&f).unwrap());
        assert_eq!(ScenarioFile::parse(&toml::to_string(&t).unwrap()).unwrap(), f);
    }
}
