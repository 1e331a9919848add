//! TOML run configuration. Every key is optional; missing keys take the
//! passive-walker defaults.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer};
use vcrw_core::analysis::{AnalysisWindow, SweepConfig};
use vcrw_core::model::{PdGains, UpperBody};
use vcrw_core::{InitialConditions, ModelParams, SimConfig, Variant};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn new(message: impl Into<String>) -> Self {
        ConfigError {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError { line: Some(line), message } => write!(f, "line {line}: {message}"),
            ConfigError { line: None, message } => f.write_str(message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn variant<'de, D: Deserializer<'de>>(d: D) -> Result<Variant, D::Error> {
    let s = String::deserialize(d)?;
    Variant::from_str(&s).map_err(serde::de::Error::custom)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    #[serde(deserialize_with = "variant")]
    pub variant: Variant,
    pub m: f64,
    pub a: f64,
    pub b: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub k: f64,
    pub c: f64,
    #[serde(rename = "L0")]
    pub l0: f64,
    pub phi: f64,
    pub g: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let p = ModelParams::table_one(Variant::Vcrw1);
        ModelSection {
            variant: p.variant,
            m: p.mass[0],
            a: p.gyration_radius[0],
            b: p.attach_offset[0],
            l: p.half_length[0],
            k: p.stiffness,
            c: p.damping,
            l0: p.natural_length,
            phi: p.slope,
            g: p.gravity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpperBodySection {
    #[serde(rename = "L5")]
    pub l5: f64,
    pub m5: f64,
    #[serde(rename = "I5")]
    pub i5: f64,
    #[serde(rename = "KP")]
    pub kp: f64,
    #[serde(rename = "KD")]
    pub kd: f64,
    pub theta5d: f64,
}

impl Default for UpperBodySection {
    fn default() -> Self {
        let p = ModelParams::table_one(Variant::Vcrw3);
        UpperBodySection {
            l5: p.upper_body.length,
            m5: p.upper_body.mass,
            i5: p.upper_body.inertia,
            kp: p.controller.kp,
            kd: p.controller.kd,
            theta5d: p.controller.target,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub duration: f64,
    pub event_tol: f64,
    pub omega0: f64,
    pub stance_offset: f64,
    pub record_stride: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        let sim = SimConfig::default();
        let ic = InitialConditions::default();
        SimSection {
            dt: sim.dt,
            duration: sim.duration,
            event_tol: sim.event_tol,
            omega0: ic.omega0,
            stance_offset: ic.stance_offset,
            record_stride: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub phi_min: f64,
    pub phi_max: f64,
    pub phi_steps: usize,
    pub b_list: Vec<f64>,
    /// Simulated time discarded before the analysis window, s.
    pub settle_time: f64,
    /// Steps averaged per cell.
    pub window_steps: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        let w = AnalysisWindow::passive();
        SweepSection {
            phi_min: 0.07,
            phi_max: 0.17,
            phi_steps: 11,
            b_list: (0..8).map(|i| 0.15 + 0.02 * i as f64).collect(),
            settle_time: w.settle,
            window_steps: w.steps,
        }
    }
}

impl SweepSection {
    /// Evenly spaced slopes from `phi_min` to `phi_max` inclusive.
    pub fn phis(&self) -> Vec<f64> {
        match self.phi_steps {
            0 => Vec::new(),
            1 => vec![self.phi_min],
            n => {
                let h = (self.phi_max - self.phi_min) / (n - 1) as f64;
                (0..n).map(|i| self.phi_min + h * i as f64).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub prefix: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("."),
            prefix: "run".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub upper_body: UpperBodySection,
    pub sim: SimSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

const SECTIONS: [(&str, &[&str]); 5] = [
    ("model", &["variant", "m", "a", "b", "L", "k", "c", "L0", "phi", "g"]),
    ("upper_body", &["L5", "m5", "I5", "KP", "KD", "theta5d"]),
    ("sim", &["dt", "duration", "event_tol", "omega0", "stance_offset", "record_stride"]),
    ("sweep", &["phi_min", "phi_max", "phi_steps", "b_list", "settle_time", "window_steps"]),
    ("output", &["dir", "prefix"]),
];

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn from_toml_error(text: &str, err: toml::de::Error) -> ConfigError {
    ConfigError {
        line: err.span().map(|s| line_of(text, s.start)),
        message: err.message().trim().to_string(),
    }
}

/// Resolves `key` or `section.key` to its section.
fn locate(key: &str) -> Result<(&'static str, &'static str), ConfigError> {
    let (section, name) = match key.split_once('.') {
        Some((s, n)) => (Some(s), n),
        None => (None, key),
    };
    SECTIONS
        .iter()
        .filter(|(s, _)| section.map_or(true, |want| want == *s))
        .find_map(|(s, keys)| keys.iter().find(|k| **k == name).map(|k| (*s, *k)))
        .ok_or_else(|| ConfigError::new(format!("unknown override key `{key}`")))
}

/// Parses an override value as a TOML value, or as a bare string.
fn override_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| from_toml_error(text, e))
    }

    /// Parses `text` and applies `key=value` overrides on top.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let base = Self::parse(text)?;
        if overrides.is_empty() {
            return Ok(base);
        }
        let mut table: toml::Table = text.parse().map_err(|e| from_toml_error(text, e))?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| ConfigError::new(format!("override `{item}` is not key=value")))?;
            let (section, name) = locate(key.trim())?;
            let entry = table
                .entry(section)
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            let toml::Value::Table(section_table) = entry else {
                return Err(ConfigError::new(format!("`{section}` is not a section")));
            };
            section_table.insert(name.to_string(), override_value(raw.trim()));
        }
        RunConfig::deserialize(table).map_err(|e| ConfigError::new(format!("override: {}", e.message().trim())))
    }

    pub fn load(path: &std::path::Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_with_overrides(&text, overrides)
    }

    pub fn params(&self) -> Result<ModelParams, ConfigError> {
        let m = &self.model;
        let u = &self.upper_body;
        let params = ModelParams {
            variant: m.variant,
            mass: [m.m; 4],
            gyration_radius: [m.a; 4],
            attach_offset: [m.b; 4],
            half_length: [m.l; 4],
            stiffness: m.k,
            damping: m.c,
            natural_length: m.l0,
            slope: m.phi,
            gravity: m.g,
            upper_body: UpperBody {
                length: u.l5,
                mass: u.m5,
                inertia: u.i5,
            },
            controller: PdGains {
                kp: u.kp,
                kd: u.kd,
                target: u.theta5d,
            },
        };
        params.validate().map_err(|e| ConfigError::new(e.to_string()))?;
        Ok(params)
    }

    pub fn sim_config(&self) -> Result<SimConfig, ConfigError> {
        let cfg = SimConfig {
            dt: self.sim.dt,
            event_tol: self.sim.event_tol,
            duration: self.sim.duration,
            record_stride: self.sim.record_stride,
            ..SimConfig::default()
        };
        cfg.validate().map_err(|e| ConfigError::new(e.to_string()))?;
        Ok(cfg)
    }

    pub fn initial_conditions(&self) -> InitialConditions {
        InitialConditions {
            omega0: self.sim.omega0,
            stance_offset: self.sim.stance_offset,
        }
    }

    pub fn sweep_config(&self) -> Result<SweepConfig, ConfigError> {
        let s = &self.sweep;
        if s.phi_steps == 0 || s.b_list.is_empty() {
            return Err(ConfigError::new("sweep grid needs phi_steps >= 1 and a non-empty b_list"));
        }
        if s.window_steps == 0 || !(s.settle_time >= 0.0) {
            return Err(ConfigError::new("sweep window needs window_steps >= 1 and settle_time >= 0"));
        }
        Ok(SweepConfig {
            sim: self.sim_config()?,
            initial: self.initial_conditions(),
            window: AnalysisWindow {
                settle: s.settle_time,
                steps: s.window_steps,
            },
        })
    }
}
