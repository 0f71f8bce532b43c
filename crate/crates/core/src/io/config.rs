//! JSON run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::detector::WireParams;
use crate::error::{Error, Result};
use crate::optics::{calibrate_optical_efficiency, coupling_profile, ArrayGeometry, CouplingProfile, GaussianMode};
use crate::sim::{DiscriminatorConfig, PhotonSource};

/// Default array SDE used to calibrate the optical efficiency.
pub const DEFAULT_TARGET_SDE: f64 = 0.78;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub device: DeviceConfig,
    #[serde(default)]
    pub geometry: ArrayGeometry,
    #[serde(default)]
    pub mode: GaussianMode,
    /// Fixed optical efficiency; exclusive with `target_sde`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optical_efficiency: Option<f64>,
    /// SDE the optical efficiency is calibrated to; 0.78 when neither is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_sde: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<PhotonSource>,
    #[serde(default)]
    pub discriminator: DiscriminatorConfig,
    #[serde(default)]
    pub crosstalk: CrosstalkConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    #[serde(default)]
    pub shared: WireParams,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<WireOverride>,
}

/// Per-wire departures from the shared parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireOverride {
    pub channel: usize,
    /// Any subset of the wire parameter fields.
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub params: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrosstalkConfig {
    pub probability: f64,
    /// ps
    pub delay_sigma_ps: f64,
}

impl Default for CrosstalkConfig {
    fn default() -> Self {
        Self { probability: 0.0, delay_sigma_ps: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Dotted path into the config, e.g. `device.shared.l_kinetic`. A bare
    /// wire parameter name is taken relative to `device.shared`.
    pub parameter: String,
    pub values: Vec<f64>,
}

/// Config with per-wire quantities expanded.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub params: Vec<WireParams>,
    pub discriminators: Vec<DiscriminatorConfig>,
    pub optical_efficiency: f64,
    pub profile: CouplingProfile,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        Self::from_json(&text)
    }

    /// Parses and validates; every unknown key and violated invariant is
    /// reported together.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("invalid JSON: {e}")]))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let mut unknown = Vec::new();
        let parsed: std::result::Result<RunConfig, _> =
            serde_ignored::deserialize(value, |p| unknown.push(format!("{p}: unknown key")));
        let mut v = unknown;
        match parsed {
            Ok(cfg) => {
                v.extend(cfg.violations());
                if v.is_empty() {
                    Ok(cfg)
                } else {
                    Err(Error::Config(v))
                }
            }
            Err(e) => {
                v.push(e.to_string());
                Err(Error::Config(v))
            }
        }
    }

    fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        v.extend(self.device.shared.violations("device.shared"));
        v.extend(self.geometry.violations("geometry"));
        v.extend(self.mode.violations("mode"));
        v.extend(self.discriminator.violations("discriminator"));
        if let Some(s) = &self.source {
            v.extend(s.violations("source"));
        }
        match (self.optical_efficiency, self.target_sde) {
            (Some(_), Some(_)) => v.push("optical_efficiency and target_sde are mutually exclusive".into()),
            (Some(e), None) if !(e > 0.0 && e <= 1.0) => v.push("optical_efficiency must be in (0, 1]".into()),
            (None, Some(t)) if !(t > 0.0 && t <= 1.0) => v.push("target_sde must be in (0, 1]".into()),
            _ => {}
        }
        let c = &self.crosstalk;
        if !(0.0..=1.0).contains(&c.probability) {
            v.push("crosstalk.probability must be in [0, 1]".into());
        }
        if !(c.delay_sigma_ps >= 0.0 && c.delay_sigma_ps.is_finite()) {
            v.push("crosstalk.delay_sigma_ps must be >= 0".into());
        }
        if let Some(d) = self.duration_ns {
            if !(d > 0.0 && d.is_finite()) {
                v.push("duration_ns must be > 0".into());
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                v.push("sweep.values must not be empty".into());
            }
            if s.values.iter().any(|x| !x.is_finite()) {
                v.push("sweep.values must be finite".into());
            }
        }
        let n = self.geometry.n_wires;
        let mut seen = vec![false; n];
        for (i, o) in self.device.overrides.iter().enumerate() {
            let path = format!("device.overrides[{i}]");
            if o.channel >= n {
                v.push(format!("{path}.channel: {} is not below n_wires = {n}", o.channel));
            } else if std::mem::replace(&mut seen[o.channel], true) {
                v.push(format!("{path}.channel: channel {} overridden twice", o.channel));
            }
            if let Some(t) = o.threshold_fraction {
                if !(t > 0.0 && t < 1.0) {
                    v.push(format!("{path}.threshold_fraction must be in (0, 1)"));
                }
            }
            match merge_params(&self.device.shared, &o.params, &format!("{path}.params")) {
                Ok(p) => v.extend(p.violations(&format!("{path}.params"))),
                Err(e) => v.extend(e),
            }
        }
        v
    }

    /// Parameters for channel `k` after overrides.
    pub fn wire_params(&self, k: usize) -> Result<WireParams> {
        match self.device.overrides.iter().find(|o| o.channel == k) {
            Some(o) => merge_params(&self.device.shared, &o.params, "params").map_err(Error::Config),
            None => Ok(self.device.shared.clone()),
        }
    }

    pub fn discriminator_for(&self, k: usize) -> DiscriminatorConfig {
        let mut d = self.discriminator.clone();
        if let Some(t) = self.device.overrides.iter().find(|o| o.channel == k).and_then(|o| o.threshold_fraction) {
            d.threshold_fraction = t;
        }
        d
    }

    pub fn optical_efficiency(&self) -> Result<f64> {
        match self.optical_efficiency {
            Some(e) => Ok(e),
            None => calibrate_optical_efficiency(&self.geometry, &self.mode, self.target_sde.unwrap_or(DEFAULT_TARGET_SDE)),
        }
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let n = self.geometry.n_wires;
        let params = (0..n).map(|k| self.wire_params(k)).collect::<Result<Vec<_>>>()?;
        let discriminators = (0..n).map(|k| self.discriminator_for(k)).collect();
        let optical_efficiency = self.optical_efficiency()?;
        let profile = coupling_profile(&self.geometry, &self.mode, optical_efficiency)?;
        Ok(Resolved { params, discriminators, optical_efficiency, profile })
    }

    pub fn require_source(&self) -> Result<&PhotonSource> {
        self.source.as_ref().ok_or_else(|| Error::Config(vec!["source: required for this command".into()]))
    }

    pub fn require_duration(&self) -> Result<f64> {
        self.duration_ns.ok_or_else(|| Error::Config(vec!["duration_ns: required for this command".into()]))
    }

    /// Canonical JSON: fixed field order, sorted override maps, no whitespace.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Copy with one numeric leaf replaced, re-validated.
    pub fn with_parameter(&self, parameter: &str, value: f64) -> Result<Self> {
        let mut root = serde_json::to_value(self)?;
        let path = qualified_path(parameter);
        let mut node = &mut root;
        let parts: Vec<&str> = path.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| Error::Config(vec![format!("{path}: {part} is not inside an object")]))?;
            if i + 1 == parts.len() {
                if !obj.get(*part).is_none_or(|x| x.is_number() || x.is_null()) {
                    return Err(Error::Config(vec![format!("{path}: not a numeric parameter")]));
                }
                obj.insert(part.to_string(), serde_json::json!(value));
                break;
            }
            node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
        }
        Self::from_value(root)
    }
}

fn qualified_path(parameter: &str) -> String {
    const TOP: [&str; 11] = [
        "device",
        "geometry",
        "mode",
        "optical_efficiency",
        "target_sde",
        "source",
        "discriminator",
        "crosstalk",
        "seed",
        "duration_ns",
        "sweep",
    ];
    let head = parameter.split('.').next().unwrap_or("");
    if TOP.contains(&head) {
        parameter.to_string()
    } else {
        format!("device.shared.{parameter}")
    }
}

fn merge_params(shared: &WireParams, patch: &Map<String, Value>, path: &str) -> std::result::Result<WireParams, Vec<String>> {
    let mut base = serde_json::to_value(shared).expect("wire params serialize");
    let obj = base.as_object_mut().expect("wire params are an object");
    for (k, x) in patch {
        obj.insert(k.clone(), x.clone());
    }
    let mut unknown = Vec::new();
    let parsed: std::result::Result<WireParams, _> =
        serde_ignored::deserialize(base, |p| unknown.push(format!("{path}.{p}: unknown key")));
    match parsed {
        Ok(p) if unknown.is_empty() => Ok(p),
        Ok(_) => Err(unknown),
        Err(e) => {
            unknown.push(format!("{path}: {e}"));
            Err(unknown)
        }
    }
}
