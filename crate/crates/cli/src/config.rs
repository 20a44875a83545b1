//! JSON run configurations, one per subcommand. Unknown keys are rejected.

use std::path::Path;

use rotgas::discretization::{RadialGrid, TrapSpec};
use rotgas::phase::ScanConfig;
use rotgas::stability::DEFAULT_L_GRID;
use rotgas::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub r_max: f64,
    pub z_max: f64,
    pub nr: usize,
    pub nz: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { r_max: 8.0, z_max: 8.0, nr: 96, nz: 96 }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<RadialGrid> {
        RadialGrid::new(self.r_max, self.z_max, self.nr, self.nz)
    }
}

fn harmonic() -> TrapSpec {
    TrapSpec::harmonic()
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default = "harmonic")]
    pub trap: TrapSpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "ChannelConfig::default_g_list")]
    pub g_list: Vec<f64>,
    /// Channels `0..=n_max` are solved at every `g`.
    #[serde(default = "ChannelConfig::default_n_max")]
    pub n_max: usize,
    /// Rotation used to report `E_n - nΩ` and the best channel.
    #[serde(default)]
    pub omega: f64,
    #[serde(default = "ChannelConfig::default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ChannelConfig {
    fn default_g_list() -> Vec<f64> {
        vec![0.0]
    }
    fn default_n_max() -> usize {
        5
    }
    fn default_tol() -> f64 {
        1e-6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmConfig {
    #[serde(default = "harmonic")]
    pub trap: TrapSpec,
    #[serde(default)]
    pub grid: GridConfig,
    pub omega: f64,
    pub g: f64,
    #[serde(default = "DmConfig::default_tol")]
    pub tol: f64,
    #[serde(default = "DmConfig::default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "DmConfig::default_n_cap")]
    pub n_cap: usize,
    #[serde(default)]
    pub seed: u64,
}

impl DmConfig {
    fn default_tol() -> f64 {
        1e-6
    }
    fn default_max_iter() -> usize {
        500
    }
    fn default_n_cap() -> usize {
        200
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gp3dConfig {
    #[serde(default = "harmonic")]
    pub trap: TrapSpec,
    #[serde(default)]
    pub grid: GridConfig,
    pub omega: f64,
    pub g: f64,
    /// Angular cutoff; by default four above the largest occupied channel.
    #[serde(default)]
    pub m_max: Option<usize>,
    #[serde(default = "Gp3dConfig::default_tol")]
    pub tol: f64,
    #[serde(default = "Gp3dConfig::default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "Gp3dConfig::default_screen_iter")]
    pub screen_iter: usize,
    #[serde(default = "Gp3dConfig::default_finalists")]
    pub finalists: usize,
    /// Also minimize the DM functional and start from its coherent state.
    #[serde(default = "Gp3dConfig::yes")]
    pub with_dm: bool,
    /// Write `|ψ|²` and phase on the central `z` slice.
    #[serde(default = "Gp3dConfig::yes")]
    pub dump_slices: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Gp3dConfig {
    fn default_tol() -> f64 {
        1e-6
    }
    fn default_max_iter() -> usize {
        20_000
    }
    fn default_screen_iter() -> usize {
        300
    }
    fn default_finalists() -> usize {
        2
    }
    fn yes() -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    #[serde(default = "harmonic")]
    pub trap: TrapSpec,
    #[serde(default)]
    pub grid: GridConfig,
    pub omega: f64,
    pub g: f64,
    pub n_list: Vec<usize>,
    #[serde(default = "StabilityConfig::default_l_grid")]
    pub l_grid: Vec<f64>,
    /// Winding of the trial direction.
    #[serde(default)]
    pub m: i64,
    #[serde(default = "StabilityConfig::default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
}

impl StabilityConfig {
    fn default_l_grid() -> Vec<f64> {
        DEFAULT_L_GRID.to_vec()
    }
    fn default_tol() -> f64 {
        1e-6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    pub particles: usize,
    /// Mode momenta; defaults to `0..modes`.
    #[serde(default)]
    pub momenta: Option<Vec<i64>>,
    #[serde(default)]
    pub modes: Option<usize>,
    pub omega_list: Vec<f64>,
    #[serde(default = "ToyConfig::default_couplings")]
    pub coupling_list: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl ToyConfig {
    fn default_couplings() -> Vec<f64> {
        vec![one()]
    }
}

/// Reads a config file, or starts from `{}` when none is given, and applies
/// `key.path=value` overrides before decoding.
pub fn load_config<T: DeserializeOwned>(path: Option<&Path>, overrides: &[String]) -> Result<T> {
    let mut value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str::<Value>(&text).map_err(|e| Error::config(format!("invalid JSON in {}: {e}", p.display())))?
        }
        None => Value::Object(Default::default()),
    };
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    decode(value)
}

#[cfg(test)]
pub fn parse_str<T: DeserializeOwned>(text: &str) -> Result<T> {
    let value = serde_json::from_str::<Value>(text).map_err(|e| Error::config(format!("invalid JSON: {e}")))?;
    decode(value)
}

fn decode<T: DeserializeOwned>(value: Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let at = e.path().to_string();
        let inner = e.into_inner();
        if at == "." || at.is_empty() {
            Error::config(inner.to_string())
        } else {
            Error::config(format!("at `{at}`: {inner}"))
        }
    })
}

/// `a.b=3` sets `{"a": {"b": 3}}`; the value is read as JSON, falling back
/// to a plain string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override `{assignment}` is not of the form key=value")))?;
    let parsed = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::config(format!("override key `{key}` has an empty segment")));
        }
        let obj = match cur {
            Value::Object(m) => m,
            _ => return Err(Error::config(format!("override `{key}`: `{}` is not an object", parts[..i].join(".")))),
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

fn check_omega(trap: &TrapSpec, omega: f64, field: &str) -> Result<()> {
    trap.check_omega(omega)
        .map_err(|e| Error::config(format!("`{field}`: {}", strip(&e))))
}

fn check_g(g: f64, field: &str) -> Result<()> {
    if !(g >= 0.0 && g.is_finite()) {
        return Err(Error::config(format!("`{field}`: coupling must be finite and ≥ 0 (got {g})")));
    }
    Ok(())
}

fn strip(e: &Error) -> String {
    match e {
        Error::Config(s) | Error::Domain(s) => s.clone(),
        other => other.to_string(),
    }
}

fn check_grid(trap: &TrapSpec, grid: &GridConfig) -> Result<()> {
    trap.validate().map_err(|e| Error::config(format!("`trap`: {}", strip(&e))))?;
    grid.build().map(|_| ()).map_err(|e| Error::config(format!("`grid`: {}", strip(&e))))
}

pub trait Validate {
    fn validate(&self) -> Result<()>;
    fn seed_mut(&mut self) -> &mut u64;
}

impl Validate for ChannelConfig {
    fn validate(&self) -> Result<()> {
        check_grid(&self.trap, &self.grid)?;
        check_omega(&self.trap, self.omega, "omega")?;
        if self.g_list.is_empty() {
            return Err(Error::config("`g_list`: at least one value is required"));
        }
        for (i, &g) in self.g_list.iter().enumerate() {
            check_g(g, &format!("g_list[{i}]"))?;
        }
        Ok(())
    }
    fn seed_mut(&mut self) -> &mut u64 {
        &mut self.seed
    }
}

impl Validate for DmConfig {
    fn validate(&self) -> Result<()> {
        check_grid(&self.trap, &self.grid)?;
        check_omega(&self.trap, self.omega, "omega")?;
        if self.omega < 0.0 {
            return Err(Error::config("`omega`: the DM minimizer expects omega ≥ 0"));
        }
        check_g(self.g, "g")?;
        if self.g == 0.0 {
            return Err(Error::config("`g`: the DM minimizer needs g > 0"));
        }
        Ok(())
    }
    fn seed_mut(&mut self) -> &mut u64 {
        &mut self.seed
    }
}

impl Validate for Gp3dConfig {
    fn validate(&self) -> Result<()> {
        check_grid(&self.trap, &self.grid)?;
        check_omega(&self.trap, self.omega, "omega")?;
        if self.omega < 0.0 {
            return Err(Error::config("`omega`: use omega ≥ 0; the energy is even in omega"));
        }
        check_g(self.g, "g")?;
        if self.with_dm && self.g == 0.0 {
            return Err(Error::config("`with_dm`: the DM start needs g > 0"));
        }
        Ok(())
    }
    fn seed_mut(&mut self) -> &mut u64 {
        &mut self.seed
    }
}

impl Validate for StabilityConfig {
    fn validate(&self) -> Result<()> {
        check_grid(&self.trap, &self.grid)?;
        check_omega(&self.trap, self.omega, "omega")?;
        check_g(self.g, "g")?;
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(Error::config("`n_list`: needs at least one entry, all ≥ 1"));
        }
        if self.l_grid.is_empty() || self.l_grid.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::config("`l_grid`: needs positive trial lengths"));
        }
        Ok(())
    }
    fn seed_mut(&mut self) -> &mut u64 {
        &mut self.seed
    }
}

impl Validate for ToyConfig {
    fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::config("`particles`: at least one particle is required"));
        }
        if self.momenta.is_some() && self.modes.is_some() {
            return Err(Error::config("give either `momenta` or `modes`, not both"));
        }
        if self.omega_list.is_empty() || self.coupling_list.is_empty() {
            return Err(Error::config("`omega_list` and `coupling_list` must be nonempty"));
        }
        for (i, &c) in self.coupling_list.iter().enumerate() {
            check_g(c, &format!("coupling_list[{i}]"))?;
        }
        Ok(())
    }
    fn seed_mut(&mut self) -> &mut u64 {
        &mut self.seed
    }
}

impl Validate for ScanConfig {
    fn validate(&self) -> Result<()> {
        ScanConfig::validate(self).map_err(|e| match e {
            Error::Domain(s) => Error::Config(s),
            other => other,
        })
    }
    fn seed_mut(&mut self) -> &mut u64 {
        &mut self.seed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let c: DmConfig = parse_str(r#"{"omega": 0.5, "g": 1.0}"#).unwrap();
        assert_eq!(c.grid, GridConfig::default());
        assert_eq!(c.max_iter, 500);
        assert_eq!(c.trap, TrapSpec::harmonic());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_key_reports_path() {
        let e = parse_str::<DmConfig>(r#"{"omega": 0.5, "g": 1.0, "grid": {"r_max": 8, "z_max": 8, "nr": 32, "nz": 32, "dx": 1}}"#)
            .unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("grid") && msg.contains("dx"), "{msg}");
    }

    #[test]
    fn supercritical_rotation_is_rejected() {
        let c: DmConfig = parse_str(r#"{"omega": 2.5, "g": 1.0}"#).unwrap();
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("omega"), "{msg}");
    }

    #[test]
    fn malformed_json_has_position() {
        let msg = parse_str::<DmConfig>("{\"omega\": 0.5,\n \"g\": }").unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn overrides_nest() {
        let mut v = serde_json::json!({"omega": 0.5, "g": 1.0});
        apply_override(&mut v, "grid.nr=40").unwrap();
        apply_override(&mut v, "g=2.5").unwrap();
        assert_eq!(v["grid"]["nr"], 40);
        assert_eq!(v["g"], 2.5);
        assert!(apply_override(&mut v, "g.x=1").is_err());
        assert!(apply_override(&mut v, "novalue").is_err());
    }
}
