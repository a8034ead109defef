//! Run configuration: built-in defaults, then a TOML file, then `--set` overrides.
//!
//! Model and calibration keys sit at the top level; solver settings live in
//! one table per command. Every key a file or override names must already
//! exist in the defaults, so misspellings are rejected rather than ignored.

use std::path::Path;

use domar_core::calibration::CalibrationTargets;
use domar_core::equilibrium::EquilibriumSettings;
use domar_core::model::{ModelParams, TaxRates};
use domar_core::tax_optimizer::{FullOptions, LineOptions};
use domar_core::transition::TransitionSettings;
use domar_core::wealth::InversionSettings;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub alpha: f64,
    pub delta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub upsilon: f64,
    #[serde(rename = "tau_K")]
    pub tau_k: f64,
    #[serde(rename = "tau_L")]
    pub tau_l: f64,
    #[serde(rename = "tau_C")]
    pub tau_c: f64,
    pub sigma: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub pi_ew: f64,
    pub pi_we: f64,
    pub n_productivity_states: usize,
    /// Relative tolerance on revenue preservation.
    pub revenue_rtol: f64,
    pub equilibrium: EquilibriumSettings,
    pub inversion: InversionSettings,
    pub distribution: DistributionOutput,
    pub frontier: LineOptions,
    pub optimize: FullOptions,
    pub sweep: SweepConfig,
    pub transition: TransitionConfig,
    pub verify: VerifyConfig,
}

/// Exceedance table written for the wealth distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionOutput {
    pub w_min: f64,
    pub w_max: f64,
    pub points: usize,
    /// Financial wealth separating the body and tail panels of the comparison figure.
    pub body_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Capital-tax grid re-optimized at each parameter value.
    pub line: LineOptions,
    pub boundary_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionConfig {
    pub horizon: usize,
    /// Empty lists mean the default schedule for the horizon.
    pub initial_knots: Vec<usize>,
    pub final_knots: Vec<usize>,
    pub max_iterations_per_stage: usize,
    pub fd_step: f64,
    pub stage_rtol: f64,
    /// Reform to the welfare-maximizing mix; otherwise to the rates below.
    pub use_optimum: bool,
    #[serde(rename = "tau_L")]
    pub tau_l: f64,
    #[serde(rename = "tau_K")]
    pub tau_k: f64,
    #[serde(rename = "tau_C")]
    pub tau_c: f64,
    pub votes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub mean_agents: usize,
    pub cdf_agents: usize,
    pub transition_agents: usize,
    pub transition_horizon: usize,
}

impl Default for Config {
    fn default() -> Self {
        let p = ModelParams::baseline();
        let t = CalibrationTargets::baseline();
        let line = SweepConfig { line: LineOptions { step: 0.02, xtol: 1e-5, ..LineOptions::default() }, boundary_tol: 1e-3 };
        Self {
            alpha: p.alpha,
            delta: p.delta,
            beta: p.beta,
            gamma: p.gamma,
            upsilon: p.upsilon,
            tau_k: p.tau_k,
            tau_l: p.tau_l,
            tau_c: p.tau_c,
            sigma: t.sigma,
            skewness: t.skewness,
            kurtosis: t.kurtosis,
            pi_ew: t.pi_ew,
            pi_we: t.pi_we,
            n_productivity_states: t.n_productivity_states,
            revenue_rtol: 1e-9,
            equilibrium: EquilibriumSettings::default(),
            inversion: InversionSettings::default(),
            distribution: DistributionOutput { w_min: 1.0, w_max: 1e5, points: 400, body_max: 10.0 },
            frontier: LineOptions::default(),
            optimize: FullOptions::default(),
            sweep: line,
            transition: TransitionConfig {
                horizon: 100,
                initial_knots: Vec::new(),
                final_knots: Vec::new(),
                max_iterations_per_stage: 30,
                fd_step: 1e-7,
                stage_rtol: 1e-10,
                use_optimum: true,
                tau_l: 0.0,
                tau_k: 0.2367,
                tau_c: 0.3136,
                votes: true,
            },
            verify: VerifyConfig {
                mean_agents: 2_000_000,
                cdf_agents: 20_000_000,
                transition_agents: 1_000_000,
                transition_horizon: 100,
            },
        }
    }
}

impl Config {
    /// Defaults, overlaid with `file` when given, then with each `key=value` override.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut table = Table::try_from(Config::default()).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let user: Table = text.parse().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            merge(&mut table, user, "")?;
        }
        for (key, raw) in overrides {
            set_dotted(&mut table, key, parse_value(raw))?;
        }
        let cfg: Config = Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.params()?;
        cfg.targets().validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn taxes(&self) -> TaxRates {
        TaxRates::new(self.tau_l, self.tau_k, self.tau_c)
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        ModelParams::new(self.alpha, self.delta, self.beta, self.gamma, self.upsilon, self.taxes())
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn targets(&self) -> CalibrationTargets {
        CalibrationTargets {
            sigma: self.sigma,
            skewness: self.skewness,
            kurtosis: self.kurtosis,
            pi_ew: self.pi_ew,
            pi_we: self.pi_we,
            n_productivity_states: self.n_productivity_states,
        }
    }

    pub fn transition_settings(&self) -> TransitionSettings {
        let t = &self.transition;
        let mut s = TransitionSettings::with_horizon(t.horizon);
        if !t.initial_knots.is_empty() {
            s.initial_knots = t.initial_knots.clone();
        }
        if !t.final_knots.is_empty() {
            s.final_knots = t.final_knots.clone();
        }
        s.max_iterations_per_stage = t.max_iterations_per_stage;
        s.fd_step = t.fd_step;
        s.stage_rtol = t.stage_rtol;
        s
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Splits `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got '{s}'"))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(format!("empty key in '{s}'"));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

/// A TOML literal when the text parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn merge(base: &mut Table, user: Table, prefix: &str) -> Result<(), CliError> {
    for (k, v) in user {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match base.get_mut(&k) {
            None => return Err(CliError::Config(format!("unknown config key '{path}'"))),
            Some(Value::Table(inner)) => match v {
                Value::Table(t) => merge(inner, t, &path)?,
                _ => return Err(CliError::Config(format!("'{path}' must be a table"))),
            },
            Some(slot) => *slot = coerce(slot, v),
        }
    }
    Ok(())
}

fn set_dotted(table: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().unwrap();
    let mut cur = table;
    for p in &parts {
        cur = match cur.get_mut(*p) {
            Some(Value::Table(t)) => t,
            _ => return Err(CliError::Config(format!("unknown config key '{key}'"))),
        };
    }
    match cur.get_mut(last) {
        None | Some(Value::Table(_)) => Err(CliError::Config(format!("unknown config key '{key}'"))),
        Some(slot) => {
            *slot = coerce(slot, value);
            Ok(())
        }
    }
}

/// Integers written where a float is expected are accepted.
fn coerce(slot: &Value, v: Value) -> Value {
    match (slot, v) {
        (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
        (_, v) => v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(k: &str, v: &str) -> (String, String) {
        (k.to_string(), v.to_string())
    }

    #[test]
    fn defaults_are_the_baseline_economy() {
        let c = Config::load(None, &[]).unwrap();
        assert_eq!(c.params().unwrap(), ModelParams::baseline());
        assert_eq!(c.targets(), CalibrationTargets::baseline());
        assert_eq!(c.transition_settings(), TransitionSettings::default());
    }

    #[test]
    fn overrides_reach_nested_tables() {
        let c = Config::load(
            None,
            &[set("gamma", "4"), set("equilibrium.value.tol", "1e-11"), set("transition.horizon", "40"), set("inversion.per_state", "true")],
        )
        .unwrap();
        assert_eq!(c.gamma, 4.0);
        assert_eq!(c.equilibrium.value.tol, 1e-11);
        assert!(c.inversion.per_state);
        let s = c.transition_settings();
        assert_eq!(s.horizon, 40);
        assert_eq!(*s.final_knots.last().unwrap(), 40);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(Config::load(None, &[set("gama", "4")]), Err(CliError::Config(_))));
        assert!(matches!(Config::load(None, &[set("equilibrium.tolerance", "1")]), Err(CliError::Config(_))));
        assert!(matches!(Config::load(None, &[set("equilibrium", "1")]), Err(CliError::Config(_))));
        assert!(matches!(Config::load(None, &[set("gamma", "\"high\"")]), Err(CliError::Config(_))));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        assert!(matches!(Config::load(None, &[set("beta", "1.5")]), Err(CliError::Config(_))));
        assert!(matches!(Config::load(None, &[set("sigma", "-0.1")]), Err(CliError::Config(_))));
    }

    #[test]
    fn file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "gamma = 5.0\ntau_K = 0.3\n[frontier]\nstep = 0.05\n").unwrap();
        let c = Config::load(Some(&path), &[set("gamma", "2.5")]).unwrap();
        assert_eq!((c.gamma, c.tau_k, c.frontier.step), (2.5, 0.3, 0.05));
        std::fs::write(&path, "[frontier]\nstride = 0.05\n").unwrap();
        assert!(Config::load(Some(&path), &[]).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = Config::default();
        let back: Config = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn override_syntax() {
        assert_eq!(parse_override("a.b = 1").unwrap(), set("a.b", "1"));
        assert!(parse_override("novalue").is_err());
        assert!(parse_override("=3").is_err());
    }
}
