//! Scenario configuration: one TOML-serializable tree holding every
//! tunable, with defaults matching the benchmark scenario (25 vehicles on a
//! source lattice flying to the origin). Partial files are filled from
//! defaults; `key.path=value` overrides are applied on top.

use crate::basis::BasisSpec;
use crate::channel::ChannelParams;
use crate::cost::{CostParams, PowerParams, SafetyParams};
use crate::diagnostics::BoundednessLimits;
use crate::dynamics::{DynamicsParams, UavState};
use crate::error::{Result, SimError};
use crate::federation::FlConfig;
use crate::fpk::QuadratureSpec;
use crate::hjb::HjbHyper;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Density-learner hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FpkHyper {
    /// Gradient step size.
    pub mu: f64,
    /// Gaussian bandwidth for the initial density fit.
    pub bandwidth: f64,
    /// Ridge weight for the initial fit.
    pub ridge: f64,
}

impl Default for FpkHyper {
    fn default() -> Self {
        Self {
            mu: 0.01,
            bandwidth: 2.0,
            ridge: 1e-6,
        }
    }
}

impl FpkHyper {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.mu > 0.0 && self.bandwidth > 0.0 && self.ridge >= 0.0) {
            return Err("fpk hyperparameters must be positive (ridge >= 0)".into());
        }
        Ok(())
    }
}

/// Initial swarm placement: a square lattice centered on `center` with the
/// given pitch, filled row-major, all vehicles starting at `velocity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwarmInit {
    pub center: [f64; 2],
    pub pitch: f64,
    pub velocity: [f64; 2],
}

impl Default for SwarmInit {
    fn default() -> Self {
        Self {
            center: [150.0, 100.0],
            pitch: std::f64::consts::SQRT_2,
            velocity: [0.0, 0.0],
        }
    }
}

impl SwarmInit {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.pitch > 0.0) {
            return Err("swarm.pitch must be positive".into());
        }
        Ok(())
    }

    /// Lattice positions for `n` vehicles: the smallest square grid that
    /// holds them, centered on `center`, filled row-major.
    pub fn positions(&self, n: usize) -> Vec<UavState> {
        let side = (n as f64).sqrt().ceil() as usize;
        let offset = (side as f64 - 1.0) / 2.0;
        (0..n)
            .map(|i| {
                let row = i / side;
                let col = i % side;
                UavState::new(
                    [
                        self.center[0] + (col as f64 - offset) * self.pitch,
                        self.center[1] + (row as f64 - offset) * self.pitch,
                    ],
                    self.velocity,
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Number of vehicles.
    pub n_agents: usize,
    /// Simulation horizon in steps.
    pub max_steps: u64,
    /// Steps of empirical-kernel warm-up before the mean-field integral is
    /// trusted.
    pub warmup_steps: u64,
    /// Neighbor radius for empirical interaction terms [m].
    pub comm_range: f64,
    /// Actuator limit: learned actions are clamped to this norm [m/s^2].
    pub action_limit: f64,
    pub swarm: SwarmInit,
    pub dynamics: DynamicsParams,
    pub cost: CostParams,
    pub power: PowerParams,
    pub safety: SafetyParams,
    pub basis: BasisSpec,
    pub hjb: HjbHyper,
    pub fpk: FpkHyper,
    pub quadrature: QuadratureSpec,
    pub channel: ChannelParams,
    pub federation: FlConfig,
    pub limits: BoundednessLimits,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_agents: 25,
            max_steps: 3000,
            warmup_steps: 100,
            comm_range: 100.0,
            action_limit: 3.0,
            swarm: SwarmInit::default(),
            dynamics: DynamicsParams::default(),
            cost: CostParams::default(),
            power: PowerParams::default(),
            safety: SafetyParams::default(),
            basis: BasisSpec {
                // meter/velocity scales keep degree-6 monomials O(1) over
                // the operating box
                pos_scale: 100.0,
                vel_scale: 10.0,
                ..Default::default()
            },
            hjb: HjbHyper::default(),
            fpk: FpkHyper::default(),
            quadrature: QuadratureSpec::default(),
            channel: ChannelParams::default(),
            federation: FlConfig::default(),
            limits: BoundednessLimits::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| SimError::Config(m);
        if self.n_agents == 0 {
            return Err(err("n_agents must be >= 1".into()));
        }
        if self.max_steps == 0 {
            return Err(err("max_steps must be >= 1".into()));
        }
        if !(self.comm_range > 0.0) {
            return Err(err("comm_range must be positive".into()));
        }
        if !(self.action_limit > 0.0) {
            return Err(err("action_limit must be positive".into()));
        }
        self.swarm.validate().map_err(err)?;
        self.dynamics.validate().map_err(err)?;
        self.cost.validate().map_err(err)?;
        self.power.validate().map_err(err)?;
        self.safety.validate().map_err(err)?;
        self.basis.validate().map_err(err)?;
        self.hjb.validate().map_err(err)?;
        self.fpk.validate().map_err(err)?;
        self.quadrature.validate().map_err(err)?;
        self.channel.validate().map_err(err)?;
        self.federation.validate(self.n_agents).map_err(err)?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Apply `section.key=value` overrides. Values are parsed as TOML
    /// scalars; unknown keys are rejected on re-deserialization.
    pub fn with_overrides(&self, sets: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::Table::try_from(self.clone())
            .map_err(|e| SimError::Config(e.to_string()))?;
        for set in sets {
            let (path, raw) = set
                .split_once('=')
                .ok_or_else(|| SimError::Config(format!("override '{set}' is not key=value")))?;
            let value = parse_scalar(raw.trim())?;
            insert_path(&mut table, path.trim(), value)?;
        }
        let cfg: ScenarioConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_scalar(raw: &str) -> Result<toml::Value> {
    let wrapped = format!("v = {raw}");
    if let Ok(t) = wrapped.parse::<toml::Table>() {
        return Ok(t["v"].clone());
    }
    // bare strings without quotes
    Ok(toml::Value::String(raw.to_string()))
}

fn insert_path(table: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let mut parts = path.split('.').peekable();
    let mut cur = table;
    loop {
        let key = parts
            .next()
            .ok_or_else(|| SimError::Config(format!("empty override path '{path}'")))?;
        if parts.peek().is_none() {
            cur.insert(key.to_string(), value);
            return Ok(());
        }
        cur = cur
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| SimError::Config(format!("override path '{path}' crosses a scalar")))?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn defaults_validate_and_match_scenario() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_agents, 25);
        assert_eq!(cfg.max_steps, 3000);
        assert_relative_eq!(cfg.dynamics.dt, 0.1);
        assert_relative_eq!(cfg.dynamics.c0, 0.1);
        assert_relative_eq!(cfg.dynamics.sigma_wind, 0.1);
        assert_relative_eq!(cfg.cost.c1, 0.015);
        assert_relative_eq!(cfg.cost.c2, 0.015);
        assert_relative_eq!(cfg.cost.c3, 0.005);
        assert_relative_eq!(cfg.hjb.mu, 0.01);
        assert_relative_eq!(cfg.hjb.c_reg, 0.5);
        assert_relative_eq!(cfg.channel.p_o, 0.1);
        assert_relative_eq!(cfg.channel.w_o, 2.0e6);
        assert_relative_eq!(cfg.channel.sigma_n, 1.0e-14);
        assert_relative_eq!(cfg.channel.xi, 6.649);
        assert_relative_eq!(cfg.channel.chi, 1.347);
        assert_eq!(cfg.federation.n0, 100);
        assert_relative_eq!(cfg.swarm.center[0], 150.0);
        assert_relative_eq!(cfg.swarm.center[1], 100.0);
        assert_relative_eq!(cfg.swarm.pitch, std::f64::consts::SQRT_2);
    }

    #[test]
    fn lattice_is_centered_square_with_pitch() {
        let cfg = ScenarioConfig::default();
        let pts = cfg.swarm.positions(25);
        assert_eq!(pts.len(), 25);
        // centroid at the center
        let cx: f64 = pts.iter().map(|s| s.r[0]).sum::<f64>() / 25.0;
        let cy: f64 = pts.iter().map(|s| s.r[1]).sum::<f64>() / 25.0;
        assert_relative_eq!(cx, 150.0, epsilon = 1e-9);
        assert_relative_eq!(cy, 100.0, epsilon = 1e-9);
        // nearest-neighbor distance equals the pitch
        let mut min_d = f64::MAX;
        for i in 0..25 {
            for j in 0..25 {
                if i != j {
                    let d = ((pts[i].r[0] - pts[j].r[0]).powi(2)
                        + (pts[i].r[1] - pts[j].r[1]).powi(2))
                    .sqrt();
                    min_d = min_d.min(d);
                }
            }
        }
        assert_relative_eq!(min_d, std::f64::consts::SQRT_2, epsilon = 1e-9);
        // all start at rest
        assert!(pts.iter().all(|s| s.v == [0.0, 0.0]));
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg = ScenarioConfig::from_toml_str(
            r#"
            n_agents = 9
            [dynamics]
            sigma_wind = 0.2
            "#,
        )
        .unwrap();
        assert_eq!(cfg.n_agents, 9);
        assert_relative_eq!(cfg.dynamics.sigma_wind, 0.2);
        assert_relative_eq!(cfg.dynamics.c0, 0.1); // default retained
        assert_eq!(cfg.federation.n0, 100);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ScenarioConfig::from_toml_str("bogus_key = 1").is_err());
        assert!(ScenarioConfig::from_toml_str("[dynamics]\nbogus = 1").is_err());
    }

    #[test]
    fn overrides_apply_and_validate() {
        let cfg = ScenarioConfig::default();
        let out = cfg
            .with_overrides(&[
                "dynamics.sigma_wind=0.3".into(),
                "federation.n0=200".into(),
                "n_agents=16".into(),
            ])
            .unwrap();
        assert_relative_eq!(out.dynamics.sigma_wind, 0.3);
        assert_eq!(out.federation.n0, 200);
        assert_eq!(out.n_agents, 16);

        assert!(cfg.with_overrides(&["nope.key=1".into()]).is_err());
        assert!(cfg.with_overrides(&["dynamics.dt=-1".into()]).is_err());
        assert!(cfg.with_overrides(&["garbage".into()]).is_err());
    }

    #[test]
    fn toml_round_trip_preserves_config() {
        let cfg = ScenarioConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_relative_eq!(back.channel.sigma_n, cfg.channel.sigma_n);
        assert_eq!(back.n_agents, cfg.n_agents);
        assert_relative_eq!(back.basis.pos_scale, cfg.basis.pos_scale);
    }
}
