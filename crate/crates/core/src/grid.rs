//! Static grid description: dynamic parameters, relay rosters and the
//! attacker's capability, plus validation.
//!
//! Frequency deviations are carried in per-unit of the nominal frequency
//! throughout the engine; relay thresholds are configured in Hz and Hz/s
//! and compared against the Hz-valued observables.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// ROCOF relay settings are normally found in this band (Hz/s).
pub const TYPICAL_ROCOF_BAND: (f64, f64) = (0.5, 1.2);

fn default_f_nominal() -> f64 {
    60.0
}

fn default_kappa() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    /// Aggregate inertia constant H (s).
    #[serde(rename = "inertia_h_s")]
    pub h_inertia: f64,
    /// Governor droop R (p.u.).
    #[serde(rename = "droop_r_pu")]
    pub droop_r: f64,
    /// Governor time constant T (s).
    #[serde(rename = "governor_t_s")]
    pub governor_t: f64,
    /// Simulation step (s).
    #[serde(rename = "dt_s")]
    pub dt: f64,
    /// ROCOF averaging window in steps.
    #[serde(rename = "rocof_window_m")]
    pub rocof_window_m: usize,
    #[serde(rename = "frequency_nominal_hz", default = "default_f_nominal")]
    pub f_nominal: f64,
}

impl GridParams {
    /// Parameters with `dt` set to one nominal cycle.
    pub fn with_cycle_step(h_inertia: f64, droop_r: f64, governor_t: f64, window: usize) -> Self {
        GridParams {
            h_inertia,
            droop_r,
            governor_t,
            dt: 1.0 / 60.0,
            rocof_window_m: window,
            f_nominal: 60.0,
        }
    }

    /// Coefficient multiplying Δf_n in the frequency update when no power
    /// terms are present: `1 - Δt² / (4·H·R·T)`.
    pub fn stability_coefficient(&self) -> f64 {
        1.0 - self.dt * self.dt / (4.0 * self.h_inertia * self.droop_r * self.governor_t)
    }

    pub fn hz_to_pu(&self, hz: f64) -> f64 {
        hz / self.f_nominal
    }

    pub fn pu_to_hz(&self, pu: f64) -> f64 {
        pu * self.f_nominal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRelay {
    pub id: String,
    pub bus: String,
    /// Generation removed when the relay trips (p.u.).
    #[serde(rename = "p_tg_pu")]
    pub p_tg: f64,
    #[serde(rename = "rocof_thresh_hz_per_s")]
    pub rocof_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadRelay {
    pub id: String,
    pub bus: String,
    /// Load block disconnected when the relay operates (p.u.).
    #[serde(rename = "p_sh_pu")]
    pub p_sh: f64,
    #[serde(rename = "underfreq_thresh_hz")]
    pub underfreq_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackerCapability {
    /// Threshold of injection, as a fraction.
    pub toi: f64,
    /// Fraction of DER measurements the attacker can reach.
    pub ad: f64,
    #[serde(rename = "der_total_pu")]
    pub der_total: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

/// Largest injection magnitude the attacker can make the control center
/// perceive: `kappa · toi · ad · der_total`.
pub fn capability_bound(cap: &AttackerCapability) -> f64 {
    cap.kappa * cap.toi * cap.ad * cap.der_total
}

/// How relays accumulate once their condition holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelayMode {
    /// Each relay operates at most once.
    #[default]
    Latched,
    /// Re-add the relay's block on every step its condition holds.
    LiteralAccumulation,
}

/// Sign applied to cumulative shed load in the frequency update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShedSign {
    /// Shedding load raises frequency.
    #[default]
    Physical,
    /// Shed load enters with the same (frequency-lowering) sign as tripped generation.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InertiaMode {
    #[default]
    Constant,
    /// Scale H by the share of generator capacity still connected.
    RescaleBySurvivingGeneration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EngineOptions {
    #[serde(default)]
    pub relay_mode: RelayMode,
    #[serde(default)]
    pub shed_sign: ShedSign,
    #[serde(default)]
    pub inertia_mode: InertiaMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(flatten)]
    pub params: GridParams,
    pub generators: Vec<GeneratorRelay>,
    pub loads: Vec<LoadRelay>,
    #[serde(rename = "attacker")]
    pub capability: AttackerCapability,
    #[serde(default)]
    pub engine: EngineOptions,
}

impl GridConfig {
    /// The three-generator, four-load system used in the case studies:
    /// ROCOF relays at 0.5, 0.6 and 1.2 Hz/s (buses 4, 5, 1), 1.0 p.u. per
    /// generator, LS relays at 59.5 Hz on every load, 1.5 p.u. of DER.
    pub fn five_bus(params: GridParams, capability: AttackerCapability) -> Self {
        let generators = [("G4", "4", 0.5), ("G5", "5", 0.6), ("G1", "1", 1.2)]
            .into_iter()
            .map(|(id, bus, thr)| GeneratorRelay {
                id: id.to_string(),
                bus: bus.to_string(),
                p_tg: 1.0,
                rocof_threshold: thr,
            })
            .collect();
        // 4.5 p.u. of load over four feeders
        let loads = [("L2", "2"), ("L3", "3"), ("L4", "4"), ("L5", "5")]
            .into_iter()
            .map(|(id, bus)| LoadRelay {
                id: id.to_string(),
                bus: bus.to_string(),
                p_sh: 4.5 / 4.0,
                underfreq_threshold: 59.5,
            })
            .collect();
        GridConfig {
            params,
            generators,
            loads,
            capability,
            engine: EngineOptions::default(),
        }
    }

    pub fn total_generation(&self) -> f64 {
        self.generators.iter().map(|g| g.p_tg).sum()
    }
}

/// A configuration that has passed [`validate_config`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedGridConfig {
    config: GridConfig,
    stability_coefficient: f64,
    warnings: Vec<String>,
}

impl ValidatedGridConfig {
    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn params(&self) -> &GridParams {
        &self.config.params
    }

    pub fn generators(&self) -> &[GeneratorRelay] {
        &self.config.generators
    }

    pub fn loads(&self) -> &[LoadRelay] {
        &self.config.loads
    }

    pub fn capability(&self) -> &AttackerCapability {
        &self.config.capability
    }

    pub fn engine(&self) -> EngineOptions {
        self.config.engine
    }

    pub fn capability_bound(&self) -> f64 {
        capability_bound(&self.config.capability)
    }

    pub fn stability_coefficient(&self) -> f64 {
        self.stability_coefficient
    }

    /// Non-fatal findings, e.g. ROCOF settings outside the usual band.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn into_inner(self) -> GridConfig {
        self.config
    }
}

fn require(field: &str, ok: bool, reason: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, reason))
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    require(field, v.is_finite() && v > 0.0, &format!("must be finite and > 0, got {v}"))
}

fn fraction(field: &str, v: f64) -> Result<(), ConfigError> {
    require(field, (0.0..=1.0).contains(&v), &format!("must lie in [0, 1], got {v}"))
}

fn validate_params(p: &GridParams) -> Result<f64, ConfigError> {
    positive("inertia_h_s", p.h_inertia)?;
    positive("droop_r_pu", p.droop_r)?;
    positive("governor_t_s", p.governor_t)?;
    positive("dt_s", p.dt)?;
    positive("frequency_nominal_hz", p.f_nominal)?;
    require("rocof_window_m", p.rocof_window_m >= 1, "must be at least 1")?;

    let coefficient = p.stability_coefficient();
    if p.dt > p.governor_t {
        return Err(ConfigError::StabilityViolation {
            coefficient,
            reason: format!("dt_s = {} exceeds governor_t_s = {}", p.dt, p.governor_t),
        });
    }
    if !(coefficient > -1.0 && coefficient <= 1.0) {
        return Err(ConfigError::StabilityViolation {
            coefficient,
            reason: "dt_s too large for the given H, R and T".to_string(),
        });
    }
    Ok(coefficient)
}

/// Checks every invariant of `raw` and attaches the frequency-update
/// coefficient. Idempotent on already-valid input.
pub fn validate_config(raw: GridConfig) -> Result<ValidatedGridConfig, ConfigError> {
    let coefficient = validate_params(&raw.params)?;
    let mut warnings = Vec::new();

    require("generators", !raw.generators.is_empty(), "at least one generator relay is required")?;
    require("loads", !raw.loads.is_empty(), "at least one load relay is required")?;

    let mut ids = HashSet::new();
    for (i, g) in raw.generators.iter().enumerate() {
        require(&format!("generators[{i}].id"), ids.insert(g.id.as_str()), &format!("duplicate id `{}`", g.id))?;
        positive(&format!("generators[{i}].p_tg_pu"), g.p_tg)?;
        // +inf disables the relay
        require(
            &format!("generators[{i}].rocof_thresh_hz_per_s"),
            g.rocof_threshold > 0.0,
            &format!("must be > 0, got {}", g.rocof_threshold),
        )?;
        let (lo, hi) = TYPICAL_ROCOF_BAND;
        if g.rocof_threshold.is_finite() && (g.rocof_threshold < lo || g.rocof_threshold > hi) {
            let msg = format!(
                "generator `{}`: ROCOF threshold {} Hz/s outside the usual [{lo}, {hi}] band",
                g.id, g.rocof_threshold
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }

    let mut ids = HashSet::new();
    for (i, l) in raw.loads.iter().enumerate() {
        require(&format!("loads[{i}].id"), ids.insert(l.id.as_str()), &format!("duplicate id `{}`", l.id))?;
        positive(&format!("loads[{i}].p_sh_pu"), l.p_sh)?;
        require(
            &format!("loads[{i}].underfreq_thresh_hz"),
            l.underfreq_threshold > 0.0 && l.underfreq_threshold < raw.params.f_nominal,
            &format!(
                "must lie in (0, {}), got {}",
                raw.params.f_nominal, l.underfreq_threshold
            ),
        )?;
    }

    let cap = &raw.capability;
    fraction("attacker.toi", cap.toi)?;
    fraction("attacker.ad", cap.ad)?;
    require("attacker.der_total_pu", cap.der_total.is_finite() && cap.der_total >= 0.0, "must be >= 0")?;
    require("attacker.kappa", cap.kappa.is_finite() && cap.kappa >= 0.0, "must be >= 0")?;

    Ok(ValidatedGridConfig {
        config: raw,
        stability_coefficient: coefficient,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c1() -> GridConfig {
        GridConfig::five_bus(
            GridParams::with_cycle_step(2.0, 0.2, 0.2, 6),
            AttackerCapability { toi: 0.02, ad: 0.2, der_total: 1.5, kappa: 1.0 },
        )
    }

    #[test]
    fn c1_column_is_valid() {
        let v = validate_config(c1()).unwrap();
        let expected = 1.0 - (1.0 / 3600.0) / (4.0 * 2.0 * 0.2 * 0.2);
        assert!((v.stability_coefficient() - expected).abs() < 1e-15);
        assert!(v.warnings().is_empty());
    }

    #[test]
    fn zero_inertia_rejected() {
        let mut c = c1();
        c.params.h_inertia = 0.0;
        match validate_config(c) {
            Err(ConfigError::InvalidParameter { field, .. }) => assert_eq!(field, "inertia_h_s"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn step_longer_than_governor_lag_is_unstable() {
        let mut c = c1();
        c.params.dt = 1.0;
        assert!(matches!(validate_config(c), Err(ConfigError::StabilityViolation { .. })));
    }

    #[test]
    fn coefficient_out_of_range_even_with_short_step() {
        // dt <= T but dt^2 > 8 H R T
        let mut c = c1();
        c.params.h_inertia = 0.01;
        c.params.droop_r = 0.01;
        c.params.governor_t = 0.2;
        c.params.dt = 0.1;
        assert!(matches!(validate_config(c), Err(ConfigError::StabilityViolation { .. })));
    }

    #[test]
    fn duplicate_and_missing_relays() {
        let mut c = c1();
        c.generators[1].id = c.generators[0].id.clone();
        assert!(matches!(validate_config(c), Err(ConfigError::InvalidParameter { .. })));

        let mut c = c1();
        c.loads.clear();
        assert!(matches!(validate_config(c), Err(ConfigError::InvalidParameter { field, .. }) if field == "loads"));

        let mut c = c1();
        c.loads[0].underfreq_threshold = 60.0;
        assert!(validate_config(c).is_err());
    }

    #[test]
    fn unusual_rocof_threshold_warns_only() {
        let mut c = c1();
        c.generators[2].rocof_threshold = 2.0;
        let v = validate_config(c).unwrap();
        assert_eq!(v.warnings().len(), 1);
    }

    #[test]
    fn capability_examples() {
        let cap = |toi, ad, kappa| AttackerCapability { toi, ad, der_total: 1.5, kappa };
        assert!((capability_bound(&cap(0.02, 0.2, 1.0)) - 0.006).abs() < 1e-15);
        assert_eq!(capability_bound(&cap(0.0, 1.0, 1.0)), 0.0);
        assert!((capability_bound(&cap(0.06, 0.2, 50.0)) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn json_schema_round_trip() {
        let text = r#"{
            "frequency_nominal_hz": 60, "dt_s": 0.016666666666666666, "inertia_h_s": 2,
            "droop_r_pu": 0.2, "governor_t_s": 0.2, "rocof_window_m": 6,
            "generators": [{"id": "G4", "bus": "4", "p_tg_pu": 1.0, "rocof_thresh_hz_per_s": 0.5}],
            "loads": [{"id": "L1", "bus": "2", "p_sh_pu": 0.5, "underfreq_thresh_hz": 59.5}],
            "attacker": {"toi": 0.02, "ad": 0.2, "der_total_pu": 1.5}
        }"#;
        let c: GridConfig = serde_json::from_str(text).unwrap();
        assert_eq!(c.capability.kappa, 1.0);
        assert_eq!(c.engine, EngineOptions::default());
        let back: GridConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    proptest! {
        #[test]
        fn capability_bound_is_monotone(
            toi in 0.0..1.0f64, ad in 0.0..1.0f64, der in 0.0..5.0f64, kappa in 0.0..100.0f64,
            bump in 0.0..0.5f64,
        ) {
            let base = AttackerCapability { toi, ad, der_total: der, kappa };
            let b = capability_bound(&base);
            let up = [
                AttackerCapability { toi: (toi + bump).min(1.0), ..base.clone() },
                AttackerCapability { ad: (ad + bump).min(1.0), ..base.clone() },
                AttackerCapability { der_total: der + bump, ..base.clone() },
                AttackerCapability { kappa: kappa + bump, ..base.clone() },
            ];
            for c in &up {
                prop_assert!(capability_bound(c) >= b);
            }
        }

        #[test]
        fn validation_is_idempotent(h in 0.5..12.0f64, r in 0.05..1.5f64, t in 0.05..1.5f64) {
            let mut c = c1();
            c.params.h_inertia = h;
            c.params.droop_r = r;
            c.params.governor_t = t;
            if let Ok(v) = validate_config(c) {
                let again = validate_config(v.config().clone()).unwrap();
                prop_assert_eq!(again, v);
            }
        }
    }
}
