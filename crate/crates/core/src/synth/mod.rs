//! False-relay-operation attack synthesis.
//!
//! With the attack step fixed, the only free variable is the injection
//! magnitude, so feasibility is decided by replaying the deterministic
//! simulator. The minimal attack is located by bisection between the
//! largest known-infeasible and smallest known-feasible magnitudes, after
//! a probe has checked that feasibility is monotone for the instance.

pub mod solver;

use serde::{Deserialize, Serialize};

use crate::dynamics::{first_event_matching, simulate, AttackSignal, RelayEvent, RelayKind, SimTrace};
use crate::error::SynthError;
use crate::grid::ValidatedGridConfig;

pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_PROBE_SAMPLES: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Any,
    RocofOnly,
    LsOnly,
    Specific(String),
}

impl TargetKind {
    pub fn matches(&self, event: &RelayEvent) -> bool {
        match self {
            TargetKind::Any => true,
            TargetKind::RocofOnly => event.kind == RelayKind::RocofTrip,
            TargetKind::LsOnly => event.kind == RelayKind::LsShed,
            TargetKind::Specific(id) => event.relay_id == *id,
        }
    }
}

/// Direction of the perceived generation change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionSign {
    Positive,
    Negative,
    Either,
}

impl InjectionSign {
    /// Signs to search, positive first.
    pub fn directions(self) -> &'static [f64] {
        match self {
            InjectionSign::Positive => &[1.0],
            InjectionSign::Negative => &[-1.0],
            InjectionSign::Either => &[1.0, -1.0],
        }
    }

    pub fn admits(self, dp_a: f64) -> bool {
        match self {
            InjectionSign::Positive => dp_a >= 0.0,
            InjectionSign::Negative => dp_a <= 0.0,
            InjectionSign::Either => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackGoal {
    pub target: TargetKind,
    pub horizon: usize,
    pub sign: InjectionSign,
    #[serde(default)]
    pub attack_step: usize,
}

impl AttackGoal {
    pub fn new(target: TargetKind, horizon: usize) -> Self {
        AttackGoal {
            target,
            horizon,
            sign: InjectionSign::Either,
            attack_step: 0,
        }
    }

    pub fn with_sign(mut self, sign: InjectionSign) -> Self {
        self.sign = sign;
        self
    }

    fn check(&self, config: &ValidatedGridConfig) -> Result<(), SynthError> {
        let m = config.params().rocof_window_m;
        if self.horizon < m {
            return Err(SynthError::InvalidArgument(format!(
                "goal horizon {} is shorter than the ROCOF window {m}",
                self.horizon
            )));
        }
        if let TargetKind::Specific(id) = &self.target {
            let known = config.generators().iter().any(|g| &g.id == id)
                || config.loads().iter().any(|l| &l.id == id);
            if !known {
                return Err(SynthError::InvalidArgument(format!("unknown relay `{id}`")));
            }
        }
        Ok(())
    }
}

/// Which relay falsely operated, and when.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub relay_id: String,
    pub kind: RelayKind,
    pub trip_step: usize,
}

impl From<RelayEvent> for AttackOutcome {
    fn from(e: RelayEvent) -> Self {
        AttackOutcome {
            relay_id: e.relay_id,
            kind: e.kind,
            trip_step: e.step,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackVector {
    pub dp_a: f64,
    pub attack_step: usize,
    pub outcome: AttackOutcome,
    pub trace: SimTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeasibilityOutcome {
    Success(AttackVector),
    NoAttackExists,
}

impl FeasibilityOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, FeasibilityOutcome::Success(_))
    }

    pub fn vector(&self) -> Option<&AttackVector> {
        match self {
            FeasibilityOutcome::Success(v) => Some(v),
            FeasibilityOutcome::NoAttackExists => None,
        }
    }
}

fn check_capability(config: &ValidatedGridConfig, dp_a: f64) -> Result<(), SynthError> {
    let bound = config.capability_bound();
    if dp_a.abs() > bound || dp_a.is_nan() {
        return Err(SynthError::CapabilityExceeded { dp_a, bound });
    }
    Ok(())
}

/// First event matching the goal for injection `dp_a`, without a trace.
pub(crate) fn first_hit(
    config: &ValidatedGridConfig,
    dp_a: f64,
    goal: &AttackGoal,
) -> Result<Option<RelayEvent>, SynthError> {
    let attack = AttackSignal::new(dp_a, goal.attack_step);
    Ok(first_event_matching(config, &attack, goal.horizon, |e| goal.target.matches(e))?)
}

/// Replays injection `dp_a` over the goal horizon. SUCCESS iff an event
/// matching the goal's target occurs; the first such event is the outcome.
pub fn feasibility(
    config: &ValidatedGridConfig,
    dp_a: f64,
    goal: &AttackGoal,
) -> Result<FeasibilityOutcome, SynthError> {
    check_capability(config, dp_a)?;
    goal.check(config)?;
    let attack = AttackSignal::new(dp_a, goal.attack_step);
    let trace = simulate(config, &attack, goal.horizon)?;
    let hit = trace.events.iter().find(|e| goal.target.matches(e)).cloned();
    Ok(match hit {
        Some(event) => FeasibilityOutcome::Success(AttackVector {
            dp_a,
            attack_step: goal.attack_step,
            outcome: event.into(),
            trace,
        }),
        None => FeasibilityOutcome::NoAttackExists,
    })
}

/// Where the feasible magnitudes start along one injection direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    /// The zero injection already satisfies the goal.
    AtZero,
    /// `lo` infeasible, `hi` feasible, adjacent samples.
    Bracket { lo: f64, hi: f64 },
    NeverFeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionProbe {
    /// +1 or -1.
    pub direction: f64,
    pub magnitudes: Vec<f64>,
    pub feasible: Vec<bool>,
    /// The feasible samples form an up-set.
    pub monotone: bool,
    pub boundary: Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub directions: Vec<DirectionProbe>,
}

impl MonotonicityReport {
    pub fn monotone(&self) -> bool {
        self.directions.iter().all(|d| d.monotone)
    }
}

fn probe_direction(
    config: &ValidatedGridConfig,
    goal: &AttackGoal,
    samples: usize,
    direction: f64,
) -> Result<DirectionProbe, SynthError> {
    let bound = config.capability_bound();
    let magnitudes: Vec<f64> = (0..samples)
        .map(|k| {
            if k + 1 == samples {
                bound
            } else {
                bound * k as f64 / (samples - 1) as f64
            }
        })
        .collect();
    let feasible = magnitudes
        .iter()
        .map(|&m| first_hit(config, direction * m, goal).map(|h| h.is_some()))
        .collect::<Result<Vec<_>, _>>()?;

    let first = feasible.iter().position(|&f| f);
    let monotone = match first {
        Some(k) => feasible[k..].iter().all(|&f| f),
        None => true,
    };
    let boundary = match first {
        None => Boundary::NeverFeasible,
        Some(0) => Boundary::AtZero,
        Some(k) => Boundary::Bracket {
            lo: magnitudes[k - 1],
            hi: magnitudes[k],
        },
    };
    Ok(DirectionProbe {
        direction,
        magnitudes,
        feasible,
        monotone,
        boundary,
    })
}

/// Evaluates feasibility at `samples` equally spaced magnitudes in
/// `[0, capability_bound]` for each admissible direction.
pub fn probe_monotonicity(
    config: &ValidatedGridConfig,
    goal: &AttackGoal,
    samples: usize,
) -> Result<MonotonicityReport, SynthError> {
    if samples < 2 {
        return Err(SynthError::InvalidArgument(format!("need at least 2 samples, got {samples}")));
    }
    goal.check(config)?;
    let directions = goal
        .sign
        .directions()
        .iter()
        .map(|&d| probe_direction(config, goal, samples, d))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MonotonicityReport { directions })
}

fn bisect(
    config: &ValidatedGridConfig,
    goal: &AttackGoal,
    direction: f64,
    mut lo: f64,
    mut hi: f64,
    tolerance: f64,
) -> Result<f64, SynthError> {
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if first_hit(config, direction * mid, goal)?.is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Smallest-magnitude injection that satisfies `goal` within the
/// attacker's capability, to within `tolerance`.
///
/// Refuses with [`SynthError::NonMonotoneFeasibility`] when the probe finds
/// a feasible sample followed by an infeasible one.
pub fn synthesize_min_attack(
    config: &ValidatedGridConfig,
    goal: &AttackGoal,
    tolerance: f64,
) -> Result<FeasibilityOutcome, SynthError> {
    synthesize_min_attack_with(config, goal, tolerance, DEFAULT_PROBE_SAMPLES)
}

pub fn synthesize_min_attack_with(
    config: &ValidatedGridConfig,
    goal: &AttackGoal,
    tolerance: f64,
    probe_samples: usize,
) -> Result<FeasibilityOutcome, SynthError> {
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(SynthError::InvalidArgument(format!("tolerance must be > 0, got {tolerance}")));
    }
    let report = probe_monotonicity(config, goal, probe_samples)?;
    let mut best: Option<f64> = None;
    for probe in &report.directions {
        if !probe.monotone {
            return Err(SynthError::NonMonotoneFeasibility {
                detail: format!(
                    "direction {:+}: feasible samples do not form an up-set",
                    probe.direction
                ),
            });
        }
        let magnitude = match probe.boundary {
            Boundary::NeverFeasible => continue,
            Boundary::AtZero => 0.0,
            Boundary::Bracket { lo, hi } => bisect(config, goal, probe.direction, lo, hi, tolerance)?,
        };
        let signed = probe.direction * magnitude;
        // strict comparison keeps the positive direction on ties
        if best.is_none_or(|b| magnitude < b.abs()) {
            best = Some(signed);
        }
    }
    match best {
        Some(dp_a) => feasibility(config, dp_a, goal),
        None => Ok(FeasibilityOutcome::NoAttackExists),
    }
}

/// Grid scan over `k · resolution` (plus the bound itself) in each
/// admissible direction; returns the smallest feasible magnitude. Sound
/// without any monotonicity assumption.
pub fn synthesize_exhaustive(
    config: &ValidatedGridConfig,
    goal: &AttackGoal,
    resolution: f64,
) -> Result<FeasibilityOutcome, SynthError> {
    if resolution.is_nan() || resolution <= 0.0 {
        return Err(SynthError::InvalidArgument(format!("resolution must be > 0, got {resolution}")));
    }
    goal.check(config)?;
    let bound = config.capability_bound();
    let steps = (bound / resolution).floor() as usize;
    let mut best: Option<f64> = None;
    for &direction in goal.sign.directions() {
        let grid = (0..=steps).map(|k| k as f64 * resolution).chain(std::iter::once(bound));
        for magnitude in grid {
            if magnitude > bound || best.is_some_and(|b| magnitude >= b.abs()) {
                break;
            }
            if first_hit(config, direction * magnitude, goal)?.is_some() {
                best = Some(direction * magnitude);
                break;
            }
        }
    }
    match best {
        Some(dp_a) => feasibility(config, dp_a, goal),
        None => Ok(FeasibilityOutcome::NoAttackExists),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{validate_config, AttackerCapability, GridConfig, GridParams};

    fn cfg(h: f64, kappa: f64) -> ValidatedGridConfig {
        validate_config(GridConfig::five_bus(
            GridParams::with_cycle_step(h, 0.2, 0.2, 6),
            AttackerCapability { toi: 0.02, ad: 0.2, der_total: 1.5, kappa },
        ))
        .unwrap()
    }

    fn any(h: usize) -> AttackGoal {
        AttackGoal::new(TargetKind::Any, h)
    }

    /// Independent boundary search: fine scan directly over the simulator.
    fn scan_boundary(config: &ValidatedGridConfig, goal: &AttackGoal, res: f64) -> Option<f64> {
        let bound = config.capability_bound();
        let mut k = 0usize;
        loop {
            let m = k as f64 * res;
            if m > bound {
                return None;
            }
            let trace = simulate(config, &AttackSignal::new(m, 0), goal.horizon).unwrap();
            if trace.events.iter().any(|e| goal.target.matches(e)) {
                return Some(m);
            }
            k += 1;
        }
    }

    #[test]
    fn zero_injection_is_infeasible() {
        let c = cfg(2.0, 60.0);
        assert_eq!(feasibility(&c, 0.0, &any(60)).unwrap(), FeasibilityOutcome::NoAttackExists);
    }

    #[test]
    fn c1_injection_trips_bus4_relay() {
        let c = cfg(2.0, 60.0);
        let out = feasibility(&c, 0.322, &any(12)).unwrap();
        let v = out.vector().unwrap();
        assert_eq!(v.outcome.relay_id, "G4");
        assert_eq!(v.outcome.kind, RelayKind::RocofTrip);
    }

    #[test]
    fn capability_is_enforced() {
        let c = cfg(2.0, 1.0);
        assert!(matches!(
            feasibility(&c, 0.322, &any(12)),
            Err(SynthError::CapabilityExceeded { .. })
        ));
    }

    #[test]
    fn below_scanned_boundary_is_infeasible() {
        let c = cfg(2.0, 60.0);
        let goal = any(12);
        let b = scan_boundary(&c, &goal, 1e-4).unwrap();
        assert!(feasibility(&c, b, &goal).unwrap().is_success());
        assert!(!feasibility(&c, b - 1e-4, &goal).unwrap().is_success());
    }

    #[test]
    fn probe_brackets_boundary() {
        let c = cfg(2.0, 60.0);
        let goal = any(12).with_sign(InjectionSign::Positive);
        let report = probe_monotonicity(&c, &goal, 64).unwrap();
        assert!(report.monotone());
        let b = scan_boundary(&c, &goal, 1e-5).unwrap();
        match report.directions[0].boundary {
            Boundary::Bracket { lo, hi } => {
                assert!(lo < b && b <= hi + 1e-5, "{lo} {b} {hi}");
                assert!(hi <= 0.322);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn probe_without_relays_is_vacuously_monotone() {
        let c = cfg(2.0, 0.001);
        let report = probe_monotonicity(&c, &any(12), 8).unwrap();
        assert!(report.monotone());
        assert!(report
            .directions
            .iter()
            .all(|d| d.boundary == Boundary::NeverFeasible));
        assert!(probe_monotonicity(&c, &any(12), 1).is_err());
    }

    #[test]
    fn hair_trigger_ls_relay_gives_boundary_near_zero() {
        let mut raw = cfg(2.0, 60.0).into_inner();
        raw.loads[0].underfreq_threshold = 59.9999;
        let c = validate_config(raw).unwrap();
        let goal = AttackGoal::new(TargetKind::LsOnly, 12).with_sign(InjectionSign::Positive);
        let report = probe_monotonicity(&c, &goal, 64).unwrap();
        assert!(report.monotone());
        let p = &report.directions[0];
        assert!(!p.feasible[0]);
        assert!(p.feasible[1]);
    }

    #[test]
    fn minimal_attack_matches_scan() {
        let c = cfg(2.0, 60.0);
        let goal = any(12);
        let out = synthesize_min_attack(&c, &goal, 1e-4).unwrap();
        let v = out.vector().unwrap();
        assert!(v.dp_a > 0.0, "positive direction wins ties");
        assert!(v.dp_a <= 0.322);
        assert_eq!(v.outcome.relay_id, "G4");
        let b = scan_boundary(&c, &goal, 1e-4).unwrap();
        assert!((v.dp_a - b).abs() <= 1e-4, "{} vs {b}", v.dp_a);
    }

    #[test]
    fn negative_direction_trips_on_rising_frequency() {
        let c = cfg(2.0, 60.0);
        let goal = any(12).with_sign(InjectionSign::Negative);
        let v = synthesize_min_attack(&c, &goal, 1e-4).unwrap();
        let v = v.vector().unwrap();
        assert!(v.dp_a < 0.0);
        assert_eq!(v.outcome.kind, RelayKind::RocofTrip);
    }

    #[test]
    fn zero_capability_has_no_attack() {
        let c = cfg(2.0, 0.0);
        assert_eq!(
            synthesize_min_attack(&c, &any(12), 1e-4).unwrap(),
            FeasibilityOutcome::NoAttackExists
        );
        assert_eq!(
            synthesize_exhaustive(&c, &any(12), 1e-4).unwrap(),
            FeasibilityOutcome::NoAttackExists
        );
    }

    #[test]
    fn exhaustive_agrees_with_bisection() {
        for h in [2.0, 4.0, 6.0] {
            let c = cfg(h, 40.0);
            let goal = any(12);
            let a = synthesize_min_attack(&c, &goal, 1e-4).unwrap();
            let b = synthesize_exhaustive(&c, &goal, 1e-4).unwrap();
            assert_eq!(a.is_success(), b.is_success());
            if let (Some(x), Some(y)) = (a.vector(), b.vector()) {
                assert!((x.dp_a - y.dp_a).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn specific_target_must_exist() {
        let c = cfg(2.0, 60.0);
        let goal = AttackGoal::new(TargetKind::Specific("nope".into()), 12);
        assert!(matches!(feasibility(&c, 0.1, &goal), Err(SynthError::InvalidArgument(_))));
        let goal = AttackGoal::new(TargetKind::Specific("G5".into()), 12);
        let v = synthesize_min_attack(&c, &goal, 1e-4).unwrap();
        assert_eq!(v.vector().unwrap().outcome.relay_id, "G5");
    }

    #[test]
    fn rejects_bad_tolerance_and_horizon() {
        let c = cfg(2.0, 60.0);
        assert!(synthesize_min_attack(&c, &any(12), 0.0).is_err());
        assert!(matches!(
            synthesize_min_attack(&c, &any(3), 1e-4),
            Err(SynthError::InvalidArgument(_))
        ));
    }
}
