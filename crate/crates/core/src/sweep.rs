//! Parameter sweeps over (H, R, T, ToI, AD) and the success-trend
//! aggregates derived from them.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::RelayKind;
use crate::error::SynthError;
use crate::grid::{validate_config, GridConfig, GridParams};
use crate::synth::{
    synthesize_exhaustive, synthesize_min_attack, AttackGoal, FeasibilityOutcome, TargetKind,
    DEFAULT_TOLERANCE,
};

/// Case-study value lists.
pub const DEFAULT_H_S: [f64; 5] = [2.0, 4.0, 6.0, 8.0, 10.0];
pub const DEFAULT_R_PU: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];
pub const DEFAULT_T_S: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];
pub const DEFAULT_TOI_PCT: [f64; 5] = [2.0, 4.0, 6.0, 8.0, 10.0];
pub const DEFAULT_AD_PCT: [f64; 5] = [20.0, 40.0, 60.0, 80.0, 100.0];

/// Slack on bucket success rates when judging weak monotonicity.
pub const TREND_SLACK: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepMode {
    Cartesian,
    Random { count: usize, seed: u64 },
}

impl Default for SweepMode {
    fn default() -> Self {
        SweepMode::Random { count: 10_000, seed: 1 }
    }
}

fn default_h() -> Vec<f64> {
    DEFAULT_H_S.to_vec()
}
fn default_r() -> Vec<f64> {
    DEFAULT_R_PU.to_vec()
}
fn default_t() -> Vec<f64> {
    DEFAULT_T_S.to_vec()
}
fn default_toi() -> Vec<f64> {
    DEFAULT_TOI_PCT.to_vec()
}
fn default_ad() -> Vec<f64> {
    DEFAULT_AD_PCT.to_vec()
}
fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

/// Default sweep goal: any false relay operation within two ROCOF windows.
pub fn default_goal(params: &GridParams) -> AttackGoal {
    AttackGoal::new(TargetKind::Any, 2 * params.rocof_window_m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    #[serde(default = "default_h")]
    pub h_s: Vec<f64>,
    #[serde(default = "default_r")]
    pub r_pu: Vec<f64>,
    #[serde(default = "default_t")]
    pub t_s: Vec<f64>,
    #[serde(default = "default_toi")]
    pub toi_pct: Vec<f64>,
    #[serde(default = "default_ad")]
    pub ad_pct: Vec<f64>,
    #[serde(default)]
    pub mode: SweepMode,
    pub base_config: GridConfig,
    #[serde(default)]
    pub goal: Option<AttackGoal>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl SweepSpec {
    /// Case-study value lists over `base`, with the default goal and tolerance.
    pub fn case_study(base: GridConfig, mode: SweepMode) -> Self {
        SweepSpec {
            h_s: default_h(),
            r_pu: default_r(),
            t_s: default_t(),
            toi_pct: default_toi(),
            ad_pct: default_ad(),
            mode,
            base_config: base,
            goal: None,
            tolerance: DEFAULT_TOLERANCE,
        }
    }

    pub fn goal(&self) -> AttackGoal {
        self.goal.clone().unwrap_or_else(|| default_goal(&self.base_config.params))
    }

    pub fn check(&self) -> Result<(), String> {
        let lists = [
            ("h_s", &self.h_s),
            ("r_pu", &self.r_pu),
            ("t_s", &self.t_s),
            ("toi_pct", &self.toi_pct),
            ("ad_pct", &self.ad_pct),
        ];
        for (name, list) in lists {
            if list.is_empty() {
                return Err(format!("value list `{name}` is empty"));
            }
            if list.iter().any(|v| !v.is_finite()) {
                return Err(format!("value list `{name}` contains a non-finite value"));
            }
        }
        for (name, list) in [("toi_pct", &self.toi_pct), ("ad_pct", &self.ad_pct)] {
            if list.iter().any(|v| !(0.0..=100.0).contains(v)) {
                return Err(format!("`{name}` values must lie in [0, 100]"));
            }
        }
        if let SweepMode::Random { count: 0, .. } = self.mode {
            return Err("random sweep count must be >= 1".into());
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(format!("tolerance must be > 0, got {}", self.tolerance));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Combination {
    pub combo_id: usize,
    pub h_s: f64,
    pub r_pu: f64,
    pub t_s: f64,
    pub toi_pct: f64,
    pub ad_pct: f64,
    /// Positions in the spec's value lists.
    pub index: [usize; 5],
}

fn combination(spec: &SweepSpec, combo_id: usize, index: [usize; 5]) -> Combination {
    Combination {
        combo_id,
        h_s: spec.h_s[index[0]],
        r_pu: spec.r_pu[index[1]],
        t_s: spec.t_s[index[2]],
        toi_pct: spec.toi_pct[index[3]],
        ad_pct: spec.ad_pct[index[4]],
        index,
    }
}

/// Cartesian mode: full product, H outermost, AD innermost.
/// Random mode: `count` seeded uniform draws with replacement.
pub fn generate_combinations(spec: &SweepSpec) -> Vec<Combination> {
    let sizes = [
        spec.h_s.len(),
        spec.r_pu.len(),
        spec.t_s.len(),
        spec.toi_pct.len(),
        spec.ad_pct.len(),
    ];
    match spec.mode {
        SweepMode::Cartesian => {
            let total: usize = sizes.iter().product();
            (0..total)
                .map(|id| {
                    let mut rest = id;
                    let mut index = [0usize; 5];
                    for k in (0..5).rev() {
                        index[k] = rest % sizes[k];
                        rest /= sizes[k];
                    }
                    combination(spec, id, index)
                })
                .collect()
        }
        SweepMode::Random { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|id| {
                    let index = sizes.map(|n| rng.gen_range(0..n));
                    combination(spec, id, index)
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AttackType {
    Rocof,
    Ls,
    None,
}

impl AttackType {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackType::Rocof => "ROCOF",
            AttackType::Ls => "LS",
            AttackType::None => "NONE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ROCOF" => Some(AttackType::Rocof),
            "LS" => Some(AttackType::Ls),
            "NONE" => Some(AttackType::None),
            _ => None,
        }
    }
}

/// Kind of the first relay event in the winning trace.
pub fn classify_attack(outcome: &FeasibilityOutcome) -> AttackType {
    match outcome.vector().and_then(|v| v.trace.first_event()) {
        Some(e) => match e.kind {
            RelayKind::RocofTrip => AttackType::Rocof,
            RelayKind::LsShed => AttackType::Ls,
        },
        None => AttackType::None,
    }
}

/// How a record's outcome was obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum RecordStatus {
    Ok,
    /// The probe found non-monotone feasibility; the grid scan decided.
    ExhaustiveFallback,
    Error(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub combo_id: usize,
    pub h_s: f64,
    pub r_pu: f64,
    pub t_s: f64,
    pub toi_pct: f64,
    pub ad_pct: f64,
    pub success: bool,
    pub attack_type: AttackType,
    pub min_dp_a: Option<f64>,
    pub trip_step: Option<usize>,
    pub status: RecordStatus,
}

/// Base config with the combination's H, R, T and capability applied.
pub fn instantiate(base: &GridConfig, combo: &Combination) -> GridConfig {
    let mut cfg = base.clone();
    cfg.params.h_inertia = combo.h_s;
    cfg.params.droop_r = combo.r_pu;
    cfg.params.governor_t = combo.t_s;
    cfg.capability.toi = combo.toi_pct / 100.0;
    cfg.capability.ad = combo.ad_pct / 100.0;
    cfg
}

struct Evaluated {
    outcome: FeasibilityOutcome,
    status: RecordStatus,
}

fn evaluate(spec: &SweepSpec, goal: &AttackGoal, combo: &Combination) -> Evaluated {
    let failed = |msg: String| Evaluated {
        outcome: FeasibilityOutcome::NoAttackExists,
        status: RecordStatus::Error(msg),
    };
    let cfg = match validate_config(instantiate(&spec.base_config, combo)) {
        Ok(c) => c,
        Err(e) => return failed(e.to_string()),
    };
    match synthesize_min_attack(&cfg, goal, spec.tolerance) {
        Ok(outcome) => Evaluated {
            outcome,
            status: RecordStatus::Ok,
        },
        Err(SynthError::NonMonotoneFeasibility { .. }) => {
            match synthesize_exhaustive(&cfg, goal, spec.tolerance) {
                Ok(outcome) => Evaluated {
                    outcome,
                    status: RecordStatus::ExhaustiveFallback,
                },
                Err(e) => failed(e.to_string()),
            }
        }
        Err(e) => failed(e.to_string()),
    }
}

fn record(combo: &Combination, ev: &Evaluated) -> SweepRecord {
    let vector = ev.outcome.vector();
    SweepRecord {
        combo_id: combo.combo_id,
        h_s: combo.h_s,
        r_pu: combo.r_pu,
        t_s: combo.t_s,
        toi_pct: combo.toi_pct,
        ad_pct: combo.ad_pct,
        success: vector.is_some(),
        attack_type: classify_attack(&ev.outcome),
        min_dp_a: vector.map(|v| v.dp_a),
        trip_step: vector.map(|v| v.outcome.trip_step),
        status: ev.status.clone(),
    }
}

/// Distinct parameter tuples, in order of first appearance.
fn distinct(combos: &[Combination]) -> (Vec<Combination>, Vec<usize>) {
    let mut seen: HashMap<[usize; 5], usize> = HashMap::new();
    let mut unique = Vec::new();
    let slots = combos
        .iter()
        .map(|c| {
            *seen.entry(c.index).or_insert_with(|| {
                unique.push(*c);
                unique.len() - 1
            })
        })
        .collect();
    (unique, slots)
}

fn assemble(combos: &[Combination], slots: &[usize], evaluated: &[Evaluated]) -> Vec<SweepRecord> {
    combos
        .iter()
        .zip(slots)
        .map(|(c, &slot)| record(c, &evaluated[slot]))
        .collect()
}

/// Single-threaded sweep. Repeated parameter tuples are solved once.
pub fn run_sweep_sequential(spec: &SweepSpec) -> Vec<SweepRecord> {
    let goal = spec.goal();
    let combos = generate_combinations(spec);
    let (unique, slots) = distinct(&combos);
    let evaluated: Vec<Evaluated> = unique.iter().map(|c| evaluate(spec, &goal, c)).collect();
    assemble(&combos, &slots, &evaluated)
}

#[cfg(feature = "parallel")]
pub fn run_sweep_parallel(spec: &SweepSpec) -> Vec<SweepRecord> {
    use rayon::prelude::*;
    let goal = spec.goal();
    let combos = generate_combinations(spec);
    let (unique, slots) = distinct(&combos);
    let evaluated: Vec<Evaluated> = unique.par_iter().map(|c| evaluate(spec, &goal, c)).collect();
    assemble(&combos, &slots, &evaluated)
}

/// Runs every combination and returns records ordered by `combo_id`.
/// Uses the global rayon pool when the `parallel` feature is enabled.
pub fn run_sweep(spec: &SweepSpec) -> Vec<SweepRecord> {
    #[cfg(feature = "parallel")]
    {
        run_sweep_parallel(spec)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_sweep_sequential(spec)
    }
}

/// As [`run_sweep`] on a dedicated pool of `workers` threads.
pub fn run_sweep_with_workers(spec: &SweepSpec, workers: usize) -> Vec<SweepRecord> {
    #[cfg(feature = "parallel")]
    {
        if workers > 1 {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                return pool.install(|| run_sweep_parallel(spec));
            }
        }
    }
    let _ = workers;
    run_sweep_sequential(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    H,
    R,
    T,
    Toi,
    Ad,
}

impl SweepParam {
    pub const ALL: [SweepParam; 5] = [SweepParam::H, SweepParam::R, SweepParam::T, SweepParam::Toi, SweepParam::Ad];

    pub fn value(self, r: &SweepRecord) -> f64 {
        match self {
            SweepParam::H => r.h_s,
            SweepParam::R => r.r_pu,
            SweepParam::T => r.t_s,
            SweepParam::Toi => r.toi_pct,
            SweepParam::Ad => r.ad_pct,
        }
    }

    /// Direction of the correlation reported for the case studies.
    pub fn expected(self) -> Trend {
        match self {
            SweepParam::H | SweepParam::R => Trend::Nonincreasing,
            SweepParam::T | SweepParam::Toi | SweepParam::Ad => Trend::Nondecreasing,
        }
    }

    pub fn column(self) -> &'static str {
        match self {
            SweepParam::H => "h_s",
            SweepParam::R => "r_pu",
            SweepParam::T => "t_s",
            SweepParam::Toi => "toi_pct",
            SweepParam::Ad => "ad_pct",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Nonincreasing,
    Nondecreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub value: f64,
    pub total: usize,
    pub successes: usize,
    pub rocof: usize,
    pub ls: usize,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    /// Largest rise (for a nonincreasing trend) or fall (nondecreasing) in
    /// success rate between any two buckets.
    Violated { excursion: f64 },
    InsufficientBuckets,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Violated { .. } => "violated",
            Verdict::InsufficientBuckets => "insufficient buckets",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTrend {
    pub param: SweepParam,
    pub expected: Trend,
    pub buckets: Vec<Bucket>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub total_records: usize,
    pub successes: usize,
    pub slack: f64,
    pub params: Vec<ParamTrend>,
}

impl TrendReport {
    pub fn param(&self, p: SweepParam) -> &ParamTrend {
        self.params
            .iter()
            .find(|t| t.param == p)
            .expect("every parameter is reported")
    }
}

fn buckets(records: &[SweepRecord], param: SweepParam) -> Vec<Bucket> {
    let mut values: Vec<f64> = records.iter().map(|r| param.value(r)).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    values
        .into_iter()
        .map(|value| {
            let mut b = Bucket {
                value,
                total: 0,
                successes: 0,
                rocof: 0,
                ls: 0,
                success_rate: 0.0,
            };
            for r in records.iter().filter(|r| param.value(r) == value) {
                b.total += 1;
                if r.success {
                    b.successes += 1;
                }
                match r.attack_type {
                    AttackType::Rocof => b.rocof += 1,
                    AttackType::Ls => b.ls += 1,
                    AttackType::None => {}
                }
            }
            b.success_rate = b.successes as f64 / b.total as f64;
            b
        })
        .collect()
}

/// Weak monotonicity over bucket success rates: for every pair of buckets
/// `i < j` the rate may move against `trend` by at most `slack`.
pub fn judge(buckets: &[Bucket], trend: Trend, slack: f64) -> Verdict {
    if buckets.len() < 2 {
        return Verdict::InsufficientBuckets;
    }
    let mut excursion: f64 = 0.0;
    for (i, a) in buckets.iter().enumerate() {
        for b in &buckets[i + 1..] {
            let against = match trend {
                Trend::Nonincreasing => b.success_rate - a.success_rate,
                Trend::Nondecreasing => a.success_rate - b.success_rate,
            };
            excursion = excursion.max(against);
        }
    }
    if excursion > slack {
        Verdict::Violated { excursion }
    } else {
        Verdict::Holds
    }
}

/// Success counts bucketed by each parameter's distinct values, with the
/// per-bucket attack-type split and a verdict against the reported
/// correlations. `None` for an empty record set.
pub fn trend_report(records: &[SweepRecord]) -> Option<TrendReport> {
    trend_report_with_slack(records, TREND_SLACK)
}

pub fn trend_report_with_slack(records: &[SweepRecord], slack: f64) -> Option<TrendReport> {
    if records.is_empty() {
        return None;
    }
    let params = SweepParam::ALL
        .iter()
        .map(|&param| {
            let buckets = buckets(records, param);
            let verdict = judge(&buckets, param.expected(), slack);
            ParamTrend {
                param,
                expected: param.expected(),
                buckets,
                verdict,
            }
        })
        .collect();
    Some(TrendReport {
        total_records: records.len(),
        successes: records.iter().filter(|r| r.success).count(),
        slack,
        params,
    })
}
