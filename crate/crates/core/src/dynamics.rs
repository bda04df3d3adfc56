//! Discrete-time centre-of-inertia frequency dynamics with governor,
//! load-shedding and ROCOF relays.
//!
//! Per step `n -> n+1` the engine
//! 1. reconstructs `f_n` from `Δf_n`,
//! 2. evaluates LS relays on `f_n`,
//! 3. evaluates ROCOF relays on the M-step average slope ending at `n`,
//! 4. advances the governor and the frequency deviation using the
//!    cumulative shed/tripped totals for `n+1`,
//! 5. pushes `Δf_{n+1}` into the ROCOF window.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::grid::{
    GeneratorRelay, GridParams, InertiaMode, LoadRelay, RelayMode, ShedSign, ValidatedGridConfig,
};

/// Floor on the surviving-generation share used when inertia is rescaled
/// after trips.
pub const MIN_INERTIA_SHARE: f64 = 0.05;

/// Setpoint change perceived by the control center. Once applied at
/// `attack_step` it persists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSignal {
    pub dp_a: f64,
    pub attack_step: usize,
}

impl AttackSignal {
    pub fn new(dp_a: f64, attack_step: usize) -> Self {
        AttackSignal { dp_a, attack_step }
    }

    pub fn none() -> Self {
        AttackSignal { dp_a: 0.0, attack_step: 0 }
    }

    /// Injection in effect at step `n`.
    pub fn effective(&self, n: usize) -> f64 {
        if n >= self.attack_step {
            self.dp_a
        } else {
            0.0
        }
    }
}

/// The last `M + 1` per-unit frequency deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyWindow {
    window: usize,
    samples: VecDeque<f64>,
}

impl FrequencyWindow {
    pub fn new(window: usize) -> Self {
        FrequencyWindow {
            window,
            samples: VecDeque::with_capacity(window + 1),
        }
    }

    /// Builds a window from absolute frequencies in Hz, oldest first.
    /// Only the last `window + 1` samples are kept.
    pub fn from_hz(samples_hz: &[f64], params: &GridParams) -> Self {
        let mut w = FrequencyWindow::new(params.rocof_window_m);
        for &f in samples_hz {
            w.push(f / params.f_nominal - 1.0);
        }
        w
    }

    pub fn push(&mut self, delta_f: f64) {
        if self.samples.len() == self.window + 1 {
            self.samples.pop_front();
        }
        self.samples.push_back(delta_f);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.samples.len() == self.window + 1
    }

    pub fn samples(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().copied()
    }
}

/// M-step mean of the per-step frequency increments ending at the newest
/// sample, in Hz/s. `None` until the window holds `M + 1` samples.
///
/// The mean of increments telescopes to `(f_n - f_{n-M}) / (M·Δt)`.
pub fn rocof(window: &FrequencyWindow, params: &GridParams) -> Option<f64> {
    if !window.is_full() {
        return None;
    }
    let newest = *window.samples.back()?;
    let oldest = *window.samples.front()?;
    let m = params.rocof_window_m as f64;
    Some(params.f_nominal * (newest - oldest) / (m * params.dt))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelayKind {
    #[serde(rename = "ROCOF_TRIP")]
    RocofTrip,
    #[serde(rename = "LS_SHED")]
    LsShed,
}

impl RelayKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RelayKind::RocofTrip => "ROCOF_TRIP",
            RelayKind::LsShed => "LS_SHED",
        }
    }
}

impl fmt::Display for RelayKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayEvent {
    pub step: usize,
    pub relay_id: String,
    pub kind: RelayKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub n: usize,
    pub delta_f: f64,
    pub dp_gov: f64,
    pub dp_sh_cum: f64,
    pub dp_tg_cum: f64,
    pub freq_history: FrequencyWindow,
    pub gen_latches: Vec<bool>,
    pub load_latches: Vec<bool>,
}

impl SystemState {
    /// Balanced pre-attack grid: zero deviation, idle governor, no relay
    /// has operated.
    pub fn equilibrium(config: &ValidatedGridConfig) -> Self {
        let mut freq_history = FrequencyWindow::new(config.params().rocof_window_m);
        freq_history.push(0.0);
        SystemState {
            n: 0,
            delta_f: 0.0,
            dp_gov: 0.0,
            dp_sh_cum: 0.0,
            dp_tg_cum: 0.0,
            freq_history,
            gen_latches: vec![false; config.generators().len()],
            load_latches: vec![false; config.loads().len()],
        }
    }

    pub fn frequency_hz(&self, params: &GridParams) -> f64 {
        params.f_nominal * (1.0 + self.delta_f)
    }
}

/// Governor output for step `n+1`:
/// `ΔP^gov_n + (Δt/T)·(−Δf_n/R − ΔP^gov_n)`.
pub fn governor_step(state: &SystemState, params: &GridParams) -> f64 {
    state.dp_gov + params.dt / params.governor_t * (-state.delta_f / params.droop_r - state.dp_gov)
}

/// Frequency deviation for step `n+1`.
///
/// `dp_tg_next` always lowers frequency. `dp_sh_next` raises it under
/// [`ShedSign::Physical`] and lowers it under [`ShedSign::Literal`].
pub fn frequency_step(
    state: &SystemState,
    params: &GridParams,
    dp_a_effective: f64,
    dp_tg_next: f64,
    dp_sh_next: f64,
    shed_sign: ShedSign,
) -> f64 {
    let GridParams {
        h_inertia: h,
        droop_r: r,
        governor_t: t,
        dt,
        ..
    } = *params;
    let shed = match shed_sign {
        ShedSign::Physical => dp_sh_next,
        ShedSign::Literal => -dp_sh_next,
    };
    dt / (4.0 * h)
        * (state.dp_gov * (2.0 - dt / t) - 2.0 * dp_a_effective
            - state.delta_f * (dt / (r * t) - 4.0 * h / dt)
            - dp_tg_next
            + shed)
}

/// Increment produced by one relay pass, with the events it generated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelayOutcome {
    pub increment: f64,
    pub events: Vec<RelayEvent>,
}

/// Under-frequency load shedding at step `step` given `f_n` in Hz.
pub fn eval_ls_relays(
    f_hz: f64,
    loads: &[LoadRelay],
    latches: &mut [bool],
    mode: RelayMode,
    step: usize,
) -> RelayOutcome {
    let mut out = RelayOutcome::default();
    for (relay, latched) in loads.iter().zip(latches.iter_mut()) {
        if f_hz > relay.underfreq_threshold {
            continue;
        }
        if mode == RelayMode::Latched && *latched {
            continue;
        }
        *latched = true;
        out.increment += relay.p_sh;
        out.events.push(RelayEvent {
            step,
            relay_id: relay.id.clone(),
            kind: RelayKind::LsShed,
        });
    }
    out
}

/// ROCOF tripping on `|ḟ_n| >= threshold`. Events are ordered by
/// ascending threshold, ties by roster position.
pub fn eval_rocof_relays(
    rocof_hz_per_s: f64,
    gens: &[GeneratorRelay],
    latches: &mut [bool],
    mode: RelayMode,
    step: usize,
) -> RelayOutcome {
    let mut out = RelayOutcome::default();
    let magnitude = rocof_hz_per_s.abs();
    let mut order: Vec<usize> = (0..gens.len()).collect();
    order.sort_by(|&a, &b| gens[a].rocof_threshold.total_cmp(&gens[b].rocof_threshold));
    for i in order {
        let relay = &gens[i];
        if magnitude < relay.rocof_threshold {
            continue;
        }
        if mode == RelayMode::Latched && latches[i] {
            continue;
        }
        latches[i] = true;
        out.increment += relay.p_tg;
        out.events.push(RelayEvent {
            step,
            relay_id: relay.id.clone(),
            kind: RelayKind::RocofTrip,
        });
    }
    out
}

/// Observable quantities at step `n`, before the state advances.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub n: usize,
    pub t: f64,
    pub f_hz: f64,
    pub delta_f_pu: f64,
    pub rocof: Option<f64>,
    pub dp_gov: f64,
    pub dp_sh_cum: f64,
    pub dp_tg_cum: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimTrace {
    pub rows: Vec<TraceRow>,
    pub events: Vec<RelayEvent>,
}

impl SimTrace {
    pub fn first_event(&self) -> Option<&RelayEvent> {
        self.events.first()
    }

    pub fn events_at(&self, step: usize) -> impl Iterator<Item = &RelayEvent> {
        self.events.iter().filter(move |e| e.step == step)
    }
}

struct Observation {
    row: TraceRow,
    events: Vec<RelayEvent>,
}

/// Relay pass at the current step. Updates latches and cumulative totals
/// so that `state.dp_*_cum` hold the `n+1` values afterwards; the
/// returned row carries the step-`n` values.
fn observe(state: &mut SystemState, config: &ValidatedGridConfig) -> Observation {
    let params = config.params();
    let mode = config.engine().relay_mode;
    let f_hz = state.frequency_hz(params);
    let rocof_now = rocof(&state.freq_history, params);
    let row = TraceRow {
        n: state.n,
        t: state.n as f64 * params.dt,
        f_hz,
        delta_f_pu: state.delta_f,
        rocof: rocof_now,
        dp_gov: state.dp_gov,
        dp_sh_cum: state.dp_sh_cum,
        dp_tg_cum: state.dp_tg_cum,
    };

    let ls = eval_ls_relays(f_hz, config.loads(), &mut state.load_latches, mode, state.n);
    let mut events = ls.events;
    state.dp_sh_cum += ls.increment;

    if let Some(value) = rocof_now {
        let trips = eval_rocof_relays(value, config.generators(), &mut state.gen_latches, mode, state.n);
        events.extend(trips.events);
        state.dp_tg_cum += trips.increment;
    }
    Observation { row, events }
}

fn effective_params(state: &SystemState, config: &ValidatedGridConfig) -> GridParams {
    let mut params = *config.params();
    if config.engine().inertia_mode == InertiaMode::RescaleBySurvivingGeneration {
        let total = config.config().total_generation();
        let share = ((total - state.dp_tg_cum) / total).clamp(MIN_INERTIA_SHARE, 1.0);
        params.h_inertia *= share;
    }
    params
}

/// Advances governor and frequency; expects `observe` to have run.
fn advance(state: &mut SystemState, config: &ValidatedGridConfig, attack: &AttackSignal) {
    let params = effective_params(state, config);
    let next_gov = governor_step(state, &params);
    let next_df = frequency_step(
        state,
        &params,
        attack.effective(state.n),
        state.dp_tg_cum,
        state.dp_sh_cum,
        config.engine().shed_sign,
    );
    state.dp_gov = next_gov;
    state.delta_f = next_df;
    state.freq_history.push(next_df);
    state.n += 1;
}

/// One step `n -> n+1`. Returns the next state together with the row
/// observed at `n` and the relay events that fired at `n`.
pub fn simulate_step(
    state: &SystemState,
    config: &ValidatedGridConfig,
    attack: &AttackSignal,
) -> (SystemState, TraceRow, Vec<RelayEvent>) {
    let mut next = state.clone();
    let obs = observe(&mut next, config);
    advance(&mut next, config, attack);
    (next, obs.row, obs.events)
}

fn check_horizon(config: &ValidatedGridConfig, horizon: usize) -> Result<(), SimError> {
    let window = config.params().rocof_window_m;
    if horizon < window || horizon == 0 {
        return Err(SimError::HorizonTooShort { horizon, window });
    }
    Ok(())
}

/// Runs `horizon` steps from equilibrium. Rows cover `n = 0..=horizon`;
/// relays are evaluated on every row, including the last.
pub fn simulate(
    config: &ValidatedGridConfig,
    attack: &AttackSignal,
    horizon: usize,
) -> Result<SimTrace, SimError> {
    check_horizon(config, horizon)?;
    let mut state = SystemState::equilibrium(config);
    let mut trace = SimTrace {
        rows: Vec::with_capacity(horizon + 1),
        events: Vec::new(),
    };
    for n in 0..=horizon {
        let obs = observe(&mut state, config);
        trace.rows.push(obs.row);
        trace.events.extend(obs.events);
        if n < horizon {
            advance(&mut state, config, attack);
        }
    }
    Ok(trace)
}

/// Same stepping as [`simulate`] without recording a trace; stops at the
/// first event accepted by `matches`.
pub fn first_event_matching<F>(
    config: &ValidatedGridConfig,
    attack: &AttackSignal,
    horizon: usize,
    mut matches: F,
) -> Result<Option<RelayEvent>, SimError>
where
    F: FnMut(&RelayEvent) -> bool,
{
    check_horizon(config, horizon)?;
    let mut state = SystemState::equilibrium(config);
    for n in 0..=horizon {
        let obs = observe(&mut state, config);
        if let Some(hit) = obs.events.into_iter().find(|e| matches(e)) {
            return Ok(Some(hit));
        }
        if n < horizon {
            advance(&mut state, config, attack);
        }
    }
    Ok(None)
}
