//! Frequency dynamics, protective relays and false-relay-operation attack
//! synthesis for a centre-of-inertia grid model.
//!
//! * [`grid`]: static parameters, relay rosters, attacker capability.
//! * [`dynamics`]: governor/frequency recursion with LS and ROCOF relays.
//! * [`synth`]: feasibility, minimal-attack search and solver adapters.
//! * [`sweep`]: parameter sweeps and trend aggregation.
//! * [`io`]: JSON/CSV file formats.

pub mod dynamics;
pub mod error;
pub mod grid;
pub mod io;
pub mod sweep;
pub mod synth;

pub use dynamics::{simulate, AttackSignal, RelayEvent, RelayKind, SimTrace, SystemState};
pub use error::{ConfigError, IoError, SimError, SynthError};
pub use grid::{capability_bound, validate_config, GridConfig, GridParams, ValidatedGridConfig};
pub use synth::{
    feasibility, probe_monotonicity, synthesize_exhaustive, synthesize_min_attack, AttackGoal,
    FeasibilityOutcome, InjectionSign, TargetKind,
};
