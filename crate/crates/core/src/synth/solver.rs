//! Backend-agnostic constraint-satisfaction front end.
//!
//! A [`ConstraintProblem`] is the bounded-horizon attack problem: step
//! recursions as equalities, the capability bound as inequalities and the
//! goal as a disjunction of relay-trigger conditions. Any backend may
//! answer it; every SAT answer is replayed through the simulator before it
//! is returned.

use std::fmt::Write as _;
use std::io::Write as _;
use std::process::{Command, Stdio};

use crate::dynamics::RelayKind;
use crate::error::SynthError;
use crate::grid::{InertiaMode, RelayMode, ShedSign, ValidatedGridConfig};

use super::{
    feasibility, synthesize_exhaustive, synthesize_min_attack_with, AttackGoal, FeasibilityOutcome,
    InjectionSign, TargetKind, DEFAULT_PROBE_SAMPLES, DEFAULT_TOLERANCE,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintProblem {
    pub config: ValidatedGridConfig,
    pub horizon: usize,
    pub attack_step: usize,
    pub sign: InjectionSign,
    /// Relay condition that must occur; `None` imposes no relay requirement.
    pub requirement: Option<TargetKind>,
}

impl ConstraintProblem {
    pub fn from_goal(config: ValidatedGridConfig, goal: &AttackGoal) -> Self {
        ConstraintProblem {
            config,
            horizon: goal.horizon,
            attack_step: goal.attack_step,
            sign: goal.sign,
            requirement: Some(goal.target.clone()),
        }
    }

    /// Goal used to replay assignments; `None` when no relay is required.
    pub fn goal(&self) -> Option<AttackGoal> {
        self.requirement.as_ref().map(|target| AttackGoal {
            target: target.clone(),
            horizon: self.horizon,
            sign: self.sign,
            attack_step: self.attack_step,
        })
    }

    pub fn capability_bound(&self) -> f64 {
        self.config.capability_bound()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub dp_a: f64,
    pub attack_step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverAnswer {
    Sat(Assignment),
    Unsat,
}

pub trait SolverBackend: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, problem: &ConstraintProblem) -> Result<SolverAnswer, SynthError>;
}

fn answer_from(outcome: FeasibilityOutcome) -> SolverAnswer {
    match outcome {
        FeasibilityOutcome::Success(v) => SolverAnswer::Sat(Assignment {
            dp_a: v.dp_a,
            attack_step: v.attack_step,
        }),
        FeasibilityOutcome::NoAttackExists => SolverAnswer::Unsat,
    }
}

/// Default backend: probe + bisection over the simulator.
#[derive(Debug, Clone)]
pub struct BisectionBackend {
    pub tolerance: f64,
    pub probe_samples: usize,
}

impl Default for BisectionBackend {
    fn default() -> Self {
        BisectionBackend {
            tolerance: DEFAULT_TOLERANCE,
            probe_samples: DEFAULT_PROBE_SAMPLES,
        }
    }
}

impl SolverBackend for BisectionBackend {
    fn name(&self) -> &str {
        "bisection"
    }

    fn solve(&self, problem: &ConstraintProblem) -> Result<SolverAnswer, SynthError> {
        match problem.goal() {
            None => Ok(SolverAnswer::Sat(Assignment {
                dp_a: 0.0,
                attack_step: problem.attack_step,
            })),
            Some(goal) => synthesize_min_attack_with(&problem.config, &goal, self.tolerance, self.probe_samples)
                .map(answer_from),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExhaustiveBackend {
    pub resolution: f64,
}

impl Default for ExhaustiveBackend {
    fn default() -> Self {
        ExhaustiveBackend {
            resolution: DEFAULT_TOLERANCE,
        }
    }
}

impl SolverBackend for ExhaustiveBackend {
    fn name(&self) -> &str {
        "exhaustive"
    }

    fn solve(&self, problem: &ConstraintProblem) -> Result<SolverAnswer, SynthError> {
        match problem.goal() {
            None => Ok(SolverAnswer::Sat(Assignment {
                dp_a: 0.0,
                attack_step: problem.attack_step,
            })),
            Some(goal) => synthesize_exhaustive(&problem.config, &goal, self.resolution).map(answer_from),
        }
    }
}

/// Solves with `backend` and checks the answer: a SAT assignment must lie
/// within the capability bound and direction, and must replay to a
/// matching relay event.
pub fn solve(problem: &ConstraintProblem, backend: &dyn SolverBackend) -> Result<SolverAnswer, SynthError> {
    let answer = backend.solve(problem)?;
    if let SolverAnswer::Sat(a) = answer {
        let mismatch = |why: String| SynthError::CertificateMismatch(format!("{}: {why}", backend.name()));
        if a.attack_step != problem.attack_step {
            return Err(mismatch(format!(
                "attack step {} differs from the fixed step {}",
                a.attack_step, problem.attack_step
            )));
        }
        if !problem.sign.admits(a.dp_a) {
            return Err(mismatch(format!("dp_a = {} has the wrong sign", a.dp_a)));
        }
        if let Some(goal) = problem.goal() {
            match feasibility(&problem.config, a.dp_a, &goal) {
                Ok(FeasibilityOutcome::Success(_)) => {}
                Ok(FeasibilityOutcome::NoAttackExists) => {
                    return Err(mismatch(format!("dp_a = {} triggers no matching relay", a.dp_a)))
                }
                Err(SynthError::CapabilityExceeded { dp_a, bound }) => {
                    return Err(mismatch(format!("dp_a = {dp_a} exceeds the bound {bound}")))
                }
                Err(e) => return Err(e),
            }
        } else if a.dp_a.abs() > problem.capability_bound() {
            return Err(mismatch(format!("dp_a = {} exceeds the capability bound", a.dp_a)));
        }
    }
    Ok(answer)
}

/// Exact decimal rendering of a finite float as an SMT-LIB real term.
fn real(x: f64) -> String {
    if x.is_sign_negative() && x != 0.0 {
        format!("(- {})", real(-x))
    } else {
        let s = format!("{x}");
        if s.contains('.') {
            s
        } else {
            format!("{s}.0")
        }
    }
}

/// Encodes the problem in SMT-LIB 2 over linear real arithmetic.
/// Decision variable: `dpa`. Inertia rescaling makes the recursion
/// nonlinear and is rejected.
pub fn encode_smtlib(problem: &ConstraintProblem) -> Result<String, SynthError> {
    let cfg = &problem.config;
    let engine = cfg.engine();
    if engine.inertia_mode != InertiaMode::Constant {
        return Err(SynthError::InvalidArgument(
            "inertia rescaling is not expressible in linear real arithmetic".into(),
        ));
    }
    for g in cfg.generators() {
        if !g.rocof_threshold.is_finite() {
            return Err(SynthError::InvalidArgument(format!(
                "generator `{}` has a non-finite ROCOF threshold",
                g.id
            )));
        }
    }
    let p = cfg.params();
    let (h, r, t, dt, fnom) = (p.h_inertia, p.droop_r, p.governor_t, p.dt, p.f_nominal);
    let m = p.rocof_window_m;
    let horizon = problem.horizon;
    let latched = engine.relay_mode == RelayMode::Latched;
    let bound = problem.capability_bound();

    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, "(set-logic QF_LRA)");
    let _ = writeln!(w, "(declare-fun dpa () Real)");
    let _ = writeln!(w, "(assert (<= dpa {}))", real(bound));
    let _ = writeln!(w, "(assert (>= dpa {}))", real(-bound));
    match problem.sign {
        InjectionSign::Positive => {
            let _ = writeln!(w, "(assert (>= dpa 0.0))");
        }
        InjectionSign::Negative => {
            let _ = writeln!(w, "(assert (<= dpa 0.0))");
        }
        InjectionSign::Either => {}
    }

    for n in 0..=horizon {
        for v in ["df", "gov", "sh", "tg"] {
            let _ = writeln!(w, "(declare-fun {v}_{n} () Real)");
        }
        for i in 0..cfg.loads().len() {
            let _ = writeln!(w, "(declare-fun ls_{i}_{n} () Bool)");
            let _ = writeln!(w, "(declare-fun lsl_{i}_{n} () Bool)");
        }
        for j in 0..cfg.generators().len() {
            let _ = writeln!(w, "(declare-fun tr_{j}_{n} () Bool)");
            let _ = writeln!(w, "(declare-fun trl_{j}_{n} () Bool)");
        }
    }
    let _ = writeln!(w, "(declare-fun sh_{} () Real)", horizon + 1);
    let _ = writeln!(w, "(declare-fun tg_{} () Real)", horizon + 1);

    for v in ["df", "gov", "sh", "tg"] {
        let _ = writeln!(w, "(assert (= {v}_0 0.0))");
    }
    for i in 0..cfg.loads().len() {
        let _ = writeln!(w, "(assert (not lsl_{i}_0))");
    }
    for j in 0..cfg.generators().len() {
        let _ = writeln!(w, "(assert (not trl_{j}_0))");
    }

    let shed_term = |n: usize| match engine.shed_sign {
        ShedSign::Physical => format!("sh_{n}"),
        ShedSign::Literal => format!("(- sh_{n})"),
    };

    for n in 0..=horizon {
        let fhz = format!("(* {} (+ 1.0 df_{n}))", real(fnom));
        let mut shed_sum = vec![format!("sh_{n}")];
        for (i, l) in cfg.loads().iter().enumerate() {
            let cond = format!("(<= {fhz} {})", real(l.underfreq_threshold));
            if latched {
                let _ = writeln!(w, "(assert (= ls_{i}_{n} (and (not lsl_{i}_{n}) {cond})))");
            } else {
                let _ = writeln!(w, "(assert (= ls_{i}_{n} {cond}))");
            }
            if n < horizon {
                let _ = writeln!(w, "(assert (= lsl_{i}_{} (or lsl_{i}_{n} ls_{i}_{n})))", n + 1);
            }
            shed_sum.push(format!("(ite ls_{i}_{n} {} 0.0)", real(l.p_sh)));
        }
        let _ = writeln!(w, "(assert (= sh_{} (+ {})))", n + 1, shed_sum.join(" "));

        let mut trip_sum = vec![format!("tg_{n}")];
        for (j, g) in cfg.generators().iter().enumerate() {
            if n >= m {
                let rocof = format!(
                    "(* {} (- df_{n} df_{}))",
                    real(fnom / (m as f64 * dt)),
                    n - m
                );
                let thr = real(g.rocof_threshold);
                let cond = format!("(or (>= {rocof} {thr}) (<= {rocof} (- {thr})))");
                if latched {
                    let _ = writeln!(w, "(assert (= tr_{j}_{n} (and (not trl_{j}_{n}) {cond})))");
                } else {
                    let _ = writeln!(w, "(assert (= tr_{j}_{n} {cond}))");
                }
            } else {
                let _ = writeln!(w, "(assert (not tr_{j}_{n}))");
            }
            if n < horizon {
                let _ = writeln!(w, "(assert (= trl_{j}_{} (or trl_{j}_{n} tr_{j}_{n})))", n + 1);
            }
            trip_sum.push(format!("(ite tr_{j}_{n} {} 0.0)", real(g.p_tg)));
        }
        let _ = writeln!(w, "(assert (= tg_{} (+ {})))", n + 1, trip_sum.join(" "));

        if n < horizon {
            let _ = writeln!(
                w,
                "(assert (= gov_{} (+ gov_{n} (* {} (- (* {} df_{n}) gov_{n})))))",
                n + 1,
                real(dt / t),
                real(-1.0 / r)
            );
            let attack = if n >= problem.attack_step { "dpa" } else { "0.0" };
            let _ = writeln!(
                w,
                "(assert (= df_{} (* {} (+ (* {} gov_{n}) (* (- 2.0) {attack}) (* {} df_{n}) (- tg_{}) {}))))",
                n + 1,
                real(dt / (4.0 * h)),
                real(2.0 - dt / t),
                real(-(dt / (r * t) - 4.0 * h / dt)),
                n + 1,
                shed_term(n + 1)
            );
        }
    }

    let mut goal_terms = Vec::new();
    if let Some(target) = &problem.requirement {
        for n in 0..=horizon {
            for (i, l) in cfg.loads().iter().enumerate() {
                let ok = match target {
                    TargetKind::Any | TargetKind::LsOnly => true,
                    TargetKind::RocofOnly => false,
                    TargetKind::Specific(id) => &l.id == id,
                };
                if ok {
                    goal_terms.push(format!("ls_{i}_{n}"));
                }
            }
            for (j, g) in cfg.generators().iter().enumerate() {
                let ok = match target {
                    TargetKind::Any | TargetKind::RocofOnly => true,
                    TargetKind::LsOnly => false,
                    TargetKind::Specific(id) => &g.id == id,
                };
                if ok {
                    goal_terms.push(format!("tr_{j}_{n}"));
                }
            }
        }
        if goal_terms.is_empty() {
            let _ = writeln!(w, "(assert false)");
        } else {
            let _ = writeln!(w, "(assert (or {}))", goal_terms.join(" "));
        }
    }
    let _ = writeln!(w, "(check-sat)");
    let _ = writeln!(w, "(get-value (dpa))");
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn parse_sexp(tokens: &[String], pos: &mut usize) -> Option<Sexp> {
    let tok = tokens.get(*pos)?;
    *pos += 1;
    match tok.as_str() {
        "(" => {
            let mut items = Vec::new();
            while tokens.get(*pos)? != ")" {
                items.push(parse_sexp(tokens, pos)?);
            }
            *pos += 1;
            Some(Sexp::List(items))
        }
        ")" => None,
        atom => Some(Sexp::Atom(atom.to_string())),
    }
}

fn eval_real(e: &Sexp) -> Option<f64> {
    match e {
        Sexp::Atom(a) => a.parse().ok(),
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(op), x] if op == "-" => Some(-eval_real(x)?),
            [Sexp::Atom(op), x, y] if op == "/" => Some(eval_real(x)? / eval_real(y)?),
            [Sexp::Atom(op), x, y] if op == "-" => Some(eval_real(x)? - eval_real(y)?),
            _ => None,
        },
    }
}

/// Parses `sat`/`unsat` followed by a `(get-value (dpa))` response.
pub fn parse_solver_output(output: &str) -> Result<Option<f64>, SynthError> {
    let spaced = output.replace('(', " ( ").replace(')', " ) ");
    let tokens: Vec<String> = spaced.split_whitespace().map(str::to_string).collect();
    match tokens.first().map(String::as_str) {
        Some("unsat") => return Ok(None),
        Some("sat") => {}
        other => {
            return Err(SynthError::BackendUnavailable(format!(
                "solver answered {:?}",
                other.unwrap_or("<nothing>")
            )))
        }
    }
    let mut pos = 1;
    let bad = || SynthError::BackendUnavailable(format!("unparseable model: {}", output.trim()));
    let sexp = parse_sexp(&tokens, &mut pos).ok_or_else(bad)?;
    // ((dpa <value>))
    if let Sexp::List(pairs) = &sexp {
        for pair in pairs {
            if let Sexp::List(kv) = pair {
                if let [Sexp::Atom(name), value] = kv.as_slice() {
                    if name == "dpa" {
                        return eval_real(value).map(Some).ok_or_else(bad);
                    }
                }
            }
        }
    }
    Err(bad())
}

/// Pipes the SMT-LIB encoding into an external solver process
/// (e.g. `z3 -in`) and reads back the model value of `dpa`.
#[derive(Debug, Clone)]
pub struct SmtProcessBackend {
    pub program: String,
    pub args: Vec<String>,
}

impl SmtProcessBackend {
    pub fn z3() -> Self {
        SmtProcessBackend {
            program: "z3".into(),
            args: vec!["-in".into()],
        }
    }
}

impl SolverBackend for SmtProcessBackend {
    fn name(&self) -> &str {
        &self.program
    }

    fn solve(&self, problem: &ConstraintProblem) -> Result<SolverAnswer, SynthError> {
        let script = encode_smtlib(problem)?;
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| SynthError::BackendUnavailable(format!("cannot start `{}`: {e}", self.program)))?;
        child
            .stdin
            .take()
            .ok_or_else(|| SynthError::BackendUnavailable("no stdin".into()))?
            .write_all(script.as_bytes())
            .map_err(|e| SynthError::BackendUnavailable(e.to_string()))?;
        let out = child
            .wait_with_output()
            .map_err(|e| SynthError::BackendUnavailable(e.to_string()))?;
        let text = String::from_utf8_lossy(&out.stdout);
        Ok(match parse_solver_output(&text)? {
            Some(dp_a) => SolverAnswer::Sat(Assignment {
                dp_a,
                attack_step: problem.attack_step,
            }),
            None => SolverAnswer::Unsat,
        })
    }
}

/// Relay kind named in a synthesis result file.
pub fn relay_kind_label(kind: RelayKind) -> &'static str {
    match kind {
        RelayKind::RocofTrip => "rocof",
        RelayKind::LsShed => "ls",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{validate_config, AttackerCapability, GridConfig, GridParams};

    fn problem(h: f64, kappa: f64, target: Option<TargetKind>) -> ConstraintProblem {
        let cfg = validate_config(GridConfig::five_bus(
            GridParams::with_cycle_step(h, 0.2, 0.2, 6),
            AttackerCapability { toi: 0.02, ad: 0.2, der_total: 1.5, kappa },
        ))
        .unwrap();
        ConstraintProblem {
            config: cfg,
            horizon: 12,
            attack_step: 0,
            sign: InjectionSign::Either,
            requirement: target,
        }
    }

    struct Fixed(SolverAnswer);

    impl SolverBackend for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn solve(&self, _: &ConstraintProblem) -> Result<SolverAnswer, SynthError> {
            Ok(self.0)
        }
    }

    #[test]
    fn empty_goal_is_sat_at_zero() {
        let p = problem(2.0, 60.0, None);
        let ans = solve(&p, &BisectionBackend::default()).unwrap();
        assert_eq!(ans, SolverAnswer::Sat(Assignment { dp_a: 0.0, attack_step: 0 }));
    }

    #[test]
    fn c1_is_sat_and_certified() {
        let p = problem(2.0, 60.0, Some(TargetKind::Any));
        let ans = solve(&p, &BisectionBackend::default()).unwrap();
        match ans {
            SolverAnswer::Sat(a) => assert!(a.dp_a > 0.0 && a.dp_a <= 0.322),
            SolverAnswer::Unsat => panic!("expected SAT"),
        }
    }

    #[test]
    fn ls_at_high_inertia_with_tiny_capability_is_unsat() {
        let p = problem(10.0, 1.0, Some(TargetKind::LsOnly));
        assert_eq!(solve(&p, &BisectionBackend::default()).unwrap(), SolverAnswer::Unsat);
        assert_eq!(solve(&p, &ExhaustiveBackend::default()).unwrap(), SolverAnswer::Unsat);
    }

    #[test]
    fn bogus_certificates_are_rejected() {
        let p = problem(2.0, 60.0, Some(TargetKind::Any));
        let weak = Fixed(SolverAnswer::Sat(Assignment { dp_a: 1e-6, attack_step: 0 }));
        assert!(matches!(solve(&p, &weak), Err(SynthError::CertificateMismatch(_))));
        let huge = Fixed(SolverAnswer::Sat(Assignment { dp_a: 5.0, attack_step: 0 }));
        assert!(matches!(solve(&p, &huge), Err(SynthError::CertificateMismatch(_))));
        let shifted = Fixed(SolverAnswer::Sat(Assignment { dp_a: 0.3, attack_step: 3 }));
        assert!(matches!(solve(&p, &shifted), Err(SynthError::CertificateMismatch(_))));
    }

    #[test]
    fn missing_solver_binary_is_unavailable() {
        let p = problem(2.0, 60.0, Some(TargetKind::Any));
        let backend = SmtProcessBackend {
            program: "definitely-not-an-smt-solver".into(),
            args: vec![],
        };
        assert!(matches!(solve(&p, &backend), Err(SynthError::BackendUnavailable(_))));
    }

    #[test]
    fn smtlib_encoding_shape() {
        let p = problem(2.0, 60.0, Some(TargetKind::RocofOnly));
        let text = encode_smtlib(&p).unwrap();
        assert!(text.starts_with("(set-logic QF_LRA)"));
        assert!(text.contains("(declare-fun dpa () Real)"));
        assert!(text.contains("(assert (= df_0 0.0))"));
        assert!(text.contains("df_12"));
        assert!(!text.contains("df_13 "));
        // ROCOF relays cannot fire before a full window
        assert!(text.contains("(assert (not tr_0_5))"));
        assert!(text.contains("tr_0_6"));
        assert!(text.trim_end().ends_with("(get-value (dpa))"));
        let opens = text.matches('(').count();
        assert_eq!(opens, text.matches(')').count());
        let b = text.as_bytes();
        let exponent = b.windows(2).any(|w| w[0].is_ascii_digit() && (w[1] == b'e' || w[1] == b'E'));
        assert!(!exponent, "reals must be plain decimals");
    }

    #[test]
    fn real_literals() {
        assert_eq!(real(2.0), "2.0");
        assert_eq!(real(-0.5), "(- 0.5)");
        assert_eq!(real(1e-7), "0.0000001");
    }

    #[test]
    fn solver_output_parsing() {
        assert_eq!(parse_solver_output("unsat\n").unwrap(), None);
        assert_eq!(parse_solver_output("sat\n((dpa 0.25))\n").unwrap(), Some(0.25));
        assert_eq!(
            parse_solver_output("sat\n((dpa (/ 161.0 500.0)))").unwrap(),
            Some(0.322)
        );
        assert_eq!(parse_solver_output("sat ((dpa (- (/ 1.0 4.0))))").unwrap(), Some(-0.25));
        assert!(parse_solver_output("unknown").is_err());
        assert!(parse_solver_output("sat ((x 1.0))").is_err());
    }
}
