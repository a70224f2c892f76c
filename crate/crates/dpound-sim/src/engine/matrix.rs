//! Per-option evidence: exposure, liquidity, hops and failure modes.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::domain::{DatumKind, ParticipantRole};
use crate::options::{Bindings, OptionId, Slot, UseCase};

use super::config::{default_failure_clauses, Clause, Decision, Delivery, Scenario, ScriptEvent, WorldConfig};
use super::sim::{run, Status};
use super::EngineError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixRow {
    pub option: OptionId,
    /// Set for rows run under a non-default world toggle.
    pub variant: Option<&'static str>,
    /// No central-bank component saw another party's personal data.
    pub privacy_ok: bool,
    /// Roles that saw personal data about someone else, in this phase.
    pub exposed_to: BTreeSet<String>,
    /// The same, by kind of datum.
    pub exposures: BTreeSet<(ParticipantRole, DatumKind)>,
    pub liquidity_demand: u64,
    pub hop_count: usize,
    pub failure_modes: BTreeSet<String>,
    /// The standard run met its postconditions.
    pub standard_ok: bool,
}

impl MatrixRow {
    pub fn label(&self) -> String {
        match self.variant {
            Some(v) => format!("{}/{v}", self.option),
            None => self.option.to_string(),
        }
    }
}

/// Default option per slot for the slots a row does not vary.
pub fn canonical_bindings() -> Bindings {
    [(Slot::U1S1, 2), (Slot::U1S2, 5), (Slot::U2S1, 2), (Slot::U2S2, 4), (Slot::U3S1, 2), (Slot::U3S2, 5), (Slot::U3S3, 3)]
        .into_iter()
        .fold(Bindings::new(), |b, (s, n)| b.with(s.option(n).expect("defined option")))
}

/// Bindings for a row on `o`, with the other U3 lock slot made compatible.
pub fn row_bindings(o: OptionId) -> Bindings {
    let mut b = canonical_bindings().with(o);
    let pair = match o.slot {
        Slot::U3S2 => Some((Slot::U3S3, match o.n { 1 => 1, 5 => 3, _ => 2 })),
        Slot::U3S3 => Some((Slot::U3S2, match o.n { 1 => 1, 3 => 5, _ => 2 })),
        _ => None,
    };
    if let Some((s, n)) = pair {
        b.bind(s.option(n).expect("defined option"));
    }
    b
}

fn use_case_of(slot: Slot) -> UseCase {
    match slot {
        Slot::U1S1 | Slot::U1S2 => UseCase::U1,
        Slot::U2S1 | Slot::U2S2 => UseCase::U2,
        _ => UseCase::U3,
    }
}

fn probes(uc: UseCase) -> Vec<Vec<ScriptEvent>> {
    let mut p = vec![
        vec![ScriptEvent::Authorise(Decision::Reject)],
        vec![ScriptEvent::PayeePip(Decision::Reject)],
        vec![ScriptEvent::SchemeFailure],
    ];
    if uc == UseCase::U3 {
        p.push(vec![ScriptEvent::Delivery(Delivery::Fail)]);
    }
    p
}

fn central_bank(r: ParticipantRole) -> bool {
    r.is_central_bank()
}

fn evaluate_row(cfg: &WorldConfig, sc: &Scenario, o: OptionId, variant: Option<&'static str>) -> MatrixRow {
    let mut sc = sc.clone();
    sc.bindings = row_bindings(o);
    let mut row = MatrixRow {
        option: o,
        variant,
        privacy_ok: false,
        exposed_to: BTreeSet::new(),
        exposures: BTreeSet::new(),
        liquidity_demand: 0,
        hop_count: 0,
        failure_modes: BTreeSet::new(),
        standard_ok: false,
    };
    match run(cfg, &sc, None) {
        Ok(out) => {
            let e = out.exposure_in(o.slot);
            for role in ParticipantRole::ALL {
                for k in DatumKind::ALL {
                    if e.exposed_foreign(role, k) {
                        row.exposures.insert((role, k));
                        row.exposed_to.insert(role.name().to_string());
                    }
                }
            }
            row.privacy_ok = !ParticipantRole::ALL.iter().any(|r| central_bank(*r) && row.exposed_to.contains(r.name()));
            row.liquidity_demand = out.liquidity.get(&Some(o.slot)).copied().unwrap_or(0);
            row.hop_count = out.hops_in(o.slot);
            row.standard_ok = out.passed();
        }
        Err(e) => {
            row.failure_modes.insert(format!("config: {e}"));
            return row;
        }
    }
    for script in probes(sc.use_case) {
        let mut p = sc.clone();
        p.script = script;
        p.expect = default_failure_clauses();
        match run(cfg, &p, None) {
            Ok(out) => {
                if let Status::Failed(reason) = &out.status {
                    let clean = if out.passed() { "" } else { " (unclean)" };
                    row.failure_modes.insert(format!("{reason}{clean}"));
                }
            }
            Err(e) => {
                row.failure_modes.insert(format!("config: {e}"));
            }
        }
    }
    row
}

/// One row per option of every slot, using a standard scenario of each use
/// case. U2.S1.D1 gets an extra row with sealing through the CBDC
/// system switched off.
pub fn evaluate_matrix(cfg: &WorldConfig, scenarios: &[Scenario]) -> Result<Vec<MatrixRow>, EngineError> {
    let mut rows = Vec::new();
    for slot in Slot::ALL {
        let uc = use_case_of(slot);
        let standard = |s: &&Scenario| s.use_case == uc && s.expect.contains(&Clause::Outcome(true));
        // Prefer a scenario that pins no bindings of its own.
        let Some(sc) = scenarios.iter().filter(standard).min_by_key(|s| (s.bindings.iter().count(), s.script.len())) else {
            continue;
        };
        for o in slot.options() {
            rows.push(evaluate_row(cfg, sc, o, None));
            if slot == Slot::U2S1 && o.n == 1 {
                let mut open = cfg.clone();
                open.seal_via_cbdc = false;
                rows.push(evaluate_row(&open, sc, o, Some("unsealed")));
            }
        }
    }
    Ok(rows)
}

pub const MATRIX_HEADER: &str = "option|privacy_ok|liquidity_demand|hop_count|failure_modes|exposed_to";

pub fn render_matrix(rows: &[MatrixRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MATRIX_HEADER}");
    for r in rows {
        let modes: Vec<&str> = r.failure_modes.iter().map(String::as_str).collect();
        let seen: Vec<&str> = r.exposed_to.iter().map(String::as_str).collect();
        let _ = writeln!(
            s,
            "{}|{}|{}|{}|{}|{}",
            r.label(),
            r.privacy_ok,
            r.liquidity_demand,
            r.hop_count,
            if modes.is_empty() { "-".to_string() } else { modes.join(";") },
            if seen.is_empty() { "-".to_string() } else { seen.join(";") },
        );
    }
    s
}

/// One line of an exposure expectation file:
/// `option|exposes|Role[:Kind]` or `option|not_exposes|Role[:Kind]`.
/// `CB` matches either central-bank role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expectation {
    pub row: String,
    pub exposes: bool,
    pub role: String,
    pub kind: Option<DatumKind>,
}

impl Expectation {
    fn matches(&self, role: ParticipantRole, kind: DatumKind) -> bool {
        let role_ok = if self.role == "CB" { role.is_central_bank() } else { role.name() == self.role };
        role_ok && self.kind.is_none_or(|k| k == kind)
    }

    pub fn line(&self) -> String {
        let verb = if self.exposes { "exposes" } else { "not_exposes" };
        match self.kind {
            Some(k) => format!("{}|{verb}|{}:{k}", self.row, self.role),
            None => format!("{}|{verb}|{}", self.row, self.role),
        }
    }
}

pub fn parse_expectations(text: &str) -> Result<Vec<Expectation>, EngineError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |m: String| EngineError::Syntax { line: i + 1, message: m };
        let f: Vec<&str> = line.split('|').collect();
        let [row, verb, who] = f[..] else { return Err(err(format!("expected 3 fields, got {}", f.len()))) };
        let exposes = match verb {
            "exposes" => true,
            "not_exposes" => false,
            v => return Err(err(format!("unknown verdict `{v}`"))),
        };
        let (role, kind) = match who.split_once(':') {
            Some((r, k)) => (r, Some(k.parse::<DatumKind>().map_err(|_| err(format!("unknown datum kind `{k}`")))?)),
            None => (who, None),
        };
        if role != "CB" && !ParticipantRole::ALL.iter().any(|r| r.name() == role) {
            return Err(err(format!("unknown role `{role}`")));
        }
        out.push(Expectation { row: row.to_string(), exposes, role: role.to_string(), kind });
    }
    Ok(out)
}

/// Expectations the matrix contradicts, or that name a row it lacks.
pub fn check_expectations(rows: &[MatrixRow], expected: &[Expectation]) -> Vec<String> {
    let mut bad = Vec::new();
    for e in expected {
        let Some(row) = rows.iter().find(|r| r.label() == e.row) else {
            bad.push(format!("{}: no such matrix row", e.line()));
            continue;
        };
        let seen = row.exposures.iter().any(|(r, k)| e.matches(*r, *k));
        if seen != e.exposes {
            bad.push(format!("{}: matrix says {}", e.line(), if seen { "exposed" } else { "not exposed" }));
        }
    }
    bad
}
