//! World and scenario files: line-oriented `key = value` sections.
//!
//! See `docs/config-format.md` for the grammar.

use std::collections::BTreeSet;
use std::str::FromStr;

use crate::domain::{ParticipantRole, Tick};
use crate::ledger::{LimitMode, DEFAULT_PENDING_TIMEOUT};
use crate::money::Money;
use crate::netting::DEFAULT_BATCH_WINDOW;
use crate::options::{parse_option, Bindings, Slot, UseCase};
use crate::participants::{Partner, Service};

use super::EngineError;

pub const DEFAULT_TICK_BUDGET: Tick = 1000;
pub const DEFAULT_DCR_TTL: Tick = 500;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub line: usize,
    pub kind: String,
    pub arg: Option<String>,
    pub entries: Vec<Entry>,
}

fn syntax(line: usize, message: impl Into<String>) -> EngineError {
    EngineError::Syntax { line, message: message.into() }
}

/// Split a file into sections. Blank lines and `#` comments are ignored.
pub fn parse_sections(text: &str) -> Result<Vec<Section>, EngineError> {
    let mut out: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        if let Some(h) = l.strip_prefix('[') {
            let h = h.strip_suffix(']').ok_or_else(|| syntax(line, "unterminated section header"))?;
            let mut parts = h.split_whitespace();
            let kind = parts.next().ok_or_else(|| syntax(line, "empty section header"))?.to_string();
            let arg = parts.next().map(str::to_string);
            if parts.next().is_some() {
                return Err(syntax(line, "too many words in section header"));
            }
            out.push(Section { line, kind, arg, entries: Vec::new() });
            continue;
        }
        let section = out.last_mut().ok_or_else(|| syntax(line, "entry outside any section"))?;
        let (key, value) = match l.split_once('=') {
            Some((k, v)) => (k.trim(), Some(v.trim().to_string())),
            None => (l, None),
        };
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(syntax(line, format!("bad key `{key}`")));
        }
        section.entries.push(Entry { line, key: key.to_string(), value });
    }
    Ok(out)
}

fn need(e: &Entry) -> Result<&str, EngineError> {
    e.value.as_deref().filter(|v| !v.is_empty()).ok_or_else(|| syntax(e.line, format!("`{}` needs a value", e.key)))
}

fn num<T: FromStr>(e: &Entry) -> Result<T, EngineError> {
    need(e)?.parse().map_err(|_| syntax(e.line, format!("`{}` must be a number", e.key)))
}

fn flag(e: &Entry) -> Result<bool, EngineError> {
    match e.value.as_deref() {
        None | Some("true") | Some("yes") => Ok(true),
        Some("false") | Some("no") => Ok(false),
        Some(v) => Err(syntax(e.line, format!("`{}` must be true or false, got `{v}`", e.key))),
    }
}

fn money(e: &Entry) -> Result<Money, EngineError> {
    num::<u64>(e).map(Money::new)
}

fn parse_bindings(s: &Section, into: &mut Bindings) -> Result<(), EngineError> {
    for e in &s.entries {
        let slot: Slot = e.key.parse().map_err(|err| syntax(e.line, format!("{err}")))?;
        let v = need(e)?;
        let o = parse_option(slot, v).map_err(|err| syntax(e.line, format!("{err}")))?;
        into.bind(o);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpsSpec {
    Dcsp,
    Dcnsp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmiDataPath {
    /// Confidential data travels in a section sealed for the receiving PIP.
    Embedded,
    /// The receiving PIP retrieves the sealed data from the FMI.
    Pull,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccountSpec {
    pub bank: String,
    pub number: String,
    pub balance: Money,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParticipantConfig {
    pub line: usize,
    pub name: String,
    pub role: ParticipantRole,
    pub legal_name: Option<String>,
    pub pip: bool,
    pub sort_code: Option<String>,
    pub settlement: Option<Money>,
    pub backing: bool,
    pub fps: Option<FpsSpec>,
    pub sponsor: Option<String>,
    pub account: Option<AccountSpec>,
    pub internal_account: Option<String>,
    pub wallet: Option<(String, Money)>,
    pub holding_limit: Option<Money>,
    pub technical: bool,
    pub linked: bool,
    pub alias: Option<String>,
    pub partners: Vec<(Partner, String)>,
    pub onboard: BTreeSet<Service>,
    pub provides: BTreeSet<String>,
    pub operator: Option<String>,
    pub compliance_pass: bool,
}

impl ParticipantConfig {
    fn new(line: usize, name: &str, role: ParticipantRole) -> Self {
        ParticipantConfig {
            line,
            name: name.to_string(),
            role,
            legal_name: None,
            pip: false,
            sort_code: None,
            settlement: None,
            backing: false,
            fps: None,
            sponsor: None,
            account: None,
            internal_account: None,
            wallet: None,
            holding_limit: None,
            technical: false,
            linked: false,
            alias: None,
            partners: Vec::new(),
            onboard: BTreeSet::new(),
            provides: BTreeSet::new(),
            operator: None,
            compliance_pass: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldConfig {
    pub seed: u64,
    pub batch_window: Tick,
    pub pending_timeout: Tick,
    pub tick_budget: Tick,
    pub limit_mode: LimitMode,
    pub rtgs_open: bool,
    /// Seal request details end to end when a request is routed through
    /// the CBDC system.
    pub seal_via_cbdc: bool,
    pub fmi_data_path: FmiDataPath,
    pub dcr_ttl: Tick,
    pub bindings: Bindings,
    pub participants: Vec<ParticipantConfig>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 0,
            batch_window: DEFAULT_BATCH_WINDOW,
            pending_timeout: DEFAULT_PENDING_TIMEOUT,
            tick_budget: DEFAULT_TICK_BUDGET,
            limit_mode: LimitMode::Reject,
            rtgs_open: true,
            seal_via_cbdc: true,
            fmi_data_path: FmiDataPath::Embedded,
            dcr_ttl: DEFAULT_DCR_TTL,
            bindings: Bindings::default(),
            participants: Vec::new(),
        }
    }
}

impl WorldConfig {
    pub fn parse(text: &str) -> Result<WorldConfig, EngineError> {
        let mut w = WorldConfig::default();
        for s in parse_sections(text)? {
            match (s.kind.as_str(), &s.arg) {
                ("world", None) => parse_world(&s, &mut w)?,
                ("bindings", None) => parse_bindings(&s, &mut w.bindings)?,
                ("participant", Some(name)) => {
                    if w.participants.iter().any(|p| &p.name == name) {
                        return Err(syntax(s.line, format!("participant `{name}` declared twice")));
                    }
                    w.participants.push(parse_participant(&s, name)?);
                }
                _ => return Err(syntax(s.line, format!("unexpected section `{}`", s.kind))),
            }
        }
        Ok(w)
    }

    pub fn participant(&self, name: &str) -> Option<&ParticipantConfig> {
        self.participants.iter().find(|p| p.name == name)
    }
}

fn parse_world(s: &Section, w: &mut WorldConfig) -> Result<(), EngineError> {
    for e in &s.entries {
        match e.key.as_str() {
            "seed" => w.seed = num(e)?,
            "batch_window" => w.batch_window = num(e)?,
            "pending_timeout" => w.pending_timeout = num(e)?,
            "tick_budget" => w.tick_budget = num(e)?,
            "dcr_ttl" => w.dcr_ttl = num(e)?,
            "rtgs_open" => w.rtgs_open = flag(e)?,
            "seal_via_cbdc" => w.seal_via_cbdc = flag(e)?,
            "waterfall" => w.limit_mode = if flag(e)? { LimitMode::Waterfall } else { LimitMode::Reject },
            "fmi_data_path" => {
                w.fmi_data_path = match need(e)? {
                    "embedded" => FmiDataPath::Embedded,
                    "pull" => FmiDataPath::Pull,
                    v => return Err(syntax(e.line, format!("fmi_data_path must be embedded or pull, got `{v}`"))),
                }
            }
            k => return Err(syntax(e.line, format!("unknown world key `{k}`"))),
        }
    }
    Ok(())
}

fn parse_participant(s: &Section, name: &str) -> Result<ParticipantConfig, EngineError> {
    let role_entry = s
        .entries
        .iter()
        .find(|e| e.key == "role")
        .ok_or_else(|| syntax(s.line, format!("participant `{name}` has no role")))?;
    let role: ParticipantRole = need(role_entry)?.parse().map_err(|err| syntax(role_entry.line, format!("{err}")))?;
    let mut p = ParticipantConfig::new(s.line, name, role);
    for e in &s.entries {
        match e.key.as_str() {
            "role" => {}
            "name" => p.legal_name = Some(need(e)?.to_string()),
            "pip" => p.pip = flag(e)?,
            "sort_code" => p.sort_code = Some(need(e)?.to_string()),
            "settlement" => p.settlement = Some(money(e)?),
            "backing" => p.backing = flag(e)?,
            "fps" => {
                let v = need(e)?;
                if v == "dcsp" {
                    p.fps = Some(FpsSpec::Dcsp);
                } else if let Some(sponsor) = v.strip_prefix("dcnsp:") {
                    p.fps = Some(FpsSpec::Dcnsp);
                    p.sponsor = Some(sponsor.to_string());
                } else {
                    return Err(syntax(e.line, format!("fps must be dcsp or dcnsp:<sponsor>, got `{v}`")));
                }
            }
            "account" => {
                let v = need(e)?;
                let parts: Vec<&str> = v.split(':').collect();
                let [bank, number, balance] = parts[..] else {
                    return Err(syntax(e.line, "account must be <bank>:<number>:<balance>"));
                };
                let balance = balance.parse().map_err(|_| syntax(e.line, "account balance must be a number"))?;
                p.account = Some(AccountSpec {
                    bank: bank.to_string(),
                    number: number.to_string(),
                    balance: Money::new(balance),
                });
            }
            "internal_account" => p.internal_account = Some(need(e)?.to_string()),
            "wallet" => {
                let v = need(e)?;
                let (pip, balance) = v.split_once(':').ok_or_else(|| syntax(e.line, "wallet must be <pip>:<balance>"))?;
                let balance = balance.parse().map_err(|_| syntax(e.line, "wallet balance must be a number"))?;
                p.wallet = Some((pip.to_string(), Money::new(balance)));
            }
            "holding_limit" => p.holding_limit = Some(money(e)?),
            "technical" => p.technical = flag(e)?,
            "linked" => p.linked = flag(e)?,
            "alias" => p.alias = Some(need(e)?.to_string()),
            "onboard" => {
                for s in need(e)?.split(',').map(str::trim) {
                    let svc = Service::parse(s).ok_or_else(|| syntax(e.line, format!("unknown service `{s}`")))?;
                    p.onboard.insert(svc);
                }
            }
            "provides" => p.provides.extend(need(e)?.split(',').map(|s| s.trim().to_string())),
            "operator" => p.operator = Some(need(e)?.to_string()),
            "compliance" => {
                p.compliance_pass = match need(e)? {
                    "pass" => true,
                    "fail" => false,
                    v => return Err(syntax(e.line, format!("compliance must be pass or fail, got `{v}`"))),
                }
            }
            k => match Partner::parse(k) {
                Some(partner) => p.partners.push((partner, need(e)?.to_string())),
                None => return Err(syntax(e.line, format!("unknown participant key `{k}`"))),
            },
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Approve,
    Reject,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    Success,
    Fail,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptEvent {
    /// The paying end user's answer to the authorisation prompt.
    Authorise(Decision),
    /// The payee PIP's answer to the credit confirmation request.
    PayeePip(Decision),
    Delivery(Delivery),
    /// The instant payment scheme refuses the next customer payment.
    SchemeFailure,
    Compliance(bool),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Clause {
    Outcome(bool),
    PayerDelta(i128),
    PayeeDelta(i128),
    NoFundsMoved,
    LocksReleased,
    IntermediariesFlat,
    Conservation,
    SettlementEquality,
    Exposed(ParticipantRole, crate::domain::DatumKind),
    NotExposed(ParticipantRole, crate::domain::DatumKind),
}

impl Clause {
    pub fn label(&self) -> String {
        match self {
            Clause::Outcome(true) => "outcome=success".into(),
            Clause::Outcome(false) => "outcome=failure".into(),
            Clause::PayerDelta(d) => format!("payer_delta={d}"),
            Clause::PayeeDelta(d) => format!("payee_delta={d}"),
            Clause::NoFundsMoved => "no_funds_moved".into(),
            Clause::LocksReleased => "locks_released".into(),
            Clause::IntermediariesFlat => "intermediaries_flat".into(),
            Clause::Conservation => "conservation".into(),
            Clause::SettlementEquality => "settlement_equality".into(),
            Clause::Exposed(r, k) => format!("exposed={r}:{k}"),
            Clause::NotExposed(r, k) => format!("not_exposed={r}:{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    pub use_case: UseCase,
    pub payer: String,
    pub payee: String,
    pub alias: String,
    pub amount: Money,
    /// Lock expiry, in ticks after the scenario starts.
    pub expiry: Tick,
    pub reference: String,
    pub purpose: String,
    pub acquirer: Option<String>,
    pub delivery_agent: Option<String>,
    pub bindings: Bindings,
    pub script: Vec<ScriptEvent>,
    pub expect: Vec<Clause>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, EngineError> {
        let sections = parse_sections(text)?;
        let head = sections
            .iter()
            .find(|s| s.kind == "scenario")
            .ok_or_else(|| syntax(1, "missing [scenario] section"))?;
        let mut sc = Scenario {
            name: String::new(),
            use_case: UseCase::U1,
            payer: String::new(),
            payee: String::new(),
            alias: String::new(),
            amount: Money::ZERO,
            expiry: 200,
            reference: "REF-0001".into(),
            purpose: "payment".into(),
            acquirer: None,
            delivery_agent: None,
            bindings: Bindings::default(),
            script: Vec::new(),
            expect: Vec::new(),
        };
        let mut seen_use_case = false;
        for e in &head.entries {
            match e.key.as_str() {
                "name" => sc.name = need(e)?.to_string(),
                "use_case" => {
                    sc.use_case = need(e)?.parse().map_err(|err| syntax(e.line, format!("{err}")))?;
                    seen_use_case = true;
                }
                "payer" => sc.payer = need(e)?.to_string(),
                "payee" => sc.payee = need(e)?.to_string(),
                "alias" => sc.alias = need(e)?.to_string(),
                "amount" => sc.amount = money(e)?,
                "expiry" => sc.expiry = num(e)?,
                "reference" => sc.reference = need(e)?.to_string(),
                "purpose" => sc.purpose = need(e)?.to_string(),
                "acquirer" => sc.acquirer = Some(need(e)?.to_string()),
                "delivery_agent" => sc.delivery_agent = Some(need(e)?.to_string()),
                k => return Err(syntax(e.line, format!("unknown scenario key `{k}`"))),
            }
        }
        if !seen_use_case {
            return Err(syntax(head.line, "scenario has no use_case"));
        }
        for (key, v) in [("payer", &sc.payer), ("payee", &sc.payee), ("alias", &sc.alias)] {
            if v.is_empty() {
                return Err(syntax(head.line, format!("scenario has no {key}")));
            }
        }
        if sc.amount.is_zero() {
            return Err(syntax(head.line, "scenario amount must be positive"));
        }
        let mut have_expect = false;
        for s in &sections {
            match s.kind.as_str() {
                "scenario" => {}
                "bindings" => parse_bindings(s, &mut sc.bindings)?,
                "script" => {
                    for e in &s.entries {
                        sc.script.push(parse_event(e)?);
                    }
                }
                "expect" => {
                    have_expect = true;
                    for e in &s.entries {
                        sc.expect.push(parse_clause(e)?);
                    }
                }
                k => return Err(syntax(s.line, format!("unexpected section `{k}`"))),
            }
        }
        if !have_expect {
            sc.expect = default_success_clauses(sc.amount);
        }
        Ok(sc)
    }
}

pub fn default_success_clauses(amount: Money) -> Vec<Clause> {
    vec![
        Clause::Outcome(true),
        Clause::PayerDelta(-amount.signed()),
        Clause::PayeeDelta(amount.signed()),
        Clause::IntermediariesFlat,
        Clause::Conservation,
        Clause::SettlementEquality,
    ]
}

pub fn default_failure_clauses() -> Vec<Clause> {
    vec![
        Clause::Outcome(false),
        Clause::NoFundsMoved,
        Clause::LocksReleased,
        Clause::IntermediariesFlat,
        Clause::Conservation,
    ]
}

fn decision(e: &Entry) -> Result<Decision, EngineError> {
    match need(e)? {
        "approve" => Ok(Decision::Approve),
        "reject" => Ok(Decision::Reject),
        "timeout" => Ok(Decision::Timeout),
        v => Err(syntax(e.line, format!("expected approve, reject or timeout, got `{v}`"))),
    }
}

fn parse_event(e: &Entry) -> Result<ScriptEvent, EngineError> {
    match e.key.as_str() {
        "authorise" => match decision(e)? {
            Decision::Timeout => Err(syntax(e.line, "authorise cannot time out")),
            d => Ok(ScriptEvent::Authorise(d)),
        },
        "payee_pip" => Ok(ScriptEvent::PayeePip(decision(e)?)),
        "delivery" => match need(e)? {
            "success" => Ok(ScriptEvent::Delivery(Delivery::Success)),
            "fail" => Ok(ScriptEvent::Delivery(Delivery::Fail)),
            "none" => Ok(ScriptEvent::Delivery(Delivery::None)),
            v => Err(syntax(e.line, format!("delivery must be success, fail or none, got `{v}`"))),
        },
        "fail" => match need(e)? {
            "scheme" => Ok(ScriptEvent::SchemeFailure),
            v => Err(syntax(e.line, format!("unknown failure point `{v}`"))),
        },
        "compliance" => match need(e)? {
            "pass" => Ok(ScriptEvent::Compliance(true)),
            "fail" => Ok(ScriptEvent::Compliance(false)),
            v => Err(syntax(e.line, format!("compliance must be pass or fail, got `{v}`"))),
        },
        k => Err(syntax(e.line, format!("unknown script event `{k}`"))),
    }
}

fn role_datum(e: &Entry) -> Result<(ParticipantRole, crate::domain::DatumKind), EngineError> {
    let v = need(e)?;
    let (r, d) = v.split_once(':').ok_or_else(|| syntax(e.line, "expected <Role>:<DatumKind>"))?;
    let role = r.parse().map_err(|err| syntax(e.line, format!("{err}")))?;
    let kind = d.parse().map_err(|err| syntax(e.line, format!("{err}")))?;
    Ok((role, kind))
}

fn parse_clause(e: &Entry) -> Result<Clause, EngineError> {
    let bare = |c: Clause| if e.value.is_some() { Err(syntax(e.line, format!("`{}` takes no value", e.key))) } else { Ok(c) };
    match e.key.as_str() {
        "outcome" => match need(e)? {
            "success" => Ok(Clause::Outcome(true)),
            "failure" => Ok(Clause::Outcome(false)),
            v => Err(syntax(e.line, format!("outcome must be success or failure, got `{v}`"))),
        },
        "payer_delta" => Ok(Clause::PayerDelta(num(e)?)),
        "payee_delta" => Ok(Clause::PayeeDelta(num(e)?)),
        "no_funds_moved" => bare(Clause::NoFundsMoved),
        "locks_released" => bare(Clause::LocksReleased),
        "intermediaries_flat" => bare(Clause::IntermediariesFlat),
        "conservation" => bare(Clause::Conservation),
        "settlement_equality" => bare(Clause::SettlementEquality),
        "exposed" => role_datum(e).map(|(r, k)| Clause::Exposed(r, k)),
        "not_exposed" => role_datum(e).map(|(r, k)| Clause::NotExposed(r, k)),
        k => Err(syntax(e.line, format!("unknown expectation `{k}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_entries() {
        let s = parse_sections("# c\n[world]\nseed = 3\n\n[participant a]\nrole = User\nflagged\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].arg.as_deref(), Some("a"));
        assert_eq!(s[1].entries[1].value, None);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = WorldConfig::parse("[world]\nseed = 1\nbogus = 2\n").unwrap_err();
        assert_eq!(err, EngineError::Syntax { line: 3, message: "unknown world key `bogus`".into() });
        let err = WorldConfig::parse("seed = 1\n").unwrap_err();
        assert!(matches!(err, EngineError::Syntax { line: 1, .. }));
    }

    #[test]
    fn bindings_are_checked_against_slot() {
        let err = WorldConfig::parse("[bindings]\nU1.S1 = D9\n").unwrap_err();
        assert!(matches!(err, EngineError::Syntax { line: 2, .. }));
        let w = WorldConfig::parse("[bindings]\nU1.S1 = D2\n").unwrap();
        assert_eq!(w.bindings.get(Slot::U1S1), Some(2));
    }
}
