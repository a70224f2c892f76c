//! Message confidentiality and exposure analysis.
//!
//! Sealing is modelled with capabilities rather than ciphers: a sealed
//! section names its recipient, and only a participant holding that
//! recipient's capability in the [`KeyDirectory`] can open it. What matters
//! for the analysis is who could read which personal datum.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::domain::{DatumKind, ParticipantRole, PersonalDatum};
use crate::ids::{MessageId, ParticipantId};
use crate::money::Money;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrivacyError {
    #[error("no key registered for {0}")]
    UnknownRecipientKey(ParticipantId),
    #[error("{opener} cannot open section {index} of {message}")]
    NotRecipient { message: MessageId, index: usize, opener: ParticipantId },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum FieldValue {
    Text(String),
    Amount(Money),
    Datum(PersonalDatum),
}

impl fmt::Display for FieldValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldValue::Text(t) => f.write_str(t),
            FieldValue::Amount(m) => write!(f, "{m}"),
            FieldValue::Datum(d) => write!(f, "{}:{}", d.kind, d.value),
        }
    }
}

pub type Fields = BTreeMap<String, FieldValue>;

pub fn data_in(fields: &Fields) -> impl Iterator<Item = &PersonalDatum> {
    fields.values().filter_map(|v| match v {
        FieldValue::Datum(d) => Some(d),
        _ => None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedSection {
    sealer: ParticipantId,
    recipient: ParticipantId,
    fields: Fields,
}

impl SealedSection {
    /// The participant that wrote and sealed the section. Forwarding a
    /// section does not change it.
    pub fn sealer(&self) -> ParticipantId {
        self.sealer
    }

    pub fn recipient(&self) -> ParticipantId {
        self.recipient
    }

    /// Contents, for analysis code that must see through the seal (the
    /// taint scanner, never message handlers).
    pub fn contents_for_analysis(&self) -> &Fields {
        &self.fields
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub id: MessageId,
    pub sender: ParticipantId,
    pub receiver: ParticipantId,
    pub plaintext: Fields,
    pub sealed: Vec<SealedSection>,
}

impl Envelope {
    pub fn new(id: MessageId, sender: ParticipantId, receiver: ParticipantId) -> Self {
        Envelope { id, sender, receiver, plaintext: Fields::new(), sealed: Vec::new() }
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        match self.plaintext.get(key) {
            Some(FieldValue::Text(t)) => Some(t),
            _ => None,
        }
    }

    pub fn amount(&self, key: &str) -> Option<Money> {
        match self.plaintext.get(key) {
            Some(FieldValue::Amount(m)) => Some(*m),
            _ => None,
        }
    }

    /// Every datum the envelope carries, sealed or not.
    pub fn all_data(&self) -> Vec<&PersonalDatum> {
        let mut out: Vec<&PersonalDatum> = data_in(&self.plaintext).collect();
        for s in &self.sealed {
            out.extend(data_in(&s.fields));
        }
        out
    }
}

/// Opaque proof of holding a participant's key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Capability {
    holder: ParticipantId,
}

#[derive(Debug, Clone, Default)]
pub struct KeyDirectory {
    registered: BTreeMap<ParticipantId, Capability>,
    exchanges: Vec<(ParticipantId, ParticipantId)>,
    seals: u64,
    opens: u64,
}

/// Counted key-management work for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KeyMetrics {
    pub seals: u64,
    pub opens: u64,
    pub directory_entries: u64,
    pub exchanges: u64,
}

impl KeyDirectory {
    pub fn new() -> Self {
        KeyDirectory::default()
    }

    pub fn register(&mut self, p: ParticipantId) -> Capability {
        *self.registered.entry(p).or_insert(Capability { holder: p })
    }

    pub fn remove(&mut self, p: ParticipantId) {
        self.registered.remove(&p);
    }

    pub fn is_registered(&self, p: ParticipantId) -> bool {
        self.registered.contains_key(&p)
    }

    /// Record a key exchange between two onboarded parties.
    pub fn exchange(&mut self, a: ParticipantId, b: ParticipantId) {
        self.exchanges.push((a, b));
    }

    pub fn metrics(&self) -> KeyMetrics {
        KeyMetrics {
            seals: self.seals,
            opens: self.opens,
            directory_entries: self.registered.len() as u64,
            exchanges: self.exchanges.len() as u64,
        }
    }

    pub fn seal(
        &mut self,
        fields: Fields,
        sealer: ParticipantId,
        recipient: ParticipantId,
    ) -> Result<SealedSection, PrivacyError> {
        if !self.registered.contains_key(&recipient) {
            return Err(PrivacyError::UnknownRecipientKey(recipient));
        }
        self.seals += 1;
        Ok(SealedSection { sealer, recipient, fields })
    }

    /// Open section `index` of `env` as `opener`. Any personal data inside
    /// is recorded against the opener in `report`.
    pub fn open_section<'e>(
        &mut self,
        env: &'e Envelope,
        index: usize,
        opener: ParticipantId,
        report: &mut ExposureLog,
    ) -> Result<&'e Fields, PrivacyError> {
        let not_recipient = PrivacyError::NotRecipient { message: env.id, index, opener };
        let section = env.sealed.get(index).ok_or(not_recipient.clone())?;
        let cap = self.registered.get(&opener).ok_or(not_recipient.clone())?;
        if cap.holder != section.recipient {
            return Err(not_recipient);
        }
        self.opens += 1;
        report.opened(env.id, index, opener);
        Ok(&section.fields)
    }
}

/// Successful section openings, recorded during a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExposureLog {
    opens: BTreeSet<(MessageId, usize, ParticipantId)>,
}

impl ExposureLog {
    pub fn opened(&mut self, message: MessageId, index: usize, opener: ParticipantId) {
        self.opens.insert((message, index, opener));
    }

    pub fn opens(&self) -> impl Iterator<Item = &(MessageId, usize, ParticipantId)> {
        self.opens.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    /// The component wrote the datum into the message.
    Authored,
    PlaintextField,
    OpenedSection,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Authored => "Authored",
            Channel::PlaintextField => "PlaintextField",
            Channel::OpenedSection => "OpenedSection",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ExposureRow {
    pub component: ParticipantId,
    pub role: ParticipantRole,
    pub datum: PersonalDatum,
    pub message: MessageId,
    pub channel: Channel,
}

impl ExposureRow {
    /// `component_role|datum_kind|message_id|channel`
    pub fn line(&self) -> String {
        format!("{}|{}|{}|{}", self.role, self.datum.kind, self.message, self.channel.name())
    }
}

/// Who could read what. Rows are deduplicated.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExposureReport {
    rows: BTreeSet<ExposureRow>,
    /// Roles a component acts on behalf of, e.g. an alias service run by a TSP.
    operators: BTreeMap<ParticipantId, ParticipantRole>,
}

impl ExposureReport {
    pub fn new() -> Self {
        ExposureReport::default()
    }

    pub fn add(&mut self, row: ExposureRow) {
        self.rows.insert(row);
    }

    pub fn set_operator(&mut self, component: ParticipantId, operator_role: ParticipantRole) {
        self.operators.insert(component, operator_role);
    }

    pub fn rows(&self) -> impl Iterator<Item = &ExposureRow> {
        self.rows.iter()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn acts_as(&self, row: &ExposureRow, role: ParticipantRole) -> bool {
        row.role == role || self.operators.get(&row.component) == Some(&role)
    }

    /// Did any component acting in `role` see a datum of `kind`?
    pub fn exposed(&self, role: ParticipantRole, kind: DatumKind) -> bool {
        self.rows.iter().any(|r| r.datum.kind == kind && self.acts_as(r, role))
    }

    /// Like [`exposed`](Self::exposed) but only counting data about
    /// somebody other than the component itself.
    pub fn exposed_foreign(&self, role: ParticipantRole, kind: DatumKind) -> bool {
        self.rows
            .iter()
            .any(|r| r.datum.kind == kind && r.datum.subject != r.component && self.acts_as(r, role))
    }

    /// Distinct (component, datum) pairs, ignoring message and channel.
    pub fn exposure_set(&self) -> BTreeSet<(ParticipantId, PersonalDatum)> {
        self.rows.iter().map(|r| (r.component, r.datum.clone())).collect()
    }

    pub fn export(&self) -> String {
        let lines: BTreeSet<String> = self.rows.iter().map(ExposureRow::line).collect();
        let mut out = String::new();
        for l in lines {
            out.push_str(&l);
            out.push('\n');
        }
        out
    }
}

/// One delivered message, as the taint scanner sees it.
pub struct ScanItem<'a> {
    pub envelope: &'a Envelope,
    pub sender_role: ParticipantRole,
    pub receiver_role: ParticipantRole,
}

/// Build the exposure report for a run from its delivered messages and the
/// openings recorded while it ran.
pub fn taint_scan<'a>(items: impl IntoIterator<Item = ScanItem<'a>>, log: &ExposureLog) -> ExposureReport {
    let mut report = ExposureReport::new();
    let mut roles: BTreeMap<ParticipantId, ParticipantRole> = BTreeMap::new();
    let mut by_id: BTreeMap<MessageId, &'a Envelope> = BTreeMap::new();
    for item in items {
        let env = item.envelope;
        roles.insert(env.sender, item.sender_role);
        roles.insert(env.receiver, item.receiver_role);
        by_id.insert(env.id, env);
        let authored = data_in(&env.plaintext)
            .chain(env.sealed.iter().filter(|s| s.sealer == env.sender).flat_map(|s| data_in(&s.fields)));
        for d in authored {
            report.add(ExposureRow {
                component: env.sender,
                role: item.sender_role,
                datum: d.clone(),
                message: env.id,
                channel: Channel::Authored,
            });
        }
        for d in data_in(&env.plaintext) {
            report.add(ExposureRow {
                component: env.receiver,
                role: item.receiver_role,
                datum: d.clone(),
                message: env.id,
                channel: Channel::PlaintextField,
            });
        }
    }
    for &(msg, index, opener) in log.opens() {
        let (Some(env), Some(&role)) = (by_id.get(&msg), roles.get(&opener)) else { continue };
        if let Some(section) = env.sealed.get(index) {
            for d in data_in(&section.fields) {
                report.add(ExposureRow {
                    component: opener,
                    role,
                    datum: d.clone(),
                    message: msg,
                    channel: Channel::OpenedSection,
                });
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn name(subject: u32) -> FieldValue {
        FieldValue::Datum(PersonalDatum::new(ParticipantId(subject), DatumKind::Name, "C. Child"))
    }

    #[test]
    fn seal_needs_registered_recipient() {
        let mut keys = KeyDirectory::new();
        let err = keys.seal(Fields::new(), ParticipantId(1), ParticipantId(9)).unwrap_err();
        assert_eq!(err, PrivacyError::UnknownRecipientKey(ParticipantId(9)));
        keys.register(ParticipantId(9));
        let s = keys.seal(Fields::new(), ParticipantId(1), ParticipantId(9)).unwrap();
        assert!(s.contents_for_analysis().is_empty());
    }

    #[test]
    fn only_recipient_opens() {
        let mut keys = KeyDirectory::new();
        let pip = ParticipantId(2);
        let cbdc = ParticipantId(3);
        keys.register(pip);
        keys.register(cbdc);
        let mut env = Envelope::new(MessageId(1), ParticipantId(1), cbdc);
        let mut f = Fields::new();
        f.insert("payee_name".into(), name(4));
        env.sealed.push(keys.seal(f, ParticipantId(1), pip).unwrap());
        let mut log = ExposureLog::default();
        assert!(matches!(keys.open_section(&env, 0, cbdc, &mut log), Err(PrivacyError::NotRecipient { .. })));
        assert_eq!(log.opens().count(), 0);
        assert_eq!(keys.open_section(&env, 0, pip, &mut log).unwrap().len(), 1);
        keys.open_section(&env, 0, pip, &mut log).unwrap();
        assert_eq!(log.opens().count(), 1);
        assert_eq!(keys.metrics().opens, 2);
    }
}
