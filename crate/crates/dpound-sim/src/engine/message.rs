//! Message kinds, the bus envelope wrapper and role admissibility.

use std::fmt;

use crate::domain::{ParticipantRole, PersonalDatum};
use crate::ids::ParticipantId;
use crate::money::Money;
use crate::options::Slot;
use crate::privacy::{Envelope, FieldValue, Fields, SealedSection};

macro_rules! kinds {
    ($($k:ident),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum MsgKind { $($k),* }

        impl MsgKind {
            pub const ALL: &'static [MsgKind] = &[$(MsgKind::$k),*];

            pub fn name(self) -> &'static str {
                match self { $(MsgKind::$k => stringify!($k)),* }
            }

            pub fn parse(s: &str) -> Option<MsgKind> {
                match s { $(stringify!($k) => Some(MsgKind::$k),)* _ => None }
            }
        }
    };
}

kinds! {
    PayInit, AliasLookup, AliasResult, DcrRegister, DcrGrant, CopRequest, CopResponse, CopConfirm, PayAuthorise,
    FpsPayment, FpsCredit, FpsRejected,
    WalletTransfer, TransferResult, CreditApprovalRequest, CreditApproval, CreditCompleted, CreditNotification,
    PaymentInfoRequest, PaymentInfo,
    FundsReceived, PaymentFailed, PaymentCompleted,
    EpsPayment, EpsCreditInstruction, EpsCreditResult, EpsDebitInstruction, EpsDebitResult, EpsBankCredit, EpsResult,
    NetSettlement,
    RequestToPayInit, RequestToPay, RequestToPayResponse, AuthorisationPrompt, AuthorisationDecision,
    PaymentToBank, PaymentResult,
    RequestToLockInit, RequestToLock, RequestToLockResponse, LockFunds, LockConfirmation, LockConfirmed,
    DispatchOrder, DeliveryReleaseRequest, DeliveryFailed, DeliveryConfirmation, HandOver,
    ReleaseInstruction, ReleaseAndPay, CancelInstruction, CancelLock, LockCancelled,
}

impl fmt::Display for MsgKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Whether a participant of `role` may process `kind`. `pip` marks a
/// commercial bank that also manages wallets.
pub fn admits(role: ParticipantRole, pip: bool, kind: MsgKind) -> bool {
    use MsgKind::*;
    use ParticipantRole as R;
    let pip_like = matches!(role, R::Pip | R::PipLite) || (role == R::CommercialBank && pip);
    let bank_like = matches!(role, R::CommercialBank | R::Pip | R::PipLite);
    let cbdc = role == R::CentralBankCbdcSystem;
    match kind {
        PayInit | PayAuthorise => bank_like,
        AliasLookup => role == R::AliasService,
        AliasResult => bank_like || matches!(role, R::Tsp | R::Acquirer),
        DcrRegister => role == R::Tsp,
        DcrGrant => bank_like || role == R::Acquirer,
        CopRequest => pip_like || cbdc || matches!(role, R::Tsp | R::AliasService),
        CopResponse => bank_like || cbdc || role == R::Tsp,
        CopConfirm | FundsReceived | PaymentFailed | PaymentCompleted | AuthorisationPrompt | LockConfirmed
        | DeliveryReleaseRequest | DeliveryFailed | HandOver => role == R::User,
        FpsPayment => role == R::FpsScheme,
        FpsCredit | FpsRejected => bank_like || cbdc || role == R::Fmi,
        WalletTransfer | CreditApproval | EpsCreditInstruction | EpsDebitInstruction | PaymentToBank
        | ReleaseAndPay => cbdc,
        TransferResult | CreditNotification | PaymentInfoRequest | PaymentInfo | PaymentResult => {
            bank_like || role == R::Fmi
        }
        CreditApprovalRequest | CreditCompleted | AuthorisationDecision | CancelInstruction => pip_like,
        EpsPayment | EpsCreditResult | EpsDebitResult => role == R::EnhancedPaymentSystem,
        EpsBankCredit => bank_like,
        EpsResult => bank_like || role == R::Fmi,
        NetSettlement => role == R::CentralBankRtgs,
        RequestToPayInit | RequestToLockInit => role == R::Acquirer,
        RequestToPay | RequestToLock => pip_like || cbdc || role == R::Tsp,
        RequestToPayResponse | RequestToLockResponse | LockConfirmation => {
            pip_like || cbdc || matches!(role, R::Tsp | R::Acquirer | R::Fmi)
        }
        LockFunds | CancelLock => cbdc || role == R::Fmi,
        ReleaseInstruction => pip_like || role == R::Fmi,
        LockCancelled => pip_like || role == R::User,
        DispatchOrder | DeliveryConfirmation => role == R::DeliveryAgent,
    }
}

/// A message on the bus. `phase` is the option slot whose strategy sent it;
/// `None` for steps common to every binding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub env: Envelope,
    pub kind: MsgKind,
    pub phase: Option<Slot>,
}

impl Message {
    pub fn text(&self, key: &str) -> Option<&str> {
        self.env.text(key)
    }

    pub fn amount(&self, key: &str) -> Option<Money> {
        self.env.amount(key)
    }

    pub fn datum(&self, key: &str) -> Option<&PersonalDatum> {
        match self.env.plaintext.get(key) {
            Some(FieldValue::Datum(d)) => Some(d),
            _ => None,
        }
    }

    pub fn sender(&self) -> ParticipantId {
        self.env.sender
    }
}

/// Message body under construction.
#[derive(Debug, Clone, Default)]
pub struct Body {
    pub plain: Fields,
    pub seal: Vec<(ParticipantId, Fields)>,
    pub forward: Vec<SealedSection>,
}

impl Body {
    pub fn new() -> Self {
        Body::default()
    }

    pub fn text(mut self, key: &str, v: impl ToString) -> Self {
        self.plain.insert(key.to_string(), FieldValue::Text(v.to_string()));
        self
    }

    pub fn amount(mut self, key: &str, m: Money) -> Self {
        self.plain.insert(key.to_string(), FieldValue::Amount(m));
        self
    }

    pub fn datum(mut self, key: &str, d: PersonalDatum) -> Self {
        self.plain.insert(key.to_string(), FieldValue::Datum(d));
        self
    }

    /// Add a section sealed for `recipient`.
    pub fn sealed(mut self, recipient: ParticipantId, fields: Fields) -> Self {
        if !fields.is_empty() {
            self.seal.push((recipient, fields));
        }
        self
    }

    /// Carry sealed sections from another message unchanged.
    pub fn forwarding(mut self, sections: &[SealedSection]) -> Self {
        self.forward.extend(sections.iter().cloned());
        self
    }

    /// Copy plaintext fields from `m`.
    pub fn copy(mut self, m: &Message, keys: &[&str]) -> Self {
        for k in keys {
            if let Some(v) = m.env.plaintext.get(*k) {
                self.plain.insert(k.to_string(), v.clone());
            }
        }
        self
    }
}

/// Personal data fields, either for plaintext or for a sealed section.
pub fn data_fields(items: &[(&str, &PersonalDatum)]) -> Fields {
    items.iter().map(|(k, d)| (k.to_string(), FieldValue::Datum((*d).clone()))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for &k in MsgKind::ALL {
            assert_eq!(MsgKind::parse(k.name()), Some(k));
        }
    }

    #[test]
    fn users_do_not_take_ledger_instructions() {
        assert!(!admits(ParticipantRole::User, false, MsgKind::WalletTransfer));
        assert!(admits(ParticipantRole::CentralBankCbdcSystem, false, MsgKind::WalletTransfer));
        assert!(!admits(ParticipantRole::CommercialBank, false, MsgKind::CreditApprovalRequest));
        assert!(admits(ParticipantRole::CommercialBank, true, MsgKind::CreditApprovalRequest));
    }
}
