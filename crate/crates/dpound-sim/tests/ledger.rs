use dpound_sim::ids::{AccountId, IdSource, LockId, MessageId, ParticipantId, WalletId};
use dpound_sim::ledger::{Beneficiary, CoreLedger, CreditOutcome, Decision, LedgerError, LimitMode, LimitOutcome, LockState, PayTarget};
use dpound_sim::money::Money;

const PIP: ParticipantId = ParticipantId(1);
const OTHER_PIP: ParticipantId = ParticipantId(2);
const FMI: ParticipantId = ParticipantId(3);
const USER: ParticipantId = ParticipantId(10);
const FUNDING: AccountId = AccountId(1);
const LINKED: AccountId = AccountId(2);

fn m(p: u64) -> Money {
    Money::new(p)
}

struct Fx {
    ids: IdSource,
    l: CoreLedger,
}

impl Fx {
    fn new(mode: LimitMode) -> Self {
        let mut l = CoreLedger::new(mode, 100);
        for p in [PIP, OTHER_PIP, FMI] {
            l.register_manager(p);
        }
        Fx { ids: IdSource::new(7), l }
    }

    fn user_wallet(&mut self, limit: Option<u64>, balance: u64) -> WalletId {
        let w = self.l.open_wallet(&mut self.ids, USER, PIP, limit.map(m), false, Some(LINKED)).unwrap();
        if balance > 0 {
            self.l.genesis(w, m(balance), FUNDING).unwrap();
        }
        w
    }

    fn sink(&mut self) -> WalletId {
        self.l.open_wallet(&mut self.ids, FMI, FMI, None, true, None).unwrap()
    }

    fn lock(&mut self, w: WalletId, amount: u64, expiry: u64) -> Result<LockId, LedgerError> {
        self.l.lock_funds(&mut self.ids, 0, w, m(amount), Beneficiary::Account(FUNDING), expiry, PIP)
    }

    fn pay(&mut self, from: WalletId, to: WalletId, amount: u64, min: u64) -> Result<CreditOutcome, LedgerError> {
        self.l.transfer(&mut self.ids, 1, from, to, m(amount), m(min), PIP, MessageId(1))
    }

    fn ledger(&self, w: WalletId) -> u64 {
        self.l.wallet(w).unwrap().ledger_balance.pence()
    }

    fn available(&self, w: WalletId) -> u64 {
        self.l.available(w).unwrap().pence()
    }
}

#[test]
fn new_wallet_starts_empty() {
    let mut f = Fx::new(LimitMode::Reject);
    let w = f.user_wallet(Some(20000), 0);
    assert_eq!(f.ledger(w), 0);
    assert!(!f.l.wallet(w).unwrap().technical);
}

#[test]
fn technical_wallet_has_no_limit() {
    let mut f = Fx::new(LimitMode::Reject);
    let w = f.sink();
    let wallet = f.l.wallet(w).unwrap();
    assert!(wallet.technical);
    assert_eq!(wallet.holding_limit, None);
    assert_eq!(
        f.l.open_wallet(&mut f.ids, FMI, FMI, Some(m(1)), true, None),
        Err(LedgerError::TechnicalWithLimit)
    );
}

#[test]
fn only_registered_pips_manage_wallets() {
    let mut f = Fx::new(LimitMode::Reject);
    let merchant_bank_as_user = ParticipantId(20);
    let r = f.l.open_wallet(&mut f.ids, USER, merchant_bank_as_user, None, false, None);
    assert_eq!(r, Err(LedgerError::UnknownParticipant(merchant_bank_as_user)));
}

#[test]
fn mint_to_user_wallet_waits_for_its_pip() {
    let mut f = Fx::new(LimitMode::Reject);
    let w = f.user_wallet(Some(20000), 0);
    let out = f.l.mint_to(&mut f.ids, 1, w, m(5000), FUNDING, MessageId(1)).unwrap();
    assert!(matches!(out, CreditOutcome::Pending(_)));
    assert_eq!(f.ledger(w), 0);
    assert_eq!(f.l.pending_mints(), m(5000));
}

#[test]
fn mint_to_technical_wallet_credits_and_notifies() {
    let mut f = Fx::new(LimitMode::Reject);
    let w = f.sink();
    let out = f.l.mint_to(&mut f.ids, 1, w, m(5000), FUNDING, MessageId(1)).unwrap();
    let CreditOutcome::Completed(c) = out else { panic!("{out:?}") };
    assert_eq!((c.wallet, c.owner, c.amount), (w, FMI, m(5000)));
    assert_eq!(f.ledger(w), 5000);
}

#[test]
fn mint_to_unknown_wallet() {
    let mut f = Fx::new(LimitMode::Reject);
    let r = f.l.mint_to(&mut f.ids, 1, WalletId(99), m(5000), FUNDING, MessageId(1));
    assert_eq!(r, Err(LedgerError::UnknownWallet(WalletId(99))));
}

#[test]
fn confirm_credit_outcomes() {
    let mut f = Fx::new(LimitMode::Reject);
    let w = f.user_wallet(Some(20000), 5000);
    let CreditOutcome::Pending(p) = f.l.mint_to(&mut f.ids, 1, w, m(5000), FUNDING, MessageId(1)).unwrap() else { panic!() };
    assert!(matches!(f.l.confirm_credit(2, p, OTHER_PIP, Decision::Approve), Err(LedgerError::WrongPip { .. })));
    assert!(matches!(f.l.confirm_credit(2, p, PIP, Decision::Approve).unwrap(), CreditOutcome::Completed(_)));
    assert_eq!(f.ledger(w), 10000);
    assert_eq!(f.l.confirm_credit(2, p, PIP, Decision::Approve), Err(LedgerError::AlreadyDecided(p)));

    let CreditOutcome::Pending(q) = f.l.mint_to(&mut f.ids, 3, w, m(5000), FUNDING, MessageId(2)).unwrap() else { panic!() };
    let out = f.l.confirm_credit(4, q, PIP, Decision::Reject("declined".into())).unwrap();
    let CreditOutcome::Rejected(r) = out else { panic!("{out:?}") };
    assert_eq!(r.amount, m(5000));
    assert_eq!(f.ledger(w), 10000);
}

#[test]
fn rejected_transfer_returns_funds_to_payer() {
    let mut f = Fx::new(LimitMode::Reject);
    let a = f.user_wallet(None, 8000);
    let b = f.user_wallet(None, 0);
    let CreditOutcome::Pending(p) = f.pay(a, b, 5000, 0).unwrap() else { panic!() };
    assert_eq!(f.ledger(a), 3000);
    assert_eq!(f.l.suspense(), m(5000));
    f.l.confirm_credit(2, p, PIP, Decision::Reject("no".into())).unwrap();
    assert_eq!((f.ledger(a), f.ledger(b)), (8000, 0));
    assert!(f.l.check_invariants().is_ok());
}

#[test]
fn holding_limit_modes() {
    let mut f = Fx::new(LimitMode::Waterfall);
    let w = f.user_wallet(Some(20000), 19000);
    // Excess is balance + incoming - limit = 19000 + 5000 - 20000.
    assert_eq!(
        f.l.enforce_holding_limit(w, m(5000), LimitMode::Waterfall).unwrap(),
        LimitOutcome::PartialWithWaterfall { credit: m(1000), excess: m(4000) }
    );
    assert_eq!(f.l.enforce_holding_limit(w, m(5000), LimitMode::Reject).unwrap(), LimitOutcome::Rejected);
    let empty = f.user_wallet(Some(20000), 0);
    for mode in [LimitMode::Reject, LimitMode::Waterfall] {
        assert_eq!(f.l.enforce_holding_limit(empty, m(5000), mode).unwrap(), LimitOutcome::FullCredit);
    }
}

#[test]
fn waterfall_sends_excess_to_linked_account() {
    let mut f = Fx::new(LimitMode::Waterfall);
    let w = f.user_wallet(Some(20000), 19000);
    let CreditOutcome::Pending(p) = f.l.mint_to(&mut f.ids, 1, w, m(5000), FUNDING, MessageId(1)).unwrap() else { panic!() };
    let CreditOutcome::Completed(c) = f.l.confirm_credit(2, p, PIP, Decision::Approve).unwrap() else { panic!() };
    assert_eq!(c.waterfall, Some((LINKED, m(4000))));
    assert_eq!(f.ledger(w), 20000);
}

#[test]
fn reject_mode_leaves_balance() {
    let mut f = Fx::new(LimitMode::Reject);
    let w = f.user_wallet(Some(20000), 19000);
    let CreditOutcome::Pending(p) = f.l.mint_to(&mut f.ids, 1, w, m(5000), FUNDING, MessageId(1)).unwrap() else { panic!() };
    assert!(matches!(f.l.confirm_credit(2, p, PIP, Decision::Approve).unwrap(), CreditOutcome::Rejected(_)));
    assert_eq!(f.ledger(w), 19000);
}

#[test]
fn min_available_inequality() {
    let mut f = Fx::new(LimitMode::Reject);
    let w = f.user_wallet(None, 10000);
    let sink = f.sink();
    f.lock(w, 3000, 50).unwrap();
    // 10000 - 7000 - 3000 = 0, below the minimum of 3000.
    assert!(matches!(f.pay(w, sink, 7000, 3000), Err(LedgerError::InsufficientAvailable { .. })));
    let v = f.user_wallet(None, 10000);
    f.pay(v, sink, 10000, 0).unwrap();
    assert_eq!(f.ledger(v), 0);
    assert_eq!(f.pay(WalletId(99), sink, 1, 0).unwrap_err(), LedgerError::UnknownWallet(WalletId(99)));
}

#[test]
fn lock_keeps_ledger_and_reduces_available() {
    let mut f = Fx::new(LimitMode::Reject);
    let w = f.user_wallet(None, 10000);
    f.lock(w, 3000, 50).unwrap();
    assert_eq!((f.ledger(w), f.available(w)), (10000, 7000));

    let v = f.user_wallet(None, 10000);
    f.lock(v, 8000, 50).unwrap();
    assert!(matches!(f.lock(v, 3000, 50), Err(LedgerError::InsufficientAvailable { .. })));
    assert_eq!(f.lock(v, 0, 50), Err(LedgerError::ZeroAmount));
}

#[test]
fn release_debits_ledger_not_available() {
    let mut f = Fx::new(LimitMode::Reject);
    let w = f.user_wallet(None, 10000);
    let lock = f.lock(w, 3000, 50).unwrap();
    let (instr, done) = f.l.release_and_pay(5, lock, PIP, PayTarget::Burn).unwrap();
    assert_eq!(instr.amount, m(3000));
    assert!(done.is_none());
    assert_eq!((f.ledger(w), f.available(w)), (7000, 7000));
    assert_eq!(f.l.release_and_pay(6, lock, PIP, PayTarget::Burn).unwrap_err(), LedgerError::LockNotActive(lock));
}

#[test]
fn expiry_is_exclusive() {
    let mut f = Fx::new(LimitMode::Reject);
    let w = f.user_wallet(None, 10000);
    let lock = f.lock(w, 3000, 10).unwrap();
    assert!(f.l.expire_locks(10).is_empty());
    assert_eq!(f.l.lock(lock).unwrap().state, LockState::Active);
    assert_eq!(f.l.expire_locks(11), vec![lock]);
    assert_eq!(f.l.lock(lock).unwrap().state, LockState::Expired);
    assert_eq!(f.available(w), 10000);
    assert_eq!(f.l.release_and_pay(12, lock, PIP, PayTarget::Burn).unwrap_err(), LedgerError::LockNotActive(lock));
    assert!(f.l.expire_locks(20).is_empty());
}

#[test]
fn burn_for_conversion() {
    let mut f = Fx::new(LimitMode::Reject);
    let w = f.user_wallet(None, 5000);
    let instr = f.l.burn_from(1, w, m(5000), Money::ZERO, PIP, FUNDING).unwrap();
    assert_eq!((instr.amount, f.ledger(w)), (m(5000), 0));

    let v = f.user_wallet(None, 4000);
    assert!(matches!(f.l.burn_from(1, v, m(5000), Money::ZERO, PIP, FUNDING), Err(LedgerError::InsufficientAvailable { .. })));

    let u = f.user_wallet(None, 6000);
    f.lock(u, 2000, 50).unwrap();
    assert!(matches!(f.l.burn_from(1, u, m(5000), Money::ZERO, PIP, FUNDING), Err(LedgerError::InsufficientAvailable { .. })));
    assert!(f.l.check_invariants().is_ok());
}

#[test]
fn only_the_managing_pip_moves_funds() {
    let mut f = Fx::new(LimitMode::Reject);
    let w = f.user_wallet(None, 5000);
    let sink = f.sink();
    let r = f.l.transfer(&mut f.ids, 1, w, sink, m(10), Money::ZERO, OTHER_PIP, MessageId(1));
    assert!(matches!(r, Err(LedgerError::Unauthorised { .. })));
}
