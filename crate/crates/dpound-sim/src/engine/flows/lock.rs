//! Conditional payments: placing, confirming, releasing and cancelling locks.

use crate::domain::ParticipantRole as R;
use crate::ids::{LockId, ParticipantId, WalletId};
use crate::ledger::{Beneficiary, PayTarget};
use crate::options::Slot;
use crate::participants::{EscrowRecord, EscrowState, PipLock, PipLockState, Service};
use crate::privacy::FieldValue;

use super::super::config::FmiDataPath;
use super::super::message::{Body, Message, MsgKind as K};
use super::super::sim::{amount, id, ok_flag, LockEvent, Sim, H};

const PLACE: Option<Slot> = Some(Slot::U3S2);
const RELEASE: Option<Slot> = Some(Slot::U3S3);

impl Sim {
    fn lock_terms(&self, pip: ParticipantId) -> Result<(WalletId, crate::money::Money, u64, Beneficiary), String> {
        let wallet = self.need_id::<WalletId>(pip, "wallet")?;
        let amt = self.kept_amount(pip, "amount")?;
        let expiry: u64 = self.kept_text(pip, "expiry").ok_or("no lock expiry")?.parse().map_err(|_| "bad expiry")?;
        let acct = self.account_by_details(&self.need_datum(pip, "merchant_account")?)?;
        Ok((wallet, amt, expiry, Beneficiary::Account(acct)))
    }

    /// The consumer's name for the acquirer, sealed when it passes through
    /// a holder that has no need to read it.
    fn with_consumer_name(&self, pip: ParticipantId, acquirer: ParticipantId, body: Body, sealed: bool) -> Result<Body, String> {
        let consumer = self.need_id::<ParticipantId>(pip, "consumer")?;
        let name = self.w.name_datum(consumer);
        if sealed {
            let mut f = crate::privacy::Fields::new();
            f.insert("consumer_name".into(), FieldValue::Datum(name));
            Ok(body.sealed(acquirer, f))
        } else {
            Ok(body.datum("consumer_name", name))
        }
    }

    /// Lock the consumer's funds once they have authorised the request.
    pub(crate) fn place_lock(&mut self, pip: ParticipantId) -> H {
        let (wallet, amt, expiry, beneficiary) = self.lock_terms(pip)?;
        let reference = self.reference();
        let option = self.binding(Slot::U3S2);
        match option {
            1 => {
                let acquirer = self.need_id::<ParticipantId>(pip, "acquirer")?;
                let body = Body::new()
                    .text("wallet", wallet)
                    .amount("amount", amt)
                    .text("expiry", expiry)
                    .text("beneficiary", beneficiary)
                    .text("acquirer", acquirer)
                    .text("ref", &reference);
                let body = self.with_consumer_name(pip, acquirer, body, true)?;
                self.send(pip, self.w.one.cbdc, K::LockFunds, PLACE, body);
                Ok(())
            }
            5 => {
                let fmi = self.w.one.fmi.ok_or("world has no FMI")?;
                let acquirer = self.need_id::<ParticipantId>(pip, "acquirer")?;
                let body = Body::new()
                    .text("wallet", wallet)
                    .amount("amount", amt)
                    .amount("min", self.min_for(pip, wallet))
                    .text("expiry", expiry)
                    .text("beneficiary", beneficiary)
                    .text("acquirer", acquirer)
                    .text("ref", &reference);
                let body = self.with_consumer_name(pip, acquirer, body, true)?;
                self.send(pip, fmi, K::LockFunds, PLACE, body);
                Ok(())
            }
            _ => {
                let available = self.w.ledger.available(wallet).map_err(|e| e.to_string())?;
                let held = self.min_for(pip, wallet);
                if available.saturating_sub(held) < amt {
                    return self.respond(pip, false, Some("insufficient funds in Consumer wallet"));
                }
                let lock: LockId = self.w.ids.next();
                self.w.pip_locks.entry(pip).or_default().place(PipLock { id: lock, wallet, amount: amt, beneficiary, expiry, state: PipLockState::Active });
                self.timeline.push(LockEvent::Placed { lock, pip, wallet, amount: amt });
                self.keep_text(pip, "lock", lock);
                self.confirm_lock(pip)
            }
        }
    }

    /// Send the lock confirmation toward the acquirer by the bound option.
    fn confirm_lock(&mut self, pip: ParticipantId) -> H {
        let lock = self.need_id::<LockId>(pip, "lock")?;
        let acquirer = self.need_id::<ParticipantId>(pip, "acquirer")?;
        let body = Body::new().text("ok", true).text("lock", lock).text("acquirer", acquirer).text("ref", self.reference());
        let option = self.binding(Slot::U3S2);
        let body = self.with_consumer_name(pip, acquirer, body, option == 2 && self.w.seal_via_cbdc)?;
        match option {
            2 => self.send(pip, self.w.one.cbdc, K::LockConfirmation, PLACE, body),
            3 => match self.with_registration(pip, acquirer, "lock_confirm", PLACE) {
                Ok(true) => self.send(pip, acquirer, K::LockConfirmation, PLACE, body),
                Ok(false) => {}
                Err(e) => return self.respond(pip, false, Some(&e)),
            },
            4 => match self.w.one.network {
                Some(n) if self.w.part(pip).is_onboarded(Service::Network) => self.send(pip, n, K::LockConfirmation, PLACE, body),
                _ => return self.respond(pip, false, Some("PIP not onboarded to the network")),
            },
            n => return Err(format!("U3.S2.D{n} does not confirm from the PIP")),
        }
        Ok(())
    }

    pub(super) fn lock_confirm_after_registration(&mut self, m: &Message) -> H {
        let pip = m.env.receiver;
        let acquirer = self.need_id::<ParticipantId>(pip, "acquirer")?;
        let lock = self.need_id::<LockId>(pip, "lock")?;
        let body = Body::new().text("ok", true).text("lock", lock).text("acquirer", acquirer).text("ref", self.reference());
        let body = self.with_consumer_name(pip, acquirer, body, false)?;
        self.send(pip, acquirer, K::LockConfirmation, PLACE, body);
        Ok(())
    }

    pub(super) fn cbdc_lock_funds(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let wallet: WalletId = id(m, "wallet")?;
        let amt = amount(m, "amount")?;
        let expiry: u64 = m.text("expiry").and_then(|e| e.parse().ok()).ok_or("LockFunds without expiry")?;
        let beneficiary = Beneficiary::Account(id(m, "beneficiary")?);
        let body = Body::new().copy(m, &["ref"]);
        match self.w.ledger.lock_funds(&mut self.w.ids, self.now, wallet, amt, beneficiary, expiry, m.sender()) {
            Ok(lock) => {
                let body = body.text("ok", true).text("lock", lock);
                self.send(me, m.sender(), K::LockConfirmation, m.phase, body.clone());
                let partner = self.acquirer_partner()?;
                self.send(me, partner, K::LockConfirmation, m.phase, body.copy(m, &["acquirer"]).forwarding(&m.env.sealed));
            }
            Err(e) => {
                let body = body.text("ok", false).text("reason", self.describe_ledger(&e));
                self.send(me, m.sender(), K::LockConfirmation, m.phase, body);
            }
        }
        Ok(())
    }

    pub(super) fn fmi_lock_funds(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let own = self.w.part(me).wallet.ok_or("FMI holds no wallet")?;
        for k in ["wallet", "expiry", "beneficiary", "acquirer"] {
            if let Some(v) = m.text(k) {
                self.keep_text(me, &format!("escrow_{k}"), v);
            }
        }
        self.keep_text(me, "consumer_pip", m.sender());
        self.held.insert((me, "escrow".into()), m.env.sealed.clone());
        let body = Body::new()
            .copy(m, &["amount", "min", "ref"])
            .text("from_wallet", id::<WalletId>(m, "wallet")?)
            .text("wallet", own)
            .text("on_behalf", m.sender())
            .text("use", "escrow");
        self.send(me, self.w.one.cbdc, K::WalletTransfer, m.phase, body);
        Ok(())
    }

    /// The consumer's funds reached (or failed to reach) the FMI's wallet.
    pub(crate) fn fmi_escrow_result(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let pip = self.need_id::<ParticipantId>(me, "consumer_pip")?;
        if !ok_flag(m) {
            let body = Body::new().copy(m, &["ref", "reason"]).text("ok", false);
            self.send(me, pip, K::LockConfirmation, PLACE, body);
            return Ok(());
        }
        let lock: LockId = self.w.ids.next();
        let expiry: u64 = self.kept_text(me, "escrow_expiry").and_then(|e| e.parse().ok()).ok_or("escrow without expiry")?;
        let source = self.need_id::<WalletId>(me, "escrow_wallet")?;
        let beneficiary = Beneficiary::Account(self.need_id(me, "escrow_beneficiary")?);
        self.w.escrow.open(EscrowRecord { id: lock, source_wallet: source, amount: amount(m, "amount")?, beneficiary, expiry, state: EscrowState::Active });
        let acquirer = self.need_id::<ParticipantId>(me, "escrow_acquirer")?;
        let body = Body::new().text("ok", true).text("lock", lock).text("ref", self.reference());
        self.send(me, pip, K::LockConfirmation, PLACE, body.clone());
        let sealed = self.held.remove(&(me, "escrow".to_string())).unwrap_or_default();
        self.send(me, acquirer, K::LockConfirmation, PLACE, body.forwarding(&sealed));
        Ok(())
    }

    pub(super) fn lock_confirmation(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let body = Body::new().copy(m, &["ok", "lock", "acquirer", "ref", "reason", "consumer_name"]).forwarding(&m.env.sealed);
        match self.w.role(me) {
            R::Acquirer => {
                let merchant = self.need_id::<ParticipantId>(me, "merchant")?;
                let opened = self.open(m);
                if let Some(FieldValue::Datum(d)) = opened.get("consumer_name").or_else(|| m.env.plaintext.get("consumer_name")) {
                    self.keep(me, "consumer_name", FieldValue::Datum(d.clone()));
                }
                if ok_flag(m) {
                    self.send(me, merchant, K::LockConfirmed, None, Body::new().copy(m, &["ref", "lock"]));
                } else {
                    let reason = m.text("reason").unwrap_or("lock refused").to_string();
                    self.send(me, merchant, K::PaymentFailed, None, Body::new().copy(m, &["ref"]).text("reason", reason));
                }
            }
            R::CentralBankCbdcSystem => {
                let partner = self.acquirer_partner()?;
                self.send(me, partner, K::LockConfirmation, m.phase, body);
            }
            _ if me == self.consumer_pip(self.payer)? => {
                // The answer to our own lock instruction. The holder has
                // already told the acquirer's side.
                if !ok_flag(m) {
                    let reason = m.text("reason").unwrap_or("lock refused").to_string();
                    return self.respond(me, false, Some(&reason));
                }
                self.keep_text(me, "lock", id::<LockId>(m, "lock")?);
            }
            _ => {
                let to: ParticipantId = id(m, "acquirer")?;
                self.send(me, to, K::LockConfirmation, m.phase, body);
            }
        }
        Ok(())
    }

    /// Where a ledger release sends the funds, by payout option.
    fn release_target(&self) -> Result<(PayTarget, Option<ParticipantId>), String> {
        let consumer_pip = self.consumer_pip(self.payer)?;
        let wallet_of = |p: ParticipantId| self.w.part(p).wallet.map(|w| (PayTarget::Wallet(w), Some(p))).ok_or("intermediary holds no wallet".to_string());
        match self.binding(Slot::U2S2) {
            2 => wallet_of(self.acquirer_partner()?),
            3 => wallet_of(consumer_pip),
            4 => wallet_of(self.w.one.fmi.ok_or("world has no FMI")?),
            _ => Ok((PayTarget::Burn, None)),
        }
    }

    pub(super) fn pip_release(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let lock = self.need_id::<LockId>(me, "lock")?;
        match self.binding(Slot::U3S3) {
            1 => {
                let mut body = Body::new().text("lock", lock).text("ref", self.reference()).text("merchant_bank", self.need_id::<ParticipantId>(me, "merchant_bank")?);
                let data = self.merchant_fields(me)?;
                body.plain.extend(data.clone());
                match (self.binding(Slot::U2S2), self.w.one.fmi) {
                    (5, _) => {
                        let bank = self.need_id::<ParticipantId>(me, "merchant_bank")?;
                        body = body.sealed(bank, data);
                    }
                    (4, Some(fmi)) if self.w.fmi_data_path == FmiDataPath::Embedded => body = body.sealed(fmi, data),
                    _ => {}
                }
                self.send(me, self.w.one.cbdc, K::ReleaseAndPay, RELEASE, body);
                Ok(())
            }
            2 => {
                let l = self.w.pip_locks.get_mut(&me).ok_or("PIP holds no locks")?.release(lock).map_err(|e| e.to_string())?;
                self.timeline.push(LockEvent::Ended { lock });
                self.start_payout(me, l.wallet, l.amount)
            }
            _ => {
                let fmi = self.w.one.fmi.ok_or("world has no FMI")?;
                let body = Body::new()
                    .text("lock", lock)
                    .text("ref", self.reference())
                    .text("merchant_bank", self.need_id::<ParticipantId>(me, "merchant_bank")?)
                    .sealed(fmi, self.merchant_fields(me)?);
                self.send(me, fmi, K::ReleaseInstruction, RELEASE, body);
                Ok(())
            }
        }
    }

    fn merchant_fields(&self, p: ParticipantId) -> Result<crate::privacy::Fields, String> {
        let mut f = crate::privacy::Fields::new();
        for k in ["merchant_name", "merchant_account"] {
            f.insert(k.to_string(), FieldValue::Datum(self.need_datum(p, k)?));
        }
        Ok(f)
    }

    pub(super) fn fmi_release(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let lock: LockId = id(m, "lock")?;
        let r = self.w.escrow.settle(lock, EscrowState::Released).map_err(|e| e.to_string())?;
        let opened = self.open(m);
        self.keep_info_from(me, m, &opened);
        self.keep_text(me, "merchant_bank", id::<ParticipantId>(m, "merchant_bank")?);
        self.keep_text(me, "refund_to", r.source_wallet);
        let own = self.w.part(me).wallet.ok_or("FMI holds no wallet")?;
        self.start_payout(me, own, r.amount)
    }

    pub(super) fn cbdc_release_and_pay(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let pip = m.sender();
        let lock: LockId = id(m, "lock")?;
        let (target, owner) = self.release_target()?;
        let fail = |s: &mut Sim, why: String| {
            let body = Body::new().copy(m, &["ref"]).text("ok", false).text("reason", why);
            s.send(me, pip, K::PaymentResult, RELEASE, body);
            Ok(())
        };
        let (instr, completion) = match self.w.ledger.release_and_pay(self.now, lock, pip, target) {
            Ok(r) => r,
            Err(e) => {
                let why = self.describe_ledger(&e);
                return fail(self, why);
            }
        };
        let reference = self.reference();
        match (completion, owner) {
            (Some(c), Some(owner)) => {
                let body = Body::new()
                    .text("ref", &reference)
                    .text("use", "payout")
                    .text("from_wallet", instr.wallet)
                    .text("info_from", pip)
                    .amount("amount", c.amount)
                    .forwarding(&m.env.sealed);
                self.send(me, owner, K::CreditNotification, RELEASE, body);
                Ok(())
            }
            _ if self.binding(Slot::U2S2) == 5 => {
                let eps = self.w.one.eps.ok_or("world has no enhanced payment system")?;
                let body = Body::new()
                    .text("ref", &reference)
                    .text("ok", true)
                    .copy(m, &["merchant_bank"])
                    .text("origin", pip)
                    .amount("amount", instr.amount)
                    .forwarding(&m.env.sealed);
                self.send(me, eps, K::EpsDebitResult, RELEASE, body);
                Ok(())
            }
            _ => {
                let Beneficiary::Account(acct) = instr.target else { return fail(self, "lock pays a wallet".into()) };
                let backing = self.w.rail.backing().ok_or("no backing account")?;
                self.keep_text(me, "refund_to", instr.wallet);
                self.keep(me, "amount", FieldValue::Amount(instr.amount));
                self.fps_send(me, backing, acct, instr.amount, "credit", &reference, None, RELEASE, Body::new())
            }
        }
    }

    pub(super) fn pip_cancel(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let lock = self.need_id::<LockId>(me, "lock")?;
        let reason = m.text("reason").unwrap_or("cancelled").to_string();
        let body = Body::new().text("lock", lock).text("ref", self.reference()).text("reason", &reason);
        match self.binding(Slot::U3S3) {
            1 => self.send(me, self.w.one.cbdc, K::CancelLock, RELEASE, body),
            2 => {
                self.w.pip_locks.get_mut(&me).ok_or("PIP holds no locks")?.cancel(lock).map_err(|e| e.to_string())?;
                self.timeline.push(LockEvent::Ended { lock });
                self.send(me, self.payer, K::LockCancelled, None, body);
            }
            _ => {
                let fmi = self.w.one.fmi.ok_or("world has no FMI")?;
                self.send(me, fmi, K::CancelLock, RELEASE, body);
            }
        }
        Ok(())
    }

    pub(super) fn cbdc_cancel(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let lock: LockId = id(m, "lock")?;
        self.w.ledger.cancel_lock(self.now, lock, m.sender()).map_err(|e| e.to_string())?;
        self.send(me, m.sender(), K::LockCancelled, m.phase, Body::new().copy(m, &["lock", "ref", "reason"]));
        Ok(())
    }

    pub(super) fn fmi_cancel(&mut self, m: &Message) -> H {
        let reason = m.text("reason").unwrap_or("cancelled").to_string();
        self.escrow_refund(id(m, "lock")?, &reason)
    }

    pub(crate) fn ledger_lock_expired(&mut self, lock: LockId) -> H {
        let l = self.w.ledger.lock(lock).map_err(|e| e.to_string())?;
        let pip = self.w.ledger.wallet(l.wallet).map_err(|e| e.to_string())?.managing_pip;
        let body = Body::new().text("lock", lock).text("ref", self.reference()).text("reason", "lock expired");
        self.send(self.w.one.cbdc, pip, K::LockCancelled, RELEASE, body);
        Ok(())
    }

    pub(crate) fn pip_lock_ended(&mut self, pip: ParticipantId, lock: LockId, reason: &str) -> H {
        let body = Body::new().text("lock", lock).text("ref", self.reference()).text("reason", reason);
        self.send(pip, self.payer, K::LockCancelled, None, body);
        Ok(())
    }

    /// Return escrowed funds to the consumer's wallet.
    pub(crate) fn escrow_refund(&mut self, lock: LockId, reason: &str) -> H {
        let fmi = self.w.one.fmi.ok_or("world has no FMI")?;
        let r = self.w.escrow.settle(lock, EscrowState::Refunded).map_err(|e| e.to_string())?;
        let own = self.w.part(fmi).wallet.ok_or("FMI holds no wallet")?;
        self.keep(fmi, "amount", FieldValue::Amount(r.amount));
        let body = Body::new()
            .text("from_wallet", own)
            .text("wallet", r.source_wallet)
            .amount("amount", r.amount)
            .amount("min", self.min_for(fmi, own))
            .text("ref", self.reference())
            .text("use", "refund")
            .text("lock", lock)
            .text("reason", reason);
        self.send(fmi, self.w.one.cbdc, K::WalletTransfer, RELEASE, body);
        Ok(())
    }
}
