//! Digital pounds out to the merchant's bank account.

use crate::domain::ParticipantRole as R;
use crate::ids::{AccountId, ParticipantId, WalletId};
use crate::ledger::CreditOutcome;
use crate::money::Money;
use crate::options::{Slot, UseCase};
use crate::participants::Partner;
use crate::privacy::{FieldValue, Fields};

use super::super::config::FmiDataPath;
use super::super::message::{Body, Message, MsgKind as K};
use super::super::sim::{amount, id, ok_flag, opt_id, text, PendingCtx, Route, Sim, H};

impl Sim {
    /// Payouts are their own phase in a request to pay. After a lock they
    /// are part of releasing it.
    pub(crate) fn payout_phase(&self) -> Option<Slot> {
        match self.use_case() {
            UseCase::U3 => Some(Slot::U3S3),
            _ => Some(Slot::U2S2),
        }
    }

    fn merchant_data(&self, p: ParticipantId) -> Result<Fields, String> {
        let mut f = Fields::new();
        for k in ["merchant_name", "merchant_account"] {
            f.insert(k.to_string(), FieldValue::Datum(self.need_datum(p, k)?));
        }
        Ok(f)
    }

    /// The merchant acquirer's partner institution, which settles payouts
    /// under the partner option.
    pub(crate) fn acquirer_partner(&self) -> Result<ParticipantId, String> {
        let acquirer = self.sc.acquirer.as_deref().and_then(|a| self.w.id(a)).ok_or("scenario has no acquirer")?;
        self.w.part(acquirer).partner(Partner::Acquirer).ok_or_else(|| "acquirer has no partner institution".into())
    }

    #[allow(clippy::too_many_arguments)]
    fn wallet_transfer(&mut self, by: ParticipantId, from: WalletId, to: WalletId, amt: Money, usage: &str, phase: Option<Slot>, extra: Body) {
        let body = extra
            .text("from_wallet", from)
            .text("wallet", to)
            .amount("amount", amt)
            .amount("min", self.min_for(by, from))
            .text("ref", self.reference())
            .text("use", usage);
        self.send(by, self.w.one.cbdc, K::WalletTransfer, phase, body);
    }

    /// Pay `amt` out of `source` to the merchant, by the bound payout option.
    /// `initiator` manages `source` and holds the merchant's details.
    pub(crate) fn start_payout(&mut self, initiator: ParticipantId, source: WalletId, amt: Money) -> H {
        self.keep_text(initiator, "source", source);
        self.keep(initiator, "amount", FieldValue::Amount(amt));
        let consumer_pip = self.consumer_pip(self.payer)?;
        let merchant_bank = self.need_id::<ParticipantId>(initiator, "merchant_bank")?;
        match self.binding(Slot::U2S2) {
            1 => {
                let mut body = Body::new()
                    .text("wallet", source)
                    .amount("amount", amt)
                    .amount("min", self.min_for(initiator, source))
                    .text("ref", self.reference());
                body.plain.extend(self.merchant_data(initiator)?);
                self.send(initiator, self.w.one.cbdc, K::PaymentToBank, self.payout_phase(), body);
                Ok(())
            }
            2 => {
                let target = self.acquirer_partner().ok().and_then(|p| self.w.part(p).wallet);
                let Some(target) = target else { return self.payout_failed(initiator, "no partner institution wallet") };
                self.wallet_transfer(initiator, source, target, amt, "payout", self.payout_phase(), Body::new().text("info_from", initiator));
                Ok(())
            }
            3 => {
                let target = self.w.part(consumer_pip).wallet.ok_or("consumer PIP holds no wallet")?;
                let extra = if initiator == consumer_pip {
                    self.keep_text(initiator, "convert_self", true);
                    Body::new()
                } else {
                    Body::new().text("info_from", initiator)
                };
                self.wallet_transfer(initiator, source, target, amt, "payout", self.payout_phase(), extra);
                Ok(())
            }
            4 => {
                let fmi = self.w.one.fmi.ok_or("world has no FMI")?;
                if initiator == fmi {
                    return self.payout_fps(fmi);
                }
                let target = self.w.part(fmi).wallet.ok_or("FMI holds no wallet")?;
                let extra = match self.w.fmi_data_path {
                    FmiDataPath::Embedded => Body::new().sealed(fmi, self.merchant_data(initiator)?),
                    _ => Body::new().text("info_from", initiator),
                };
                self.wallet_transfer(initiator, source, target, amt, "payout", self.payout_phase(), extra);
                Ok(())
            }
            _ => {
                let eps = self.w.one.eps.ok_or("world has no enhanced payment system")?;
                let body = Body::new()
                    .text("direction", "debit")
                    .text("wallet", source)
                    .amount("amount", amt)
                    .amount("min", self.min_for(initiator, source))
                    .text("ref", self.reference())
                    .text("merchant_bank", merchant_bank)
                    .sealed(merchant_bank, self.merchant_data(initiator)?);
                self.send(initiator, eps, K::EpsPayment, self.payout_phase(), body);
                Ok(())
            }
        }
    }

    /// Tell the consumer the payout did not happen.
    pub(crate) fn payout_failed(&mut self, me: ParticipantId, reason: &str) -> H {
        let body = Body::new().text("ref", self.reference()).text("reason", reason);
        self.send(me, self.payer, K::PaymentFailed, None, body);
        Ok(())
    }

    pub(super) fn credit_notification(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        if m.text("use") != Some("payout") {
            return Ok(());
        }
        if let Some(w) = opt_id::<WalletId>(m, "from_wallet") {
            self.keep_text(me, "source", w);
        }
        self.keep(me, "amount", FieldValue::Amount(amount(m, "amount")?));
        let opened = self.open(m);
        self.keep_info_from(me, m, &opened);
        if self.kept_datum(me, "merchant_account").is_some() {
            return self.payout_fps(me);
        }
        let Some(src) = opt_id::<ParticipantId>(m, "info_from") else {
            return Err("payout credit without merchant details".into());
        };
        self.keep_text(me, "awaiting", "payout");
        self.send(me, src, K::PaymentInfoRequest, m.phase, Body::new().copy(m, &["ref"]));
        Ok(())
    }

    /// Pay the merchant's account from `me`'s own reserves.
    pub(crate) fn payout_fps(&mut self, me: ParticipantId) -> H {
        let details = self.need_datum(me, "merchant_account")?;
        let to = self.account_by_details(&details)?;
        let amt = self.kept_amount(me, "amount")?;
        let from = self.w.part(me).settlement.or(self.w.part(me).account).ok_or("no account to pay out from")?;
        let reference = self.reference();
        self.fps_send(me, from, to, amt, "credit", &reference, None, self.payout_phase(), Body::new())
    }

    /// The payout to the merchant bounced: give the consumer their digital
    /// pounds back.
    pub(crate) fn payout_refund(&mut self, me: ParticipantId, reason: &str) -> H {
        let to = self.kept_id::<WalletId>(me, "refund_to").or_else(|| self.kept_id(me, "source")).ok_or("nowhere to refund")?;
        let amt = self.kept_amount(me, "amount")?;
        if me == self.w.one.cbdc {
            let backing = self.w.rail.backing().ok_or("no backing account")?;
            let env = self.w.ids.next();
            let outcome = self.w.ledger.mint_to(&mut self.w.ids, self.now, to, amt, backing, env).map_err(|e| e.to_string())?;
            let fields = Body::new().text("ref", self.reference()).text("use", "refund").text("reason", reason).plain;
            return match outcome {
                CreditOutcome::Pending(pc) => {
                    self.pending.insert(pc, PendingCtx { initiator: me, route: Route::Transfer, phase: self.payout_phase(), fields: fields.clone(), sealed: vec![] });
                    let body = Body::new().text("pending", pc).text("wallet", to).amount("amount", amt);
                    let mut body = body;
                    body.plain.extend(fields);
                    let pip = self.w.ledger.wallet(to).map_err(|e| e.to_string())?.managing_pip;
                    self.send(me, pip, K::CreditApprovalRequest, self.payout_phase(), body);
                    Ok(())
                }
                CreditOutcome::Completed(_) => self.payout_failed(me, reason),
                CreditOutcome::Rejected(r) => Err(format!("refund rejected: {}", r.reason)),
            };
        }
        let own = self.w.part(me).wallet.ok_or("refunder holds no wallet")?;
        let extra = Body::new().text("reason", reason);
        self.wallet_transfer(me, own, to, amt, "refund", self.payout_phase(), extra);
        Ok(())
    }

    pub(super) fn cbdc_payment_to_bank(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let wallet: WalletId = id(m, "wallet")?;
        let amt = amount(m, "amount")?;
        let min = m.amount("min").unwrap_or(Money::ZERO);
        let by = m.sender();
        self.check_min(by, wallet, min);
        let details = m.datum("merchant_account").cloned().ok_or("PaymentToBank without account details")?;
        let acct: AccountId = self.account_by_details(&details)?;
        let reference = text(m, "ref")?.to_string();
        let backing = self.w.rail.backing().ok_or("no backing account")?;
        let body = Body::new().text("ref", &reference).amount("amount", amt);
        match self.w.ledger.burn_from(self.now, wallet, amt, min, by, backing) {
            Ok(_) => {
                self.keep_text(me, "refund_to", wallet);
                self.keep(me, "amount", FieldValue::Amount(amt));
                self.fps_send(me, backing, acct, amt, "credit", &reference, None, m.phase, Body::new())?;
                self.send(me, by, K::PaymentResult, m.phase, body.text("ok", true));
            }
            Err(e) => {
                let why = self.describe_ledger(&e);
                self.send(me, by, K::PaymentResult, m.phase, body.text("ok", false).text("reason", why));
            }
        }
        Ok(())
    }

    pub(super) fn payment_result(&mut self, m: &Message) -> H {
        if ok_flag(m) {
            return Ok(());
        }
        let reason = m.text("reason").unwrap_or("payout failed").to_string();
        let me = m.env.receiver;
        if self.w.role(me) == R::Fmi {
            return self.payout_refund(me, &reason);
        }
        self.payout_failed(me, &reason)
    }
}
