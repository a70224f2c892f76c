//! Moving money: bank money into digital pounds, the instant payment
//! scheme, core-ledger transfers and credit confirmation, and deferred
//! settlement through the enhanced payment system.

use std::collections::BTreeMap;

use crate::domain::{ParticipantRole, PersonalDatum};
use crate::ids::{AccountId, BatchId, ParticipantId, PendingCreditId, WalletId};
use crate::ledger::{Completion, CreditOutcome, Decision as LedgerDecision};
use crate::money::Money;
use crate::netting::Obligation;
use crate::options::Slot;
use crate::privacy::{FieldValue, Fields, SealedSection};
use crate::rail::FpsInstruction;

use super::super::config::{Decision, FmiDataPath};
use super::super::message::{Body, Message, MsgKind as K};
use super::super::sim::{amount, id, ok_flag, opt_id, text, PendingCtx, Route, Sim, H};

/// Personal data fields that travel with payment information.
pub(crate) const INFO_KEYS: [&str; 5] = ["payer_name", "purpose_text", "merchant_name", "merchant_account", "consumer_name"];

/// Plaintext fields a ledger credit carries between hops.
const CREDIT_KEYS: [&str; 6] = ["ref", "use", "info_from", "reason", "lock", "from_wallet"];

impl Sim {
    pub(crate) fn kept_amount(&self, p: ParticipantId, k: &str) -> Result<Money, String> {
        match self.w.part(p).recall(k) {
            Some(FieldValue::Amount(a)) => Ok(*a),
            _ => Err(format!("{} holds no `{k}`", self.w.name_of(p))),
        }
    }

    /// Data fields among `INFO_KEYS` that `p` holds.
    pub(crate) fn kept_info(&self, p: ParticipantId) -> Fields {
        let mut f = Fields::new();
        for k in INFO_KEYS {
            if let Some(d) = self.kept_datum(p, k) {
                f.insert(k.to_string(), FieldValue::Datum(d));
            }
        }
        f
    }

    pub(crate) fn keep_info_from(&mut self, p: ParticipantId, m: &Message, opened: &Fields) {
        for k in INFO_KEYS {
            if let Some(v) = opened.get(k).or_else(|| m.env.plaintext.get(k)) {
                self.keep(p, k, v.clone());
            }
        }
    }

    /// The customer account matching `sort-number` account details.
    pub(crate) fn account_by_details(&self, d: &PersonalDatum) -> Result<AccountId, String> {
        let (sort, number) = d.value.rsplit_once('-').ok_or("malformed account details")?;
        self.w
            .rail
            .customer_accounts()
            .find(|a| a.sort_code == sort && a.number == number)
            .map(|a| a.id)
            .ok_or_else(|| format!("no account {}", d.value))
    }

    pub(crate) fn payer_account(&self) -> Result<AccountId, String> {
        self.w.part(self.payer).account.ok_or_else(|| "payer has no account".into())
    }

    /// Bank money to digital pounds, once the payer has authorised.
    pub(super) fn u1_settle(&mut self, bank: ParticipantId) -> H {
        let phase = Some(Slot::U1S2);
        let reference = self.reference();
        let amt = self.kept_amount(bank, "amount")?;
        let wallet = self.need_id::<WalletId>(bank, "wallet")?;
        let pip = self.need_id::<ParticipantId>(bank, "pip")?;
        let payer_acct = self.payer_account()?;
        let info = self.kept_info(bank);
        let plain_info = |b: Body| {
            let mut b = b;
            for (k, v) in &info {
                if k == "payer_name" || k == "purpose_text" {
                    b.plain.insert(k.clone(), v.clone());
                }
            }
            b
        };
        let sealed_info: Fields =
            info.iter().filter(|(k, _)| *k == "payer_name" || *k == "purpose_text").map(|(k, v)| (k.clone(), v.clone())).collect();
        match self.binding(Slot::U1S2) {
            1 => {
                let backing = self.w.rail.backing().ok_or("no backing account")?;
                let extra = plain_info(Body::new().text("wallet", wallet));
                self.fps_send(bank, payer_acct, backing, amt, "mint", &reference, None, phase, extra)
            }
            2 => {
                let st = self.w.part(bank);
                let (Some(own), Some(internal)) = (st.wallet, st.internal_account) else {
                    return self.u1_fail(bank, "payer bank holds no wallet");
                };
                if let Err(e) = self.w.rail.book_transfer(self.now, payer_acct, internal, amt) {
                    let why = self.describe_rail(&e);
                    return self.u1_fail(bank, &why);
                }
                self.keep_text(bank, "undo", "book");
                let body = Body::new()
                    .text("from_wallet", own)
                    .text("wallet", wallet)
                    .amount("amount", amt)
                    .amount("min", self.min_for(bank, own))
                    .text("ref", &reference)
                    .text("use", "payment")
                    .text("info_from", bank);
                self.send(bank, self.w.one.cbdc, K::WalletTransfer, phase, body);
                Ok(())
            }
            3 => {
                let Some(partner) = self.w.part(pip).partner(crate::participants::Partner::Settlement) else {
                    return self.u1_fail(bank, "payee PIP has no settlement partner");
                };
                let to = self.w.part(partner).settlement.ok_or("settlement partner has no settlement account")?;
                let extra = plain_info(Body::new().text("wallet", wallet));
                self.fps_send(bank, payer_acct, to, amt, "convert", &reference, None, phase, extra)
            }
            4 => {
                let Some(to) = self.w.part(pip).account else {
                    return self.u1_fail(bank, "payee PIP has no account on the instant payment scheme");
                };
                let extra = plain_info(Body::new().text("wallet", wallet));
                self.fps_send(bank, payer_acct, to, amt, "convert", &reference, None, phase, extra)
            }
            5 => {
                let fmi = self.w.one.fmi.ok_or("world has no FMI")?;
                let to = self.w.part(fmi).settlement.ok_or("FMI has no settlement account")?;
                let extra = Body::new().text("wallet", wallet).sealed(pip, sealed_info);
                self.fps_send(bank, payer_acct, to, amt, "convert", &reference, None, phase, extra)
            }
            _ => {
                let eps = self.w.one.eps.ok_or("world has no enhanced payment system")?;
                if let Err(e) = self.w.rail.bank_debit(self.now, payer_acct, amt, &reference) {
                    let why = self.describe_rail(&e);
                    return self.u1_fail(bank, &why);
                }
                let body = Body::new()
                    .text("direction", "credit")
                    .text("wallet", wallet)
                    .text("pip", pip)
                    .amount("amount", amt)
                    .text("ref", &reference)
                    .sealed(pip, sealed_info);
                self.send(bank, eps, K::EpsPayment, phase, body);
                Ok(())
            }
        }
    }

    pub(super) fn fps_scheme(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let purpose = text(m, "purpose")?.to_string();
        let customer_payment = purpose != "return" && purpose != "waterfall";
        if customer_payment && self.take_scheme_failure() {
            let body = Body::new().copy(m, &["ref", "purpose", "amount"]).text("reason", "scheme failure");
            self.send(me, m.sender(), K::FpsRejected, m.phase, body);
            return Ok(());
        }
        let instr = FpsInstruction {
            id: m.env.id,
            from_account: id(m, "from")?,
            to_sort_code: text(m, "to_sort")?.to_string(),
            to_account: text(m, "to_number")?.to_string(),
            amount: amount(m, "amount")?,
            remittance: None,
        };
        match self.w.rail.fps_pay(self.now, &instr) {
            Ok(c) => {
                let mut body = Body::new().forwarding(&m.env.sealed);
                body.plain = m.env.plaintext.clone();
                for k in ["from", "to_sort", "to_number"] {
                    body.plain.remove(k);
                }
                let body = body.text("account", c.to).text("return_to", instr.from_account);
                self.send(me, c.notify, K::FpsCredit, m.phase, body);
            }
            Err(e) => {
                let why = self.describe_rail(&e);
                let body = Body::new().copy(m, &["ref", "purpose", "amount"]).text("reason", why);
                self.send(me, m.sender(), K::FpsRejected, m.phase, body);
            }
        }
        Ok(())
    }

    pub(super) fn fps_credit(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let acct: AccountId = id(m, "account")?;
        match text(m, "purpose")? {
            "mint" => self.cbdc_mint(m),
            "convert" => self.convert(m),
            "waterfall" => Ok(()),
            p @ ("credit" | "return") => {
                let Some(owner) = self.w.rail.customer_account(acct).map(|a| a.owner) else { return Ok(()) };
                if self.w.role(owner) != ParticipantRole::User {
                    return Ok(());
                }
                let kind = if p == "credit" { K::FundsReceived } else { K::PaymentFailed };
                let body = Body::new().copy(m, &["ref", "amount", "reason"]);
                self.send(me, owner, kind, None, body);
                Ok(())
            }
            other => Err(format!("unknown payment purpose `{other}`")),
        }
    }

    pub(super) fn fps_rejected(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let reason = m.text("reason").unwrap_or("rejected by the scheme").to_string();
        match text(m, "purpose")? {
            "mint" | "convert" => self.u1_fail(me, &reason),
            "credit" => self.payout_refund(me, &reason),
            other => Err(format!("{other} payment rejected: {reason}")),
        }
    }

    fn cbdc_mint(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let wallet: WalletId = id(m, "wallet")?;
        let return_to: AccountId = id(m, "return_to")?;
        let amt = amount(m, "amount")?;
        let backing = self.w.rail.backing().ok_or("no backing account")?;
        let outcome = self.w.ledger.mint_to(&mut self.w.ids, self.now, wallet, amt, backing, m.env.id);
        let reference = text(m, "ref")?.to_string();
        let fail = |s: &mut Sim, why: String| {
            s.fps_send(me, backing, return_to, amt, "return", &reference, Some(&why), m.phase, Body::new())
        };
        match outcome {
            Ok(CreditOutcome::Pending(pc)) => {
                let fields = Body::new().copy(m, &["ref"]).text("use", "payment").plain;
                self.pending.insert(pc, PendingCtx { initiator: m.sender(), route: Route::FpsMint { return_to }, phase: m.phase, fields, sealed: vec![] });
                let body = Body::new().copy(m, &["ref", "payer_name", "purpose_text"]).text("use", "payment");
                self.request_approval(pc, wallet, amt, m.phase, body)
            }
            Ok(CreditOutcome::Completed(c)) => {
                let fields = Body::new().copy(m, &["ref"]).text("use", "payment").plain;
                self.notify_credit(&c, me, &fields, &[], m.phase)?;
                self.waterfall(&c, &reference, m.phase)
            }
            Ok(CreditOutcome::Rejected(r)) => fail(self, r.reason),
            Err(e) => {
                let why = self.describe_ledger(&e);
                fail(self, why)
            }
        }
    }

    /// Ask the managing PIP of `wallet` to confirm pending credit `pc`.
    fn request_approval(&mut self, pc: PendingCreditId, wallet: WalletId, amt: Money, phase: Option<Slot>, body: Body) -> H {
        let pip = self.w.ledger.wallet(wallet).map_err(|e| e.to_string())?.managing_pip;
        let body = body.text("pending", pc).text("wallet", wallet).amount("amount", amt);
        self.send(self.w.one.cbdc, pip, K::CreditApprovalRequest, phase, body);
        Ok(())
    }

    /// Tell whoever needs to know that a credit landed: the managing PIP for
    /// an end user's wallet, otherwise the owner unless it sent the money.
    fn notify_credit(&mut self, c: &Completion, initiator: ParticipantId, fields: &Fields, sealed: &[SealedSection], phase: Option<Slot>) -> H {
        let cbdc = self.w.one.cbdc;
        if self.w.role(c.owner) == ParticipantRole::User {
            let pip = self.w.ledger.wallet(c.wallet).map_err(|e| e.to_string())?.managing_pip;
            let mut body = Body::new().text("wallet", c.wallet).amount("amount", c.amount);
            body.plain.extend(fields.clone());
            self.send(cbdc, pip, K::CreditCompleted, phase, body);
        } else if c.owner != initiator {
            let mut body = Body::new().forwarding(sealed);
            body.plain.extend(fields.clone());
            self.send(cbdc, c.owner, K::CreditNotification, phase, body.amount("amount", c.amount));
        }
        Ok(())
    }

    fn waterfall(&mut self, c: &Completion, reference: &str, phase: Option<Slot>) -> H {
        if let Some((acct, excess)) = c.waterfall {
            let backing = self.w.rail.backing().ok_or("no backing account")?;
            self.fps_send(self.w.one.cbdc, backing, acct, excess, "waterfall", reference, None, phase, Body::new())?;
        }
        Ok(())
    }

    /// An intermediary receives bank money and pays the same amount out of
    /// its own wallet.
    fn convert(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let reference = text(m, "ref")?.to_string();
        let return_to: AccountId = id(m, "return_to")?;
        let amt = amount(m, "amount")?;
        let target: WalletId = id(m, "wallet")?;
        self.keep_text(me, "return_to", return_to);
        self.keep_text(me, "landed", id::<AccountId>(m, "account")?);
        self.keep(me, "amount", FieldValue::Amount(amt));
        let Some(own) = self.w.part(me).wallet else {
            return self.fps_return(me, "converter holds no wallet");
        };
        self.keep_info_from(me, m, &Fields::new());
        let target_pip = self.w.ledger.wallet(target).map_err(|e| e.to_string())?.managing_pip;
        let mut body = Body::new()
            .text("from_wallet", own)
            .text("wallet", target)
            .amount("amount", amt)
            .amount("min", self.min_for(me, own))
            .text("ref", &reference)
            .text("use", "payment");
        if !m.env.sealed.is_empty() {
            if self.w.fmi_data_path == FmiDataPath::Embedded {
                body = body.forwarding(&m.env.sealed);
            } else {
                self.hold(me, &reference, &m.env.sealed);
                body = body.text("info_from", me);
            }
        } else if target_pip != me {
            body = body.text("info_from", me);
        }
        self.send(me, self.w.one.cbdc, K::WalletTransfer, m.phase, body);
        Ok(())
    }

    /// Send bank money received by a converter back to where it came from.
    fn fps_return(&mut self, me: ParticipantId, reason: &str) -> H {
        let to = self.need_id::<AccountId>(me, "return_to")?;
        let amt = self.kept_amount(me, "amount")?;
        let from = self.need_id::<AccountId>(me, "landed")?;
        let reference = self.reference();
        self.fps_send(me, from, to, amt, "return", &reference, Some(reason), Some(Slot::U1S2), Body::new())
    }

    pub(super) fn cbdc_transfer(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let from: WalletId = id(m, "from_wallet")?;
        let to: WalletId = id(m, "wallet")?;
        let amt = amount(m, "amount")?;
        let min = m.amount("min").unwrap_or(Money::ZERO);
        let by = opt_id::<ParticipantId>(m, "on_behalf").unwrap_or(m.sender());
        self.check_min(by, from, min);
        let outcome = self.w.ledger.transfer(&mut self.w.ids, self.now, from, to, amt, min, by, m.env.id);
        let result = |ok: bool, reason: Option<String>| {
            let mut b = Body::new().copy(m, &["ref", "use", "lock"]).text("ok", ok).amount("amount", amt);
            if let Some(r) = reason {
                b = b.text("reason", r);
            }
            b
        };
        match outcome {
            Ok(CreditOutcome::Pending(pc)) => {
                let fields = Body::new().copy(m, &CREDIT_KEYS).text("from_wallet", from).plain;
                let sealed = m.env.sealed.clone();
                self.pending.insert(pc, PendingCtx { initiator: m.sender(), route: Route::Transfer, phase: m.phase, fields, sealed });
                let body = Body::new().copy(m, &CREDIT_KEYS).forwarding(&m.env.sealed);
                self.request_approval(pc, to, amt, m.phase, body)
            }
            Ok(CreditOutcome::Completed(c)) => {
                self.send(me, m.sender(), K::TransferResult, m.phase, result(true, None));
                let fields = Body::new().copy(m, &CREDIT_KEYS).text("from_wallet", from).plain;
                self.notify_credit(&c, m.sender(), &fields, &m.env.sealed, m.phase)?;
                let reference = m.text("ref").unwrap_or_default().to_string();
                self.waterfall(&c, &reference, m.phase)
            }
            Ok(CreditOutcome::Rejected(r)) => {
                self.send(me, m.sender(), K::TransferResult, m.phase, result(false, Some(r.reason)));
                Ok(())
            }
            Err(e) => {
                let why = self.describe_ledger(&e);
                self.send(me, m.sender(), K::TransferResult, m.phase, result(false, Some(why)));
                Ok(())
            }
        }
    }

    /// Record a breach when a PIP passes a minimum other than its lock sum.
    pub(crate) fn check_min(&mut self, by: ParticipantId, wallet: WalletId, min: Money) {
        let expected = self.min_for(by, wallet);
        if min != expected {
            self.breaches.push(format!(
                "tick {}: {} passed min_available {min} for {wallet}, PIP locks total {expected}",
                self.now,
                self.w.name_of(by)
            ));
        }
    }

    pub(super) fn approval_request(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let pc = text(m, "pending")?.to_string();
        if m.text("use") != Some("payment") {
            let body = Body::new().text("pending", pc).text("decision", "approve");
            self.send(me, self.w.one.cbdc, K::CreditApproval, m.phase, body);
            return Ok(());
        }
        let opened = self.open(m);
        self.keep_info_from(me, m, &opened);
        match opt_id::<ParticipantId>(m, "info_from") {
            Some(src) if src != me && opened.is_empty() => {
                self.keep_text(me, "awaiting", format!("approve:{pc}"));
                let body = Body::new().copy(m, &["ref"]).text("pending", pc);
                self.send(me, src, K::PaymentInfoRequest, m.phase, body);
                Ok(())
            }
            _ => self.decide(me, &pc, m.phase),
        }
    }

    fn decide(&mut self, me: ParticipantId, pc: &str, phase: Option<Slot>) -> H {
        let body = Body::new().text("pending", pc);
        let body = match self.take_payee_pip() {
            Decision::Approve => body.text("decision", "approve"),
            Decision::Reject => body.text("decision", "reject"),
            Decision::Timeout => return Ok(()),
        };
        self.send(me, self.w.one.cbdc, K::CreditApproval, phase, body);
        Ok(())
    }

    pub(super) fn info_request(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let reference = text(m, "ref")?.to_string();
        let info = self.kept_info(me);
        let mut body = Body::new().copy(m, &["ref", "pending"]).forwarding(&self.held_for(me, &reference));
        if self.w.role(m.sender()) == ParticipantRole::Fmi {
            body = body.sealed(m.sender(), info);
        } else {
            body.plain.extend(info);
        }
        self.send(me, m.sender(), K::PaymentInfo, m.phase, body);
        Ok(())
    }

    pub(super) fn info_received(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let opened = self.open(m);
        self.keep_info_from(me, m, &opened);
        match self.kept_text(me, "awaiting") {
            Some(a) if a.starts_with("approve:") => {
                let pc = a.trim_start_matches("approve:").to_string();
                self.decide(me, &pc, m.phase)
            }
            Some(a) if a == "payout" => self.payout_fps(me),
            _ => Err("unexpected payment information".into()),
        }
    }

    pub(super) fn cbdc_approval(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let pc: PendingCreditId = id(m, "pending")?;
        let decision = match text(m, "decision")? {
            "approve" => LedgerDecision::Approve,
            _ => LedgerDecision::Reject("payee PIP rejected".into()),
        };
        match self.w.ledger.confirm_credit(self.now, pc, m.sender(), decision) {
            Ok(CreditOutcome::Completed(c)) => {
                let ctx = self.pending.remove(&pc).ok_or("no context for completed credit")?;
                self.notify_credit(&c, ctx.initiator, &ctx.fields, &ctx.sealed, ctx.phase)?;
                let reference = match ctx.fields.get("ref") {
                    Some(FieldValue::Text(t)) => t.clone(),
                    _ => String::new(),
                };
                match ctx.route {
                    Route::Transfer if ctx.initiator == me => {}
                    Route::Transfer => {
                        let mut b = Body::new().text("ok", true).amount("amount", c.amount);
                        b.plain.extend(ctx.fields.clone());
                        self.send(me, ctx.initiator, K::TransferResult, ctx.phase, b);
                    }
                    Route::EpsMint => {
                        let eps = self.w.one.eps.ok_or("no EPS")?;
                        let b = Body::new().text("ref", &reference).text("ok", true).amount("amount", c.amount);
                        self.send(me, eps, K::EpsCreditResult, ctx.phase, b);
                    }
                    Route::FpsMint { .. } => {}
                }
                self.waterfall(&c, &reference, ctx.phase)
            }
            Ok(CreditOutcome::Rejected(r)) => self.credit_rejected(r),
            Ok(CreditOutcome::Pending(_)) => Err("credit still pending after decision".into()),
            Err(e) => Err(e.to_string()),
        }
    }

    pub(super) fn credit_completed(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let wallet: WalletId = id(m, "wallet")?;
        let owner = self.w.wallet_owner(wallet).ok_or("unknown wallet")?;
        match m.text("use") {
            Some("refund") => {
                let kind = if m.text("lock").is_some() { K::LockCancelled } else { K::PaymentFailed };
                let body = Body::new().copy(m, &["ref", "lock", "reason", "amount"]);
                self.send(me, owner, kind, None, body);
            }
            _ => {
                let body = Body::new().copy(m, &["ref", "amount"]);
                self.send(me, owner, K::FundsReceived, None, body);
            }
        }
        Ok(())
    }

    pub(super) fn transfer_result(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let ok = ok_flag(m);
        let reason = m.text("reason").unwrap_or("transfer failed").to_string();
        match (m.text("use").unwrap_or_default(), ok) {
            ("payment", true) | ("refund", true) => Ok(()),
            ("payment", false) => {
                if self.kept_text(me, "undo").as_deref() == Some("book") {
                    let internal = self.w.part(me).internal_account.ok_or("bank lost its internal account")?;
                    let acct = self.payer_account()?;
                    let amt = amount(m, "amount")?;
                    self.w.rail.book_transfer(self.now, internal, acct, amt).map_err(|e| e.to_string())?;
                    self.u1_fail(me, &reason)
                } else {
                    self.fps_return(me, &reason)
                }
            }
            ("payout", true) => {
                if self.kept_text(me, "convert_self").as_deref() == Some("true") {
                    self.payout_fps(me)
                } else {
                    Ok(())
                }
            }
            ("payout", false) => self.payout_failed(me, &reason),
            ("escrow", _) => self.fmi_escrow_result(m),
            ("refund", false) => Err(format!("refund failed: {reason}")),
            (other, _) => Err(format!("TransferResult for unknown use `{other}`")),
        }
    }

    // Enhanced payment system.

    pub(super) fn eps_payment(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let cbdc = self.w.one.cbdc;
        let origin = m.sender();
        let amt = amount(m, "amount")?;
        let reference = text(m, "ref")?.to_string();
        let direction = text(m, "direction")?.to_string();
        let counterparty = if direction == "credit" { origin } else { id(m, "merchant_bank")? };
        let refused = match self.w.eps.require_onboarded(&[counterparty, cbdc]) {
            Err(e) => Some(e.to_string()),
            Ok(()) if self.take_scheme_failure() => Some("scheme failure".to_string()),
            Ok(()) => None,
        };
        if let Some(reason) = refused {
            let body = Body::new().text("ref", &reference).text("ok", false).text("reason", reason).text("direction", &direction).amount("amount", amt);
            self.send(me, origin, K::EpsResult, m.phase, body);
            return Ok(());
        }
        self.keep_text(me, "origin", origin);
        if direction == "credit" {
            self.obligation(origin, cbdc, amt, m.phase);
            let body = Body::new().copy(m, &["wallet", "pip", "ref"]).amount("amount", amt).forwarding(&m.env.sealed);
            self.send(me, cbdc, K::EpsCreditInstruction, m.phase, body);
        } else {
            self.hold(me, &reference, &m.env.sealed);
            let body = Body::new()
                .copy(m, &["wallet", "ref", "min", "merchant_bank"])
                .amount("amount", amt)
                .text("origin", origin);
            self.send(me, cbdc, K::EpsDebitInstruction, m.phase, body);
        }
        Ok(())
    }

    fn obligation(&mut self, debtor: ParticipantId, creditor: ParticipantId, amt: Money, phase: Option<Slot>) {
        let b: BatchId = self.w.eps.append(&mut self.w.ids, self.now, Obligation { debtor, creditor, amount: amt });
        self.batch_phase.entry(b).or_insert(phase);
    }

    pub(super) fn cbdc_eps_credit(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let eps = m.sender();
        let wallet: WalletId = id(m, "wallet")?;
        let amt = amount(m, "amount")?;
        let backing = self.w.rail.backing().ok_or("no backing account")?;
        let reference = text(m, "ref")?.to_string();
        let nack = |why: String| Body::new().text("ref", &reference).text("ok", false).text("reason", why).amount("amount", amt);
        match self.w.ledger.mint_to(&mut self.w.ids, self.now, wallet, amt, backing, m.env.id) {
            Ok(CreditOutcome::Pending(pc)) => {
                let fields = Body::new().copy(m, &["ref"]).text("use", "payment").plain;
                self.pending.insert(pc, PendingCtx { initiator: eps, route: Route::EpsMint, phase: m.phase, fields, sealed: vec![] });
                let body = Body::new().copy(m, &["ref"]).text("use", "payment").forwarding(&m.env.sealed);
                self.request_approval(pc, wallet, amt, m.phase, body)
            }
            Ok(CreditOutcome::Completed(c)) => {
                let b = Body::new().text("ref", &reference).text("ok", true).amount("amount", amt);
                self.send(me, eps, K::EpsCreditResult, m.phase, b);
                let fields = Body::new().copy(m, &["ref"]).text("use", "payment").plain;
                self.notify_credit(&c, me, &fields, &[], m.phase)?;
                self.waterfall(&c, &reference, m.phase)
            }
            Ok(CreditOutcome::Rejected(r)) => {
                self.send(me, eps, K::EpsCreditResult, m.phase, nack(r.reason));
                Ok(())
            }
            Err(e) => {
                let why = self.describe_ledger(&e);
                self.send(me, eps, K::EpsCreditResult, m.phase, nack(why));
                Ok(())
            }
        }
    }

    pub(super) fn eps_credit_result(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let bank = self.need_id::<ParticipantId>(me, "origin")?;
        let amt = amount(m, "amount")?;
        let mut body = Body::new().copy(m, &["ref", "ok", "reason"]).text("direction", "credit").amount("amount", amt);
        if !ok_flag(m) {
            // The credit never happened: unwind the obligation in the same window.
            self.obligation(self.w.one.cbdc, bank, amt, m.phase);
            body = body.text("ok", false);
        }
        self.send(me, bank, K::EpsResult, m.phase, body);
        Ok(())
    }

    pub(super) fn cbdc_eps_debit(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let wallet: WalletId = id(m, "wallet")?;
        let amt = amount(m, "amount")?;
        let min = m.amount("min").unwrap_or(Money::ZERO);
        let by: ParticipantId = id(m, "origin")?;
        let backing = self.w.rail.backing().ok_or("no backing account")?;
        self.check_min(by, wallet, min);
        let body = Body::new().copy(m, &["ref", "merchant_bank", "origin"]).amount("amount", amt);
        let body = match self.w.ledger.burn_from(self.now, wallet, amt, min, by, backing) {
            Ok(_) => body.text("ok", true),
            Err(e) => body.text("ok", false).text("reason", self.describe_ledger(&e)),
        };
        self.send(me, m.sender(), K::EpsDebitResult, m.phase, body);
        Ok(())
    }

    pub(super) fn eps_debit_result(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let origin: ParticipantId = id(m, "origin")?;
        let amt = amount(m, "amount")?;
        let reference = text(m, "ref")?.to_string();
        if !ok_flag(m) {
            let body = Body::new().copy(m, &["ref", "reason"]).text("ok", false).text("direction", "debit").amount("amount", amt);
            self.send(me, origin, K::EpsResult, m.phase, body);
            return Ok(());
        }
        let bank: ParticipantId = id(m, "merchant_bank")?;
        self.obligation(self.w.one.cbdc, bank, amt, m.phase);
        let sections = if m.env.sealed.is_empty() { self.held_for(me, &reference) } else { m.env.sealed.clone() };
        let body = Body::new().text("ref", &reference).amount("amount", amt).forwarding(&sections);
        self.send(me, bank, K::EpsBankCredit, m.phase, body);
        let body = Body::new().text("ref", &reference).text("ok", true).text("direction", "debit").amount("amount", amt);
        self.send(me, origin, K::EpsResult, m.phase, body);
        Ok(())
    }

    pub(super) fn eps_bank_credit(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let opened = self.open(m);
        let details = match opened.get("merchant_account") {
            Some(FieldValue::Datum(d)) => d.clone(),
            _ => return Err("EpsBankCredit without account details".into()),
        };
        let acct = self.account_by_details(&details)?;
        let amt = amount(m, "amount")?;
        let reference = text(m, "ref")?.to_string();
        self.w.rail.bank_credit(self.now, acct, amt, &reference).map_err(|e| e.to_string())?;
        let owner = self.w.rail.customer_account(acct).map(|a| a.owner).ok_or("unknown account")?;
        self.send(me, owner, K::FundsReceived, None, Body::new().text("ref", &reference).amount("amount", amt));
        Ok(())
    }

    pub(super) fn eps_result(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        if ok_flag(m) {
            return Ok(());
        }
        let reason = m.text("reason").unwrap_or("deferred payment failed").to_string();
        if m.text("direction") == Some("credit") {
            let acct = self.payer_account()?;
            let amt = amount(m, "amount")?;
            self.w.rail.bank_credit(self.now, acct, amt, &self.reference()).map_err(|e| e.to_string())?;
            self.u1_fail(me, &reason)
        } else {
            self.payout_failed(me, &reason)
        }
    }

    pub(super) fn net_settlement(&mut self, m: &Message) -> H {
        let batch: BatchId = id(m, "batch")?;
        let accounts: BTreeMap<ParticipantId, AccountId> =
            self.w.parts.values().filter_map(|p| p.settlement.map(|a| (p.id, a))).collect();
        if let Err(e) = self.w.eps.settle_one(&mut self.w.rail, self.now, batch, &|p| accounts.get(&p).copied()) {
            self.faults.push(format!("net settlement shortfall in {batch}: {e}"));
        }
        Ok(())
    }
}

