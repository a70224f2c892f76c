//! Merchant-initiated requests: request to pay and request to lock.

use crate::domain::ParticipantRole as R;
use crate::ids::{ParticipantId, WalletId};
use crate::money::Money;
use crate::options::{Slot, UseCase};
use crate::participants::{Partner, Service};
use crate::privacy::{FieldValue, Fields};

use super::super::message::{Body, Message, MsgKind as K};
use super::super::sim::{amount, datum, id, ok_flag, text, Sim, H};

/// Merchant data that travels with a request.
const MERCHANT_DATA: [&str; 2] = ["merchant_name", "merchant_account"];

/// Plaintext routing fields of a request.
const ROUTING: [&str; 7] = ["wallet", "pip", "amount", "ref", "merchant_bank", "expiry", "acquirer"];

impl Sim {
    pub(crate) fn request_slot(&self) -> Slot {
        if self.use_case() == UseCase::U2 {
            Slot::U2S1
        } else {
            Slot::U3S1
        }
    }

    fn request_kinds(&self) -> (K, K) {
        if self.use_case() == UseCase::U2 {
            (K::RequestToPay, K::RequestToPayResponse)
        } else {
            (K::RequestToLock, K::RequestToLockResponse)
        }
    }

    pub(super) fn acquirer_init(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let merchant = m.sender();
        self.keep_text(me, "merchant", merchant);
        for k in MERCHANT_DATA {
            self.keep_datum(me, k, datum(m, k)?);
        }
        self.keep_text(me, "merchant_bank", text(m, "merchant_bank")?);
        self.keep(me, "amount", FieldValue::Amount(amount(m, "amount")?));
        if let Some(e) = m.text("expiry") {
            let rel: u64 = e.parse().map_err(|_| "bad expiry")?;
            self.keep_text(me, "expiry", self.now + rel);
        }
        let svc = self.w.one.alias_service.ok_or("world has no alias service")?;
        let body = Body::new().datum("alias", datum(m, "alias")?).copy(m, &["ref"]);
        self.send(me, svc, K::AliasLookup, Some(self.request_slot()), body);
        Ok(())
    }

    fn acquirer_fail(&mut self, me: ParticipantId, reason: &str) -> H {
        let merchant = self.need_id::<ParticipantId>(me, "merchant")?;
        let body = Body::new().text("ref", self.reference()).text("reason", reason);
        self.send(me, merchant, K::PaymentFailed, None, body);
        Ok(())
    }

    /// The request as the acquirer builds it, merchant data in plaintext.
    fn request_body(&self, me: ParticipantId) -> Result<Body, String> {
        let mut b = Body::new()
            .text("wallet", self.need_id::<WalletId>(me, "wallet")?)
            .text("pip", self.need_id::<ParticipantId>(me, "pip")?)
            .amount("amount", self.kept_amount(me, "amount")?)
            .text("ref", self.reference())
            .text("merchant_bank", self.need_id::<ParticipantId>(me, "merchant_bank")?)
            .text("acquirer", me);
        if let Some(e) = self.kept_text(me, "expiry") {
            b = b.text("expiry", e);
        }
        for k in MERCHANT_DATA {
            b = b.datum(k, self.need_datum(me, k)?);
        }
        Ok(b)
    }

    pub(super) fn acquirer_alias_result(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        if m.text("found") != Some("true") {
            return self.acquirer_fail(me, "invalid payer details");
        }
        let pip: ParticipantId = id(m, "pip")?;
        self.keep_text(me, "wallet", id::<WalletId>(m, "wallet")?);
        self.keep_text(me, "pip", pip);
        let phase = Some(self.request_slot());
        let (kind, _) = self.request_kinds();
        match self.binding(self.request_slot()) {
            1 => {
                let Some(partner) = self.w.part(me).partner(Partner::Acquirer) else {
                    return self.acquirer_fail(me, "no partner PIP");
                };
                let body = self.request_body(me)?;
                self.send(me, partner, kind, phase, body);
                Ok(())
            }
            2 => match self.with_registration(me, pip, "request", phase) {
                Ok(true) => self.request_direct(me),
                Ok(false) => Ok(()),
                Err(e) => self.acquirer_fail(me, &e),
            },
            _ => {
                let net = match self.w.one.network {
                    Some(n) if self.w.part(me).is_onboarded(Service::Network) => n,
                    _ => return self.acquirer_fail(me, "acquirer not onboarded to the network"),
                };
                let body = self.request_body(me)?;
                self.send(me, net, kind, phase, body);
                Ok(())
            }
        }
    }

    fn request_direct(&mut self, me: ParticipantId) -> H {
        let pip = self.need_id::<ParticipantId>(me, "pip")?;
        let body = self.request_body(me)?;
        let (kind, _) = self.request_kinds();
        self.send(me, pip, kind, Some(self.request_slot()), body);
        Ok(())
    }

    pub(super) fn request_after_registration(&mut self, m: &Message) -> H {
        self.request_direct(m.env.receiver)
    }

    /// Tell the requester the request failed, back along the route it came.
    fn reject_request(&mut self, me: ParticipantId, to: ParticipantId, m: &Message, reason: &str) -> H {
        let (_, resp) = self.request_kinds();
        let body = Body::new().copy(m, &["ref"]).text("ok", false).text("reason", reason);
        self.send(me, to, resp, m.phase, body);
        Ok(())
    }

    pub(super) fn request_route(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let pip: ParticipantId = id(m, "pip")?;
        if me == pip {
            return self.consumer_request(m);
        }
        let role = self.w.role(me);
        self.keep_text(me, "via", m.sender());
        let mut body = Body::new().copy(m, &ROUTING).forwarding(&m.env.sealed);
        match role {
            R::CentralBankCbdcSystem => {
                body = body.copy(m, &MERCHANT_DATA);
                self.send(me, pip, m.kind, m.phase, body);
            }
            R::Tsp => {
                if !self.w.part(pip).is_onboarded(Service::Network) {
                    return self.reject_request(me, m.sender(), m, "PIP not onboarded to the network");
                }
                body = body.copy(m, &MERCHANT_DATA);
                self.send(me, pip, m.kind, m.phase, body);
            }
            _ => {
                // A partner PIP relays through the CBDC system.
                let data: Fields = MERCHANT_DATA
                    .iter()
                    .filter_map(|k| m.env.plaintext.get(*k).map(|v| (k.to_string(), v.clone())))
                    .collect();
                body = if self.w.seal_via_cbdc { body.sealed(pip, data) } else { body.copy(m, &MERCHANT_DATA) };
                self.send(me, self.w.one.cbdc, m.kind, m.phase, body);
            }
        }
        Ok(())
    }

    fn consumer_request(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let wallet: WalletId = id(m, "wallet")?;
        let managed = self.w.ledger.wallet(wallet).map(|w| (w.managing_pip, w.owner)).map_err(|e| e.to_string());
        let owner = match managed {
            Ok((pip, owner)) if pip == me => owner,
            _ => return self.reject_request(me, m.sender(), m, "unknown wallet"),
        };
        let opened = self.open(m);
        self.keep_info_from(me, m, &opened);
        self.keep_text(me, "reply_to", m.sender());
        self.keep_text(me, "wallet", wallet);
        self.keep_text(me, "consumer", owner);
        self.keep(me, "amount", FieldValue::Amount(amount(m, "amount")?));
        for k in ["merchant_bank", "expiry", "acquirer"] {
            if let Some(v) = m.text(k) {
                self.keep_text(me, k, v);
            }
        }
        let name = self.need_datum(me, "merchant_name")?;
        let body = Body::new().copy(m, &["ref", "amount"]).datum("merchant_name", name);
        self.send(me, owner, K::AuthorisationPrompt, Some(self.request_slot()), body);
        Ok(())
    }

    /// Answer the request from the consumer's PIP.
    pub(crate) fn respond(&mut self, me: ParticipantId, ok: bool, reason: Option<&str>) -> H {
        let to = self.need_id::<ParticipantId>(me, "reply_to")?;
        let (_, resp) = self.request_kinds();
        let mut body = Body::new().text("ref", self.reference()).text("ok", ok);
        if let Some(r) = reason {
            body = body.text("reason", r);
        }
        self.send(me, to, resp, Some(self.request_slot()), body);
        Ok(())
    }

    pub(super) fn authorisation_decided(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        if m.text("decision") != Some("approve") {
            return self.respond(me, false, Some("consumer rejected"));
        }
        if self.use_case() == UseCase::U2 {
            self.respond(me, true, None)?;
            let wallet = self.need_id::<WalletId>(me, "wallet")?;
            let amt: Money = self.kept_amount(me, "amount")?;
            self.start_payout(me, wallet, amt)
        } else {
            self.place_lock(me)
        }
    }

    pub(super) fn request_response(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        if self.w.role(me) == R::Acquirer {
            if !ok_flag(m) {
                let reason = m.text("reason").unwrap_or("request refused").to_string();
                return self.acquirer_fail(me, &reason);
            }
            return Ok(());
        }
        let via = self.need_id::<ParticipantId>(me, "via")?;
        let body = Body::new().copy(m, &["ref", "ok", "reason"]);
        self.send(me, via, m.kind, m.phase, body);
        Ok(())
    }
}
