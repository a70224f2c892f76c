//! Paying a digital pound wallet from a bank account: initiation and
//! confirmation of payee.

use crate::domain::{Alias, DatumKind, ParticipantRole, PersonalDatum};
use crate::ids::{ParticipantId, WalletId};
use crate::options::Slot;
use crate::participants::Partner;
use crate::privacy::FieldValue;

use super::super::message::{Body, Message, MsgKind as K};
use super::super::sim::{amount, datum, id, opt_id, Sim, H};

const PHASE: Option<Slot> = Some(Slot::U1S1);

impl Sim {
    pub(super) fn pay_init(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let payer = m.sender();
        let alias = datum(m, "alias")?;
        self.keep_text(me, "payer", payer);
        self.keep(me, "amount", FieldValue::Amount(amount(m, "amount")?));
        self.keep_datum(me, "alias", alias.clone());
        self.keep_datum(me, "payer_name", self.w.name_datum(payer));
        if let Some(p) = m.datum("purpose_text") {
            self.keep_datum(me, "purpose_text", p.clone());
        }
        let body = Body::new().datum("alias", alias).copy(m, &["ref"]);
        match self.binding(Slot::U1S1) {
            2 => {
                let tsp = self.w.one.tsp.ok_or("world has no TSP for confirmation of payee")?;
                self.send(me, tsp, K::CopRequest, PHASE, body);
            }
            3 => {
                let svc = self.w.one.alias_service.ok_or("world has no alias service")?;
                self.send(me, svc, K::CopRequest, PHASE, body);
            }
            _ => {
                let svc = self.w.one.alias_service.ok_or("world has no alias service")?;
                self.send(me, svc, K::AliasLookup, PHASE, body);
            }
        }
        Ok(())
    }

    /// Tell the paying customer their payment failed.
    pub(crate) fn u1_fail(&mut self, bank: ParticipantId, reason: &str) -> H {
        let payer = self.need_id::<ParticipantId>(bank, "payer")?;
        let body = Body::new().text("ref", self.reference()).text("reason", reason);
        self.send(bank, payer, K::PaymentFailed, None, body);
        Ok(())
    }

    pub(super) fn bank_alias_result(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        if !ok_found(m) {
            return self.u1_fail(me, "invalid payee details");
        }
        let wallet: WalletId = id(m, "wallet")?;
        let pip: ParticipantId = id(m, "pip")?;
        self.keep_text(me, "wallet", wallet);
        self.keep_text(me, "pip", pip);
        match self.binding(Slot::U1S1) {
            1 => match self.with_registration(me, pip, "cop", PHASE) {
                Ok(true) => self.cop_direct(me),
                Ok(false) => Ok(()),
                Err(e) => self.u1_fail(me, &e),
            },
            _ => {
                let body = Body::new().text("wallet", wallet).text("pip", pip).text("ref", self.reference());
                if let Some(partner) = self.w.part(me).partner(Partner::Cop) {
                    self.send(me, partner, K::CopRequest, PHASE, body);
                } else if self.w.part(me).pip_capable {
                    let body = body.text("requester", me);
                    self.send(me, self.w.one.cbdc, K::CopRequest, PHASE, body);
                } else {
                    return self.u1_fail(me, "no partner PIP");
                }
                Ok(())
            }
        }
    }

    fn cop_direct(&mut self, bank: ParticipantId) -> H {
        let wallet = self.need_id::<WalletId>(bank, "wallet")?;
        let pip = self.need_id::<ParticipantId>(bank, "pip")?;
        let body = Body::new().text("wallet", wallet).text("ref", self.reference());
        self.send(bank, pip, K::CopRequest, PHASE, body);
        Ok(())
    }

    pub(super) fn cop_after_registration(&mut self, m: &Message) -> H {
        self.cop_direct(m.env.receiver)
    }

    pub(super) fn tsp_cop_request(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        self.keep_text(me, "cop_requester", m.sender());
        let svc = self.w.one.alias_service.ok_or("world has no alias service")?;
        let body = Body::new().datum("alias", datum(m, "alias")?).copy(m, &["ref"]);
        self.send(me, svc, K::AliasLookup, m.phase, body);
        Ok(())
    }

    pub(super) fn tsp_alias_result(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let requester = self.need_id::<ParticipantId>(me, "cop_requester")?;
        if !ok_found(m) {
            let body = Body::new().copy(m, &["ref"]).text("found", false);
            self.send(me, requester, K::CopResponse, m.phase, body);
            return Ok(());
        }
        let pip: ParticipantId = id(m, "pip")?;
        let body = Body::new().copy(m, &["wallet", "ref"]).text("requester", requester);
        self.send(me, pip, K::CopRequest, m.phase, body);
        Ok(())
    }

    pub(super) fn alias_cop_request(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let raw = datum(m, "alias")?.value;
        let entry = raw.parse::<Alias>().or_else(|_| Alias::mobile(&raw)).ok().and_then(|a| self.w.aliases.lookup(&a).ok().cloned());
        let body = match entry {
            Some(e) => match &e.cop_payload {
                Some(p) => Body::new()
                    .text("found", true)
                    .text("wallet", e.wallet)
                    .text("pip", e.pip)
                    .datum("payee_name", PersonalDatum::new(e.owner, DatumKind::Name, p.owner_name.clone())),
                None => Body::new().text("found", false).text("reason", "no confirmation data held"),
            },
            None => Body::new().text("found", false),
        };
        self.send(me, m.sender(), K::CopResponse, m.phase, body.copy(m, &["ref"]));
        Ok(())
    }

    pub(super) fn cbdc_cop_forward(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let pip: ParticipantId = id(m, "pip")?;
        let body = Body::new().copy(m, &["wallet", "requester", "ref"]);
        self.send(me, pip, K::CopRequest, m.phase, body);
        Ok(())
    }

    pub(super) fn pip_cop_request(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let wallet: WalletId = id(m, "wallet")?;
        let managed = self.w.ledger.wallet(wallet).ok().map(|w| (w.managing_pip, w.owner));
        match managed {
            Some((pip, owner)) if pip == me => {
                let name = self.w.name_datum(owner);
                let base = Body::new().text("found", true).text("wallet", wallet).text("pip", me).copy(m, &["ref", "requester"]);
                let body = match opt_id::<ParticipantId>(m, "requester") {
                    // Relayed requests are answered under seal for whoever asked.
                    Some(requester) => base.sealed(requester, super::super::message::data_fields(&[("payee_name", &name)])),
                    None => base.datum("payee_name", name),
                };
                self.send(me, m.sender(), K::CopResponse, m.phase, body);
            }
            Some((pip, _)) => {
                // Acting as a bank's partner: ask the payee PIP via the CBDC system.
                self.keep_text(me, "cop_origin", m.sender());
                let body = Body::new().text("wallet", wallet).text("pip", pip).text("requester", me).copy(m, &["ref"]);
                self.send(me, self.w.one.cbdc, K::CopRequest, m.phase, body);
            }
            None => {
                let body = Body::new().text("found", false).copy(m, &["ref", "requester"]);
                self.send(me, m.sender(), K::CopResponse, m.phase, body);
            }
        }
        Ok(())
    }

    pub(super) fn cop_response(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let role = self.w.role(me);
        if role == ParticipantRole::CentralBankCbdcSystem || role == ParticipantRole::Tsp {
            let to = opt_id::<ParticipantId>(m, "requester")
                .or_else(|| self.kept_id(me, "cop_requester"))
                .ok_or("CopResponse with nobody to forward to")?;
            let body = Body::new().copy(m, &["found", "wallet", "pip", "ref", "requester", "payee_name", "reason"]).forwarding(&m.env.sealed);
            self.send(me, to, K::CopResponse, m.phase, body);
            return Ok(());
        }
        let opened = self.open(m);
        if let Some(origin) = self.kept_id::<ParticipantId>(me, "cop_origin") {
            let mut body = Body::new().copy(m, &["found", "wallet", "pip", "ref", "payee_name"]);
            if let Some(FieldValue::Datum(d)) = opened.get("payee_name") {
                body = body.datum("payee_name", d.clone());
            }
            self.send(me, origin, K::CopResponse, m.phase, body);
            return Ok(());
        }
        if !ok_found(m) {
            return self.u1_fail(me, "invalid payee details");
        }
        let name = match opened.get("payee_name") {
            Some(FieldValue::Datum(d)) => d.clone(),
            _ => datum(m, "payee_name")?,
        };
        if let Some(w) = opt_id::<WalletId>(m, "wallet") {
            self.keep_text(me, "wallet", w);
        }
        if let Some(p) = opt_id::<ParticipantId>(m, "pip") {
            self.keep_text(me, "pip", p);
        }
        self.keep_datum(me, "payee_name", name.clone());
        let payer = self.need_id::<ParticipantId>(me, "payer")?;
        let amt = match self.w.part(me).recall("amount") {
            Some(FieldValue::Amount(a)) => *a,
            _ => return Err("bank lost the payment amount".into()),
        };
        let body = Body::new().text("ref", self.reference()).datum("payee_name", name).amount("amount", amt);
        self.send(me, payer, K::CopConfirm, None, body);
        Ok(())
    }

    pub(super) fn pay_authorised(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        if m.text("decision") != Some("approve") {
            return self.u1_fail(me, "payer rejected");
        }
        let passes = self.take_compliance().unwrap_or(self.w.part(me).compliance_pass);
        if !passes {
            return self.u1_fail(me, "compliance check failed");
        }
        self.u1_settle(me)
    }
}

fn ok_found(m: &Message) -> bool {
    m.text("found") == Some("true")
}
