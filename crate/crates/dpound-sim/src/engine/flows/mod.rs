//! Message handlers, grouped by the part of the payment they serve.

mod cop;
mod lock;
mod payout;
mod request;
mod settle;

use crate::domain::{Alias, ParticipantRole as R};
use crate::ids::ParticipantId;
use crate::participants::Service;

use super::config::{Decision, Delivery};
use super::message::{Body, Message, MsgKind as K};
use super::sim::{id, text, Sim, H};

impl Sim {
    pub(crate) fn dispatch(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let role = self.w.role(me);
        match m.kind {
            K::PayInit => self.pay_init(m),
            K::AliasLookup => self.alias_lookup(m),
            K::AliasResult => match role {
                R::Acquirer => self.acquirer_alias_result(m),
                R::Tsp => self.tsp_alias_result(m),
                _ => self.bank_alias_result(m),
            },
            K::DcrRegister => self.dcr_register(m),
            K::DcrGrant => self.dcr_granted(m),
            K::CopRequest => match role {
                R::Tsp => self.tsp_cop_request(m),
                R::AliasService => self.alias_cop_request(m),
                R::CentralBankCbdcSystem => self.cbdc_cop_forward(m),
                _ => self.pip_cop_request(m),
            },
            K::CopResponse => self.cop_response(m),
            K::CopConfirm => {
                let decision = match self.take_authorise() {
                    Decision::Approve => "approve",
                    Decision::Reject => "reject",
                    Decision::Timeout => return Ok(()),
                };
                let body = Body::new().copy(m, &["ref"]).text("decision", decision);
                self.send(me, m.sender(), K::PayAuthorise, None, body);
                Ok(())
            }
            K::PayAuthorise => self.pay_authorised(m),
            K::FpsPayment => self.fps_scheme(m),
            K::FpsCredit => self.fps_credit(m),
            K::FpsRejected => self.fps_rejected(m),
            K::WalletTransfer => self.cbdc_transfer(m),
            K::TransferResult => self.transfer_result(m),
            K::CreditApprovalRequest => self.approval_request(m),
            K::CreditApproval => self.cbdc_approval(m),
            K::CreditCompleted => self.credit_completed(m),
            K::CreditNotification => self.credit_notification(m),
            K::PaymentInfoRequest => self.info_request(m),
            K::PaymentInfo => self.info_received(m),
            K::EpsPayment => self.eps_payment(m),
            K::EpsCreditInstruction => self.cbdc_eps_credit(m),
            K::EpsCreditResult => self.eps_credit_result(m),
            K::EpsDebitInstruction => self.cbdc_eps_debit(m),
            K::EpsDebitResult => self.eps_debit_result(m),
            K::EpsBankCredit => self.eps_bank_credit(m),
            K::EpsResult => self.eps_result(m),
            K::NetSettlement => self.net_settlement(m),
            K::RequestToPayInit | K::RequestToLockInit => self.acquirer_init(m),
            K::RequestToPay | K::RequestToLock => self.request_route(m),
            K::AuthorisationPrompt => {
                let decision = match self.take_authorise() {
                    Decision::Approve => "approve",
                    Decision::Reject => "reject",
                    Decision::Timeout => return Ok(()),
                };
                self.keep_text(me, "pip", m.sender());
                let body = Body::new().copy(m, &["ref"]).text("decision", decision);
                self.send(me, m.sender(), K::AuthorisationDecision, m.phase, body);
                Ok(())
            }
            K::AuthorisationDecision => self.authorisation_decided(m),
            K::RequestToPayResponse | K::RequestToLockResponse => self.request_response(m),
            K::PaymentToBank => self.cbdc_payment_to_bank(m),
            K::PaymentResult => self.payment_result(m),
            K::LockFunds => match role {
                R::Fmi => self.fmi_lock_funds(m),
                _ => self.cbdc_lock_funds(m),
            },
            K::LockConfirmation => self.lock_confirmation(m),
            K::LockConfirmed => {
                // The merchant ships once funds are locked.
                let agent = self.sc.delivery_agent.as_deref().and_then(|n| self.w.id(n)).ok_or("no delivery agent")?;
                self.keep_text(me, "delivery_agent", agent);
                let body = Body::new().copy(m, &["ref"]).text("consumer", self.payer);
                self.send(me, agent, K::DispatchOrder, None, body);
                Ok(())
            }
            K::DispatchOrder => {
                let consumer: ParticipantId = id(m, "consumer")?;
                let reference = text(m, "ref")?.to_string();
                match self.take_delivery() {
                    Delivery::Success => {
                        let body = Body::new().text("ref", &reference);
                        self.send(me, consumer, K::DeliveryReleaseRequest, None, body);
                    }
                    Delivery::Fail => {
                        let body = Body::new().text("ref", &reference).text("reason", "delivery failed");
                        self.send(me, consumer, K::DeliveryFailed, None, body);
                    }
                    Delivery::None => {}
                }
                self.keep_text(me, "consumer", consumer);
                Ok(())
            }
            K::DeliveryReleaseRequest | K::DeliveryFailed => {
                let pip = self.consumer_pip(me)?;
                let kind = if m.kind == K::DeliveryReleaseRequest { K::ReleaseInstruction } else { K::CancelInstruction };
                let body = Body::new().copy(m, &["ref", "reason"]);
                self.send(me, pip, kind, None, body);
                Ok(())
            }
            K::DeliveryConfirmation => {
                let consumer = self.need_id::<ParticipantId>(me, "consumer")?;
                self.send(me, consumer, K::HandOver, None, Body::new().copy(m, &["ref"]));
                Ok(())
            }
            K::FundsReceived => {
                // A merchant paid for a locked order confirms delivery.
                if role == R::User && me == self.payee && self.use_case() == crate::options::UseCase::U3 {
                    if let Some(agent) = self.kept_id::<ParticipantId>(me, "delivery_agent") {
                        self.send(me, agent, K::DeliveryConfirmation, None, Body::new().copy(m, &["ref"]));
                    }
                }
                Ok(())
            }
            K::ReleaseInstruction => match role {
                R::Fmi => self.fmi_release(m),
                _ => self.pip_release(m),
            },
            K::ReleaseAndPay => self.cbdc_release_and_pay(m),
            K::CancelInstruction => self.pip_cancel(m),
            K::CancelLock => match role {
                R::Fmi => self.fmi_cancel(m),
                _ => self.cbdc_cancel(m),
            },
            K::LockCancelled => {
                if role != R::User {
                    let consumer = self.consumer_of_pip_case();
                    self.send(me, consumer, K::LockCancelled, None, Body::new().copy(m, &["ref", "lock", "reason"]));
                }
                Ok(())
            }
            K::PaymentFailed | K::PaymentCompleted | K::HandOver => Ok(()),
        }
    }

    /// The PIP managing `user`'s wallet.
    pub(crate) fn consumer_pip(&self, user: ParticipantId) -> Result<ParticipantId, String> {
        let w = self.w.part(user).wallet.ok_or("user has no wallet")?;
        Ok(self.w.ledger.wallet(w).map_err(|e| e.to_string())?.managing_pip)
    }

    pub(crate) fn consumer_of_pip_case(&self) -> ParticipantId {
        self.payer
    }

    pub(crate) fn reference(&self) -> String {
        self.sc.reference.clone()
    }

    fn alias_lookup(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let raw = m.datum("alias").ok_or("AliasLookup without alias")?.value.clone();
        let found = raw.parse::<Alias>().or_else(|_| Alias::mobile(&raw)).ok().and_then(|a| self.w.aliases.lookup(&a).ok().cloned());
        let mut body = Body::new().copy(m, &["ref"]);
        body = match found {
            Some(e) => body.text("found", true).text("wallet", e.wallet).text("pip", e.pip),
            None => body.text("found", false),
        };
        self.send(me, m.sender(), K::AliasResult, m.phase, body);
        Ok(())
    }

    /// Make sure `who` holds a live registration with `target`, then carry on
    /// with `next`. Registration goes through the TSP running the directory.
    pub(crate) fn with_registration(&mut self, who: ParticipantId, target: ParticipantId, next: &str, m_phase: Option<crate::options::Slot>) -> Result<bool, String> {
        if self.w.dcr.check(who, target, self.now).is_ok() {
            return Ok(true);
        }
        let tsp = match self.w.one.tsp {
            Some(t) if self.w.part(who).is_onboarded(Service::Tsp) => t,
            _ => return Err(crate::participants::ParticipantError::NotRegistered { registrant: who, target }.to_string()),
        };
        let body = Body::new().text("target", target).text("next", next).text("ref", self.reference());
        self.send(who, tsp, K::DcrRegister, m_phase, body);
        Ok(false)
    }

    fn dcr_register(&mut self, m: &Message) -> H {
        let me = m.env.receiver;
        let target: ParticipantId = id(m, "target")?;
        let reg = self.w.dcr.grant(m.sender(), target, self.now, self.w.dcr_ttl);
        let body = Body::new().copy(m, &["target", "next", "ref"]).text("credential", reg.credential);
        self.send(me, m.sender(), K::DcrGrant, m.phase, body);
        Ok(())
    }

    fn dcr_granted(&mut self, m: &Message) -> H {
        match text(m, "next")? {
            "cop" => self.cop_after_registration(m),
            "request" => self.request_after_registration(m),
            "lock_confirm" => self.lock_confirm_after_registration(m),
            other => Err(format!("unknown continuation `{other}`")),
        }
    }
}
