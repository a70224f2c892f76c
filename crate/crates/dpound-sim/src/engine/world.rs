//! World construction from a [`WorldConfig`] and balance positions.

use std::collections::BTreeMap;

use crate::domain::{Alias, DatumKind, ParticipantRole, PersonalDatum, SimClock};
use crate::ids::{AccountId, IdSource, ParticipantId, WalletId};
use crate::ledger::CoreLedger;
use crate::money::Money;
use crate::netting::EnhancedPaymentSystem;
use crate::options::{Bindings, Slot};
use crate::participants::{
    AliasDirectory, AliasDirectoryEntry, CopPayload, DcrRegistry, EscrowBook, ParticipantState, PipLockBook, Service,
};
use crate::privacy::{ExposureLog, KeyDirectory};
use crate::rail::{FpsParticipation, Rail, SettlementKind};

use super::config::{FmiDataPath, FpsSpec, WorldConfig};
use super::EngineError;

/// Participants that exist once per world.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Singletons {
    pub cbdc: ParticipantId,
    pub rtgs: Option<ParticipantId>,
    pub fps: Option<ParticipantId>,
    pub eps: Option<ParticipantId>,
    pub fmi: Option<ParticipantId>,
    pub alias_service: Option<ParticipantId>,
    /// The TSP that runs dynamic client registration and aggregation.
    pub tsp: Option<ParticipantId>,
    /// The operator of the common third-party network.
    pub network: Option<ParticipantId>,
}

#[derive(Debug, Clone)]
pub struct World {
    pub seed: u64,
    pub bindings: Bindings,
    pub seal_via_cbdc: bool,
    pub fmi_data_path: FmiDataPath,
    pub dcr_ttl: u64,
    pub tick_budget: u64,
    pub pending_timeout: u64,
    pub ids: IdSource,
    pub clock: SimClock,
    pub ledger: CoreLedger,
    pub rail: Rail,
    pub eps: EnhancedPaymentSystem,
    pub keys: KeyDirectory,
    pub log: ExposureLog,
    pub parts: BTreeMap<ParticipantId, ParticipantState>,
    pub by_name: BTreeMap<String, ParticipantId>,
    pub aliases: AliasDirectory,
    pub dcr: DcrRegistry,
    pub pip_locks: BTreeMap<ParticipantId, PipLockBook>,
    pub escrow: EscrowBook,
    pub one: Singletons,
}

fn invalid(msg: impl Into<String>) -> EngineError {
    EngineError::Invalid(msg.into())
}

fn unique(cfg: &WorldConfig, ids: &BTreeMap<String, ParticipantId>, role: ParticipantRole) -> Result<Option<ParticipantId>, EngineError> {
    let found: Vec<&str> = cfg.participants.iter().filter(|p| p.role == role).map(|p| p.name.as_str()).collect();
    match found[..] {
        [] => Ok(None),
        [one] => Ok(Some(ids[one])),
        _ => Err(invalid(format!("more than one participant with role {role}: {}", found.join(", ")))),
    }
}

impl World {
    /// Build a world. `bindings` override the world file's own bindings.
    pub fn build(cfg: &WorldConfig, overrides: &Bindings) -> Result<World, EngineError> {
        let mut bindings = cfg.bindings.clone();
        for o in overrides.iter() {
            bindings.bind(o);
        }
        let mut ids = IdSource::new(cfg.seed);
        let mut by_name = BTreeMap::new();
        let mut parts = BTreeMap::new();
        for p in &cfg.participants {
            let id: ParticipantId = ids.next();
            by_name.insert(p.name.clone(), id);
            let mut st = ParticipantState::new(id, &p.name, p.role);
            st.legal_name = p.legal_name.clone();
            st.pip_capable = p.role.manages_wallets() || p.pip;
            st.compliance_pass = p.compliance_pass;
            st.onboarded = p.onboard.clone();
            st.sort_code = p.sort_code.clone();
            parts.insert(id, st);
        }
        let lookup = |name: &str, what: &str, owner: &str| {
            by_name.get(name).copied().ok_or_else(|| invalid(format!("{owner}: {what} `{name}` is not a participant")))
        };
        for p in &cfg.participants {
            let id = by_name[&p.name];
            let mut partners = BTreeMap::new();
            for (kind, name) in &p.partners {
                partners.insert(*kind, lookup(name, "partner", &p.name)?);
            }
            let operator = p.operator.as_deref().map(|n| lookup(n, "operator", &p.name)).transpose()?;
            let st = parts.get_mut(&id).expect("inserted");
            st.partners = partners;
            st.operator = operator;
        }

        let cbdc = unique(cfg, &by_name, ParticipantRole::CentralBankCbdcSystem)?
            .ok_or_else(|| invalid("world has no CentralBankCbdcSystem participant"))?;
        let provider = |svc: &str| -> Result<Option<ParticipantId>, EngineError> {
            let found: Vec<&str> = cfg
                .participants
                .iter()
                .filter(|p| p.role == ParticipantRole::Tsp && p.provides.contains(svc))
                .map(|p| p.name.as_str())
                .collect();
            match found[..] {
                [] => Ok(None),
                [one] => Ok(Some(by_name[one])),
                _ => Err(invalid(format!("more than one TSP provides {svc}"))),
            }
        };
        let one = Singletons {
            cbdc,
            rtgs: unique(cfg, &by_name, ParticipantRole::CentralBankRtgs)?,
            fps: unique(cfg, &by_name, ParticipantRole::FpsScheme)?,
            eps: unique(cfg, &by_name, ParticipantRole::EnhancedPaymentSystem)?,
            fmi: unique(cfg, &by_name, ParticipantRole::Fmi)?,
            alias_service: unique(cfg, &by_name, ParticipantRole::AliasService)?,
            tsp: provider("dcr")?,
            network: provider("network")?,
        };

        let mut ledger = CoreLedger::new(cfg.limit_mode, cfg.pending_timeout);
        for st in parts.values() {
            if st.pip_capable {
                ledger.register_manager(st.id);
            }
        }

        // Rail: settlement accounts, then scheme membership.
        let mut rail = Rail::new();
        rail.set_rtgs_open(cfg.rtgs_open);
        let genesis: u64 = cfg.participants.iter().filter_map(|p| p.wallet.as_ref()).map(|(_, b)| b.pence()).sum();
        let mut backing_seen = false;
        for p in &cfg.participants {
            let id = by_name[&p.name];
            let Some(balance) = p.settlement else {
                if p.backing {
                    return Err(invalid(format!("{}: backing needs a settlement account", p.name)));
                }
                continue;
            };
            let sort = p.sort_code.as_deref().ok_or_else(|| invalid(format!("{}: settlement account needs a sort_code", p.name)))?;
            let (kind, balance) = if p.backing {
                if p.role != ParticipantRole::CentralBankCbdcSystem {
                    return Err(invalid(format!("{}: only the CBDC system holds the backing account", p.name)));
                }
                backing_seen = true;
                (SettlementKind::Backing, balance.checked_add(Money::new(genesis)).map_err(|e| invalid(e.to_string()))?)
            } else if p.role == ParticipantRole::Fmi {
                (SettlementKind::Direct, balance)
            } else {
                (SettlementKind::Bank, balance)
            };
            let acct = rail.open_settlement_account(&mut ids, id, sort, "00000001", balance, kind);
            parts.get_mut(&id).expect("present").settlement = Some(acct);
        }
        if !backing_seen {
            return Err(invalid("world has no backing settlement account for the CBDC system"));
        }
        for round in [FpsSpec::Dcsp, FpsSpec::Dcnsp] {
            for p in cfg.participants.iter().filter(|p| p.fps == Some(round)) {
                let sort = p.sort_code.as_deref().ok_or_else(|| invalid(format!("{}: FPS membership needs a sort_code", p.name)))?;
                let kind = match round {
                    FpsSpec::Dcsp => FpsParticipation::Dcsp,
                    FpsSpec::Dcnsp => {
                        let sponsor = p.sponsor.as_deref().unwrap_or_default();
                        FpsParticipation::Dcnsp { sponsor: lookup(sponsor, "sponsor", &p.name)? }
                    }
                };
                rail.register_fps_participant(by_name[&p.name], sort, kind).map_err(|e| invalid(format!("{}: {e}", p.name)))?;
            }
        }

        // Customer accounts. A DCNSP's own account uses its own sort code.
        for p in &cfg.participants {
            let id = by_name[&p.name];
            if let Some(a) = &p.account {
                let bank = lookup(&a.bank, "bank", &p.name)?;
                let sort = match (p.fps, &p.sort_code) {
                    (Some(FpsSpec::Dcnsp), Some(own)) => own.clone(),
                    _ => parts[&bank]
                        .sort_code
                        .clone()
                        .ok_or_else(|| invalid(format!("{}: bank `{}` has no sort_code", p.name, a.bank)))?,
                };
                let acct = rail.open_customer_account(&mut ids, bank, id, &sort, &a.number, a.balance);
                parts.get_mut(&id).expect("present").account = Some(acct);
            }
            if let Some(number) = &p.internal_account {
                let sort = p.sort_code.clone().ok_or_else(|| invalid(format!("{}: internal account needs a sort_code", p.name)))?;
                let acct = rail.open_customer_account(&mut ids, id, id, &sort, number, Money::ZERO);
                parts.get_mut(&id).expect("present").internal_account = Some(acct);
            }
        }

        // Wallets and their genesis issuance.
        let backing = rail.backing().expect("checked above");
        for p in &cfg.participants {
            let id = by_name[&p.name];
            let Some((pip_name, balance)) = &p.wallet else { continue };
            let pip = lookup(pip_name, "wallet PIP", &p.name)?;
            let linked = if p.linked {
                Some(parts[&id].account.ok_or_else(|| invalid(format!("{}: linked wallet needs an account", p.name)))?)
            } else {
                None
            };
            let w = ledger
                .open_wallet(&mut ids, id, pip, p.holding_limit, p.technical, linked)
                .map_err(|e| invalid(format!("{}: {e}", p.name)))?;
            if !balance.is_zero() {
                ledger.genesis(w, *balance, backing).map_err(|e| invalid(e.to_string()))?;
            }
            parts.get_mut(&id).expect("present").wallet = Some(w);
        }

        let mut aliases = AliasDirectory::new();
        for p in &cfg.participants {
            let Some(a) = &p.alias else { continue };
            let id = by_name[&p.name];
            let alias = if a.contains(':') { a.parse::<Alias>() } else { Alias::mobile(a) }
                .map_err(|e| invalid(format!("{}: {e}", p.name)))?;
            let wallet = parts[&id].wallet.ok_or_else(|| invalid(format!("{}: alias needs a wallet", p.name)))?;
            let pip = ledger.wallet(wallet).map_err(|e| invalid(e.to_string()))?.managing_pip;
            aliases
                .register(AliasDirectoryEntry {
                    alias,
                    owner: id,
                    wallet,
                    pip,
                    pip_endpoints: vec![format!("{}/cop", parts[&pip].name)],
                    cop_payload: None,
                })
                .map_err(|e| invalid(e.to_string()))?;
        }
        if bindings.get(Slot::U1S1) == Some(3) {
            aliases.enable_cop(|e| {
                parts[&e.owner].legal_name.clone().map(|owner_name| CopPayload { owner_name, target: e.wallet })
            });
        }

        let mut keys = KeyDirectory::new();
        for &id in parts.keys() {
            keys.register(id);
        }
        let mut eps = EnhancedPaymentSystem::new(cfg.batch_window);
        for st in parts.values() {
            if st.is_onboarded(Service::Eps) {
                eps.onboard(st.id);
            }
        }
        if let Some(e) = one.eps {
            for st in parts.values().filter(|s| s.is_onboarded(Service::Eps)) {
                keys.exchange(e, st.id);
            }
        }

        Ok(World {
            seed: cfg.seed,
            bindings,
            seal_via_cbdc: cfg.seal_via_cbdc,
            fmi_data_path: cfg.fmi_data_path,
            dcr_ttl: cfg.dcr_ttl,
            tick_budget: cfg.tick_budget,
            pending_timeout: cfg.pending_timeout,
            ids,
            clock: SimClock::new(),
            ledger,
            rail,
            eps,
            keys,
            log: ExposureLog::default(),
            parts,
            by_name,
            aliases,
            dcr: DcrRegistry::new(),
            pip_locks: BTreeMap::new(),
            escrow: EscrowBook::new(),
            one,
        })
    }

    pub fn id(&self, name: &str) -> Option<ParticipantId> {
        self.by_name.get(name).copied()
    }

    pub fn part(&self, id: ParticipantId) -> &ParticipantState {
        &self.parts[&id]
    }

    pub fn part_mut(&mut self, id: ParticipantId) -> &mut ParticipantState {
        self.parts.get_mut(&id).expect("participant exists")
    }

    pub fn role(&self, id: ParticipantId) -> ParticipantRole {
        self.parts[&id].role
    }

    pub fn name_of(&self, id: ParticipantId) -> &str {
        &self.parts[&id].name
    }

    /// The participant's legal name as a personal datum about itself.
    pub fn name_datum(&self, id: ParticipantId) -> PersonalDatum {
        let st = &self.parts[&id];
        PersonalDatum::new(id, DatumKind::Name, st.legal_name.clone().unwrap_or_else(|| st.name.clone()))
    }

    pub fn wallet_owner(&self, w: WalletId) -> Option<ParticipantId> {
        self.ledger.wallet(w).ok().map(|w| w.owner)
    }

    pub fn account_of(&self, p: ParticipantId) -> Option<AccountId> {
        self.parts.get(&p).and_then(|s| s.account)
    }

    pub fn pip_lock_sum(&self, pip: ParticipantId, wallet: WalletId) -> Money {
        self.pip_locks.get(&pip).map(|b| b.active_sum(wallet)).unwrap_or(Money::ZERO)
    }

    /// Net position of every participant across both ledgers: reserves,
    /// wallets and deposits it owns, less deposits it owes its customers and,
    /// for the CBDC system, the digital pounds in issue.
    pub fn positions(&self) -> BTreeMap<ParticipantId, i128> {
        let mut pos: BTreeMap<ParticipantId, i128> = self.parts.keys().map(|&p| (p, 0)).collect();
        for a in self.rail.settlement_accounts() {
            *pos.entry(a.holder).or_default() += a.balance.signed();
        }
        for a in self.rail.customer_accounts() {
            if a.owner != a.bank {
                *pos.entry(a.owner).or_default() += a.balance.signed();
                *pos.entry(a.bank).or_default() -= a.balance.signed();
            }
        }
        for w in self.ledger.wallets() {
            *pos.entry(w.owner).or_default() += w.ledger_balance.signed();
        }
        let outstanding = self.ledger.minted().signed() - self.ledger.burned().signed();
        *pos.entry(self.one.cbdc).or_default() -= outstanding;
        pos
    }

    /// Balances keyed by account or wallet id, for traces and replay.
    pub fn balances(&self) -> BTreeMap<String, Money> {
        let mut out = BTreeMap::new();
        for a in self.rail.settlement_accounts() {
            out.insert(a.id.to_string(), a.balance);
        }
        for a in self.rail.customer_accounts() {
            out.insert(a.id.to_string(), a.balance);
        }
        for w in self.ledger.wallets() {
            out.insert(w.id.to_string(), w.ledger_balance);
        }
        out
    }

    /// End users are the people and businesses at the edge of a payment.
    pub fn is_end_user(&self, p: ParticipantId) -> bool {
        self.role(p) == ParticipantRole::User
    }
}
