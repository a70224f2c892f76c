use dpound_sim::ids::{AccountId, BatchId, IdSource, MessageId, ParticipantId};
use dpound_sim::money::Money;
use dpound_sim::netting::{net_pairwise, net_positions, settle_batch, BatchState, NetSettlementBatch, NettingError, Obligation};
use dpound_sim::rail::{FpsInstruction, FpsParticipation, Rail, RailError, SettlementKind};

const BANK_A: ParticipantId = ParticipantId(1);
const BANK_B: ParticipantId = ParticipantId(2);
const PIP: ParticipantId = ParticipantId(3);
const ALICE: ParticipantId = ParticipantId(10);
const BOB: ParticipantId = ParticipantId(11);

fn m(p: u64) -> Money {
    Money::new(p)
}

struct Fx {
    rail: Rail,
    settle_a: AccountId,
    settle_b: AccountId,
    alice: AccountId,
    bob: AccountId,
}

fn fixture(alice_balance: u64) -> Fx {
    let mut ids = IdSource::new(1);
    let mut rail = Rail::new();
    let settle_a = rail.open_settlement_account(&mut ids, BANK_A, "10-00-00", "00000001", m(1_000_000), SettlementKind::Bank);
    let settle_b = rail.open_settlement_account(&mut ids, BANK_B, "20-00-00", "00000002", m(1_000_000), SettlementKind::Bank);
    let alice = rail.open_customer_account(&mut ids, BANK_A, ALICE, "10-00-00", "11111111", m(alice_balance));
    let bob = rail.open_customer_account(&mut ids, BANK_B, BOB, "20-00-00", "22222222", m(0));
    rail.register_fps_participant(BANK_A, "10-00-00", FpsParticipation::Dcsp).unwrap();
    rail.register_fps_participant(BANK_B, "20-00-00", FpsParticipation::Dcsp).unwrap();
    Fx { rail, settle_a, settle_b, alice, bob }
}

fn to_bob(f: &Fx, id: u32, amount: u64) -> FpsInstruction {
    FpsInstruction {
        id: MessageId(id),
        from_account: f.alice,
        to_sort_code: "20-00-00".into(),
        to_account: "22222222".into(),
        amount: m(amount),
        remittance: None,
    }
}

fn bal(f: &Fx, a: AccountId) -> u64 {
    f.rail.balance(a).unwrap().pence()
}

#[test]
fn fps_clears_customer_to_customer() {
    let mut f = fixture(10000);
    let total = f.rail.total_settlement();
    let cleared = f.rail.fps_pay(1, &to_bob(&f, 1, 5000)).unwrap();
    assert_eq!((cleared.to, cleared.notify), (f.bob, BANK_B));
    assert_eq!((bal(&f, f.alice), bal(&f, f.bob)), (5000, 5000));
    assert_eq!(bal(&f, f.settle_a), 995_000);
    assert_eq!(bal(&f, f.settle_b), 1_005_000);
    assert_eq!(f.rail.total_settlement(), total);
}

#[test]
fn fps_insufficient_funds_posts_nothing() {
    let mut f = fixture(1000);
    let before = f.rail.journal().len();
    let r = f.rail.fps_pay(1, &to_bob(&f, 1, 5000));
    assert!(matches!(r, Err(RailError::InsufficientFunds { .. })));
    assert_eq!(f.rail.journal().len(), before);
    assert_eq!((bal(&f, f.alice), bal(&f, f.bob)), (1000, 0));
}

#[test]
fn fps_rejects_replayed_instruction() {
    let mut f = fixture(10000);
    let i = to_bob(&f, 1, 100);
    f.rail.fps_pay(1, &i).unwrap();
    assert_eq!(f.rail.fps_pay(2, &i), Err(RailError::DuplicateInstruction(MessageId(1))));
    assert_eq!(bal(&f, f.bob), 100);
}

#[test]
fn fps_unknown_destination() {
    let mut f = fixture(10000);
    let mut i = to_bob(&f, 1, 100);
    i.to_account = "99999999".into();
    assert!(matches!(f.rail.fps_pay(1, &i), Err(RailError::UnknownDestination(_))));
}

#[test]
fn dcnsp_needs_a_dcsp_sponsor() {
    let mut f = fixture(0);
    f.rail.register_fps_participant(PIP, "30-00-00", FpsParticipation::Dcnsp { sponsor: BANK_A }).unwrap();
    assert_eq!(f.rail.fps_participation(PIP), Some(FpsParticipation::Dcnsp { sponsor: BANK_A }));
    let other = ParticipantId(4);
    assert_eq!(
        f.rail.register_fps_participant(other, "40-00-00", FpsParticipation::Dcnsp { sponsor: PIP }),
        Err(RailError::SponsorNotDcsp(PIP))
    );
}

#[test]
fn rtgs_transfer_moves_settlement_funds() {
    let mut f = fixture(0);
    f.rail.rtgs_transfer(1, f.settle_a, f.settle_b, m(10000)).unwrap();
    assert_eq!((bal(&f, f.settle_a), bal(&f, f.settle_b)), (990_000, 1_010_000));
    let r = f.rail.rtgs_transfer(2, f.settle_a, f.settle_b, m(2_000_000));
    assert!(matches!(r, Err(RailError::InsufficientFunds { .. })));
    let before = f.rail.journal().len();
    f.rail.rtgs_transfer(3, f.settle_a, f.settle_b, Money::ZERO).unwrap();
    assert_eq!(f.rail.journal().len(), before);
    f.rail.set_rtgs_open(false);
    assert_eq!(f.rail.rtgs_transfer(4, f.settle_a, f.settle_b, m(1)), Err(RailError::RtgsClosed));
}

fn ob(d: ParticipantId, c: ParticipantId, amount: u64) -> Obligation {
    Obligation { debtor: d, creditor: c, amount: m(amount) }
}

#[test]
fn pairwise_netting() {
    let net = net_pairwise(&[ob(BANK_A, BANK_B, 100), ob(BANK_B, BANK_A, 30)]);
    assert_eq!(net, vec![ob(BANK_A, BANK_B, 70)]);
    assert!(net_positions(&[ob(BANK_A, BANK_B, 4000), ob(BANK_B, BANK_A, 4000)]).is_empty());
}

#[test]
fn settle_batch_applies_net_positions() {
    let mut f = fixture(0);
    let (sa, sb) = (f.settle_a, f.settle_b);
    let account_of = move |p: ParticipantId| match p {
        BANK_A => Some(sa),
        BANK_B => Some(sb),
        _ => None,
    };
    let mut empty = NetSettlementBatch::new(BatchId(1), 0, 10);
    settle_batch(&mut f.rail, 10, &mut empty, &account_of).unwrap();
    assert_eq!(empty.state, BatchState::Settled);

    let mut b = NetSettlementBatch::new(BatchId(2), 10, 10);
    b.obligations = vec![ob(BANK_A, BANK_B, 100), ob(BANK_B, BANK_A, 30)];
    settle_batch(&mut f.rail, 20, &mut b, &account_of).unwrap();
    assert_eq!((bal(&f, sa), bal(&f, sb)), (999_930, 1_000_070));
    assert_eq!(settle_batch(&mut f.rail, 21, &mut b, &account_of), Err(NettingError::NotOpen(BatchId(2))));

    let mut big = NetSettlementBatch::new(BatchId(3), 20, 10);
    big.obligations = vec![ob(BANK_A, BANK_B, 5_000_000)];
    assert!(matches!(
        settle_batch(&mut f.rail, 30, &mut big, &account_of),
        Err(NettingError::InsufficientSettlementFunds { participant: BANK_A, .. })
    ));
    assert_eq!((bal(&f, sa), bal(&f, sb)), (999_930, 1_000_070));
}
