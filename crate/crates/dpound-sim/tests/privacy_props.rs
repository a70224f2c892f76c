use dpound_sim::domain::{DatumKind, ParticipantRole, PersonalDatum};
use dpound_sim::ids::{MessageId, ParticipantId};
use dpound_sim::privacy::{taint_scan, Envelope, ExposureLog, FieldValue, Fields, KeyDirectory, ScanItem};
use proptest::prelude::*;

const ROLES: [ParticipantRole; 4] =
    [ParticipantRole::Pip, ParticipantRole::CentralBankCbdcSystem, ParticipantRole::Tsp, ParticipantRole::Acquirer];

fn datum(subject: u32, tag: u32) -> PersonalDatum {
    PersonalDatum::new(ParticipantId(subject), DatumKind::ALL[tag as usize % 4], format!("v{tag}"))
}

#[derive(Debug, Clone)]
struct Msg {
    sender: u32,
    receiver: u32,
    plain: Vec<u32>,
    sealed: Vec<(u32, Vec<u32>)>,
    opens: Vec<(usize, u32)>,
}

fn msg() -> impl Strategy<Value = Msg> {
    (
        0..4u32,
        0..4u32,
        prop::collection::vec(0..40u32, 0..3),
        prop::collection::vec((0..4u32, prop::collection::vec(0..40u32, 1..3)), 0..3),
        prop::collection::vec((0..3usize, 0..4u32), 0..4),
    )
        .prop_map(|(sender, receiver, plain, sealed, opens)| Msg { sender, receiver, plain, sealed, opens })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    /// A sealed datum reaches a component only if that component is the
    /// section's recipient and opened it.
    #[test]
    fn sealed_data_only_reach_openers(msgs in prop::collection::vec(msg(), 1..8)) {
        let mut keys = KeyDirectory::new();
        for p in 0..4 {
            keys.register(ParticipantId(p));
        }
        let mut log = ExposureLog::default();
        let mut envs = Vec::new();
        for (i, m) in msgs.iter().enumerate() {
            let mut env = Envelope::new(MessageId(i as u32 + 1), ParticipantId(m.sender), ParticipantId(m.receiver));
            for t in &m.plain {
                env.plaintext.insert(format!("p{t}"), FieldValue::Datum(datum(90 + t % 3, *t)));
            }
            for (rcpt, tags) in &m.sealed {
                let f: Fields = tags.iter().map(|t| (format!("s{t}"), FieldValue::Datum(datum(90 + t % 3, 100 + t)))).collect();
                env.sealed.push(keys.seal(f, ParticipantId(m.sender), ParticipantId(*rcpt)).unwrap());
            }
            for (idx, opener) in &m.opens {
                let res = keys.open_section(&env, *idx, ParticipantId(*opener), &mut log);
                let allowed = env.sealed.get(*idx).is_some_and(|s| s.recipient() == ParticipantId(*opener));
                prop_assert_eq!(res.is_ok(), allowed);
            }
            envs.push(env);
        }
        let items = envs.iter().map(|e| ScanItem {
            envelope: e,
            sender_role: ROLES[e.sender.0 as usize],
            receiver_role: ROLES[e.receiver.0 as usize],
        });
        let report = taint_scan(items, &log);
        for row in report.rows() {
            let env = &envs[(row.message.0 - 1) as usize];
            let in_plain = env.plaintext.values().any(|v| *v == FieldValue::Datum(row.datum.clone()));
            let reachable = (in_plain && (row.component == env.receiver || row.component == env.sender))
                || env.sealed.iter().enumerate().any(|(i, s)| {
                    s.contents_for_analysis().values().any(|v| *v == FieldValue::Datum(row.datum.clone()))
                        && ((s.recipient() == row.component && log.opens().any(|o| *o == (env.id, i, row.component)))
                            || s.sealer() == row.component)
                });
            prop_assert!(reachable, "row {:?} not justified", row);
        }
        // Every plaintext datum shows up against its receiver.
        for env in &envs {
            for v in env.plaintext.values() {
                if let FieldValue::Datum(d) = v {
                    prop_assert!(report.rows().any(|r| r.message == env.id && r.component == env.receiver && r.datum == *d));
                }
            }
        }
    }
}
