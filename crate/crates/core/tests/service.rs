mod common;

use std::sync::Arc;
use std::time::Instant;

use claimlens_core::bundle::ModelBundle;
use claimlens_core::corpus::EntityType::Hos;
use claimlens_core::corpus::Speaker::{Assessor, Claimant};
use claimlens_core::corpus::Utterance;
use claimlens_core::evalkit::RuntimeStats;
use claimlens_core::service::*;
use claimlens_core::tracker::*;
use claimlens_core::Error;
use common::{fixture, long_replay, manager, utt};

fn scenario() -> Vec<Utterance> {
    let hos = fixture().kb_name(Hos, 1);
    vec![
        utt(0, Assessor, &format!("were you diagnosed at {hos}")),
        utt(1, Claimant, "Yes, on 2019-03-01."),
        utt(2, Assessor, "okay let me note that down"),
    ]
}

#[test]
fn opens_give_distinct_ids_and_headed_logs() {
    let dir = tempfile::tempdir().unwrap();
    let m = manager(dir.path());
    let (a, b) = (m.open_session().unwrap(), m.open_session().unwrap());
    assert_ne!(a, b);
    let text = std::fs::read_to_string(m.log_path(&a)).unwrap();
    assert_eq!(text, format!("{EVENTS_HEADER}\n"));
}

#[test]
fn schema_mismatch_and_missing_sections_are_refused() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let mut other = f.schema.clone();
    other.topics.pop();
    let opts = ServiceOptions {
        sessions_dir: dir.path().to_path_buf(),
        tracker: TrackerConfig::default(),
        fsync: false,
    };
    let r = SessionManager::new(
        Arc::new(f.bundle.clone()),
        Arc::new(other),
        Arc::new(f.sq.clone()),
        opts,
    );
    assert!(matches!(r, Err(Error::VersionMismatch(_))));
    let mut file = f.bundle.to_model_file();
    file.sections.retain(|s| s.name != "tagger");
    let err = ModelBundle::from_model_file(&file).unwrap_err();
    assert!(err.to_string().contains("`tagger`"), "{err}");
}

#[test]
fn transcript_events_match_the_tracker() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let m = manager(dir.path());
    let id = m.open_session().unwrap();
    let mut direct = SessionState::new();
    let mut kinds = Vec::new();
    for u in scenario() {
        let got = m.handle_transcript_event(&id, &u).unwrap();
        let want = process_utterance(&mut direct, &u, &f.bundle, &f.sq, &TrackerConfig::default())
            .unwrap();
        assert_eq!(got, want);
        kinds.extend(got.iter().map(SessionEvent::kind));
    }
    assert_eq!(
        kinds,
        vec![
            EventKind::TopicChanged,
            EventKind::KeywordTentative,
            EventKind::KeywordConfirmed,
            EventKind::KeywordConfirmed
        ]
    );
    assert_eq!(m.snapshot(&id).unwrap(), snapshot(&direct));
}

#[test]
fn duplicate_index_is_refused_without_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    let m = manager(dir.path());
    let id = m.open_session().unwrap();
    let turns = scenario();
    m.handle_transcript_event(&id, &turns[0]).unwrap();
    let bytes = std::fs::read(m.log_path(&id)).unwrap();
    let snap = m.snapshot(&id).unwrap();
    let err = m.handle_transcript_event(&id, &turns[0]).unwrap_err();
    assert!(matches!(err, Error::OutOfOrder { index: 0, last: 0 }));
    assert!(m
        .handle_transcript_event(&id, &utt(1, Claimant, " "))
        .is_err());
    assert_eq!(std::fs::read(m.log_path(&id)).unwrap(), bytes);
    assert_eq!(m.snapshot(&id).unwrap(), snap);
}

#[test]
fn user_actions_follow_the_record_state_machine() {
    let dir = tempfile::tempdir().unwrap();
    let m = manager(dir.path());
    let id = m.open_session().unwrap();
    for u in scenario() {
        m.handle_transcript_event(&id, &u).unwrap();
    }
    let hos = fixture().kb_name(Hos, 1);
    let (event, list) = m
        .handle_user_action(
            &id,
            &UserAction::FillFieldRequest {
                field_id: "history_hos".into(),
            },
        )
        .unwrap();
    assert_eq!(event.kind(), EventKind::SuggestionMade);
    assert_eq!(list.unwrap().candidates, vec![hos]);
    let (event, _) = m
        .handle_user_action(&id, &UserAction::RejectKeyword { record: 1 })
        .unwrap();
    assert_eq!(event.kind(), EventKind::KeywordDropped);
    assert!(m.snapshot(&id).unwrap().confirmed[&Hos].is_empty());
    assert!(matches!(
        m.handle_user_action(&id, &UserAction::ConfirmKeyword { record: 1 }),
        Err(Error::InvalidTransition { record: 1, .. })
    ));
    assert!(matches!(
        m.handle_user_action(&id, &UserAction::ConfirmKeyword { record: 99 }),
        Err(Error::UnknownRecord(99))
    ));
    assert!(matches!(
        m.handle_user_action(
            &id,
            &UserAction::FillFieldRequest {
                field_id: "nope".into()
            }
        ),
        Err(Error::UnknownField(_))
    ));
}

#[test]
fn close_returns_the_final_snapshot_and_ends_the_session() {
    let dir = tempfile::tempdir().unwrap();
    let m = manager(dir.path());
    let id = m.open_session().unwrap();
    for u in scenario() {
        m.handle_transcript_event(&id, &u).unwrap();
    }
    m.handle_user_action(
        &id,
        &UserAction::FillFieldRequest {
            field_id: "diag_hos".into(),
        },
    )
    .unwrap();
    let live = m.snapshot(&id).unwrap();
    let closed = m.close_session(&id).unwrap();
    assert_eq!(closed, live);
    assert!(matches!(m.snapshot(&id), Err(Error::UnknownSession(_))));
    assert!(matches!(
        m.handle_transcript_event(&id, &utt(9, Assessor, "hello")),
        Err(Error::UnknownSession(_))
    ));
    assert!(matches!(
        m.close_session(&id),
        Err(Error::UnknownSession(_))
    ));
    let (records, _) = read_log(&m.log_path(&id)).unwrap();
    assert_eq!(snapshot(&SessionState::replay(&records).unwrap()), closed);
}

#[test]
fn recovery_from_every_prefix_matches_the_live_state() {
    let dir = tempfile::tempdir().unwrap();
    let turns = long_replay(60);
    let (id, live_states, bytes) = {
        let m = manager(dir.path());
        let id = m.open_session().unwrap();
        let mut states = vec![SessionState::new()];
        let mut direct = SessionState::new();
        let f = fixture();
        for u in &turns {
            m.handle_transcript_event(&id, u).unwrap();
            process_utterance(&mut direct, u, &f.bundle, &f.sq, &TrackerConfig::default()).unwrap();
            states.push(direct.clone());
        }
        let bytes = std::fs::read(m.log_path(&id)).unwrap();
        (id, states, bytes)
    };
    let text = String::from_utf8(bytes.clone()).unwrap();
    let line_ends: Vec<usize> = text.match_indices('\n').map(|(i, _)| i + 1).collect();
    let mut cuts: Vec<usize> = line_ends.clone();
    cuts.extend(line_ends.windows(2).map(|w| (w[0] + w[1]) / 2));
    for cut in cuts {
        let sub = tempfile::tempdir().unwrap();
        let m = manager(sub.path());
        std::fs::write(m.log_path(&id), &bytes[..cut]).unwrap();
        let snap = m.reopen_session(&id).unwrap();
        let complete = text[..cut].rfind('\n').unwrap() + 1;
        let (records, _) = read_log(&m.log_path(&id)).unwrap();
        assert_eq!(std::fs::read(m.log_path(&id)).unwrap(), &bytes[..complete]);
        let state = SessionState::replay(&records).unwrap();
        assert_eq!(snap, snapshot(&state));
        let full = &live_states.last().unwrap().events;
        assert_eq!(state.events[..], full[..state.events.len()]);
        let at_boundary =
            text[complete..].starts_with("{\"record\":\"utterance\"") || complete == text.len();
        if at_boundary {
            let k = state.last_index.map_or(0, |k| k as usize + 1);
            assert_eq!(state, live_states[k]);
            if let Some(next) = turns.get(k) {
                m.handle_transcript_event(&id, next).unwrap();
                assert_eq!(m.snapshot(&id).unwrap(), snapshot(&live_states[k + 1]));
            }
        }
    }
}

#[test]
fn sessions_are_isolated_under_interleaving() {
    use proptest::prelude::*;
    let turns = long_replay(40);
    let alone = |dir: &std::path::Path| {
        let m = manager(dir);
        let id = m.open_session().unwrap();
        for u in &turns {
            m.handle_transcript_event(&id, u).unwrap();
        }
        std::fs::read(m.log_path(&id)).unwrap()
    };
    let d = tempfile::tempdir().unwrap();
    let reference = alone(d.path());
    let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig::with_cases(8));
    runner
        .run(&proptest::collection::vec(any::<bool>(), 80), |order| {
            let dir = tempfile::tempdir().unwrap();
            let m = Arc::new(manager(dir.path()));
            let ids = [m.open_session().unwrap(), m.open_session().unwrap()];
            let mut next = [0usize, 0usize];
            for pick in order
                .iter()
                .map(|&b| usize::from(b))
                .chain([0; 40])
                .chain([1; 40])
            {
                if let Some(u) = turns.get(next[pick]) {
                    m.handle_transcript_event(&ids[pick], u).unwrap();
                    next[pick] += 1;
                }
            }
            for id in &ids {
                prop_assert_eq!(&std::fs::read(m.log_path(id)).unwrap(), &reference);
            }
            Ok(())
        })
        .unwrap();
}

#[test]
fn concurrent_sessions_on_threads_match_a_solo_run() {
    let turns = long_replay(30);
    let dir = tempfile::tempdir().unwrap();
    let m = Arc::new(manager(dir.path()));
    let ids: Vec<String> = (0..4).map(|_| m.open_session().unwrap()).collect();
    std::thread::scope(|s| {
        for id in &ids {
            let (m, turns) = (&m, &turns);
            s.spawn(move || {
                for u in turns {
                    m.handle_transcript_event(id, u).unwrap();
                }
            });
        }
    });
    let logs: Vec<Vec<u8>> = ids
        .iter()
        .map(|id| std::fs::read(m.log_path(id)).unwrap())
        .collect();
    assert!(logs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn wire_flow_acknowledges_every_message_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let m = manager(dir.path());
    let opened = m.handle(&Inbound {
        session_id: None,
        seq: 1,
        body: InboundBody::Control {
            control: Control::Open,
        },
    });
    let id = opened[0].session_id.clone().unwrap();
    assert!(
        matches!(&opened[0].body, OutboundBody::Opened { version, .. } if version == PROTOCOL_VERSION)
    );
    let mut all = opened.clone();
    let mut seq = 1;
    let mut send = |body: InboundBody| {
        seq += 1;
        let out = m.handle(&Inbound {
            session_id: Some(id.clone()),
            seq,
            body,
        });
        let last = out.last().unwrap();
        match &last.body {
            OutboundBody::Ack { in_reply_to } | OutboundBody::Error { in_reply_to, .. } => {
                assert_eq!(*in_reply_to, seq)
            }
            other => panic!("unterminated reply {other:?}"),
        }
        all.extend(out.clone());
        out
    };
    for u in scenario() {
        send(InboundBody::Transcript { utterance: u });
    }
    let dup = send(InboundBody::Transcript {
        utterance: scenario()[0].clone(),
    });
    assert!(matches!(&dup[0].body, OutboundBody::Error { code, .. } if code == "out_of_order"));
    let fill = send(InboundBody::Action {
        action: UserAction::FillFieldRequest {
            field_id: "diag_hos".into(),
        },
    });
    assert!(
        matches!(&fill[0].body, OutboundBody::Suggestions { suggestions } if suggestions.candidates.len() == 1)
    );
    let resumed = send(InboundBody::Control {
        control: Control::Resume { after_seq: 2 },
    });
    let seqs: Vec<u64> = resumed
        .iter()
        .filter_map(|o| match &o.body {
            OutboundBody::Event { event } => Some(event.seq),
            _ => None,
        })
        .collect();
    assert_eq!(seqs, vec![3, 4, 5]);
    let closed = send(InboundBody::Control {
        control: Control::Close,
    });
    assert!(matches!(closed[0].body, OutboundBody::Closed { .. }));
    let after = send(InboundBody::Control {
        control: Control::Snapshot,
    });
    assert!(
        matches!(&after[0].body, OutboundBody::Error { code, .. } if code == "unknown_session")
    );
    let session_seqs: Vec<u64> = all.iter().filter(|o| o.seq > 0).map(|o| o.seq).collect();
    assert!(
        session_seqs.windows(2).all(|w| w[0] < w[1]),
        "{session_seqs:?}"
    );
    for o in &all {
        let line = serde_json::to_string(o).unwrap();
        assert!(!line.contains('\n'));
        assert_eq!(&serde_json::from_str::<Outbound>(&line).unwrap(), o);
    }
    let reopened = m.handle(&Inbound {
        session_id: Some(id.clone()),
        seq: 100,
        body: InboundBody::Control {
            control: Control::Open,
        },
    });
    assert!(
        matches!(&reopened[0].body, OutboundBody::Opened { snapshot, .. } if snapshot.event_count == 5)
    );
}

#[test]
fn p95_event_latency_on_a_long_replay() {
    let dir = tempfile::tempdir().unwrap();
    let m = manager(dir.path());
    let id = m.open_session().unwrap();
    let mut ms = Vec::new();
    for u in long_replay(500) {
        let start = Instant::now();
        m.handle_transcript_event(&id, &u).unwrap();
        ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let stats = RuntimeStats::from_samples(ms);
    assert!(stats.p95_ms < 150.0, "{stats:?}");
}
