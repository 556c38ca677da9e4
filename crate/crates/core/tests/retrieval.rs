use ipcr_core::client::ProtocolError;
use ipcr_core::session::fetch_by_index;
use ipcr_core::wire::{ErrorCode, Frame, MsgType};
use ipcr_core::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const KEY: [u8; 32] = [0x5a; 32];

fn worked_db() -> Database {
    Database::from_rows(3, 3, &[&[2, 2, 0], &[1, 0, 0], &[1, 2, 3]]).unwrap()
}

fn cluster(scheme: Scheme, db: &Database, l1: u32) -> SimCluster {
    let cfg = ProtocolConfig::canonical(scheme, db.dim(), db.len(), db.range(), l1).unwrap();
    SimCluster::deploy(&cfg, db, KEY).unwrap()
}

fn request(x: &[u32], i: &[usize], scheme: Scheme) -> RetrievalRequest {
    RetrievalRequest::new(FeatureVector::new(x.to_vec(), 3).unwrap(), ImmutableSet::new(i.to_vec(), x.len()).unwrap(), scheme)
}

#[test]
fn worked_instance_every_scheme() {
    let db = worked_db();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for scheme in Scheme::ALL {
        let mut c = cluster(scheme, &db, 1);
        let out = run_retrieval(&mut c, &request(&[1, 2, 0], &[1], scheme), &mut rng).unwrap();
        assert_eq!(out.result.theta_star, Some(2), "{scheme}");
        assert_eq!(out.result.distance, Some(4), "{scheme}");
        assert_eq!(out.result.candidate_set.members().collect::<Vec<_>>(), [2, 3]);
    }
}

#[test]
fn two_phase_worked_cost_and_revealed() {
    let db = worked_db();
    let mut c = cluster(Scheme::TwoPhase, &db, 1);
    let out = run_retrieval(&mut c, &request(&[1, 2, 0], &[1], Scheme::TwoPhase), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(out.revealed, [5, 4, 9]);
    assert_eq!(out.result.cost.total(), 54);
    assert_eq!(out.config.q.get(), 29);
}

#[test]
fn single_phase_reports_mismatch_hints() {
    let db = worked_db();
    let mut c = cluster(Scheme::SinglePhase, &db, 1);
    let out = run_retrieval(&mut c, &request(&[1, 2, 0], &[1], Scheme::SinglePhase), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(out.revealed, [28, 4, 9]);
    assert_eq!(out.result.mismatch_hints, [Some(1), None, None]);
    assert_eq!(out.result.cost.total(), 6 * 3 + 3 * 3);
}

#[test]
fn empty_candidate_set_skips_distance_round() {
    let db = worked_db();
    let mut c = cluster(Scheme::TwoPhase, &db, 1);
    let out = run_retrieval(&mut c, &request(&[0, 0, 0], &[1, 2, 3], Scheme::TwoPhase), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    assert_eq!(out.result.theta_star, None);
    assert!(out.result.candidate_set.is_empty());
    assert_eq!(out.result.cost.phase(Phase::Distance), (0, 0));
    assert_eq!(out.result.cost.total(), 6 * 3 + 3 * 3);
}

#[test]
fn singleton_candidate_set_skips_unless_forced() {
    let db = worked_db();
    let mut c = cluster(Scheme::TwoPhase, &db, 1);
    let mut req = request(&[1, 2, 0], &[1, 2], Scheme::TwoPhase);
    let out = run_retrieval(&mut c, &req, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!((out.result.theta_star, out.result.distance), (Some(3), None));
    assert_eq!(out.result.cost.upload_total(), 6 * 3);
    assert_eq!(out.result.cost.total(), 6 * 3 + 3 * 3);
    req.always_run_phase2 = true;
    let out = run_retrieval(&mut c, &req, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    assert_eq!((out.result.theta_star, out.result.distance), (Some(3), Some(9)));
    assert_eq!(out.result.cost.total(), 9 * 6);
}

#[test]
fn weighted_two_phase_uses_four_servers() {
    let db = Database::from_rows(2, 2, &[&[1, 0], &[0, 2]]).unwrap();
    for (w, star, dist) in [(3, 1, 3), (5, 2, 4)] {
        let weights = ActionabilityWeights::new([(1, w)].into_iter().collect(), 5).unwrap();
        for scheme in [Scheme::TwoPhaseActionable, Scheme::SinglePhaseActionable] {
            let mut c = cluster(scheme, &db, 5);
            let mut req = RetrievalRequest::new(FeatureVector::new(vec![0, 0], 2).unwrap(), ImmutableSet::empty(2), scheme);
            req.weights = Some(weights.clone());
            let out = run_retrieval(&mut c, &req, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
            assert_eq!((out.result.theta_star, out.result.distance), (Some(star), Some(dist)), "{scheme} w={w}");
            if scheme == Scheme::TwoPhaseActionable {
                assert_eq!(out.result.cost.total(), 14 * 2 + 11 * 2);
                assert_eq!(c.inbound(3).len(), 2);
            }
        }
    }
}

#[test]
fn servers_never_share_frames() {
    let db = worked_db();
    let mut c = cluster(Scheme::TwoPhase, &db, 1);
    run_retrieval(&mut c, &request(&[1, 2, 0], &[1], Scheme::TwoPhase), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    for a in 0..3 {
        for b in a + 1..3 {
            for f in c.inbound(a) {
                let frame = Frame::decode(f).unwrap();
                if frame.msg_type == MsgType::Query {
                    assert!(!c.inbound(b).contains(f));
                }
            }
        }
    }
}

#[test]
fn tampered_distance_answer_is_detected() {
    let db = worked_db();
    let mut c = cluster(Scheme::TwoPhase, &db, 1);
    c.tamper(0, |req, reply| {
        let f = Frame::decode(req).unwrap();
        if f.msg_type == MsgType::Query && f.payload[0] == Phase::Distance.id() {
            let mut frame = Frame::decode(&reply).unwrap();
            // first element of the answer vector, row 1
            let at = 8;
            let v = u64::from_le_bytes(frame.payload[at..at + 8].try_into().unwrap());
            frame.payload[at..at + 8].copy_from_slice(&((v + 1) % 29).to_le_bytes());
            return frame.encode();
        }
        reply
    });
    let err = run_retrieval(&mut c, &request(&[1, 2, 0], &[1], Scheme::TwoPhase), &mut ChaCha8Rng::seed_from_u64(9)).unwrap_err();
    assert!(err.is_misbehavior(), "{err}");
    assert!(matches!(err, SessionError::Protocol(ProtocolError::ServerMisbehavior { row: 1, .. })));
}

#[test]
fn unreachable_server_is_named() {
    let db = worked_db();
    let mut c = cluster(Scheme::SinglePhase, &db, 1);
    c.disconnect(2);
    let err = run_retrieval(&mut c, &request(&[1, 2, 0], &[1], Scheme::SinglePhase), &mut ChaCha8Rng::seed_from_u64(10)).unwrap_err();
    match err {
        SessionError::Transport(t) => {
            assert_eq!(t.server, 2);
            assert!(t.to_string().contains("sim://3"));
        }
        other => panic!("{other}"),
    }
}

#[test]
fn session_reuse_is_rejected() {
    let db = worked_db();
    let mut c = cluster(Scheme::TwoPhase, &db, 1);
    let req = request(&[1, 2, 0], &[1], Scheme::TwoPhase);
    run_retrieval(&mut c, &req, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    let err = run_retrieval(&mut c, &req, &mut ChaCha8Rng::seed_from_u64(11)).unwrap_err();
    assert!(matches!(err, SessionError::Rejected { code: ErrorCode::SessionReuse, .. }), "{err}");
}

#[test]
fn single_phase_field_must_fit_bound() {
    // a deployment sized for the two-phase bound cannot serve single-phase
    let db = worked_db();
    let cfg = ProtocolConfig::canonical(Scheme::TwoPhase, 3, 3, 3, 1).unwrap();
    let nodes = (1..=3).map(|n| ServerNode::new(n, 3, cfg.q.get(), n as u64, db.clone(), KEY).unwrap()).collect();
    let mut c = SimCluster::new(nodes);
    let err = run_retrieval(&mut c, &request(&[1, 2, 0], &[1], Scheme::SinglePhase), &mut ChaCha8Rng::seed_from_u64(12)).unwrap_err();
    assert!(matches!(err, SessionError::Protocol(ProtocolError::Config(_))), "{err}");
}

#[test]
fn fetch_returns_plain_row() {
    let db = worked_db();
    let mut c = cluster(Scheme::TwoPhase, &db, 1);
    let row = fetch_by_index(&mut c, 0, [1; 16], 3, 3).unwrap();
    assert_eq!(row.coords(), [1, 2, 3]);
    assert!(fetch_by_index(&mut c, 0, [1; 16], 0, 3).is_err());
    assert!(matches!(
        fetch_by_index(&mut c, 0, [1; 16], 4, 3),
        Err(SessionError::Rejected { code: ErrorCode::NoSuchRow, .. })
    ));
}

#[test]
fn weights_rejected_for_plain_schemes() {
    let db = worked_db();
    let mut c = cluster(Scheme::TwoPhase, &db, 1);
    let mut req = request(&[1, 2, 0], &[1], Scheme::TwoPhase);
    req.weights = Some(ActionabilityWeights::unit(2));
    assert!(run_retrieval(&mut c, &req, &mut ChaCha8Rng::seed_from_u64(13)).is_err());
}
