mod common;

use std::sync::Arc;

use common::*;
use hallubench_core::model::{Label, PatternKind, QRSample};
use hallubench_core::review::{
    export_filtered, parse_log, Facet, FacetVerdict, ReviewService, ReviewState, TaskKind, TaskStatus,
};
use hallubench_core::Error;
use proptest::prelude::*;

fn roster(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("ann{i}")).collect()
}

fn samples(n: usize) -> Vec<QRSample> {
    (0..n)
        .map(|i| qr(&format!("s{i:02}"), PatternKind::Vanilla, &format!("q{i}"), &format!("r{i}"), Label::Factual))
        .collect()
}

fn vote(annotator: &str, discard: bool) -> FacetVerdict {
    let f = if discard { Facet::Fail } else { Facet::Pass };
    let mut v = FacetVerdict::quality(annotator, Facet::Pass, f, Facet::Pass);
    v.timestamp = Some(0);
    v
}

#[test]
fn eight_vote_combinations() {
    for quorum in 1..=3 {
        let svc = ReviewService::in_memory();
        let s = samples(8);
        let ids = svc.create_batch("b", TaskKind::Quality, &s, &roster(3), 1, quorum).unwrap();
        for (mask, &t) in ids.iter().enumerate() {
            for j in 0..3 {
                svc.submit(t, vote(&format!("ann{j}"), mask >> j & 1 == 1)).unwrap();
            }
        }
        let d = svc.summary("b").unwrap();
        assert!(d.is_complete());
        for mask in 0..8usize {
            let discards = mask.count_ones() as usize;
            let id = format!("s{mask:02}");
            assert_eq!(
                d.discarded.contains(&id),
                majority_discards(discards, quorum),
                "quorum {quorum} mask {mask:03b}"
            );
            assert_ne!(d.discarded.contains(&id), d.kept.contains(&id));
            let tally = &d.tallies[mask];
            assert_eq!((tally.keep, tally.discard), (3 - discards, discards));
        }
    }
}

#[test]
fn decided_only_after_three_verdicts() {
    let svc = ReviewService::in_memory();
    let ids = svc.create_batch("b", TaskKind::Quality, &samples(1), &roster(3), 1, 2).unwrap();
    svc.submit(ids[0], vote("ann0", true)).unwrap();
    let t = svc.submit(ids[0], vote("ann1", true)).unwrap();
    assert_eq!(t.status, TaskStatus::Open);
    assert_eq!(svc.summary("b").unwrap().pending, ids);
    let t = svc.submit(ids[0], vote("ann2", false)).unwrap();
    assert_eq!(t.status, TaskStatus::Decided);
    assert!(matches!(svc.submit(ids[0], vote("ann2", false)), Err(Error::Conflict { .. })));
}

#[test]
fn routing_and_errors() {
    let svc = ReviewService::in_memory();
    let ids = svc.create_batch("b", TaskKind::Quality, &samples(4), &roster(6), 2, 2).unwrap();
    // group 0 gets even samples, group 1 odd ones
    assert_eq!(svc.next_task("ann0").unwrap().unwrap().id, ids[0]);
    assert_eq!(svc.next_task("ann4").unwrap().unwrap().id, ids[1]);
    svc.submit(ids[0], vote("ann0", false)).unwrap();
    assert_eq!(svc.next_task("ann0").unwrap().unwrap().id, ids[2]);
    assert!(matches!(svc.next_task("nobody"), Err(Error::Unauthorized { .. })));
    assert!(matches!(svc.submit(ids[0], vote("ann3", false)), Err(Error::Unauthorized { .. })));
    assert!(matches!(svc.submit(999, vote("ann0", false)), Err(Error::NotFound(_))));
    assert!(matches!(svc.summary("missing"), Err(Error::NotFound(_))));
    let sim = FacetVerdict::similarity("ann0", Facet::Pass);
    assert!(matches!(svc.submit(ids[2], sim), Err(Error::Contract(_))));
    assert!(svc.create_batch("b", TaskKind::Quality, &samples(1), &roster(3), 1, 2).is_err());
}

#[test]
fn probe_batches_use_similarity() {
    let svc = ReviewService::in_memory();
    let ids = svc.create_probe_batch("probe", &samples(2), &roster(3)).unwrap();
    for j in 0..3 {
        let mut v = FacetVerdict::similarity(&format!("ann{j}"), if j == 0 { Facet::Fail } else { Facet::Pass });
        v.timestamp = Some(0);
        svc.submit(ids[0], v.clone()).unwrap();
        svc.submit(ids[1], FacetVerdict::similarity(&format!("ann{j}"), Facet::Fail)).unwrap();
    }
    let d = svc.summary("probe").unwrap();
    assert_eq!(d.kind, TaskKind::Similarity);
    assert_eq!(d.kept, vec!["s00"]);
    assert_eq!(d.discarded, vec!["s01"]);
}

#[test]
fn log_replay_reproduces_decision() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("review.jsonl");
    let s = samples(10);
    let live = {
        let svc = ReviewService::open(&log).unwrap();
        let ids = svc.create_batch("b", TaskKind::Quality, &s, &roster(6), 2, 2).unwrap();
        for (i, &t) in ids.iter().enumerate().take(8) {
            let trio = svc.snapshot().task(t).unwrap().annotators.clone();
            for (j, a) in trio.iter().enumerate() {
                svc.submit(t, vote(a, (i + j) % 3 == 0)).unwrap();
            }
        }
        svc.summary("b").unwrap()
    };
    assert_eq!(live.pending.len(), 2);
    let text = std::fs::read_to_string(&log).unwrap();
    let state = ReviewState::replay(&parse_log(&text).unwrap()).unwrap();
    assert_eq!(state.decision("b").unwrap(), live);
    let reopened = ReviewService::open(&log).unwrap();
    assert_eq!(reopened.summary("b").unwrap(), live);
    assert!(export_filtered(&live, "").is_err());
}

#[test]
fn export_is_byte_for_byte() {
    let svc = ReviewService::in_memory();
    let s = samples(3);
    let ids = svc.create_batch("b", TaskKind::Quality, &s, &roster(3), 1, 2).unwrap();
    for (i, &t) in ids.iter().enumerate() {
        for j in 0..3 {
            svc.submit(t, vote(&format!("ann{j}"), i == 1)).unwrap();
        }
    }
    let d = svc.summary("b").unwrap();
    let lines: Vec<String> = s.iter().map(|x| serde_json::to_string(x).unwrap() + "\n").collect();
    let source = format!("{}\n{}{}", lines[0], lines[1], lines[2]);
    let (out, report) = export_filtered(&d, &source).unwrap();
    assert_eq!(out, format!("{}{}", lines[0], lines[2]));
    assert_eq!((report.kept, report.discarded), (2, 1));
}

#[test]
fn concurrent_submissions_keep_one_vote_each() {
    let svc = Arc::new(ReviewService::in_memory());
    let ids = svc.create_batch("b", TaskKind::Quality, &samples(40), &roster(3), 1, 2).unwrap();
    let handles: Vec<_> = (0..3)
        .flat_map(|j| (0..2).map(move |dup| (j, dup)))
        .map(|(j, _)| {
            let svc = svc.clone();
            let ids = ids.clone();
            std::thread::spawn(move || {
                let mut ok = 0;
                for &t in &ids {
                    if svc.submit(t, vote(&format!("ann{j}"), t % 2 == 0)).is_ok() {
                        ok += 1;
                    }
                }
                ok
            })
        })
        .collect();
    let accepted: usize = handles.into_iter().map(|h| h.join().unwrap()).sum();
    assert_eq!(accepted, 120);
    let snap = svc.snapshot();
    assert!(snap.tasks().all(|t| t.verdicts.len() == 3 && t.status == TaskStatus::Decided));
    assert!(svc.summary("b").unwrap().is_complete());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn replay_matches_any_vote_order(
        votes in prop::collection::vec((0usize..6, 0usize..3, any::<bool>()), 0..40),
        quorum in 1usize..=3,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("log.jsonl");
        let svc = ReviewService::open(&log).unwrap();
        let ids = svc.create_batch("b", TaskKind::Quality, &samples(6), &roster(3), 1, quorum).unwrap();
        let mut cast = vec![[None::<bool>; 3]; 6];
        for (task, who, discard) in votes {
            let r = svc.submit(ids[task], vote(&format!("ann{who}"), discard));
            if cast[task][who].is_none() {
                prop_assert!(r.is_ok());
                cast[task][who] = Some(discard);
            } else {
                prop_assert!(r.is_err());
            }
        }
        let d = svc.summary("b").unwrap();
        for (i, c) in cast.iter().enumerate() {
            let id = format!("s{i:02}");
            if c.iter().all(Option::is_some) {
                let n = c.iter().filter(|v| **v == Some(true)).count();
                prop_assert_eq!(d.discarded.contains(&id), majority_discards(n, quorum));
                prop_assert_eq!(d.kept.contains(&id), !majority_discards(n, quorum));
            } else {
                prop_assert!(d.pending.contains(&ids[i]));
            }
        }
        drop(svc);
        let text = std::fs::read_to_string(&log).unwrap();
        prop_assert_eq!(ReviewState::replay(&parse_log(&text).unwrap()).unwrap().decision("b").unwrap(), d);
    }
}

