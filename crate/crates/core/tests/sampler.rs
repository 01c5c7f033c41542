mod common;

use std::collections::BTreeSet;
use std::io::Write;

use common::*;
use hallubench_core::graph::{load_triples, parse_triples, KnowledgeGraph};
use hallubench_core::model::{PatternKind, Triple};
use hallubench_core::sampler::{
    batch_sample, filter_overlap, parse_quantity, sample_chain, sample_comparison, sample_setop, triple_jaccard,
    SamplerConfig, SubgraphSample,
};
use hallubench_core::Error;
use proptest::prelude::*;

fn cfg(seed: u64, k: usize) -> SamplerConfig {
    SamplerConfig {
        k,
        n: 4,
        seed,
        numeric_relations: [NUMERIC.to_string()].into(),
        type_relations: [TYPE_REL.to_string()].into(),
        ..Default::default()
    }
}

fn as_set(s: &SubgraphSample) -> TripleSet {
    s.triples.iter().cloned().collect()
}

/// Checks every sample of one batch against the exhaustive valid sets.
fn check_against_oracle(kg: &KnowledgeGraph, c: &SamplerConfig, samples: &[SubgraphSample]) {
    let chains = all_chains(kg, c.k);
    let comparisons = all_comparisons(kg, &c.numeric_relations, &c.type_relations, c.comparison_size);
    let setops = all_setops(kg, c.setop_constraints, c.setop_min_members, c.setop_max_members);
    for s in samples {
        let ok = match s.pattern {
            PatternKind::MultiHops => chains.contains(&s.triples),
            PatternKind::Comparison => comparisons.contains(&as_set(s)),
            PatternKind::SetOperation => setops.contains(&as_set(s)),
            PatternKind::Vanilla => false,
        };
        assert!(ok, "invalid {} sample: {:?}", s.pattern, s.triples);
    }
    for (i, a) in samples.iter().enumerate() {
        for b in &samples[..i] {
            assert!(triple_jaccard(a, b) <= c.max_overlap);
        }
    }
}

#[test]
fn random_graphs_match_exhaustive_enumeration() {
    let mut seen = std::collections::BTreeMap::new();
    for g in 0..20u64 {
        let kg = random_graph(g, 200);
        assert!(kg.len() <= 200);
        for k in [2, 3] {
            let c = cfg(g * 31 + k as u64, k);
            let first = batch_sample(&kg, &c).unwrap();
            check_against_oracle(&kg, &c, &first);
            for s in &first {
                *seen.entry(s.pattern).or_insert(0) += 1;
            }
            assert_eq!(first, batch_sample(&kg, &c).unwrap(), "graph {g} not deterministic");
        }
    }
    assert_eq!(seen.len(), 3, "{seen:?}");
}

#[test]
fn single_draws_are_valid() {
    for g in 0..10u64 {
        let kg = random_graph(100 + g, 120);
        let c = cfg(g, 3);
        if let Some(s) = sample_chain(&kg, &c).unwrap() {
            assert!(all_chains(&kg, 3).contains(&s.triples));
        }
        if let Some(s) = sample_comparison(&kg, &c).unwrap() {
            assert!(all_comparisons(&kg, &c.numeric_relations, &c.type_relations, 2).contains(&as_set(&s)));
        }
        if let Some(s) = sample_setop(&kg, &c).unwrap() {
            assert!(all_setops(&kg, 2, 2, 5).contains(&as_set(&s)));
        }
    }
}

#[test]
fn three_hop_chain_on_fixture() {
    let (kg, _) = load_triples(&fixtures().join("kg_small.tsv"), &BTreeSet::new()).unwrap();
    let chains = all_chains(&kg, 3);
    let yao: Vec<Triple> = [
        ("Yao Ming", "spouse", "Ye Li"),
        ("Ye Li", "educated at", "Shanghai University of Sport"),
        ("Shanghai University of Sport", "establishment time", "November 1952"),
    ]
    .iter()
    .map(|(h, r, t)| Triple::new(h, r, t).unwrap())
    .collect();
    assert!(chains.contains(&yao));
    let c = SamplerConfig {
        numeric_relations: ["height".to_string()].into(),
        ..cfg(3, 3)
    };
    let batch = batch_sample(&kg, &c).unwrap();
    check_against_oracle(&kg, &c, &batch);
}

#[test]
fn comparison_keeps_type_triples() {
    let kg = KnowledgeGraph::from_triples(
        [
            ("Chris Paul", "instance of", "human"),
            ("Chris Paul", "height", "183 centimetre"),
            ("Franklin Delano Roosevelt", "instance of", "human"),
            ("Franklin Delano Roosevelt", "height", "189 centimetre"),
        ]
        .iter()
        .map(|(h, r, t)| Triple::new(h, r, t).unwrap()),
    );
    let c = SamplerConfig {
        numeric_relations: ["height".to_string()].into(),
        ..Default::default()
    };
    let s = sample_comparison(&kg, &c).unwrap().unwrap();
    assert_eq!(as_set(&s), kg.triples().iter().cloned().collect());
}

#[test]
fn three_constraint_set_operation() {
    let (kg, _) = load_triples(&fixtures().join("kg_small.tsv"), &BTreeSet::new()).unwrap();
    let groups = all_setops(&kg, 3, 2, 5);
    let want: TripleSet = ["Mission: Impossible II", "The Last Samurai"]
        .iter()
        .flat_map(|f| {
            [
                ("producer", "Tom Cruise"),
                ("original language of film or TV show", "English"),
                ("composer", "Hans Zimmer"),
            ]
            .map(|(r, t)| Triple::new(f, r, t).unwrap())
        })
        .collect();
    assert!(groups.contains(&want));
    let c = SamplerConfig {
        setop_constraints: 3,
        ..cfg(5, 3)
    };
    for seed in 0..10 {
        if let Some(s) = sample_setop(&kg, &SamplerConfig { seed, ..c.clone() }).unwrap() {
            assert!(groups.contains(&as_set(&s)));
        }
    }
}

#[test]
fn preconditions() {
    let kg = random_graph(1, 50);
    assert!(matches!(batch_sample(&kg, &SamplerConfig { n: 0, ..cfg(0, 3) }), Err(Error::Contract(_))));
    assert!(matches!(batch_sample(&KnowledgeGraph::default(), &cfg(0, 3)), Err(Error::EmptyGraph)));
    assert!(sample_chain(&kg, &SamplerConfig { k: 50, ..cfg(0, 50) }).unwrap().is_none());
}

#[test]
fn ten_thousand_line_file_with_malformed_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("kg.tsv");
    let mut f = std::fs::File::create(&path).unwrap();
    let mut bad = 0;
    for i in 0..10_000 {
        if i % 270 == 7 && bad < 37 {
            bad += 1;
            match bad % 3 {
                0 => writeln!(f, "e{i}\tonly two").unwrap(),
                1 => writeln!(f, "e{i}\tr\tx\textra").unwrap(),
                _ => writeln!(f, "e{i}\t \tx").unwrap(),
            }
        } else {
            writeln!(f, "e{i}\tr{}\te{}", i % 7, (i * 13 + 1) % 10_000).unwrap();
        }
    }
    drop(f);
    assert_eq!(bad, 37);
    let (kg, report) = load_triples(&path, &BTreeSet::new()).unwrap();
    assert_eq!(report.accepted, 9963);
    assert_eq!(report.rejects.len(), 37);
    assert_eq!(kg.len(), 9963);
    assert_eq!(report.rejects[0].line, 8);
}

#[test]
fn allowlist_and_quantities() {
    let (kg, report) = parse_triples("a\tr1\tb\nb\tr2\tc\n# note\n\n", &["r1".to_string()].into()).unwrap();
    assert_eq!((kg.len(), report.filtered), (1, 1));
    assert_eq!(parse_quantity("183 centimetre"), Some((183.0, "centimetre".into())));
    assert_eq!(parse_quantity("-2.5"), Some((-2.5, String::new())));
    assert_eq!(parse_quantity("tall"), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn overlap_filter_invariant(seed in 0u64..500, max_overlap in 0.0f64..1.0) {
        let kg = random_graph(seed, 80);
        let c = SamplerConfig { max_overlap, ..cfg(seed, 2) };
        let out = batch_sample(&kg, &c).unwrap();
        for (i, a) in out.iter().enumerate() {
            for b in &out[..i] {
                prop_assert!(triple_jaccard(a, b) <= max_overlap);
            }
        }
        prop_assert_eq!(filter_overlap(out.clone(), max_overlap), out);
    }
}
