mod common;

use common::*;
use hallubench_core::metrics::{
    exp_match, extract_label, fact_cls, rouge_l, tokenize, unigram_f1, ExpMatchBreakdown, ExpMatchConfig,
    LabelOutcome,
};
use hallubench_core::model::{Label, PredictedLabel};
use proptest::prelude::*;

#[test]
fn exp_match_hand_computed_cases() {
    for case in exp_cases() {
        let cfg = ExpMatchConfig::new(case.alpha).unwrap();
        let got = exp_match::<f64>(case.candidate, case.reference, &cfg, case.parsed);
        assert!((got.score_bd - case.score_bd).abs() < 1e-9, "{}: bd {}", case.name, got.score_bd);
        assert!((got.score_ht - case.score_ht).abs() < 1e-9, "{}: ht {}", case.name, got.score_ht);
        assert!((got.combined - case.combined).abs() < 1e-9, "{}: {}", case.name, got.combined);
    }
}

#[test]
fn weighting_arithmetic() {
    let cfg = ExpMatchConfig::<f64>::default();
    assert_eq!(cfg.alpha, 0.7);
    let b = ExpMatchBreakdown::from_parts(0.6, 0.5, &cfg);
    assert!((b.combined - 0.57).abs() < 1e-12);
    assert!(ExpMatchConfig::new(1.5f64).is_err());
}

#[test]
fn fact_cls_hand_cases() {
    use Label::*;
    let o = |g, p| LabelOutcome::new(g, p);
    let cases: Vec<(Vec<LabelOutcome>, f64)> = vec![
        (vec![o(NonFactual, PredictedLabel::NonFactual), o(Factual, PredictedLabel::Factual)], 1.0),
        (vec![o(NonFactual, PredictedLabel::Factual), o(Factual, PredictedLabel::NonFactual)], 0.0),
        (
            vec![
                o(NonFactual, PredictedLabel::Unparseable),
                o(NonFactual, PredictedLabel::NonFactual),
                o(Factual, PredictedLabel::NonFactual),
            ],
            0.5,
        ),
        (vec![o(Factual, PredictedLabel::Factual), o(NonFactual, PredictedLabel::Factual)], 0.0),
        // tp 2, fp 1, fn 0 -> 4/5
        (
            vec![
                o(NonFactual, PredictedLabel::NonFactual),
                o(NonFactual, PredictedLabel::NonFactual),
                o(Factual, PredictedLabel::NonFactual),
                o(Factual, PredictedLabel::Factual),
            ],
            0.8,
        ),
    ];
    for (outcomes, want) in cases {
        assert!((fact_cls::<f64>(&outcomes).unwrap() - want).abs() < 1e-12);
    }
    assert!(fact_cls::<f64>(&[]).is_err());
}

#[test]
fn label_extraction() {
    assert_eq!(extract_label("It is non-factual."), PredictedLabel::NonFactual);
    assert_eq!(extract_label("FACTUAL. yes"), PredictedLabel::Factual);
    assert_eq!(extract_label("no idea"), PredictedLabel::Unparseable);
}

fn token_list() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 0..12)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

fn outcome() -> impl Strategy<Value = (Label, PredictedLabel)> {
    (
        prop::sample::select(vec![Label::Factual, Label::NonFactual]),
        prop::sample::select(vec![
            PredictedLabel::Factual,
            PredictedLabel::NonFactual,
            PredictedLabel::Unparseable,
        ]),
    )
}

proptest! {
    #[test]
    fn rouge_and_unigram_match_oracles(a in token_list(), b in token_list()) {
        prop_assert!((rouge_l::<f64>(&a, &b) - rouge_l_oracle(&a, &b)).abs() <= 1e-12);
        prop_assert!((unigram_f1::<f64>(&a, &b) - unigram_f1_oracle(&a, &b)).abs() <= 1e-12);
        prop_assert!(rouge_l::<f64>(&a, &b) <= unigram_f1::<f64>(&a, &b) + 1e-12);
    }

    #[test]
    fn scores_symmetric_and_bounded(a in token_list(), b in token_list()) {
        let r = rouge_l::<f64>(&a, &b);
        prop_assert_eq!(r, rouge_l::<f64>(&b, &a));
        prop_assert!((0.0..=1.0).contains(&r));
        if !a.is_empty() {
            prop_assert_eq!(rouge_l::<f64>(&a, &a), 1.0);
        }
    }

    #[test]
    fn fact_cls_matches_confusion_oracle(outcomes in prop::collection::vec(outcome(), 1..40)) {
        let typed: Vec<LabelOutcome> = outcomes.iter().map(|&(g, p)| LabelOutcome::new(g, p)).collect();
        prop_assert_eq!(fact_cls::<f64>(&typed).unwrap(), fact_cls_oracle(&outcomes));
    }

    #[test]
    fn f32_tracks_f64(a in token_list(), b in token_list()) {
        let d = rouge_l::<f64>(&a, &b) - rouge_l::<f32>(&a, &b) as f64;
        prop_assert!(d.abs() < 1e-6);
    }

    #[test]
    fn unparsed_is_always_zero(text in ".{0,80}") {
        let z = exp_match::<f64>(&text, &text, &ExpMatchConfig::default(), false);
        prop_assert_eq!(z.combined, 0.0);
    }

    #[test]
    fn tokenize_is_lowercase_and_trimmed(text in "[A-Za-z .,!-]{0,40}") {
        for t in tokenize(&text) {
            prop_assert!(!t.is_empty());
            prop_assert_eq!(t.clone(), t.to_lowercase());
            prop_assert!(t.chars().next().unwrap().is_alphanumeric());
        }
    }
}
