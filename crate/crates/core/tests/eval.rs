mod common;

use std::collections::BTreeMap;

use common::{metric_oracle, published};
use proptest::prelude::*;
use rca_core::agent::{RootCausePrediction, Verdict};
use rca_core::eval::{
    corpus_bleu, label_prediction, meteor_lite, render_metric_table, rouge_l, semantic_similarity, sentence_bleu, Correctness,
    EvalError, EvaluationReport, LabelSet, MetricConfig, QualitativeLabel, Smoothing, Subtype, VALID_LABELS,
};
use rca_core::retrieval::{Embedder, HashEmbedder};

fn cfg() -> MetricConfig {
    MetricConfig::default()
}

fn pred(id: &str, model: &str, text: &str) -> RootCausePrediction {
    RootCausePrediction {
        incident_id: id.into(),
        predicted_root_cause: text.into(),
        verdict: Verdict::Specific,
        model_tag: model.into(),
        reasoning: None,
    }
}

#[test]
fn bleu_short_prediction_hand_value() {
    // unigram 3/3, bigram 2/2, trigram 1/1, no 4-grams; BP = exp(1 - 4/3)
    let expected = (1.0f64 - 4.0 / 3.0).exp();
    assert!((sentence_bleu("the cat sat", "the cat sat down", &cfg()) - expected).abs() < 1e-6);
}

#[test]
fn corpus_bleu_pools_counts() {
    let preds = ["the cat sat", "a cat"];
    let refs = ["the cat sat down", "a dog barked"];
    // pooled: uni 4/5, bi 2/3, tri 1/1; lengths 5 vs 7
    let expected = (1.0f64 - 7.0 / 5.0).exp() * (0.8f64 * (2.0 / 3.0) * 1.0).powf(1.0 / 3.0);
    let got = corpus_bleu(&preds, &refs, &cfg()).unwrap();
    assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
    let mean_sentence = (sentence_bleu(preds[0], refs[0], &cfg()) + sentence_bleu(preds[1], refs[1], &cfg())) / 2.0;
    assert!((got - mean_sentence).abs() > 1e-3);
    assert_eq!(corpus_bleu(&["x y", "z"], &["x y", "z"], &cfg()).unwrap(), 1.0);
    assert!(matches!(corpus_bleu(&["a", "b"], &["a"], &cfg()), Err(EvalError::LengthMismatch { predictions: 2, references: 1 })));
}

#[test]
fn rouge_hand_value() {
    let f = rouge_l("a c d", "a b c d", &cfg());
    let (p, r) = (1.0, 0.75);
    assert!((f - 2.0 * p * r / (p + r)).abs() < 1e-6);
    assert!((f - 0.857).abs() < 1e-3);
    assert_eq!(rouge_l("a b", "c d", &cfg()), 0.0);
    assert_eq!(rouge_l("a b", "a b", &cfg()), 1.0);
}

#[test]
fn meteor_hand_values() {
    let c = cfg();
    let m = 4.0f64;
    let ident = meteor_lite("blob storage quota exceeded", "blob storage quota exceeded", &c);
    assert!((ident - (1.0 - 0.5 * (1.0 / m).powi(3))).abs() < 1e-9);

    // one shared word: P = 1/3, R = 1/4, one chunk
    let (p, r) = (1.0 / 3.0, 0.25);
    let fmean = p * r / (0.9 * p + 0.1 * r);
    let expected = fmean * (1.0 - 0.5);
    assert!((meteor_lite("x cat y", "cat a b c", &c) - expected).abs() < 1e-6);
    assert_eq!(meteor_lite("a b", "c d", &c), 0.0);

    // reversed order: 3 chunks for 3 matches
    let rev = meteor_lite("c b a", "a b c", &c);
    assert!((rev - (1.0 - 0.5)).abs() < 1e-9);
}

#[test]
fn semantic_identity_symmetry_orthogonality() {
    let e = HashEmbedder::new(64, 11);
    assert!((semantic_similarity("disk latency", "disk latency", &e).unwrap() - 1.0).abs() < 1e-12);
    let ab = semantic_similarity("disk latency high", "quota disk", &e).unwrap();
    let ba = semantic_similarity("quota disk", "disk latency high", &e).unwrap();
    assert_eq!(ab, ba);
    // pick a word that lands in a different bucket from "alpha"
    let a = e.embed("alpha").unwrap();
    let other = (0..200)
        .map(|i| format!("w{i}"))
        .find(|w| a.iter().zip(e.embed(w).unwrap()).all(|(x, y)| x * y == 0.0))
        .unwrap();
    assert_eq!(semantic_similarity("alpha", &other, &e).unwrap(), 0.0);
}

#[test]
fn label_validation_and_disagreement() {
    let ok = QualitativeLabel::new(Correctness::Correct, Subtype::Precise).unwrap();
    assert!(matches!(QualitativeLabel::new(Correctness::Incorrect, Subtype::Precise), Err(EvalError::Label(_))));
    let p = pred("INC-1", "rb", "quota");
    let mut set = LabelSet::default();
    set.add(label_prediction(&p, ok, "alice"));
    set.add(label_prediction(&p, QualitativeLabel::new(Correctness::Correct, Subtype::Imprecise).unwrap(), "bob"));
    set.add(label_prediction(&pred("INC-2", "rb", "x"), ok, "alice"));
    set.add(label_prediction(&pred("INC-2", "rb", "x"), ok, "bob"));
    assert_eq!(set.annotations.len(), 4);
    let d = set.disagreements();
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].incident_id, "INC-1");
    assert_eq!(d[0].labels.len(), 2);
    // double annotation still counts each item once
    assert_eq!(set.tallies()[0].total(), 2);
    let back = LabelSet::from_jsonl(&set.to_jsonl()).unwrap();
    assert_eq!(back, set);
    assert!(LabelSet::from_jsonl(
        r#"{"incident_id":"a","model":"m","label":{"correctness":"incorrect","subtype":"precise"},"annotator":"x","annotated_at":"2024-01-01T00:00:00Z"}"#
    )
    .is_err());
}

#[test]
fn published_row_renders() {
    let table = render_metric_table(&[published::rb_k10_row()]);
    let line = table.lines().nth(1).unwrap();
    let cells: Vec<&str> = line.split_whitespace().collect();
    assert_eq!(&cells[cells.len() - 5..], &["5.97", "5.74", "20.30", "24.11", "0.866"]);
}

fn labelled_set() -> LabelSet {
    let mut set = LabelSet::default();
    for (model, counts) in published::label_counts() {
        let mut item = 0;
        for (i, &(c, s)) in VALID_LABELS.iter().enumerate() {
            for _ in 0..counts[i] {
                item += 1;
                let p = pred(&format!("T{item:03}"), model, "x");
                set.add(label_prediction(&p, QualitativeLabel::new(c, s).unwrap(), "a1"));
            }
        }
    }
    set
}

#[test]
fn label_tallies_sum_to_sample() {
    let tallies = labelled_set().tallies();
    assert_eq!(tallies.len(), 3);
    for t in &tallies {
        assert_eq!(t.total(), 97);
    }
    let rb = tallies.iter().find(|t| t.model == "RB (k=10)").unwrap();
    assert_eq!(rb.group_total(Correctness::Correct), 38);
    assert_eq!(rb.group_total(Correctness::Incorrect), 59);
    let react = tallies.iter().find(|t| t.model == "ReAct-BM25").unwrap();
    assert_eq!(react.count(Correctness::Incorrect, Subtype::InsufficientEvidence), 39);
    assert_eq!(react.group_total(Correctness::Correct), 34);
}

#[test]
fn report_rows_aggregate_items() {
    let refs: BTreeMap<String, String> = [
        ("I1", "storage quota exceeded on account"),
        ("I2", "certificate rotation job failed"),
        ("I3", "resolver node restart loop"),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect();
    let preds = vec![
        pred("I1", "rb", "storage quota exceeded"),
        pred("I2", "rb", "certificate expired"),
        pred("I3", "rb", ""),
        pred("I1", "react", "quota exceeded on storage account"),
        pred("I2", "react", "certificate rotation job failed"),
    ];
    let e = HashEmbedder::new(128, 3);
    let report = EvaluationReport::build(&preds, &refs, None, &cfg(), &e).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert!(report.label_tallies.is_empty());
    for row in &report.rows {
        let items: Vec<_> = report.items.iter().filter(|i| i.model == row.model).collect();
        assert_eq!(items.len(), row.n);
        let m = |f: fn(&rca_core::eval::ItemScores) -> f64| items.iter().map(|i| f(i)).sum::<f64>() / items.len() as f64;
        assert!((row.s_bleu - m(|i| i.s_bleu)).abs() < 1e-12);
        assert!((row.rouge_l - m(|i| i.rouge_l)).abs() < 1e-12);
        assert!((row.meteor - m(|i| i.meteor)).abs() < 1e-12);
        assert!((row.semantic - m(|i| i.semantic)).abs() < 1e-12);
        let ps: Vec<&str> = preds.iter().filter(|p| p.model_tag == row.model).map(|p| p.predicted_root_cause.as_str()).collect();
        let rs: Vec<&str> =
            preds.iter().filter(|p| p.model_tag == row.model).map(|p| refs[&p.incident_id].as_str()).collect();
        assert_eq!(row.c_bleu, corpus_bleu(&ps, &rs, &cfg()).unwrap());
    }
    let empty = report.items.iter().find(|i| i.incident_id == "I3").unwrap();
    assert_eq!(empty.s_bleu, 0.0);
    let text = report.render();
    assert!(!text.contains("Incorrect"));
    let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 2);

    let labelled = EvaluationReport::build(&preds, &refs, Some(&labelled_set()), &cfg(), &e).unwrap();
    let text = labelled.render();
    assert!(text.contains("Insufficient Evidence"));
    let total = text.lines().find(|l| l.starts_with("Total")).unwrap();
    assert_eq!(total.split_whitespace().skip(1).collect::<Vec<_>>(), vec!["97", "97", "97"]);

    let bad = vec![pred("nope", "rb", "x")];
    assert!(matches!(EvaluationReport::build(&bad, &refs, None, &cfg(), &e), Err(EvalError::Misaligned(_))));
    let dup = vec![pred("I1", "rb", "x"), pred("I1", "rb", "y")];
    assert!(matches!(EvaluationReport::build(&dup, &refs, None, &cfg(), &e), Err(EvalError::Misaligned(_))));
}

fn text_strategy() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        prop_oneof![
            Just("a".to_string()),
            Just("b".to_string()),
            Just("c".to_string()),
            Just("dd".to_string()),
            Just("É".to_string()),
            Just(".".to_string()),
            "[a-z]{1,3}",
        ],
        0..14,
    )
    .prop_map(|v| v.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn metrics_bounded_and_pure(p in text_strategy(), r in text_strategy(), add_one in any::<bool>()) {
        let c = MetricConfig { smoothing: if add_one { Smoothing::AddOne } else { Smoothing::None }, ..cfg() };
        let e = HashEmbedder::new(32, 5);
        for v in [sentence_bleu(&p, &r, &c), rouge_l(&p, &r, &c), meteor_lite(&p, &r, &c)] {
            prop_assert!((0.0..=1.0).contains(&v), "{v}");
        }
        let s = semantic_similarity(&p, &r, &e).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert_eq!(sentence_bleu(&p, &r, &c), sentence_bleu(&p, &r, &c));
        prop_assert_eq!(meteor_lite(&p, &r, &c), meteor_lite(&p, &r, &c));
        prop_assert_eq!(corpus_bleu(&[p.as_str()], &[r.as_str()], &c).unwrap(), sentence_bleu(&p, &r, &c));
    }

    #[test]
    fn bleu_matches_oracle(p in text_strategy(), r in text_strategy(), q in text_strategy(), s in text_strategy()) {
        let got = sentence_bleu(&p, &r, &cfg());
        prop_assert!((got - metric_oracle::bleu(&[(&p, &r)], 4)).abs() < 1e-9);
        let pooled = corpus_bleu(&[p.as_str(), q.as_str()], &[r.as_str(), s.as_str()], &cfg()).unwrap();
        prop_assert!((pooled - metric_oracle::bleu(&[(&p, &r), (&q, &s)], 4)).abs() < 1e-9);
    }

    #[test]
    fn identity_and_disjoint(words in proptest::collection::vec("[a-m]{1,4}", 1..10), other in proptest::collection::vec("[n-z]{1,4}", 1..10)) {
        let t = words.join(" ");
        let d = other.join(" ");
        prop_assert_eq!(sentence_bleu(&t, &t, &cfg()), 1.0);
        prop_assert_eq!(rouge_l(&t, &t, &cfg()), 1.0);
        let m = words.len() as f64;
        prop_assert!((meteor_lite(&t, &t, &cfg()) - (1.0 - 0.5 * (1.0 / m).powi(3))).abs() < 1e-9);
        prop_assert_eq!(sentence_bleu(&t, &d, &cfg()), 0.0);
        prop_assert_eq!(rouge_l(&t, &d, &cfg()), 0.0);
        prop_assert_eq!(meteor_lite(&t, &d, &cfg()), 0.0);
    }
}
