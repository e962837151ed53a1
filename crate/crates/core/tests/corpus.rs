mod common;

use std::collections::BTreeSet;

use oqlkit::corpus::{stats, validate_splits, Corpus, DuplicateMode, Split};
use oqlkit::difficulty::{partition, DifficultyCriterion, TrainContext};
use oqlkit::embedding::HashingEmbedder;

#[test]
fn synthetic_test_split_partitions() {
    let corpus = common::synthetic_corpus(40, 1000);
    let train: Vec<_> = corpus.split(Split::Train).into_iter().cloned().collect();
    let test: Vec<_> = corpus.split(Split::Test).into_iter().cloned().collect();
    assert_eq!(test.len(), 1000);
    let emb = HashingEmbedder::default();
    let ctx = TrainContext::new(&train, Some(&emb)).unwrap();
    for c in DifficultyCriterion::ALL {
        let p = partition(&test, c, &ctx).unwrap();
        assert_eq!((p.easy.len(), p.medium.len(), p.hard.len()), (334, 333, 333), "{c}");
        let ids: BTreeSet<&str> = p.buckets().iter().flat_map(|(_, xs)| xs.iter().map(|x| x.id.as_str())).collect();
        assert_eq!(ids.len(), 1000);
        assert_eq!(p, partition(&test, c, &ctx).unwrap());
    }
}

#[test]
fn verbatim_train_queries_are_easiest() {
    let corpus = common::synthetic_corpus(30, 9);
    let train: Vec<_> = corpus.split(Split::Train).into_iter().cloned().collect();
    let mut test: Vec<_> = corpus.split(Split::Test).into_iter().cloned().collect();
    test[4].query = train[7].query.clone();
    let ctx = TrainContext::new(&train, None).unwrap();
    let p = partition(&test, DifficultyCriterion::MaxQueryOqs, &ctx).unwrap();
    assert_eq!(p.easy[0].id, test[4].id);
    assert_eq!(p.easy[0].score, 1.0);
}

#[test]
fn fixture_corpus_stats() {
    let corpus = common::corpus("fixture_eval.jsonl");
    let s = stats(&corpus);
    assert_eq!(s.instances, 6);
    assert_eq!(s.split_sizes["test"], 6);
    assert!(s.parse_failures.is_empty());
    let chars: usize = corpus.instances().iter().map(|i| i.query.chars().count()).sum();
    assert!((s.mean_query_length - chars as f64 / 6.0).abs() < 1e-12);
    assert_eq!(s.unique_keys, 7);
}

#[test]
fn save_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    let corpus = common::synthetic_corpus(5, 5);
    corpus.save(&path).unwrap();
    assert_eq!(Corpus::load(&path).unwrap(), corpus);
}

#[test]
fn synthetic_splits_have_no_exact_duplicates() {
    let corpus = common::synthetic_corpus(50, 50);
    for v in validate_splits(&corpus, DuplicateMode::Exact) {
        let (a, b) = (corpus.get(&v.train_id).unwrap(), corpus.get(&v.eval_id).unwrap());
        assert!(a.query.trim() == b.query.trim() || a.nl.trim() == b.nl.trim());
    }
}
