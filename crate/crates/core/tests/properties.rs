mod common;

use common::gen::*;
use oqlkit::analysis::{extract_comments, extract_kv};
use oqlkit::corpus::{Corpus, Instance, Split};
use oqlkit::difficulty::{partition_scored, DifficultyCriterion, ScoredInstance};
use oqlkit::lexer::tokenize;
use oqlkit::metrics::{bleu, chrf, ex, ex_soft, kvs, matching_subtrees, oqs, trees};
use oqlkit::parser::parse;
use oqlkit::tree::{count_syntactic_units, to_syntax_tree};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn lexer_is_lossless(text in "\\PC{0,80}") {
        if let Ok(tokens) = tokenize(&text) {
            let joined: String = tokens.iter().map(|t| t.lexeme.as_str()).collect();
            prop_assert_eq!(joined, text);
        }
    }

    #[test]
    fn parser_never_panics(text in "[\\[\\](){};:=~!.,\"a-z0-9 ->\n]{0,60}") {
        let _ = parse(&text);
    }

    #[test]
    fn generated_queries_round_trip(q in query_text()) {
        let ast = parse(&q).map_err(|e| TestCaseError::fail(format!("{q}: {e}")))?;
        let printed = ast.to_query_string();
        prop_assert_eq!(parse(&printed).unwrap(), ast);
        let tokens = tokenize(&q).unwrap();
        prop_assert_eq!(tokens.iter().map(|t| t.lexeme.as_str()).collect::<String>(), q);
    }

    #[test]
    fn templates_ignore_names_and_numbers(sk in skeleton(), a in names(), b in names()) {
        let qa = parse(&render(&sk, &a)).unwrap();
        let qb = parse(&render(&sk, &b)).unwrap();
        prop_assert_eq!(qa.to_template_string(), qb.to_template_string());
        prop_assert_eq!(count_syntactic_units(&qa), count_syntactic_units(&qb));
    }

    #[test]
    fn kvs_agrees_with_oracle(a in kv_set(), b in kv_set()) {
        let s = kvs(&a, &b).value();
        prop_assert_eq!(s, kvs_oracle(&a, &b));
        prop_assert_eq!(s, kvs(&b, &a).value());
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(kvs(&a, &a).value(), 1.0);
    }

    #[test]
    fn trees_agree_with_oracle(a in tree(), b in tree()) {
        prop_assert_eq!(matching_subtrees(&a, &b), matching_oracle(&a, &b));
        let s = trees(&a, &b).value();
        prop_assert_eq!(s, trees(&b, &a).value());
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(trees(&a, &a).value(), 1.0);
    }

    #[test]
    fn string_metrics_are_bounded(a in "\\PC{0,40}", b in "\\PC{0,40}") {
        for s in [chrf(&a, &b).value(), bleu(&a, &b).value()] {
            prop_assert!((0.0..=1.0).contains(&s), "{}", s);
        }
        if !a.is_empty() {
            prop_assert_eq!(chrf(&a, &a).value(), 1.0);
        }
        if a.split_whitespace().next().is_some() {
            prop_assert_eq!(bleu(&a, &a).value(), 1.0);
        }
    }

    #[test]
    fn oqs_is_bounded(a in query_text(), b in query_text()) {
        let s = oqs(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&s.oqs.value()));
        prop_assert!((s.oqs.value() - (s.chrf.value() + s.kvs.value() + s.trees.value()) / 3.0).abs() < 1e-12);
        prop_assert_eq!(oqs(&a, &a).unwrap().oqs.value(), 1.0);
        let (pa, pb) = (parse(&a).unwrap(), parse(&b).unwrap());
        prop_assert_eq!(s.kvs, kvs(&extract_kv(&pa), &extract_kv(&pb)));
        prop_assert_eq!(s.trees, trees(&to_syntax_tree(&pa), &to_syntax_tree(&pb)));
    }

    #[test]
    fn execution_metrics(a in element_set(), b in element_set()) {
        let s = ex_soft(&a, &b).value();
        prop_assert_eq!(s, ex_soft(&b, &a).value());
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(ex(&a, &b), s == 1.0);
    }

    #[test]
    fn partitions_cover(scores in proptest::collection::vec(0u8..5, 0..60), c in 0usize..5) {
        let criterion = DifficultyCriterion::ALL[c];
        let scored: Vec<ScoredInstance> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| ScoredInstance { id: format!("{i:03}"), score: *s as f64 })
            .collect();
        let p = partition_scored(criterion, scored.clone());
        let again = partition_scored(criterion, scored.iter().rev().cloned().collect());
        prop_assert_eq!(&p, &again);
        let mut ids: Vec<&str> = p.buckets().iter().flat_map(|(_, xs)| xs.iter().map(|x| x.id.as_str())).collect();
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), scores.len());
        let sizes = [p.easy.len(), p.medium.len(), p.hard.len()];
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn comment_instances_have_no_comments(q in query_text(), words in proptest::collection::vec("[a-z]{1,6}", 1..4)) {
        let text = format!("// {}\n{q}/* {} */", words.join(" "), words[0]);
        let corpus = Corpus::new(vec![Instance::new("1", "x", text, Split::Train)]).unwrap();
        let extra = oqlkit::corpus::comment_instances(&corpus);
        prop_assert_eq!(extra.len(), 1);
        prop_assert!(extract_comments(&extra[0].query).is_empty());
        prop_assert_eq!(parse(&extra[0].query).unwrap(), parse(&q).unwrap());
    }
}
