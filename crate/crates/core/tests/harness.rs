mod common;

use std::collections::BTreeMap;

use oqlkit::corpus::{Instance, Split};
use oqlkit::executor::ExecutionStatus;
use oqlkit::harness::{
    build_prompt, build_refine_prompt, run_eval, select_shots, RefineMode,
    RefineOptions, RefinePolicy, RefineShot, Refiner, ShotStrategy,
};
use oqlkit::metrics::bleu;

fn castle_shots() -> Vec<Instance> {
    let rows = [
        ("All historic castles in Germany.", "[out:xml][timeout:500];area[\"name\"=\"Deutschland\"][\"admin_level\"]->.a;\n(node[\"historic\"=\"castle\"](area.a);way[\"historic\"=\"castle\"](area.a);\nrelation[\"historic\"=\"castle\"](area.a););"),
        ("Find every castle in Luxemburg,Neatherlands and Belgium.", "[out:json][timeout:120];(({{geocodeArea:\"Belgium\"}}->.be;{{geocodeArea:\"Luxembourg\"}}->.lu;\n{{geocodeArea:\"Nederland\"}}->.nl;)->.benelux;\n(node[\"historic\"=\"castle\"][\"name\"](area.benelux);););out center;"),
        ("Castles in current view.", "[out:json][timeout:25];(node[\"historic\"=\"castle\"]({{bbox}});way[\"historic\"=\"castle\"]({{bbox}});\nrelation[\"historic\"=\"castle\"]({{bbox}}););out;>;out skel qt;"),
        ("Castles in current view.", "[out:json][timeout:25];(node[\"historic\"=\"castle\"]({{bbox}});\nway[\"historic\"=\"castle\"]({{bbox}});relation[\"historic\"=\"castle\"]({{bbox}}););\nout;>;out skel qt;"),
        ("castles in Tuscany.", "[out:json][timeout:250];{{geocodeArea:\"Tuscany\"}}->.searchArea;\n(node[\"historic\"=\"castle\"](area.searchArea);way[\"historic\"=\"castle\"](area.searchArea);\nrelation[\"historic\"=\"castle\"](area.searchArea););out;>;out skel qt;"),
    ];
    rows.iter().enumerate().map(|(i, (nl, q))| Instance::new(format!("s{i}"), *nl, *q, Split::Train)).collect()
}

#[test]
fn generation_prompt_matches_golden() {
    let shots = castle_shots();
    let refs: Vec<&Instance> = shots.iter().collect();
    let golden = std::fs::read_to_string(common::data("prompt_generation.txt")).unwrap();
    assert_eq!(build_prompt(&refs, "castle in Deutschland"), golden);
}

#[test]
fn refine_prompt_matches_golden() {
    let shots = vec![
        RefineShot {
            nl: "atms in Germany".into(),
            hypothesis: "[out:json][timeout:25];area[\"name\"=\"Germany\"]->.a;(node[\"amenity\"=\"atm\"](area.a);\nway[\"amenity\"=\"atm\"](area.a);relation[\"amenity\"=\"atm\"](area.a););\nout;>;out skel qt;".into(),
            query: "[out:json][timeout:25];{{geocodeArea:\"Deutschland\"}}->.searchArea;\n(node[\"amenity\"=\"atm\"](area.searchArea);way[\"amenity\"=\"atm\"](area.searchArea);\nrelation[\"amenity\"=\"atm\"](area.searchArea););out center;".into(),
        },
        RefineShot {
            nl: "ATMs and banks with ATMs in Berlin.".into(),
            hypothesis: "[out:json][timeout:25];{{geocodeArea:\"Berlin\"}}->.searchArea;\n(node[\"amenity\"=\"atm\"](area.searchArea);node[\"amenity\"=\"bank\"][\"atm=yes\"](area.searchArea););\nout;out;>;out skel qt;".into(),
            query: "[out:json][timeout:25];\narea[\"name\"=\"Berlin\"]->.a;(node[\"amenity\"=\"bank\"][\"atm\"=\"yes\"](area.a);\nnode[\"amenity\"=\"atm\"](area.a);way[\"amenity\"=\"bank\"][\"atm\"=\"yes\"](area.a);>;\nway[\"amenity\"=\"atm\"](area.a);>;);out;".into(),
        },
    ];
    let hyp = "[out:json][timeout:25]; {{geocodeArea:\"Bürggen\"}}->.searchArea;\n{{geocodeArea:\"Kreis Viersen\"}}->.searchArea2;\n(node[\"amenity\"=\"bank\"](area.searchArea)(area.searchArea2);\nnode[\"amenity\"=\"atm\"](area.searchArea)(area.searchArea2);\nway[\"amenity\"=\"bank\"](area.searchArea)(area.searchArea2);\nrelation[\"amenity\"=\"bank\"](area.searchArea)(area.searchArea2); ); out; >; out skel qt;";
    let golden = std::fs::read_to_string(common::data("prompt_refine.txt")).unwrap();
    let prompt = build_refine_prompt("Banks or ATMS in Bürggen of Kreis Viersen.", hyp, Some("No Results found."), &shots);
    assert_eq!(prompt, golden);
    assert!(prompt.contains("\nNo Results found.\n"));
}

#[test]
fn prompts_are_injective_in_shots() {
    let shots = castle_shots();
    let a: Vec<&Instance> = shots.iter().collect();
    let b: Vec<&Instance> = shots.iter().rev().collect();
    assert_ne!(build_prompt(&a, "x"), build_prompt(&b, "x"));
    assert_ne!(build_prompt(&a[..4], "x"), build_prompt(&a, "x"));
}

#[test]
fn bleu_retrieval_matches_brute_force() {
    let train = castle_shots();
    let input = Instance::new("e", "castles in Germany", "out;", Split::Test);
    let shots = select_shots(&input, &train, ShotStrategy::RetrievalBleu, 3, None).unwrap();
    let mut all: Vec<(f64, &str)> = train.iter().map(|t| (bleu(&t.nl, &input.nl).0, t.id.as_str())).collect();
    all.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(y.1)));
    let mut expected: Vec<&str> = all[..3].iter().map(|x| x.1).collect();
    expected.reverse();
    assert_eq!(shots.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(), expected);
    let sims: Vec<f64> = shots.iter().map(|s| bleu(&s.nl, &input.nl).0).collect();
    assert!(sims.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn identity_system_on_fixture_server() {
    let server = common::server();
    let exec = common::executor(&server);
    let eval = common::corpus("fixture_eval.jsonl");
    let preds: BTreeMap<String, String> =
        eval.instances().iter().map(|i| (i.id.clone(), i.query.clone())).collect();
    let r = run_eval(eval.instances(), &preds, Some(&exec));
    let a = &r.aggregates;
    assert_eq!((a.oqs, a.em, a.ex, a.ex_soft, a.errors), (100.0, 100.0, Some(100.0), Some(100.0), 0));
}

#[test]
fn corrupted_predictions_on_fixture_server() {
    let server = common::server();
    let exec = common::executor(&server);
    let eval = common::corpus("fixture_eval.jsonl");
    let preds = common::predictions("fixture_predictions_corrupted.jsonl");
    let r = run_eval(eval.instances(), &preds, Some(&exec));
    let a = &r.aggregates;
    // e1 and e3 match, e2 shares 1 of 4 elements, e4 is empty, e5 and the missing e6 are syntax errors.
    assert_eq!(a.errors, 2);
    let close = |x: Option<f64>, y: f64| (x.unwrap() - y).abs() < 1e-9;
    assert!(close(a.ex, 100.0 * 2.0 / 6.0), "{:?}", a.ex);
    assert!(close(a.ex_soft, 100.0 * 2.25 / 6.0), "{:?}", a.ex_soft);
    assert_eq!(a.missing_predictions, 1);
    assert!(close(Some(a.em), 100.0 / 6.0));
    let row = |id: &str| r.rows.iter().find(|x| x.id == id).unwrap();
    assert_eq!(row("e2").ex_soft, Some(0.25));
    assert_eq!(row("e5").status, Some(ExecutionStatus::SyntaxError));
    let mean = r.rows.iter().map(|x| x.oqs).sum::<f64>() / 6.0 * 100.0;
    assert!((mean - a.oqs).abs() < 1e-9);
}

#[test]
fn errors_only_refinement_with_feedback() {
    let server = common::server();
    let exec = common::executor(&server);
    let eval = common::corpus("refine_eval.jsonl");
    let baseline = common::predictions("refine_baseline.jsonl");
    let before = run_eval(eval.instances(), &baseline, Some(&exec)).aggregates.errors;
    assert_eq!(before, 3);
    let client = common::scripted_client();
    let hyps = BTreeMap::new();
    let refiner = Refiner {
        policy: RefinePolicy { mode: RefineMode::ErrorsOnly, with_feedback: true },
        client: &client,
        executor: Some(&exec),
        shots: None,
        shot_hypotheses: &hyps,
        options: RefineOptions::default(),
    };
    let out = refiner.run(eval.instances(), &baseline).unwrap();
    for id in ["r4", "r5"] {
        assert_eq!(out.predictions[id], baseline[id]);
    }
    assert_eq!(out.refined_count(), 2);
    assert_eq!(out.failures().map(|r| r.id.as_str()).collect::<Vec<_>>(), vec!["r3"]);
    assert_eq!(out.predictions["r3"], baseline["r3"]);
    assert!(exec.execute(&out.predictions["r1"]).is_ok());
    let after = run_eval(eval.instances(), &out.predictions, Some(&exec)).aggregates.errors;
    assert!(after <= 1, "{after}");
}

#[test]
fn refinement_without_feedback_cannot_use_the_error() {
    let server = common::server();
    let exec = common::executor(&server);
    let eval = common::corpus("refine_eval.jsonl");
    let baseline = common::predictions("refine_baseline.jsonl");
    let client = common::scripted_client();
    let hyps = BTreeMap::new();
    let refiner = Refiner {
        policy: RefinePolicy { mode: RefineMode::ErrorsOnly, with_feedback: false },
        client: &client,
        executor: Some(&exec),
        shots: None,
        shot_hypotheses: &hyps,
        options: RefineOptions::default(),
    };
    let out = refiner.run(eval.instances(), &baseline).unwrap();
    assert_eq!(out.predictions, baseline);
    let off = Refiner { policy: RefinePolicy::default(), ..refiner };
    assert_eq!(off.run(eval.instances(), &baseline).unwrap().predictions, baseline);
}
