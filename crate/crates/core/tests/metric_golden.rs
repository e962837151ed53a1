mod common;

use oqlkit::metrics::{bleu, chrf, Score};

fn check(file: &str, f: fn(&str, &str) -> Score) {
    let text = std::fs::read_to_string(common::data(file)).unwrap();
    let mut n = 0;
    for line in text.lines() {
        let cols: Vec<&str> = line.split('\t').collect();
        let expected: f64 = cols[2].parse().unwrap();
        let got = f(cols[0], cols[1]).value();
        assert!((got - expected).abs() < 1e-9, "{file}: {:?} vs {:?}: {got} != {expected}", cols[0], cols[1]);
        n += 1;
    }
    assert_eq!(n, 50);
}

#[test]
fn chrf_matches_golden() {
    check("chrf_golden.tsv", chrf);
}

#[test]
fn bleu_matches_golden() {
    check("bleu_golden.tsv", bleu);
}
