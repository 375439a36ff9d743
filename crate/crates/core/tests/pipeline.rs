//! Wordlist to verdict on the bundled samples: eight Indo-European languages
//! and eight from unrelated families over the same 22 concepts.

use std::fs::File;

use relate::lexdata::{filter_forms, parse_wordlist, select_core_form, FilterPolicy, IngestConfig, Wordlist};
use relate::lrt::{run_lrt, Decision, LrtConfig};
use relate::msa::{build_character_matrix, AlignScoring, CharacterMatrix};
use relate::permtest::{run_permtest, Verdict, WordMetric};
use relate::soundclass::{ClassAlphabet, EncodedWordlist};

fn load(name: &str) -> Wordlist {
    let path = format!("{}/data/{name}", env!("CARGO_MANIFEST_DIR"));
    let wl = parse_wordlist(File::open(path).unwrap(), &IngestConfig::default()).unwrap();
    select_core_form(&filter_forms(&wl, &FilterPolicy::default(), &ClassAlphabet::dolgopolsky()), 42)
}

fn matrix(wl: &Wordlist) -> CharacterMatrix {
    build_character_matrix(wl, &ClassAlphabet::dolgopolsky(), &AlignScoring::default()).unwrap()
}

#[test]
fn matrix_shape() {
    let m = matrix(&load("ie_small.tsv"));
    assert_eq!(m.n_taxa(), 8);
    assert_eq!(m.taxa[0], "English");
    assert!(m.n_sites() > 22);
}

#[test]
fn lrt_separates_the_samples() {
    let cfg = LrtConfig { k: 5, ..LrtConfig::default() };
    let ie = run_lrt(&matrix(&load("ie_small.tsv")), &cfg).unwrap();
    assert_eq!(ie.decision, Decision::Related, "{} {}", ie.mean_observed, ie.p);
    let un = run_lrt(&matrix(&load("unrelated_small.tsv")), &cfg).unwrap();
    assert_eq!(un.decision, Decision::NotSupported, "{} {}", un.mean_observed, un.p);
    assert!(un.mean_observed < 0.0);
}

#[test]
fn permtest_separates_the_samples() {
    let alphabet = ClassAlphabet::dolgopolsky();
    let ie = EncodedWordlist::encode(&load("ie_small.tsv"), &alphabet).unwrap();
    let un = EncodedWordlist::encode(&load("unrelated_small.tsv"), &alphabet).unwrap();
    let t = run_permtest(&WordMetric::Turchin, &ie, 999, 1).unwrap();
    assert_eq!(t.verdict, Verdict::Related);
    assert!(t.root().s_hat > 0.2);
    let t = run_permtest(&WordMetric::Turchin, &un, 999, 1).unwrap();
    assert_eq!(t.verdict, Verdict::NotSupported);
    assert!(t.root().s_hat < 0.1);
}
