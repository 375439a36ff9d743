//! Multilateral permutation test: cluster languages by average linkage and
//! test every merge against shuffled concept labels.
//!
//!     cargo run --release --example permtest -- --metric turchin

use std::fs::File;

use clap::{Parser, ValueEnum};

use relate::lexdata::{filter_forms, parse_wordlist, select_core_form, FilterPolicy, IngestConfig};
use relate::permtest::{run_permtest, WordMetric};
use relate::soundclass::{ClassAlphabet, EncodedWordlist};

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    P1dolgo,
    Turchin,
}

#[derive(Parser)]
struct Args {
    #[arg(default_value = concat!(env!("CARGO_MANIFEST_DIR"), "/data/ie_small.tsv"))]
    wordlist: String,
    #[arg(long, value_enum, default_value = "p1dolgo")]
    metric: Metric,
    #[arg(long, default_value_t = 1000)]
    n_perm: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn main() -> relate::Result<()> {
    let a = Args::parse();
    let file = File::open(&a.wordlist).map_err(|source| relate::Error::Io { path: a.wordlist.clone().into(), source })?;
    let alphabet = ClassAlphabet::dolgopolsky();
    let wl = parse_wordlist(file, &IngestConfig::default())?;
    let wl = select_core_form(&filter_forms(&wl, &FilterPolicy::default(), &alphabet), a.seed);
    let enc = EncodedWordlist::encode(&wl, &alphabet)?;
    let metric = match a.metric {
        Metric::P1dolgo => WordMetric::P1Dolgo,
        Metric::Turchin => WordMetric::Turchin,
    };
    let tree = run_permtest(&metric, &enc, a.n_perm, a.seed)?;
    for m in &tree.merges {
        println!(
            "{:<40} s_hat {:7.4}  p {:.4}",
            format!("{} | {}", m.left.join(","), m.right.join(",")),
            m.s_hat,
            m.p_value
        );
    }
    println!("{:?}", tree.verdict);
    Ok(())
}
