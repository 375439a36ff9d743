//! Likelihood ratio test of p_inv = 0.06 against 0.01 on a wordlist.
//!
//!     cargo run --release --example lrt -- data/unrelated_small.tsv

use std::fs::File;

use clap::Parser;

use relate::lexdata::{filter_forms, parse_wordlist, select_core_form, FilterPolicy, IngestConfig};
use relate::lrt::{run_lrt, LrtConfig};
use relate::msa::{build_character_matrix, AlignScoring};
use relate::soundclass::ClassAlphabet;

#[derive(Parser)]
struct Args {
    #[arg(default_value = concat!(env!("CARGO_MANIFEST_DIR"), "/data/ie_small.tsv"))]
    wordlist: String,
    #[arg(long, default_value_t = 15)]
    k: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn main() -> relate::Result<()> {
    let a = Args::parse();
    let file = File::open(&a.wordlist).map_err(|source| relate::Error::Io { path: a.wordlist.clone().into(), source })?;
    let alphabet = ClassAlphabet::dolgopolsky();
    let wl = parse_wordlist(file, &IngestConfig::default())?;
    let wl = select_core_form(&filter_forms(&wl, &FilterPolicy::default(), &alphabet), a.seed);
    let m = build_character_matrix(&wl, &alphabet, &AlignScoring::default())?;
    let rep = run_lrt(&m, &LrtConfig { k: a.k, seed: a.seed, ..LrtConfig::default() })?;
    for r in &rep.runs {
        println!("run {:2}  delta_obs {:9.4}  delta_null {:9.4}", r.j, r.delta_obs, r.delta_null);
    }
    println!("mean_obs {:.4}  mean_null {:.4}  t {:.3}  p {:.3e}", rep.mean_observed, rep.mean_null, rep.t, rep.p);
    println!("{:?}", rep.decision);
    Ok(())
}
