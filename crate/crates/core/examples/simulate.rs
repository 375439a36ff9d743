//! Parametric bootstrap replicate: fit a tree, then simulate a matrix of the
//! same shape from it, gaps copied from the original.
//!
//!     cargo run --release --example simulate -- --seed 7

use std::fs::File;

use clap::Parser;

use relate::bootsim::{simulate_matrix, SimConfig};
use relate::lexdata::{filter_forms, parse_wordlist, select_core_form, FilterPolicy, IngestConfig};
use relate::mlsearch::{ml_tree, SearchConfig};
use relate::msa::{build_character_matrix, AlignScoring};
use relate::soundclass::ClassAlphabet;

#[derive(Parser)]
struct Args {
    #[arg(default_value = concat!(env!("CARGO_MANIFEST_DIR"), "/data/ie_small.tsv"))]
    wordlist: String,
    #[arg(long, default_value_t = 0.06)]
    p_inv: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn main() -> relate::Result<()> {
    let a = Args::parse();
    let file = File::open(&a.wordlist).map_err(|source| relate::Error::Io { path: a.wordlist.clone().into(), source })?;
    let alphabet = ClassAlphabet::dolgopolsky();
    let wl = parse_wordlist(file, &IngestConfig::default())?;
    let wl = select_core_form(&filter_forms(&wl, &FilterPolicy::default(), &alphabet), 42);
    let m = build_character_matrix(&wl, &alphabet, &AlignScoring::default())?;
    let fit = ml_tree(&m, a.p_inv, &SearchConfig::default())?;
    let sim = simulate_matrix(&fit, &m, &SimConfig { seed: a.seed, ..SimConfig::default() })?;
    print!("{}", m.to_phylip());
    println!();
    print!("{}", sim.to_phylip());
    Ok(())
}
