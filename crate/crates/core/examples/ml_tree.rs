//! Maximum-likelihood tree with estimated p_inv, optionally with a
//! two-category gamma.
//!
//!     cargo run --release --example ml_tree -- --gamma2

use std::fs::File;

use clap::Parser;

use relate::lexdata::{filter_forms, parse_wordlist, select_core_form, FilterPolicy, IngestConfig};
use relate::mlsearch::{ml_tree_estimate, EstimateOptions, SearchConfig};
use relate::msa::{build_character_matrix, AlignScoring};
use relate::phylik::write_newick;
use relate::soundclass::ClassAlphabet;
use relate::submodel::ModelOptions;

#[derive(Parser)]
struct Args {
    #[arg(default_value = concat!(env!("CARGO_MANIFEST_DIR"), "/data/ie_small.tsv"))]
    wordlist: String,
    #[arg(long)]
    gamma2: bool,
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
    let est = EstimateOptions { gamma2: a.gamma2, ..EstimateOptions::default() };
    let fit = ml_tree_estimate(&m, &ModelOptions::default(), &est, &SearchConfig { seed: a.seed, ..SearchConfig::default() })?;
    println!("{}", write_newick(&fit.tree));
    println!("logL {}  p_inv {:.4}  gamma {:?}", fit.log_likelihood, fit.model.p_inv, fit.model.gamma_shape);
    for step in &fit.search_trace {
        println!("  {step:?}");
    }
    Ok(())
}
