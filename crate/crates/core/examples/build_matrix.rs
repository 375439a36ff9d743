//! Wordlist to character matrix: filter, pick one form per slot, encode in
//! sound classes, align each concept and concatenate.
//!
//!     cargo run --example build_matrix -- data/ie_small.tsv

use std::fs::File;

use relate::lexdata::{filter_forms, parse_wordlist, select_core_form, FilterPolicy, IngestConfig};
use relate::msa::{build_character_matrix, AlignScoring};
use relate::soundclass::ClassAlphabet;

fn main() -> relate::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/ie_small.tsv").into());
    let file = File::open(&path).map_err(|source| relate::Error::Io { path: path.clone().into(), source })?;
    let wl = parse_wordlist(file, &IngestConfig::default())?;
    let alphabet = ClassAlphabet::dolgopolsky();
    let wl = select_core_form(&filter_forms(&wl, &FilterPolicy::default(), &alphabet), 42);
    let m = build_character_matrix(&wl, &alphabet, &AlignScoring::default())?;
    eprintln!("{} languages, {} concepts -> {} sites", wl.n_languages(), wl.n_concepts(), m.n_sites());
    print!("{}", m.to_phylip());
    Ok(())
}
