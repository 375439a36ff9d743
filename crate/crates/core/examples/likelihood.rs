//! Log-likelihood of a fixed tree under F81+I, with the per-site values.
//!
//!     cargo run --example likelihood -- --p-inv 0.1

use clap::Parser;

use relate::msa::CharacterMatrix;
use relate::phylik::{parse_newick, Engine};
use relate::submodel::{build_model, ModelOptions};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value = "((A:0.1,B:0.2):0.05,C:0.3,(D:0.1,E:0.15):0.2);")]
    tree: String,
    #[arg(long, default_value_t = 0.0)]
    p_inv: f64,
}

const MATRIX: &str = "\
5 12
A PPKTKRMNSSWH
B PPKTKRMNSTWH
C PKKTWRMNSTLH
D PKTTKRMNHSLJ
E PKTTK-MNHSLJ
";

fn main() -> relate::Result<()> {
    let a = Args::parse();
    let m = CharacterMatrix::from_phylip(MATRIX)?;
    let model = build_model(&m, &ModelOptions { p_inv: a.p_inv, ..ModelOptions::default() })?;
    let mut engine = Engine::new(parse_newick(&a.tree)?, model, &m)?;
    let res = engine.result()?;
    res.write_tsv(std::io::stdout().lock()).map_err(|source| relate::Error::Io { path: "<stdout>".into(), source })?;
    println!("total\t{}", res.total_log_likelihood);
    Ok(())
}
