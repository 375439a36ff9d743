//! Generalized quartet distance between a predicted and a gold tree. The
//! gold tree may be unresolved; its star quartets are not counted.
//!
//!     cargo run --example gqd -- "((a,b),(c,d),e);" "((a,c),b,d,e);"

use relate::phylik::parse_newick;
use relate::treecmp::gqd;

fn main() -> relate::Result<()> {
    let mut args = std::env::args().skip(1);
    let pred = args.next().unwrap_or_else(|| "(((a,b),c),(d,(e,f)));".into());
    let gold = args.next().unwrap_or_else(|| "((a,b,c),(d,e,f));".into());
    let score = gqd(&parse_newick(&pred)?, &parse_newick(&gold)?)?;
    println!("resolved in gold {}  differing {}  gqd {}", score.resolved_gold, score.differing, score.gqd);
    Ok(())
}
