//! Quartet topologies and the generalized quartet distance.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phylik::Phylogeny;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuartetTopology {
    /// `ab|cd`
    AbCd,
    /// `ac|bd`
    AcBd,
    /// `ad|bc`
    AdBc,
    Star,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuartetScore {
    /// Quartets resolved in the gold tree.
    pub resolved_gold: u64,
    /// Resolved gold quartets whose predicted topology differs.
    pub differing: u64,
    pub gqd: f64,
    /// Set when the gold tree resolves no quartet and `gqd` is reported as 0.
    pub no_resolved_quartets: bool,
}

/// Topology from pairwise path lengths: the pairing with the strictly
/// smallest sum, or a star when all three sums tie.
fn from_paths(d: &[Vec<u32>], a: usize, b: usize, c: usize, e: usize) -> QuartetTopology {
    let s1 = d[a][b] + d[c][e];
    let s2 = d[a][c] + d[b][e];
    let s3 = d[a][e] + d[b][c];
    if s1 < s2 && s1 < s3 {
        QuartetTopology::AbCd
    } else if s2 < s1 && s2 < s3 {
        QuartetTopology::AcBd
    } else if s3 < s1 && s3 < s2 {
        QuartetTopology::AdBc
    } else {
        QuartetTopology::Star
    }
}

/// Induced topology of four named leaves.
pub fn quartet_topology(tree: &Phylogeny, leaves: [&str; 4]) -> Result<QuartetTopology> {
    let idx: Vec<usize> = leaves
        .iter()
        .map(|l| tree.leaf_index(l).ok_or_else(|| Error::UnknownLeaf(l.to_string())))
        .collect::<Result<_>>()?;
    let distinct: BTreeSet<usize> = idx.iter().copied().collect();
    if distinct.len() != 4 {
        return Err(Error::domain("quartet leaves must be distinct"));
    }
    let d = tree.leaf_path_lengths();
    Ok(from_paths(&d, idx[0], idx[1], idx[2], idx[3]))
}

/// Generalized quartet distance of `predicted` from `gold`, over all
/// quartets that `gold` resolves.
pub fn gqd(predicted: &Phylogeny, gold: &Phylogeny) -> Result<QuartetScore> {
    let p_names: BTreeSet<&str> = predicted.names().iter().map(String::as_str).collect();
    let g_names: BTreeSet<&str> = gold.names().iter().map(String::as_str).collect();
    if p_names != g_names {
        return Err(Error::LeafSetMismatch {
            only_first: p_names.difference(&g_names).map(|s| s.to_string()).collect(),
            only_second: g_names.difference(&p_names).map(|s| s.to_string()).collect(),
        });
    }
    let pred = predicted.with_leaf_order(gold.names())?;
    let dg = gold.leaf_path_lengths();
    let dp = pred.leaf_path_lengths();
    let n = gold.n_leaves();
    let (resolved, differing) = (0..n)
        .into_par_iter()
        .map(|a| {
            let (mut bq, mut dq) = (0u64, 0u64);
            for b in a + 1..n {
                for c in b + 1..n {
                    for e in c + 1..n {
                        let g = from_paths(&dg, a, b, c, e);
                        if g != QuartetTopology::Star {
                            bq += 1;
                            if from_paths(&dp, a, b, c, e) != g {
                                dq += 1;
                            }
                        }
                    }
                }
            }
            (bq, dq)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    let empty = resolved == 0;
    Ok(QuartetScore {
        resolved_gold: resolved,
        differing,
        gqd: if empty { 0.0 } else { differing as f64 / resolved as f64 },
        no_resolved_quartets: empty,
    })
}
