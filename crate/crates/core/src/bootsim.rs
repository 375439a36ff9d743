//! Parametric bootstrap: simulate character matrices from a fitted tree and
//! model, optionally carrying over the template's gap pattern.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlsearch::MlFit;
use crate::msa::CharacterMatrix;
use crate::phylik::Phylogeny;
use crate::rng;
use crate::soundclass::GAP;
use crate::submodel::SubstitutionModel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub retain_gap_mask: bool,
    /// Defaults to the template width.
    pub n_sites: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { seed: 42, retain_gap_mask: true, n_sites: None }
    }
}

fn draw(freqs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, f) in freqs.iter().enumerate() {
        acc += f;
        if u < acc {
            return i;
        }
    }
    freqs.len() - 1
}

/// Simulate one replicate. Rows follow the template's taxon order.
pub fn simulate_matrix(fit: &MlFit, template: &CharacterMatrix, cfg: &SimConfig) -> Result<CharacterMatrix> {
    let tree = &fit.tree;
    let model = &fit.model;
    if tree.n_leaves() != template.n_taxa() {
        return Err(Error::TaxaMismatch(format!(
            "tree has {} leaves, template has {} taxa",
            tree.n_leaves(),
            template.n_taxa()
        )));
    }
    let mut row_of_leaf = Vec::with_capacity(tree.n_leaves());
    for name in tree.names() {
        row_of_leaf.push(
            template
                .taxon_index(name)
                .ok_or_else(|| Error::TaxaMismatch(format!("tree leaf {name:?} is not a template taxon")))?,
        );
    }
    let n_sites = cfg.n_sites.unwrap_or(template.n_sites());
    if n_sites == 0 {
        return Err(Error::domain("n_sites must be at least 1"));
    }
    if cfg.retain_gap_mask && n_sites != template.n_sites() {
        return Err(Error::ShapeMismatch(format!(
            "gap mask needs {} sites, {} requested",
            template.n_sites(),
            n_sites
        )));
    }
    let root = tree.canonical_root();
    let order = tree.preorder(root);
    let stay: Vec<Vec<f64>> =
        model.rates.iter().map(|&r| tree.edges().iter().map(|e| model.stay_prob(e.length, r)).collect()).collect();
    let columns: Vec<Vec<u8>> = (0..n_sites)
        .into_par_iter()
        .map(|site| {
            let mut r = rng::substream(cfg.seed, site as u64);
            let mut col = vec![0u8; template.n_taxa()];
            if r.random::<f64>() < model.p_inv {
                let c = model.symbols[draw(&model.freqs, r.random())];
                col.fill(c);
                return col;
            }
            let k = if model.rates.len() > 1 { r.random_range(0..model.rates.len()) } else { 0 };
            let mut state = vec![0usize; tree.n_nodes()];
            for &(v, pe) in &order {
                state[v] = match pe {
                    None => draw(&model.freqs, r.random()),
                    Some(e) => {
                        let parent = state[tree.edge(e).other(v)];
                        if r.random::<f64>() < stay[k][e] {
                            parent
                        } else {
                            draw(&model.freqs, r.random())
                        }
                    }
                };
            }
            for (leaf, &row) in row_of_leaf.iter().enumerate() {
                col[row] = model.symbols[state[leaf]];
            }
            col
        })
        .collect();
    let mut rows = vec![Vec::with_capacity(n_sites); template.n_taxa()];
    for col in &columns {
        for (row, &c) in rows.iter_mut().zip(col) {
            row.push(c);
        }
    }
    let mut sim = CharacterMatrix::new(template.taxa.clone(), rows)?;
    if n_sites == template.n_sites() {
        sim.concept_bounds = template.concept_bounds.clone();
    }
    if cfg.retain_gap_mask {
        sim = apply_gap_mask(&sim, template)?;
    }
    Ok(sim)
}

/// Simulate `n_sites` gap-free sites on a known tree, rows in leaf order.
pub fn simulate_sites(tree: &Phylogeny, model: &SubstitutionModel, n_sites: usize, seed: u64) -> Result<CharacterMatrix> {
    let fill = *model.symbols.first().ok_or_else(|| Error::domain("empty alphabet"))?;
    let template = CharacterMatrix::new(tree.names().to_vec(), vec![vec![fill; n_sites]; tree.n_leaves()])?;
    let fit = MlFit { tree: tree.clone(), model: model.clone(), log_likelihood: f64::NAN, search_trace: Vec::new() };
    simulate_matrix(&fit, &template, &SimConfig { seed, retain_gap_mask: false, n_sites: None })
}

/// Copy the template's gaps onto `sim`.
pub fn apply_gap_mask(sim: &CharacterMatrix, template: &CharacterMatrix) -> Result<CharacterMatrix> {
    if sim.taxa != template.taxa || sim.n_sites() != template.n_sites() {
        return Err(Error::ShapeMismatch(format!(
            "simulated {}x{} vs template {}x{} (taxa must match in order)",
            sim.n_taxa(),
            sim.n_sites(),
            template.n_taxa(),
            template.n_sites()
        )));
    }
    let mut out = sim.clone();
    for (row, trow) in out.rows.iter_mut().zip(&template.rows) {
        for (c, &t) in row.iter_mut().zip(trow) {
            if t == GAP {
                *c = GAP;
            }
        }
    }
    Ok(out)
}
