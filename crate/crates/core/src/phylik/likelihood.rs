//! Felsenstein pruning under the invariant-site / discrete-rate mixture.
//!
//! Partials are cached per directed edge: slot `2e + side` holds the
//! conditional vector at one end of edge `e` computed from the subtree that
//! does not contain `e`. Changing a branch length only invalidates slots
//! whose subtree contains that branch.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::msa::CharacterMatrix;
use crate::submodel::SubstitutionModel;

use super::tree::{clamp_length, Phylogeny, MAX_BL, MIN_BL};

const RESCALE_BELOW: f64 = 1e-80;
const GAP_STATE: u8 = u8::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodResult {
    pub total_log_likelihood: f64,
    pub per_site_log_likelihoods: Vec<f64>,
}

impl LikelihoodResult {
    /// Per-site dump as TSV with a `site\tlogL` header; sites are 1-based.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "site\tlogL")?;
        for (i, ll) in self.per_site_log_likelihoods.iter().enumerate() {
            writeln!(out, "{}\t{}", i + 1, ll)?;
        }
        Ok(())
    }
}

/// Unique site columns with multiplicities. Columns are indexed by matrix
/// taxon; states are model state indices, `u8::MAX` for gaps.
#[derive(Debug, Clone)]
pub struct SitePatterns {
    pub n_taxa: usize,
    /// `states[p * n_taxa + taxon]`
    pub states: Vec<u8>,
    pub weights: Vec<f64>,
    pub site_pattern: Vec<usize>,
}

impl SitePatterns {
    pub fn new(matrix: &CharacterMatrix, model: &SubstitutionModel) -> Result<Self> {
        let lookup = model.state_lookup();
        let n_taxa = matrix.n_taxa();
        let mut index: HashMap<Vec<u8>, usize> = HashMap::new();
        let mut states = Vec::new();
        let mut weights = Vec::new();
        let mut site_pattern = Vec::with_capacity(matrix.n_sites());
        for site in 0..matrix.n_sites() {
            let mut col = Vec::with_capacity(n_taxa);
            for (taxon, sym) in matrix.column(site).enumerate() {
                if matrix.is_gap(taxon, site) {
                    col.push(GAP_STATE);
                } else {
                    match lookup[sym as usize] {
                        Some(s) => col.push(s),
                        None => {
                            return Err(Error::domain(format!(
                                "symbol {:?} at site {} is not in the model alphabet",
                                sym as char,
                                site + 1
                            )))
                        }
                    }
                }
            }
            let next = weights.len();
            let p = *index.entry(col.clone()).or_insert_with(|| {
                states.extend_from_slice(&col);
                weights.push(0.0);
                next
            });
            weights[p] += 1.0;
            site_pattern.push(p);
        }
        Ok(SitePatterns { n_taxa, states, weights, site_pattern })
    }

    pub fn n_patterns(&self) -> usize {
        self.weights.len()
    }

    pub fn state(&self, pattern: usize, taxon: usize) -> Option<usize> {
        let s = self.states[pattern * self.n_taxa + taxon];
        (s != GAP_STATE).then_some(s as usize)
    }

    /// `Inv(i)`: `pi_c` when every non-gap cell is `c`, 1 when all gaps, else 0.
    pub fn invariant_term(&self, pattern: usize, freqs: &[f64]) -> f64 {
        let mut seen: Option<usize> = None;
        for taxon in 0..self.n_taxa {
            if let Some(s) = self.state(pattern, taxon) {
                match seen {
                    None => seen = Some(s),
                    Some(c) if c != s => return 0.0,
                    _ => {}
                }
            }
        }
        seen.map_or(1.0, |c| freqs[c])
    }
}

/// Conditional likelihoods laid out `[pattern][rate][state]`, with a log
/// scale factor per pattern.
#[derive(Debug, Clone)]
pub struct Partial {
    vals: Vec<f64>,
    scale: Vec<f64>,
}

/// Per-edge sufficient statistics: the site likelihood at rate `r` is
/// `e_r * x + (1 - e_r) * y` times `exp(scale)`.
#[derive(Debug, Clone)]
pub struct EdgeTerms {
    x: Vec<f64>,
    y: Vec<f64>,
    scale: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Engine {
    tree: Phylogeny,
    model: SubstitutionModel,
    patterns: SitePatterns,
    inv: Vec<f64>,
    leaves: Vec<Partial>,
    cache: Vec<Option<Partial>>,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl Engine {
    pub fn new(tree: Phylogeny, model: SubstitutionModel, matrix: &CharacterMatrix) -> Result<Self> {
        let patterns = SitePatterns::new(matrix, &model)?;
        Self::from_patterns(tree, model, patterns, matrix.taxa.as_slice())
    }

    /// `taxa` names the pattern columns.
    pub fn from_patterns(
        tree: Phylogeny,
        model: SubstitutionModel,
        patterns: SitePatterns,
        taxa: &[String],
    ) -> Result<Self> {
        if taxa.len() != tree.n_leaves() {
            return Err(Error::TaxaMismatch(format!(
                "tree has {} leaves but the matrix has {} taxa",
                tree.n_leaves(),
                taxa.len()
            )));
        }
        let mut columns = Vec::with_capacity(tree.n_leaves());
        for name in tree.names() {
            let col = taxa
                .iter()
                .position(|t| t == name)
                .ok_or_else(|| Error::TaxaMismatch(format!("tree leaf {name:?} is not a matrix taxon")))?;
            columns.push(col);
        }
        let (s, r, np) = (model.n_states(), model.rates.len(), patterns.n_patterns());
        let leaves = columns
            .iter()
            .map(|&col| {
                let mut vals = vec![0.0; np * r * s];
                for p in 0..np {
                    let block = &mut vals[p * r * s..(p + 1) * r * s];
                    match patterns.state(p, col) {
                        Some(st) => {
                            for k in 0..r {
                                block[k * s + st] = 1.0;
                            }
                        }
                        None => block.fill(1.0),
                    }
                }
                Partial { vals, scale: vec![0.0; np] }
            })
            .collect();
        let inv = (0..np).map(|p| patterns.invariant_term(p, &model.freqs)).collect();
        let cache = vec![None; 2 * tree.n_edges()];
        Ok(Engine { tree, model, patterns, inv, leaves, cache })
    }

    pub fn tree(&self) -> &Phylogeny {
        &self.tree
    }

    pub fn model(&self) -> &SubstitutionModel {
        &self.model
    }

    pub fn patterns(&self) -> &SitePatterns {
        &self.patterns
    }

    pub fn into_tree(self) -> Phylogeny {
        self.tree
    }

    /// Change `p_inv`; partials do not depend on it.
    pub fn set_p_inv(&mut self, p_inv: f64) -> Result<()> {
        self.model = self.model.with_p_inv(p_inv)?;
        Ok(())
    }

    /// Replace the model (same alphabet); drops all cached partials.
    pub fn set_model(&mut self, model: SubstitutionModel) -> Result<()> {
        if model.symbols != self.model.symbols {
            return Err(Error::domain("replacement model must use the same alphabet"));
        }
        let np = self.patterns.n_patterns();
        let (s, r) = (model.n_states(), model.rates.len());
        if r != self.model.rates.len() {
            for leaf in self.leaves.iter_mut() {
                let mut vals = vec![0.0; np * r * s];
                let old_r = leaf.vals.len() / (np * s).max(1);
                for p in 0..np {
                    let src = &leaf.vals[p * old_r * s..p * old_r * s + s];
                    for k in 0..r {
                        vals[(p * r + k) * s..(p * r + k + 1) * s].copy_from_slice(src);
                    }
                }
                leaf.vals = vals;
            }
        }
        self.inv = (0..np).map(|p| self.patterns.invariant_term(p, &model.freqs)).collect();
        self.model = model;
        self.cache.iter_mut().for_each(|c| *c = None);
        Ok(())
    }

    fn slot(&self, node: usize, e: usize) -> usize {
        2 * e + usize::from(self.tree.edge(e).a != node)
    }

    /// Set a branch length (clamped) and invalidate dependent partials.
    pub fn set_length(&mut self, e: usize, t: f64) {
        self.tree.set_length(e, clamp_length(t));
        self.invalidate_around(e);
    }

    fn invalidate_around(&mut self, e: usize) {
        let Some(edge) = self.tree.edges().get(e).copied() else { return };
        let mut stack = vec![(edge.a, e), (edge.b, e)];
        while let Some((v, came)) = stack.pop() {
            for &(w, f) in self.tree.neighbors(v) {
                if f != came {
                    let s = self.slot(v, f);
                    self.cache[s] = None;
                    stack.push((w, f));
                }
            }
        }
    }

    /// Apply an NNI (see [`Phylogeny::nni`]) and invalidate affected partials.
    pub fn nni(&mut self, e: usize, variant: usize) -> Result<()> {
        self.tree.nni(e, variant)?;
        let (a, b) = (self.tree.edge(e).a, self.tree.edge(e).b);
        let (sa, sb) = (self.slot(a, e), self.slot(b, e));
        self.cache[sa] = None;
        self.cache[sb] = None;
        self.invalidate_around(e);
        Ok(())
    }

    /// Conditional partial at `node`, excluding the subtree across `e`.
    pub fn conditional(&mut self, node: usize, e: usize) -> &Partial {
        self.ensure(node, e);
        let s = self.slot(node, e);
        self.cache[s].as_ref().expect("ensured")
    }

    fn ensure(&mut self, node: usize, e: usize) {
        let s = self.slot(node, e);
        if self.cache[s].is_some() {
            return;
        }
        if self.tree.is_leaf(node) {
            self.cache[s] = Some(self.leaves[node].clone());
            return;
        }
        let kids: Vec<(usize, usize)> = self.tree.neighbors(node).iter().copied().filter(|&(_, f)| f != e).collect();
        for &(w, f) in &kids {
            self.ensure(w, f);
        }
        let parts: Vec<(&Partial, f64)> = kids
            .iter()
            .map(|&(w, f)| (self.cache[self.slot(w, f)].as_ref().expect("ensured"), self.tree.length(f)))
            .collect();
        let out = combine(&self.model, &parts);
        self.cache[s] = Some(out);
    }

    /// Sufficient statistics for edge `e` at the current partials.
    pub fn edge_terms(&mut self, e: usize) -> EdgeTerms {
        let Some(edge) = self.tree.edges().get(e).copied() else {
            // No edges: a single leaf.
            let leaf = &self.leaves[0];
            let mut ones = leaf.clone();
            ones.vals.fill(1.0);
            return edge_terms(&self.model, leaf, &ones);
        };
        self.ensure(edge.a, e);
        self.ensure(edge.b, e);
        let pa = self.cache[self.slot(edge.a, e)].as_ref().expect("ensured");
        let pb = self.cache[self.slot(edge.b, e)].as_ref().expect("ensured");
        edge_terms(&self.model, pa, pb)
    }

    /// Total log-likelihood of the current tree.
    pub fn log_likelihood(&mut self) -> f64 {
        let t = self.tree.edges().first().map_or(0.0, |e| e.length);
        let terms = self.edge_terms(0);
        self.terms_log_likelihood(&terms, t)
    }

    /// Log-likelihood when the edge behind `terms` has length `t`.
    pub fn terms_log_likelihood(&self, terms: &EdgeTerms, t: f64) -> f64 {
        terms_log_likelihood(&self.model, &self.patterns.weights, &self.inv, terms, t)
    }

    /// Per-pattern log-likelihoods using edge `e`.
    pub fn pattern_log_likelihoods(&mut self, e: usize) -> Vec<f64> {
        let t = self.tree.edges().get(e).map_or(0.0, |e| e.length);
        let terms = self.edge_terms(e);
        (0..self.patterns.n_patterns())
            .map(|p| pattern_ll(&self.model, &self.inv, &terms, p, t))
            .collect()
    }

    /// Per-pattern `(ln(mean_r L_var), Inv)` at the current tree, for
    /// optimizing `p_inv` without recomputing partials.
    pub fn mixture_components(&mut self) -> (Vec<f64>, Vec<f64>) {
        let t = self.tree.edges().first().map_or(0.0, |e| e.length);
        let terms = self.edge_terms(0);
        let var = (0..self.patterns.n_patterns()).map(|p| variable_log(&self.model, &terms, p, t)).collect();
        (var, self.inv.clone())
    }

    /// Full result, expanding patterns back to sites.
    pub fn result(&mut self) -> Result<LikelihoodResult> {
        let pll = self.pattern_log_likelihoods(0);
        let per_site: Vec<f64> = self.patterns.site_pattern.iter().map(|&p| pll[p]).collect();
        if let Some(site) = per_site.iter().position(|v| !v.is_finite()) {
            return Err(Error::Underflow { site });
        }
        let total = per_site.iter().sum();
        Ok(LikelihoodResult { total_log_likelihood: total, per_site_log_likelihoods: per_site })
    }

    /// Maximize over the length of edge `e`, holding everything else fixed.
    /// Returns the new log-likelihood.
    pub fn optimize_edge(&mut self, e: usize, tol: f64) -> f64 {
        let terms = self.edge_terms(e);
        let current = self.tree.length(e);
        let (t, ll) = optimize_terms(&self.model, &self.patterns.weights, &self.inv, &terms, current, tol);
        if t != current {
            self.set_length(e, t);
        }
        ll
    }
}

/// Product over children of `P(t) * child`, rescaled where small.
pub fn combine(model: &SubstitutionModel, parts: &[(&Partial, f64)]) -> Partial {
    let s = model.n_states();
    let r = model.rates.len();
    let np = parts[0].0.scale.len();
    let mut vals = vec![1.0; np * r * s];
    let mut scale = vec![0.0; np];
    let freqs = &model.freqs;
    for &(child, t) in parts {
        let stay: Vec<f64> = model.rates.iter().map(|&rate| model.stay_prob(t, rate)).collect();
        for p in 0..np {
            scale[p] += child.scale[p];
            for (k, &e) in stay.iter().enumerate() {
                let off = (p * r + k) * s;
                let src = &child.vals[off..off + s];
                let mean: f64 = src.iter().zip(freqs).map(|(l, f)| l * f).sum();
                let base = (1.0 - e) * mean;
                for (dst, l) in vals[off..off + s].iter_mut().zip(src) {
                    *dst *= e * l + base;
                }
            }
        }
    }
    for p in 0..np {
        let block = &mut vals[p * r * s..(p + 1) * r * s];
        let m = block.iter().fold(0.0f64, |a, &b| a.max(b));
        if m > 0.0 && m < RESCALE_BELOW {
            block.iter_mut().for_each(|v| *v /= m);
            scale[p] += m.ln();
        }
    }
    Partial { vals, scale }
}

/// Terms for an edge joining partials `a` and `b`.
pub fn edge_terms(model: &SubstitutionModel, a: &Partial, b: &Partial) -> EdgeTerms {
    let s = model.n_states();
    let r = model.rates.len();
    let np = a.scale.len();
    let mut x = vec![0.0; np * r];
    let mut y = vec![0.0; np * r];
    for p in 0..np {
        for k in 0..r {
            let off = (p * r + k) * s;
            let (la, lb) = (&a.vals[off..off + s], &b.vals[off..off + s]);
            let (mut xs, mut ma, mut mb) = (0.0, 0.0, 0.0);
            for i in 0..s {
                let f = model.freqs[i];
                xs += f * la[i] * lb[i];
                ma += f * la[i];
                mb += f * lb[i];
            }
            x[p * r + k] = xs;
            y[p * r + k] = ma * mb;
        }
    }
    let scale = a.scale.iter().zip(&b.scale).map(|(u, v)| u + v).collect();
    EdgeTerms { x, y, scale }
}

fn variable_log(model: &SubstitutionModel, terms: &EdgeTerms, p: usize, t: f64) -> f64 {
    let r = model.rates.len();
    let mut sum = 0.0;
    for (k, &rate) in model.rates.iter().enumerate() {
        let e = model.stay_prob(t, rate);
        sum += e * terms.x[p * r + k] + (1.0 - e) * terms.y[p * r + k];
    }
    (sum / r as f64).ln() + terms.scale[p]
}

/// `p_inv * Inv` in the units of a pattern's scaled partials; `None` when
/// that overflows and the log-space path must be used.
#[inline]
fn scaled_inv(p_inv: f64, inv: f64, scale: f64) -> Option<f64> {
    if p_inv == 0.0 || inv == 0.0 {
        return Some(0.0);
    }
    let c = if scale == 0.0 { p_inv * inv } else { p_inv * inv * (-scale).exp() };
    c.is_finite().then_some(c)
}

fn stay_probs(model: &SubstitutionModel, t: f64) -> Vec<f64> {
    model.rates.iter().map(|&r| model.stay_prob(t, r)).collect()
}

fn pattern_ll_with(model: &SubstitutionModel, inv: &[f64], terms: &EdgeTerms, p: usize, stay: &[f64]) -> f64 {
    let r = stay.len();
    let (x, y) = (&terms.x[p * r..(p + 1) * r], &terms.y[p * r..(p + 1) * r]);
    let v = stay.iter().zip(x.iter().zip(y)).map(|(e, (x, y))| y + e * (x - y)).sum::<f64>() / r as f64;
    let sc = terms.scale[p];
    match scaled_inv(model.p_inv, inv[p], sc) {
        Some(c) => ((1.0 - model.p_inv) * v + c).ln() + sc,
        None => mix_log(v.ln() + sc, inv[p], model.p_inv),
    }
}

fn pattern_ll(model: &SubstitutionModel, inv: &[f64], terms: &EdgeTerms, p: usize, t: f64) -> f64 {
    pattern_ll_with(model, inv, terms, p, &stay_probs(model, t))
}

/// `ln((1 - p_inv) exp(var_log) + p_inv * inv)`.
pub fn mix_log(var_log: f64, inv: f64, p_inv: f64) -> f64 {
    if p_inv == 0.0 {
        return var_log;
    }
    let a = (1.0 - p_inv).ln() + var_log;
    let b = if inv > 0.0 { (p_inv * inv).ln() } else { f64::NEG_INFINITY };
    log_add(a, b)
}

pub fn terms_log_likelihood(
    model: &SubstitutionModel,
    weights: &[f64],
    inv: &[f64],
    terms: &EdgeTerms,
    t: f64,
) -> f64 {
    let stay = stay_probs(model, t);
    weights.iter().enumerate().map(|(p, w)| w * pattern_ll_with(model, inv, terms, p, &stay)).sum()
}

/// First and second derivatives in `t` of [`terms_log_likelihood`].
pub fn terms_slope(model: &SubstitutionModel, weights: &[f64], inv: &[f64], terms: &EdgeTerms, t: f64) -> (f64, f64) {
    let r = model.rates.len();
    let a: Vec<f64> = model.rates.iter().map(|&rate| model.mu * rate).collect();
    let stay = stay_probs(model, t);
    let q = (1.0 - model.p_inv) / r as f64;
    let (mut d1, mut d2) = (0.0, 0.0);
    for (p, w) in weights.iter().enumerate() {
        let Some(c) = scaled_inv(model.p_inv, inv[p], terms.scale[p]) else { continue };
        let (mut v, mut v1, mut v2) = (0.0, 0.0, 0.0);
        for k in 0..r {
            let (x, y) = (terms.x[p * r + k], terms.y[p * r + k]);
            let d = stay[k] * (x - y);
            v += y + d;
            v1 -= a[k] * d;
            v2 += a[k] * a[k] * d;
        }
        let l = q * v + c;
        if !(l > 0.0) {
            continue;
        }
        let g = q * v1 / l;
        d1 += w * g;
        d2 += w * (q * v2 / l - g * g);
    }
    (d1, d2)
}

/// Maximize over the length of the edge behind `terms` in `[MIN_BL, MAX_BL]`
/// by safeguarded Newton iteration on the slope, bisecting in `ln t` when a
/// step leaves the bracket. Both bounds and `current` are also candidates,
/// so the result never scores below `current`.
pub fn optimize_terms(
    model: &SubstitutionModel,
    weights: &[f64],
    inv: &[f64],
    terms: &EdgeTerms,
    current: f64,
    tol: f64,
) -> (f64, f64) {
    let slope = |t: f64| terms_slope(model, weights, inv, terms, t);
    let mut cands = vec![current, MIN_BL, MAX_BL];
    let (g_lo, _) = slope(MIN_BL);
    let (g_hi, _) = slope(MAX_BL);
    if g_lo > 0.0 && g_hi < 0.0 {
        let (mut lo, mut hi) = (MIN_BL, MAX_BL);
        let mut t = current.clamp(MIN_BL, MAX_BL);
        for _ in 0..200 {
            let (g, h) = slope(t);
            if g == 0.0 {
                break;
            }
            if g > 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let newton = t - g / h;
            let next = if h < 0.0 && newton > lo && newton < hi { newton } else { (lo * hi).sqrt() };
            let step = (next - t).abs();
            t = next;
            if step <= tol || hi - lo <= tol {
                break;
            }
        }
        cands.push(t);
    }
    let mut best = (current, f64::NEG_INFINITY);
    for t in cands {
        let v = terms_log_likelihood(model, weights, inv, terms, t);
        if v > best.1 {
            best = (t, v);
        }
    }
    best
}

/// Root partial for one site and rate category at the tree's canonical
/// root, computed by plain recursion with full transition matrices.
pub fn site_conditionals(
    tree: &Phylogeny,
    model: &SubstitutionModel,
    matrix: &CharacterMatrix,
    site: usize,
    rate: usize,
) -> Result<Vec<f64>> {
    if site >= matrix.n_sites() {
        return Err(Error::domain(format!("site {site} out of range ({} sites)", matrix.n_sites())));
    }
    let rate = *model
        .rates
        .get(rate)
        .ok_or_else(|| Error::domain(format!("rate category {rate} out of range")))?;
    let lookup = model.state_lookup();
    let s = model.n_states();
    let mut leaf_vec = Vec::with_capacity(tree.n_leaves());
    for name in tree.names() {
        let row = matrix
            .taxon_index(name)
            .ok_or_else(|| Error::TaxaMismatch(format!("tree leaf {name:?} is not a matrix taxon")))?;
        let mut v = vec![0.0; s];
        match (!matrix.is_gap(row, site)).then(|| lookup[matrix.rows[row][site] as usize]).flatten() {
            Some(st) => v[st as usize] = 1.0,
            None if matrix.is_gap(row, site) => v.fill(1.0),
            None => return Err(Error::domain("symbol not in the model alphabet")),
        }
        leaf_vec.push(v);
    }
    let root = tree.canonical_root();
    let order = tree.preorder(root);
    let mut partial: Vec<Vec<f64>> = vec![vec![1.0; s]; tree.n_nodes()];
    for &(v, pe) in order.iter().rev() {
        if tree.is_leaf(v) {
            let lv = &leaf_vec[v];
            partial[v].iter_mut().zip(lv).for_each(|(a, b)| *a *= b);
        }
        if let Some(e) = pe {
            let parent = tree.edge(e).other(v);
            let p = model.transition_prob(tree.length(e), rate)?;
            let child = partial[v].clone();
            for i in 0..s {
                let msg: f64 = (0..s).map(|j| p[i][j] * child[j]).sum();
                partial[parent][i] *= msg;
            }
        }
    }
    Ok(partial[root].clone())
}

/// Total and per-site log-likelihood.
pub fn total_log_likelihood(
    tree: &Phylogeny,
    model: &SubstitutionModel,
    matrix: &CharacterMatrix,
) -> Result<LikelihoodResult> {
    Engine::new(tree.clone(), model.clone(), matrix)?.result()
}
