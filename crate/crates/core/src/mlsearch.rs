//! Maximum-likelihood tree search: neighbor-joining start, branch-length
//! sweeps and nearest-neighbour interchange hill climbing.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::msa::CharacterMatrix;
use crate::phylik::likelihood::{combine, edge_terms, mix_log, optimize_terms, Partial};
use crate::phylik::tree::{clamp_length, Edge};
use crate::phylik::{write_newick, Engine, Phylogeny, MAX_BL};
use crate::rng;
use crate::submodel::{build_model, ModelOptions, SubstitutionModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub seed: u64,
    pub max_nni_rounds: usize,
    pub bl_tolerance: f64,
    pub ll_tolerance: f64,
    pub random_restarts: usize,
    /// Random NNIs applied to the neighbor-joining start, as a fraction of
    /// its internal edges. 0 starts from the plain NJ tree.
    #[serde(default)]
    pub start_perturbation: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            seed: 42,
            max_nni_rounds: 200,
            bl_tolerance: 1e-6,
            ll_tolerance: 1e-4,
            random_restarts: 1,
            start_perturbation: 0.0,
        }
    }
}

impl SearchConfig {
    fn validate(&self) -> Result<()> {
        if !(self.bl_tolerance > 0.0) || !(self.ll_tolerance > 0.0) {
            return Err(Error::domain("search tolerances must be positive"));
        }
        if self.max_nni_rounds == 0 || self.random_restarts == 0 {
            return Err(Error::domain("max_nni_rounds and random_restarts must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.start_perturbation) {
            return Err(Error::domain("start_perturbation must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub round: usize,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlFit {
    pub tree: Phylogeny,
    pub model: SubstitutionModel,
    pub log_likelihood: f64,
    pub search_trace: Vec<TracePoint>,
}

/// Serializable form of an [`MlFit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub tree: String,
    pub log_likelihood: f64,
    pub p_inv: f64,
    pub gamma_shape: Option<f64>,
    pub model: SubstitutionModel,
    pub trace: Vec<TracePoint>,
}

impl MlFit {
    pub fn report(&self) -> FitReport {
        FitReport {
            tree: write_newick(&self.tree),
            log_likelihood: self.log_likelihood,
            p_inv: self.model.p_inv,
            gamma_shape: self.model.gamma_shape,
            model: self.model.clone(),
            trace: self.search_trace.clone(),
        }
    }

    pub fn from_report(report: &FitReport) -> Result<Self> {
        Ok(MlFit {
            tree: crate::phylik::parse_newick(&report.tree)?,
            model: report.model.clone(),
            log_likelihood: report.log_likelihood,
            search_trace: report.trace.clone(),
        })
    }
}

/// Model-corrected distances between all taxon pairs, plus warnings for
/// pairs without any shared non-gap site.
pub fn pairwise_distances(matrix: &CharacterMatrix, model: &SubstitutionModel) -> (Vec<Vec<f64>>, Vec<String>) {
    let m = matrix.n_taxa();
    let b = 1.0 - model.freqs.iter().map(|p| p * p).sum::<f64>();
    let mut d = vec![vec![0.0; m]; m];
    let mut warnings = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            let (mut shared, mut diff) = (0usize, 0usize);
            for s in 0..matrix.n_sites() {
                if !matrix.is_gap(i, s) && !matrix.is_gap(j, s) {
                    shared += 1;
                    diff += usize::from(matrix.rows[i][s] != matrix.rows[j][s]);
                }
            }
            let v = if shared == 0 {
                warnings.push(format!(
                    "taxa {:?} and {:?} share no non-gap site; distance set to {MAX_BL}",
                    matrix.taxa[i], matrix.taxa[j]
                ));
                MAX_BL
            } else {
                let p = diff as f64 / shared as f64;
                let arg = 1.0 - p / b;
                if b <= 0.0 || arg <= 0.0 {
                    MAX_BL
                } else {
                    (-b * arg.ln()).clamp(0.0, MAX_BL)
                }
            };
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    (d, warnings)
}

/// Neighbor joining over `dist`; equal joins are broken by the seeded RNG.
pub fn neighbor_joining(names: &[String], dist: &[Vec<f64>], seed: u64) -> Result<Phylogeny> {
    let m = names.len();
    if m < 2 {
        return Err(Error::InsufficientTaxa(format!("neighbor joining needs at least 2 taxa, got {m}")));
    }
    if m == 2 {
        return Phylogeny::from_edges(names.to_vec(), 2, vec![Edge { a: 0, b: 1, length: clamp_length(dist[0][1]) }]);
    }
    let mut rng = rng::seeded(seed);
    let mut d: Vec<Vec<f64>> = dist.to_vec();
    // `active[k]` = tree node currently represented by row k of `d`.
    let mut active: Vec<usize> = (0..m).collect();
    let mut edges = Vec::with_capacity(2 * m - 3);
    let mut next = m;
    while active.len() > 3 {
        let r = active.len();
        let sums: Vec<f64> = (0..r).map(|i| d[i].iter().sum()).collect();
        let mut best = f64::INFINITY;
        let mut ties: Vec<(usize, usize)> = Vec::new();
        for i in 0..r {
            for j in i + 1..r {
                let q = (r as f64 - 2.0) * d[i][j] - sums[i] - sums[j];
                let tol = 1e-12 * q.abs().max(1.0);
                if q < best - tol {
                    best = q;
                    ties.clear();
                    ties.push((i, j));
                } else if q <= best + tol {
                    ties.push((i, j));
                }
            }
        }
        let (i, j) = ties[if ties.len() > 1 { rng.random_range(0..ties.len()) } else { 0 }];
        let li = 0.5 * d[i][j] + (sums[i] - sums[j]) / (2.0 * (r as f64 - 2.0));
        let lj = d[i][j] - li;
        let u = next;
        next += 1;
        edges.push(Edge { a: u, b: active[i], length: clamp_length(li) });
        edges.push(Edge { a: u, b: active[j], length: clamp_length(lj) });
        let row: Vec<f64> = (0..r).map(|k| 0.5 * (d[i][k] + d[j][k] - d[i][j])).collect();
        // Replace row i with the new node, drop row j.
        for k in 0..r {
            d[i][k] = row[k];
            d[k][i] = row[k];
        }
        d[i][i] = 0.0;
        active[i] = u;
        d.remove(j);
        for rowk in d.iter_mut() {
            rowk.remove(j);
        }
        active.remove(j);
    }
    let c = next;
    for (k, &node) in active.iter().enumerate() {
        let (o1, o2) = ((k + 1) % 3, (k + 2) % 3);
        let l = 0.5 * (d[k][o1] + d[k][o2] - d[o1][o2]);
        edges.push(Edge { a: c, b: node, length: clamp_length(l) });
    }
    Phylogeny::from_edges(names.to_vec(), next + 1, edges)
}

/// Starting tree: neighbor joining over model-corrected pairwise distances.
pub fn init_tree(matrix: &CharacterMatrix, model: &SubstitutionModel, seed: u64) -> Result<Phylogeny> {
    let (d, warnings) = pairwise_distances(matrix, model);
    for w in warnings {
        eprintln!("warning: {w}");
    }
    neighbor_joining(&matrix.taxa, &d, seed)
}

/// Neighbor-joining start followed by `round(start_perturbation * internal
/// edges)` random NNIs drawn from `seed`.
fn start_tree(matrix: &CharacterMatrix, model: &SubstitutionModel, cfg: &SearchConfig, seed: u64) -> Result<Phylogeny> {
    let mut tree = init_tree(matrix, model, seed)?;
    let internal = tree.internal_edges();
    let n = (cfg.start_perturbation * internal.len() as f64).round() as usize;
    let mut r = rng::substream(seed, 0x57a7);
    for _ in 0..n {
        let e = internal[r.random_range(0..internal.len())];
        tree.nni(e, r.random_range(0..2))?;
    }
    Ok(tree)
}

/// Edges in depth-first order so consecutive edges share a node.
fn sweep_order(tree: &Phylogeny) -> Vec<usize> {
    tree.preorder(tree.canonical_root()).into_iter().filter_map(|(_, e)| e).collect()
}

/// Sweep all edges until a sweep gains less than `ll_tolerance`.
fn optimize_all_lengths(engine: &mut Engine, cfg: &SearchConfig) -> f64 {
    let mut ll = engine.log_likelihood();
    loop {
        for e in sweep_order(engine.tree()) {
            engine.optimize_edge(e, cfg.bl_tolerance);
        }
        let new = engine.log_likelihood();
        let gain = new - ll;
        ll = new.max(ll);
        if !(gain >= cfg.ll_tolerance) {
            return ll;
        }
    }
}

pub fn optimize_branch_lengths(
    tree: &Phylogeny,
    model: &SubstitutionModel,
    matrix: &CharacterMatrix,
    cfg: &SearchConfig,
) -> Result<Phylogeny> {
    cfg.validate()?;
    let mut engine = Engine::new(tree.clone(), model.clone(), matrix)?;
    optimize_all_lengths(&mut engine, cfg);
    Ok(engine.into_tree())
}

/// Four subtrees around an internal edge, paired as `(p[0], p[1]) | (p[2], p[3])`.
struct Quartet<'a> {
    parts: [&'a Partial; 4],
    lengths: [f64; 5],
}

impl Quartet<'_> {
    fn optimize(&mut self, engine: &Engine, cfg: &SearchConfig) -> f64 {
        let model = engine.model();
        let weights = &engine.patterns().weights;
        let inv = inv_terms(engine);
        let mut ll = f64::NEG_INFINITY;
        for _ in 0..4 {
            let before = ll;
            for slot in 0..5 {
                let l = self.lengths;
                let p = self.parts;
                let terms = if slot == 4 {
                    let u = combine(model, &[(p[0], l[0]), (p[1], l[1])]);
                    let v = combine(model, &[(p[2], l[2]), (p[3], l[3])]);
                    edge_terms(model, &u, &v)
                } else {
                    let (sib, pair) = match slot {
                        0 => (1, [2, 3]),
                        1 => (0, [2, 3]),
                        2 => (3, [0, 1]),
                        _ => (2, [0, 1]),
                    };
                    let far = combine(model, &[(p[pair[0]], l[pair[0]]), (p[pair[1]], l[pair[1]])]);
                    let near = combine(model, &[(p[sib], l[sib]), (&far, l[4])]);
                    edge_terms(model, p[slot], &near)
                };
                let (t, v) = optimize_terms(model, weights, &inv, &terms, self.lengths[slot], cfg.bl_tolerance);
                self.lengths[slot] = t;
                ll = v;
            }
            if ll - before < cfg.ll_tolerance {
                break;
            }
        }
        ll
    }
}

fn inv_terms(engine: &Engine) -> Vec<f64> {
    let pats = engine.patterns();
    (0..pats.n_patterns()).map(|p| pats.invariant_term(p, &engine.model().freqs)).collect()
}

#[derive(Debug, Clone, Copy)]
struct Move {
    edge: usize,
    variant: usize,
    gain: f64,
    ll: f64,
    lengths: [f64; 5],
    edge_ids: [usize; 5],
}

fn best_nni(engine: &mut Engine, current: f64, cfg: &SearchConfig) -> Option<Move> {
    let internal = engine.tree().internal_edges();
    let mut best: Option<Move> = None;
    for e in internal {
        let (u, v) = (engine.tree().edge(e).a, engine.tree().edge(e).b);
        let us = engine.tree().others(u, e);
        let vs = engine.tree().others(v, e);
        let fetch = |engine: &mut Engine, (node, edge): (usize, usize)| engine.conditional(node, edge).clone();
        let (a, b, c, d) = (fetch(engine, us[0]), fetch(engine, us[1]), fetch(engine, vs[0]), fetch(engine, vs[1]));
        let len = |edge: usize| engine.tree().length(edge);
        for variant in 0..2 {
            // Variant 0: u keeps a and gains c; variant 1: u keeps a and gains d.
            let (parts, ids) = if variant == 0 {
                ([&a, &c, &b, &d], [us[0].1, vs[0].1, us[1].1, vs[1].1, e])
            } else {
                ([&a, &d, &c, &b], [us[0].1, vs[1].1, vs[0].1, us[1].1, e])
            };
            let lengths = [len(ids[0]), len(ids[1]), len(ids[2]), len(ids[3]), len(ids[4])];
            let mut q = Quartet { parts, lengths };
            let ll = q.optimize(engine, cfg);
            let gain = ll - current;
            if gain > cfg.ll_tolerance && best.is_none_or(|b| gain > b.gain) {
                best = Some(Move { edge: e, variant, gain, ll, lengths: q.lengths, edge_ids: ids });
            }
        }
    }
    best
}

fn hill_climb(engine: &mut Engine, cfg: &SearchConfig, trace: &mut Vec<TracePoint>, round0: usize) -> f64 {
    let mut ll = optimize_all_lengths(engine, cfg);
    let mut round = round0;
    trace.push(TracePoint { round, log_likelihood: ll });
    if engine.tree().n_leaves() < 4 {
        return ll;
    }
    for _ in 0..cfg.max_nni_rounds {
        let Some(mv) = best_nni(engine, ll, cfg) else { break };
        engine.nni(mv.edge, mv.variant).expect("internal edge of a binary tree");
        for (id, t) in mv.edge_ids.iter().zip(mv.lengths) {
            engine.set_length(*id, t);
        }
        let after = optimize_all_lengths(engine, cfg).max(engine.log_likelihood());
        debug_assert!(after >= mv.ll - 1e-6);
        round += 1;
        if after <= ll {
            // The local gain did not survive global re-optimization.
            break;
        }
        ll = after;
        trace.push(TracePoint { round, log_likelihood: ll });
    }
    ll
}

/// NNI hill climbing from `start` under a fixed model.
pub fn nni_search(
    start: &Phylogeny,
    model: &SubstitutionModel,
    matrix: &CharacterMatrix,
    cfg: &SearchConfig,
) -> Result<MlFit> {
    cfg.validate()?;
    if !start.is_binary() {
        return Err(Error::Tree("tree search requires a binary start tree".into()));
    }
    let mut engine = Engine::new(start.clone(), model.clone(), matrix)?;
    let mut trace = Vec::new();
    hill_climb(&mut engine, cfg, &mut trace, 0);
    finish(engine, trace)
}

fn finish(mut engine: Engine, search_trace: Vec<TracePoint>) -> Result<MlFit> {
    let result = engine.result()?;
    let model = engine.model().clone();
    Ok(MlFit { tree: engine.into_tree(), model, log_likelihood: result.total_log_likelihood, search_trace })
}

fn single_run(matrix: &CharacterMatrix, model: &SubstitutionModel, cfg: &SearchConfig, seed: u64) -> Result<MlFit> {
    let start = start_tree(matrix, model, cfg, seed)?;
    nni_search(&start, model, matrix, &SearchConfig { seed, ..cfg.clone() })
}

fn best_of(fits: Vec<Result<MlFit>>) -> Result<MlFit> {
    let mut best: Option<MlFit> = None;
    for f in fits {
        let f = f?;
        if best.as_ref().is_none_or(|b| f.log_likelihood > b.log_likelihood) {
            best = Some(f);
        }
    }
    best.ok_or_else(|| Error::domain("no restarts run"))
}

/// Best fit over `random_restarts` runs with seeds `seed, seed + 1, ...`
/// under a model with fixed `p_inv`.
pub fn ml_tree(matrix: &CharacterMatrix, p_inv: f64, cfg: &SearchConfig) -> Result<MlFit> {
    let model = build_model(matrix, &ModelOptions { p_inv, ..ModelOptions::default() })?;
    ml_tree_with_model(matrix, &model, cfg)
}

pub fn ml_tree_with_model(matrix: &CharacterMatrix, model: &SubstitutionModel, cfg: &SearchConfig) -> Result<MlFit> {
    cfg.validate()?;
    if matrix.n_taxa() < 2 {
        return Err(Error::InsufficientTaxa(format!("need at least 2 taxa, got {}", matrix.n_taxa())));
    }
    let fits: Vec<Result<MlFit>> = (0..cfg.random_restarts)
        .into_par_iter()
        .map(|r| single_run(matrix, model, cfg, cfg.seed.wrapping_add(r as u64)))
        .collect();
    best_of(fits)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    /// Upper bound for the estimated invariant proportion.
    pub max_p_inv: f64,
    /// Estimate a two-category gamma shape as well.
    pub gamma2: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions { max_p_inv: 0.5, gamma2: false }
    }
}

fn golden_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const G: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - G * (b - a);
    let mut d = a + G * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - G * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + G * (b - a);
            fd = f(d);
        }
    }
    let mut best = (0.5 * (a + b), f(0.5 * (a + b)));
    for x in [lo, hi] {
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

fn optimize_p_inv(engine: &mut Engine, max_p: f64) -> Result<f64> {
    let (var, inv) = engine.mixture_components();
    let weights = engine.patterns().weights.clone();
    let ll = |p: f64| -> f64 { weights.iter().enumerate().map(|(i, w)| w * mix_log(var[i], inv[i], p)).sum() };
    let current = engine.model().p_inv;
    let (p, v) = golden_max(ll, 0.0, max_p, 1e-7);
    let best = if v > ll(current) { p } else { current };
    engine.set_p_inv(best)?;
    Ok(engine.log_likelihood())
}

const MIN_SHAPE: f64 = 0.05;
const MAX_SHAPE: f64 = 1000.0;

fn optimize_gamma(engine: &mut Engine) -> Result<f64> {
    let base = engine.model().clone();
    let current = base.gamma_shape.unwrap_or(1.0);
    let mut eval = |log_shape: f64| -> f64 {
        let m = base.with_gamma(Some(log_shape.exp()), 2).expect("positive shape");
        engine.set_model(m).expect("same alphabet");
        engine.log_likelihood()
    };
    let (x, v) = golden_max(&mut eval, MIN_SHAPE.ln(), MAX_SHAPE.ln(), 1e-4);
    let cur = eval(current.ln());
    let shape = if v > cur { x.exp() } else { current };
    engine.set_model(base.with_gamma(Some(shape), 2)?)?;
    Ok(engine.log_likelihood())
}

fn alternate(
    engine: &mut Engine,
    est: &EstimateOptions,
    gamma: bool,
    cfg: &SearchConfig,
    trace: &mut Vec<TracePoint>,
) -> Result<()> {
    let mut ll = f64::NEG_INFINITY;
    for _ in 0..20 {
        let round0 = trace.last().map_or(0, |t: &TracePoint| t.round + 1);
        hill_climb(engine, cfg, trace, round0);
        optimize_p_inv(engine, est.max_p_inv)?;
        let now = if gamma { optimize_gamma(engine)? } else { engine.log_likelihood() };
        if now - ll < cfg.ll_tolerance {
            break;
        }
        ll = now;
    }
    Ok(())
}

/// Search that also estimates `p_inv` in `[0, max_p_inv]` and, optionally,
/// the shape of a two-category gamma, alternating with tree search.
pub fn ml_tree_estimate(
    matrix: &CharacterMatrix,
    base: &ModelOptions,
    est: &EstimateOptions,
    cfg: &SearchConfig,
) -> Result<MlFit> {
    cfg.validate()?;
    if !(0.0..1.0).contains(&est.max_p_inv) {
        return Err(Error::domain("max_p_inv must lie in [0, 1)"));
    }
    let model = build_model(matrix, base)?;
    let fits: Vec<Result<MlFit>> = (0..cfg.random_restarts)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.seed.wrapping_add(r as u64);
            let start = start_tree(matrix, &model, cfg, seed)?;
            let mut engine = Engine::new(start, model.clone(), matrix)?;
            let mut trace = Vec::new();
            alternate(&mut engine, est, false, cfg, &mut trace)?;
            if est.gamma2 {
                // start from the homogeneous optimum so the shape cannot
                // absorb what p_inv already explains
                let m = engine.model().with_gamma(Some(MAX_SHAPE), 2)?;
                engine.set_model(m)?;
                alternate(&mut engine, est, true, cfg, &mut trace)?;
            }
            let round = trace.last().map_or(0, |t| t.round + 1);
            let ll = optimize_all_lengths(&mut engine, cfg);
            if trace.last().is_none_or(|t| ll > t.log_likelihood) {
                trace.push(TracePoint { round, log_likelihood: ll });
            }
            finish(engine, trace)
        })
        .collect();
    best_of(fits)
}
