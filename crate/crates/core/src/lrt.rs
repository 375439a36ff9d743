//! Likelihood ratio test between a low and a high invariant-site proportion,
//! with the null distribution of the statistic from parametric bootstrap
//! replicates and a one-sided paired t-test over `k` searches.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::bootsim::{simulate_matrix, SimConfig};
use crate::error::{Error, Result};
use crate::mlsearch::{ml_tree_with_model, nni_search, MlFit, SearchConfig};
use crate::msa::CharacterMatrix;
use crate::phylik::write_newick;
use crate::rng::mix64;
use crate::submodel::{build_model, ModelOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrtConfig {
    pub p_inv_null: f64,
    pub p_inv_alt: f64,
    pub k: usize,
    pub alpha: f64,
    pub seed: u64,
    pub search: SearchConfig,
    /// Base model options; `p_inv` is overridden per hypothesis.
    pub model: ModelOptions,
}

impl Default for LrtConfig {
    fn default() -> Self {
        LrtConfig {
            p_inv_null: 0.01,
            p_inv_alt: 0.06,
            k: 15,
            alpha: 0.05,
            seed: 42,
            // restarts from perturbed starts give the k searches their spread
            search: SearchConfig { start_perturbation: 0.5, ..SearchConfig::default() },
            model: ModelOptions::default(),
        }
    }
}

impl LrtConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0 <= self.p_inv_null && self.p_inv_null < self.p_inv_alt && self.p_inv_alt < 1.0) {
            return Err(Error::domain(format!(
                "need 0 <= p_inv_null < p_inv_alt < 1, got {} and {}",
                self.p_inv_null, self.p_inv_alt
            )));
        }
        if self.k < 2 {
            return Err(Error::domain("k must be at least 2"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::domain("alpha must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Seed of run `j` (1-based).
    pub fn run_seed(&self, j: usize) -> u64 {
        self.seed.wrapping_add((j as u64).wrapping_mul(10007))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    Related,
    NotSupported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrtRun {
    pub j: usize,
    pub seed: u64,
    pub delta_obs: f64,
    pub delta_null: f64,
    pub loglik_null: f64,
    pub loglik_alt: f64,
    pub replicate_loglik_null: f64,
    pub replicate_loglik_alt: f64,
    pub tree_null: String,
    pub tree_alt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrtReport {
    pub config: LrtConfig,
    pub runs: Vec<LrtRun>,
    pub delta_observed: Vec<f64>,
    pub delta_null: Vec<f64>,
    pub mean_observed: f64,
    pub mean_null: f64,
    pub t: f64,
    pub p: f64,
    pub decision: Decision,
}

/// `2 (logL_alt - logL_null)`.
pub fn lrt_statistic(fit_alt: &MlFit, fit_null: &MlFit) -> f64 {
    2.0 * (fit_alt.log_likelihood - fit_null.log_likelihood)
}

/// Upper tail `P(T > t)` of Student's t with `df` degrees of freedom.
pub fn student_t_upper(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    let x = df / (df + t * t);
    let tail = 0.5 * beta_reg(0.5 * df, 0.5, x);
    if t >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// One-sided paired t-test of `observed > null`; returns `(t, p)`.
pub fn paired_t_test(observed: &[f64], null_samples: &[f64]) -> Result<(f64, f64)> {
    if observed.len() != null_samples.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} observed vs {} null samples",
            observed.len(),
            null_samples.len()
        )));
    }
    let k = observed.len();
    if k < 2 {
        return Err(Error::domain("paired t-test needs at least 2 pairs"));
    }
    let x: Vec<f64> = observed.iter().zip(null_samples).map(|(a, b)| a - b).collect();
    let mean = x.iter().sum::<f64>() / k as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    let sd = var.sqrt();
    if sd == 0.0 || sd <= 1e-14 * mean.abs() {
        return Ok(if mean > 0.0 {
            (f64::INFINITY, 0.0)
        } else if mean < 0.0 {
            (f64::NEG_INFINITY, 1.0)
        } else {
            (0.0, 0.5)
        });
    }
    let t = mean / (sd / (k as f64).sqrt());
    Ok((t, student_t_upper(t, (k - 1) as f64)))
}

/// Fit both hypotheses. Each is also searched from the other's best tree
/// so that `delta` compares the models rather than two search outcomes.
pub fn fit_hypotheses(matrix: &CharacterMatrix, cfg: &LrtConfig, search: &SearchConfig) -> Result<(MlFit, MlFit)> {
    let null_model = build_model(matrix, &ModelOptions { p_inv: cfg.p_inv_null, ..cfg.model.clone() })?;
    let alt_model = null_model.with_p_inv(cfg.p_inv_alt)?;
    let (null, alt) = rayon::join(
        || ml_tree_with_model(matrix, &null_model, search),
        || ml_tree_with_model(matrix, &alt_model, search),
    );
    let (mut null, mut alt) = (null?, alt?);
    if write_newick(&null.tree) != write_newick(&alt.tree) && null.tree.n_leaves() >= 4 {
        let (null2, alt2) =
            rayon::join(|| nni_search(&alt.tree, &null_model, matrix, search), || nni_search(&null.tree, &alt_model, matrix, search));
        let (null2, alt2) = (null2?, alt2?);
        if null2.log_likelihood > null.log_likelihood {
            null = null2;
        }
        if alt2.log_likelihood > alt.log_likelihood {
            alt = alt2;
        }
    }
    Ok((null, alt))
}

fn run_one(matrix: &CharacterMatrix, cfg: &LrtConfig, j: usize) -> Result<LrtRun> {
    let seed = cfg.run_seed(j);
    let search = SearchConfig { seed, ..cfg.search.clone() };
    let (null, alt) = fit_hypotheses(matrix, cfg, &search)?;
    let replicate = simulate_matrix(&null, matrix, &SimConfig { seed: mix64(seed), retain_gap_mask: true, n_sites: None })?;
    let (rnull, ralt) = fit_hypotheses(&replicate, cfg, &search)?;
    Ok(LrtRun {
        j,
        seed,
        delta_obs: lrt_statistic(&alt, &null),
        delta_null: lrt_statistic(&ralt, &rnull),
        loglik_null: null.log_likelihood,
        loglik_alt: alt.log_likelihood,
        replicate_loglik_null: rnull.log_likelihood,
        replicate_loglik_alt: ralt.log_likelihood,
        tree_null: write_newick(&null.tree),
        tree_alt: write_newick(&alt.tree),
    })
}

/// Run the full test: `k` independent searches, each paired with one
/// bootstrap replicate simulated from that search's null fit.
pub fn run_lrt(matrix: &CharacterMatrix, cfg: &LrtConfig) -> Result<LrtReport> {
    cfg.validate()?;
    if matrix.n_taxa() < 3 {
        return Err(Error::InsufficientTaxa(format!("the test needs at least 3 taxa, got {}", matrix.n_taxa())));
    }
    let runs: Vec<LrtRun> = (1..=cfg.k)
        .into_par_iter()
        .map(|j| run_one(matrix, cfg, j).map_err(|e| Error::Run { run: j, source: Box::new(e) }))
        .collect::<Result<_>>()?;
    let delta_observed: Vec<f64> = runs.iter().map(|r| r.delta_obs).collect();
    let delta_null: Vec<f64> = runs.iter().map(|r| r.delta_null).collect();
    let (t, p) = paired_t_test(&delta_observed, &delta_null)?;
    let mean_observed = delta_observed.iter().sum::<f64>() / cfg.k as f64;
    let mean_null = delta_null.iter().sum::<f64>() / cfg.k as f64;
    let decision = if p < cfg.alpha && mean_observed > 0.0 { Decision::Related } else { Decision::NotSupported };
    Ok(LrtReport { config: cfg.clone(), runs, delta_observed, delta_null, mean_observed, mean_null, t, p, decision })
}
