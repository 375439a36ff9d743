//! Equal-rates substitution model with stationary frequencies, an
//! invariant-site proportion and optional discrete gamma rates.
//!
//! Off-diagonal rates are `q_ij = mu * pi_j`, so
//! `P(t) = exp(Qt)` has the closed form
//! `p_ij(t) = pi_j (1 - e^{-mu r t}) + [i = j] e^{-mu r t}`.
//! `mu` is chosen so that one unit of branch length is one expected
//! substitution at a variable site.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::msa::CharacterMatrix;
use crate::soundclass::{DOLGO_CLASSES, GAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyMode {
    /// Frequencies counted over non-gap cells, plus a pseudocount.
    #[default]
    Empirical,
    /// `pi_i = 1 / N_c`.
    Equal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub p_inv: f64,
    pub gamma_shape: Option<f64>,
    pub n_rate_cats: usize,
    pub pseudocount: f64,
    pub frequencies: FrequencyMode,
    /// Use only the symbols observed in the matrix instead of the ten default classes.
    pub observed_alphabet_only: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            p_inv: 0.0,
            gamma_shape: None,
            n_rate_cats: 1,
            pseudocount: 0.5,
            frequencies: FrequencyMode::Empirical,
            observed_alphabet_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionModel {
    /// State symbols, index-aligned with `freqs`.
    pub symbols: Vec<u8>,
    pub freqs: Vec<f64>,
    pub mu: f64,
    pub p_inv: f64,
    pub gamma_shape: Option<f64>,
    pub n_rate_cats: usize,
    /// Category rate multipliers (mean 1).
    pub rates: Vec<f64>,
}

fn check_p_inv(p_inv: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p_inv) {
        return Err(Error::domain(format!("p_inv must lie in [0, 1), got {p_inv}")));
    }
    Ok(())
}

impl SubstitutionModel {
    /// Model from explicit frequencies; `mu` is derived by normalization.
    pub fn new(
        symbols: Vec<u8>,
        freqs: Vec<f64>,
        p_inv: f64,
        gamma_shape: Option<f64>,
        n_rate_cats: usize,
    ) -> Result<Self> {
        if symbols.is_empty() || symbols.len() != freqs.len() {
            return Err(Error::domain("symbols and frequencies must be non-empty and of equal length"));
        }
        if symbols.contains(&GAP) {
            return Err(Error::domain("gap symbol cannot be a state"));
        }
        if freqs.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::domain("frequencies must be positive"));
        }
        let total: f64 = freqs.iter().sum();
        let freqs: Vec<f64> = freqs.iter().map(|p| p / total).collect();
        check_p_inv(p_inv)?;
        let rates = match gamma_shape {
            Some(a) => {
                if !(a > 0.0) || !a.is_finite() {
                    return Err(Error::domain(format!("gamma shape must be positive, got {a}")));
                }
                gamma_categories(a, n_rate_cats.max(1))?
            }
            None => vec![1.0],
        };
        let n_rate_cats = rates.len();
        let het: f64 = 1.0 - freqs.iter().map(|p| p * p).sum::<f64>();
        // A single-state alphabet never changes; any positive mu will do.
        let mu = if het > 0.0 { 1.0 / het } else { 1.0 };
        Ok(SubstitutionModel { symbols, freqs, mu, p_inv, gamma_shape, n_rate_cats, rates })
    }

    pub fn n_states(&self) -> usize {
        self.symbols.len()
    }

    /// State index per byte (`None` for gaps and unknown symbols).
    pub fn state_lookup(&self) -> [Option<u8>; 256] {
        let mut t = [None; 256];
        for (i, &s) in self.symbols.iter().enumerate() {
            t[s as usize] = Some(i as u8);
        }
        t
    }

    pub fn with_p_inv(&self, p_inv: f64) -> Result<Self> {
        check_p_inv(p_inv)?;
        Ok(SubstitutionModel { p_inv, ..self.clone() })
    }

    pub fn with_gamma(&self, shape: Option<f64>, n_rate_cats: usize) -> Result<Self> {
        SubstitutionModel::new(self.symbols.clone(), self.freqs.clone(), self.p_inv, shape, n_rate_cats)
    }

    /// Dense rate matrix `Q`.
    pub fn rate_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.n_states();
        let mut q = vec![vec![0.0; n]; n];
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                if i != j {
                    q[i][j] = self.mu * self.freqs[j];
                    row += q[i][j];
                }
            }
            q[i][i] = -row;
        }
        q
    }

    /// `e^{-mu r t}`: probability that no substitution event occurs.
    #[inline]
    pub fn stay_prob(&self, t: f64, rate: f64) -> f64 {
        (-self.mu * rate * t).exp()
    }

    /// `P(t)` for a rate multiplier `rate`.
    pub fn transition_prob(&self, t: f64, rate: f64) -> Result<Vec<Vec<f64>>> {
        if !(t >= 0.0) {
            return Err(Error::domain(format!("branch length must be non-negative, got {t}")));
        }
        let e = self.stay_prob(t, rate);
        let n = self.n_states();
        Ok((0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let base = self.freqs[j] * (1.0 - e);
                        if i == j {
                            base + e
                        } else {
                            base
                        }
                    })
                    .collect()
            })
            .collect())
    }
}

/// Estimate frequencies from a matrix and build the model.
pub fn build_model(matrix: &CharacterMatrix, opts: &ModelOptions) -> Result<SubstitutionModel> {
    if matrix.n_taxa() == 0 || matrix.n_sites() == 0 {
        return Err(Error::domain("cannot build a model from an empty matrix"));
    }
    check_p_inv(opts.p_inv)?;
    if let Some(a) = opts.gamma_shape {
        if !(a > 0.0) {
            return Err(Error::domain(format!("gamma shape must be positive, got {a}")));
        }
    }
    if opts.pseudocount < 0.0 {
        return Err(Error::domain("pseudocount must be non-negative"));
    }
    let counts = matrix.symbol_counts();
    let observed: Vec<u8> = (0u16..256).map(|b| b as u8).filter(|&b| counts[b as usize] > 0).collect();
    let symbols: Vec<u8> = if opts.observed_alphabet_only {
        observed
    } else {
        let mut s: Vec<u8> = DOLGO_CLASSES.to_vec();
        for b in observed {
            if !s.contains(&b) {
                s.push(b);
            }
        }
        s
    };
    if symbols.is_empty() {
        return Err(Error::domain("matrix holds only gaps"));
    }
    let freqs: Vec<f64> = match opts.frequencies {
        FrequencyMode::Equal => vec![1.0 / symbols.len() as f64; symbols.len()],
        FrequencyMode::Empirical => {
            let total: f64 = symbols.iter().map(|&s| counts[s as usize] as f64).sum();
            let denom = total + symbols.len() as f64 * opts.pseudocount;
            symbols.iter().map(|&s| (counts[s as usize] as f64 + opts.pseudocount) / denom).collect()
        }
    };
    if freqs.iter().any(|&p| p <= 0.0) {
        return Err(Error::domain(
            "zero frequency for an unobserved class; use a positive pseudocount or the observed alphabet",
        ));
    }
    SubstitutionModel::new(symbols, freqs, opts.p_inv, opts.gamma_shape, opts.n_rate_cats)
}

/// `x` with `P(shape, shape * x) = q`, by bisection.
fn gamma_quantile(shape: f64, q: f64) -> f64 {
    let cdf = |x: f64| if x > 0.0 { gamma_lr(shape, shape * x) } else { 0.0 };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while cdf(hi) < q {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Mean-of-bin discretization of a mean-one gamma distribution into `n`
/// equiprobable categories.
pub fn gamma_categories(shape: f64, n: usize) -> Result<Vec<f64>> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(Error::domain(format!("gamma shape must be positive, got {shape}")));
    }
    if n == 0 {
        return Err(Error::domain("need at least one rate category"));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    // The mean of X on (a, b) for X ~ Gamma(shape, rate = shape) is
    // [P(shape + 1, shape b) - P(shape + 1, shape a)] / P(a < X < b).
    let upper = |x: f64| {
        if x.is_infinite() {
            1.0
        } else if x > 0.0 {
            gamma_lr(shape + 1.0, shape * x)
        } else {
            0.0
        }
    };
    let cuts: Vec<f64> = (0..=n)
        .map(|i| match i {
            0 => 0.0,
            i if i == n => f64::INFINITY,
            i => gamma_quantile(shape, i as f64 / n as f64),
        })
        .collect();
    let mut rates: Vec<f64> = cuts.windows(2).map(|w| n as f64 * (upper(w[1]) - upper(w[0]))).collect();
    let mean = rates.iter().sum::<f64>() / n as f64;
    for r in rates.iter_mut() {
        *r /= mean;
    }
    Ok(rates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// `exp(Q t)` by scaling and squaring of a Taylor series.
    fn expm(q: &[Vec<f64>], t: f64) -> Vec<Vec<f64>> {
        let n = q.len();
        let norm: f64 = q.iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max) * t;
        let mut s = 0;
        while norm / 2f64.powi(s) > 0.5 {
            s += 1;
        }
        let scale = t / 2f64.powi(s);
        let a: Vec<Vec<f64>> = q.iter().map(|r| r.iter().map(|x| x * scale).collect()).collect();
        let mul = |x: &Vec<Vec<f64>>, y: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            (0..n)
                .map(|i| (0..n).map(|j| (0..n).map(|k| x[i][k] * y[k][j]).sum()).collect())
                .collect()
        };
        let mut result: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let mut term = result.clone();
        for k in 1..30 {
            term = mul(&term, &a);
            for row in term.iter_mut() {
                for x in row.iter_mut() {
                    *x /= k as f64;
                }
            }
            for i in 0..n {
                for j in 0..n {
                    result[i][j] += term[i][j];
                }
            }
        }
        for _ in 0..s {
            result = mul(&result, &result);
        }
        result
    }

    fn uniform10() -> SubstitutionModel {
        SubstitutionModel::new(DOLGO_CLASSES.to_vec(), vec![0.1; 10], 0.0, None, 1).unwrap()
    }

    #[test]
    fn uniform_matrix_gives_uniform_freqs() {
        let row: Vec<u8> = DOLGO_CLASSES.iter().copied().cycle().take(50).collect();
        let m = CharacterMatrix::new(vec!["a".into(), "b".into()], vec![row.clone(), row]).unwrap();
        let model = build_model(&m, &ModelOptions::default()).unwrap();
        for p in &model.freqs {
            assert!((p - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn frequencies_from_counts() {
        let m = CharacterMatrix::new(
            vec!["a".into(), "b".into()],
            vec![b"KKKRR".to_vec(), b"RRRSS".to_vec()],
        )
        .unwrap();
        let opts = ModelOptions { pseudocount: 0.0, observed_alphabet_only: true, ..Default::default() };
        let model = build_model(&m, &opts).unwrap();
        let get = |c: u8| model.freqs[model.symbols.iter().position(|&s| s == c).unwrap()];
        assert!((get(b'K') - 0.3).abs() < 1e-15);
        assert!((get(b'R') - 0.5).abs() < 1e-15);
        assert!((get(b'S') - 0.2).abs() < 1e-15);
    }

    #[test]
    fn normalization_constraint() {
        let model = SubstitutionModel::new(b"KRS".to_vec(), vec![0.3, 0.5, 0.2], 0.0, None, 1).unwrap();
        let q = model.rate_matrix();
        let s: f64 = (0..3).map(|i| model.freqs[i] * q[i][i]).sum();
        assert!((s + 1.0).abs() < 1e-14);
        for row in &q {
            assert!(row.iter().sum::<f64>().abs() < 1e-14);
        }
    }

    #[test]
    fn domain_errors() {
        let m = CharacterMatrix::new(vec!["a".into(), "b".into()], vec![b"KR".to_vec(), b"RK".to_vec()]).unwrap();
        for p in [1.0, -0.1, 1.5] {
            let opts = ModelOptions { p_inv: p, ..Default::default() };
            assert!(build_model(&m, &opts).is_err());
        }
        for a in [0.0, -1.0] {
            let opts = ModelOptions { gamma_shape: Some(a), n_rate_cats: 2, ..Default::default() };
            assert!(build_model(&m, &opts).is_err());
        }
        assert!(uniform10().transition_prob(-1.0, 1.0).is_err());
    }

    #[test]
    fn p_zero_is_identity() {
        let p = uniform10().transition_prob(0.0, 1.0).unwrap();
        for (i, row) in p.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                assert_eq!(*x, if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn long_branch_reaches_stationarity() {
        let model = SubstitutionModel::new(b"KRS".to_vec(), vec![0.3, 0.5, 0.2], 0.0, None, 1).unwrap();
        let p = model.transition_prob(1e6, 1.0).unwrap();
        for row in &p {
            for (x, pi) in row.iter().zip(&model.freqs) {
                assert!((x - pi).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn closed_form_matches_matrix_exponential() {
        let model = uniform10();
        // beta * t = 1 with beta = mu.
        let t = 1.0 / model.mu;
        let p = model.transition_prob(t, 1.0).unwrap();
        let oracle = expm(&model.rate_matrix(), t);
        assert!((oracle[0][0] - 0.431_091_497_054_298_2).abs() < 1e-12);
        for i in 0..10 {
            for j in 0..10 {
                assert!((p[i][j] - oracle[i][j]).abs() < 1e-12);
            }
        }
        let skewed = SubstitutionModel::new(b"KRST".to_vec(), vec![0.1, 0.2, 0.3, 0.4], 0.0, None, 1).unwrap();
        for t in [0.05, 0.7, 3.0] {
            let p = skewed.transition_prob(t, 1.3).unwrap();
            let q: Vec<Vec<f64>> = skewed.rate_matrix().iter().map(|r| r.iter().map(|x| x * 1.3).collect()).collect();
            let o = expm(&q, t);
            for i in 0..4 {
                for j in 0..4 {
                    assert!((p[i][j] - o[i][j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gamma_single_category() {
        assert_eq!(gamma_categories(0.3, 1).unwrap(), [1.0]);
    }

    #[test]
    fn gamma_vanishing_heterogeneity() {
        let r = gamma_categories(1e6, 2).unwrap();
        assert!(r.iter().all(|x| (x - 1.0).abs() < 1e-3), "{r:?}");
    }

    #[test]
    fn gamma_shape_one_matches_quadrature() {
        // Shape 1 is the unit exponential; conditional means on either side of the
        // median ln 2, by composite Simpson integration of x e^{-x}.
        let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize| {
            let h = (b - a) / n as f64;
            let mut s = f(a) + f(b);
            for i in 1..n {
                s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        let f = |x: f64| x * (-x).exp();
        let ln2 = 2f64.ln();
        let lower = simpson(&f, 0.0, ln2, 20_000) / 0.5;
        let upper = simpson(&f, ln2, 60.0, 200_000) / 0.5;
        let r = gamma_categories(1.0, 2).unwrap();
        assert!((r[0] - lower).abs() < 1e-8, "{r:?} {lower}");
        assert!((r[1] - upper).abs() < 1e-8, "{r:?} {upper}");
        assert!((r[0] - 0.30685).abs() < 1e-5);
        assert!((r[1] - 1.69315).abs() < 1e-5);
    }

    fn arb_model() -> impl Strategy<Value = SubstitutionModel> {
        (2usize..11)
            .prop_flat_map(|n| proptest::collection::vec(0.01f64..1.0, n))
            .prop_map(|w| {
                let symbols = DOLGO_CLASSES[..w.len()].to_vec();
                SubstitutionModel::new(symbols, w, 0.0, None, 1).unwrap()
            })
    }

    proptest! {
        #[test]
        fn chapman_kolmogorov(model in arb_model(), s in 0usize..3, t in 0usize..3) {
            let lens = [0.1, 0.5, 1.0];
            let (s, t) = (lens[s], lens[t]);
            let ps = model.transition_prob(s, 1.0).unwrap();
            let pt = model.transition_prob(t, 1.0).unwrap();
            let pst = model.transition_prob(s + t, 1.0).unwrap();
            let n = model.n_states();
            for i in 0..n {
                for j in 0..n {
                    let prod: f64 = (0..n).map(|k| ps[i][k] * pt[k][j]).sum();
                    prop_assert!((prod - pst[i][j]).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn reversible_and_stochastic(model in arb_model(), t in 0.0f64..100.0) {
            let p = model.transition_prob(t, 1.0).unwrap();
            let n = model.n_states();
            for i in 0..n {
                prop_assert!((p[i].iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for j in 0..n {
                    let a = model.freqs[i] * p[i][j];
                    let b = model.freqs[j] * p[j][i];
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn gamma_rates_increase_with_mean_one(shape in 0.05f64..50.0, n in 1usize..6) {
            let r = gamma_categories(shape, n).unwrap();
            prop_assert_eq!(r.len(), n);
            prop_assert!((r.iter().sum::<f64>() / n as f64 - 1.0).abs() < 1e-9);
            for w in r.windows(2) {
                prop_assert!(w[0] < w[1]);
            }
        }
    }
}
