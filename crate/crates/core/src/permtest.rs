//! Multilateral permutation test: average-linkage clustering of languages by
//! mean word distance, with each merge scored against permutations that
//! shuffle every language's words across its own concept slots.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{average_linkage, mean_between};
use crate::error::{Error, Result};
use crate::rng;
use crate::soundclass::{ClassSequence, EncodedWordlist};

/// Precomputed distances keyed by `(language, form)` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalTable {
    table: HashMap<(String, String, String, String), f64>,
}

impl ExternalTable {
    pub fn insert(&mut self, lang_a: &str, word_a: &str, lang_b: &str, word_b: &str, dist: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&dist) {
            return Err(Error::domain(format!("external distance {dist} outside [0, 1]")));
        }
        self.table.insert((lang_a.into(), word_a.into(), lang_b.into(), word_b.into()), dist);
        Ok(())
    }

    /// Symmetric lookup.
    pub fn get(&self, lang_a: &str, word_a: &str, lang_b: &str, word_b: &str) -> Option<f64> {
        let key = |a: &str, wa: &str, b: &str, wb: &str| (a.to_string(), wa.to_string(), b.to_string(), wb.to_string());
        self.table
            .get(&key(lang_a, word_a, lang_b, word_b))
            .or_else(|| self.table.get(&key(lang_b, word_b, lang_a, word_a)))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// TSV with header `LANG_A WORD_A LANG_B WORD_B DIST`.
    pub fn from_tsv<R: Read>(source: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().delimiter(b'\t').quoting(false).from_reader(source);
        let headers = rdr.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::Schema(format!("missing column {name}")))
        };
        let idx = [col("LANG_A")?, col("WORD_A")?, col("LANG_B")?, col("WORD_B")?, col("DIST")?];
        let mut out = ExternalTable::default();
        for (i, rec) in rdr.records().enumerate() {
            let line = i as u64 + 2;
            let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
            let f = |k: usize| rec.get(idx[k]).unwrap_or("").trim();
            let dist: f64 =
                f(4).parse().map_err(|_| Error::Parse { line, message: format!("bad distance {:?}", f(4)) })?;
            out.insert(f(0), f(1), f(2), f(3), dist).map_err(|e| Error::Parse { line, message: e.to_string() })?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WordMetric {
    /// Same class for the first consonant.
    P1Dolgo,
    /// Same classes for the first two consonants.
    Turchin,
    External(ExternalTable),
}

impl WordMetric {
    pub fn name(&self) -> &'static str {
        match self {
            WordMetric::P1Dolgo => "P1_DOLGO",
            WordMetric::Turchin => "TURCHIN",
            WordMetric::External(_) => "EXTERNAL",
        }
    }
}

fn prefix_distance(a: &[u8], b: &[u8], depth: usize) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ => {
            let n = depth.min(a.len()).min(b.len());
            f64::from(u8::from(a[..n] != b[..n]))
        }
    }
}

/// Distance between two class sequences under a built-in metric.
pub fn word_distance(metric: &WordMetric, a: &ClassSequence, b: &ClassSequence) -> Result<f64> {
    match metric {
        WordMetric::P1Dolgo => Ok(prefix_distance(a.symbols(), b.symbols(), 1)),
        WordMetric::Turchin => Ok(prefix_distance(a.symbols(), b.symbols(), 2)),
        WordMetric::External(_) => Err(Error::domain("the external metric needs word identities, not class sequences")),
    }
}

/// Words of each language and the pairwise word-distance lookup.
struct Prepared {
    languages: Vec<String>,
    /// `slots[l][c]` = index into `words[l]`, `None` for empty slots.
    slots: Vec<Vec<Option<usize>>>,
    /// `dist[(a, b)][i * n_b + j]` for `a < b`.
    dist: HashMap<(usize, usize), Vec<f32>>,
    n_words: Vec<usize>,
    /// Concepts filled in both languages.
    shared: HashMap<(usize, usize), Vec<usize>>,
}

impl Prepared {
    fn new(metric: &WordMetric, wl: &EncodedWordlist) -> Result<Self> {
        let m = wl.n_languages();
        let mut slots = Vec::with_capacity(m);
        let mut words: Vec<Vec<(&str, &ClassSequence)>> = Vec::with_capacity(m);
        for row in &wl.cells {
            let mut s = Vec::with_capacity(row.len());
            let mut w = Vec::new();
            for cell in row {
                match cell {
                    Some(word) => {
                        s.push(Some(w.len()));
                        w.push((word.form.as_str(), &word.classes));
                    }
                    None => s.push(None),
                }
            }
            slots.push(s);
            words.push(w);
        }
        let pairs: Vec<(usize, usize)> = (0..m).flat_map(|a| (a + 1..m).map(move |b| (a, b))).collect();
        let dist: Vec<((usize, usize), Vec<f32>)> = pairs
            .par_iter()
            .map(|&(a, b)| {
                let mut d = Vec::with_capacity(words[a].len() * words[b].len());
                for &(fa, ca) in &words[a] {
                    for &(fb, cb) in &words[b] {
                        let v = match metric {
                            WordMetric::External(t) => {
                                t.get(&wl.languages[a], fa, &wl.languages[b], fb).ok_or_else(|| {
                                    Error::MissingDistance {
                                        lang_a: wl.languages[a].clone(),
                                        word_a: fa.to_string(),
                                        lang_b: wl.languages[b].clone(),
                                        word_b: fb.to_string(),
                                    }
                                })?
                            }
                            _ => word_distance(metric, ca, cb)?,
                        };
                        d.push(v as f32);
                    }
                }
                Ok(((a, b), d))
            })
            .collect::<Result<_>>()?;
        let shared = pairs
            .iter()
            .map(|&(a, b)| {
                let c: Vec<usize> =
                    (0..wl.n_concepts()).filter(|&c| slots[a][c].is_some() && slots[b][c].is_some()).collect();
                ((a, b), c)
            })
            .collect();
        Ok(Prepared {
            languages: wl.languages.clone(),
            slots,
            dist: dist.into_iter().collect(),
            n_words: words.iter().map(Vec::len).collect(),
            shared,
        })
    }

    /// Language distance matrix for a word assignment (`assign[l][w]` is
    /// the word placed where word `w` originally was).
    fn matrix(&self, assign: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
        let m = self.languages.len();
        let mut d = vec![vec![0.0; m]; m];
        for a in 0..m {
            for b in a + 1..m {
                let shared = &self.shared[&(a, b)];
                if shared.is_empty() {
                    return Err(Error::UndefinedDistance(self.languages[a].clone(), self.languages[b].clone()));
                }
                let table = &self.dist[&(a, b)];
                let nb = self.n_words[b];
                let mut s = 0.0f64;
                for &c in shared {
                    let wa = assign[a][self.slots[a][c].expect("shared")];
                    let wb = assign[b][self.slots[b][c].expect("shared")];
                    s += f64::from(table[wa * nb + wb]);
                }
                let v = s / shared.len() as f64;
                d[a][b] = v;
                d[b][a] = v;
            }
        }
        Ok(d)
    }

    fn identity(&self) -> Vec<Vec<usize>> {
        self.n_words.iter().map(|&n| (0..n).collect()).collect()
    }

    fn permuted(&self, seed: u64, rep: usize) -> Vec<Vec<usize>> {
        let mut r = rng::substream(seed, rep as u64);
        self.n_words
            .iter()
            .map(|&n| {
                let mut v: Vec<usize> = (0..n).collect();
                v.shuffle(&mut r);
                v
            })
            .collect()
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.languages.iter().position(|l| l == name).ok_or_else(|| Error::domain(format!("unknown language {name:?}")))
    }

    fn permutation_matrices(&self, n_perm: usize, seed: u64) -> Result<Vec<Vec<Vec<f64>>>> {
        (0..n_perm).into_par_iter().map(|rep| self.matrix(&self.permuted(seed, rep))).collect()
    }
}

/// Mean word distance over concepts filled in both languages.
pub fn language_distance(metric: &WordMetric, wl: &EncodedWordlist, a: &str, b: &str) -> Result<f64> {
    let sub = subset(wl, &[a, b])?;
    let p = Prepared::new(metric, &sub)?;
    Ok(p.matrix(&p.identity())?[0][1])
}

fn subset(wl: &EncodedWordlist, langs: &[&str]) -> Result<EncodedWordlist> {
    let mut cells = Vec::new();
    for &l in langs {
        let i = wl.languages.iter().position(|x| x == l).ok_or_else(|| Error::domain(format!("unknown language {l:?}")))?;
        cells.push(wl.cells[i].clone());
    }
    Ok(EncodedWordlist {
        languages: langs.iter().map(|s| s.to_string()).collect(),
        concepts: wl.concepts.clone(),
        cells,
    })
}

fn check_sets(a: &[&str], b: &[&str]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("clusters must be non-empty"));
    }
    if a.iter().any(|x| b.contains(x)) {
        return Err(Error::domain("clusters must be disjoint"));
    }
    Ok(())
}

/// Mean language distance over all cross-cluster pairs.
pub fn cluster_distance(metric: &WordMetric, wl: &EncodedWordlist, a: &[&str], b: &[&str]) -> Result<f64> {
    check_sets(a, b)?;
    let p = Prepared::new(metric, wl)?;
    let d = p.matrix(&p.identity())?;
    let ia: Vec<usize> = a.iter().map(|x| p.index(x)).collect::<Result<_>>()?;
    let ib: Vec<usize> = b.iter().map(|x| p.index(x)).collect::<Result<_>>()?;
    Ok(mean_between(&d, &ia, &ib))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub observed: f64,
    pub expected: f64,
    pub s_hat: f64,
    pub p_value: f64,
    /// Set when the permutation mean is 0 and `s_hat` is reported as 0.
    pub s_hat_undefined: bool,
}

fn significance(observed: f64, perms: &[f64]) -> Significance {
    let n = perms.len();
    let expected = perms.iter().sum::<f64>() / n as f64;
    let below = perms.iter().filter(|&&d| d <= observed + 1e-12).count();
    let (s_hat, undefined) = if expected > 0.0 { ((expected - observed) / expected, false) } else { (0.0, true) };
    Significance { observed, expected, s_hat, p_value: (below + 1) as f64 / (n + 1) as f64, s_hat_undefined: undefined }
}

/// Similarity score and permutation p-value for clusters `a` and `b`.
pub fn permutation_significance(
    metric: &WordMetric,
    wl: &EncodedWordlist,
    a: &[&str],
    b: &[&str],
    n_perm: usize,
    seed: u64,
) -> Result<Significance> {
    check_sets(a, b)?;
    if n_perm == 0 {
        return Err(Error::domain("n_perm must be at least 1"));
    }
    let p = Prepared::new(metric, wl)?;
    let ia: Vec<usize> = a.iter().map(|x| p.index(x)).collect::<Result<_>>()?;
    let ib: Vec<usize> = b.iter().map(|x| p.index(x)).collect::<Result<_>>()?;
    let observed = mean_between(&p.matrix(&p.identity())?, &ia, &ib);
    let perms: Vec<f64> =
        p.permutation_matrices(n_perm, seed)?.iter().map(|d| mean_between(d, &ia, &ib)).collect();
    Ok(significance(observed, &perms))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Related,
    NotSupported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub left: Vec<String>,
    pub right: Vec<String>,
    pub distance: f64,
    pub expected_distance: f64,
    pub s_hat: f64,
    pub p_value: f64,
    pub s_hat_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeTree {
    pub metric: String,
    pub n_perm: usize,
    pub seed: u64,
    pub languages: Vec<String>,
    pub merges: Vec<MergeRecord>,
    pub verdict: Verdict,
}

impl MergeTree {
    pub fn root(&self) -> &MergeRecord {
        self.merges.last().expect("at least one merge")
    }

    /// Nested JSON: leaves are `{"language": ..}`, merges carry statistics
    /// and `left`/`right` children.
    pub fn nested(&self) -> serde_json::Value {
        let m = self.languages.len();
        let mut nodes: Vec<serde_json::Value> =
            self.languages.iter().map(|l| serde_json::json!({ "language": l })).collect();
        let mut by_members: HashMap<Vec<String>, usize> =
            self.languages.iter().enumerate().map(|(i, l)| (vec![l.clone()], i)).collect();
        for (k, mg) in self.merges.iter().enumerate() {
            let key = |members: &Vec<String>| {
                let mut s = members.clone();
                s.sort();
                by_members[&s]
            };
            let (l, r) = (key(&mg.left), key(&mg.right));
            let node = serde_json::json!({
                "distance": mg.distance,
                "s_hat": mg.s_hat,
                "p_value": mg.p_value,
                "left": nodes[l].clone(),
                "right": nodes[r].clone(),
            });
            nodes.push(node);
            let mut all: Vec<String> = mg.left.iter().chain(&mg.right).cloned().collect();
            all.sort();
            by_members.insert(all, m + k);
        }
        nodes.pop().unwrap_or(serde_json::Value::Null)
    }
}

/// Cluster all languages and test every merge. All merges share the same
/// permutation replicates.
pub fn run_permtest(metric: &WordMetric, wl: &EncodedWordlist, n_perm: usize, seed: u64) -> Result<MergeTree> {
    if wl.n_languages() < 2 {
        return Err(Error::InsufficientTaxa(format!("need at least 2 languages, got {}", wl.n_languages())));
    }
    if n_perm == 0 {
        return Err(Error::domain("n_perm must be at least 1"));
    }
    let p = Prepared::new(metric, wl)?;
    let observed = p.matrix(&p.identity())?;
    let perms = p.permutation_matrices(n_perm, seed)?;
    let merges = average_linkage(&observed)
        .into_iter()
        .map(|mg| {
            let d: Vec<f64> = perms.iter().map(|pm| mean_between(pm, &mg.left, &mg.right)).collect();
            let s = significance(mg.distance, &d);
            let names = |ids: &[usize]| ids.iter().map(|&i| p.languages[i].clone()).collect::<Vec<_>>();
            MergeRecord {
                left: names(&mg.left),
                right: names(&mg.right),
                distance: mg.distance,
                expected_distance: s.expected,
                s_hat: s.s_hat,
                p_value: s.p_value,
                s_hat_undefined: s.s_hat_undefined,
            }
        })
        .collect::<Vec<_>>();
    let verdict = if merges.last().expect("m >= 2").p_value < 0.05 { Verdict::Related } else { Verdict::NotSupported };
    Ok(MergeTree { metric: metric.name().into(), n_perm, seed, languages: p.languages.clone(), merges, verdict })
}

/// Bilateral p-values for every language pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTable {
    pub languages: Vec<String>,
    pub p_values: Vec<Vec<f64>>,
}

impl PairwiseTable {
    /// Square TSV; the diagonal is `-`.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "LANGUAGE\t{}", self.languages.join("\t"))?;
        for (i, l) in self.languages.iter().enumerate() {
            let cells: Vec<String> = (0..self.languages.len())
                .map(|j| if i == j { "-".to_string() } else { format!("{}", self.p_values[i][j]) })
                .collect();
            writeln!(out, "{l}\t{}", cells.join("\t"))?;
        }
        Ok(())
    }
}

pub fn pairwise_pvalues(metric: &WordMetric, wl: &EncodedWordlist, n_perm: usize, seed: u64) -> Result<PairwiseTable> {
    if n_perm == 0 {
        return Err(Error::domain("n_perm must be at least 1"));
    }
    let p = Prepared::new(metric, wl)?;
    let observed = p.matrix(&p.identity())?;
    let perms = p.permutation_matrices(n_perm, seed)?;
    let m = p.languages.len();
    let mut out = vec![vec![1.0; m]; m];
    for a in 0..m {
        for b in a + 1..m {
            let d: Vec<f64> = perms.iter().map(|pm| pm[a][b]).collect();
            let s = significance(observed[a][b], &d);
            out[a][b] = s.p_value;
            out[b][a] = s.p_value;
        }
    }
    Ok(PairwiseTable { languages: p.languages.clone(), p_values: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::soundclass::EncodedWord;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn seq(s: &str) -> ClassSequence {
        ClassSequence::from_str_symbols(s)
    }

    fn wordlist(rows: &[(&str, &[&str])]) -> EncodedWordlist {
        let n = rows[0].1.len();
        EncodedWordlist {
            languages: rows.iter().map(|r| r.0.to_string()).collect(),
            concepts: (0..n).map(|i| format!("c{i}")).collect(),
            cells: rows
                .iter()
                .map(|(_, words)| {
                    words
                        .iter()
                        .enumerate()
                        .map(|(i, w)| {
                            (*w != "_").then(|| EncodedWord { form: format!("{w}{i}"), classes: seq(w) })
                        })
                        .collect()
                })
                .collect(),
        }
    }

    #[test]
    fn word_metrics() {
        assert_eq!(word_distance(&WordMetric::P1Dolgo, &seq("NM"), &seq("NM")).unwrap(), 0.0);
        assert_eq!(word_distance(&WordMetric::Turchin, &seq("PT"), &seq("PT")).unwrap(), 0.0);
        assert_eq!(word_distance(&WordMetric::P1Dolgo, &seq("KRS"), &seq("SRNK")).unwrap(), 1.0);
        assert_eq!(word_distance(&WordMetric::P1Dolgo, &seq(""), &seq("K")).unwrap(), 1.0);
        assert_eq!(word_distance(&WordMetric::P1Dolgo, &seq(""), &seq("")).unwrap(), 0.0);
        assert_eq!(word_distance(&WordMetric::Turchin, &seq("KR"), &seq("KS")).unwrap(), 1.0);
        assert_eq!(word_distance(&WordMetric::Turchin, &seq("K"), &seq("KS")).unwrap(), 0.0);
        assert_eq!(word_distance(&WordMetric::Turchin, &seq(""), &seq("")).unwrap(), 0.0);
    }

    #[test]
    fn language_distance_cases() {
        let wl = wordlist(&[("a", &["K", "P", "T", "S"]), ("b", &["K", "T", "P", "S"]), ("c", &["K", "P", "T", "S"])]);
        assert_eq!(language_distance(&WordMetric::P1Dolgo, &wl, "a", "b").unwrap(), 0.5);
        assert_eq!(language_distance(&WordMetric::P1Dolgo, &wl, "a", "c").unwrap(), 0.0);
        let gappy = wordlist(&[("a", &["K", "P", "_"]), ("b", &["K", "T", "P"])]);
        assert_eq!(language_distance(&WordMetric::P1Dolgo, &gappy, "a", "b").unwrap(), 0.5);
        let disjoint = wordlist(&[("a", &["K", "_"]), ("b", &["_", "T"])]);
        assert!(matches!(
            language_distance(&WordMetric::P1Dolgo, &disjoint, "a", "b"),
            Err(Error::UndefinedDistance(..))
        ));
    }

    #[test]
    fn cluster_distance_is_mean_and_symmetric() {
        // d(a, c) = 0.2, d(b, c) = 0.4 over 5 concepts.
        let wl = wordlist(&[
            ("a", &["K", "P", "T", "S", "M"]),
            ("b", &["K", "P", "T", "S", "M"]),
            ("c", &["K", "P", "T", "S", "N"]),
        ]);
        let mut wl2 = wl.clone();
        wl2.cells[1][3] = Some(EncodedWord { form: "x".into(), classes: seq("R") });
        let m = WordMetric::P1Dolgo;
        assert!((cluster_distance(&m, &wl, &["a"], &["c"]).unwrap() - 0.2).abs() < 1e-12);
        assert!((cluster_distance(&m, &wl2, &["a", "b"], &["c"]).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(
            cluster_distance(&m, &wl2, &["a", "b"], &["c"]).unwrap(),
            cluster_distance(&m, &wl2, &["c"], &["b", "a"]).unwrap()
        );
        assert!(cluster_distance(&m, &wl, &["a"], &["a"]).is_err());
    }

    #[test]
    fn s_hat_zero_at_the_mean_and_p_smoothing() {
        let s = significance(0.5, &[0.4, 0.6]);
        assert_eq!(s.s_hat, 0.0);
        assert!((s.p_value - 2.0 / 3.0).abs() < 1e-12);
        let z = significance(0.0, &[0.0, 0.0]);
        assert!(z.s_hat_undefined);
        assert_eq!(z.s_hat, 0.0);
    }

    #[test]
    fn related_languages_are_detected() {
        let classes = b"PTSKMNRWJH";
        let mut r = rng::seeded(1);
        let proto: Vec<String> =
            (0..60).map(|_| (0..2).map(|_| classes[r.random_range(0..10)] as char).collect()).collect();
        let rows: Vec<(String, Vec<String>)> = (0..4)
            .map(|l| {
                let words = proto
                    .iter()
                    .map(|w| if r.random::<f64>() < 0.8 { w.clone() } else { (classes[r.random_range(0..10)] as char).to_string() })
                    .collect();
                (format!("L{l}"), words)
            })
            .collect();
        let refs: Vec<(&str, Vec<&str>)> = rows.iter().map(|(n, w)| (n.as_str(), w.iter().map(String::as_str).collect())).collect();
        let slices: Vec<(&str, &[&str])> = refs.iter().map(|(n, w)| (*n, w.as_slice())).collect();
        let wl = wordlist(&slices);
        let tree = run_permtest(&WordMetric::P1Dolgo, &wl, 200, 7).unwrap();
        assert_eq!(tree.merges.len(), 3);
        assert_eq!(tree.root().left.len() + tree.root().right.len(), 4);
        assert!(tree.root().s_hat > 0.3);
        assert!(tree.root().p_value < 0.01);
        assert_eq!(tree.verdict, Verdict::Related);
        let nested = tree.nested();
        assert!(nested.get("left").is_some());
        let again = run_permtest(&WordMetric::P1Dolgo, &wl, 200, 7).unwrap();
        assert_eq!(tree, again);
    }

    #[test]
    fn two_languages_single_merge() {
        let wl = wordlist(&[("a", &["K", "P", "T"]), ("b", &["K", "T", "P"])]);
        let t = run_permtest(&WordMetric::Turchin, &wl, 50, 1).unwrap();
        assert_eq!(t.merges.len(), 1);
        let s = permutation_significance(&WordMetric::Turchin, &wl, &["a"], &["b"], 50, 1).unwrap();
        assert_eq!(s.p_value, t.root().p_value);
    }

    #[test]
    fn external_table_lookup() {
        let tsv = "LANG_A\tWORD_A\tLANG_B\tWORD_B\tDIST\na\tx0\tb\ty0\t0.25\na\tx0\tb\ty1\t1\na\tx1\tb\ty0\t0.5\na\tx1\tb\ty1\t0.75\n";
        let table = ExternalTable::from_tsv(tsv.as_bytes()).unwrap();
        assert_eq!(table.get("b", "y0", "a", "x0"), Some(0.25));
        let wl = EncodedWordlist {
            languages: vec!["a".into(), "b".into()],
            concepts: vec!["c0".into(), "c1".into()],
            cells: vec![
                vec![
                    Some(EncodedWord { form: "x0".into(), classes: seq("K") }),
                    Some(EncodedWord { form: "x1".into(), classes: seq("P") }),
                ],
                vec![
                    Some(EncodedWord { form: "y0".into(), classes: seq("K") }),
                    Some(EncodedWord { form: "y1".into(), classes: seq("P") }),
                ],
            ],
        };
        let m = WordMetric::External(table);
        assert!((language_distance(&m, &wl, "a", "b").unwrap() - 0.5).abs() < 1e-7);
        let mut partial = ExternalTable::default();
        partial.insert("a", "x0", "b", "y0", 0.1).unwrap();
        assert!(matches!(
            language_distance(&WordMetric::External(partial), &wl, "a", "b"),
            Err(Error::MissingDistance { .. })
        ));
        assert!(ExternalTable::from_tsv("LANG_A\tWORD_A\n".as_bytes()).is_err());
    }

    #[test]
    fn pairwise_tsv_shape() {
        let wl = wordlist(&[("a", &["K", "P", "T"]), ("b", &["K", "T", "P"]), ("c", &["S", "T", "P"])]);
        let t = pairwise_pvalues(&WordMetric::P1Dolgo, &wl, 20, 1).unwrap();
        let mut buf = Vec::new();
        t.write_tsv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 4);
        assert!(s.lines().nth(1).unwrap().starts_with("a\t-\t"));
    }

    proptest! {
        #[test]
        fn permutations_preserve_words_and_gaps(seed in any::<u64>(), rep in 0usize..100) {
            let wl = wordlist(&[("a", &["K", "_", "TR", "S"]), ("b", &["_", "PT", "P", "MN"])]);
            let p = Prepared::new(&WordMetric::P1Dolgo, &wl).unwrap();
            let perm = p.permuted(seed, rep);
            for (l, assign) in perm.iter().enumerate() {
                let mut sorted = assign.clone();
                sorted.sort();
                prop_assert_eq!(sorted, (0..p.n_words[l]).collect::<Vec<_>>());
            }
            let d = p.matrix(&perm).unwrap();
            prop_assert!(d[0][1] >= 0.0 && d[0][1] <= 1.0);
            prop_assert_eq!(d[0][1], d[1][0]);
        }

        #[test]
        fn word_distances_symmetric_in_unit_interval(a in "[PTSK]{0,3}", b in "[PTSK]{0,3}") {
            for m in [WordMetric::P1Dolgo, WordMetric::Turchin] {
                let x = word_distance(&m, &seq(&a), &seq(&b)).unwrap();
                prop_assert_eq!(x, word_distance(&m, &seq(&b), &seq(&a)).unwrap());
                prop_assert!(x == 0.0 || x == 1.0);
            }
        }
    }
}
