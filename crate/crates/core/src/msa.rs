//! Per-concept multiple alignment of consonant-class sequences and the
//! concatenated character matrix.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::average_linkage;
use crate::error::{Error, Result};
use crate::lexdata::Wordlist;
use crate::soundclass::{ClassAlphabet, ClassSequence, EncodedWordlist, GAP};

/// Linear or affine gap scoring. A gap run of length `L` costs
/// `gap_open + (L - 1) * gap_extend`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignScoring {
    pub match_score: f64,
    pub mismatch: f64,
    pub gap_open: f64,
    pub gap_extend: f64,
}

impl Default for AlignScoring {
    fn default() -> Self {
        AlignScoring { match_score: 2.0, mismatch: -1.0, gap_open: -2.0, gap_extend: -2.0 }
    }
}

impl AlignScoring {
    fn substitution(&self, a: u8, b: u8) -> f64 {
        if a == b {
            self.match_score
        } else {
            self.mismatch
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseAlignment {
    pub a: Vec<u8>,
    pub b: Vec<u8>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptAlignment {
    pub concept: String,
    pub rows: Vec<Vec<u8>>,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptBlock {
    pub concept: String,
    pub start: usize,
    pub end: usize,
}

/// Taxa × sites grid of class symbols and gaps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterMatrix {
    pub taxa: Vec<String>,
    pub rows: Vec<Vec<u8>>,
    pub concept_bounds: Vec<ConceptBlock>,
}

/// Multiple alignment profile: member row indices and their aligned rows.
struct Profile {
    members: Vec<usize>,
    rows: Vec<Vec<u8>>,
}

impl Profile {
    fn width(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    fn column_score(&self, other: &Profile, x: usize, y: usize, scoring: &AlignScoring) -> f64 {
        let mut s = 0.0;
        for ra in &self.rows {
            let a = ra[x];
            if a == GAP {
                continue;
            }
            for rb in &other.rows {
                let b = rb[y];
                if b != GAP {
                    s += scoring.substitution(a, b);
                }
            }
        }
        s / (self.rows.len() * other.rows.len()) as f64
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum State {
    Diag,
    Up,
    Left,
}

/// Gotoh global alignment of two profiles. Returns the column pairing
/// (`None` = gap column inserted on that side) and the score.
fn align_profiles(
    pa: &Profile,
    pb: &Profile,
    scoring: &AlignScoring,
) -> (Vec<(Option<usize>, Option<usize>)>, f64) {
    let (la, lb) = (pa.width(), pb.width());
    let ninf = f64::NEG_INFINITY;
    let idx = |i: usize, j: usize| i * (lb + 1) + j;
    let size = (la + 1) * (lb + 1);
    let mut m = vec![ninf; size];
    let mut x = vec![ninf; size]; // a_i against a gap
    let mut y = vec![ninf; size]; // gap against b_j
    m[idx(0, 0)] = 0.0;
    for i in 1..=la {
        x[idx(i, 0)] = scoring.gap_open + (i - 1) as f64 * scoring.gap_extend;
    }
    for j in 1..=lb {
        y[idx(0, j)] = scoring.gap_open + (j - 1) as f64 * scoring.gap_extend;
    }
    for i in 1..=la {
        for j in 1..=lb {
            let d = idx(i - 1, j - 1);
            m[idx(i, j)] = pa.column_score(pb, i - 1, j - 1, scoring) + m[d].max(x[d]).max(y[d]);
            let u = idx(i - 1, j);
            x[idx(i, j)] = (m[u] + scoring.gap_open)
                .max(x[u] + scoring.gap_extend)
                .max(y[u] + scoring.gap_open);
            let l = idx(i, j - 1);
            y[idx(i, j)] = (m[l] + scoring.gap_open)
                .max(y[l] + scoring.gap_extend)
                .max(x[l] + scoring.gap_open);
        }
    }
    // Preference order on ties: diagonal, up, left.
    let pick = |cands: [(State, f64); 3]| -> (State, f64) {
        let mut best = cands[0];
        for c in &cands[1..] {
            if c.1 > best.1 {
                best = *c;
            }
        }
        best
    };
    let end = idx(la, lb);
    let (mut state, score) = pick([(State::Diag, m[end]), (State::Up, x[end]), (State::Left, y[end])]);
    let (mut i, mut j) = (la, lb);
    let mut path = Vec::with_capacity(la + lb);
    while i > 0 || j > 0 {
        match state {
            State::Diag => {
                path.push((Some(i - 1), Some(j - 1)));
                let d = idx(i - 1, j - 1);
                i -= 1;
                j -= 1;
                if i == 0 && j == 0 {
                    break;
                }
                state = pick([(State::Diag, m[d]), (State::Up, x[d]), (State::Left, y[d])]).0;
            }
            State::Up => {
                path.push((Some(i - 1), None));
                let u = idx(i - 1, j);
                i -= 1;
                if i == 0 && j == 0 {
                    break;
                }
                state = pick([
                    (State::Diag, m[u] + scoring.gap_open),
                    (State::Up, x[u] + scoring.gap_extend),
                    (State::Left, y[u] + scoring.gap_open),
                ])
                .0;
            }
            State::Left => {
                path.push((None, Some(j - 1)));
                let l = idx(i, j - 1);
                j -= 1;
                if i == 0 && j == 0 {
                    break;
                }
                state = pick([
                    (State::Diag, m[l] + scoring.gap_open),
                    (State::Up, x[l] + scoring.gap_open),
                    (State::Left, y[l] + scoring.gap_extend),
                ])
                .0;
            }
        }
    }
    path.reverse();
    (path, score)
}

fn merge_profiles(pa: Profile, pb: Profile, scoring: &AlignScoring) -> Profile {
    let (path, _) = align_profiles(&pa, &pb, scoring);
    let render = |p: &Profile, pick: &dyn Fn(&(Option<usize>, Option<usize>)) -> Option<usize>| {
        p.rows
            .iter()
            .map(|row| path.iter().map(|step| pick(step).map_or(GAP, |c| row[c])).collect())
            .collect::<Vec<Vec<u8>>>()
    };
    let mut rows = render(&pa, &|s| s.0);
    rows.extend(render(&pb, &|s| s.1));
    let mut members = pa.members;
    members.extend(pb.members);
    Profile { members, rows }
}

fn single(i: usize, seq: &ClassSequence) -> Profile {
    Profile { members: vec![i], rows: vec![seq.0.clone()] }
}

/// Global alignment of two class sequences.
pub fn pairwise_align(a: &ClassSequence, b: &ClassSequence, scoring: &AlignScoring) -> PairwiseAlignment {
    let pa = single(0, a);
    let pb = single(1, b);
    let (path, score) = align_profiles(&pa, &pb, scoring);
    PairwiseAlignment {
        a: path.iter().map(|s| s.0.map_or(GAP, |c| a.0[c])).collect(),
        b: path.iter().map(|s| s.1.map_or(GAP, |c| b.0[c])).collect(),
        score,
    }
}

/// Progressive alignment of one concept. Empty sequences stand for missing
/// slots and become all-gap rows. Returns `None` when every slot is empty.
pub fn progressive_align(
    concept: &str,
    seqs: &[ClassSequence],
    scoring: &AlignScoring,
) -> Result<Option<ConceptAlignment>> {
    if seqs.len() < 2 {
        return Err(Error::InsufficientTaxa(format!(
            "alignment needs at least 2 rows, got {}",
            seqs.len()
        )));
    }
    let present: Vec<usize> = (0..seqs.len()).filter(|&i| !seqs[i].is_empty()).collect();
    if present.is_empty() {
        return Ok(None);
    }
    let mut profiles: Vec<Option<Profile>> = present.iter().map(|&i| Some(single(i, &seqs[i]))).collect();
    if present.len() > 1 {
        let n = present.len();
        let mut dist = vec![vec![0.0; n]; n];
        for a in 0..n {
            for b in a + 1..n {
                let (sa, sb) = (&seqs[present[a]], &seqs[present[b]]);
                let aln = pairwise_align(sa, sb, scoring);
                let max = scoring.match_score * sa.len().max(sb.len()) as f64;
                let d = if max > 0.0 { 1.0 - aln.score / max } else { 0.0 };
                dist[a][b] = d;
                dist[b][a] = d;
            }
        }
        for merge in average_linkage(&dist) {
            let left = profiles[merge.left_id].take().expect("guide tree uses each cluster once");
            let right = profiles[merge.right_id].take().expect("guide tree uses each cluster once");
            profiles.push(Some(merge_profiles(left, right, scoring)));
        }
    }
    let root = profiles.into_iter().rev().flatten().next().expect("one profile remains");
    let width = root.width();
    let mut rows = vec![vec![GAP; width]; seqs.len()];
    for (member, row) in root.members.iter().zip(root.rows) {
        rows[*member] = row;
    }
    let keep: Vec<usize> = (0..width).filter(|&c| rows.iter().any(|r| r[c] != GAP)).collect();
    if keep.len() != width {
        for r in rows.iter_mut() {
            *r = keep.iter().map(|&c| r[c]).collect();
        }
    }
    Ok(Some(ConceptAlignment { concept: concept.to_string(), width: keep.len(), rows }))
}

/// Align every concept of an encoded wordlist, in concept order. Concepts
/// with no data at all come back as `None`.
pub fn align_concepts(
    enc: &EncodedWordlist,
    scoring: &AlignScoring,
) -> Result<Vec<(String, Option<ConceptAlignment>)>> {
    (0..enc.n_concepts())
        .into_par_iter()
        .map(|c| {
            let seqs: Vec<ClassSequence> = enc
                .cells
                .iter()
                .map(|row| row[c].as_ref().map(|w| w.classes.clone()).unwrap_or_default())
                .collect();
            let concept = &enc.concepts[c];
            Ok((concept.clone(), progressive_align(concept, &seqs, scoring)?))
        })
        .collect()
}

pub fn build_character_matrix(
    wl: &Wordlist,
    alphabet: &ClassAlphabet,
    scoring: &AlignScoring,
) -> Result<CharacterMatrix> {
    let enc = EncodedWordlist::encode(wl, alphabet)?;
    let informative = enc
        .cells
        .iter()
        .filter(|row| row.iter().flatten().any(|w| !w.classes.is_empty()))
        .count();
    if informative < 2 {
        return Err(Error::InsufficientTaxa(format!(
            "{informative} language(s) with encodable data, need at least 2"
        )));
    }
    let aligned = align_concepts(&enc, scoring)?;
    CharacterMatrix::concatenate(enc.languages.clone(), aligned.into_iter().filter_map(|(_, a)| a))
}

impl CharacterMatrix {
    pub fn new(taxa: Vec<String>, rows: Vec<Vec<u8>>) -> Result<Self> {
        if taxa.len() != rows.len() {
            return Err(Error::ShapeMismatch(format!("{} taxa but {} rows", taxa.len(), rows.len())));
        }
        if let Some(first) = rows.first() {
            if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != first.len()) {
                return Err(Error::ShapeMismatch(format!(
                    "row {} ({}) has length {}, expected {}",
                    i,
                    taxa[i],
                    r.len(),
                    first.len()
                )));
            }
        }
        let width = rows.first().map_or(0, Vec::len);
        Ok(CharacterMatrix {
            taxa,
            rows,
            concept_bounds: vec![ConceptBlock { concept: "all".into(), start: 0, end: width }],
        })
    }

    /// Concatenate concept alignments column-wise.
    pub fn concatenate(
        taxa: Vec<String>,
        blocks: impl IntoIterator<Item = ConceptAlignment>,
    ) -> Result<Self> {
        let mut rows = vec![Vec::new(); taxa.len()];
        let mut bounds = Vec::new();
        for block in blocks {
            if block.rows.len() != taxa.len() {
                return Err(Error::ShapeMismatch(format!(
                    "concept {} has {} rows, expected {}",
                    block.concept,
                    block.rows.len(),
                    taxa.len()
                )));
            }
            let start = rows[0].len();
            for (r, b) in rows.iter_mut().zip(&block.rows) {
                r.extend_from_slice(b);
            }
            bounds.push(ConceptBlock { concept: block.concept, start, end: start + block.width });
        }
        if bounds.is_empty() {
            return Err(Error::InsufficientTaxa("no concept has any data".into()));
        }
        Ok(CharacterMatrix { taxa, rows, concept_bounds: bounds })
    }

    pub fn n_taxa(&self) -> usize {
        self.taxa.len()
    }

    pub fn n_sites(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn column(&self, site: usize) -> impl Iterator<Item = u8> + '_ {
        self.rows.iter().map(move |r| r[site])
    }

    pub fn is_gap(&self, taxon: usize, site: usize) -> bool {
        self.rows[taxon][site] == GAP
    }

    /// Non-gap symbol counts over the whole matrix, indexed by byte.
    pub fn symbol_counts(&self) -> [u64; 256] {
        let mut counts = [0u64; 256];
        for r in &self.rows {
            for &b in r {
                if b != GAP {
                    counts[b as usize] += 1;
                }
            }
        }
        counts
    }

    pub fn taxon_index(&self, name: &str) -> Option<usize> {
        self.taxa.iter().position(|t| t == name)
    }

    /// Relaxed sequential PHYLIP: `m N` header, then `name<space>row`.
    /// Whitespace inside names becomes `_`.
    pub fn to_phylip(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.n_taxa(), self.n_sites());
        let width = self.taxa.iter().map(|t| t.chars().count()).max().unwrap_or(0);
        for (t, r) in self.taxa.iter().zip(&self.rows) {
            let name: String = t.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect();
            let _ = writeln!(out, "{name:<width$} {}", String::from_utf8_lossy(r));
        }
        out
    }

    pub fn to_fasta(&self) -> String {
        let mut out = String::new();
        for (t, r) in self.taxa.iter().zip(&self.rows) {
            let _ = writeln!(out, ">{t}\n{}", String::from_utf8_lossy(r));
        }
        out
    }

    pub fn from_phylip(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).peekable();
        let mut declared: Option<(usize, usize)> = None;
        if let Some((_, first)) = lines.peek() {
            let parts: Vec<&str> = first.split_whitespace().collect();
            if parts.len() == 2 {
                if let (Ok(m), Ok(n)) = (parts[0].parse(), parts[1].parse()) {
                    declared = Some((m, n));
                    lines.next();
                }
            }
        }
        let mut taxa = Vec::new();
        let mut rows = Vec::new();
        for (i, line) in lines {
            let mut parts = line.split_whitespace();
            let (Some(name), Some(row), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Parse { line: i as u64 + 1, message: "expected `name row`".into() });
            };
            taxa.push(name.to_string());
            rows.push(row.as_bytes().to_vec());
        }
        let m = CharacterMatrix::new(taxa, rows)?;
        if let Some((dm, dn)) = declared {
            if dm != m.n_taxa() || dn != m.n_sites() {
                return Err(Error::ShapeMismatch(format!(
                    "header declares {dm}x{dn}, body is {}x{}",
                    m.n_taxa(),
                    m.n_sites()
                )));
            }
        }
        if m.n_taxa() == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(m)
    }

    pub fn from_fasta(text: &str) -> Result<Self> {
        let mut taxa = Vec::new();
        let mut rows: Vec<Vec<u8>> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if let Some(name) = line.strip_prefix('>') {
                taxa.push(name.trim().to_string());
                rows.push(Vec::new());
            } else if !line.is_empty() {
                let Some(r) = rows.last_mut() else {
                    return Err(Error::Parse { line: i as u64 + 1, message: "sequence before header".into() });
                };
                r.extend(line.bytes().filter(|b| !b.is_ascii_whitespace()));
            }
        }
        if taxa.is_empty() {
            return Err(Error::EmptyInput);
        }
        CharacterMatrix::new(taxa, rows)
    }

    /// FASTA if the first non-blank line starts with `>`, PHYLIP otherwise.
    pub fn parse(text: &str) -> Result<Self> {
        match text.lines().find(|l| !l.trim().is_empty()) {
            None => Err(Error::EmptyInput),
            Some(l) if l.starts_with('>') => Self::from_fasta(text),
            Some(_) => Self::from_phylip(text),
        }
    }
}
