//! Wordlist ingestion and preprocessing.
//!
//! A wordlist is a TSV table with one lexical form per row. Preprocessing
//! drops motivated or borrowed forms and short forms, then keeps a single
//! form per (language, concept) slot.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Read;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::soundclass::{encode_form, encode_segments, ClassAlphabet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LexFlag {
    Loan,
    Onomatopoeia,
    Nursery,
    Short,
}

impl LexFlag {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "LOAN" | "BORROWING" => Some(LexFlag::Loan),
            "ONOMATOPOEIA" | "ONOMATOPOEIC" => Some(LexFlag::Onomatopoeia),
            "NURSERY" => Some(LexFlag::Nursery),
            "SHORT" => Some(LexFlag::Short),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexEntry {
    pub language: String,
    pub concept: String,
    pub form: String,
    pub segments: Option<Vec<String>>,
    pub flags: BTreeSet<LexFlag>,
    /// Lower is more fundamental.
    pub core_rank: Option<u32>,
}

impl LexEntry {
    pub fn new(language: &str, concept: &str, form: &str) -> Self {
        LexEntry {
            language: language.to_string(),
            concept: concept.to_string(),
            form: form.to_string(),
            segments: None,
            flags: BTreeSet::new(),
            core_rank: None,
        }
    }

    pub fn with_flag(mut self, flag: LexFlag) -> Self {
        self.flags.insert(flag);
        self
    }

    pub fn with_rank(mut self, rank: u32) -> Self {
        self.core_rank = Some(rank);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wordlist {
    pub languages: Vec<String>,
    pub concepts: Vec<String>,
    pub entries: Vec<LexEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DuplicateRows {
    /// Identical (language, concept, form) rows collapse to the first one.
    #[default]
    Dedup,
    Reject,
}

#[derive(Debug, Clone, Default)]
pub struct IngestConfig {
    pub duplicates: DuplicateRows,
}

impl Wordlist {
    /// Build from entries; language and concept order follow first appearance.
    pub fn from_entries(entries: Vec<LexEntry>) -> Result<Self> {
        let mut languages = Vec::new();
        let mut concepts = Vec::new();
        let mut seen_l = HashSet::new();
        let mut seen_c = HashSet::new();
        for e in &entries {
            if e.language.is_empty() || e.concept.is_empty() || e.form.is_empty() {
                return Err(Error::Schema(
                    "language, concept and form must be non-empty".into(),
                ));
            }
            if seen_l.insert(e.language.clone()) {
                languages.push(e.language.clone());
            }
            if seen_c.insert(e.concept.clone()) {
                concepts.push(e.concept.clone());
            }
        }
        Ok(Wordlist { languages, concepts, entries })
    }

    pub fn n_languages(&self) -> usize {
        self.languages.len()
    }

    pub fn n_concepts(&self) -> usize {
        self.concepts.len()
    }

    /// Concatenate several wordlists (e.g. two families tested jointly).
    /// Concept lists are unioned in order of first appearance.
    pub fn merge(lists: &[Wordlist]) -> Result<Wordlist> {
        let mut languages = Vec::new();
        let mut concepts = Vec::new();
        let mut seen_l = HashSet::new();
        let mut seen_c = HashSet::new();
        let mut entries = Vec::new();
        for wl in lists {
            for l in &wl.languages {
                if !seen_l.insert(l.clone()) {
                    return Err(Error::Schema(format!("language {l:?} occurs in two wordlists")));
                }
                languages.push(l.clone());
            }
            for c in &wl.concepts {
                if seen_c.insert(c.clone()) {
                    concepts.push(c.clone());
                }
            }
            entries.extend(wl.entries.iter().cloned());
        }
        Ok(Wordlist { languages, concepts, entries })
    }

    /// Number of entries per (language, concept).
    pub fn slot_counts(&self) -> HashMap<(&str, &str), usize> {
        let mut m = HashMap::new();
        for e in &self.entries {
            *m.entry((e.language.as_str(), e.concept.as_str())).or_insert(0) += 1;
        }
        m
    }
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

pub fn parse_wordlist<R: Read>(source: R, config: &IngestConfig) -> Result<Wordlist> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .has_headers(true)
        .flexible(false)
        .from_reader(source);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(parse_err(1, e.to_string())),
    };
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(Error::EmptyInput);
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().trim_start_matches('\u{feff}').eq_ignore_ascii_case(name))
    };
    let required = |name: &str| {
        find(name).ok_or_else(|| Error::Schema(format!("missing mandatory column {name}")))
    };
    let lang_col = required("LANGUAGE")?;
    let concept_col = required("CONCEPT")?;
    let form_col = required("FORM")?;
    let seg_col = find("SEGMENTS");
    let loan_col = find("LOAN");
    let tag_col = find("TAG");
    let rank_col = find("CORE_RANK");

    let mut entries: Vec<LexEntry> = Vec::new();
    let mut seen: HashSet<(String, String, String)> = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            parse_err(e.position().map(|p| p.line()).unwrap_or(0), e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let language = field(lang_col);
        let concept = field(concept_col);
        let form = field(form_col);
        if language.is_empty() || concept.is_empty() || form.is_empty() {
            return Err(parse_err(line, "empty LANGUAGE, CONCEPT or FORM"));
        }
        let mut entry = LexEntry::new(language, concept, form);
        if let Some(c) = seg_col {
            let segs: Vec<String> = field(c).split_whitespace().map(str::to_string).collect();
            if !segs.is_empty() {
                entry.segments = Some(segs);
            }
        }
        if let Some(c) = loan_col {
            match field(c) {
                "" | "0" => {}
                "1" => {
                    entry.flags.insert(LexFlag::Loan);
                }
                other => return Err(parse_err(line, format!("LOAN must be 0 or 1, got {other:?}"))),
            }
        }
        if let Some(c) = tag_col {
            for tag in field(c).split(',').map(str::trim).filter(|t| !t.is_empty()) {
                let flag = LexFlag::parse(tag)
                    .ok_or_else(|| parse_err(line, format!("unknown tag {tag:?}")))?;
                entry.flags.insert(flag);
            }
        }
        if let Some(c) = rank_col {
            let raw = field(c);
            if !raw.is_empty() {
                let rank = raw
                    .parse::<u32>()
                    .map_err(|_| parse_err(line, format!("CORE_RANK must be a non-negative integer, got {raw:?}")))?;
                entry.core_rank = Some(rank);
            }
        }
        let key = (entry.language.clone(), entry.concept.clone(), entry.form.clone());
        if !seen.insert(key) {
            match config.duplicates {
                DuplicateRows::Dedup => continue,
                DuplicateRows::Reject => {
                    return Err(parse_err(
                        line,
                        format!("duplicate row ({}, {}, {})", entry.language, entry.concept, entry.form),
                    ))
                }
            }
        }
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(Error::EmptyInput);
    }
    // Ranks must be unique within a slot.
    let mut ranks: HashSet<(&str, &str, u32)> = HashSet::new();
    for e in &entries {
        if let Some(r) = e.core_rank {
            if !ranks.insert((&e.language, &e.concept, r)) {
                return Err(Error::Schema(format!(
                    "CORE_RANK {r} repeated in slot ({}, {})",
                    e.language, e.concept
                )));
            }
        }
    }
    Wordlist::from_entries(entries)
}

#[derive(Debug, Clone)]
pub struct FilterPolicy {
    pub drop_loans: bool,
    pub drop_onomatopoeia: bool,
    pub drop_nursery: bool,
    /// Drop entries explicitly tagged SHORT.
    pub drop_short_tagged: bool,
    /// Entries with fewer consonant classes than this are removed (0 disables).
    pub min_consonants: usize,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        FilterPolicy {
            drop_loans: true,
            drop_onomatopoeia: true,
            drop_nursery: true,
            drop_short_tagged: true,
            min_consonants: 2,
        }
    }
}

impl FilterPolicy {
    pub fn keep_all() -> Self {
        FilterPolicy {
            drop_loans: false,
            drop_onomatopoeia: false,
            drop_nursery: false,
            drop_short_tagged: false,
            min_consonants: 0,
        }
    }

    fn drops_flag(&self, flag: LexFlag) -> bool {
        match flag {
            LexFlag::Loan => self.drop_loans,
            LexFlag::Onomatopoeia => self.drop_onomatopoeia,
            LexFlag::Nursery => self.drop_nursery,
            LexFlag::Short => self.drop_short_tagged,
        }
    }
}

/// Remove excluded entries. Language and concept lists are kept intact so
/// that emptied slots surface later as gaps. Entries whose encoding fails
/// are kept; the failure is reported when the matrix is built.
pub fn filter_forms(wl: &Wordlist, policy: &FilterPolicy, alphabet: &ClassAlphabet) -> Wordlist {
    let entries = wl
        .entries
        .iter()
        .filter(|e| !e.flags.iter().any(|&f| policy.drops_flag(f)))
        .filter(|e| {
            if policy.min_consonants == 0 {
                return true;
            }
            let enc = match &e.segments {
                Some(s) => encode_segments(s, &e.form, alphabet),
                None => encode_form(&e.form, alphabet),
            };
            match enc {
                Ok(seq) => seq.len() >= policy.min_consonants,
                Err(_) => true,
            }
        })
        .cloned()
        .collect();
    Wordlist {
        languages: wl.languages.clone(),
        concepts: wl.concepts.clone(),
        entries,
    }
}

/// Keep one entry per slot: the lowest core rank wins, ranked entries beat
/// unranked ones, and remaining ties are broken by a draw keyed on
/// (seed, language, concept).
pub fn select_core_form(wl: &Wordlist, seed: u64) -> Wordlist {
    let mut slots: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    let lang_idx: HashMap<&str, usize> =
        wl.languages.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let concept_idx: HashMap<&str, usize> =
        wl.concepts.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    for (i, e) in wl.entries.iter().enumerate() {
        let li = lang_idx.get(e.language.as_str()).copied().unwrap_or(usize::MAX);
        let ci = concept_idx.get(e.concept.as_str()).copied().unwrap_or(usize::MAX);
        slots.entry((li, ci)).or_default().push(i);
    }
    let mut keep = Vec::with_capacity(slots.len());
    for ((li, ci), idxs) in slots {
        if idxs.len() == 1 {
            keep.push(idxs[0]);
            continue;
        }
        let best_rank = idxs.iter().map(|&i| wl.entries[i].core_rank.unwrap_or(u32::MAX)).min().unwrap();
        let mut tied: Vec<usize> = idxs
            .into_iter()
            .filter(|&i| wl.entries[i].core_rank.unwrap_or(u32::MAX) == best_rank)
            .collect();
        // Order candidates by content so the draw does not depend on row order.
        tied.sort_by(|&a, &b| wl.entries[a].form.cmp(&wl.entries[b].form).then(a.cmp(&b)));
        let pick = if tied.len() == 1 {
            tied[0]
        } else {
            let key = rng::hash_str(&wl.languages[li]) ^ rng::mix64(rng::hash_str(&wl.concepts[ci]));
            let mut r = rng::substream(seed, key);
            tied[r.random_range(0..tied.len())]
        };
        keep.push(pick);
    }
    keep.sort_unstable();
    Wordlist {
        languages: wl.languages.clone(),
        concepts: wl.concepts.clone(),
        entries: keep.into_iter().map(|i| wl.entries[i].clone()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Wordlist> {
        parse_wordlist(s.as_bytes(), &IngestConfig::default())
    }

    #[test]
    fn parses_minimal_table() {
        let wl = parse("LANGUAGE\tCONCEPT\tFORM\nLatin\thorn\tcornu\nEnglish\thorn\thorn\n").unwrap();
        assert_eq!(wl.n_languages(), 2);
        assert_eq!(wl.n_concepts(), 1);
        assert_eq!(wl.entries.len(), 2);
        assert_eq!(wl.languages, ["Latin", "English"]);
    }

    #[test]
    fn accepts_crlf_and_optional_columns() {
        let src = "LANGUAGE\tCONCEPT\tFORM\tLOAN\tTAG\tCORE_RANK\tSEGMENTS\r\n\
                   A\tx\tpata\t1\tnursery\t0\tp a t a\r\n\
                   B\tx\tkata\t0\t\t\t\r\n";
        let wl = parse(src).unwrap();
        let a = &wl.entries[0];
        assert!(a.flags.contains(&LexFlag::Loan));
        assert!(a.flags.contains(&LexFlag::Nursery));
        assert_eq!(a.core_rank, Some(0));
        assert_eq!(a.segments.as_deref().unwrap(), ["p", "a", "t", "a"]);
        assert!(wl.entries[1].flags.is_empty());
        assert_eq!(wl.entries[1].segments, None);
    }

    #[test]
    fn missing_form_column_is_schema_error() {
        assert!(matches!(
            parse("LANGUAGE\tCONCEPT\nA\tx\n"),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(parse(""), Err(Error::EmptyInput)));
        assert!(matches!(parse("LANGUAGE\tCONCEPT\tFORM\n"), Err(Error::EmptyInput)));
    }

    #[test]
    fn ragged_row_reports_line() {
        match parse("LANGUAGE\tCONCEPT\tFORM\nA\tx\tpa\nB\ty\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_rows() {
        let src = "LANGUAGE\tCONCEPT\tFORM\nA\tx\tpa\nA\tx\tpa\nA\tx\tta\n";
        let wl = parse(src).unwrap();
        assert_eq!(wl.entries.len(), 2);
        let strict = IngestConfig { duplicates: DuplicateRows::Reject };
        assert!(matches!(
            parse_wordlist(src.as_bytes(), &strict),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn repeated_core_rank_rejected() {
        let src = "LANGUAGE\tCONCEPT\tFORM\tCORE_RANK\nA\tx\tpa\t0\nA\tx\tta\t0\n";
        assert!(matches!(parse(src), Err(Error::Schema(_))));
    }

    fn sample() -> Wordlist {
        Wordlist::from_entries(vec![
            LexEntry::new("A", "dull", "dull").with_rank(0),
            LexEntry::new("A", "dull", "unsharp").with_rank(1),
            LexEntry::new("A", "horn", "horn"),
            LexEntry::new("B", "horn", "kornu").with_flag(LexFlag::Loan),
            LexEntry::new("B", "dull", "tupa"),
            LexEntry::new("B", "dull", "kasa"),
            LexEntry::new("B", "sky", "ka"),
        ])
        .unwrap()
    }

    #[test]
    fn filter_drops_flags_and_short_forms() {
        let a = ClassAlphabet::dolgopolsky();
        let wl = sample();
        let out = filter_forms(&wl, &FilterPolicy::default(), &a);
        assert!(!out.entries.iter().any(|e| e.form == "kornu"));
        assert!(!out.entries.iter().any(|e| e.form == "ka"));
        assert_eq!(out.languages, wl.languages);
        assert_eq!(out.concepts, wl.concepts);
        let identity = filter_forms(&wl, &FilterPolicy::keep_all(), &a);
        assert_eq!(identity, wl);
    }

    #[test]
    fn core_form_prefers_lowest_rank() {
        let out = select_core_form(&sample(), 1);
        let dull_a: Vec<_> = out
            .entries
            .iter()
            .filter(|e| e.language == "A" && e.concept == "dull")
            .collect();
        assert_eq!(dull_a.len(), 1);
        assert_eq!(dull_a[0].form, "dull");
        assert!(out.entries.iter().any(|e| e.form == "horn"));
    }

    #[test]
    fn core_form_is_seeded_and_idempotent() {
        let wl = sample();
        let a = select_core_form(&wl, 1);
        let b = select_core_form(&wl, 1);
        assert_eq!(a, b);
        assert_eq!(select_core_form(&a, 1), a);
        assert!(a.slot_counts().values().all(|&n| n == 1));
    }

    #[test]
    fn merge_unions_concepts() {
        let x = Wordlist::from_entries(vec![LexEntry::new("A", "c1", "pa")]).unwrap();
        let y = Wordlist::from_entries(vec![
            LexEntry::new("B", "c2", "ta"),
            LexEntry::new("B", "c1", "ka"),
        ])
        .unwrap();
        let m = Wordlist::merge(&[x.clone(), y]).unwrap();
        assert_eq!(m.languages, ["A", "B"]);
        assert_eq!(m.concepts, ["c1", "c2"]);
        assert!(Wordlist::merge(&[x.clone(), x]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn filter_output_is_subset(mask in proptest::collection::vec(proptest::bool::ANY, 4), minc in 0usize..4) {
            let a = ClassAlphabet::dolgopolsky();
            let wl = sample();
            let policy = FilterPolicy {
                drop_loans: mask[0],
                drop_onomatopoeia: mask[1],
                drop_nursery: mask[2],
                drop_short_tagged: mask[3],
                min_consonants: minc,
            };
            let out = filter_forms(&wl, &policy, &a);
            for e in &out.entries {
                proptest::prop_assert!(wl.entries.contains(e));
            }
        }

        #[test]
        fn selection_leaves_one_per_slot(seed in 0u64..1000) {
            let out = select_core_form(&sample(), seed);
            proptest::prop_assert!(out.slot_counts().values().all(|&n| n == 1));
            proptest::prop_assert_eq!(select_core_form(&out, seed), out);
        }
    }
}
