//! Consonant sound classes.
//!
//! Forms are segmented against a segment table, every segment is mapped to
//! one consonant class or to the vowel marker, and vowels are dropped. The
//! shipped table uses the ten Dolgopolsky-style classes
//! `P T S K M N R W J H`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexdata::Wordlist;

pub const GAP: u8 = b'-';

const DEFAULT_TABLE: &str = include_str!("../data/dolgopolsky.tsv");

/// The ten default classes in canonical order.
pub const DOLGO_CLASSES: [u8; 10] = *b"PTSKMNRWJH";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentClass {
    Consonant(u8),
    Vowel,
}

/// Segment table plus the ordered set of class symbols.
#[derive(Debug, Clone)]
pub struct ClassAlphabet {
    classes: Vec<u8>,
    segment_map: HashMap<String, SegmentClass>,
    max_key_chars: usize,
}

/// Consonant classes of one word, vowels removed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassSequence(pub Vec<u8>);

impl ClassSequence {
    pub fn new(symbols: Vec<u8>) -> Self {
        ClassSequence(symbols)
    }

    pub fn from_str_symbols(s: &str) -> Self {
        ClassSequence(s.bytes().filter(|b| !b.is_ascii_whitespace()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Display for ClassSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, &b) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}", b as char)?;
        }
        Ok(())
    }
}

/// Combining marks and modifier letters attach to the preceding segment.
fn is_modifier(c: char) -> bool {
    matches!(c as u32,
        0x0300..=0x036F | 0x1AB0..=0x1AFF | 0x1DC0..=0x1DFF | 0x20D0..=0x20FF | 0xFE20..=0xFE2F)
        || matches!(
            c,
            'ʰ' | 'ʱ' | 'ʲ' | 'ʷ' | 'ˠ' | 'ˤ' | 'ː' | 'ˑ' | 'ʼ' | 'ˀ' | 'ⁿ' | 'ˡ' | '̚' | '~'
        )
}

/// Boundary and prosodic marks carry no segmental content and are skipped.
fn is_ignorable(c: char) -> bool {
    c.is_whitespace()
        || matches!(
            c,
            '-' | '.' | 'ˈ' | 'ˌ' | '_' | '+' | '#' | '(' | ')' | '*' | '‿' | '͡' | '=' | '|' | '/'
        )
}

impl ClassAlphabet {
    /// The built-in ten-class table.
    pub fn dolgopolsky() -> Self {
        Self::from_tsv(DEFAULT_TABLE.as_bytes()).expect("built-in sound-class table is valid")
    }

    /// Load a `SEGMENT<TAB>CLASS` table; `V` marks vowels.
    pub fn from_tsv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .quoting(false)
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
            .clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::Schema(format!("mapping file lacks {name} column")))
        };
        let seg_col = col("SEGMENT")?;
        let class_col = col("CLASS")?;
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let seg = rec.get(seg_col).unwrap_or("").trim();
            let class = rec.get(class_col).unwrap_or("").trim();
            if seg.is_empty() {
                return Err(Error::Parse { line, message: "empty segment".into() });
            }
            let mapped = match class {
                "V" | "v" => SegmentClass::Vowel,
                c if c.len() == 1 && c.as_bytes()[0].is_ascii_graphic() => {
                    SegmentClass::Consonant(c.as_bytes()[0])
                }
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("invalid class {other:?}"),
                    })
                }
            };
            entries.push((seg.to_lowercase(), mapped));
        }
        let used: BTreeSet<u8> = entries
            .iter()
            .filter_map(|(_, c)| match c {
                SegmentClass::Consonant(b) => Some(*b),
                SegmentClass::Vowel => None,
            })
            .collect();
        // Canonical ordering: the default classes first in their usual order,
        // then any custom symbols sorted.
        let mut classes: Vec<u8> = DOLGO_CLASSES.iter().copied().filter(|c| used.contains(c)).collect();
        classes.extend(used.iter().copied().filter(|c| !DOLGO_CLASSES.contains(c)));
        Self::new(classes, entries)
    }

    pub fn new(classes: Vec<u8>, entries: Vec<(String, SegmentClass)>) -> Result<Self> {
        let distinct: BTreeSet<u8> = classes.iter().copied().collect();
        if distinct.len() != classes.len() {
            return Err(Error::Alphabet("duplicate class symbols".into()));
        }
        if distinct.contains(&GAP) {
            return Err(Error::Alphabet("gap symbol '-' used as a class".into()));
        }
        if distinct.contains(&b'V') {
            return Err(Error::Alphabet("'V' is reserved for vowels".into()));
        }
        let mut segment_map = HashMap::with_capacity(entries.len());
        for (seg, class) in entries {
            if let SegmentClass::Consonant(c) = class {
                if !distinct.contains(&c) {
                    return Err(Error::Alphabet(format!(
                        "segment {seg:?} maps to unknown class {:?}",
                        c as char
                    )));
                }
            }
            if segment_map.insert(seg.clone(), class).is_some_and(|prev| prev != class) {
                return Err(Error::Alphabet(format!("segment {seg:?} mapped twice")));
            }
        }
        let max_key_chars = segment_map.keys().map(|k| k.chars().count()).max().unwrap_or(1);
        Ok(ClassAlphabet { classes, segment_map, max_key_chars })
    }

    pub fn classes(&self) -> &[u8] {
        &self.classes
    }

    pub fn lookup(&self, segment: &str) -> Option<SegmentClass> {
        self.segment_map.get(segment).copied()
    }

    pub fn segments(&self) -> impl Iterator<Item = (&str, SegmentClass)> {
        self.segment_map.iter().map(|(k, v)| (k.as_str(), *v))
    }

    fn resolve(&self, segment: &str) -> Option<SegmentClass> {
        self.lookup(segment).or_else(|| {
            let base: String = segment.chars().filter(|&c| !is_modifier(c)).collect();
            if base.is_empty() {
                None
            } else {
                self.lookup(&base)
            }
        })
    }
}

/// Greedy longest-match segmentation.
pub fn tokenize_form(form: &str, alphabet: &ClassAlphabet) -> Result<Vec<String>> {
    if form.is_empty() {
        return Err(Error::domain("cannot tokenize an empty form"));
    }
    let chars: Vec<char> = form.to_lowercase().chars().collect();
    let mut out: Vec<String> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if is_ignorable(c) {
            i += 1;
            continue;
        }
        if is_modifier(c) {
            match out.last_mut() {
                Some(prev) => prev.push(c),
                None => out.push(c.to_string()),
            }
            i += 1;
            continue;
        }
        let max = alphabet.max_key_chars.min(chars.len() - i);
        let mut taken = 1;
        for len in (1..=max).rev() {
            let cand: String = chars[i..i + len].iter().collect();
            if alphabet.segment_map.contains_key(&cand) {
                taken = len;
                break;
            }
        }
        out.push(chars[i..i + taken].iter().collect());
        i += taken;
    }
    Ok(out)
}

/// Map an already segmented word to its consonant classes.
pub fn encode_segments<S: AsRef<str>>(
    segments: &[S],
    form: &str,
    alphabet: &ClassAlphabet,
) -> Result<ClassSequence> {
    let mut out = Vec::with_capacity(segments.len());
    for seg in segments {
        let seg = seg.as_ref();
        let lowered = seg.to_lowercase();
        if lowered.chars().all(is_ignorable) {
            continue;
        }
        match alphabet.resolve(&lowered) {
            Some(SegmentClass::Consonant(c)) => out.push(c),
            Some(SegmentClass::Vowel) => {}
            None => {
                return Err(Error::UnknownSegment {
                    segment: seg.to_string(),
                    form: form.to_string(),
                })
            }
        }
    }
    Ok(ClassSequence(out))
}

pub fn encode_form(form: &str, alphabet: &ClassAlphabet) -> Result<ClassSequence> {
    let segments = tokenize_form(form, alphabet)?;
    encode_segments(&segments, form, alphabet)
}

/// Replace `J` by `I` so the sequence fits the amino-acid alphabet.
pub fn export_extended_alphabet(seq: &ClassSequence) -> ClassSequence {
    ClassSequence(seq.0.iter().map(|&b| if b == b'J' { b'I' } else { b }).collect())
}

/// A word together with its encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedWord {
    pub form: String,
    pub classes: ClassSequence,
}

/// Languages × concepts grid of encoded words (`None` = missing slot).
#[derive(Debug, Clone)]
pub struct EncodedWordlist {
    pub languages: Vec<String>,
    pub concepts: Vec<String>,
    pub cells: Vec<Vec<Option<EncodedWord>>>,
}

impl EncodedWordlist {
    /// Encode a preprocessed wordlist. Slots holding more than one entry
    /// are rejected; run core-form selection first.
    pub fn encode(wl: &Wordlist, alphabet: &ClassAlphabet) -> Result<Self> {
        let lang_idx: HashMap<&str, usize> =
            wl.languages.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let concept_idx: HashMap<&str, usize> =
            wl.concepts.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let mut cells = vec![vec![None; wl.concepts.len()]; wl.languages.len()];
        for e in &wl.entries {
            let (Some(&li), Some(&ci)) =
                (lang_idx.get(e.language.as_str()), concept_idx.get(e.concept.as_str()))
            else {
                return Err(Error::Schema(format!(
                    "entry ({}, {}) not in the wordlist header",
                    e.language, e.concept
                )));
            };
            if cells[li][ci].is_some() {
                return Err(Error::Schema(format!(
                    "slot ({}, {}) holds more than one form; select core forms first",
                    e.language, e.concept
                )));
            }
            let classes = match &e.segments {
                Some(segs) => encode_segments(segs, &e.form, alphabet)?,
                None => encode_form(&e.form, alphabet)?,
            };
            cells[li][ci] = Some(EncodedWord { form: e.form.clone(), classes });
        }
        Ok(EncodedWordlist {
            languages: wl.languages.clone(),
            concepts: wl.concepts.clone(),
            cells,
        })
    }

    pub fn n_languages(&self) -> usize {
        self.languages.len()
    }

    pub fn n_concepts(&self) -> usize {
        self.concepts.len()
    }
}
