//! Shared test fixtures.

use rand::Rng;

use relate::soundclass::{ClassSequence, EncodedWord, EncodedWordlist, DOLGO_CLASSES};

/// Unrelated languages: every word drawn independently, 1-3 classes long,
/// 5% of slots empty.
pub fn random_wordlist(r: &mut impl Rng, languages: usize, concepts: usize) -> EncodedWordlist {
    // skewed class frequencies, as in real consonant inventories
    let weights: Vec<f64> = (1..=DOLGO_CLASSES.len()).map(|i| 1.0 / i as f64).collect();
    let total: f64 = weights.iter().sum();
    let draw = |r: &mut dyn rand::RngCore| {
        let mut u = r.random_range(0.0..total);
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                return DOLGO_CLASSES[i];
            }
            u -= w;
        }
        DOLGO_CLASSES[DOLGO_CLASSES.len() - 1]
    };
    let cells = (0..languages)
        .map(|_| {
            (0..concepts)
                .map(|c| {
                    (!r.random_bool(0.05)).then(|| {
                        let len = r.random_range(1..=3);
                        let classes: Vec<u8> = (0..len).map(|_| draw(r)).collect();
                        EncodedWord { form: format!("w{c}"), classes: ClassSequence::new(classes) }
                    })
                })
                .collect()
        })
        .collect();
    EncodedWordlist {
        languages: (0..languages).map(|i| format!("L{i}")).collect(),
        concepts: (0..concepts).map(|i| format!("c{i}")).collect(),
        cells,
    }
}
