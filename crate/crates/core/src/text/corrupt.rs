use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const DECOYS_TXT: &str = include_str!("../../data/decoys.txt");

pub const PUNCTUATION: [char; 6] = ['.', ',', ';', ':', '!', '?'];

pub fn decoy_words() -> Vec<&'static str> {
    DECOYS_TXT.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

/// How the corruption probability `p` is shared between the three passes.
/// Each pass fires with probability `p * weight`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionMix {
    pub delete: f64,
    pub insert: f64,
    pub substitute: f64,
}

impl Default for CorruptionMix {
    fn default() -> Self {
        CorruptionMix {
            delete: 1.0 / 3.0,
            insert: 1.0 / 3.0,
            substitute: 1.0 / 3.0,
        }
    }
}

/// Corrupt `text` with the default even split of `p`.
pub fn corrupt_text(text: &str, p: f64, seed: u64) -> String {
    corrupt_text_with(text, p, seed, &CorruptionMix::default())
}

/// Three passes driven by one ChaCha8 stream:
/// 1. delete each character,
/// 2. insert a random punctuation mark after each surviving character,
/// 3. replace each whitespace-delimited word by a random decoy word.
///
/// # Panics
/// If `p` is outside [0, 1].
pub fn corrupt_text_with(text: &str, p: f64, seed: u64, mix: &CorruptionMix) -> String {
    assert!((0.0..=1.0).contains(&p), "corruption probability must be in [0, 1]");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p_delete = (p * mix.delete).clamp(0.0, 1.0);
    let p_insert = (p * mix.insert).clamp(0.0, 1.0);
    let p_substitute = (p * mix.substitute).clamp(0.0, 1.0);

    let kept: Vec<char> = text.chars().filter(|_| !rng.random_bool(p_delete)).collect();

    let mut punctuated = String::with_capacity(kept.len() * 2);
    for c in kept {
        punctuated.push(c);
        if rng.random_bool(p_insert) {
            let k = rng.random_range(0..PUNCTUATION.len() as u32) as usize;
            punctuated.push(PUNCTUATION[k]);
        }
    }

    let decoys = decoy_words();
    let mut out = String::with_capacity(punctuated.len());
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String, rng: &mut ChaCha8Rng| {
        if word.is_empty() {
            return;
        }
        if rng.random_bool(p_substitute) {
            let k = rng.random_range(0..decoys.len() as u32) as usize;
            out.push_str(decoys[k]);
        } else {
            out.push_str(word);
        }
        word.clear();
    };
    for c in punctuated.chars() {
        if c.is_whitespace() {
            flush(&mut word, &mut out, &mut rng);
            out.push(c);
        } else {
            word.push(c);
        }
    }
    flush(&mut word, &mut out, &mut rng);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "NaCl crystallizes in the cubic crystal system. The unit cell has a = 5.64 Å.";

    #[test]
    fn decoy_list_has_64_unique_words() {
        let mut d = decoy_words();
        assert_eq!(d.len(), 64);
        d.sort();
        d.dedup();
        assert_eq!(d.len(), 64);
    }

    #[test]
    fn zero_probability_is_identity() {
        for seed in 0..20 {
            assert_eq!(corrupt_text(SAMPLE, 0.0, seed), SAMPLE);
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(corrupt_text("", 1.0, 3), "");
        let all = corrupt_text("ab", 1.0, 3);
        assert!(all.chars().all(|c| PUNCTUATION.contains(&c) || c.is_alphabetic()));
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(corrupt_text(SAMPLE, 0.3, 7), corrupt_text(SAMPLE, 0.3, 7));
        assert_ne!(corrupt_text(SAMPLE, 0.3, 7), corrupt_text(SAMPLE, 0.3, 8));
    }

    #[test]
    fn frozen_output() {
        let golden = include_str!("../../tests/golden/corrupt_p0.3_seed7.txt");
        assert_eq!(corrupt_text(SAMPLE, 0.3, 7), golden);
    }

    #[test]
    fn edit_distance_grows_with_probability() {
        let mean_distance = |p: f64| {
            (0..200u64)
                .map(|seed| strsim::levenshtein(SAMPLE, &corrupt_text(SAMPLE, p, seed)))
                .sum::<usize>() as f64
                / 200.0
        };
        let (low, high) = (mean_distance(0.1), mean_distance(0.4));
        assert!(high > low, "p=0.4: {high}, p=0.1: {low}");
    }

    #[test]
    fn half_probability_changes_text() {
        let changed = (0..50u64)
            .filter(|&seed| corrupt_text(SAMPLE, 0.5, seed) != SAMPLE)
            .count();
        assert_eq!(changed, 50);
    }
}
