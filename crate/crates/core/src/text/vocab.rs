use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::TextError;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const RESERVED: [&str; 3] = ["[PAD]", "[UNK]", "[CLS]"];

/// Lowercase word tokens. A token is a run of alphanumeric characters (a
/// `.` between two digits stays inside the run, so `4.00` is one token) or
/// a single punctuation character. Whitespace separates and is dropped.
pub fn words(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_alphanumeric() {
            let start = i;
            while i < chars.len() {
                let ch = chars[i];
                let decimal_point = ch == '.'
                    && i > start
                    && chars[i - 1].is_ascii_digit()
                    && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
                if ch.is_alphanumeric() || decimal_point {
                    i += 1;
                } else {
                    break;
                }
            }
            out.push(chars[start..i].iter().collect());
        } else {
            out.push(c.to_string());
            i += 1;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    /// Index = id; the first three entries are the reserved tokens.
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    pub min_freq: usize,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>, min_freq: usize) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocab {
            tokens,
            index,
            min_freq,
        }
    }

    /// Tokens with frequency >= `min_freq`, ordered by descending frequency
    /// then alphabetically, after the reserved ids.
    pub fn build<S: AsRef<str>>(corpus: &[S], min_freq: usize) -> Result<Vocab, TextError> {
        if corpus.is_empty() {
            return Err(TextError::EmptyCorpus);
        }
        let mut freq: HashMap<String, usize> = HashMap::new();
        for doc in corpus {
            for w in words(doc.as_ref()) {
                *freq.entry(w).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = freq
            .into_iter()
            .filter(|(w, n)| *n >= min_freq && !RESERVED.contains(&w.as_str()))
            .collect();
        kept.sort_by(|(wa, na), (wb, nb)| nb.cmp(na).then_with(|| wa.cmp(wb)));
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(w, _)| w))
            .collect();
        Ok(Vocab::from_tokens(tokens, min_freq))
    }

    /// Rebuild from the id-ordered token list (reserved entries included).
    pub fn from_token_list(tokens: Vec<String>) -> Result<Vocab, TextError> {
        if tokens.len() < 3 || tokens[..3].iter().zip(RESERVED).any(|(a, b)| a != b) {
            return Err(TextError::InvalidVocab("reserved tokens missing".into()));
        }
        let v = Vocab::from_tokens(tokens, 1);
        if v.index.len() != v.tokens.len() {
            return Err(TextError::InvalidVocab("duplicate token".into()));
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One non-reserved token per line; line `k` holds id `k + 3`.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for t in &self.tokens[RESERVED.len()..] {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Vocab, TextError> {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        for line in r.lines() {
            let line = line.map_err(|e| TextError::InvalidVocab(e.to_string()))?;
            if line.is_empty() || line.chars().any(char::is_whitespace) {
                return Err(TextError::InvalidVocab(format!("bad vocab line {line:?}")));
            }
            tokens.push(line);
        }
        Vocab::from_token_list(tokens)
    }
}

/// Fixed-length id sequence with a prefix padding mask.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    /// `true` for real tokens; a run of trues followed by falses.
    pub mask: Vec<bool>,
    /// Length including CLS before truncation.
    pub original_length: usize,
}

impl TokenSequence {
    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// CLS followed by token ids, truncated or PAD-filled to `max_len`.
///
/// # Panics
/// If `max_len < 2`.
pub fn tokenize(text: &str, vocab: &Vocab, max_len: usize) -> TokenSequence {
    assert!(max_len >= 2, "max_len must be at least 2");
    let w = words(text);
    let original_length = w.len() + 1;
    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS);
    ids.extend(w.iter().take(max_len - 1).map(|t| vocab.id(t)));
    let real = ids.len();
    ids.resize(max_len, PAD);
    let mask = (0..max_len).map(|k| k < real).collect();
    TokenSequence {
        ids,
        mask,
        original_length,
    }
}

/// Space-joined real tokens, CLS omitted.
pub fn detokenize(seq: &TokenSequence, vocab: &Vocab) -> String {
    seq.ids
        .iter()
        .zip(&seq.mask)
        .skip(1)
        .filter(|(_, &m)| m)
        .map(|(&id, _)| vocab.token(id).unwrap_or(RESERVED[UNK as usize]))
        .collect::<Vec<_>>()
        .join(" ")
}
