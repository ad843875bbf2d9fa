//! Text side of the pipeline: templated structure descriptions, a word-level
//! vocabulary and tokenizer, and seeded text corruption.

mod corrupt;
mod describe;
mod vocab;

use thiserror::Error;

pub use corrupt::{corrupt_text, corrupt_text_with, decoy_words, CorruptionMix, PUNCTUATION};
pub use describe::{describe, describe_in, reduced_formula, CrystalSystem, COORDINATION_PROBE};
pub use vocab::{detokenize, tokenize, words, TokenSequence, Vocab, CLS, PAD, RESERVED, UNK};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TextError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
}
