//! Lexical overlap features between question and passage: exact,
//! lower-case, and lemma match, plus a term-frequency channel.

use std::collections::{HashMap, HashSet};

/// Per-token feature bits. `exact` implies `lower` by construction.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TokenFeatures {
    pub exact_match: bool,
    pub lower_match: bool,
    pub lemma_match: bool,
    pub tf: f64,
}

/// Features for every question token (against the passage) and every
/// passage token (against the question).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureVector {
    pub question: Vec<TokenFeatures>,
    pub passage: Vec<TokenFeatures>,
}

/// Corpus document frequencies for the optional IDF multiplier; keys
/// are lower-cased tokens, documents are passages.
#[derive(Clone, Debug, Default)]
pub struct IdfTable {
    doc_count: usize,
    doc_freq: HashMap<String, usize>,
}

impl IdfTable {
    pub fn build<'a>(passages: impl Iterator<Item = Vec<&'a str>>) -> Self {
        let mut doc_freq = HashMap::new();
        let mut doc_count = 0;
        for tokens in passages {
            doc_count += 1;
            let distinct: HashSet<String> =
                tokens.iter().map(|t| t.to_lowercase()).collect();
            for t in distinct {
                *doc_freq.entry(t).or_insert(0) += 1;
            }
        }
        IdfTable {
            doc_count,
            doc_freq,
        }
    }

    /// `ln(1 + N/(1+df))`: non-negative, near zero for ubiquitous tokens.
    pub fn idf(&self, token: &str) -> f64 {
        let df = self
            .doc_freq
            .get(&token.to_lowercase())
            .copied()
            .unwrap_or(0);
        (1.0 + self.doc_count as f64 / (1.0 + df as f64)).ln()
    }
}

fn one_side(
    own: &[&str],
    own_lemmas: &[String],
    other: &[&str],
    other_lemmas: &[String],
    idf: Option<&IdfTable>,
) -> Vec<TokenFeatures> {
    let exact: HashSet<&str> = other.iter().copied().collect();
    let lower: HashSet<String> = other.iter().map(|t| t.to_lowercase()).collect();
    let lemmas: HashSet<&str> = other_lemmas.iter().map(|s| s.as_str()).collect();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for &t in own {
        *counts.entry(t).or_insert(0) += 1;
    }
    own.iter()
        .zip(own_lemmas)
        .map(|(&t, lemma)| {
            let mut tf = counts[t] as f64 / own.len() as f64;
            if let Some(table) = idf {
                tf *= table.idf(t);
            }
            TokenFeatures {
                exact_match: exact.contains(t),
                lower_match: lower.contains(&t.to_lowercase()),
                lemma_match: lemmas.contains(lemma.as_str()),
                tf,
            }
        })
        .collect()
}

pub fn build_features(
    q_tokens: &[&str],
    q_lemmas: &[String],
    p_tokens: &[&str],
    p_lemmas: &[String],
    idf: Option<&IdfTable>,
) -> FeatureVector {
    FeatureVector {
        question: one_side(q_tokens, q_lemmas, p_tokens, p_lemmas, idf),
        passage: one_side(p_tokens, p_lemmas, q_tokens, q_lemmas, idf),
    }
}

/// Fallback when no tag side-file is supplied: the lemma of a token is
/// its lower-cased surface.
pub fn default_lemma(token: &str) -> String {
    token.to_lowercase()
}
