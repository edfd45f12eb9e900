//! Deterministic synthetic corpora for desk-scale training runs.
//!
//! Generation rule: the second question token is a marker. For
//! answerable examples the marker occurs exactly once in the passage
//! and the answer is the token right after it. For unanswerable
//! examples the marker is absent; a decoy marker's successor is
//! annotated as the plausible span instead.

use super::squad::RawExample;
use super::tokenize::tokenize;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug)]
pub struct SyntheticSpec {
    pub size: usize,
    pub vocab_size: usize,
    pub answerable_fraction: f64,
    pub seed: u64,
    /// Passage length is drawn uniformly from this inclusive range.
    pub passage_len: (usize, usize),
}

impl SyntheticSpec {
    pub fn new(size: usize, vocab_size: usize, answerable_fraction: f64, seed: u64) -> Self {
        SyntheticSpec {
            size,
            vocab_size,
            answerable_fraction,
            seed,
            passage_len: (8, 12),
        }
    }
}

fn word(i: usize) -> String {
    format!("w{i:02}")
}

/// The fixed question prefix; never a marker.
fn question_word() -> String {
    word(0)
}

pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Vec<RawExample> {
    assert!(spec.size >= 1 && spec.vocab_size >= 6, "corpus too small");
    assert!((0.0..=1.0).contains(&spec.answerable_fraction));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vocab: Vec<String> = (0..spec.vocab_size).map(word).collect();
    let n_answerable = (spec.size as f64 * spec.answerable_fraction).round() as usize;

    let mut examples = Vec::with_capacity(spec.size);
    for idx in 0..spec.size {
        let answerable = idx < n_answerable;
        let len = rng.gen_range(spec.passage_len.0..=spec.passage_len.1);
        // markers come from vocab[1..]; vocab[0] is the question prefix
        let marker = vocab[rng.gen_range(1..vocab.len())].clone();

        // fillers never repeat the marker, so its occurrence is unique
        let mut passage: Vec<String> = (0..len)
            .map(|_| loop {
                let w = vocab[rng.gen_range(1..vocab.len())].clone();
                if w != marker {
                    break w;
                }
            })
            .collect();

        let (answers, plausible_answers) = if answerable {
            let pos = rng.gen_range(0..len - 1);
            passage[pos] = marker.clone();
            let answer = passage[pos + 1].clone();
            let char_start = passage[..pos + 1].iter().map(|w| w.len() + 1).sum::<usize>();
            (vec![(answer, char_start)], vec![])
        } else {
            // decoy: some other token's successor is merely plausible
            let pos = rng.gen_range(0..len - 1);
            let plausible = passage[pos + 1].clone();
            let char_start = passage[..pos + 1].iter().map(|w| w.len() + 1).sum::<usize>();
            (vec![], vec![(plausible, char_start)])
        };

        let question_text = format!("{} {}", question_word(), marker);
        examples.push(RawExample {
            id: format!("synth-{idx:04}"),
            passage_text: passage.join(" "),
            question_text,
            is_impossible: !answerable,
            answers,
            plausible_answers,
        });
    }
    examples.shuffle(&mut rng);
    examples
}

/// Re-derives the answer from the generation rule alone: find the
/// second question token in the passage and return its successor.
/// `None` means unanswerable.
pub fn rule_oracle(question_text: &str, passage_text: &str) -> Option<String> {
    let q_tokens = tokenize(question_text);
    let marker = q_tokens.get(1)?.text(question_text);
    let p_tokens = tokenize(passage_text);
    for (i, t) in p_tokens.iter().enumerate() {
        if t.text(passage_text) == marker {
            return p_tokens
                .get(i + 1)
                .map(|succ| succ.text(passage_text).to_string());
        }
    }
    None
}
