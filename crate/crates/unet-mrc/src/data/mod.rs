//! Dataset handling: schema parsing, tokenization, span alignment,
//! lexical features, vocabularies, tag annotations, length filtering,
//! and synthetic corpus generation.

pub mod features;
pub mod squad;
pub mod synthetic;
pub mod tokenize;

use features::{build_features, default_lemma, FeatureVector, IdfTable};
use squad::RawExample;
use std::collections::HashMap;
use std::path::Path;
use tokenize::{align_char_span, tokenize, Token};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const NODE_ID: usize = 2;
const SPECIALS: [&str; 3] = ["<pad>", "<unk>", "<node>"];

/// Token vocabulary with dense ids; ids 0..2 are the padding, unknown,
/// and universal-node specials. The tokenizer can never produce the
/// special surface forms (it splits `<` and `>` off), so the node id
/// never collides with real text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    pub fn build<'a>(corpus_tokens: impl Iterator<Item = &'a str>) -> Self {
        let mut distinct: Vec<&str> = corpus_tokens
            .filter(|t| !SPECIALS.contains(t))
            .collect();
        distinct.sort_unstable();
        distinct.dedup();
        let tokens: Vec<String> = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(distinct.into_iter().map(|s| s.to_string()))
            .collect();
        Self::from_tokens(tokens)
    }

    /// Rebuild from a stored token list (checkpoint header).
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        assert!(
            tokens.len() >= SPECIALS.len()
                && SPECIALS.iter().zip(&tokens).all(|(s, t)| s == t),
            "vocabulary must start with the special tokens {SPECIALS:?}"
        );
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, ids }
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Tag vocabulary (POS or NER): id 0 is the unknown tag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagVocab {
    tags: Vec<String>,
    ids: HashMap<String, usize>,
}

pub const UNK_TAG: &str = "UNK";

impl TagVocab {
    pub fn build<'a>(corpus_tags: impl Iterator<Item = &'a str>) -> Self {
        let mut distinct: Vec<&str> = corpus_tags.filter(|t| *t != UNK_TAG).collect();
        distinct.sort_unstable();
        distinct.dedup();
        let tags: Vec<String> = std::iter::once(UNK_TAG.to_string())
            .chain(distinct.into_iter().map(|s| s.to_string()))
            .collect();
        Self::from_tags(tags)
    }

    pub fn from_tags(tags: Vec<String>) -> Self {
        assert!(
            tags.first().map(|t| t.as_str()) == Some(UNK_TAG),
            "tag vocabulary must start with {UNK_TAG}"
        );
        let ids = tags
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        TagVocab { tags, ids }
    }

    pub fn id(&self, tag: &str) -> usize {
        self.ids.get(tag).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }
}

/// Token-aligned POS/NER/lemma annotations for one example, from the
/// optional side-file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TagAnnotation {
    pub q_pos: Vec<String>,
    pub q_ner: Vec<String>,
    pub q_lemma: Vec<String>,
    pub p_pos: Vec<String>,
    pub p_ner: Vec<String>,
    pub p_lemma: Vec<String>,
}

/// Side-file format: one line per example,
/// `id<TAB>q_pos<TAB>q_ner<TAB>q_lemma<TAB>p_pos<TAB>p_ner<TAB>p_lemma`,
/// each field space-separated per token.
pub fn parse_tag_file(content: &str) -> Result<HashMap<String, TagAnnotation>, String> {
    let mut out = HashMap::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(format!(
                "tag file line {}: expected 7 tab-separated fields, got {}",
                lineno + 1,
                fields.len()
            ));
        }
        let split = |s: &str| -> Vec<String> {
            s.split_whitespace().map(|w| w.to_string()).collect()
        };
        out.insert(
            fields[0].to_string(),
            TagAnnotation {
                q_pos: split(fields[1]),
                q_ner: split(fields[2]),
                q_lemma: split(fields[3]),
                p_pos: split(fields[4]),
                p_ner: split(fields[5]),
                p_lemma: split(fields[6]),
            },
        );
    }
    Ok(out)
}

pub fn load_tag_file(path: &Path) -> Result<HashMap<String, TagAnnotation>, String> {
    let content =
        std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_tag_file(&content)
}

/// Pretrained vectors: one line per token, `token v1 ... vd`.
pub fn parse_vectors(content: &str, dim: usize) -> Result<HashMap<String, Vec<f64>>, String> {
    let mut out = HashMap::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap().to_string();
        let values: Result<Vec<f64>, _> = parts.map(|v| v.parse::<f64>()).collect();
        let values = values.map_err(|e| {
            format!("vectors line {}: bad number: {e}", lineno + 1)
        })?;
        if values.len() != dim {
            return Err(format!(
                "vectors line {}: expected {dim} values, got {}",
                lineno + 1,
                values.len()
            ));
        }
        out.insert(token, values);
    }
    Ok(out)
}

pub fn load_vectors(path: &Path, dim: usize) -> Result<HashMap<String, Vec<f64>>, String> {
    let content =
        std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_vectors(&content, dim)
}

/// A fully prepared example: tokens with offsets, aligned spans, tags,
/// and lexical features.
#[derive(Clone, Debug)]
pub struct TokenizedExample {
    pub id: String,
    pub question_text: String,
    pub passage_text: String,
    pub q_tokens: Vec<Token>,
    pub p_tokens: Vec<Token>,
    /// δ: true iff the question is answerable.
    pub answerable: bool,
    /// Gold token span (inclusive ends) when answerable.
    pub gold_span: Option<(usize, usize)>,
    /// Plausible token span when unanswerable and annotated.
    pub plausible_span: Option<(usize, usize)>,
    /// All gold answer surfaces (evaluation takes the max over these).
    pub gold_texts: Vec<String>,
    /// True when the test-phase length rule forces an unanswerable
    /// prediction for this example.
    pub forced_unanswerable: bool,
    pub tags: TagAnnotation,
    pub features: FeatureVector,
}

impl TokenizedExample {
    pub fn m(&self) -> usize {
        self.q_tokens.len()
    }

    pub fn n(&self) -> usize {
        self.p_tokens.len()
    }

    pub fn q_texts(&self) -> Vec<&str> {
        self.q_tokens
            .iter()
            .map(|t| t.text(&self.question_text))
            .collect()
    }

    pub fn p_texts(&self) -> Vec<&str> {
        self.p_tokens
            .iter()
            .map(|t| t.text(&self.passage_text))
            .collect()
    }

    /// Surface text of a passage token span (inclusive ends).
    pub fn span_text(&self, a: usize, b: usize) -> &str {
        &self.passage_text[self.p_tokens[a].lo..self.p_tokens[b].hi]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Train,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterDecision {
    Keep,
    Omit,
    ForceUnanswerable,
}

/// Length rules: training omits over-long examples; test keeps them but
/// forces the unanswerable prediction.
pub fn length_filter(m: usize, n: usize, phase: Phase) -> FilterDecision {
    match phase {
        Phase::Train => {
            if n > 400 || m > 50 {
                FilterDecision::Omit
            } else {
                FilterDecision::Keep
            }
        }
        Phase::Test => {
            if n > 600 || m > 100 {
                FilterDecision::ForceUnanswerable
            } else {
                FilterDecision::Keep
            }
        }
    }
}

/// Word, POS, and NER vocabularies over a prepared dataset.
pub fn build_vocabularies(examples: &[TokenizedExample]) -> (Vocab, TagVocab, TagVocab) {
    let vocab = Vocab::build(
        examples.iter().flat_map(|e| e.q_texts().into_iter().chain(e.p_texts()).collect::<Vec<_>>()),
    );
    let pos = TagVocab::build(
        examples
            .iter()
            .flat_map(|e| e.tags.q_pos.iter().chain(e.tags.p_pos.iter()).map(String::as_str)),
    );
    let ner = TagVocab::build(
        examples
            .iter()
            .flat_map(|e| e.tags.q_ner.iter().chain(e.tags.p_ner.iter()).map(String::as_str)),
    );
    (vocab, pos, ner)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PrepStats {
    pub kept: usize,
    pub omitted_length: usize,
    pub forced_unanswerable: usize,
    pub skipped_alignment: usize,
    pub unaligned_plausible: usize,
    pub tag_mismatches: usize,
}

fn fallback_tags(q_texts: &[&str], p_texts: &[&str]) -> TagAnnotation {
    TagAnnotation {
        q_pos: vec![UNK_TAG.to_string(); q_texts.len()],
        q_ner: vec![UNK_TAG.to_string(); q_texts.len()],
        q_lemma: q_texts.iter().map(|t| default_lemma(t)).collect(),
        p_pos: vec![UNK_TAG.to_string(); p_texts.len()],
        p_ner: vec![UNK_TAG.to_string(); p_texts.len()],
        p_lemma: p_texts.iter().map(|t| default_lemma(t)).collect(),
    }
}

/// Tokenize, align spans, attach tags and features, and apply the
/// length rules for `phase`. Examples whose gold span cannot be
/// aligned are skipped and counted.
pub fn prepare_dataset(
    raws: &[RawExample],
    tag_map: Option<&HashMap<String, TagAnnotation>>,
    idf: Option<&IdfTable>,
    phase: Phase,
) -> (Vec<TokenizedExample>, PrepStats) {
    let mut stats = PrepStats::default();
    let mut out = Vec::with_capacity(raws.len());
    for raw in raws {
        let q_tokens = tokenize(&raw.question_text);
        let p_tokens = tokenize(&raw.passage_text);
        let mut forced = false;
        match length_filter(q_tokens.len(), p_tokens.len(), phase) {
            FilterDecision::Keep => {}
            FilterDecision::Omit => {
                stats.omitted_length += 1;
                continue;
            }
            FilterDecision::ForceUnanswerable => {
                stats.forced_unanswerable += 1;
                forced = true;
            }
        }

        let answerable = !raw.is_impossible;
        let gold_span = if answerable {
            let (text, start) = &raw.answers[0];
            match align_char_span(&p_tokens, *start, text) {
                Ok(span) => Some(span),
                Err(_) => {
                    stats.skipped_alignment += 1;
                    continue;
                }
            }
        } else {
            None
        };
        let plausible_span = if !answerable {
            raw.plausible_answers.first().and_then(|(text, start)| {
                match align_char_span(&p_tokens, *start, text) {
                    Ok(span) => Some(span),
                    Err(_) => {
                        stats.unaligned_plausible += 1;
                        None
                    }
                }
            })
        } else {
            None
        };

        let q_texts: Vec<&str> = q_tokens.iter().map(|t| t.text(&raw.question_text)).collect();
        let p_texts: Vec<&str> = p_tokens.iter().map(|t| t.text(&raw.passage_text)).collect();
        let tags = match tag_map.and_then(|m| m.get(&raw.id)) {
            Some(t)
                if t.q_pos.len() == q_texts.len()
                    && t.q_ner.len() == q_texts.len()
                    && t.q_lemma.len() == q_texts.len()
                    && t.p_pos.len() == p_texts.len()
                    && t.p_ner.len() == p_texts.len()
                    && t.p_lemma.len() == p_texts.len() =>
            {
                t.clone()
            }
            Some(_) => {
                stats.tag_mismatches += 1;
                fallback_tags(&q_texts, &p_texts)
            }
            None => fallback_tags(&q_texts, &p_texts),
        };
        let features = build_features(&q_texts, &tags.q_lemma, &p_texts, &tags.p_lemma, idf);

        stats.kept += 1;
        out.push(TokenizedExample {
            id: raw.id.clone(),
            question_text: raw.question_text.clone(),
            passage_text: raw.passage_text.clone(),
            q_tokens,
            p_tokens,
            answerable,
            gold_span,
            plausible_span,
            gold_texts: raw.answers.iter().map(|(t, _)| t.clone()).collect(),
            forced_unanswerable: forced,
            tags,
            features,
        });
    }
    (out, stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_boundaries() {
        assert_eq!(length_filter(50, 400, Phase::Train), FilterDecision::Keep);
        assert_eq!(length_filter(50, 401, Phase::Train), FilterDecision::Omit);
        assert_eq!(length_filter(51, 10, Phase::Train), FilterDecision::Omit);
        assert_eq!(length_filter(100, 600, Phase::Test), FilterDecision::Keep);
        assert_eq!(
            length_filter(100, 601, Phase::Test),
            FilterDecision::ForceUnanswerable
        );
        assert_eq!(
            length_filter(101, 10, Phase::Test),
            FilterDecision::ForceUnanswerable
        );
    }

    #[test]
    fn vocab_ids_are_dense_and_specials_reserved() {
        let v = Vocab::build(["beta", "alpha", "beta"].into_iter());
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("<pad>"), PAD_ID);
        assert_eq!(v.id("<unk>"), UNK_ID);
        assert_eq!(v.id("<node>"), NODE_ID);
        assert_eq!(v.id("alpha"), 3);
        assert_eq!(v.id("beta"), 4);
        assert_eq!(v.id("never-seen"), UNK_ID);
    }

    #[test]
    fn tokenizer_cannot_produce_node_special() {
        let tokens = tokenize("<node>");
        let texts: Vec<&str> = tokens.iter().map(|t| t.text("<node>")).collect();
        assert!(!texts.contains(&"<node>"));
    }

    #[test]
    fn tag_file_round_trip() {
        let content = "ex1\tDT NN\tO O\tthe cat\tDT NN VBD\tO O O\tthe cat sat\n";
        let map = parse_tag_file(content).unwrap();
        let ann = &map["ex1"];
        assert_eq!(ann.q_pos, vec!["DT", "NN"]);
        assert_eq!(ann.p_lemma, vec!["the", "cat", "sat"]);
        assert!(parse_tag_file("bad line no tabs\n").is_err());
    }

    #[test]
    fn vectors_parse_and_reject_bad_width() {
        let map = parse_vectors("cat 1.0 2.0\ndog 3.0 4.0\n", 2).unwrap();
        assert_eq!(map["cat"], vec![1.0, 2.0]);
        assert!(parse_vectors("cat 1.0\n", 2).is_err());
        assert!(parse_vectors("cat 1.0 oops\n", 2).is_err());
    }

    #[test]
    fn prepare_synthetic_corpus_aligns_everything() {
        let spec = synthetic::SyntheticSpec::new(40, 25, 0.5, 3);
        let raws = synthetic::generate_synthetic_corpus(&spec);
        let (prepared, stats) = prepare_dataset(&raws, None, None, Phase::Train);
        assert_eq!(stats.skipped_alignment, 0);
        assert_eq!(stats.kept, 40);
        for ex in &prepared {
            if ex.answerable {
                let (a, b) = ex.gold_span.unwrap();
                assert_eq!(ex.span_text(a, b), ex.gold_texts[0]);
            } else {
                let (a, b) = ex.plausible_span.unwrap();
                assert!(a <= b && b < ex.n());
            }
        }
    }

    #[test]
    fn forced_unanswerable_marks_but_keeps_example() {
        let long_passage = (0..601).map(|i| format!("t{i}")).collect::<Vec<_>>().join(" ");
        let raw = RawExample {
            id: "long".into(),
            passage_text: long_passage,
            question_text: "w00 t5".into(),
            is_impossible: false,
            answers: vec![("t6".into(), 3 * 6 + 2 * 3 + 3)],
            plausible_answers: vec![],
        };
        let (test_prep, test_stats) = prepare_dataset(&[raw.clone()], None, None, Phase::Test);
        assert_eq!(test_stats.forced_unanswerable, 1);
        assert_eq!(test_prep.len(), 1);
        assert!(test_prep[0].forced_unanswerable);

        let (train_prep, train_stats) = prepare_dataset(&[raw], None, None, Phase::Train);
        assert!(train_prep.is_empty());
        assert_eq!(train_stats.omitted_length, 1);
    }
}
