//! SQuAD-2.0-style scoring: answer normalization, EM and token-level F1
//! with no-answer handling, aggregation, and threshold sweeps over cached
//! unanswerability probabilities.

use serde::{Deserialize, Serialize};

use crate::model::final_decision;

const PUNCT: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Lowercase, strip ASCII punctuation, drop the articles `a`/`an`/`the`
/// as whole words, collapse whitespace. Idempotent.
pub fn normalize_answer(s: &str) -> String {
    let lower = s.to_lowercase();
    let no_punct: String = lower.chars().filter(|c| !PUNCT.contains(*c)).collect();
    let chars: Vec<char> = no_punct.chars().collect();
    let mut no_articles = String::with_capacity(no_punct.len());
    let mut i = 0;
    while i < chars.len() {
        if is_word_char(chars[i]) {
            let start = i;
            while i < chars.len() && is_word_char(chars[i]) {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            if word == "a" || word == "an" || word == "the" {
                no_articles.push(' ');
            } else {
                no_articles.push_str(&word);
            }
        } else {
            no_articles.push(chars[i]);
            i += 1;
        }
    }
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn tokens(s: &str) -> Vec<String> {
    normalize_answer(s).split_whitespace().map(str::to_string).collect()
}

fn exact_match(pred: &str, gold: &str) -> f64 {
    if normalize_answer(pred) == normalize_answer(gold) {
        1.0
    } else {
        0.0
    }
}

/// Multiset token overlap. Either side empty falls back to string equality,
/// so EM = 1 always implies F1 = 1.
fn token_f1(pred: &str, gold: &str) -> f64 {
    let p = tokens(pred);
    let g = tokens(gold);
    if p.is_empty() || g.is_empty() {
        return if p == g { 1.0 } else { 0.0 };
    }
    let mut counts = std::collections::HashMap::new();
    for t in &g {
        *counts.entry(t.as_str()).or_insert(0i64) += 1;
    }
    let mut same = 0i64;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                same += 1;
            }
        }
    }
    if same == 0 {
        return 0.0;
    }
    let precision = same as f64 / p.len() as f64;
    let recall = same as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Gold reference for one question.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoldLabel {
    pub id: String,
    pub answerable: bool,
    pub texts: Vec<String>,
}

impl GoldLabel {
    pub fn from_example(ex: &crate::data::TokenizedExample) -> Self {
        let mut texts = ex.gold_texts.clone();
        if ex.answerable && texts.is_empty() {
            if let Some((a, b)) = ex.gold_span {
                texts.push(ex.span_text(a, b).to_string());
            }
        }
        GoldLabel { id: ex.id.clone(), answerable: ex.answerable, texts }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExampleScore {
    pub em: f64,
    pub f1: f64,
    pub gold_answerable: bool,
    pub decision_correct: bool,
}

/// Scores one prediction against its gold label. For unanswerable golds both
/// EM and F1 reduce to decision correctness; for answerable golds the score
/// is the max over the gold texts, and an unanswerable prediction scores as
/// the empty string.
pub fn score_example(pred_text: &str, predicted_unanswerable: bool, gold: &GoldLabel) -> ExampleScore {
    let decision_correct = predicted_unanswerable == !gold.answerable;
    if !gold.answerable {
        let v = if decision_correct { 1.0 } else { 0.0 };
        return ExampleScore { em: v, f1: v, gold_answerable: false, decision_correct };
    }
    let effective = if predicted_unanswerable { "" } else { pred_text };
    let mut em = 0.0f64;
    let mut f1 = 0.0f64;
    for g in &gold.texts {
        em = em.max(exact_match(effective, g));
        f1 = f1.max(token_f1(effective, g));
    }
    ExampleScore { em, f1, gold_answerable: true, decision_correct }
}

/// Aggregate metrics, all on a 0..100 scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub em: f64,
    pub f1: f64,
    pub has_answer_em: f64,
    pub has_answer_f1: f64,
    pub has_answer_count: usize,
    pub no_answer_em: f64,
    pub no_answer_f1: f64,
    pub no_answer_count: usize,
    pub classification_accuracy: f64,
    pub count: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("cannot aggregate zero examples")]
    Empty,
}

pub fn aggregate(scores: &[ExampleScore]) -> Result<MetricReport, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut total = (0.0, 0.0);
    let mut has = (0.0, 0.0, 0usize);
    let mut no = (0.0, 0.0, 0usize);
    let mut correct = 0usize;
    for s in scores {
        total.0 += s.em;
        total.1 += s.f1;
        if s.gold_answerable {
            has.0 += s.em;
            has.1 += s.f1;
            has.2 += 1;
        } else {
            no.0 += s.em;
            no.1 += s.f1;
            no.2 += 1;
        }
        if s.decision_correct {
            correct += 1;
        }
    }
    let n = scores.len() as f64;
    let pct = |sum: f64, count: usize| if count == 0 { 0.0 } else { 100.0 * sum / count as f64 };
    Ok(MetricReport {
        em: 100.0 * total.0 / n,
        f1: 100.0 * total.1 / n,
        has_answer_em: pct(has.0, has.2),
        has_answer_f1: pct(has.1, has.2),
        has_answer_count: has.2,
        no_answer_em: pct(no.0, no.2),
        no_answer_f1: pct(no.1, no.2),
        no_answer_count: no.2,
        classification_accuracy: 100.0 * correct as f64 / n,
        count: scores.len(),
    })
}

/// Cached per-example decode state a sweep can re-threshold without
/// re-running the model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepInput {
    pub answer_text: String,
    pub span: Option<(usize, usize)>,
    pub p_unanswerable: f64,
    pub forced_unanswerable: bool,
    pub gold: GoldLabel,
}

/// One row of the threshold curve, scores on a 0..100 scale.
/// `no_ans_recall` is the fraction of unanswerable questions caught;
/// `no_ans_f1` is the harmonic-mean F1 of the unanswerable class as a
/// binary classification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub avg_f1: f64,
    pub has_ans_f1: f64,
    pub no_ans_recall: f64,
    pub no_ans_f1: f64,
    pub predicted_unanswerable: usize,
}

pub fn default_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 0.05).collect()
}

pub fn threshold_sweep(inputs: &[SweepInput], grid: &[f64]) -> Vec<SweepRow> {
    grid.iter().map(|&t| sweep_at(inputs, t)).collect()
}

fn sweep_at(inputs: &[SweepInput], t: f64) -> SweepRow {
    let mut f1_sum = 0.0;
    let mut has = (0.0, 0usize);
    let mut gold_no = 0usize;
    let mut caught = 0usize;
    let mut predicted = 0usize;
    for x in inputs {
        let rec = final_decision(
            &x.gold.id,
            &x.answer_text,
            x.span,
            x.p_unanswerable,
            t,
            x.forced_unanswerable,
        );
        let s = score_example(&rec.answer_text, rec.predicted_unanswerable, &x.gold);
        f1_sum += s.f1;
        if s.gold_answerable {
            has.0 += s.f1;
            has.1 += 1;
        } else {
            gold_no += 1;
            if rec.predicted_unanswerable {
                caught += 1;
            }
        }
        if rec.predicted_unanswerable {
            predicted += 1;
        }
    }
    let n = inputs.len() as f64;
    let recall = if gold_no == 0 { 0.0 } else { caught as f64 / gold_no as f64 };
    let precision = if predicted == 0 { 0.0 } else { caught as f64 / predicted as f64 };
    let cls_f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    SweepRow {
        threshold: t,
        avg_f1: if inputs.is_empty() { 0.0 } else { 100.0 * f1_sum / n },
        has_ans_f1: if has.1 == 0 { 0.0 } else { 100.0 * has.0 / has.1 as f64 },
        no_ans_recall: 100.0 * recall,
        no_ans_f1: 100.0 * cls_f1,
        predicted_unanswerable: predicted,
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("t,AvgF1,HasAnsF1,NoAnsRecall,count\n");
    for r in rows {
        out.push_str(&format!(
            "{:.2},{:.4},{:.4},{:.4},{}\n",
            r.threshold, r.avg_f1, r.has_ans_f1, r.no_ans_recall, r.predicted_unanswerable
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gold(answerable: bool, texts: &[&str]) -> GoldLabel {
        GoldLabel {
            id: "x".into(),
            answerable,
            texts: texts.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_answer("The Cat!"), "cat");
        assert_eq!(normalize_answer("a an the"), "");
        assert_eq!(normalize_answer("  A  Big--Dog.  "), "bigdog");
        assert_eq!(normalize_answer("one, two"), "one two");
        assert_eq!(normalize_answer("another theme"), "another theme");
        assert_eq!(normalize_answer("U.S.A."), "usa");
        assert_eq!(normalize_answer("it's a trap"), "its trap");
    }

    #[test]
    fn exact_match_and_f1_basics() {
        let s = score_example("The Cat", false, &gold(true, &["cat"]));
        assert_eq!((s.em, s.f1), (1.0, 1.0));

        let s = score_example("new york city", false, &gold(true, &["york city hall"]));
        assert_eq!(s.em, 0.0);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn multi_gold_takes_the_max() {
        let s = score_example("dog", false, &gold(true, &["a cat", "dog"]));
        assert_eq!((s.em, s.f1), (1.0, 1.0));
        let s = score_example("cat house", false, &gold(true, &["cat", "mouse"]));
        assert_eq!(s.em, 0.0);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn unanswerable_gold_scores_decision_only() {
        let s = score_example("whatever text", true, &gold(false, &[]));
        assert_eq!((s.em, s.f1), (1.0, 1.0));
        assert!(s.decision_correct);
        let s = score_example("", false, &gold(false, &[]));
        assert_eq!((s.em, s.f1), (0.0, 0.0));
        assert!(!s.decision_correct);
    }

    #[test]
    fn answerable_gold_with_unanswerable_prediction_scores_zero() {
        let s = score_example("perfectly right answer", true, &gold(true, &["perfectly right answer"]));
        assert_eq!((s.em, s.f1), (0.0, 0.0));
        assert!(!s.decision_correct);
    }

    #[test]
    fn article_only_strings_compare_as_empty() {
        let s = score_example("a", false, &gold(true, &["the"]));
        assert_eq!((s.em, s.f1), (1.0, 1.0));
    }

    #[test]
    fn aggregate_percentages_and_classes() {
        let scores = vec![
            score_example("cat", false, &gold(true, &["cat"])),
            score_example("dog", false, &gold(true, &["cat"])),
            score_example("", true, &gold(false, &[])),
            score_example("spurious", false, &gold(false, &[])),
        ];
        let r = aggregate(&scores).unwrap();
        assert_eq!(r.count, 4);
        assert_eq!(r.has_answer_count, 2);
        assert_eq!(r.no_answer_count, 2);
        assert!((r.em - 50.0).abs() < 1e-12);
        assert!((r.f1 - 50.0).abs() < 1e-12);
        assert!((r.has_answer_em - 50.0).abs() < 1e-12);
        assert!((r.no_answer_f1 - 50.0).abs() < 1e-12);
        assert!((r.classification_accuracy - 75.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_rejects_empty() {
        assert!(matches!(aggregate(&[]), Err(EvalError::Empty)));
    }

    #[test]
    fn perfect_predictions_score_100() {
        let scores = vec![
            score_example("exact span", false, &gold(true, &["Exact Span!"])),
            score_example("", true, &gold(false, &[])),
        ];
        let r = aggregate(&scores).unwrap();
        assert_eq!((r.em, r.f1, r.classification_accuracy), (100.0, 100.0, 100.0));
    }

    fn sweep_fixture() -> Vec<SweepInput> {
        vec![
            SweepInput {
                answer_text: "blue whale".into(),
                span: Some((0, 1)),
                p_unanswerable: 0.1,
                forced_unanswerable: false,
                gold: gold(true, &["blue whale"]),
            },
            SweepInput {
                answer_text: "red".into(),
                span: Some((3, 3)),
                p_unanswerable: 0.6,
                forced_unanswerable: false,
                gold: gold(true, &["red"]),
            },
            SweepInput {
                answer_text: "noise".into(),
                span: Some((2, 2)),
                p_unanswerable: 0.8,
                forced_unanswerable: false,
                gold: gold(false, &[]),
            },
            SweepInput {
                answer_text: "more noise".into(),
                span: Some((1, 2)),
                p_unanswerable: 0.4,
                forced_unanswerable: false,
                gold: gold(false, &[]),
            },
        ]
    }

    #[test]
    fn threshold_zero_predicts_everything_answerable() {
        let rows = threshold_sweep(&sweep_fixture(), &[0.0]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].predicted_unanswerable, 0);
        assert_eq!(rows[0].no_ans_recall, 0.0);
        assert!((rows[0].has_ans_f1 - 100.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_is_monotone_in_both_directions() {
        let rows = threshold_sweep(&sweep_fixture(), &default_grid());
        assert_eq!(rows.len(), 21);
        for w in rows.windows(2) {
            assert!(w[1].has_ans_f1 <= w[0].has_ans_f1 + 1e-12);
            assert!(w[1].no_ans_recall >= w[0].no_ans_recall - 1e-12);
        }
        let last = rows.last().unwrap();
        assert!((last.no_ans_recall - 100.0).abs() < 1e-12);
    }

    #[test]
    fn singleton_sweep_equals_direct_evaluation() {
        let inputs = sweep_fixture();
        for &t in &[0.3, 0.5, 0.7] {
            let row = &threshold_sweep(&inputs, &[t])[0];
            let scores: Vec<ExampleScore> = inputs
                .iter()
                .map(|x| {
                    let rec = final_decision(
                        &x.gold.id,
                        &x.answer_text,
                        x.span,
                        x.p_unanswerable,
                        t,
                        x.forced_unanswerable,
                    );
                    score_example(&rec.answer_text, rec.predicted_unanswerable, &x.gold)
                })
                .collect();
            let rep = aggregate(&scores).unwrap();
            assert!((row.avg_f1 - rep.f1).abs() < 1e-12);
            assert!((row.has_ans_f1 - rep.has_answer_f1).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_span_and_forced_examples_ignore_threshold() {
        let inputs = vec![
            SweepInput {
                answer_text: String::new(),
                span: None,
                p_unanswerable: 0.0,
                forced_unanswerable: false,
                gold: gold(false, &[]),
            },
            SweepInput {
                answer_text: "text".into(),
                span: Some((0, 0)),
                p_unanswerable: 0.0,
                forced_unanswerable: true,
                gold: gold(false, &[]),
            },
        ];
        let rows = threshold_sweep(&inputs, &[0.0]);
        assert_eq!(rows[0].predicted_unanswerable, 2);
        assert!((rows[0].no_ans_recall - 100.0).abs() < 1e-12);
    }

    #[test]
    fn csv_has_header_and_one_row_per_threshold() {
        let rows = threshold_sweep(&sweep_fixture(), &default_grid());
        let csv = sweep_csv(&rows);
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines[0], "t,AvgF1,HasAnsF1,NoAnsRecall,count");
        assert_eq!(lines.len(), 22);
        assert!(lines[1].starts_with("0.00,"));
        assert!(lines[21].starts_with("1.00,"));
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in ".{0,60}") {
            let once = normalize_answer(&s);
            prop_assert_eq!(normalize_answer(&once), once.clone());
        }

        #[test]
        fn f1_at_least_em_for_answerable(
            pred in "[a-c ]{0,12}",
            golds in proptest::collection::vec("[a-c ]{0,12}", 1..4),
        ) {
            let refs: Vec<&str> = golds.iter().map(String::as_str).collect();
            let s = score_example(&pred, false, &gold(true, &refs));
            prop_assert!(s.f1 + 1e-12 >= s.em);
            prop_assert!(s.f1 <= 1.0 + 1e-12);
        }
    }
}
