//! Prediction heads: question summary, answer pointer, no-answer
//! pointer with the plausible auxiliary head, answer verifier, the
//! per-term losses, span decoding, and the final answerability rule.

use super::{ModelConfig, ModelParams};
use crate::layers::weighted_summary;
use crate::tensor::{Graph, Var};
use crate::tensor::{Scalar, Tensor};
use serde::{Deserialize, Serialize};

/// c_q: fixed-size summary of the question columns. Without the
/// verifier's summary weight the plain column mean is used.
pub fn question_summary<F: Scalar>(
    g: &mut Graph<F>,
    params: &ModelParams<Var>,
    o_q: Var,
    m: usize,
) -> Var {
    match params.w_q {
        Some(w_q) => weighted_summary(g, o_q, w_q),
        None => {
            let inv = F::from_f64(1.0 / m as f64);
            let ones = g.constant(Tensor::from_vec(vec![m, 1], vec![inv; m]));
            g.matmul(o_q, ones)
        }
    }
}

/// Start/end distributions over the n+1 pointer slots (node at index
/// 0): alpha_i proportional to exp(c_q^T W_s o^P_i), beta likewise
/// with W_e. Returns (log alpha, log beta, alpha, beta).
pub fn pointer_distributions<F: Scalar>(
    g: &mut Graph<F>,
    c_q: Var,
    o_p: Var,
    w_s: Var,
    w_e: Var,
) -> (Var, Var, Var, Var) {
    let one = |g: &mut Graph<F>, w: Var| {
        let left = g.matmul_ex(c_q, true, w, false);
        let logits = g.matmul(left, o_p);
        g.transpose(logits)
    };
    let z_s = one(g, w_s);
    let z_e = one(g, w_e);
    (
        g.log_softmax_columns(z_s),
        g.log_softmax_columns(z_e),
        g.softmax_columns(z_s),
        g.softmax_columns(z_e),
    )
}

fn nll_at<F: Scalar>(g: &mut Graph<F>, log_dist: Var, idx: usize) -> Var {
    let picked = g.gather_rows(log_dist, &[idx]);
    g.neg(picked)
}

/// L_A = -(log alpha_a + log beta_b), gold indices passage-relative;
/// `node_offset` shifts them into pointer slots (1 with the node).
pub fn answer_loss<F: Scalar>(
    g: &mut Graph<F>,
    log_alpha: Var,
    log_beta: Var,
    a: usize,
    b: usize,
    node_offset: usize,
) -> Var {
    assert!(a <= b, "answer span start {a} exceeds end {b}");
    let la = nll_at(g, log_alpha, a + node_offset);
    let lb = nll_at(g, log_beta, b + node_offset);
    g.add(la, lb)
}

/// L_NA: the main head targets the no-answer slot, and the plausible
/// head (when present) targets the annotated plausible span. Without
/// the universal node the negatives instead train the main head toward
/// the plausible span. Missing annotations drop their term.
pub fn no_answer_loss<F: Scalar>(
    g: &mut Graph<F>,
    log_alpha: Var,
    log_beta: Var,
    log_alpha_plausible: Option<Var>,
    log_beta_plausible: Option<Var>,
    plausible_span: Option<(usize, usize)>,
    no_universal_node: bool,
) -> Var {
    let mut terms: Vec<Var> = Vec::new();
    if no_universal_node {
        if let Some((a, b)) = plausible_span {
            terms.push(answer_loss(g, log_alpha, log_beta, a, b, 0));
        }
    } else {
        terms.push(nll_at(g, log_alpha, 0));
        terms.push(nll_at(g, log_beta, 0));
    }
    if let (Some(la), Some(lb), Some((a, b))) =
        (log_alpha_plausible, log_beta_plausible, plausible_span)
    {
        let offset = if no_universal_node { 0 } else { 1 };
        terms.push(answer_loss(g, la, lb, a, b, offset));
    }
    let mut total: Option<Var> = None;
    for t in terms {
        total = Some(match total {
            Some(acc) => g.add(acc, t),
            None => t,
        });
    }
    total.unwrap_or_else(|| g.constant(Tensor::scalar(F::from_f64(0.0))))
}

/// c_s, c_e (pointer-weighted passage summaries) and the verifier
/// feature vector F = [c_q; o_node; c_s; c_e] (o_node omitted when the
/// universal node is absent).
pub fn verifier_features<F: Scalar>(
    g: &mut Graph<F>,
    o_p: Var,
    alpha: Var,
    beta: Var,
    c_q: Var,
    cfg: &ModelConfig,
) -> (Var, Var, Var) {
    let (alpha, beta) = if cfg.detach_verifier_features {
        (g.detach(alpha), g.detach(beta))
    } else {
        (alpha, beta)
    };
    let c_s = g.matmul(o_p, alpha);
    let c_e = g.matmul(o_p, beta);
    let f = if cfg.ablation.no_universal_node {
        g.concat(&[c_q, c_s, c_e], 0)
    } else {
        let o_node = g.slice(o_p, 1, 0, 1);
        g.concat(&[c_q, o_node, c_s, c_e], 0)
    };
    (c_s, c_e, f)
}

/// Pre-sigmoid verifier score W_f^T F; p^c = sigmoid of this is the
/// probability the question is unanswerable.
pub fn verifier_logit<F: Scalar>(
    g: &mut Graph<F>,
    o_p: Var,
    alpha: Var,
    beta: Var,
    c_q: Var,
    w_f: Var,
    cfg: &ModelConfig,
) -> Var {
    let (_, _, f) = verifier_features(g, o_p, alpha, beta, c_q, cfg);
    g.matmul_ex(w_f, true, f, false)
}

/// Binary cross-entropy against the unanswerability target 1 - delta,
/// computed from the logit for stability.
pub fn verifier_loss<F: Scalar>(g: &mut Graph<F>, logit: Var, answerable: bool) -> Var {
    if answerable {
        g.softplus(logit)
    } else {
        let nz = g.neg(logit);
        g.softplus(nz)
    }
}

/// Best passage span by alpha_i * beta_j over 1 <= i <= j and span
/// length at most max_span_len; indices returned passage-relative.
/// The no-answer slot (index 0) is never selected; None means there is
/// no passage to point into.
pub fn decode_span(
    alpha: &[f64],
    beta: &[f64],
    max_span_len: usize,
) -> Option<(usize, usize, f64)> {
    assert_eq!(alpha.len(), beta.len(), "pointer distributions differ in length");
    let slots = alpha.len();
    if slots <= 1 {
        return None;
    }
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 1..slots {
        let j_hi = (i + max_span_len).min(slots);
        for j in i..j_hi {
            let score = alpha[i] * beta[j];
            if best.map_or(true, |(_, _, s)| score > s) {
                best = Some((i - 1, j - 1, score));
            }
        }
    }
    best
}

/// Unanswerability score for models without a verifier head: the
/// no-answer slot mass against the best span mass.
pub fn pointer_no_answer_score(alpha: &[f64], beta: &[f64], max_span_len: usize) -> f64 {
    let node_mass = alpha[0] * beta[0];
    let span_mass = decode_span(alpha, beta, max_span_len).map_or(0.0, |(_, _, s)| s);
    if node_mass + span_mass == 0.0 {
        return 0.5;
    }
    node_mass / (node_mass + span_mass)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub answer_text: String,
    pub span: Option<(usize, usize)>,
    pub p_unanswerable: f64,
    pub predicted_unanswerable: bool,
}

/// Threshold rule: predict unanswerable iff p^c > 1 - t, so t = 0
/// makes every question answerable and t = 1 flags any positive
/// signal. A missing span or a force-unanswerable length rule
/// overrides the threshold.
pub fn final_decision(
    id: &str,
    answer_text: &str,
    span: Option<(usize, usize)>,
    p_unanswerable: f64,
    threshold: f64,
    forced: bool,
) -> PredictionRecord {
    let predicted_unanswerable = forced || span.is_none() || p_unanswerable > 1.0 - threshold;
    PredictionRecord {
        id: id.to_string(),
        answer_text: answer_text.to_string(),
        span,
        p_unanswerable,
        predicted_unanswerable,
    }
}
