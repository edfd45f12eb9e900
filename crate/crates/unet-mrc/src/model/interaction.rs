//! Question/passage interaction: per-level bi-attention through the
//! shared universal node, the self-attention ablation, and the final
//! fusion that produces the output states O.

use super::encoder::EncodedLevels;
use super::{AttentionPair, ModelConfig, ModelParams};
use crate::layers::{bilstm, dropout};
use crate::tensor::{Graph, Var};
use crate::tensor::Scalar;
use rand::Rng;

/// Split an encoded level into question and passage views. The node
/// column m belongs to both views by default, only to the passage view
/// under no_share_node, and to neither when absent.
pub fn split_with_shared_node<F: Scalar>(
    g: &mut Graph<F>,
    h: Var,
    m: usize,
    n: usize,
    cfg: &ModelConfig,
) -> (Var, Var) {
    let ab = &cfg.ablation;
    if ab.no_universal_node {
        (g.slice(h, 1, 0, m), g.slice(h, 1, m, m + n))
    } else if ab.no_share_node {
        (g.slice(h, 1, 0, m), g.slice(h, 1, m, m + n + 1))
    } else {
        (g.slice(h, 1, 0, m + 1), g.slice(h, 1, m, m + n + 1))
    }
}

/// S = (ReLU(W_1 H_q))^T ReLU(W_2 H_p).
pub fn affine_matrix<F: Scalar>(
    g: &mut Graph<F>,
    pair: &AttentionPair<Var>,
    h_q: Var,
    h_p: Var,
) -> Var {
    let left = g.matmul(pair.w1, h_q);
    let left = g.relu(left);
    let right = g.matmul(pair.w2, h_p);
    let right = g.relu(right);
    g.matmul_ex(left, true, right, false)
}

/// Mutual attention: each question column becomes a softmax mixture of
/// passage states and vice versa.
pub fn bi_attention<F: Scalar>(
    g: &mut Graph<F>,
    s: Var,
    h_q: Var,
    h_p: Var,
) -> (Var, Var) {
    let s_t = g.transpose(s);
    let attn_q = g.softmax_columns(s_t);
    let hq_hat = g.matmul(h_p, attn_q);
    let attn_p = g.softmax_columns(s);
    let hp_hat = g.matmul(h_q, attn_p);
    (hq_hat, hp_hat)
}

/// Reassemble one full-length sequence from the two attended views.
/// With the shared node, the two node outputs are summed; under
/// no_share_node the passage view's node column is copied through.
pub fn merge_universal_outputs<F: Scalar>(
    g: &mut Graph<F>,
    hq_hat: Var,
    hp_hat: Var,
    m: usize,
    cfg: &ModelConfig,
) -> Var {
    let ab = &cfg.ablation;
    if ab.no_universal_node || ab.no_share_node {
        return g.concat(&[hq_hat, hp_hat], 1);
    }
    let p_cols = g.value(hp_hat).cols();
    let q_part = g.slice(hq_hat, 1, 0, m);
    let q_node = g.slice(hq_hat, 1, m, m + 1);
    let p_node = g.slice(hp_hat, 1, 0, 1);
    let node = g.add(q_node, p_node);
    let p_part = g.slice(hp_hat, 1, 1, p_cols);
    g.concat(&[q_part, node, p_part], 1)
}

/// Attended counterparts of the three encoder levels.
pub struct AttendedLevels {
    pub low: Var,
    pub high: Var,
    pub full: Var,
}

/// One bi-attention pass per level with that level's W_1/W_2; the
/// self_attn_only ablation instead applies a single unsplit
/// self-attention over the stacked levels and returns its three
/// equal-width row bands.
pub fn multi_level_attention<F: Scalar>(
    g: &mut Graph<F>,
    params: &ModelParams<Var>,
    levels: &EncodedLevels,
    m: usize,
    n: usize,
    cfg: &ModelConfig,
) -> AttendedLevels {
    if cfg.ablation.self_attn_only {
        let stacked = g.concat(&[levels.low, levels.high, levels.full], 0);
        let scores = g.matmul_ex(stacked, true, stacked, false);
        let attn = g.softmax_columns(scores);
        let fused = g.matmul(stacked, attn);
        let band = g.value(levels.low).rows();
        return AttendedLevels {
            low: g.slice(fused, 0, 0, band),
            high: g.slice(fused, 0, band, 2 * band),
            full: g.slice(fused, 0, 2 * band, 3 * band),
        };
    }
    let pairs = params
        .attn
        .as_ref()
        .expect("attention parameters are allocated unless self_attn_only");
    let attend = |g: &mut Graph<F>, h: Var, pair: &AttentionPair<Var>| {
        let (h_q, h_p) = split_with_shared_node(g, h, m, n, cfg);
        let s = affine_matrix(g, pair, h_q, h_p);
        let (hq_hat, hp_hat) = bi_attention(g, s, h_q, h_p);
        merge_universal_outputs(g, hq_hat, hp_hat, m, cfg)
    };
    AttendedLevels {
        low: attend(g, levels.low, &pairs[0]),
        high: attend(g, levels.high, &pairs[1]),
        full: attend(g, levels.full, &pairs[2]),
    }
}

pub struct FusedVars {
    pub h_a: Var,
    pub a_full: Var,
    pub a_hat: Var,
    pub o: Var,
}

/// H^A = BiLSTM([H^l; H^h; H^f; H-hat levels]); A = [V; H^A];
/// A-hat = A softmax(A^T A); O = BiLSTM([H^A; A-hat]).
pub fn final_fusion<F: Scalar, R: Rng>(
    g: &mut Graph<F>,
    params: &ModelParams<Var>,
    v: Var,
    levels: &EncodedLevels,
    hats: &AttendedLevels,
    cfg: &ModelConfig,
    training: bool,
    rng: &mut R,
) -> FusedVars {
    let h_in = g.concat(
        &[levels.low, levels.high, levels.full, hats.low, hats.high, hats.full],
        0,
    );
    let h_a = bilstm(g, &params.enc_attn, h_in);
    let h_a = dropout(g, h_a, cfg.dropout, training, rng);
    let a_full = g.concat(&[v, h_a], 0);
    let scores = g.matmul_ex(a_full, true, a_full, false);
    let attn = g.softmax_columns(scores);
    let a_hat = g.matmul(a_full, attn);
    let o_in = g.concat(&[h_a, a_hat], 0);
    let o = bilstm(g, &params.enc_out, o_in);
    let o = dropout(g, o, cfg.dropout, training, rng);
    FusedVars { h_a, a_full, a_hat, o }
}

/// O_Q = question columns; O_P = the node column followed by the
/// passage columns (just the passage columns when the node is absent).
pub fn split_output<F: Scalar>(
    g: &mut Graph<F>,
    o: Var,
    m: usize,
    n: usize,
    cfg: &ModelConfig,
) -> (Var, Var) {
    let o_q = g.slice(o, 1, 0, m);
    let hi = if cfg.ablation.no_universal_node { m + n } else { m + n + 1 };
    let o_p = g.slice(o, 1, m, hi);
    (o_q, o_p)
}
