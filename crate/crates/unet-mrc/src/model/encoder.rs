//! Embedding assembly, universal-node injection, and the three-stage
//! BiLSTM encoder producing low, high, and full representations.

use super::{ModelConfig, ModelInput, ModelParams};
use crate::layers::{bilstm, dropout};
use crate::tensor::{Graph, Var};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;

fn embed_side<F: Scalar, R: Rng>(
    g: &mut Graph<F>,
    params: &ModelParams<Var>,
    word_ids: &[usize],
    pos_ids: &[usize],
    ner_ids: &[usize],
    feats: &[f64],
    cfg: &ModelConfig,
    training: bool,
    rng: &mut R,
) -> Var {
    let len = word_ids.len();
    let mut parts = Vec::new();
    let lookup = |g: &mut Graph<F>, table: Var, ids: &[usize]| {
        let rows = g.gather_rows(table, ids);
        g.transpose(rows)
    };
    parts.push(lookup(g, params.word_emb, word_ids));
    if let Some(extra) = params.extra_emb {
        parts.push(lookup(g, extra, word_ids));
    }
    if let Some(pos) = params.pos_emb {
        parts.push(lookup(g, pos, pos_ids));
    }
    if let Some(ner) = params.ner_emb {
        parts.push(lookup(g, ner, ner_ids));
    }
    let feat_data: Vec<F> = feats.iter().map(|&v| F::from_f64(v)).collect();
    parts.push(g.constant(Tensor::from_vec(vec![4, len], feat_data)));
    let stacked = g.concat(&parts, 0);
    dropout(g, stacked, cfg.dropout, training, rng)
}

/// Per-token embeddings for both sides: word vector, optional extra
/// channel, POS, NER, three match bits, and term frequency, with
/// dropout in training mode.
pub fn assemble_embeddings<F: Scalar, R: Rng>(
    g: &mut Graph<F>,
    params: &ModelParams<Var>,
    input: &ModelInput,
    cfg: &ModelConfig,
    training: bool,
    rng: &mut R,
) -> (Var, Var) {
    let q = embed_side(
        g, params, &input.q_word_ids, &input.q_pos_ids, &input.q_ner_ids, &input.q_feats,
        cfg, training, rng,
    );
    let p = embed_side(
        g, params, &input.p_word_ids, &input.p_pos_ids, &input.p_ner_ids, &input.p_feats,
        cfg, training, rng,
    );
    (q, p)
}

/// V = [Q, u, P] with the trainable node column u at index m; without
/// the universal node, V = [Q, P].
pub fn inject_universal_node<F: Scalar, R: Rng>(
    g: &mut Graph<F>,
    params: &ModelParams<Var>,
    q_embed: Var,
    p_embed: Var,
    cfg: &ModelConfig,
    training: bool,
    rng: &mut R,
) -> Var {
    match params.node_emb {
        Some(node) => {
            let node = dropout(g, node, cfg.dropout, training, rng);
            g.concat(&[q_embed, node, p_embed], 1)
        }
        None => g.concat(&[q_embed, p_embed], 1),
    }
}

/// The three encoder outputs, each 2h wide over the full sequence.
pub struct EncodedLevels {
    pub low: Var,
    pub high: Var,
    pub full: Var,
}

fn encode_stack<F: Scalar, R: Rng>(
    g: &mut Graph<F>,
    params: &ModelParams<Var>,
    v: Var,
    cfg: &ModelConfig,
    training: bool,
    rng: &mut R,
) -> (Var, Var, Var) {
    let low = bilstm(g, &params.enc_low, v);
    let low = dropout(g, low, cfg.dropout, training, rng);
    let high = bilstm(g, &params.enc_high, low);
    let high = dropout(g, high, cfg.dropout, training, rng);
    let cat = g.concat(&[low, high], 0);
    let full = bilstm(g, &params.enc_full, cat);
    let full = dropout(g, full, cfg.dropout, training, rng);
    (low, high, full)
}

/// H^l = BiLSTM(V); H^h = BiLSTM(H^l); H^f = BiLSTM([H^l; H^h]).
///
/// Under separate_encoders the same BiLSTMs run on the question columns
/// and the node+passage columns as two disjoint sequences, so no
/// information crosses between the sides at this stage.
pub fn word_level_fusion<F: Scalar, R: Rng>(
    g: &mut Graph<F>,
    params: &ModelParams<Var>,
    v: Var,
    m: usize,
    cfg: &ModelConfig,
    training: bool,
    rng: &mut R,
) -> EncodedLevels {
    if cfg.ablation.separate_encoders {
        let total = g.value(v).cols();
        let v_q = g.slice(v, 1, 0, m);
        let v_p = g.slice(v, 1, m, total);
        let (ql, qh, qf) = encode_stack(g, params, v_q, cfg, training, rng);
        let (pl, ph, pf) = encode_stack(g, params, v_p, cfg, training, rng);
        EncodedLevels {
            low: g.concat(&[ql, pl], 1),
            high: g.concat(&[qh, ph], 1),
            full: g.concat(&[qf, pf], 1),
        }
    } else {
        let (low, high, full) = encode_stack(g, params, v, cfg, training, rng);
        EncodedLevels { low, high, full }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{encode_input, AblationFlags};
    use crate::data::synthetic::{generate_synthetic_corpus, SyntheticSpec};
    use crate::data::{prepare_dataset, Phase, TagVocab, Vocab};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_inputs(seed: u64) -> (ModelConfig, Vocab, Vec<ModelInput>) {
        let spec = SyntheticSpec::new(6, 12, 0.5, seed);
        let raws = generate_synthetic_corpus(&spec);
        let (prepared, _) = prepare_dataset(&raws, None, None, Phase::Train);
        let vocab = Vocab::build(
            prepared
                .iter()
                .flat_map(|ex| {
                    ex.q_texts().into_iter().chain(ex.p_texts()).collect::<Vec<_>>()
                }),
        );
        let tags = TagVocab::build(std::iter::empty());
        let cfg = ModelConfig {
            vocab_size: vocab.len(),
            pos_vocab_size: tags.len(),
            ner_vocab_size: tags.len(),
            ..ModelConfig::tiny()
        };
        let inputs = prepared
            .iter()
            .map(|ex| encode_input(ex, &vocab, &tags, &tags))
            .collect();
        (cfg, vocab, inputs)
    }

    fn forward_v_and_levels(
        cfg: &ModelConfig,
        input: &ModelInput,
    ) -> (Vec<f64>, Vec<f64>, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = ModelParams::<Tensor<f64>>::init(cfg, &mut rng);
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let mut drng = ChaCha8Rng::seed_from_u64(0);
        let (q, p) = assemble_embeddings(&mut g, &bound, input, cfg, false, &mut drng);
        let v = inject_universal_node(&mut g, &bound, q, p, cfg, false, &mut drng);
        let levels = word_level_fusion(&mut g, &bound, v, input.m(), cfg, false, &mut drng);
        let cols = g.value(v).cols();
        let low: Vec<f64> = g.value(levels.low).data().iter().map(|x| x.into_f64()).collect();
        let vv: Vec<f64> = g.value(v).data().iter().map(|x| x.into_f64()).collect();
        (vv, low, cols)
    }

    #[test]
    fn sequence_length_is_m_plus_n_plus_one() {
        let (cfg, _, inputs) = tiny_inputs(1);
        let input = &inputs[0];
        let (_, low, cols) = forward_v_and_levels(&cfg, input);
        assert_eq!(cols, input.m() + input.n() + 1);
        assert_eq!(low.len(), 2 * cfg.hidden_dim * cols);

        let no_node = ModelConfig {
            ablation: AblationFlags { no_universal_node: true, ..Default::default() },
            ..cfg
        };
        let (_, _, cols2) = forward_v_and_levels(&no_node, input);
        assert_eq!(cols2, input.m() + input.n());
    }

    #[test]
    fn node_column_of_v_is_node_embedding() {
        let (cfg, _, inputs) = tiny_inputs(2);
        let input = &inputs[0];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = ModelParams::<Tensor<f64>>::init(&cfg, &mut rng);
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let mut drng = ChaCha8Rng::seed_from_u64(0);
        let (q, p) = assemble_embeddings(&mut g, &bound, input, &cfg, false, &mut drng);
        let v = inject_universal_node(&mut g, &bound, q, p, &cfg, false, &mut drng);
        let vv = g.value(v).clone();
        let node = params.node_emb.as_ref().unwrap();
        let m = input.m();
        for r in 0..cfg.d() {
            assert_eq!(vv.at(r, m), node.at(r, 0));
        }
        let q_val = g.value(q).clone();
        for r in 0..cfg.d() {
            for c in 0..m {
                assert_eq!(vv.at(r, c), q_val.at(r, c));
            }
        }
    }

    #[test]
    fn feature_channels_carry_feature_bits() {
        let (cfg, _, inputs) = tiny_inputs(3);
        let input = &inputs[0];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = ModelParams::<Tensor<f64>>::init(&cfg, &mut rng);
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let mut drng = ChaCha8Rng::seed_from_u64(0);
        let (_, p) = assemble_embeddings(&mut g, &bound, input, &cfg, false, &mut drng);
        let p_val = g.value(p).clone();
        let base = cfg.word_dim + cfg.extra_embed_dim + cfg.pos_dim + cfg.ner_dim;
        let n = input.n();
        for i in 0..n {
            for ch in 0..4 {
                assert_eq!(p_val.at(base + ch, i), input.p_feats[ch * n + i]);
            }
        }
    }

    #[test]
    fn passage_permutation_leaks_into_question_columns_by_default() {
        let (cfg, _, inputs) = tiny_inputs(4);
        let input = inputs
            .iter()
            .find(|i| i.n() >= 2 && i.p_word_ids[0] != i.p_word_ids[1])
            .unwrap();
        let mut permuted = input.clone();
        permuted.p_word_ids.swap(0, 1);
        for row in 0..4 {
            let n = permuted.n();
            permuted.p_feats.swap(row * n, row * n + 1);
        }
        let (_, low_a, _) = forward_v_and_levels(&cfg, input);
        let (_, low_b, _) = forward_v_and_levels(&cfg, &permuted);
        let cols = input.m() + input.n() + 1;
        let h2 = 2 * cfg.hidden_dim;
        let m = input.m();
        let q_cols = move |data: &[f64]| -> Vec<f64> {
            let mut out = Vec::new();
            for r in 0..h2 {
                for c in 0..m {
                    out.push(data[r * cols + c]);
                }
            }
            out
        };
        assert_ne!(q_cols(&low_a), q_cols(&low_b));

        let sep = ModelConfig {
            ablation: AblationFlags { separate_encoders: true, ..Default::default() },
            ..cfg
        };
        let (_, sep_a, _) = forward_v_and_levels(&sep, input);
        let (_, sep_b, _) = forward_v_and_levels(&sep, &permuted);
        assert_eq!(q_cols(&sep_a), q_cols(&sep_b));
        assert_ne!(sep_a, sep_b);
    }

    #[test]
    fn unknown_token_maps_to_unknown_row() {
        let (cfg, vocab, inputs) = tiny_inputs(5);
        let mut input = inputs[0].clone();
        assert_eq!(vocab.id("definitely-not-in-vocab"), crate::data::UNK_ID);
        input.q_word_ids[0] = crate::data::UNK_ID;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = ModelParams::<Tensor<f64>>::init(&cfg, &mut rng);
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let mut drng = ChaCha8Rng::seed_from_u64(0);
        let (q, _) = assemble_embeddings(&mut g, &bound, &input, &cfg, false, &mut drng);
        let q_val = g.value(q).clone();
        for r in 0..cfg.word_dim {
            assert_eq!(q_val.at(r, 0), params.word_emb.at(crate::data::UNK_ID, r));
        }
    }
}
