//! The reading-comprehension model: a unified question/passage encoder
//! with a universal node, three-level bi-attention, final fusion, and
//! the answer/no-answer/verifier heads.

pub mod encoder;
pub mod heads;
pub mod interaction;
pub mod predict;

pub use heads::{decode_span, final_decision, pointer_no_answer_score, PredictionRecord};
pub use predict::{predict_dataset, predict_one, RawPrediction};

use crate::data::TokenizedExample;
use crate::data::{TagVocab, Vocab};
use crate::layers::{init_matrix, BiLstmParams};
use crate::tensor::{Graph, Var};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Which of the three loss terms participate in training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossTerms {
    pub answer: bool,
    pub no_answer: bool,
    pub verifier: bool,
}

impl Default for LossTerms {
    fn default() -> Self {
        LossTerms { answer: true, no_answer: true, verifier: true }
    }
}

impl LossTerms {
    pub fn any(&self) -> bool {
        self.answer || self.no_answer || self.verifier
    }

    /// Parse a comma-separated subset of {A, NA, AV}.
    pub fn parse(s: &str) -> Result<Self, String> {
        let mut t = LossTerms { answer: false, no_answer: false, verifier: false };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "A" => t.answer = true,
                "NA" => t.no_answer = true,
                "AV" => t.verifier = true,
                other => return Err(format!("unknown loss term {other:?}; expected A, NA, AV")),
            }
        }
        if !t.any() {
            return Err("loss term set must be non-empty".into());
        }
        Ok(t)
    }
}

/// Structural ablations. Each corresponds to one model variant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    /// Drop the universal node column entirely.
    pub no_universal_node: bool,
    /// Attach the node only to the passage side during attention.
    pub no_share_node: bool,
    /// Encode question and passage as disjoint sequences (shared weights).
    pub separate_encoders: bool,
    /// Drop the auxiliary plausible-answer pointer.
    pub no_plausible_head: bool,
    /// Drop the verifier head (W_f and the question-summary weight).
    pub no_verifier: bool,
    /// Replace the bi-attention block with one self-attention over the
    /// stacked encoder levels.
    pub self_attn_only: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub word_dim: usize,
    /// Optional extra embedding channel initialized from a vectors file.
    pub extra_embed_dim: usize,
    pub pos_dim: usize,
    pub ner_dim: usize,
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub dropout: f64,
    pub max_span_len: usize,
    pub use_tf_idf: bool,
    /// Cut the gradient path from the verifier features back into the
    /// pointer distributions.
    pub detach_verifier_features: bool,
    pub loss_terms: LossTerms,
    pub ablation: AblationFlags,
    pub vocab_size: usize,
    pub pos_vocab_size: usize,
    pub ner_vocab_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            word_dim: 100,
            extra_embed_dim: 0,
            pos_dim: 12,
            ner_dim: 8,
            hidden_dim: 125,
            attention_dim: 250,
            dropout: 0.3,
            max_span_len: 30,
            use_tf_idf: false,
            detach_verifier_features: false,
            loss_terms: LossTerms::default(),
            ablation: AblationFlags::default(),
            vocab_size: 3,
            pos_vocab_size: 1,
            ner_vocab_size: 1,
        }
    }
}

impl ModelConfig {
    /// Per-token embedding width: word + extra + POS + NER + 3 match
    /// bits + term frequency.
    pub fn d(&self) -> usize {
        self.word_dim + self.extra_embed_dim + self.pos_dim + self.ner_dim + 4
    }

    /// Reduced configuration for finite-difference checks: every block
    /// present, every width minimal.
    pub fn tiny() -> Self {
        ModelConfig {
            word_dim: 1,
            extra_embed_dim: 0,
            pos_dim: 0,
            ner_dim: 0,
            hidden_dim: 3,
            attention_dim: 6,
            dropout: 0.0,
            vocab_size: 8,
            pos_vocab_size: 1,
            ner_vocab_size: 1,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.word_dim == 0 {
            return Err("word_dim must be positive".into());
        }
        if self.hidden_dim == 0 || self.attention_dim == 0 {
            return Err("hidden_dim and attention_dim must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(format!("dropout must satisfy 0 <= rate < 1, got {}", self.dropout));
        }
        if self.max_span_len == 0 {
            return Err("max_span_len must be positive".into());
        }
        if self.vocab_size < 3 {
            return Err("vocab_size must cover the three special tokens".into());
        }
        if self.pos_dim > 0 && self.pos_vocab_size == 0 {
            return Err("pos_dim > 0 requires a POS vocabulary".into());
        }
        if self.ner_dim > 0 && self.ner_vocab_size == 0 {
            return Err("ner_dim > 0 requires a NER vocabulary".into());
        }
        if !self.loss_terms.any() {
            return Err("loss term set must be non-empty".into());
        }
        if self.ablation.no_verifier && self.loss_terms.verifier {
            return Err("loss term AV requires the verifier head (drop --no-verifier or AV)".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct AttentionPair<T> {
    pub w1: T,
    pub w2: T,
}

impl<T> AttentionPair<T> {
    fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> AttentionPair<U> {
        AttentionPair { w1: f(&self.w1), w2: f(&self.w2) }
    }

    fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T)) {
        f(format!("{prefix}.w1"), &self.w1);
        f(format!("{prefix}.w2"), &self.w2);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut T)) {
        f(format!("{prefix}.w1"), &mut self.w1);
        f(format!("{prefix}.w2"), &mut self.w2);
    }
}

/// Full parameter set. Optional fields exist exactly when the
/// configuration allocates them, so the census is the source of truth
/// for checkpoint layout and optimizer slots.
#[derive(Clone, Debug)]
pub struct ModelParams<T> {
    pub word_emb: T,
    pub extra_emb: Option<T>,
    pub pos_emb: Option<T>,
    pub ner_emb: Option<T>,
    pub node_emb: Option<T>,
    pub enc_low: BiLstmParams<T>,
    pub enc_high: BiLstmParams<T>,
    pub enc_full: BiLstmParams<T>,
    /// One W_1/W_2 pair per level (low, high, full).
    pub attn: Option<[AttentionPair<T>; 3]>,
    pub enc_attn: BiLstmParams<T>,
    pub enc_out: BiLstmParams<T>,
    pub w_s: T,
    pub w_e: T,
    pub w_s_plausible: Option<T>,
    pub w_e_plausible: Option<T>,
    pub w_q: Option<T>,
    pub w_f: Option<T>,
}

pub const ATTN_LEVEL_NAMES: [&str; 3] = ["low", "high", "full"];

impl<T> ModelParams<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ModelParams<U> {
        ModelParams {
            word_emb: f(&self.word_emb),
            extra_emb: self.extra_emb.as_ref().map(&mut f),
            pos_emb: self.pos_emb.as_ref().map(&mut f),
            ner_emb: self.ner_emb.as_ref().map(&mut f),
            node_emb: self.node_emb.as_ref().map(&mut f),
            enc_low: self.enc_low.map(&mut f),
            enc_high: self.enc_high.map(&mut f),
            enc_full: self.enc_full.map(&mut f),
            attn: self
                .attn
                .as_ref()
                .map(|pairs| std::array::from_fn(|i| pairs[i].map(&mut f))),
            enc_attn: self.enc_attn.map(&mut f),
            enc_out: self.enc_out.map(&mut f),
            w_s: f(&self.w_s),
            w_e: f(&self.w_e),
            w_s_plausible: self.w_s_plausible.as_ref().map(&mut f),
            w_e_plausible: self.w_e_plausible.as_ref().map(&mut f),
            w_q: self.w_q.as_ref().map(&mut f),
            w_f: self.w_f.as_ref().map(&mut f),
        }
    }

    /// Visit every tensor with its canonical name, in the fixed order
    /// that defines checkpoint layout and optimizer state slots.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(String, &'a T)) {
        f("word_emb".into(), &self.word_emb);
        if let Some(t) = &self.extra_emb {
            f("extra_emb".into(), t);
        }
        if let Some(t) = &self.pos_emb {
            f("pos_emb".into(), t);
        }
        if let Some(t) = &self.ner_emb {
            f("ner_emb".into(), t);
        }
        if let Some(t) = &self.node_emb {
            f("node_emb".into(), t);
        }
        self.enc_low.visit("enc_low", f);
        self.enc_high.visit("enc_high", f);
        self.enc_full.visit("enc_full", f);
        if let Some(pairs) = &self.attn {
            for (pair, name) in pairs.iter().zip(ATTN_LEVEL_NAMES) {
                pair.visit(&format!("attn.{name}"), f);
            }
        }
        self.enc_attn.visit("enc_attn", f);
        self.enc_out.visit("enc_out", f);
        f("w_s".into(), &self.w_s);
        f("w_e".into(), &self.w_e);
        if let Some(t) = &self.w_s_plausible {
            f("w_s_plausible".into(), t);
        }
        if let Some(t) = &self.w_e_plausible {
            f("w_e_plausible".into(), t);
        }
        if let Some(t) = &self.w_q {
            f("w_q".into(), t);
        }
        if let Some(t) = &self.w_f {
            f("w_f".into(), t);
        }
    }

    /// Mutable traversal with names, in the same order as `visit`.
    pub fn visit_mut(&mut self, f: &mut impl FnMut(String, &mut T)) {
        f("word_emb".into(), &mut self.word_emb);
        if let Some(t) = &mut self.extra_emb {
            f("extra_emb".into(), t);
        }
        if let Some(t) = &mut self.pos_emb {
            f("pos_emb".into(), t);
        }
        if let Some(t) = &mut self.ner_emb {
            f("ner_emb".into(), t);
        }
        if let Some(t) = &mut self.node_emb {
            f("node_emb".into(), t);
        }
        self.enc_low.visit_mut("enc_low", f);
        self.enc_high.visit_mut("enc_high", f);
        self.enc_full.visit_mut("enc_full", f);
        if let Some(pairs) = &mut self.attn {
            for (pair, name) in pairs.iter_mut().zip(ATTN_LEVEL_NAMES) {
                pair.visit_mut(&format!("attn.{name}"), f);
            }
        }
        self.enc_attn.visit_mut("enc_attn", f);
        self.enc_out.visit_mut("enc_out", f);
        f("w_s".into(), &mut self.w_s);
        f("w_e".into(), &mut self.w_e);
        if let Some(t) = &mut self.w_s_plausible {
            f("w_s_plausible".into(), t);
        }
        if let Some(t) = &mut self.w_e_plausible {
            f("w_e_plausible".into(), t);
        }
        if let Some(t) = &mut self.w_q {
            f("w_q".into(), t);
        }
        if let Some(t) = &mut self.w_f {
            f("w_f".into(), t);
        }
    }

    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        self.visit(&mut |name, t| out.push((name, t)));
        out
    }
}

/// Expected (name, shape) listing for a configuration, computed
/// directly from the widths rather than from an instantiated model.
pub fn census(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = cfg.d();
    let h = cfg.hidden_dim;
    let ab = &cfg.ablation;
    let mut out: Vec<(String, Vec<usize>)> = Vec::new();
    out.push(("word_emb".into(), vec![cfg.vocab_size, cfg.word_dim]));
    if cfg.extra_embed_dim > 0 {
        out.push(("extra_emb".into(), vec![cfg.vocab_size, cfg.extra_embed_dim]));
    }
    if cfg.pos_dim > 0 {
        out.push(("pos_emb".into(), vec![cfg.pos_vocab_size, cfg.pos_dim]));
    }
    if cfg.ner_dim > 0 {
        out.push(("ner_emb".into(), vec![cfg.ner_vocab_size, cfg.ner_dim]));
    }
    if !ab.no_universal_node {
        out.push(("node_emb".into(), vec![d, 1]));
    }
    let bilstm = |name: &str, input_dim: usize, out: &mut Vec<(String, Vec<usize>)>| {
        for dir in ["fwd", "bwd"] {
            for gate in ["i", "f", "o", "g"] {
                out.push((format!("{name}.{dir}.wx_{gate}"), vec![h, input_dim]));
                out.push((format!("{name}.{dir}.wh_{gate}"), vec![h, h]));
                out.push((format!("{name}.{dir}.b_{gate}"), vec![h, 1]));
            }
        }
    };
    bilstm("enc_low", d, &mut out);
    bilstm("enc_high", 2 * h, &mut out);
    bilstm("enc_full", 4 * h, &mut out);
    if !ab.self_attn_only {
        for name in ATTN_LEVEL_NAMES {
            out.push((format!("attn.{name}.w1"), vec![cfg.attention_dim, 2 * h]));
            out.push((format!("attn.{name}.w2"), vec![cfg.attention_dim, 2 * h]));
        }
    }
    bilstm("enc_attn", 12 * h, &mut out);
    bilstm("enc_out", d + 4 * h, &mut out);
    out.push(("w_s".into(), vec![2 * h, 2 * h]));
    out.push(("w_e".into(), vec![2 * h, 2 * h]));
    if !ab.no_plausible_head {
        out.push(("w_s_plausible".into(), vec![2 * h, 2 * h]));
        out.push(("w_e_plausible".into(), vec![2 * h, 2 * h]));
    }
    if !ab.no_verifier {
        out.push(("w_q".into(), vec![2 * h, 1]));
        let f_dim = if ab.no_universal_node { 6 * h } else { 8 * h };
        out.push(("w_f".into(), vec![f_dim, 1]));
    }
    out
}

/// Total scalar parameter count for a configuration.
pub fn parameter_count(cfg: &ModelConfig) -> usize {
    census(cfg).iter().map(|(_, s)| s.iter().product::<usize>()).sum()
}

impl<F: Scalar> ModelParams<Tensor<F>> {
    pub fn init<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let d = cfg.d();
        let h = cfg.hidden_dim;
        let ab = &cfg.ablation;
        let emb = |rows: usize, dim: usize, rng: &mut R| init_matrix::<F, R>(rows, dim, rng);
        let node_scale = 1.0 / (d as f64).sqrt();
        ModelParams {
            word_emb: emb(cfg.vocab_size, cfg.word_dim, rng),
            extra_emb: (cfg.extra_embed_dim > 0)
                .then(|| emb(cfg.vocab_size, cfg.extra_embed_dim, rng)),
            pos_emb: (cfg.pos_dim > 0).then(|| emb(cfg.pos_vocab_size, cfg.pos_dim, rng)),
            ner_emb: (cfg.ner_dim > 0).then(|| emb(cfg.ner_vocab_size, cfg.ner_dim, rng)),
            node_emb: (!ab.no_universal_node)
                .then(|| Tensor::uniform(vec![d, 1], -node_scale, node_scale, rng)),
            enc_low: BiLstmParams::init(d, h, rng),
            enc_high: BiLstmParams::init(2 * h, h, rng),
            enc_full: BiLstmParams::init(4 * h, h, rng),
            attn: (!ab.self_attn_only).then(|| {
                std::array::from_fn(|_| AttentionPair {
                    w1: init_matrix(cfg.attention_dim, 2 * h, rng),
                    w2: init_matrix(cfg.attention_dim, 2 * h, rng),
                })
            }),
            enc_attn: BiLstmParams::init(12 * h, h, rng),
            enc_out: BiLstmParams::init(d + 4 * h, h, rng),
            w_s: init_matrix(2 * h, 2 * h, rng),
            w_e: init_matrix(2 * h, 2 * h, rng),
            w_s_plausible: (!ab.no_plausible_head).then(|| init_matrix(2 * h, 2 * h, rng)),
            w_e_plausible: (!ab.no_plausible_head).then(|| init_matrix(2 * h, 2 * h, rng)),
            w_q: (!ab.no_verifier).then(|| init_matrix(2 * h, 1, rng)),
            w_f: (!ab.no_verifier).then(|| {
                let f_dim = if ab.no_universal_node { 6 * h } else { 8 * h };
                init_matrix(f_dim, 1, rng)
            }),
        }
    }

    /// Register every tensor as a graph parameter, in visit order.
    pub fn bind(&self, g: &mut Graph<F>) -> ModelParams<Var> {
        self.map(|t| g.param(t.clone()))
    }
}

/// Integer-encoded model input for one example: vocabulary ids, tag
/// ids, and the four feature channels in row-major [4 x len] layout.
#[derive(Clone, Debug)]
pub struct ModelInput {
    pub id: String,
    pub q_word_ids: Vec<usize>,
    pub p_word_ids: Vec<usize>,
    pub q_pos_ids: Vec<usize>,
    pub p_pos_ids: Vec<usize>,
    pub q_ner_ids: Vec<usize>,
    pub p_ner_ids: Vec<usize>,
    pub q_feats: Vec<f64>,
    pub p_feats: Vec<f64>,
    pub answerable: bool,
    pub gold_span: Option<(usize, usize)>,
    pub plausible_span: Option<(usize, usize)>,
    pub forced_unanswerable: bool,
}

impl ModelInput {
    pub fn m(&self) -> usize {
        self.q_word_ids.len()
    }

    pub fn n(&self) -> usize {
        self.p_word_ids.len()
    }
}

fn feature_rows(
    tokens: usize,
    feats: &[crate::data::features::TokenFeatures],
) -> Vec<f64> {
    let mut rows = vec![0.0; 4 * tokens];
    for (i, f) in feats.iter().enumerate() {
        rows[i] = f.exact_match as usize as f64;
        rows[tokens + i] = f.lower_match as usize as f64;
        rows[2 * tokens + i] = f.lemma_match as usize as f64;
        rows[3 * tokens + i] = f.tf;
    }
    rows
}

pub fn encode_input(
    ex: &TokenizedExample,
    vocab: &Vocab,
    pos_vocab: &TagVocab,
    ner_vocab: &TagVocab,
) -> ModelInput {
    let q_texts = ex.q_texts();
    let p_texts = ex.p_texts();
    ModelInput {
        id: ex.id.clone(),
        q_word_ids: q_texts.iter().map(|t| vocab.id(t)).collect(),
        p_word_ids: p_texts.iter().map(|t| vocab.id(t)).collect(),
        q_pos_ids: ex.tags.q_pos.iter().map(|t| pos_vocab.id(t)).collect(),
        p_pos_ids: ex.tags.p_pos.iter().map(|t| pos_vocab.id(t)).collect(),
        q_ner_ids: ex.tags.q_ner.iter().map(|t| ner_vocab.id(t)).collect(),
        p_ner_ids: ex.tags.p_ner.iter().map(|t| ner_vocab.id(t)).collect(),
        q_feats: feature_rows(ex.m(), &ex.features.question),
        p_feats: feature_rows(ex.n(), &ex.features.passage),
        answerable: ex.answerable,
        gold_span: ex.gold_span,
        plausible_span: ex.plausible_span,
        forced_unanswerable: ex.forced_unanswerable,
    }
}

/// Everything the heads and the decoder need from one forward pass.
pub struct Forward {
    pub o_q: Var,
    pub o_p: Var,
    /// Number of pointer slots: n+1 with the node, n without.
    pub slots: usize,
    pub c_q: Var,
    pub log_alpha: Var,
    pub log_beta: Var,
    pub alpha: Var,
    pub beta: Var,
    pub log_alpha_plausible: Option<Var>,
    pub log_beta_plausible: Option<Var>,
    pub verifier_logit: Option<Var>,
    pub p_unanswerable: Option<Var>,
}

pub fn forward<F: Scalar, R: Rng>(
    g: &mut Graph<F>,
    params: &ModelParams<Var>,
    input: &ModelInput,
    cfg: &ModelConfig,
    training: bool,
    rng: &mut R,
) -> Forward {
    let m = input.m();
    let n = input.n();
    let (q_embed, p_embed) = encoder::assemble_embeddings(g, params, input, cfg, training, rng);
    let v = encoder::inject_universal_node(g, params, q_embed, p_embed, cfg, training, rng);
    let levels = encoder::word_level_fusion(g, params, v, m, cfg, training, rng);
    let hats = interaction::multi_level_attention(g, params, &levels, m, n, cfg);
    let fused = interaction::final_fusion(g, params, v, &levels, &hats, cfg, training, rng);
    let (o_q, o_p) = interaction::split_output(g, fused.o, m, n, cfg);

    let c_q = heads::question_summary(g, params, o_q, m);
    let (log_alpha, log_beta, alpha, beta) =
        heads::pointer_distributions(g, c_q, o_p, params.w_s, params.w_e);
    let (log_alpha_plausible, log_beta_plausible) =
        match (&params.w_s_plausible, &params.w_e_plausible) {
            (Some(ws), Some(we)) => {
                let (la, lb, _, _) = heads::pointer_distributions(g, c_q, o_p, *ws, *we);
                (Some(la), Some(lb))
            }
            _ => (None, None),
        };

    let (verifier_logit, p_unanswerable) = if let Some(w_f) = &params.w_f {
        let logit = heads::verifier_logit(g, o_p, alpha, beta, c_q, *w_f, cfg);
        (Some(logit), Some(g.sigmoid(logit)))
    } else {
        (None, None)
    };

    let slots = if cfg.ablation.no_universal_node { n } else { n + 1 };
    Forward {
        o_q,
        o_p,
        slots,
        c_q,
        log_alpha,
        log_beta,
        alpha,
        beta,
        log_alpha_plausible,
        log_beta_plausible,
        verifier_logit,
        p_unanswerable,
    }
}

/// Per-example loss terms as graph nodes. Absent terms contribute
/// nothing: `total` sums only what applies to this example under the
/// enabled term set.
pub struct LossVars {
    pub l_a: Option<Var>,
    pub l_na: Option<Var>,
    pub l_av: Option<Var>,
    pub total: Var,
}

pub fn example_loss<F: Scalar>(
    g: &mut Graph<F>,
    fwd: &Forward,
    input: &ModelInput,
    cfg: &ModelConfig,
) -> LossVars {
    let terms = &cfg.loss_terms;
    let node_offset = if cfg.ablation.no_universal_node { 0 } else { 1 };

    let l_a = if input.answerable && terms.answer {
        let (a, b) = input.gold_span.expect("answerable example without a gold span");
        Some(heads::answer_loss(g, fwd.log_alpha, fwd.log_beta, a, b, node_offset))
    } else {
        None
    };

    let l_na = if !input.answerable && terms.no_answer {
        Some(heads::no_answer_loss(
            g,
            fwd.log_alpha,
            fwd.log_beta,
            fwd.log_alpha_plausible,
            fwd.log_beta_plausible,
            input.plausible_span,
            cfg.ablation.no_universal_node,
        ))
    } else {
        None
    };

    let l_av = match (terms.verifier, fwd.verifier_logit) {
        (true, Some(logit)) => Some(heads::verifier_loss(g, logit, input.answerable)),
        _ => None,
    };

    let mut total: Option<Var> = None;
    for term in [l_a, l_na, l_av].into_iter().flatten() {
        total = Some(match total {
            Some(acc) => g.add(acc, term),
            None => term,
        });
    }
    let total = total.unwrap_or_else(|| g.constant(Tensor::scalar(F::from_f64(0.0))));
    LossVars { l_a, l_na, l_av, total }
}
