//! Inference: run the model in eval mode, decode spans, and attach an
//! unanswerability probability per example.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::heads::{decode_span, final_decision, pointer_no_answer_score, PredictionRecord};
use super::{forward, ModelConfig, ModelInput, ModelParams};
use crate::data::TokenizedExample;
use crate::eval::{GoldLabel, SweepInput};
use crate::tensor::{Graph, Scalar, Tensor};

/// Decode output before any threshold is applied; a sweep can re-threshold
/// these without another forward pass.
#[derive(Debug, Clone)]
pub struct RawPrediction {
    pub id: String,
    pub answer_text: String,
    pub span: Option<(usize, usize)>,
    pub span_score: f64,
    pub p_unanswerable: f64,
    pub forced_unanswerable: bool,
}

impl RawPrediction {
    pub fn decide(&self, threshold: f64) -> PredictionRecord {
        final_decision(
            &self.id,
            &self.answer_text,
            self.span,
            self.p_unanswerable,
            threshold,
            self.forced_unanswerable,
        )
    }

    pub fn sweep_input(&self, gold: GoldLabel) -> SweepInput {
        SweepInput {
            answer_text: self.answer_text.clone(),
            span: self.span,
            p_unanswerable: self.p_unanswerable,
            forced_unanswerable: self.forced_unanswerable,
            gold,
        }
    }
}

/// Models without a universal node have no no-answer slot; scoring and
/// decoding expect one at index 0, so a zero-probability slot is prepended.
fn with_node_slot(values: &[f64], has_node: bool) -> Vec<f64> {
    if has_node {
        values.to_vec()
    } else {
        let mut out = Vec::with_capacity(values.len() + 1);
        out.push(0.0);
        out.extend_from_slice(values);
        out
    }
}

/// Runs one already-encoded example. The graph should be fresh or shared
/// across a small batch; parameters must be bound into it.
pub fn predict_one<F: Scalar>(
    g: &mut Graph<F>,
    bound: &ModelParams<crate::tensor::Var>,
    ex: &TokenizedExample,
    input: &ModelInput,
    cfg: &ModelConfig,
) -> RawPrediction {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fwd = forward(g, bound, input, cfg, false, &mut rng);
    let to_f64 = |v: crate::tensor::Var| -> Vec<f64> {
        g.value(v).data().iter().map(|x| x.into_f64()).collect()
    };
    let has_node = !cfg.ablation.no_universal_node;
    let alpha = with_node_slot(&to_f64(fwd.alpha), has_node);
    let beta = with_node_slot(&to_f64(fwd.beta), has_node);

    let decoded = decode_span(&alpha, &beta, cfg.max_span_len);
    let (span, span_score) = match decoded {
        Some((a, b, score)) => (Some((a, b)), score),
        None => (None, 0.0),
    };
    let answer_text = span.map(|(a, b)| ex.span_text(a, b).to_string()).unwrap_or_default();

    let p_unanswerable = match fwd.p_unanswerable {
        Some(v) => to_f64(v)[0],
        None => pointer_no_answer_score(&alpha, &beta, cfg.max_span_len),
    };

    RawPrediction {
        id: input.id.clone(),
        answer_text,
        span,
        span_score,
        p_unanswerable,
        forced_unanswerable: input.forced_unanswerable,
    }
}

/// Batched inference: parameters are bound once per chunk so tensor clones
/// amortize across examples.
pub fn predict_dataset<F: Scalar>(
    params: &ModelParams<Tensor<F>>,
    cfg: &ModelConfig,
    data: &[(TokenizedExample, ModelInput)],
    chunk_size: usize,
) -> Vec<RawPrediction> {
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.chunks(chunk_size.max(1)) {
        let mut g: Graph<F> = Graph::new();
        let bound = params.bind(&mut g);
        for (ex, input) in chunk {
            out.push(predict_one(&mut g, &bound, ex, input, cfg));
        }
    }
    out
}
