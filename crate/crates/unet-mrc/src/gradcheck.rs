//! Full-model finite-difference gradient checking at 64-bit precision.
//!
//! The loss under test is the sum of per-example totals over a small batch
//! chosen so every parameter tensor participates: one answerable example and
//! one unanswerable example carrying a plausible span.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{example_loss, forward, ModelConfig, ModelInput, ModelParams};
use crate::tensor::{Graph, Tensor};

fn loss_value(params: &ModelParams<Tensor<f64>>, cfg: &ModelConfig, inputs: &[ModelInput]) -> f64 {
    let mut g: Graph<f64> = Graph::new();
    let bound = params.bind(&mut g);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut total = 0.0;
    for ex in inputs {
        let fwd = forward(&mut g, &bound, ex, cfg, false, &mut rng);
        let lv = example_loss(&mut g, &fwd, ex, cfg);
        total += g.value(lv.total).data()[0];
    }
    total
}

/// Backward-pass gradients of the summed loss, one tensor per named
/// parameter in visit order. Parameters the loss never touches get zeros.
pub fn analytic_gradients(
    params: &ModelParams<Tensor<f64>>,
    cfg: &ModelConfig,
    inputs: &[ModelInput],
) -> Vec<(String, Tensor<f64>)> {
    let mut g: Graph<f64> = Graph::new();
    let bound = params.bind(&mut g);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut sum = None;
    for ex in inputs {
        let fwd = forward(&mut g, &bound, ex, cfg, false, &mut rng);
        let lv = example_loss(&mut g, &fwd, ex, cfg);
        sum = Some(match sum {
            None => lv.total,
            Some(acc) => g.add(acc, lv.total),
        });
    }
    g.backward(sum.expect("gradcheck needs at least one example"));

    let mut shapes = Vec::new();
    params.visit(&mut |name, t: &Tensor<f64>| shapes.push((name, t.shape().to_vec())));
    let mut out = Vec::new();
    let mut i = 0;
    bound.visit(&mut |name, var| {
        let grad = match g.grad(*var) {
            Some(t) => t.clone(),
            None => Tensor::zeros(shapes[i].1.clone()),
        };
        out.push((name, grad));
        i += 1;
    });
    out
}

/// Central differences, step `step`, one full loss evaluation per
/// perturbation. O(parameter count) forward passes; intended for tiny
/// configs only.
pub fn numeric_gradients(
    params: &ModelParams<Tensor<f64>>,
    cfg: &ModelConfig,
    inputs: &[ModelInput],
    step: f64,
) -> Vec<(String, Tensor<f64>)> {
    let mut meta = Vec::new();
    params.visit(&mut |name, t: &Tensor<f64>| meta.push((name, t.shape().to_vec(), t.data().len())));

    let perturbed = |t_idx: usize, e_idx: usize, delta: f64| -> f64 {
        let mut work = params.map(|t| t.clone());
        let mut i = 0;
        work.visit_mut(&mut |_, t: &mut Tensor<f64>| {
            if i == t_idx {
                t.data_mut()[e_idx] += delta;
            }
            i += 1;
        });
        loss_value(&work, cfg, inputs)
    };

    meta.into_iter()
        .enumerate()
        .map(|(t_idx, (name, shape, len))| {
            let mut grad = vec![0.0; len];
            for (e_idx, slot) in grad.iter_mut().enumerate() {
                let plus = perturbed(t_idx, e_idx, step);
                let minus = perturbed(t_idx, e_idx, -step);
                *slot = (plus - minus) / (2.0 * step);
            }
            (name, Tensor::from_vec(shape, grad))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GradcheckEntry {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_analytic: f64,
    pub nonzero: bool,
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub entries: Vec<GradcheckEntry>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub all_nonzero: bool,
    pub passed: bool,
}

impl GradcheckReport {
    pub fn worst(&self) -> Option<&GradcheckEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.max_rel_err.partial_cmp(&b.max_rel_err).unwrap())
    }
}

/// Element error is |a - n| / max(|a| + |n|, 1e-4): the floor treats
/// absolute disagreement under ~1e-8 as central-difference noise while
/// still flagging genuinely wrong small gradients.
pub fn compare_gradients(
    analytic: &[(String, Tensor<f64>)],
    numeric: &[(String, Tensor<f64>)],
    tolerance: f64,
) -> GradcheckReport {
    assert_eq!(analytic.len(), numeric.len(), "gradient lists must align");
    let mut entries = Vec::new();
    for ((an_name, a), (nu_name, n)) in analytic.iter().zip(numeric) {
        assert_eq!(an_name, nu_name, "gradient lists must align by name");
        assert_eq!(a.shape(), n.shape());
        let mut max_rel = 0.0f64;
        let mut max_abs = 0.0f64;
        for (av, nv) in a.data().iter().zip(n.data()) {
            let rel = (av - nv).abs() / (av.abs() + nv.abs()).max(1e-4);
            max_rel = max_rel.max(rel);
            max_abs = max_abs.max(av.abs());
        }
        entries.push(GradcheckEntry {
            name: an_name.clone(),
            max_rel_err: max_rel,
            max_abs_analytic: max_abs,
            nonzero: max_abs > 0.0,
        });
    }
    let max_rel_err = entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max);
    let all_nonzero = entries.iter().all(|e| e.nonzero);
    GradcheckReport {
        entries,
        max_rel_err,
        tolerance,
        all_nonzero,
        passed: max_rel_err < tolerance,
    }
}

/// A batch that exercises every head: one answerable example with a gold
/// span, one unanswerable example with a plausible span. Word ids assume
/// `cfg.vocab_size >= 8`.
pub fn default_inputs() -> Vec<ModelInput> {
    let mk = |id: &str,
              q: Vec<usize>,
              p: Vec<usize>,
              answerable: bool,
              gold: Option<(usize, usize)>,
              plausible: Option<(usize, usize)>| {
        let mut q_feats = vec![0.0; 4 * q.len()];
        q_feats[0] = 1.0;
        let mut p_feats = vec![0.0; 4 * p.len()];
        p_feats[p.len()] = 1.0;
        ModelInput {
            id: id.into(),
            q_word_ids: q,
            p_word_ids: p,
            q_pos_ids: vec![],
            p_pos_ids: vec![],
            q_ner_ids: vec![],
            p_ner_ids: vec![],
            q_feats,
            p_feats,
            answerable,
            gold_span: gold,
            plausible_span: plausible,
            forced_unanswerable: false,
        }
    };
    vec![
        mk("g0", vec![3, 4], vec![5, 6], true, Some((0, 1)), None),
        mk("g1", vec![4, 5], vec![6, 7], false, None, Some((1, 1))),
    ]
}

/// End-to-end check: seeded init, analytic vs numeric, compared at
/// `tolerance`.
pub fn run_gradcheck(cfg: &ModelConfig, seed: u64, step: f64, tolerance: f64) -> GradcheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: ModelParams<Tensor<f64>> = ModelParams::init(cfg, &mut rng);
    let inputs = default_inputs();
    let analytic = analytic_gradients(&params, cfg, &inputs);
    let numeric = numeric_gradients(&params, cfg, &inputs, step);
    compare_gradients(&analytic, &numeric, tolerance)
}
