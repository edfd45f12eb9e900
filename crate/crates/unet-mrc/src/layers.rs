//! Parameterized layers over the autodiff graph: LSTM/BiLSTM, linear
//! maps, inverted dropout, and attention-weighted summaries.
//!
//! Parameter structs are generic over their payload: `Tensor<F>` on the
//! host side (init, checkpointing, optimizer state) and [`Var`] once
//! bound into a graph for a forward pass.

use crate::tensor::{Graph, Scalar, Tensor, Var};
use rand::Rng;

/// One direction of an LSTM: per-gate input weights, recurrent weights,
/// and biases. Parameter count is `4*(input_dim*h + h*h + h)`.
#[derive(Clone, Debug)]
pub struct LstmParams<T> {
    pub wx_i: T,
    pub wh_i: T,
    pub b_i: T,
    pub wx_f: T,
    pub wh_f: T,
    pub b_f: T,
    pub wx_o: T,
    pub wh_o: T,
    pub b_o: T,
    pub wx_g: T,
    pub wh_g: T,
    pub b_g: T,
}

impl<T> LstmParams<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> LstmParams<U> {
        LstmParams {
            wx_i: f(&self.wx_i),
            wh_i: f(&self.wh_i),
            b_i: f(&self.b_i),
            wx_f: f(&self.wx_f),
            wh_f: f(&self.wh_f),
            b_f: f(&self.b_f),
            wx_o: f(&self.wx_o),
            wh_o: f(&self.wh_o),
            b_o: f(&self.b_o),
            wx_g: f(&self.wx_g),
            wh_g: f(&self.wh_g),
            b_g: f(&self.b_g),
        }
    }

    /// Visit every block in a fixed order with `prefix.block` names; the
    /// order defines checkpoint layout and optimizer state slots.
    pub fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T)) {
        f(format!("{prefix}.wx_i"), &self.wx_i);
        f(format!("{prefix}.wh_i"), &self.wh_i);
        f(format!("{prefix}.b_i"), &self.b_i);
        f(format!("{prefix}.wx_f"), &self.wx_f);
        f(format!("{prefix}.wh_f"), &self.wh_f);
        f(format!("{prefix}.b_f"), &self.b_f);
        f(format!("{prefix}.wx_o"), &self.wx_o);
        f(format!("{prefix}.wh_o"), &self.wh_o);
        f(format!("{prefix}.b_o"), &self.b_o);
        f(format!("{prefix}.wx_g"), &self.wx_g);
        f(format!("{prefix}.wh_g"), &self.wh_g);
        f(format!("{prefix}.b_g"), &self.b_g);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut T)) {
        f(format!("{prefix}.wx_i"), &mut self.wx_i);
        f(format!("{prefix}.wh_i"), &mut self.wh_i);
        f(format!("{prefix}.b_i"), &mut self.b_i);
        f(format!("{prefix}.wx_f"), &mut self.wx_f);
        f(format!("{prefix}.wh_f"), &mut self.wh_f);
        f(format!("{prefix}.b_f"), &mut self.b_f);
        f(format!("{prefix}.wx_o"), &mut self.wx_o);
        f(format!("{prefix}.wh_o"), &mut self.wh_o);
        f(format!("{prefix}.b_o"), &mut self.b_o);
        f(format!("{prefix}.wx_g"), &mut self.wx_g);
        f(format!("{prefix}.wh_g"), &mut self.wh_g);
        f(format!("{prefix}.b_g"), &mut self.b_g);
    }
}

impl<F: Scalar> LstmParams<Tensor<F>> {
    /// Weights uniform over (-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero.
    pub fn init<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let wx = |rng: &mut R| init_matrix(hidden_dim, input_dim, rng);
        let wh = |rng: &mut R| init_matrix(hidden_dim, hidden_dim, rng);
        let b = || Tensor::zeros(vec![hidden_dim, 1]);
        LstmParams {
            wx_i: wx(rng),
            wh_i: wh(rng),
            b_i: b(),
            wx_f: wx(rng),
            wh_f: wh(rng),
            b_f: b(),
            wx_o: wx(rng),
            wh_o: wh(rng),
            b_o: b(),
            wx_g: wx(rng),
            wh_g: wh(rng),
            b_g: b(),
        }
    }

    pub fn bind(&self, g: &mut Graph<F>) -> LstmParams<Var> {
        self.map(|t| g.param(t.clone()))
    }

    pub fn hidden_dim(&self) -> usize {
        self.wh_i.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.wx_i.cols()
    }
}

/// Forward and backward LSTMs over the same input; their outputs are
/// stacked, so each position carries 2h features.
#[derive(Clone, Debug)]
pub struct BiLstmParams<T> {
    pub fwd: LstmParams<T>,
    pub bwd: LstmParams<T>,
}

impl<T> BiLstmParams<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> BiLstmParams<U> {
        BiLstmParams {
            fwd: self.fwd.map(&mut f),
            bwd: self.bwd.map(&mut f),
        }
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T)) {
        self.fwd.visit(&format!("{prefix}.fwd"), f);
        self.bwd.visit(&format!("{prefix}.bwd"), f);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut T)) {
        self.fwd.visit_mut(&format!("{prefix}.fwd"), f);
        self.bwd.visit_mut(&format!("{prefix}.bwd"), f);
    }
}

impl<F: Scalar> BiLstmParams<Tensor<F>> {
    pub fn init<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        BiLstmParams {
            fwd: LstmParams::init(input_dim, hidden_dim, rng),
            bwd: LstmParams::init(input_dim, hidden_dim, rng),
        }
    }

    pub fn bind(&self, g: &mut Graph<F>) -> BiLstmParams<Var> {
        self.map(|t| g.param(t.clone()))
    }
}

/// Weight matrix with an optional bias column.
#[derive(Clone, Debug)]
pub struct LinearParams<T> {
    pub weight: T,
    pub bias: Option<T>,
}

impl<T> LinearParams<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> LinearParams<U> {
        LinearParams {
            weight: f(&self.weight),
            bias: self.bias.as_ref().map(&mut f),
        }
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T)) {
        f(format!("{prefix}.weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(format!("{prefix}.bias"), b);
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut T)) {
        f(format!("{prefix}.weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(format!("{prefix}.bias"), b);
        }
    }
}

impl<F: Scalar> LinearParams<Tensor<F>> {
    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, bias: bool, rng: &mut R) -> Self {
        LinearParams {
            weight: init_matrix(out_dim, in_dim, rng),
            bias: bias.then(|| Tensor::zeros(vec![out_dim, 1])),
        }
    }

    pub fn bind(&self, g: &mut Graph<F>) -> LinearParams<Var> {
        self.map(|t| g.param(t.clone()))
    }
}

pub fn init_matrix<F: Scalar, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor<F> {
    let bound = 1.0 / (cols as f64).sqrt();
    Tensor::uniform(vec![rows, cols], -bound, bound, rng)
}

/// `weight * x`, plus the bias replicated across columns when present.
pub fn linear<F: Scalar>(g: &mut Graph<F>, p: &LinearParams<Var>, x: Var) -> Var {
    let wx = g.matmul(p.weight, x);
    match p.bias {
        Some(b) => {
            let t = g.value(x).cols();
            let ones = g.constant(Tensor::from_vec(vec![1, t], vec![F::one(); t]));
            let bb = g.matmul(b, ones);
            g.add(wx, bb)
        }
        None => wx,
    }
}

/// One LSTM cell update from pre-activations that already include the
/// input projection and bias; only the recurrent term is added here.
fn lstm_cell<F: Scalar>(
    g: &mut Graph<F>,
    p: &LstmParams<Var>,
    pre_i: Var,
    pre_f: Var,
    pre_o: Var,
    pre_g: Var,
    h_prev: Var,
    c_prev: Var,
) -> (Var, Var) {
    let ri = g.matmul(p.wh_i, h_prev);
    let zi = g.add(pre_i, ri);
    let i = g.sigmoid(zi);
    let rf = g.matmul(p.wh_f, h_prev);
    let zf = g.add(pre_f, rf);
    let f = g.sigmoid(zf);
    let ro = g.matmul(p.wh_o, h_prev);
    let zo = g.add(pre_o, ro);
    let o = g.sigmoid(zo);
    let rg = g.matmul(p.wh_g, h_prev);
    let zg = g.add(pre_g, rg);
    let gg = g.tanh(zg);

    let fc = g.mul(f, c_prev);
    let ig = g.mul(i, gg);
    let c = g.add(fc, ig);
    let tc = g.tanh(c);
    let h = g.mul(o, tc);
    (h, c)
}

/// Standard LSTM step: gates from `sigmoid`, candidate from `tanh`,
/// `c = f*c_prev + i*g`, `h = o*tanh(c)`.
pub fn lstm_step<F: Scalar>(
    g: &mut Graph<F>,
    p: &LstmParams<Var>,
    x: Var,
    h_prev: Var,
    c_prev: Var,
) -> (Var, Var) {
    let pre = |g: &mut Graph<F>, wx: Var, b: Var| {
        let px = g.matmul(wx, x);
        g.add(px, b)
    };
    let pre_i = pre(g, p.wx_i, p.b_i);
    let pre_f = pre(g, p.wx_f, p.b_f);
    let pre_o = pre(g, p.wx_o, p.b_o);
    let pre_g = pre(g, p.wx_g, p.b_g);
    lstm_cell(g, p, pre_i, pre_f, pre_o, pre_g, h_prev, c_prev)
}

/// One direction over the whole sequence. Input projections for all
/// timesteps are batched into four matrix products up front; the
/// per-step work is recurrent only.
fn lstm_direction<F: Scalar>(
    g: &mut Graph<F>,
    p: &LstmParams<Var>,
    x: Var,
    reverse: bool,
) -> Vec<Var> {
    let t_len = g.value(x).cols();
    let h_dim = g.value(p.wh_i).rows();
    let ones = g.constant(Tensor::from_vec(vec![1, t_len], vec![F::one(); t_len]));

    let mut project = |wx: Var, b: Var| {
        let px = g.matmul(wx, x);
        let bb = g.matmul(b, ones);
        g.add(px, bb)
    };
    let all_i = project(p.wx_i, p.b_i);
    let all_f = project(p.wx_f, p.b_f);
    let all_o = project(p.wx_o, p.b_o);
    let all_g = project(p.wx_g, p.b_g);

    let mut h = g.constant(Tensor::zeros(vec![h_dim, 1]));
    let mut c = g.constant(Tensor::zeros(vec![h_dim, 1]));
    let mut outs = Vec::with_capacity(t_len);
    let steps: Vec<usize> = if reverse {
        (0..t_len).rev().collect()
    } else {
        (0..t_len).collect()
    };
    for t in steps {
        let pre_i = g.slice(all_i, 1, t, t + 1);
        let pre_f = g.slice(all_f, 1, t, t + 1);
        let pre_o = g.slice(all_o, 1, t, t + 1);
        let pre_g = g.slice(all_g, 1, t, t + 1);
        let (hn, cn) = lstm_cell(g, p, pre_i, pre_f, pre_o, pre_g, h, c);
        h = hn;
        c = cn;
        outs.push(h);
    }
    if reverse {
        outs.reverse();
    }
    outs
}

/// Bidirectional LSTM over `x: [d x T]`, zero initial states. Output is
/// `[2h x T]`: forward states stacked over backward states, both indexed
/// by original time.
pub fn bilstm<F: Scalar>(g: &mut Graph<F>, p: &BiLstmParams<Var>, x: Var) -> Var {
    assert!(g.value(x).cols() >= 1, "bilstm needs a non-empty sequence");
    let fwd = lstm_direction(g, &p.fwd, x, false);
    let bwd = lstm_direction(g, &p.bwd, x, true);
    let hf = g.concat(&fwd, 1);
    let hb = g.concat(&bwd, 1);
    g.concat(&[hf, hb], 0)
}

/// Inverted dropout: at train time zero each entry with probability
/// `rate` and scale survivors by `1/(1-rate)`; at eval time identity.
pub fn dropout<F: Scalar, R: Rng>(
    g: &mut Graph<F>,
    x: Var,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Var {
    assert!(
        (0.0..1.0).contains(&rate),
        "dropout rate must satisfy 0 <= rate < 1, got {rate}"
    );
    if !training || rate == 0.0 {
        return x;
    }
    let keep = 1.0 - rate;
    let shape = g.value(x).shape().to_vec();
    let numel: usize = shape.iter().product();
    let scale = F::from_f64(1.0 / keep);
    let data = (0..numel)
        .map(|_| {
            if rng.gen::<f64>() < keep {
                scale
            } else {
                F::zero()
            }
        })
        .collect();
    let mask = g.constant(Tensor::from_vec(shape, data));
    g.mul(x, mask)
}

/// Attention-pooled summary of `states: [d x T]`: weights proportional
/// to `exp(w . state_t)`, output the weighted sum, a `[d x 1]` column.
pub fn weighted_summary<F: Scalar>(g: &mut Graph<F>, states: Var, w: Var) -> Var {
    let scores = g.matmul_ex(w, true, states, false);
    let scores_col = g.transpose(scores);
    let weights = g.softmax_columns(scores_col);
    g.matmul(states, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::uniform(shape, -0.8, 0.8, rng)
    }

    fn zeros_lstm(input_dim: usize, h: usize) -> LstmParams<Tensor<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        LstmParams::<Tensor<f64>>::init(input_dim, h, &mut rng)
            .map(|t| Tensor::zeros(t.shape().to_vec()))
    }

    #[test]
    fn lstm_param_count_matches_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (input_dim, h) = (7, 5);
        let p = LstmParams::<Tensor<f64>>::init(input_dim, h, &mut rng);
        let mut count = 0;
        p.visit("lstm", &mut |_, t| count += t.numel());
        assert_eq!(count, 4 * (input_dim * h + h * h + h));
    }

    #[test]
    fn lstm_all_zero_params_give_zero_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut g = Graph::new();
        let p = zeros_lstm(3, 2).bind(&mut g);
        let x = g.constant(rand_tensor(vec![3, 1], &mut rng));
        let h0 = g.constant(Tensor::zeros(vec![2, 1]));
        let c0 = g.constant(Tensor::zeros(vec![2, 1]));
        let (h, c) = lstm_step(&mut g, &p, x, h0, c0);
        assert_eq!(g.value(h).data(), &[0.0, 0.0]);
        assert_eq!(g.value(c).data(), &[0.0, 0.0]);
    }

    #[test]
    fn saturated_forget_gate_passes_cell_state_through() {
        // With b_f = 100 the forget gate sigmoid is 1 to machine
        // precision, so c = c_prev + i*g.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (input_dim, h) = (3, 4);
        let mut host = LstmParams::<Tensor<f64>>::init(input_dim, h, &mut rng);
        host.b_f = Tensor::from_vec(vec![h, 1], vec![100.0; h]);
        let x0 = rand_tensor(vec![input_dim, 1], &mut rng);
        let h0 = rand_tensor(vec![h, 1], &mut rng);
        let c0 = rand_tensor(vec![h, 1], &mut rng);

        let mut g = Graph::new();
        let p = host.bind(&mut g);
        let (xv, hv, cv) = (
            g.constant(x0.clone()),
            g.constant(h0.clone()),
            g.constant(c0.clone()),
        );
        let (_, c) = lstm_step(&mut g, &p, xv, hv, cv);

        let sigmoid = |v: f64| 1.0 / (1.0 + (-v).exp());
        for k in 0..h {
            let mut zi = host.b_i.data()[k];
            let mut zg = host.b_g.data()[k];
            for j in 0..input_dim {
                zi += host.wx_i.at(k, j) * x0.data()[j];
                zg += host.wx_g.at(k, j) * x0.data()[j];
            }
            for j in 0..h {
                zi += host.wh_i.at(k, j) * h0.data()[j];
                zg += host.wh_g.at(k, j) * h0.data()[j];
            }
            let expected = c0.data()[k] + sigmoid(zi) * zg.tanh();
            assert!((g.value(c).data()[k] - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn lstm_step_gradcheck_all_twelve_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (input_dim, h) = (2, 3);
        let host = LstmParams::<Tensor<f64>>::init(input_dim, h, &mut rng);
        let x0 = rand_tensor(vec![input_dim, 1], &mut rng);
        let h0 = rand_tensor(vec![h, 1], &mut rng);
        let c0 = rand_tensor(vec![h, 1], &mut rng);
        let wsum = rand_tensor(vec![2 * h, 1], &mut rng);

        let mut blocks: Vec<Tensor<f64>> = Vec::new();
        host.visit("p", &mut |_, t| blocks.push(t.clone()));
        assert_eq!(blocks.len(), 12);

        let run = |tensors: &[Tensor<f64>]| {
            let mut g = Graph::new();
            let mut it = tensors.iter();
            let p = host.map(|_| g.param(it.next().unwrap().clone()));
            let x = g.constant(x0.clone());
            let hp = g.constant(h0.clone());
            let cp = g.constant(c0.clone());
            let (hn, cn) = lstm_step(&mut g, &p, x, hp, cp);
            let both = g.concat(&[hn, cn], 0);
            let w = g.constant(wsum.clone());
            let prod = g.mul(both, w);
            let loss = g.sum_all(prod);
            g.backward(loss);
            let grads: Vec<Tensor<f64>> = {
                let mut vars = Vec::new();
                p.visit("p", &mut |_, &v| vars.push(v));
                vars.iter().map(|&v| g.grad(v).unwrap().clone()).collect()
            };
            (g.value(loss).data()[0], grads)
        };

        let (_, grads) = run(&blocks);
        let step = 1e-5;
        for (bi, block) in blocks.iter().enumerate() {
            for i in 0..block.numel() {
                let mut plus = blocks.clone();
                plus[bi].data_mut()[i] += step;
                let mut minus = blocks.clone();
                minus[bi].data_mut()[i] -= step;
                let numeric = (run(&plus).0 - run(&minus).0) / (2.0 * step);
                let analytic = grads[bi].data()[i];
                let rel =
                    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-4);
                assert!(
                    rel < 1e-5,
                    "block {bi} entry {i}: analytic {analytic} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn bilstm_output_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = Graph::new();
        let p = BiLstmParams::<Tensor<f64>>::init(3, 4, &mut rng).bind(&mut g);
        let x = g.constant(rand_tensor(vec![3, 5], &mut rng));
        let out = bilstm(&mut g, &p, x);
        assert_eq!(g.value(out).shape(), &[8, 5]);
    }

    #[test]
    fn bilstm_single_step_halves_match_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let host = BiLstmParams::<Tensor<f64>>::init(3, 2, &mut rng);
        let x0 = rand_tensor(vec![3, 1], &mut rng);

        let mut g = Graph::new();
        let p = host.bind(&mut g);
        let x = g.constant(x0.clone());
        let out = bilstm(&mut g, &p, x);

        let mut g2 = Graph::new();
        let pf = host.fwd.bind(&mut g2);
        let pb = host.bwd.bind(&mut g2);
        let x2 = g2.constant(x0);
        let h0 = g2.constant(Tensor::zeros(vec![2, 1]));
        let c0 = g2.constant(Tensor::zeros(vec![2, 1]));
        let (hf, _) = lstm_step(&mut g2, &pf, x2, h0, c0);
        let (hb, _) = lstm_step(&mut g2, &pb, x2, h0, c0);

        assert_eq!(&g.value(out).data()[..2], g2.value(hf).data());
        assert_eq!(&g.value(out).data()[2..], g2.value(hb).data());
    }

    #[test]
    fn reversed_input_with_swapped_directions_mirrors_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let host = BiLstmParams::<Tensor<f64>>::init(3, 2, &mut rng);
        let x0 = rand_tensor(vec![3, 3], &mut rng);
        let mut x_rev = Tensor::<f64>::zeros(vec![3, 3]);
        for i in 0..3 {
            for j in 0..3 {
                x_rev.data_mut()[i * 3 + j] = x0.at(i, 2 - j);
            }
        }
        let swapped = BiLstmParams {
            fwd: host.bwd.clone(),
            bwd: host.fwd.clone(),
        };

        let eval = |params: &BiLstmParams<Tensor<f64>>, input: &Tensor<f64>| {
            let mut g = Graph::new();
            let p = params.bind(&mut g);
            let x = g.constant(input.clone());
            let out = bilstm(&mut g, &p, x);
            g.value(out).clone()
        };
        let base = eval(&host, &x0);
        let mirrored = eval(&swapped, &x_rev);

        // forward half of the base run reappears as the reversed-time
        // backward half of the mirrored run, and vice versa
        for t in 0..3 {
            for k in 0..2 {
                assert!((base.at(k, t) - mirrored.at(2 + k, 2 - t)).abs() < 1e-12);
                assert!((base.at(2 + k, t) - mirrored.at(k, 2 - t)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bilstm_gradcheck_small_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let host = BiLstmParams::<Tensor<f64>>::init(2, 2, &mut rng);
        let x0 = rand_tensor(vec![2, 3], &mut rng);
        let wsum = rand_tensor(vec![4, 3], &mut rng);

        let mut blocks: Vec<Tensor<f64>> = vec![x0.clone()];
        host.visit("p", &mut |_, t| blocks.push(t.clone()));

        let run = |tensors: &[Tensor<f64>]| {
            let mut g = Graph::new();
            let x = g.param(tensors[0].clone());
            let mut it = tensors[1..].iter();
            let p = host.map(|_| g.param(it.next().unwrap().clone()));
            let out = bilstm(&mut g, &p, x);
            let w = g.constant(wsum.clone());
            let prod = g.mul(out, w);
            let loss = g.sum_all(prod);
            g.backward(loss);
            let mut vars = vec![x];
            p.visit("p", &mut |_, &v| vars.push(v));
            let grads: Vec<Tensor<f64>> =
                vars.iter().map(|&v| g.grad(v).unwrap().clone()).collect();
            (g.value(loss).data()[0], grads)
        };

        let (_, grads) = run(&blocks);
        let step = 1e-5;
        for (bi, block) in blocks.iter().enumerate() {
            for i in 0..block.numel() {
                let mut plus = blocks.clone();
                plus[bi].data_mut()[i] += step;
                let mut minus = blocks.clone();
                minus[bi].data_mut()[i] -= step;
                let numeric = (run(&plus).0 - run(&minus).0) / (2.0 * step);
                let analytic = grads[bi].data()[i];
                let rel =
                    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-4);
                assert!(
                    rel < 1e-5,
                    "tensor {bi} entry {i}: analytic {analytic} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn dropout_rate_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut g = Graph::new();
        let x = g.constant(rand_tensor(vec![3, 3], &mut rng));
        let y = dropout(&mut g, x, 0.0, true, &mut rng);
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn dropout_eval_mode_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut g = Graph::new();
        let x = g.constant(rand_tensor(vec![3, 3], &mut rng));
        let y = dropout(&mut g, x, 0.9, false, &mut rng);
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    #[should_panic(expected = "dropout rate")]
    fn dropout_rate_one_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(vec![2, 2]));
        dropout(&mut g, x, 1.0, true, &mut rng);
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 100_000;
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(vec![n, 1], vec![1.0f64; n]));
        let y = dropout(&mut g, x, 0.3, true, &mut rng);
        let mean: f64 = g.value(y).data().iter().sum::<f64>() / n as f64;
        assert!(
            (mean - 1.0).abs() < 0.02,
            "inverted dropout should keep the mean near 1, got {mean}"
        );
    }

    #[test]
    fn summary_of_single_state_is_that_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut g = Graph::new();
        let s0 = rand_tensor(vec![4, 1], &mut rng);
        let states = g.constant(s0.clone());
        let w = g.constant(rand_tensor(vec![4, 1], &mut rng));
        let out = weighted_summary(&mut g, states, w);
        for i in 0..4 {
            assert!((g.value(out).data()[i] - s0.data()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn summary_with_zero_weights_is_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let s0 = rand_tensor(vec![3, 5], &mut rng);
        let mut g = Graph::new();
        let states = g.constant(s0.clone());
        let w = g.constant(Tensor::zeros(vec![3, 1]));
        let out = weighted_summary(&mut g, states, w);
        for i in 0..3 {
            let mean: f64 = (0..5).map(|t| s0.at(i, t)).sum::<f64>() / 5.0;
            assert!((g.value(out).data()[i] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn summary_of_identical_states_is_invariant_to_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let col: Vec<f64> = (0..3).map(|i| i as f64 - 1.0).collect();
        let mut s = Tensor::<f64>::zeros(vec![3, 4]);
        for i in 0..3 {
            for t in 0..4 {
                s.data_mut()[i * 4 + t] = col[i];
            }
        }
        let mut g = Graph::new();
        let states = g.constant(s);
        let w = g.constant(rand_tensor(vec![3, 1], &mut rng));
        let out = weighted_summary(&mut g, states, w);
        for i in 0..3 {
            assert!((g.value(out).data()[i] - col[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn summary_stays_in_convex_hull() {
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let s0 = rand_tensor(vec![4, 6], &mut rng);
            let mut g = Graph::new();
            let states = g.constant(s0.clone());
            let w = g.constant(rand_tensor(vec![4, 1], &mut rng));
            let out = weighted_summary(&mut g, states, w);
            for i in 0..4 {
                let row: Vec<f64> = (0..6).map(|t| s0.at(i, t)).collect();
                let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let v = g.value(out).data()[i];
                assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn weighted_summary_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let s0 = rand_tensor(vec![3, 4], &mut rng);
        let w0 = rand_tensor(vec![3, 1], &mut rng);
        let mix = rand_tensor(vec![3, 1], &mut rng);

        let run = |tensors: &[Tensor<f64>]| {
            let mut g = Graph::new();
            let states = g.param(tensors[0].clone());
            let w = g.param(tensors[1].clone());
            let out = weighted_summary(&mut g, states, w);
            let m = g.constant(mix.clone());
            let prod = g.mul(out, m);
            let loss = g.sum_all(prod);
            g.backward(loss);
            (
                g.value(loss).data()[0],
                vec![
                    g.grad(states).unwrap().clone(),
                    g.grad(w).unwrap().clone(),
                ],
            )
        };
        let inputs = vec![s0, w0];
        let (_, grads) = run(&inputs);
        let step = 1e-5;
        for (pi, t0) in inputs.iter().enumerate() {
            for i in 0..t0.numel() {
                let mut plus = inputs.clone();
                plus[pi].data_mut()[i] += step;
                let mut minus = inputs.clone();
                minus[pi].data_mut()[i] -= step;
                let numeric = (run(&plus).0 - run(&minus).0) / (2.0 * step);
                let analytic = grads[pi].data()[i];
                let rel =
                    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-4);
                assert!(rel < 1e-5);
            }
        }
    }

    #[test]
    fn linear_applies_bias_across_columns() {
        let mut g = Graph::new();
        let p = LinearParams {
            weight: g.param(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]])),
            bias: Some(g.param(Tensor::column(vec![10.0, 20.0]))),
        };
        let x = g.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let y = linear(&mut g, &p, x);
        assert_eq!(g.value(y).data(), &[11.0, 12.0, 26.0, 28.0]);
    }
}
