//! Adam optimizer over the named parameter set.

use crate::model::ModelParams;
use crate::tensor::{Scalar, Tensor};

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 0.002, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StepError {
    #[error("non-finite gradient in parameter {name}; step aborted")]
    NonFiniteGradient { name: String },
    #[error("gradient count {got} does not match parameter count {expected}")]
    GradientCount { expected: usize, got: usize },
    #[error("gradient for {name} has shape {got:?}, parameter has {expected:?}")]
    GradientShape { name: String, expected: Vec<usize>, got: Vec<usize> },
}

/// First and second moment buffers, one pair per parameter tensor in visit
/// order. The state never reorders, so a state built for one parameter set
/// stays aligned with it across steps.
pub struct Adam<F> {
    cfg: AdamConfig,
    step: u64,
    moments: Vec<(Tensor<F>, Tensor<F>)>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(cfg: AdamConfig, params: &ModelParams<Tensor<F>>) -> Self {
        let mut moments = Vec::new();
        params.visit(&mut |_, t: &Tensor<F>| {
            moments.push((Tensor::zeros(t.shape().to_vec()), Tensor::zeros(t.shape().to_vec())));
        });
        Adam { cfg, step: 0, moments }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. `grads` must be in parameter visit order; a `None`
    /// entry means the parameter did not participate in the loss and is left
    /// untouched (its moments still decay on later steps only when it next
    /// receives a gradient, matching lazy sparse updates being out of scope:
    /// here we simply skip it entirely).
    ///
    /// Any non-finite gradient value aborts the step before any parameter is
    /// modified.
    pub fn step(
        &mut self,
        params: &mut ModelParams<Tensor<F>>,
        grads: &[Option<Tensor<F>>],
    ) -> Result<(), StepError> {
        let mut names = Vec::new();
        params.visit(&mut |name, _| names.push(name));
        if names.len() != grads.len() {
            return Err(StepError::GradientCount { expected: names.len(), got: grads.len() });
        }
        let mut shapes = Vec::new();
        params.visit(&mut |_, t: &Tensor<F>| shapes.push(t.shape().to_vec()));
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            if g.shape() != shapes[i].as_slice() {
                return Err(StepError::GradientShape {
                    name: names[i].clone(),
                    expected: shapes[i].clone(),
                    got: g.shape().to_vec(),
                });
            }
            if g.data().iter().any(|x| !x.into_f64().is_finite()) {
                return Err(StepError::NonFiniteGradient { name: names[i].clone() });
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        let mut idx = 0;
        params.visit_mut(&mut |_, value: &mut Tensor<F>| {
            let i = idx;
            idx += 1;
            let Some(g) = &grads[i] else { return };
            let (m, v) = &mut self.moments[i];
            let md = m.data_mut();
            let vd = v.data_mut();
            let pd = value.data_mut();
            for ((p, g), (m, v)) in
                pd.iter_mut().zip(g.data()).zip(md.iter_mut().zip(vd.iter_mut()))
            {
                let gf = g.into_f64();
                let mf = beta1 * m.into_f64() + (1.0 - beta1) * gf;
                let vf = beta2 * v.into_f64() + (1.0 - beta2) * gf * gf;
                *m = F::from_f64(mf);
                *v = F::from_f64(vf);
                let update = lr * (mf / bc1) / ((vf / bc2).sqrt() + eps);
                *p = F::from_f64(p.into_f64() - update);
            }
        });
        Ok(())
    }
}
