use crate::error::{Error, Result};
use crate::gradengine::Tensor2;
use crate::model::ModelParams;

/// Moments and hyperparameters of decoupled-weight-decay Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState {
    first: Vec<Tensor2>,
    second: Vec<Tensor2>,
    step: u64,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamWState {
    pub fn new(shapes: &[(usize, usize)], lr: f64, weight_decay: f64) -> Self {
        Self {
            first: shapes.iter().map(|&(r, c)| Tensor2::zeros(r, c)).collect(),
            second: shapes.iter().map(|&(r, c)| Tensor2::zeros(r, c)).collect(),
            step: 0,
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_params(params: &ModelParams, lr: f64, weight_decay: f64) -> Self {
        Self::new(&params.shapes(), lr, weight_decay)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update of a flat parameter table.
    pub fn update(&mut self, params: &mut [Tensor2], grads: &[Tensor2]) -> Result<()> {
        self.check(params.iter().map(Tensor2::shape), grads)?;
        self.step += 1;
        for (i, p) in params.iter_mut().enumerate() {
            self.update_one(p, &grads[i], i);
        }
        Ok(())
    }

    fn check(
        &self,
        shapes: impl ExactSizeIterator<Item = (usize, usize)>,
        grads: &[Tensor2],
    ) -> Result<()> {
        if shapes.len() != grads.len() || grads.len() != self.first.len() {
            return Err(Error::shape(
                "adamw_step",
                format!(
                    "{} parameters, {} gradients, {} moment slots",
                    shapes.len(),
                    grads.len(),
                    self.first.len()
                ),
            ));
        }
        for (i, (s, g)) in shapes.zip(grads).enumerate() {
            if s != g.shape() || s != self.first[i].shape() {
                return Err(Error::shape(
                    "adamw_step",
                    format!("tensor {i}: parameter {s:?}, gradient {:?}", g.shape()),
                ));
            }
        }
        if grads
            .iter()
            .any(|g| g.data().iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite("gradient"));
        }
        Ok(())
    }

    fn update_one(&mut self, p: &mut Tensor2, g: &Tensor2, i: usize) {
        let (b1, b2) = (self.beta1, self.beta2);
        let t = self.step as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let m = self.first[i].data_mut();
        let v = self.second[i].data_mut();
        for (j, (theta, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *theta -= self.lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * *theta);
        }
    }
}

/// Applies one AdamW update to every tensor of `params`.
pub fn adamw_step(
    state: &mut AdamWState,
    params: &mut ModelParams,
    grads: &[Tensor2],
) -> Result<()> {
    state.check(params.shapes().into_iter(), grads)?;
    state.step += 1;
    params.for_each_mut(|p, i| state.update_one(p, &grads[i], i));
    Ok(())
}
