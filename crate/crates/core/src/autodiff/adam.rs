//! Adam with decoupled weight decay.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Tensor;

#[derive(Debug, Error)]
pub enum AdamError {
    #[error("non-finite gradient for parameter {name}")]
    NonFiniteGrad { name: String },
    #[error("parameter {name}: gradient shape {got:?} does not match {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
}

impl AdamHyper {
    pub fn new(lr: f32, weight_decay: f32) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// Per-parameter first/second moment estimates plus the step counter.
pub struct AdamState {
    pub hyper: AdamHyper,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &[Tensor], hyper: AdamHyper) -> Self {
        Self {
            hyper,
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    /// One update over all parameters. A non-finite gradient aborts the
    /// whole step before touching any parameter.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[Tensor],
        names: impl Fn(usize) -> String,
    ) -> Result<(), AdamError> {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(AdamError::ShapeMismatch {
                    name: names(i),
                    expected: p.shape().to_vec(),
                    got: g.shape().to_vec(),
                });
            }
            if !g.all_finite() {
                return Err(AdamError::NonFiniteGrad { name: names(i) });
            }
        }

        self.step += 1;
        let h = self.hyper;
        let bias1 = 1.0 - h.beta1.powi(self.step as i32);
        let bias2 = 1.0 - h.beta2.powi(self.step as i32);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = p.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                let gi = g.data()[i];
                md[i] = h.beta1 * md[i] + (1.0 - h.beta1) * gi;
                vd[i] = h.beta2 * vd[i] + (1.0 - h.beta2) * gi * gi;
                let m_hat = md[i] / bias1;
                let v_hat = vd[i] / bias2;
                // Decoupled weight decay: applied directly to the parameter,
                // not through the adaptive term.
                pd[i] -= h.lr * (m_hat / (v_hat.sqrt() + h.eps) + h.weight_decay * pd[i]);
            }
        }
        Ok(())
    }
}
