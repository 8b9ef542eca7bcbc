use serde::{Deserialize, Serialize};

use super::{Module, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd { momentum: f64 },
}

impl OptimizerKind {
    pub fn adam(beta1: f64, beta2: f64) -> Self {
        OptimizerKind::Adam { beta1, beta2, eps: 1e-8 }
    }
}

/// Moment buffers, one per trainable parameter in visit order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

pub struct Optimizer {
    state: OptimizerState,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            state: OptimizerState {
                kind,
                learning_rate,
                step: 0,
                first: Vec::new(),
                second: Vec::new(),
            },
        }
    }

    pub fn from_state(state: OptimizerState) -> Self {
        Self { state }
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn learning_rate(&self) -> f64 {
        self.state.learning_rate
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.state.learning_rate = lr;
    }

    pub fn steps(&self) -> u64 {
        self.state.step
    }

    /// One update from the accumulated gradients. Gradients are left in place.
    pub fn step<T: Scalar, M: Module<T> + ?Sized>(&mut self, module: &mut M) {
        let st = &mut self.state;
        st.step += 1;
        let t = st.step as i32;
        let lr = st.learning_rate;
        let kind = st.kind;
        let (first, second) = (&mut st.first, &mut st.second);
        let mut idx = 0;
        module.visit_mut(&mut |p| {
            if !p.kind.trainable() {
                return;
            }
            if first.len() <= idx {
                first.push(vec![0.0; p.len()]);
                second.push(vec![0.0; p.len()]);
            }
            let (m, v) = (&mut first[idx], &mut second[idx]);
            assert_eq!(m.len(), p.len(), "optimizer state does not match `{}`", p.name);
            for (((w, g), mi), vi) in p.value.iter_mut().zip(p.grad.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                let g = g.as_f64();
                let delta = match kind {
                    OptimizerKind::Adam { beta1, beta2, eps } => {
                        *mi = beta1 * *mi + (1.0 - beta1) * g;
                        *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                        let mh = *mi / (1.0 - beta1.powi(t));
                        let vh = *vi / (1.0 - beta2.powi(t));
                        lr * mh / (vh.sqrt() + eps)
                    }
                    OptimizerKind::Sgd { momentum } => {
                        *mi = momentum * *mi + g;
                        lr * *mi
                    }
                };
                *w = T::of(w.as_f64() - delta);
            }
            idx += 1;
        });
    }
}
