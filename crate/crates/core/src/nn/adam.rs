//! Adam optimizer over named parameter tensors.

use std::collections::BTreeMap;

use ndarray::Array2;

use super::{NnError, Result};

/// Accumulated gradients keyed by parameter path (e.g.
/// `encoder.2.layer.0.weight`). A `BTreeMap` keeps iteration order stable so
/// failures are reported deterministically.
pub type GradStore = BTreeMap<String, Array2<f64>>;

/// Adds `grad` into the store, creating the entry if needed.
pub fn accumulate(store: &mut GradStore, name: &str, grad: Array2<f64>) {
    match store.get_mut(name) {
        Some(existing) => *existing += &grad,
        None => {
            store.insert(name.to_string(), grad);
        }
    }
}

/// First/second moment estimates for one tensor.
#[derive(Debug, Clone)]
struct Slot {
    m: Array2<f64>,
    v: Array2<f64>,
}

/// Bias-corrected Adam. One optimizer instance drives all tensors of a
/// model; the step counter is global (every tensor present in the gradient
/// store is updated each step).
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: u64,
    slots: BTreeMap<String, Slot>,
}

impl Adam {
    /// Standard coefficients: `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            slots: BTreeMap::new(),
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    /// Steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update to every parameter that has a gradient in `grads`.
    ///
    /// `params` maps parameter paths to the live tensors. Parameters without
    /// gradients are left untouched; a gradient without a matching parameter
    /// is an error (it means the training loop mis-wired a name), as is any
    /// non-finite gradient entry, reported with the offending path.
    pub fn step(
        &mut self,
        grads: &GradStore,
        params: &mut BTreeMap<String, &mut Array2<f64>>,
    ) -> Result<()> {
        // Validate everything before touching any parameter, so a failed
        // step leaves the model unchanged.
        for (name, grad) in grads {
            let param = params
                .get(name.as_str())
                .ok_or_else(|| NnError::UnknownParameter { name: name.clone() })?;
            if grad.dim() != param.dim() {
                return Err(NnError::GradShapeMismatch {
                    name: name.clone(),
                    rows: param.nrows(),
                    cols: param.ncols(),
                    got_rows: grad.nrows(),
                    got_cols: grad.ncols(),
                });
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(NnError::NonFiniteGradient { name: name.clone() });
            }
        }

        self.t += 1;
        let correction1 = 1.0 - self.beta1.powi(self.t as i32);
        let correction2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, grad) in grads {
            let param = params.get_mut(name.as_str()).expect("validated above");
            let slot = self.slots.entry(name.clone()).or_insert_with(|| Slot {
                m: Array2::zeros(grad.dim()),
                v: Array2::zeros(grad.dim()),
            });
            azip_update(
                param,
                grad,
                slot,
                self.beta1,
                self.beta2,
                self.lr,
                self.epsilon,
                correction1,
                correction2,
            );
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn azip_update(
    param: &mut Array2<f64>,
    grad: &Array2<f64>,
    slot: &mut Slot,
    beta1: f64,
    beta2: f64,
    lr: f64,
    epsilon: f64,
    correction1: f64,
    correction2: f64,
) {
    for ((p, &g), (m, v)) in param
        .iter_mut()
        .zip(grad.iter())
        .zip(slot.m.iter_mut().zip(slot.v.iter_mut()))
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
}
