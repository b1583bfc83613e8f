//! RMSProp and the triangular cyclic learning rate.

use crate::autograd::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Triangular wave: `base → max` over `cycle_len` steps, back to `base`
/// over the next `cycle_len`, repeating.
pub fn cyclic_lr(step: usize, base_lr: f64, max_lr: f64, cycle_len: usize) -> f64 {
    let half = cycle_len.max(1);
    let pos = step % (2 * half);
    let frac = if pos <= half {
        pos as f64 / half as f64
    } else {
        (2 * half - pos) as f64 / half as f64
    };
    base_lr + (max_lr - base_lr) * frac
}

/// `state ← decay·state + (1−decay)·g²`, `param ← param − lr·g/(√state + eps)`.
pub fn rmsprop_update(
    param: &mut [f64],
    grad: &[f64],
    state: &mut [f64],
    lr: f64,
    decay: f64,
    eps: f64,
) -> Result<()> {
    for ((p, &g), s) in param.iter_mut().zip(grad).zip(state.iter_mut()) {
        *s = decay * *s + (1.0 - decay) * g * g;
        let next = *p - lr * g / (s.sqrt() + eps);
        if !next.is_finite() {
            return Err(Error::Numeric(format!(
                "rmsprop produced non-finite parameter from grad {g}"
            )));
        }
        *p = next;
    }
    Ok(())
}

/// One RMSProp instance over a fixed set of parameters.
#[derive(Clone, Debug)]
pub struct RmsProp {
    pub decay: f64,
    pub eps: f64,
    ids: Vec<ParamId>,
    state: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(store: &ParamStore, ids: Vec<ParamId>, decay: f64, eps: f64) -> Self {
        let state = ids
            .iter()
            .map(|&id| vec![0.0; store.get(id).tensor.numel()])
            .collect();
        Self {
            decay,
            eps,
            ids,
            state,
        }
    }

    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }

    /// `grads[k]` belongs to `ids()[k]`; `None` means no gradient this step.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Vec<f64>>], lr: f64) -> Result<()> {
        for ((&id, state), grad) in self.ids.iter().zip(&mut self.state).zip(grads) {
            if let Some(g) = grad {
                rmsprop_update(store.tensor_mut(id).data_mut(), g, state, lr, self.decay, self.eps)?;
            }
        }
        Ok(())
    }
}
