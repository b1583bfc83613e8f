//! Named trainable parameters and their binding onto a tape.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::Tensor;

use super::tape::{Gradients, Tape, Var};

/// Which sub-network a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Denoiser,
    Encoder,
    Decoder,
    Classifier,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub group: Group,
    pub tensor: Tensor,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, group: Group, tensor: Tensor) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            group,
            tensor,
        });
        ParamId(self.params.len() - 1)
    }

    /// Weight with entries uniform in `±1/√fan_in`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        group: Group,
        shape: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        self.add(name, group, Tensor::uniform(shape, bound, rng))
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].tensor
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Ids of parameters added after the store held `start` entries.
    pub fn ids_since(&self, start: usize) -> Vec<ParamId> {
        (start..self.params.len()).map(ParamId).collect()
    }

    pub fn ids_in(&self, groups: &[Group]) -> Vec<ParamId> {
        self.iter()
            .filter(|(_, p)| groups.contains(&p.group))
            .map(|(id, _)| id)
            .collect()
    }

    /// Number of trainable scalars in the given parameters.
    pub fn count(&self, ids: &[ParamId]) -> usize {
        ids.iter().map(|id| self.params[id.0].tensor.numel()).sum()
    }

    pub fn total_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Overwrites every parameter with zeros.
    pub fn zero_all(&mut self) {
        for p in &mut self.params {
            p.tensor.data_mut().fill(0.0);
        }
    }
}

/// A tape together with lazily bound parameter leaves.
///
/// Each parameter enters the tape at most once, on first use, which makes
/// "which parameters did this computation touch" a direct query.
pub struct Graph<'s> {
    pub tape: Tape,
    store: &'s ParamStore,
    bound: Vec<Option<Var>>,
    track: bool,
}

impl<'s> Graph<'s> {
    /// `track` controls whether parameter leaves require gradients.
    pub fn new(store: &'s ParamStore, track: bool) -> Self {
        Self {
            tape: Tape::new(),
            store,
            bound: vec![None; store.len()],
            track,
        }
    }

    pub fn param(&mut self, id: ParamId) -> Result<Var> {
        if let Some(v) = self.bound[id.0] {
            return Ok(v);
        }
        let v = self
            .tape
            .leaf(self.store.get(id).tensor.clone(), self.track)?;
        self.bound[id.0] = Some(v);
        Ok(v)
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    /// Parameters that entered the tape during the forward pass.
    pub fn bound_ids(&self) -> Vec<ParamId> {
        self.bound
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|_| ParamId(i)))
            .collect()
    }

    /// Parameters that received a gradient from the given backward pass.
    pub fn touched_ids(&self, grads: &Gradients) -> Vec<ParamId> {
        self.bound
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.filter(|v| grads.reached(*v)).map(|_| ParamId(i)))
            .collect()
    }

    pub fn param_grad<'g>(&self, grads: &'g Gradients, id: ParamId) -> Option<&'g [f64]> {
        self.bound[id.0].and_then(|v| grads.get(v))
    }
}
