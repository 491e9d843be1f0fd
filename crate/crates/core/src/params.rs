//! Named parameter storage shared by the encoder and decoder.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;
use std::ops::Index;

use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
    /// Frozen parameters enter the tape as constants and are never updated.
    pub trainable: bool,
}

/// Ordered collection of model parameters. Registration order is stable and
/// is the order used by the optimizer and the checkpoint manifest.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

/// Tape handles for every parameter, indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bindings(Vec<Var>);

impl Index<ParamId> for Bindings {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor, trainable: bool) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.params.push(Param {
            name,
            tensor,
            trainable,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].tensor
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Records every parameter on `tape`; trainable ones as gradient leaves.
    pub fn bind(&self, tape: &mut Tape) -> Bindings {
        Bindings(
            self.params
                .iter()
                .map(|p| {
                    if p.trainable {
                        tape.leaf(&p.tensor)
                    } else {
                        tape.constant(&p.tensor)
                    }
                })
                .collect(),
        )
    }

    /// Records every parameter as a constant, for inference.
    pub fn bind_frozen(&self, tape: &mut Tape) -> Bindings {
        Bindings(self.params.iter().map(|p| tape.constant(&p.tensor)).collect())
    }

    /// Adds the tape's gradients for each bound trainable parameter into its
    /// gradient slot.
    pub fn collect_grads(&mut self, tape: &Tape, bindings: &Bindings) {
        for (p, var) in self.params.iter_mut().zip(&bindings.0) {
            if !p.trainable {
                continue;
            }
            match tape.grad(*var) {
                Some(g) => p.tensor.accumulate_grad(g),
                None => {
                    if p.tensor.grad().is_none() {
                        p.tensor.accumulate_grad(&vec![0.0; p.tensor.numel()]);
                    }
                }
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.zero_grad());
    }

    /// Hash over names, shapes and the exact bits of every value.
    pub fn checksum(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for p in &self.params {
            h.write(p.name.as_bytes());
            for &d in p.tensor.shape() {
                h.write_usize(d);
            }
            for v in p.tensor.data() {
                h.write_u64(v.to_bits());
            }
        }
        h.finish()
    }
}
