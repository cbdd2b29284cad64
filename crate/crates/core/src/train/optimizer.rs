//! Adagrad: each parameter's step is scaled by the inverse root of its
//! accumulated squared gradients.

use crate::embedding::{EmbeddingTable, KgeModel};

pub const ADAGRAD_EPS: f64 = 1e-10;

/// In-place update of `params` given `grad`; `acc` holds accumulated squares.
pub fn adagrad_step(params: &mut [f64], acc: &mut [f64], grad: &[f64], lr: f64) {
    for ((p, a), &g) in params.iter_mut().zip(acc.iter_mut()).zip(grad) {
        if g != 0.0 {
            *a += g * g;
            *p -= lr * g / (a.sqrt() + ADAGRAD_EPS);
        }
    }
}

/// Accumulators shaped like a [`KgeModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adagrad {
    lr: f64,
    overlap_lr: f64,
    entities: EmbeddingTable,
    relations: EmbeddingTable,
    w: f64,
    c: f64,
}

impl Adagrad {
    pub fn new(model: &KgeModel, lr: f64, overlap_lr: f64) -> Self {
        Self {
            lr,
            overlap_lr,
            entities: EmbeddingTable::zeros(model.entities.rows(), model.dim()),
            relations: EmbeddingTable::zeros(model.relations.rows(), model.dim()),
            w: 0.0,
            c: 0.0,
        }
    }

    pub fn step_embeddings(&mut self, model: &mut KgeModel, ent: &EmbeddingTable, rel: &EmbeddingTable) {
        adagrad_step(&mut model.entities.re, &mut self.entities.re, &ent.re, self.lr);
        adagrad_step(&mut model.entities.im, &mut self.entities.im, &ent.im, self.lr);
        adagrad_step(&mut model.relations.re, &mut self.relations.re, &rel.re, self.lr);
        adagrad_step(&mut model.relations.im, &mut self.relations.im, &rel.im, self.lr);
    }

    /// Updates `(w, c)` and clamps `w` positive.
    pub fn step_overlap(&mut self, model: &mut KgeModel, dw: f64, dc: f64) {
        let mut w = [model.overlap.w];
        let mut c = [model.overlap.c];
        adagrad_step(&mut w, std::slice::from_mut(&mut self.w), &[dw], self.overlap_lr);
        adagrad_step(&mut c, std::slice::from_mut(&mut self.c), &[dc], self.overlap_lr);
        model.overlap.w = w[0];
        model.overlap.c = c[0];
        model.overlap.clamp();
    }
}
