//! Loss terms and their analytic gradients.
//!
//! Each function returns the unscaled loss value and adds `scale` times its
//! gradient into a [`Gradients`] buffer.

use std::collections::BTreeSet;

use super::config::RaLossForm;
use crate::embedding::{head_query, log_sum_exp, softmax_in_place, tail_query, CandidateSet, EmbeddingTable, KgeModel};
use crate::error::{Error, Result};
use crate::kg::{LangId, Triple};
use crate::signatures::{sigmoid, OverlapParams, RelationBeliefTable};

/// Gradient buffers shaped like a [`KgeModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub entities: EmbeddingTable,
    pub relations: EmbeddingTable,
    pub w: f64,
    pub c: f64,
}

impl Gradients {
    pub fn zeros(model: &KgeModel) -> Self {
        Self {
            entities: EmbeddingTable::zeros(model.entities.rows(), model.dim()),
            relations: EmbeddingTable::zeros(model.relations.rows(), model.dim()),
            w: 0.0,
            c: 0.0,
        }
    }

    pub fn clear(&mut self) {
        self.entities.fill_zero();
        self.relations.fill_zero();
        self.w = 0.0;
        self.c = 0.0;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

/// Turns scores into `softmax - onehot(gold)` in place and returns `-log p(gold)`.
fn nll_and_dscores(scores: &mut [f64], gold: usize) -> f64 {
    let loss = log_sum_exp(scores) - scores[gold];
    softmax_in_place(scores);
    scores[gold] -= 1.0;
    loss
}

fn gold_position(cands: &CandidateSet, row: usize) -> Result<usize> {
    cands
        .position(row)
        .ok_or_else(|| Error::Internal(format!("gold row {row} missing from candidate set")))
}

/// `-log Pr(o | s, r) - log Pr(s | o, r)` summed over `batch`; the softmax runs
/// over the candidate set of each triple's language.
pub fn kgc_loss(
    model: &KgeModel,
    batch: &[(LangId, Triple)],
    cands: &[CandidateSet],
    grad: &mut Gradients,
    scale: f64,
) -> Result<f64> {
    let d = model.dim();
    let ents = &model.entities;
    let (mut qre, mut qim) = (vec![0.0; d], vec![0.0; d]);
    let (mut gre, mut gim) = (vec![0.0; d], vec![0.0; d]);
    let mut scores = Vec::new();
    let mut total = 0.0;
    for &(lang, t) in batch {
        let cs = &cands[lang.index()];
        let (srow, orow, rrow) = (model.entity_row(t.s), model.entity_row(t.o), model.relation_row(t.r));
        let s = ents.row(srow);
        let o = ents.row(orow);
        let r = model.relations.row(rrow);

        // tail: score_c = <q_re, e_re> + <q_im, e_im>, q = s * r
        tail_query(s, r, &mut qre, &mut qim);
        scores.clear();
        scores.extend(cs.rows().iter().map(|&c| {
            let e = ents.row(c as usize);
            dot(&qre, e.re) + dot(&qim, e.im)
        }));
        total += nll_and_dscores(&mut scores, gold_position(cs, orow)?);
        gre.fill(0.0);
        gim.fill(0.0);
        for (&c, &g) in cs.rows().iter().zip(&scores) {
            let e = ents.row(c as usize);
            axpy(&mut gre, g, e.re);
            axpy(&mut gim, g, e.im);
            let (ere, eim) = grad.entities.row_mut(c as usize);
            axpy(ere, scale * g, &qre);
            axpy(eim, scale * g, &qim);
        }
        {
            let (sre, sim) = grad.entities.row_mut(srow);
            for k in 0..d {
                sre[k] += scale * (gre[k] * r.re[k] + gim[k] * r.im[k]);
                sim[k] += scale * (-gre[k] * r.im[k] + gim[k] * r.re[k]);
            }
            let (rre, rim) = grad.relations.row_mut(rrow);
            for k in 0..d {
                rre[k] += scale * (gre[k] * s.re[k] + gim[k] * s.im[k]);
                rim[k] += scale * (-gre[k] * s.im[k] + gim[k] * s.re[k]);
            }
        }

        // head: score_c = <p_re, e_re> - <p_im, e_im>, p = r * conj(o)
        head_query(r, o, &mut qre, &mut qim);
        scores.clear();
        scores.extend(cs.rows().iter().map(|&c| {
            let e = ents.row(c as usize);
            dot(&qre, e.re) - dot(&qim, e.im)
        }));
        total += nll_and_dscores(&mut scores, gold_position(cs, srow)?);
        gre.fill(0.0);
        gim.fill(0.0);
        for (&c, &g) in cs.rows().iter().zip(&scores) {
            let e = ents.row(c as usize);
            axpy(&mut gre, g, e.re);
            axpy(&mut gim, -g, e.im);
            let (ere, eim) = grad.entities.row_mut(c as usize);
            axpy(ere, scale * g, &qre);
            axpy(eim, -scale * g, &qim);
        }
        {
            let (rre, rim) = grad.relations.row_mut(rrow);
            for k in 0..d {
                rre[k] += scale * (gre[k] * o.re[k] - gim[k] * o.im[k]);
                rim[k] += scale * (gre[k] * o.im[k] + gim[k] * o.re[k]);
            }
            let (ore, oim) = grad.entities.row_mut(orow);
            for k in 0..d {
                ore[k] += scale * (gre[k] * r.re[k] + gim[k] * r.im[k]);
                oim[k] += scale * (gre[k] * r.im[k] - gim[k] * r.re[k]);
            }
        }
    }
    Ok(total)
}

/// Sum of squared norms of the distinct entity and relation rows the batch touches.
pub fn regularizer(model: &KgeModel, batch: &[(LangId, Triple)], grad: &mut Gradients, scale: f64) -> f64 {
    let mut ent = BTreeSet::new();
    let mut rel = BTreeSet::new();
    for (_, t) in batch {
        ent.insert(model.entity_row(t.s));
        ent.insert(model.entity_row(t.o));
        rel.insert(model.relation_row(t.r));
    }
    let mut total = 0.0;
    for (table, gtable, rows) in [
        (&model.entities, &mut grad.entities, ent),
        (&model.relations, &mut grad.relations, rel),
    ] {
        for row in rows {
            total += table.row_norm_sq(row);
            let src = table.row(row);
            let (gre, gim) = gtable.row_mut(row);
            axpy(gre, 2.0 * scale, src.re);
            axpy(gim, 2.0 * scale, src.im);
        }
    }
    total
}

/// `log(1 + exp(x))`, stable.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Per-pair BCE between target `b` and `sigmoid(cos)`, with derivatives in `b` and `cos`.
pub fn bce_cosine(b: f64, cos: f64) -> (f64, f64, f64) {
    let loss = b * softplus(-cos) + (1.0 - b) * softplus(cos);
    (loss, -cos, sigmoid(cos) - b)
}

/// Relation-alignment loss over the pairs that pass the relation test indicator.
/// Beliefs are evaluated at `params`; for soft tables their `(w, c)` derivatives
/// are accumulated into `grad.w` and `grad.c`.
pub fn ra_loss(
    model: &KgeModel,
    table: &RelationBeliefTable,
    form: RaLossForm,
    params: OverlapParams,
    grad: &mut Gradients,
    scale: f64,
) -> f64 {
    let mut total = 0.0;
    for &idx in table.active() {
        let (r1, r2) = table.pair(idx);
        let (b, db_dw, db_dc) = table.equiv_grad(idx, params);
        let (i, j) = (model.relation_row(r1), model.relation_row(r2));
        let (u, v) = (model.relations.row(i), model.relations.row(j));
        let (loss, dl_db) = match form {
            RaLossForm::L1 => {
                let d = u.re.len();
                let mut dist = 0.0;
                if i != j {
                    let g = &mut grad.relations;
                    for k in 0..d {
                        let (dr, di) = (u.re[k] - v.re[k], u.im[k] - v.im[k]);
                        dist += dr.abs() + di.abs();
                        g.re[i * d + k] += scale * b * sgn(dr);
                        g.im[i * d + k] += scale * b * sgn(di);
                        g.re[j * d + k] -= scale * b * sgn(dr);
                        g.im[j * d + k] -= scale * b * sgn(di);
                    }
                }
                (b * dist, dist)
            }
            RaLossForm::BceCosine => {
                let uu: Vec<f64> = u.re.iter().chain(u.im).copied().collect();
                let vv: Vec<f64> = v.re.iter().chain(v.im).copied().collect();
                let (nu, nv) = (dot(&uu, &uu).sqrt(), dot(&vv, &vv).sqrt());
                let cos = if i == j && nu > 0.0 {
                    1.0
                } else if nu == 0.0 || nv == 0.0 {
                    0.0
                } else {
                    dot(&uu, &vv) / (nu * nv)
                };
                let (loss, dl_db, dl_dcos) = bce_cosine(b, cos);
                if i != j && nu > 0.0 && nv > 0.0 {
                    let d = u.re.len();
                    for k in 0..2 * d {
                        let gu = vv[k] / (nu * nv) - cos * uu[k] / (nu * nu);
                        let gv = uu[k] / (nu * nv) - cos * vv[k] / (nv * nv);
                        let g = &mut grad.relations;
                        let (ti, tj) = if k < d { (&mut g.re, k) } else { (&mut g.im, k - d) };
                        ti[i * d + tj] += scale * dl_dcos * gu;
                        ti[j * d + tj] += scale * dl_dcos * gv;
                    }
                }
                (loss, dl_db)
            }
        };
        total += loss;
        grad.w += scale * dl_db * db_dw;
        grad.c += scale * dl_db * db_dc;
    }
    total
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
