use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{TrainConfig, Variant};
use super::losses::{kgc_loss, ra_loss, regularizer, Gradients};
use super::optimizer::Adagrad;
use crate::embedding::{CandidateSet, KgeModel, RowMap};
use crate::error::{Error, Result};
use crate::kg::{EntityId, Fold, LangId, MultiKg, RelationId, Triple};
use crate::signatures::{refresh_beliefs, BeliefKind, OverlapParams, RelationBeliefTable, SignatureContext};

/// Per-epoch loss components. `l_ra` is the epoch's RA loss already spread over
/// batches, so `total = l_kgc + alpha * l_reg + beta * l_ra`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub epoch: usize,
    pub l_kgc: f64,
    pub l_reg: f64,
    pub l_ra: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(epoch: usize, l_kgc: f64, l_reg: f64, l_ra: f64, alpha: f64, beta: f64) -> Self {
        Self {
            epoch,
            l_kgc,
            l_reg,
            l_ra,
            total: l_kgc + alpha * l_reg + beta * l_ra,
        }
    }

    fn add(&mut self, other: &LossBreakdown) {
        self.l_kgc += other.l_kgc;
        self.l_reg += other.l_reg;
        self.l_ra += other.l_ra;
        self.total += other.total;
    }
}

pub const LOSS_CSV_HEADER: &str = "epoch,lKGC,lReg,lRA,total";

pub fn loss_csv(losses: &[LossBreakdown]) -> String {
    let mut out = format!("{LOSS_CSV_HEADER}\n");
    for l in losses {
        let _ = writeln!(out, "{},{},{},{},{}", l.epoch, l.l_kgc, l.l_reg, l.l_ra, l.total);
    }
    out
}

pub fn write_loss_csv(path: &Path, losses: &[LossBreakdown]) -> Result<()> {
    std::fs::write(path, loss_csv(losses)).map_err(|e| Error::io(path, e))
}

/// Derives an independent stream seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Row maps used by a variant: revealed entity classes share a row unless the
/// variant trains languages separately.
pub fn variant_rows(kg: &MultiKg, config: &TrainConfig) -> (RowMap, RowMap) {
    let ent = if config.variant.shares_entities() {
        RowMap::from_classes(&kg.revealed_classes())
    } else {
        RowMap::identity(kg.num_entities())
    };
    let rel = if config.variant == Variant::Union && config.union_rename_gold_relations {
        RowMap::from_classes(&kg.gold_relation_classes())
    } else {
        RowMap::identity(kg.num_relations())
    };
    (ent, rel)
}

/// One optimisation run over a fixed list of training triples.
pub struct Trainer<'a> {
    kg: &'a MultiKg,
    config: TrainConfig,
    model: KgeModel,
    opt: Adagrad,
    examples: Vec<(LangId, Triple)>,
    cands: Vec<CandidateSet>,
    signatures: Option<SignatureContext>,
    beliefs: Option<RelationBeliefTable>,
    rng: ChaCha8Rng,
    grad: Gradients,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    /// Joint trainer over all languages for every variant except `one`.
    pub fn new(kg: &'a MultiKg, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        if config.variant == Variant::One {
            return Err(Error::Config("variant one trains languages separately; use train()".into()));
        }
        let (ent, rel) = variant_rows(kg, config);
        let model = KgeModel::init_with_rows(ent, rel, config.dim, config.seed)?;
        let mut examples = Vec::new();
        for l in kg.lang_ids() {
            examples.extend(kg.triples(l, Fold::Train).iter().map(|&t| (l, t)));
        }
        if config.variant == Variant::Union {
            let mut seen = HashSet::new();
            examples.retain(|(_, t)| {
                seen.insert((model.entity_row(t.s), model.relation_row(t.r), model.entity_row(t.o)))
            });
        }
        Self::with_parts(kg, config.clone(), model, examples, config.seed)
    }

    /// Trainer for one language of variant `one`, with its own model and seed.
    pub fn single_language(kg: &'a MultiKg, config: &TrainConfig, lang: LangId) -> Result<Self> {
        config.validate()?;
        let seed = derive_seed(config.seed, lang.0 as u64);
        let model = KgeModel::init(kg.num_entities(), kg.num_relations(), config.dim, seed)?;
        let examples = kg.triples(lang, Fold::Train).iter().map(|&t| (lang, t)).collect();
        let config = TrainConfig {
            variant: Variant::One,
            ..config.clone()
        };
        Self::with_parts(kg, config, model, examples, seed)
    }

    fn with_parts(
        kg: &'a MultiKg,
        config: TrainConfig,
        model: KgeModel,
        examples: Vec<(LangId, Triple)>,
        seed: u64,
    ) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Config("no training triples".into()));
        }
        let cands = CandidateSet::per_language(kg, &model.entity_rows, config.global_candidates);
        let signatures = config
            .variant
            .belief_kind()
            .map(|_| SignatureContext::new(kg, &kg.revealed_classes()));
        Ok(Self {
            kg,
            opt: Adagrad::new(&model, config.lr, config.overlap_lr),
            grad: Gradients::zeros(&model),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX)),
            config,
            model,
            examples,
            cands,
            signatures,
            beliefs: None,
            epoch: 0,
        })
    }

    pub fn model(&self) -> &KgeModel {
        &self.model
    }

    pub fn into_model(self) -> KgeModel {
        self.model
    }

    pub fn beliefs(&self) -> Option<&RelationBeliefTable> {
        self.beliefs.as_ref()
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn num_examples(&self) -> usize {
        self.examples.len()
    }

    pub fn candidates(&self) -> &[CandidateSet] {
        &self.cands
    }

    pub fn kg(&self) -> &MultiKg {
        self.kg
    }

    /// Recomputes the belief table from the current model.
    pub fn refresh_beliefs(&mut self) {
        if let (Some(kind), Some(ctx)) = (self.config.variant.belief_kind(), &self.signatures) {
            self.beliefs = Some(refresh_beliefs(
                ctx,
                kind,
                &self.model,
                &self.config.belief_options(),
                self.epoch,
            ));
        }
    }

    fn overlap_trainable(&self) -> bool {
        self.config.variant.belief_kind() == Some(BeliefKind::SoftAsymmetric)
            && self.epoch >= self.config.freeze_epochs
    }

    /// Loss components of one batch with their gradients in `grad`: returns
    /// `(kgc, reg, ra)` where `ra` is the full RA loss and its gradient is
    /// weighted by `beta * ra_share`.
    pub fn batch_objective(
        &self,
        batch: &[(LangId, Triple)],
        ra_share: f64,
        grad: &mut Gradients,
    ) -> Result<(f64, f64, f64)> {
        let c = &self.config;
        let kgc = kgc_loss(&self.model, batch, &self.cands, grad, 1.0)?;
        let reg = regularizer(&self.model, batch, grad, c.alpha);
        let ra = match &self.beliefs {
            Some(t) => ra_loss(&self.model, t, c.ra_loss, self.model.overlap, grad, c.beta * ra_share),
            None => 0.0,
        };
        Ok((kgc, reg, ra))
    }

    /// One shuffled pass over the training triples.
    pub fn train_epoch(&mut self) -> Result<LossBreakdown> {
        let epoch = self.epoch;
        self.refresh_beliefs();
        let mut order = std::mem::take(&mut self.examples);
        order.shuffle(&mut self.rng);
        let n = order.len() as f64;
        let (alpha, beta) = (self.config.alpha, self.config.beta);
        let train_overlap = self.overlap_trainable();
        let mut grad = std::mem::replace(&mut self.grad, Gradients::zeros(&self.model));
        let (mut l_kgc, mut l_reg, mut l_ra) = (0.0, 0.0, 0.0);
        let mut result = Ok(());
        for (b, batch) in order.chunks(self.config.batch_size).enumerate() {
            grad.clear();
            let share = batch.len() as f64 / n;
            let (kgc, reg, ra) = match self.batch_objective(batch, share, &mut grad) {
                Ok(v) => v,
                Err(e) => {
                    result = Err(e);
                    break;
                }
            };
            let loss = kgc + alpha * reg + beta * share * ra;
            if !loss.is_finite() {
                result = Err(Error::Numerical {
                    epoch,
                    batch: b,
                    detail: format!("loss is {loss:e} (kgc {kgc:e}, reg {reg:e}, ra {ra:e})"),
                });
                break;
            }
            self.opt.step_embeddings(&mut self.model, &grad.entities, &grad.relations);
            if train_overlap {
                self.opt.step_overlap(&mut self.model, grad.w, grad.c);
            }
            l_kgc += kgc;
            l_reg += reg;
            l_ra += share * ra;
        }
        self.examples = order;
        self.grad = grad;
        result?;
        if !self.model.is_finite() {
            return Err(Error::Numerical {
                epoch,
                batch: self.examples.len().div_ceil(self.config.batch_size) - 1,
                detail: "parameters became non-finite".into(),
            });
        }
        self.epoch += 1;
        Ok(LossBreakdown::new(epoch, l_kgc, l_reg, l_ra, alpha, beta))
    }
}

/// Result of a full training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: KgeModel,
    pub losses: Vec<LossBreakdown>,
    /// `(w, c)` after every epoch.
    pub overlap_history: Vec<OverlapParams>,
    /// Beliefs used in the last epoch.
    pub beliefs: Option<RelationBeliefTable>,
    /// Variant `one` only: each language's own model.
    pub per_language: Vec<(LangId, KgeModel)>,
}

/// Trains `config.variant` for `config.epochs` epochs.
pub fn train(kg: &MultiKg, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if config.variant == Variant::One {
        return train_separately(kg, config);
    }
    let mut t = Trainer::new(kg, config)?;
    let mut losses = Vec::with_capacity(config.epochs);
    let mut overlap_history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        losses.push(t.train_epoch()?);
        overlap_history.push(t.model().overlap);
    }
    let beliefs = t.beliefs().cloned();
    Ok(TrainOutcome {
        model: t.into_model(),
        losses,
        overlap_history,
        beliefs,
        per_language: Vec::new(),
    })
}

/// Languages are trained in lockstep by independent trainers; losses are summed.
fn train_separately(kg: &MultiKg, config: &TrainConfig) -> Result<TrainOutcome> {
    let mut trainers = Vec::new();
    for l in kg.lang_ids() {
        if !kg.triples(l, Fold::Train).is_empty() {
            trainers.push((l, Trainer::single_language(kg, config, l)?));
        }
    }
    if trainers.is_empty() {
        return Err(Error::Config("no training triples".into()));
    }
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut sum = LossBreakdown::new(epoch, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (_, t) in &mut trainers {
            sum.add(&t.train_epoch()?);
        }
        losses.push(sum);
    }
    let per_language: Vec<(LangId, KgeModel)> = trainers.into_iter().map(|(l, t)| (l, t.into_model())).collect();
    let model = merge_language_models(kg, config.dim, &per_language)?;
    Ok(TrainOutcome {
        overlap_history: vec![model.overlap; config.epochs],
        model,
        losses,
        beliefs: None,
        per_language,
    })
}

/// Builds one model whose rows for each language's entities and relations come
/// from that language's model.
pub fn merge_language_models(kg: &MultiKg, dim: usize, parts: &[(LangId, KgeModel)]) -> Result<KgeModel> {
    let mut out = KgeModel::init(kg.num_entities(), kg.num_relations(), dim, 0)?;
    out.entities.fill_zero();
    out.relations.fill_zero();
    for (l, m) in parts {
        for &e in kg.entities_in(*l) {
            copy_row(&mut out, m, e, true);
        }
        for &r in kg.relations_in(*l) {
            copy_row(&mut out, m, EntityId(r.0), false);
        }
    }
    Ok(out)
}

fn copy_row(dst: &mut KgeModel, src: &KgeModel, id: EntityId, entity: bool) {
    let (from, to) = if entity {
        (src.entity(id), dst.entities.row_mut(dst.entity_rows.row(id.index())))
    } else {
        let r = RelationId(id.0);
        (src.relation(r), dst.relations.row_mut(dst.relation_rows.row(r.index())))
    };
    to.0.copy_from_slice(from.re);
    to.1.copy_from_slice(from.im);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::EntityAlignment;
    use crate::train::config::RaLossForm;

    fn toy() -> MultiKg {
        let mut rows = Vec::new();
        for (l, off) in [("en", 0), ("fr", 0)] {
            for i in 0..10 {
                let s = format!("e{}", (i + off) % 6);
                let o = format!("e{}", (i * 3 + 1) % 6);
                let r = if i % 2 == 0 { "p" } else { "q" };
                rows.push((l, Fold::Train, [s, r.to_string(), o]));
            }
        }
        let rows_ref: Vec<(&str, Fold, [&str; 3])> = rows
            .iter()
            .map(|(l, f, [a, b, c])| (*l, *f, [a.as_str(), b.as_str(), c.as_str()]))
            .collect();
        let mut kg = MultiKg::from_raw(rows_ref);
        let en = kg.lang_id("en").unwrap();
        let fr = kg.lang_id("fr").unwrap();
        let mut revealed = Vec::new();
        for i in 0..3 {
            let s = format!("e{i}");
            let a = kg.entities().get(Some(en), &s);
            let b = kg.entities().get(Some(fr), &s);
            if let (Some(a), Some(b)) = (a, b) {
                revealed.push((EntityId(a), EntityId(b)));
            }
        }
        kg.set_entity_alignment(EntityAlignment { revealed, held_out: vec![] }).unwrap();
        kg
    }

    fn small(variant: Variant) -> TrainConfig {
        TrainConfig {
            dim: 4,
            batch_size: 4,
            epochs: 5,
            variant,
            freeze_epochs: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn plain_complex_loss_decreases() {
        let kg = toy();
        let cfg = TrainConfig {
            alpha: 0.0,
            beta: 0.0,
            lr: 0.1,
            batch_size: 64,
            ..small(Variant::Union)
        };
        let out = train(&kg, &cfg).unwrap();
        for w in out.losses.windows(2) {
            assert!(w[1].l_kgc < w[0].l_kgc, "{:?}", out.losses);
        }
    }

    #[test]
    fn total_is_weighted_sum() {
        let kg = toy();
        for v in Variant::ALL {
            let cfg = TrainConfig { alpha: 0.3, beta: 0.7, ..small(v) };
            for l in train(&kg, &cfg).unwrap().losses {
                let expect = l.l_kgc + 0.3 * l.l_reg + 0.7 * l.l_ra;
                assert!((l.total - expect).abs() <= 1e-9 * expect.abs().max(1.0));
            }
        }
    }

    #[test]
    fn deterministic() {
        let kg = toy();
        for v in [Variant::One, Variant::SoftAsymmetric] {
            let a = train(&kg, &small(v)).unwrap();
            let b = train(&kg, &small(v)).unwrap();
            assert_eq!(a.model, b.model);
            assert_eq!(a.losses, b.losses);
        }
    }

    #[test]
    fn overlap_frozen_during_curriculum() {
        let kg = toy();
        let cfg = TrainConfig {
            beta: 1.0,
            ra_loss: RaLossForm::BceCosine,
            ..small(Variant::SoftAsymmetric)
        };
        let out = train(&kg, &cfg).unwrap();
        for p in &out.overlap_history[..2] {
            assert_eq!(*p, OverlapParams::default());
        }
        assert_ne!(out.overlap_history[4], OverlapParams::default());
        assert!(out.overlap_history.iter().all(|p| p.w > 0.0));
    }

    #[test]
    fn beta_zero_ignores_beliefs() {
        let kg = toy();
        let base = TrainConfig { beta: 0.0, ..small(Variant::Jaccard) };
        let a = train(&kg, &base).unwrap();
        let b = train(&kg, &TrainConfig { tau: 1.0, ..base.clone() }).unwrap();
        let c = train(&kg, &TrainConfig { variant: Variant::Asymmetric, ..base }).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.model, c.model);
    }

    #[test]
    fn one_trains_languages_independently() {
        let kg = toy();
        let out = train(&kg, &small(Variant::One)).unwrap();
        assert_eq!(out.per_language.len(), 2);
        let en = kg.lang_id("en").unwrap();
        let fr = kg.lang_id("fr").unwrap();
        // no row sharing: aligned entities end up with different vectors
        let a = EntityId(kg.entities().get(Some(en), "e0").unwrap());
        let b = EntityId(kg.entities().get(Some(fr), "e0").unwrap());
        assert_ne!(out.model.entity(a).re, out.model.entity(b).re);
        // merged rows come from the owning language's model
        assert_eq!(out.model.entity(b).re, out.per_language[1].1.entity(b).re);
        // a language's model is unaffected by the other language's data
        let solo = Trainer::single_language(&kg, &small(Variant::One), en).unwrap();
        let mut solo = solo;
        for _ in 0..5 {
            solo.train_epoch().unwrap();
        }
        assert_eq!(solo.model(), &out.per_language[0].1);
    }

    #[test]
    fn union_dedups_collapsed_triples() {
        let mut kg = toy();
        let all: usize = kg.lang_ids().map(|l| kg.triples(l, Fold::Train).len()).sum();
        let j = Trainer::new(&kg, &small(Variant::Jaccard)).unwrap();
        assert_eq!(j.num_examples(), all);
        // relations are per language, so nothing collapses without renames
        let u = Trainer::new(&kg, &small(Variant::Union)).unwrap();
        assert_eq!(u.num_examples(), all);

        let rel = |kg: &MultiKg, l: &str, s: &str| {
            RelationId(kg.relations().get(Some(kg.lang_id(l).unwrap()), s).unwrap())
        };
        let gold = vec![(rel(&kg, "en", "p"), rel(&kg, "fr", "p")), (rel(&kg, "en", "q"), rel(&kg, "fr", "q"))];
        kg.set_relation_gold(gold).unwrap();
        let cfg = TrainConfig {
            union_rename_gold_relations: true,
            ..small(Variant::Union)
        };
        let u = Trainer::new(&kg, &cfg).unwrap();
        assert!(u.num_examples() < all);
    }

    #[test]
    fn nan_aborts_with_batch_index() {
        let kg = toy();
        let mut t = Trainer::new(&kg, &small(Variant::Union)).unwrap();
        t.model.entities.re[0] = f64::NAN;
        match t.train_epoch() {
            Err(Error::Numerical { epoch: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn loss_csv_format() {
        let csv = loss_csv(&[LossBreakdown::new(0, 1.0, 2.0, 3.0, 0.5, 0.25)]);
        assert_eq!(csv, "epoch,lKGC,lReg,lRA,total\n0,1,2,3,2.75\n");
    }
}
