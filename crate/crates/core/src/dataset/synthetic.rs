//! Synthetic multilingual KG generator.
//!
//! A base KG is sampled from a latent-angle model: every entity has an angle,
//! every relation an offset plus subject and object pools, and objects are drawn
//! near `angle(s) + offset(r)`. Each extra language is an id-renamed clone of the
//! base that independently drops a fraction of its facts.

use std::collections::HashSet;
use std::f64::consts::TAU;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{split_folds, write_dataset, DatasetLayout};
use crate::error::{Error, Result};
use crate::kg::{EntityAlignment, EntityId, MultiKgBuilder, RelationId};
use crate::kv::KeyValues;

/// Share of entities in each relation's subject (and object) pool.
const POOL_FRACTION: f64 = 0.3;
/// Concentration of objects around the target angle.
const SHARPNESS: f64 = 8.0;
const FORMAT: &str = "kgalign-synthetic-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_languages: usize,
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_triples: usize,
    pub fact_drop_fraction: f64,
    pub seed_align_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_languages: 5,
            n_entities: 200,
            n_relations: 20,
            n_triples: 2000,
            fact_drop_fraction: 0.3,
            seed_align_fraction: 0.5,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_languages == 0 || self.n_entities == 0 || self.n_relations == 0 {
            return Err(Error::Config(
                "languages, entities and relations must be positive".into(),
            ));
        }
        let capacity = (self.n_entities as u128).pow(2) * self.n_relations as u128;
        if self.n_triples as u128 > capacity {
            return Err(Error::Config(format!(
                "infeasible spec: {} triples exceed {} entities^2 x {} relations = {capacity}",
                self.n_triples, self.n_entities, self.n_relations
            )));
        }
        if !(0.0..1.0).contains(&self.fact_drop_fraction) {
            return Err(Error::Config(format!(
                "fact_drop_fraction must be in [0, 1), got {}",
                self.fact_drop_fraction
            )));
        }
        if !(self.seed_align_fraction > 0.0 && self.seed_align_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "seed_align_fraction must be in (0, 1], got {}",
                self.seed_align_fraction
            )));
        }
        Ok(())
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut spec = Self::default();
        for key in kv.keys() {
            match key {
                "format" => {}
                "n_languages" => spec.n_languages = kv.parse_value(key)?.unwrap(),
                "n_entities" => spec.n_entities = kv.parse_value(key)?.unwrap(),
                "n_relations" => spec.n_relations = kv.parse_value(key)?.unwrap(),
                "n_triples" => spec.n_triples = kv.parse_value(key)?.unwrap(),
                "fact_drop_fraction" => spec.fact_drop_fraction = kv.parse_value(key)?.unwrap(),
                "seed_align_fraction" => spec.seed_align_fraction = kv.parse_value(key)?.unwrap(),
                "seed" => spec.seed = kv.parse_value(key)?.unwrap(),
                other => return Err(Error::Config(format!("unknown spec key {other:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("format", FORMAT);
        kv.set("n_languages", self.n_languages);
        kv.set("n_entities", self.n_entities);
        kv.set("n_relations", self.n_relations);
        kv.set("n_triples", self.n_triples);
        kv.set("fact_drop_fraction", self.fact_drop_fraction);
        kv.set("seed_align_fraction", self.seed_align_fraction);
        kv.set("seed", self.seed);
        kv
    }
}

pub fn language_tag(k: usize) -> String {
    format!("lang{k}")
}

struct BaseRelation {
    offset: f64,
    subjects: Vec<usize>,
    objects: Vec<usize>,
}

fn sample_base(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<(usize, usize, usize)> {
    let n_e = spec.n_entities;
    let angles: Vec<f64> = (0..n_e).map(|_| rng.random::<f64>() * TAU).collect();
    let pool = ((n_e as f64 * POOL_FRACTION).round() as usize).clamp(1, n_e);
    let relations: Vec<BaseRelation> = (0..spec.n_relations)
        .map(|_| {
            let offset = rng.random::<f64>() * TAU;
            let mut subjects = index::sample(rng, n_e, pool).into_vec();
            let mut objects = index::sample(rng, n_e, pool).into_vec();
            subjects.sort_unstable();
            objects.sort_unstable();
            BaseRelation {
                offset,
                subjects,
                objects,
            }
        })
        .collect();

    let mut seen = HashSet::new();
    let mut facts = Vec::with_capacity(spec.n_triples);
    let mut weights = Vec::with_capacity(pool);
    let budget = 50 * spec.n_triples.max(1);

    let mut attempts = 0;
    while facts.len() < spec.n_triples && attempts < budget {
        attempts += 1;
        let r = rng.random_range(0..spec.n_relations);
        let rel = &relations[r];
        let s = rel.subjects[rng.random_range(0..rel.subjects.len())];
        let target = angles[s] + rel.offset;
        weights.clear();
        let mut total = 0.0;
        for &o in &rel.objects {
            total += (SHARPNESS * (target - angles[o]).cos()).exp();
            weights.push(total);
        }
        let u = rng.random::<f64>() * total;
        let pick = weights.partition_point(|&c| c <= u).min(weights.len() - 1);
        let o = rel.objects[pick];
        if seen.insert((s, r, o)) {
            facts.push((s, r, o));
        }
    }

    // Dense requests: fall back to uniform triples, then to exhaustive enumeration.
    attempts = 0;
    while facts.len() < spec.n_triples && attempts < budget {
        attempts += 1;
        let t = (
            rng.random_range(0..n_e),
            rng.random_range(0..spec.n_relations),
            rng.random_range(0..n_e),
        );
        if seen.insert(t) {
            facts.push(t);
        }
    }
    if facts.len() < spec.n_triples {
        let mut rest: Vec<_> = (0..n_e)
            .flat_map(|s| (0..spec.n_relations).flat_map(move |r| (0..n_e).map(move |o| (s, r, o))))
            .filter(|t| !seen.contains(t))
            .collect();
        rest.shuffle(rng);
        let need = spec.n_triples - facts.len();
        facts.extend(rest.into_iter().take(need));
    }
    facts
}

/// Writes a synthetic dataset under `out` and returns its layout.
pub fn generate_synthetic(spec: &SyntheticSpec, out: &Path) -> Result<DatasetLayout> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = sample_base(spec, &mut rng);

    // Per language: entity and relation renumbering, and the kept facts.
    let mut langs = Vec::with_capacity(spec.n_languages);
    for k in 0..spec.n_languages {
        let mut ent_perm: Vec<usize> = (0..spec.n_entities).collect();
        let mut rel_perm: Vec<usize> = (0..spec.n_relations).collect();
        let facts: Vec<_> = if k == 0 {
            base.clone()
        } else {
            ent_perm.shuffle(&mut rng);
            rel_perm.shuffle(&mut rng);
            base.iter()
                .copied()
                .filter(|_| rng.random::<f64>() >= spec.fact_drop_fraction)
                .collect()
        };
        langs.push((ent_perm, rel_perm, facts));
    }

    let ent_name = |k: usize, perm: &[usize], e: usize| format!("{}:e{:05}", language_tag(k), perm[e]);
    let rel_name = |k: usize, perm: &[usize], r: usize| format!("{}:r{:03}", language_tag(k), perm[r]);

    let mut b = MultiKgBuilder::new(false);
    for (k, (ent_perm, rel_perm, facts)) in langs.iter().enumerate() {
        let l = b.add_language(&language_tag(k));
        let (train, dev, test) = split_folds(facts.clone(), rng.random());
        for (fold, part) in [
            (crate::kg::Fold::Train, train),
            (crate::kg::Fold::Dev, dev),
            (crate::kg::Fold::Test, test),
        ] {
            for (s, r, o) in part {
                b.add_triple(
                    l,
                    fold,
                    &ent_name(k, ent_perm, s),
                    &rel_name(k, rel_perm, r),
                    &ent_name(k, ent_perm, o),
                );
            }
        }
    }
    let mut kg = b.build();

    let mut ent_gold = Vec::new();
    let mut rel_gold = Vec::new();
    for i in 0..spec.n_languages {
        for j in i + 1..spec.n_languages {
            let (li, lj) = (kg.lang_id(&language_tag(i))?, kg.lang_id(&language_tag(j))?);
            for e in 0..spec.n_entities {
                let a = kg.entities().get(Some(li), &ent_name(i, &langs[i].0, e));
                let c = kg.entities().get(Some(lj), &ent_name(j, &langs[j].0, e));
                if let (Some(a), Some(c)) = (a, c) {
                    ent_gold.push((EntityId(a), EntityId(c)));
                }
            }
            for r in 0..spec.n_relations {
                let a = kg.relations().get(Some(li), &rel_name(i, &langs[i].1, r));
                let c = kg.relations().get(Some(lj), &rel_name(j, &langs[j].1, r));
                if let (Some(a), Some(c)) = (a, c) {
                    rel_gold.push((RelationId(a), RelationId(c)));
                }
            }
        }
    }
    kg.set_entity_alignment(EntityAlignment {
        revealed: ent_gold,
        held_out: Vec::new(),
    })?;
    kg.set_relation_gold(rel_gold)?;

    let layout = DatasetLayout::new(out);
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_dataset(&kg, &layout)?;
    spec.to_key_values().write(&layout.manifest_path())?;
    Ok(layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{load_dataset, LoadOptions};
    use crate::kg::Fold;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            n_languages: 2,
            n_entities: 60,
            n_relations: 6,
            n_triples: 300,
            fact_drop_fraction: 0.3,
            seed_align_fraction: 0.5,
            seed: 11,
        }
    }

    fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        for l in ["lang0", "lang1"] {
            for f in ["train", "dev", "test"] {
                let p = dir.join(l).join(format!("{f}.tsv"));
                out.push((p.display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
        for p in [
            dir.join("entity_align/lang0-lang1.tsv"),
            dir.join("relation_align/lang0-lang1.tsv"),
            dir.join("manifest.txt"),
        ] {
            out.push((p.display().to_string(), std::fs::read(&p).unwrap()));
        }
        out.into_iter()
            .map(|(p, b)| (p.rsplit_once("tmp").map_or(p.clone(), |x| x.1.to_owned()), b))
            .collect()
    }

    #[test]
    fn infeasible_spec_is_rejected() {
        let spec = SyntheticSpec {
            n_entities: 3,
            n_relations: 2,
            n_triples: 19,
            ..small()
        };
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        let tight = SyntheticSpec {
            n_triples: 18,
            ..spec
        };
        assert!(tight.validate().is_ok());
    }

    #[test]
    fn dense_spec_still_reaches_requested_count() {
        let tmp = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            n_languages: 1,
            n_entities: 4,
            n_relations: 2,
            n_triples: 32,
            ..small()
        };
        let layout = generate_synthetic(&spec, tmp.path()).unwrap();
        let kg = load_dataset(&layout, LoadOptions::default()).unwrap();
        assert_eq!(kg.stats()[0].triples, 32);
    }

    #[test]
    fn generation_is_byte_identical_per_seed() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_synthetic(&small(), a.path()).unwrap();
        generate_synthetic(&small(), b.path()).unwrap();
        let (ta, tb) = (tree(a.path()), tree(b.path()));
        for ((_, x), (_, y)) in ta.iter().zip(&tb) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn zero_drop_clone_is_renamed_copy() {
        let tmp = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            fact_drop_fraction: 0.0,
            ..small()
        };
        let layout = generate_synthetic(&spec, tmp.path()).unwrap();
        let kg = load_dataset(&layout, LoadOptions { seed_fraction: 1.0, split_seed: 0 }).unwrap();
        let eq = kg.gold_entity_classes();
        let req = kg.gold_relation_classes();
        let key = |t: &crate::kg::Triple| (eq.rep(t.s.index()), req.rep(t.r.index()), eq.rep(t.o.index()));
        let l0: HashSet<_> = kg.folds(crate::kg::LangId(0)).all().map(key).collect();
        let l1: HashSet<_> = kg.folds(crate::kg::LangId(1)).all().map(key).collect();
        assert_eq!(l0.len(), spec.n_triples);
        assert_eq!(l0, l1);
    }

    #[test]
    fn clone_drop_matches_emitted_file() {
        let tmp = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            n_entities: 200,
            n_relations: 20,
            n_triples: 2000,
            seed: 7,
            ..small()
        };
        let layout = generate_synthetic(&spec, tmp.path()).unwrap();
        let lines: usize = Fold::ALL
            .iter()
            .map(|f| {
                std::fs::read_to_string(layout.triples_path("lang1", *f))
                    .unwrap()
                    .lines()
                    .count()
            })
            .sum();
        // Binomial(2000, 0.7): mean 1400, sd ~20.5; 5 sd band.
        assert!((1297..=1503).contains(&lines), "{lines}");
        let base: usize = Fold::ALL
            .iter()
            .map(|f| {
                std::fs::read_to_string(layout.triples_path("lang0", *f))
                    .unwrap()
                    .lines()
                    .count()
            })
            .sum();
        assert_eq!(base, 2000);
    }

    #[test]
    fn write_then_load_roundtrip() {
        let a = tempfile::tempdir().unwrap();
        let layout = generate_synthetic(&small(), a.path()).unwrap();
        let opts = LoadOptions::from_layout(&layout).unwrap();
        let kg = load_dataset(&layout, opts).unwrap();
        let b = tempfile::tempdir().unwrap();
        let layout_b = DatasetLayout::new(b.path());
        crate::dataset::write_dataset(&kg, &layout_b).unwrap();
        let again = load_dataset(&layout_b, opts).unwrap();
        assert_eq!(kg.stats(), again.stats());
        assert_eq!(kg.entity_alignment(), again.entity_alignment());
        assert_eq!(kg.relation_gold(), again.relation_gold());
        for l in kg.lang_ids() {
            assert_eq!(kg.folds(l), again.folds(l));
        }
        assert_eq!(
            kg.entities().digest(kg.languages()),
            again.entities().digest(again.languages())
        );
    }

    #[test]
    fn spec_key_values_roundtrip() {
        let spec = small();
        let back = SyntheticSpec::from_key_values(&spec.to_key_values()).unwrap();
        assert_eq!(spec, back);
        let mut kv = spec.to_key_values();
        kv.set("bogus", 1);
        assert!(SyntheticSpec::from_key_values(&kv).is_err());
    }
}
