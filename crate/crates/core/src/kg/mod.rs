//! In-memory data model for a set of per-language knowledge graphs that share
//! global entity and relation vocabularies.

mod union_find;
mod vocab;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

pub use union_find::{EquivClasses, UnionFind};
pub use vocab::Vocab;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LangId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u32);

macro_rules! index_impl {
    ($($t:ty),*) => {$(
        impl $t {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    )*};
}
index_impl!(LangId, EntityId, RelationId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub s: EntityId,
    pub r: RelationId,
    pub o: EntityId,
}

impl Triple {
    pub fn new(s: u32, r: u32, o: u32) -> Self {
        Self {
            s: EntityId(s),
            r: RelationId(r),
            o: EntityId(o),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Fold {
    Train,
    Dev,
    Test,
}

impl Fold {
    pub const ALL: [Fold; 3] = [Fold::Train, Fold::Dev, Fold::Test];

    pub fn file_stem(self) -> &'static str {
        match self {
            Fold::Train => "train",
            Fold::Dev => "dev",
            Fold::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LanguageFolds {
    pub train: Vec<Triple>,
    pub dev: Vec<Triple>,
    pub test: Vec<Triple>,
}

impl LanguageFolds {
    pub fn fold(&self, fold: Fold) -> &[Triple] {
        match fold {
            Fold::Train => &self.train,
            Fold::Dev => &self.dev,
            Fold::Test => &self.test,
        }
    }

    fn fold_mut(&mut self, fold: Fold) -> &mut Vec<Triple> {
        match fold {
            Fold::Train => &mut self.train,
            Fold::Dev => &mut self.dev,
            Fold::Test => &mut self.test,
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.dev).chain(&self.test)
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.dev.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Gold entity equivalences split into the part revealed at train time and the
/// part held out for evaluation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityAlignment {
    pub revealed: Vec<(EntityId, EntityId)>,
    pub held_out: Vec<(EntityId, EntityId)>,
}

impl EntityAlignment {
    pub fn gold(&self) -> impl Iterator<Item = &(EntityId, EntityId)> {
        self.revealed.iter().chain(&self.held_out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageStats {
    pub language: String,
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
}

#[derive(Debug, Clone)]
pub struct MultiKg {
    languages: Vec<String>,
    entities: Vocab,
    relations: Vocab,
    folds: Vec<LanguageFolds>,
    entity_alignment: EntityAlignment,
    relation_gold: Vec<(RelationId, RelationId)>,
    entities_by_lang: Vec<Vec<EntityId>>,
    relations_by_lang: Vec<Vec<RelationId>>,
}

impl MultiKg {
    /// Builds a graph from raw string rows `(language, fold, [s, r, o])`.
    /// Relation surfaces are scoped per language.
    pub fn from_raw<'a, I>(rows: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, Fold, [&'a str; 3])>,
    {
        let mut b = MultiKgBuilder::new(false);
        for (lang, fold, [s, r, o]) in rows {
            let l = b.add_language(lang);
            b.add_triple(l, fold, s, r, o);
        }
        b.build()
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn num_languages(&self) -> usize {
        self.languages.len()
    }

    pub fn lang_id(&self, tag: &str) -> Result<LangId> {
        self.languages
            .iter()
            .position(|l| l == tag)
            .map(|i| LangId(i as u32))
            .ok_or_else(|| Error::UnknownLanguage(tag.to_owned()))
    }

    pub fn lang_ids(&self) -> impl Iterator<Item = LangId> {
        (0..self.languages.len() as u32).map(LangId)
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entity_lang(&self, e: EntityId) -> LangId {
        self.entities
            .lang(e.0)
            .expect("entities always carry a language")
    }

    /// Language of a relation; `None` for relations in a shared vocabulary.
    pub fn relation_lang(&self, r: RelationId) -> Option<LangId> {
        self.relations.lang(r.0)
    }

    pub fn folds(&self, lang: LangId) -> &LanguageFolds {
        &self.folds[lang.index()]
    }

    pub fn triples(&self, lang: LangId, fold: Fold) -> &[Triple] {
        self.folds[lang.index()].fold(fold)
    }

    /// Entity ids of a language, ascending.
    pub fn entities_of(&self, tag: &str) -> Result<&[EntityId]> {
        let l = self.lang_id(tag)?;
        Ok(&self.entities_by_lang[l.index()])
    }

    /// Relation ids used by (or scoped to) a language, ascending.
    pub fn relations_of(&self, tag: &str) -> Result<&[RelationId]> {
        let l = self.lang_id(tag)?;
        Ok(&self.relations_by_lang[l.index()])
    }

    pub fn entities_in(&self, lang: LangId) -> &[EntityId] {
        &self.entities_by_lang[lang.index()]
    }

    pub fn relations_in(&self, lang: LangId) -> &[RelationId] {
        &self.relations_by_lang[lang.index()]
    }

    pub fn stats(&self) -> Vec<LanguageStats> {
        self.lang_ids()
            .map(|l| LanguageStats {
                language: self.languages[l.index()].clone(),
                entities: self.entities_by_lang[l.index()].len(),
                relations: self.relations_by_lang[l.index()].len(),
                triples: self.folds[l.index()].len(),
            })
            .collect()
    }

    pub fn entity_alignment(&self) -> &EntityAlignment {
        &self.entity_alignment
    }

    pub fn relation_gold(&self) -> &[(RelationId, RelationId)] {
        &self.relation_gold
    }

    fn check_cross_language_entities(&self, pairs: &[(EntityId, EntityId)]) -> Result<()> {
        for &(a, b) in pairs {
            if a.index() >= self.num_entities() || b.index() >= self.num_entities() {
                return Err(Error::Internal(format!(
                    "entity alignment ({}, {}) outside the vocabulary",
                    a.0, b.0
                )));
            }
            if self.entity_lang(a) == self.entity_lang(b) {
                return Err(Error::Config(format!(
                    "entity alignment {} = {} joins entities of the same language",
                    self.entities.surface(a.0),
                    self.entities.surface(b.0)
                )));
            }
        }
        Ok(())
    }

    pub fn set_entity_alignment(&mut self, alignment: EntityAlignment) -> Result<()> {
        self.check_cross_language_entities(&alignment.revealed)?;
        self.check_cross_language_entities(&alignment.held_out)?;
        let norm = |&(a, b): &(EntityId, EntityId)| if a <= b { (a, b) } else { (b, a) };
        let revealed: HashSet<_> = alignment.revealed.iter().map(norm).collect();
        if alignment.held_out.iter().map(norm).any(|p| revealed.contains(&p)) {
            return Err(Error::Config(
                "revealed and held-out entity alignments overlap".into(),
            ));
        }
        self.entity_alignment = alignment;
        Ok(())
    }

    pub fn set_relation_gold(&mut self, pairs: Vec<(RelationId, RelationId)>) -> Result<()> {
        for &(a, b) in &pairs {
            if a.index() >= self.num_relations() || b.index() >= self.num_relations() {
                return Err(Error::Internal(format!(
                    "relation alignment ({}, {}) outside the vocabulary",
                    a.0, b.0
                )));
            }
            let (la, lb) = (self.relation_lang(a), self.relation_lang(b));
            if la.is_none() || la == lb {
                return Err(Error::Config(format!(
                    "relation alignment {} = {} does not join two languages",
                    self.relations.surface(a.0),
                    self.relations.surface(b.0)
                )));
            }
        }
        self.relation_gold = pairs;
        Ok(())
    }

    /// Classes induced by the revealed entity equivalences.
    pub fn revealed_classes(&self) -> EquivClasses {
        EquivClasses::from_pairs(
            self.num_entities(),
            self.entity_alignment
                .revealed
                .iter()
                .map(|(a, b)| (a.index(), b.index())),
        )
    }

    /// Classes induced by all gold entity equivalences.
    pub fn gold_entity_classes(&self) -> EquivClasses {
        EquivClasses::from_pairs(
            self.num_entities(),
            self.entity_alignment
                .gold()
                .map(|(a, b)| (a.index(), b.index())),
        )
    }

    pub fn gold_relation_classes(&self) -> EquivClasses {
        EquivClasses::from_pairs(
            self.num_relations(),
            self.relation_gold.iter().map(|(a, b)| (a.index(), b.index())),
        )
    }

    /// Union over all languages of one fold, collapsed under `eq` and `renames`.
    pub fn collapse_union(
        &self,
        eq: &EquivClasses,
        renames: &RelationRenames,
        fold: Fold,
    ) -> Vec<Triple> {
        collapse_union(
            self.folds.iter().flat_map(|f| f.fold(fold).iter().copied()),
            eq,
            renames,
        )
    }

    /// A copy holding only one language's triples. Vocabularies are kept whole so
    /// ids stay valid; alignments are dropped.
    pub fn restrict_to(&self, lang: LangId) -> MultiKg {
        let mut out = self.clone();
        for (i, f) in out.folds.iter_mut().enumerate() {
            if i != lang.index() {
                *f = LanguageFolds::default();
            }
        }
        out.entity_alignment = EntityAlignment::default();
        out.relation_gold.clear();
        out
    }

    /// Swaps in a new relation vocabulary with remapped folds.
    pub(crate) fn replace_relations(&mut self, relations: Vocab, folds: Vec<LanguageFolds>) {
        let mut rel_sets = vec![BTreeSet::new(); self.languages.len()];
        for r in 0..relations.len() as u32 {
            if let Some(l) = relations.lang(r) {
                rel_sets[l.index()].insert(RelationId(r));
            }
        }
        for (l, f) in folds.iter().enumerate() {
            rel_sets[l].extend(f.all().map(|t| t.r));
        }
        self.relations = relations;
        self.folds = folds;
        self.relation_gold.clear();
        self.relations_by_lang = rel_sets.into_iter().map(|s| s.into_iter().collect()).collect();
    }
}

/// Incremental constructor for [`MultiKg`]. Triples are deduplicated per
/// language; a triple already present in an earlier fold is dropped, which keeps
/// folds pairwise disjoint.
#[derive(Debug, Clone, Default)]
pub struct MultiKgBuilder {
    languages: Vec<String>,
    entities: Vocab,
    relations: Vocab,
    shared_relations: bool,
    folds: Vec<LanguageFolds>,
    seen: Vec<HashSet<Triple>>,
    duplicates: usize,
}

impl MultiKgBuilder {
    /// With `shared_relations`, relation surfaces are one vocabulary across
    /// languages; otherwise each language gets its own relation ids.
    pub fn new(shared_relations: bool) -> Self {
        Self {
            shared_relations,
            ..Self::default()
        }
    }

    pub fn add_language(&mut self, tag: &str) -> LangId {
        if let Some(i) = self.languages.iter().position(|l| l == tag) {
            return LangId(i as u32);
        }
        self.languages.push(tag.to_owned());
        self.folds.push(LanguageFolds::default());
        self.seen.push(HashSet::new());
        LangId(self.languages.len() as u32 - 1)
    }

    pub fn lang_id(&self, tag: &str) -> Option<LangId> {
        self.languages
            .iter()
            .position(|l| l == tag)
            .map(|i| LangId(i as u32))
    }

    /// Returns false when the triple was a duplicate.
    pub fn add_triple(&mut self, lang: LangId, fold: Fold, s: &str, r: &str, o: &str) -> bool {
        let s = self.entities.intern(Some(lang), s);
        let o = self.entities.intern(Some(lang), o);
        let rel_lang = if self.shared_relations {
            None
        } else {
            Some(lang)
        };
        let r = self.relations.intern(rel_lang, r);
        let t = Triple::new(s, r, o);
        if !self.seen[lang.index()].insert(t) {
            self.duplicates += 1;
            return false;
        }
        self.folds[lang.index()].fold_mut(fold).push(t);
        true
    }

    pub fn entity(&self, lang: LangId, surface: &str) -> Option<EntityId> {
        self.entities.get(Some(lang), surface).map(EntityId)
    }

    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn build(self) -> MultiKg {
        let n_lang = self.languages.len();
        let mut entities_by_lang = vec![Vec::new(); n_lang];
        for e in 0..self.entities.len() as u32 {
            let l = self.entities.lang(e).expect("entities carry a language");
            entities_by_lang[l.index()].push(EntityId(e));
        }
        let mut rel_sets = vec![BTreeSet::new(); n_lang];
        for r in 0..self.relations.len() as u32 {
            if let Some(l) = self.relations.lang(r) {
                rel_sets[l.index()].insert(RelationId(r));
            }
        }
        for (l, f) in self.folds.iter().enumerate() {
            rel_sets[l].extend(f.all().map(|t| t.r));
        }
        MultiKg {
            languages: self.languages,
            entities: self.entities,
            relations: self.relations,
            folds: self.folds,
            entity_alignment: EntityAlignment::default(),
            relation_gold: Vec::new(),
            entities_by_lang,
            relations_by_lang: rel_sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }
}

/// Relation rename map for the union baseline. Validated to be idempotent:
/// every target maps to itself.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelationRenames {
    map: BTreeMap<RelationId, RelationId>,
}

impl RelationRenames {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(map: BTreeMap<RelationId, RelationId>) -> Result<Self> {
        for (&from, &to) in &map {
            if let Some(&next) = map.get(&to) {
                if next != to {
                    return Err(Error::Config(format!(
                        "relation rename {} -> {} -> {} is not idempotent",
                        from.0, to.0, next.0
                    )));
                }
            }
        }
        Ok(Self { map })
    }

    /// Renames every member of an equivalence class to its smallest id.
    pub fn from_equivalences(
        num_relations: usize,
        pairs: impl IntoIterator<Item = (RelationId, RelationId)>,
    ) -> Self {
        let eq = EquivClasses::from_pairs(
            num_relations,
            pairs.into_iter().map(|(a, b)| (a.index(), b.index())),
        );
        let map = (0..num_relations)
            .filter(|&r| eq.rep(r) != r)
            .map(|r| (RelationId(r as u32), RelationId(eq.rep(r) as u32)))
            .collect();
        Self { map }
    }

    #[inline]
    pub fn apply(&self, r: RelationId) -> RelationId {
        self.map.get(&r).copied().unwrap_or(r)
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().all(|(a, b)| a == b)
    }
}

/// Replaces entities by class representatives and relations by their renames,
/// dropping duplicates created by the collapse. First-occurrence order is kept.
pub fn collapse_union(
    triples: impl IntoIterator<Item = Triple>,
    eq: &EquivClasses,
    renames: &RelationRenames,
) -> Vec<Triple> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for t in triples {
        let c = Triple {
            s: EntityId(eq.rep(t.s.index()) as u32),
            r: renames.apply(t.r),
            o: EntityId(eq.rep(t.o.index()) as u32),
        };
        if seen.insert(c) {
            out.push(c);
        }
    }
    out
}

/// Index of known (s, r) -> objects and (r, o) -> subjects.
#[derive(Debug, Clone, Default)]
pub struct FactIndex {
    pub by_subject: HashMap<(u32, u32), Vec<u32>>,
    pub by_object: HashMap<(u32, u32), Vec<u32>>,
}

impl FactIndex {
    pub fn insert(&mut self, s: u32, r: u32, o: u32) {
        self.by_subject.entry((s, r)).or_default().push(o);
        self.by_object.entry((r, o)).or_default().push(s);
    }

    pub fn objects(&self, s: u32, r: u32) -> &[u32] {
        self.by_subject.get(&(s, r)).map_or(&[], Vec::as_slice)
    }

    pub fn subjects(&self, r: u32, o: u32) -> &[u32] {
        self.by_object.get(&(r, o)).map_or(&[], Vec::as_slice)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_lang_kg() -> MultiKg {
        let mut kg = MultiKg::from_raw([
            ("A", Fold::Train, ["a1", "rA", "a2"]),
            ("B", Fold::Train, ["b1", "rB", "b2"]),
        ]);
        let align = EntityAlignment {
            revealed: vec![
                (EntityId(0), EntityId(2)),
                (EntityId(1), EntityId(3)),
            ],
            held_out: vec![],
        };
        kg.set_entity_alignment(align).unwrap();
        kg
    }

    #[test]
    fn empty_input_has_zero_counts() {
        let kg = MultiKg::from_raw(std::iter::empty());
        assert_eq!(kg.num_languages(), 0);
        assert_eq!(kg.num_entities(), 0);
        assert!(kg.stats().is_empty());
    }

    #[test]
    fn duplicate_triples_are_removed() {
        let kg = MultiKg::from_raw([
            ("en", Fold::Train, ["a", "r", "b"]),
            ("en", Fold::Train, ["a", "r", "b"]),
        ]);
        assert_eq!(kg.stats()[0].triples, 1);
    }

    #[test]
    fn duplicate_across_folds_stays_in_first_fold() {
        let kg = MultiKg::from_raw([
            ("en", Fold::Train, ["a", "r", "b"]),
            ("en", Fold::Test, ["a", "r", "b"]),
        ]);
        let l = kg.lang_id("en").unwrap();
        assert_eq!(kg.triples(l, Fold::Train).len(), 1);
        assert!(kg.triples(l, Fold::Test).is_empty());
    }

    #[test]
    fn per_language_listing() {
        let kg = two_lang_kg();
        assert_eq!(kg.entities_of("A").unwrap(), &[EntityId(0), EntityId(1)]);
        assert_eq!(kg.relations_of("B").unwrap(), &[RelationId(1)]);
        assert!(matches!(
            kg.entities_of("xx"),
            Err(Error::UnknownLanguage(_))
        ));
    }

    #[test]
    fn full_collapse_leaves_one_triple() {
        let kg = two_lang_kg();
        let renames =
            RelationRenames::from_equivalences(2, [(RelationId(0), RelationId(1))]);
        let out = kg.collapse_union(&kg.revealed_classes(), &renames, Fold::Train);
        assert_eq!(out, vec![Triple::new(0, 0, 1)]);
    }

    #[test]
    fn no_equivalences_is_identity() {
        let kg = MultiKg::from_raw([
            ("A", Fold::Train, ["a1", "rA", "a2"]),
            ("A", Fold::Train, ["a2", "rA", "a1"]),
            ("B", Fold::Train, ["b1", "rB", "b2"]),
        ]);
        let out = kg.collapse_union(
            &kg.revealed_classes(),
            &RelationRenames::identity(),
            Fold::Train,
        );
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn non_idempotent_renames_are_rejected() {
        let map = BTreeMap::from([
            (RelationId(0), RelationId(1)),
            (RelationId(1), RelationId(2)),
        ]);
        assert!(matches!(RelationRenames::new(map), Err(Error::Config(_))));
        let cyc = BTreeMap::from([
            (RelationId(0), RelationId(1)),
            (RelationId(1), RelationId(0)),
        ]);
        assert!(RelationRenames::new(cyc).is_err());
        let ok = BTreeMap::from([
            (RelationId(0), RelationId(1)),
            (RelationId(1), RelationId(1)),
        ]);
        assert!(RelationRenames::new(ok).is_ok());
    }

    #[test]
    fn same_language_alignment_is_rejected() {
        let mut kg = MultiKg::from_raw([("A", Fold::Train, ["a1", "r", "a2"])]);
        let bad = EntityAlignment {
            revealed: vec![(EntityId(0), EntityId(1))],
            held_out: vec![],
        };
        assert!(kg.set_entity_alignment(bad).is_err());
    }

    #[test]
    fn overlapping_alignment_halves_are_rejected() {
        let mut kg = two_lang_kg();
        let bad = EntityAlignment {
            revealed: vec![(EntityId(0), EntityId(2))],
            held_out: vec![(EntityId(2), EntityId(0))],
        };
        assert!(kg.set_entity_alignment(bad).is_err());
    }

    fn arb_triples() -> impl Strategy<Value = Vec<Triple>> {
        proptest::collection::vec((0u32..12, 0u32..4, 0u32..12), 0..40)
            .prop_map(|v| v.into_iter().map(|(s, r, o)| Triple::new(s, r, o)).collect())
    }

    proptest! {
        #[test]
        fn collapse_is_idempotent_and_shrinking(
            triples in arb_triples(),
            pairs in proptest::collection::vec((0usize..12, 0usize..12), 0..8),
            rel_pairs in proptest::collection::vec((0u32..4, 0u32..4), 0..3),
        ) {
            let eq = EquivClasses::from_pairs(12, pairs);
            let renames = RelationRenames::from_equivalences(
                4,
                rel_pairs.into_iter().map(|(a, b)| (RelationId(a), RelationId(b))),
            );
            let once = collapse_union(triples.iter().copied(), &eq, &renames);
            let twice = collapse_union(once.iter().copied(), &eq, &renames);
            prop_assert_eq!(&once, &twice);
            let distinct_input: HashSet<_> = triples.iter().collect();
            prop_assert!(once.len() <= distinct_input.len());
            let mapped: HashSet<_> = triples
                .iter()
                .map(|t| (eq.rep(t.s.index()), renames.apply(t.r), eq.rep(t.o.index())))
                .collect();
            prop_assert_eq!(once.len(), mapped.len());
        }
    }
}
