//! Complex-valued embedding tables and ComplEx scoring.
//!
//! The score of a triple is `Re(sum_k s_k * r_k * conj(o_k))`. Each table keeps
//! real and imaginary parts in two row-major matrices. Entities (and relations)
//! are mapped to rows through a [`RowMap`] so that aligned entities can share one
//! row of storage.

mod checkpoint;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use checkpoint::{check_shape, read_checkpoint, write_checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use crate::error::{Error, Result};
use crate::kg::{EntityId, EquivClasses, MultiKg, RelationId};
use crate::signatures::OverlapParams;

pub const INIT_STD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    rows: usize,
    dim: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

/// Borrowed view of one complex row.
#[derive(Debug, Clone, Copy)]
pub struct ComplexRow<'a> {
    pub re: &'a [f64],
    pub im: &'a [f64],
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            rows,
            dim,
            re: vec![0.0; rows * dim],
            im: vec![0.0; rows * dim],
        }
    }

    pub fn from_parts(rows: usize, dim: usize, re: Vec<f64>, im: Vec<f64>) -> Self {
        assert_eq!(re.len(), rows * dim);
        assert_eq!(im.len(), rows * dim);
        Self { rows, dim, re, im }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> ComplexRow<'_> {
        let span = i * self.dim..(i + 1) * self.dim;
        ComplexRow {
            re: &self.re[span.clone()],
            im: &self.im[span],
        }
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64]) {
        let span = i * self.dim..(i + 1) * self.dim;
        (&mut self.re[span.clone()], &mut self.im[span])
    }

    pub fn fill_zero(&mut self) {
        self.re.fill(0.0);
        self.im.fill(0.0);
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(&self.im).all(|v| v.is_finite())
    }

    /// Squared magnitude of one row.
    pub fn row_norm_sq(&self, i: usize) -> f64 {
        let r = self.row(i);
        r.re.iter().chain(r.im).map(|v| v * v).sum()
    }

    /// Row as one real vector `[re | im]`.
    pub fn row_concat(&self, i: usize) -> Vec<f64> {
        let r = self.row(i);
        r.re.iter().chain(r.im).copied().collect()
    }
}

/// Maps vocabulary ids to storage rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowMap {
    of: Vec<u32>,
    rows: usize,
}

impl RowMap {
    pub fn identity(n: usize) -> Self {
        Self {
            of: (0..n as u32).collect(),
            rows: n,
        }
    }

    /// One row per class, rows ordered by class representative.
    pub fn from_classes(eq: &EquivClasses) -> Self {
        let (of, rows) = eq.compress();
        Self { of, rows }
    }

    #[inline]
    pub fn row(&self, id: usize) -> usize {
        self.of[id] as usize
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.of.is_empty()
    }
}

/// Distinct entity rows that compete as answers to a query, with a reverse index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    rows: Vec<u32>,
    pos: Vec<u32>,
}

impl CandidateSet {
    /// `rows` may contain duplicates; `total_rows` is the size of the entity table.
    pub fn new(mut rows: Vec<u32>, total_rows: usize) -> Self {
        rows.sort_unstable();
        rows.dedup();
        let mut pos = vec![u32::MAX; total_rows];
        for (i, &r) in rows.iter().enumerate() {
            pos[r as usize] = i as u32;
        }
        Self { rows, pos }
    }

    pub fn all(total_rows: usize) -> Self {
        Self::new((0..total_rows as u32).collect(), total_rows)
    }

    /// One set per language: the rows of that language's entities, or every row
    /// when `global` is set.
    pub fn per_language(kg: &MultiKg, rows: &RowMap, global: bool) -> Vec<Self> {
        kg.lang_ids()
            .map(|l| {
                if global {
                    Self::all(rows.rows())
                } else {
                    let r = kg.entities_in(l).iter().map(|e| rows.row(e.index()) as u32).collect();
                    Self::new(r, rows.rows())
                }
            })
            .collect()
    }

    pub fn rows(&self) -> &[u32] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    #[inline]
    pub fn position(&self, row: usize) -> Option<usize> {
        match self.pos.get(row) {
            Some(&p) if p != u32::MAX => Some(p as usize),
            _ => None,
        }
    }
}

/// Entity and relation tables plus the soft-overlap parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct KgeModel {
    pub entities: EmbeddingTable,
    pub relations: EmbeddingTable,
    pub entity_rows: RowMap,
    pub relation_rows: RowMap,
    pub overlap: OverlapParams,
}

impl KgeModel {
    /// Every component drawn i.i.d. from N(0, 0.05), one row per id.
    pub fn init(n_entities: usize, n_relations: usize, dim: usize, seed: u64) -> Result<Self> {
        Self::init_with_rows(
            RowMap::identity(n_entities),
            RowMap::identity(n_relations),
            dim,
            seed,
        )
    }

    pub fn init_with_rows(
        entity_rows: RowMap,
        relation_rows: RowMap,
        dim: usize,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| normal.sample(&mut rng)).collect() };
        let ne = entity_rows.rows() * dim;
        let nr = relation_rows.rows() * dim;
        let entities = EmbeddingTable::from_parts(entity_rows.rows(), dim, draw(ne), draw(ne));
        let relations = EmbeddingTable::from_parts(relation_rows.rows(), dim, draw(nr), draw(nr));
        Ok(Self {
            entities,
            relations,
            entity_rows,
            relation_rows,
            overlap: OverlapParams::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.entities.dim()
    }

    #[inline]
    pub fn entity(&self, e: EntityId) -> ComplexRow<'_> {
        self.entities.row(self.entity_rows.row(e.index()))
    }

    #[inline]
    pub fn relation(&self, r: RelationId) -> ComplexRow<'_> {
        self.relations.row(self.relation_rows.row(r.index()))
    }

    pub fn entity_row(&self, e: EntityId) -> usize {
        self.entity_rows.row(e.index())
    }

    pub fn relation_row(&self, r: RelationId) -> usize {
        self.relation_rows.row(r.index())
    }

    pub fn score(&self, s: EntityId, r: RelationId, o: EntityId) -> f64 {
        score(self.entity(s), self.relation(r), self.entity(o))
    }

    pub fn is_finite(&self) -> bool {
        self.entities.is_finite()
            && self.relations.is_finite()
            && self.overlap.w.is_finite()
            && self.overlap.c.is_finite()
    }

    /// Re-establishes row sharing for an expanded model (one row per id) whose
    /// aliased rows hold identical copies. The representative's row is kept.
    pub fn shared_by(&self, eq: &EquivClasses) -> Self {
        let rows = RowMap::from_classes(eq);
        let dim = self.dim();
        let mut table = EmbeddingTable::zeros(rows.rows(), dim);
        for e in 0..eq.len() {
            if eq.rep(e) == e {
                let src = self.entity(EntityId(e as u32));
                let (re, im) = table.row_mut(rows.row(e));
                re.copy_from_slice(src.re);
                im.copy_from_slice(src.im);
            }
        }
        Self {
            entities: table,
            relations: self.relations.clone(),
            entity_rows: rows,
            relation_rows: self.relation_rows.clone(),
            overlap: self.overlap,
        }
    }
}

/// `Re(<s, r, conj(o)>)`.
#[inline]
pub fn score(s: ComplexRow<'_>, r: ComplexRow<'_>, o: ComplexRow<'_>) -> f64 {
    let mut acc = 0.0;
    for k in 0..s.re.len() {
        let (a, b) = (s.re[k], s.im[k]);
        let (c, d) = (r.re[k], r.im[k]);
        let (e, f) = (o.re[k], o.im[k]);
        acc += (a * c - b * d) * e + (a * d + b * c) * f;
    }
    acc
}

/// Elementwise `s * r`, the query vector for tail prediction.
pub fn tail_query(s: ComplexRow<'_>, r: ComplexRow<'_>, re: &mut [f64], im: &mut [f64]) {
    for k in 0..s.re.len() {
        re[k] = s.re[k] * r.re[k] - s.im[k] * r.im[k];
        im[k] = s.re[k] * r.im[k] + s.im[k] * r.re[k];
    }
}

/// Elementwise `r * conj(o)`, the query vector for head prediction.
pub fn head_query(r: ComplexRow<'_>, o: ComplexRow<'_>, re: &mut [f64], im: &mut [f64]) {
    for k in 0..r.re.len() {
        re[k] = r.re[k] * o.re[k] + r.im[k] * o.im[k];
        im[k] = r.im[k] * o.re[k] - r.re[k] * o.im[k];
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scores of `(s, r, o)` for every candidate object row.
pub fn score_all_objects(
    table: &EmbeddingTable,
    s: ComplexRow<'_>,
    r: ComplexRow<'_>,
    candidates: &[u32],
) -> Vec<f64> {
    let d = table.dim();
    let (mut qre, mut qim) = (vec![0.0; d], vec![0.0; d]);
    tail_query(s, r, &mut qre, &mut qim);
    candidates
        .iter()
        .map(|&c| {
            let o = table.row(c as usize);
            dot(&qre, o.re) + dot(&qim, o.im)
        })
        .collect()
}

/// Scores of `(s, r, o)` for every candidate subject row.
pub fn score_all_subjects(
    table: &EmbeddingTable,
    o: ComplexRow<'_>,
    r: ComplexRow<'_>,
    candidates: &[u32],
) -> Vec<f64> {
    let d = table.dim();
    let (mut pre, mut pim) = (vec![0.0; d], vec![0.0; d]);
    head_query(r, o, &mut pre, &mut pim);
    candidates
        .iter()
        .map(|&c| {
            let s = table.row(c as usize);
            dot(&pre, s.re) - dot(&pim, s.im)
        })
        .collect()
}

/// Numerically stable softmax (max subtracted before exponentiation).
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let mut out = scores.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

/// `log(sum(exp(v)))`, stable.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `Pr(o | s, r)` over the candidate object rows.
pub fn prob_object_given_sr(model: &KgeModel, s: EntityId, r: RelationId, candidates: &[u32]) -> Vec<f64> {
    softmax(&score_all_objects(&model.entities, model.entity(s), model.relation(r), candidates))
}

/// `Pr(s | o, r)` over the candidate subject rows.
pub fn prob_subject_given_or(model: &KgeModel, o: EntityId, r: RelationId, candidates: &[u32]) -> Vec<f64> {
    softmax(&score_all_subjects(&model.entities, model.entity(o), model.relation(r), candidates))
}

/// Gradient of the score with respect to the real and imaginary parts of one row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowGradient {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradients {
    pub s: RowGradient,
    pub r: RowGradient,
    pub o: RowGradient,
}

/// Analytic partial derivatives of [`score`] with respect to each component.
pub fn score_gradients(s: ComplexRow<'_>, r: ComplexRow<'_>, o: ComplexRow<'_>) -> ScoreGradients {
    let d = s.re.len();
    let mut g = ScoreGradients {
        s: RowGradient { re: vec![0.0; d], im: vec![0.0; d] },
        r: RowGradient { re: vec![0.0; d], im: vec![0.0; d] },
        o: RowGradient { re: vec![0.0; d], im: vec![0.0; d] },
    };
    for k in 0..d {
        let (a, b) = (s.re[k], s.im[k]);
        let (c, dd) = (r.re[k], r.im[k]);
        let (e, f) = (o.re[k], o.im[k]);
        g.s.re[k] = c * e + dd * f;
        g.s.im[k] = c * f - dd * e;
        g.r.re[k] = a * e + b * f;
        g.r.im[k] = a * f - b * e;
        g.o.re[k] = a * c - b * dd;
        g.o.im[k] = a * dd + b * c;
    }
    g
}

/// Cosine similarity of two real vectors; 0 when either has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::Rng;

    fn row<'a>(re: &'a [f64], im: &'a [f64]) -> ComplexRow<'a> {
        ComplexRow { re, im }
    }

    fn oracle_score(s: ComplexRow, r: ComplexRow, o: ComplexRow) -> f64 {
        (0..s.re.len())
            .map(|k| {
                let s = Complex64::new(s.re[k], s.im[k]);
                let r = Complex64::new(r.re[k], r.im[k]);
                let o = Complex64::new(o.re[k], o.im[k]);
                s * r * o.conj()
            })
            .sum::<Complex64>()
            .re
    }

    fn rand_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn unit_identity_scores_one() {
        let one = [1.0];
        let zero = [0.0];
        assert_eq!(score(row(&one, &zero), row(&one, &zero), row(&one, &zero)), 1.0);
    }

    #[test]
    fn imaginary_product_scores_minus_one() {
        let (one, zero) = ([1.0], [0.0]);
        let i = row(&zero, &one);
        assert_eq!(score(i, i, row(&one, &zero)), -1.0);
    }

    #[test]
    fn random_scores_match_complex_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let v: Vec<Vec<f64>> = (0..6).map(|_| rand_vec(&mut rng, 4)).collect();
            let (s, r, o) = (row(&v[0], &v[1]), row(&v[2], &v[3]), row(&v[4], &v[5]));
            assert!((score(s, r, o) - oracle_score(s, r, o)).abs() < 1e-12);
        }
    }

    #[test]
    fn init_statistics_and_determinism() {
        let m = KgeModel::init(500, 10, 100, 42).unwrap();
        let all: Vec<f64> = m.entities.re.iter().chain(&m.entities.im).copied().collect();
        assert_eq!(all.len(), 100_000);
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let sd = (all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 0.002, "{mean}");
        assert!((sd - 0.05).abs() < 0.002, "{sd}");
        assert_eq!(m, KgeModel::init(500, 10, 100, 42).unwrap());
        assert_ne!(m, KgeModel::init(500, 10, 100, 43).unwrap());
    }

    #[test]
    fn zero_dimension_is_rejected() {
        assert!(matches!(KgeModel::init(3, 1, 0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn one_n_scoring_matches_loop() {
        let m = KgeModel::init(60, 3, 8, 5).unwrap();
        let cands: Vec<u32> = (0..50).collect();
        let tails = score_all_objects(&m.entities, m.entity(EntityId(55)), m.relation(RelationId(1)), &cands);
        let heads = score_all_subjects(&m.entities, m.entity(EntityId(55)), m.relation(RelationId(1)), &cands);
        for (i, &c) in cands.iter().enumerate() {
            let t = m.score(EntityId(55), RelationId(1), EntityId(c));
            let h = m.score(EntityId(c), RelationId(1), EntityId(55));
            assert!((tails[i] - t).abs() < 1e-10);
            assert!((heads[i] - h).abs() < 1e-10);
        }
        let single = score_all_objects(&m.entities, m.entity(EntityId(0)), m.relation(RelationId(0)), &[7]);
        assert_eq!(single.len(), 1);
        assert!((single[0] - m.score(EntityId(0), RelationId(0), EntityId(7))).abs() < 1e-15);
        let same = score_all_objects(&m.entities, m.entity(EntityId(0)), m.relation(RelationId(0)), &[7, 7, 7]);
        assert!(same.iter().all(|&x| x == same[0]));
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[3.0, 3.0]), vec![0.5, 0.5]);
        let p = softmax(&[2f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
        let big = softmax(&[1000.0, 999.0]);
        assert!(big.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn softmax_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let v = rand_vec(&mut rng, 20).into_iter().map(|x| 5.0 * x).collect::<Vec<_>>();
            let total: f64 = v.iter().map(|x| x.exp()).sum();
            for (p, x) in softmax(&v).iter().zip(&v) {
                assert!((p - x.exp() / total).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gradient_examples() {
        let (one, zero) = ([1.0], [0.0]);
        let g = score_gradients(row(&one, &zero), row(&one, &zero), row(&one, &zero));
        assert_eq!(g.s.re[0], 1.0);
        let v = [0.3, -0.2];
        let z = [0.0, 0.0];
        let g = score_gradients(row(&v, &v), row(&z, &z), row(&v, &v));
        assert!(g.s.re.iter().chain(&g.s.im).chain(&g.o.re).chain(&g.o.im).all(|&x| x == 0.0));
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-5;
        for _ in 0..100 {
            let d = rng.random_range(1..6);
            let mut v: Vec<Vec<f64>> = (0..6).map(|_| rand_vec(&mut rng, d)).collect();
            let g = {
                let (s, r, o) = (row(&v[0], &v[1]), row(&v[2], &v[3]), row(&v[4], &v[5]));
                score_gradients(s, r, o)
            };
            let analytic = [&g.s.re, &g.s.im, &g.r.re, &g.r.im, &g.o.re, &g.o.im];
            for part in 0..6 {
                for k in 0..d {
                    let orig = v[part][k];
                    v[part][k] = orig + h;
                    let up = score(row(&v[0], &v[1]), row(&v[2], &v[3]), row(&v[4], &v[5]));
                    v[part][k] = orig - h;
                    let down = score(row(&v[0], &v[1]), row(&v[2], &v[3]), row(&v[4], &v[5]));
                    v[part][k] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let a = analytic[part][k];
                    let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
                    assert!(rel < 1e-6, "part {part} k {k}: {a} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn shared_rows_alias_updates() {
        let eq = EquivClasses::from_pairs(4, [(1, 3)]);
        let mut m = KgeModel::init_with_rows(RowMap::from_classes(&eq), RowMap::identity(1), 3, 0).unwrap();
        assert_eq!(m.entity_row(EntityId(1)), m.entity_row(EntityId(3)));
        let before = m.score(EntityId(0), RelationId(0), EntityId(3));
        let row = m.entity_row(EntityId(1));
        m.entities.row_mut(row).0[0] += 1.0;
        let after = m.score(EntityId(0), RelationId(0), EntityId(3));
        assert_ne!(before, after);
        assert_eq!(m.entity(EntityId(1)).re, m.entity(EntityId(3)).re);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn conjugate_relation_swaps_roles(
            v in proptest::collection::vec(-1.0f64..1.0, 24),
        ) {
            let d = 4;
            let (s, r, o) = (row(&v[0..d], &v[d..2*d]), row(&v[2*d..3*d], &v[3*d..4*d]), row(&v[4*d..5*d], &v[5*d..6*d]));
            let neg: Vec<f64> = r.im.iter().map(|x| -x).collect();
            let rc = row(r.re, &neg);
            prop_assert!((score(s, rc, o) - score(o, r, s)).abs() < 1e-10);
        }

        #[test]
        fn softmax_is_normalized_and_shift_invariant(
            v in proptest::collection::vec(-50.0f64..50.0, 1..30),
            shift in -100.0f64..100.0,
        ) {
            let p = softmax(&v);
            prop_assert!(p.iter().all(|&x| x > 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
            for (a, b) in p.iter().zip(softmax(&shifted)) {
                prop_assert!((a - b).abs() < 1e-8);
            }
        }
    }
}
