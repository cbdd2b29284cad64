//! Subject-object signatures of relations and the belief scores built on them.
//!
//! A hard signature is the set of `(subject, object)` pairs a relation connects
//! in the train folds, with entities replaced by their class representative.
//! A soft signature replaces each pair by the concatenated embeddings
//! `[Re(s) | Im(s) | Re(o) | Im(o)]`; overlap is then measured by summing
//! `sigmoid(w * cos + c)` over mutually-best partner vectors.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::embedding::KgeModel;
use crate::kg::{EntityId, EquivClasses, Fold, LangId, MultiKg, RelationId};

pub const DEFAULT_W: f64 = 100.0;
pub const DEFAULT_C: f64 = -90.0;
pub const DEFAULT_MAX_PAIRS: usize = 512;
pub const DEFAULT_TAU: f64 = 0.1;

/// Smallest value `w` is clamped to after an update.
pub const MIN_W: f64 = 1e-6;

/// Scale and offset of the sigmoid applied to partner cosines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapParams {
    pub w: f64,
    pub c: f64,
}

impl Default for OverlapParams {
    fn default() -> Self {
        Self {
            w: DEFAULT_W,
            c: DEFAULT_C,
        }
    }
}

impl OverlapParams {
    /// Contribution of one partner pair with cosine `cos`.
    #[inline]
    pub fn increment(&self, cos: f64) -> f64 {
        sigmoid(self.w * cos + self.c)
    }

    pub fn clamp(&mut self) {
        if self.w < MIN_W {
            self.w = MIN_W;
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A `(subject, object)` pair in class-representative space.
pub type SoPair = (u32, u32);

/// Size of the intersection of two sorted, deduplicated slices.
pub fn intersection_size(a: &[SoPair], b: &[SoPair]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// `|a ∩ b| / |a ∪ b|`, or 0 when both are empty. Inputs must be sorted and deduplicated.
pub fn hard_jaccard(a: &[SoPair], b: &[SoPair]) -> f64 {
    let inter = intersection_size(a, b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Jaccard with values below `tau` reported as 0.
pub fn thresholded_jaccard(a: &[SoPair], b: &[SoPair], tau: f64) -> f64 {
    let j = hard_jaccard(a, b);
    if j < tau {
        0.0
    } else {
        j
    }
}

/// Belief that `a` implies `b`: `|a ∩ b| / |a|`, 0 when `a` is empty.
pub fn hard_subsumption(a: &[SoPair], b: &[SoPair]) -> f64 {
    if a.is_empty() {
        0.0
    } else {
        intersection_size(a, b) as f64 / a.len() as f64
    }
}

/// Hard signatures of every relation, indexed by relation id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardSignatures {
    sigs: Vec<Vec<SoPair>>,
}

impl HardSignatures {
    /// Collects train-fold pairs of every language, mapping entities to class representatives.
    pub fn build(kg: &MultiKg, classes: &EquivClasses) -> Self {
        let mut sigs = vec![Vec::new(); kg.num_relations()];
        for l in kg.lang_ids() {
            for t in kg.triples(l, Fold::Train) {
                let s = classes.rep(t.s.index()) as u32;
                let o = classes.rep(t.o.index()) as u32;
                sigs[t.r.index()].push((s, o));
            }
        }
        Self::from_sets(sigs)
    }

    pub fn from_sets(mut sigs: Vec<Vec<SoPair>>) -> Self {
        for s in &mut sigs {
            s.sort_unstable();
            s.dedup();
        }
        Self { sigs }
    }

    pub fn get(&self, r: RelationId) -> &[SoPair] {
        &self.sigs[r.index()]
    }

    pub fn len(&self) -> usize {
        self.sigs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigs.is_empty()
    }
}

/// Dense row-major matrix of pairwise cosines.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CosineMatrix {
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        vec![0.0; v.len()]
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `A[i][j] = cos(left[i], right[j])`; zero-norm vectors give 0.
pub fn cosine_matrix(left: &[Vec<f64>], right: &[Vec<f64>]) -> CosineMatrix {
    let l: Vec<_> = left.iter().map(|v| normalized(v)).collect();
    let r: Vec<_> = right.iter().map(|v| normalized(v)).collect();
    unit_cosine_matrix(&l, &r)
}

fn unit_cosine_matrix(left: &[Vec<f64>], right: &[Vec<f64>]) -> CosineMatrix {
    let mut data = Vec::with_capacity(left.len() * right.len());
    for a in left {
        for b in right {
            data.push(dot(a, b).clamp(-1.0, 1.0));
        }
    }
    CosineMatrix::from_rows(left.len(), right.len(), data)
}

/// Index of the first maximum.
fn argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Pairs `(i, j)` where `j` is row `i`'s best column and `i` is column `j`'s best
/// row. Ties go to the smaller index. Sorted by `i`.
pub fn partner_pairs(a: &CosineMatrix) -> Vec<(usize, usize)> {
    if a.rows == 0 || a.cols == 0 {
        return Vec::new();
    }
    let col_best: Vec<usize> = (0..a.cols)
        .map(|j| argmax((0..a.rows).map(|i| a.get(i, j))).unwrap())
        .collect();
    (0..a.rows)
        .filter_map(|i| {
            let j = argmax((0..a.cols).map(|j| a.get(i, j))).unwrap();
            (col_best[j] == i).then_some((i, j))
        })
        .collect()
}

/// Cosines of the partner pairs of `a`.
pub fn partner_cosines(a: &CosineMatrix) -> Vec<f64> {
    partner_pairs(a).into_iter().map(|(i, j)| a.get(i, j)).collect()
}

/// `sum sigmoid(w * cos + c)` over partner cosines.
pub fn soft_overlap(partner_cos: &[f64], p: OverlapParams) -> f64 {
    partner_cos.iter().map(|&x| p.increment(x)).sum()
}

/// Soft overlap together with its partial derivatives in `w` and `c`.
pub fn soft_overlap_grad(partner_cos: &[f64], p: OverlapParams) -> (f64, f64, f64) {
    let (mut v, mut dw, mut dc) = (0.0, 0.0, 0.0);
    for &x in partner_cos {
        let s = p.increment(x);
        let ds = s * (1.0 - s);
        v += s;
        dw += ds * x;
        dc += ds;
    }
    (v, dw, dc)
}

/// Concatenated embedding vector of one pair.
pub fn pair_vector(model: &KgeModel, (s, o): SoPair) -> Vec<f64> {
    let s = model.entity(EntityId(s));
    let o = model.entity(EntityId(o));
    let mut v = Vec::with_capacity(4 * s.re.len());
    v.extend_from_slice(s.re);
    v.extend_from_slice(s.im);
    v.extend_from_slice(o.re);
    v.extend_from_slice(o.im);
    v
}

/// Soft signature of one relation, subsampled uniformly to at most `cap` pairs.
pub fn soft_signature(model: &KgeModel, pairs: &[SoPair], cap: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    if pairs.len() <= cap {
        return pairs.iter().map(|&p| pair_vector(model, p)).collect();
    }
    let mut idx = rand::seq::index::sample(rng, pairs.len(), cap).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| pair_vector(model, pairs[i])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeliefKind {
    Jaccard,
    Asymmetric,
    SoftAsymmetric,
}

/// Beliefs for an ordered key pair `(r1, r2)`: `fwd = b(r1 => r2)`,
/// `bwd = b(r2 => r1)`, `equiv = min(fwd, bwd)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairBelief {
    pub fwd: f64,
    pub bwd: f64,
    pub equiv: f64,
}

impl PairBelief {
    pub fn new(fwd: f64, bwd: f64) -> Self {
        Self {
            fwd,
            bwd,
            equiv: fwd.min(bwd),
        }
    }

    fn swapped(self) -> Self {
        Self {
            fwd: self.bwd,
            bwd: self.fwd,
            equiv: self.equiv,
        }
    }
}

/// Partner cosines cached at refresh, so that beliefs can be re-evaluated as
/// `(w, c)` move between refreshes.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftPairState {
    pub partner_cos: Vec<f64>,
    pub len1: usize,
    pub len2: usize,
}

impl SoftPairState {
    pub fn belief(&self, p: OverlapParams) -> PairBelief {
        let s = soft_overlap(&self.partner_cos, p);
        PairBelief::new(ratio(s, self.len1), ratio(s, self.len2))
    }

    /// `b(r1 <=> r2)` and its derivatives in `w` and `c`.
    pub fn equiv_grad(&self, p: OverlapParams) -> (f64, f64, f64) {
        let (s, dw, dc) = soft_overlap_grad(&self.partner_cos, p);
        let n = self.len1.max(self.len2);
        if n == 0 {
            return (0.0, 0.0, 0.0);
        }
        let n = n as f64;
        (s / n, dw / n, dc / n)
    }
}

fn ratio(x: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        x / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeliefOptions {
    pub tau: f64,
    pub max_pairs: usize,
    pub seed: u64,
}

impl Default for BeliefOptions {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            max_pairs: DEFAULT_MAX_PAIRS,
            seed: 0,
        }
    }
}

/// Hard signatures plus the cross-language relation pairs worth scoring.
#[derive(Debug, Clone)]
pub struct SignatureContext {
    hard: HardSignatures,
    candidates: Vec<(RelationId, RelationId)>,
    relation_lang: Vec<Option<LangId>>,
}

impl SignatureContext {
    /// Candidates are cross-language pairs whose signatures mention at least one
    /// common entity class.
    pub fn new(kg: &MultiKg, classes: &EquivClasses) -> Self {
        let hard = HardSignatures::build(kg, classes);
        let relation_lang: Vec<_> = (0..kg.num_relations() as u32)
            .map(|r| kg.relation_lang(RelationId(r)))
            .collect();
        let mut by_entity: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); kg.num_entities()];
        for r in 0..hard.len() {
            for &(s, o) in &hard.sigs[r] {
                by_entity[s as usize].insert(r as u32);
                by_entity[o as usize].insert(r as u32);
            }
        }
        let mut cands = BTreeSet::new();
        for rels in &by_entity {
            let rels: Vec<u32> = rels.iter().copied().collect();
            for (k, &a) in rels.iter().enumerate() {
                for &b in &rels[k + 1..] {
                    let (la, lb) = (relation_lang[a as usize], relation_lang[b as usize]);
                    if la.is_some() && lb.is_some() && la != lb {
                        cands.insert((RelationId(a), RelationId(b)));
                    }
                }
            }
        }
        Self {
            hard,
            candidates: cands.into_iter().collect(),
            relation_lang,
        }
    }

    pub fn hard(&self) -> &HardSignatures {
        &self.hard
    }

    /// Candidate pairs `(r1, r2)` with `r1 < r2`, sorted.
    pub fn candidates(&self) -> &[(RelationId, RelationId)] {
        &self.candidates
    }
}

/// Beliefs for every candidate pair plus the pairs that pass the relation test
/// indicator (each is the other's best-believed partner in its language).
#[derive(Debug, Clone, PartialEq)]
pub struct RelationBeliefTable {
    kind: BeliefKind,
    epoch: usize,
    pairs: Vec<(RelationId, RelationId)>,
    beliefs: Vec<PairBelief>,
    soft: Vec<SoftPairState>,
    active: Vec<usize>,
}

impl RelationBeliefTable {
    pub fn empty(kind: BeliefKind) -> Self {
        Self {
            kind,
            epoch: 0,
            pairs: Vec::new(),
            beliefs: Vec::new(),
            soft: Vec::new(),
            active: Vec::new(),
        }
    }

    /// Assembles a table from precomputed parts. `pairs` must be sorted with
    /// `r1 < r2`; `soft` is either empty or one state per pair.
    pub fn from_parts(
        kind: BeliefKind,
        pairs: Vec<(RelationId, RelationId)>,
        beliefs: Vec<PairBelief>,
        soft: Vec<SoftPairState>,
        active: Vec<usize>,
    ) -> Self {
        assert_eq!(pairs.len(), beliefs.len());
        assert!(soft.is_empty() || soft.len() == pairs.len());
        assert!(pairs.windows(2).all(|w| w[0] < w[1]) && pairs.iter().all(|p| p.0 < p.1));
        assert!(active.iter().all(|&i| i < pairs.len()));
        Self {
            kind,
            epoch: 0,
            pairs,
            beliefs,
            soft,
            active,
        }
    }

    pub fn kind(&self) -> BeliefKind {
        self.kind
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pair(&self, idx: usize) -> (RelationId, RelationId) {
        self.pairs[idx]
    }

    pub fn pairs(&self) -> &[(RelationId, RelationId)] {
        &self.pairs
    }

    /// Beliefs as of the last refresh.
    pub fn belief(&self, idx: usize) -> PairBelief {
        self.beliefs[idx]
    }

    /// Beliefs under `p`; differs from [`Self::belief`] only for soft tables.
    pub fn belief_at(&self, idx: usize, p: OverlapParams) -> PairBelief {
        match self.soft.get(idx) {
            Some(s) => s.belief(p),
            None => self.beliefs[idx],
        }
    }

    /// `b(r1 => r2)` as of the last refresh; 0 for pairs not in the table.
    pub fn directed(&self, r1: RelationId, r2: RelationId) -> f64 {
        self.lookup(r1, r2).fwd
    }

    /// Beliefs oriented as `(r1, r2)`.
    pub fn lookup(&self, r1: RelationId, r2: RelationId) -> PairBelief {
        let (key, swap) = if r1 <= r2 { ((r1, r2), false) } else { ((r2, r1), true) };
        match self.pairs.binary_search(&key) {
            Ok(i) if swap => self.beliefs[i].swapped(),
            Ok(i) => self.beliefs[i],
            Err(_) => PairBelief::default(),
        }
    }

    /// Indices of pairs passing the relation test indicator.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn soft_state(&self, idx: usize) -> Option<&SoftPairState> {
        self.soft.get(idx)
    }

    /// `b(r1 <=> r2)` under `p` with derivatives in `(w, c)`; hard tables give zero derivatives.
    pub fn equiv_grad(&self, idx: usize, p: OverlapParams) -> (f64, f64, f64) {
        match self.soft.get(idx) {
            Some(s) => s.equiv_grad(p),
            None => (self.beliefs[idx].equiv, 0.0, 0.0),
        }
    }

    /// TSV with header `r1 r2 b_fwd b_bwd b_equiv`, one row per candidate pair.
    pub fn to_tsv(&self, kg: &MultiKg, p: OverlapParams) -> String {
        let mut out = String::from("r1\tr2\tb_fwd\tb_bwd\tb_equiv\n");
        for (i, &(a, b)) in self.pairs.iter().enumerate() {
            let v = self.belief_at(i, p);
            let _ = writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                relation_name(kg, a),
                relation_name(kg, b),
                v.fwd,
                v.bwd,
                v.equiv
            );
        }
        out
    }

    fn compute_active(&mut self, relation_lang: &[Option<LangId>]) {
        // best[(r, lang)] = (belief, partner)
        let mut best: std::collections::HashMap<(RelationId, LangId), (f64, RelationId)> =
            std::collections::HashMap::new();
        let mut offer = |r: RelationId, other: RelationId, v: f64| {
            if v <= 0.0 {
                return;
            }
            let Some(l) = relation_lang[other.index()] else { return };
            let e = best.entry((r, l)).or_insert((v, other));
            if v > e.0 || (v == e.0 && other < e.1) {
                *e = (v, other);
            }
        };
        for (i, &(a, b)) in self.pairs.iter().enumerate() {
            offer(a, b, self.beliefs[i].fwd);
            offer(b, a, self.beliefs[i].bwd);
        }
        self.active = self
            .pairs
            .iter()
            .enumerate()
            .filter(|&(i, &(a, b))| {
                if self.beliefs[i].equiv <= 0.0 {
                    return false;
                }
                let (Some(la), Some(lb)) = (relation_lang[a.index()], relation_lang[b.index()]) else {
                    return false;
                };
                best.get(&(a, lb)).map(|x| x.1) == Some(b) && best.get(&(b, la)).map(|x| x.1) == Some(a)
            })
            .map(|(i, _)| i)
            .collect();
    }
}

/// Display name of a relation that is unique across languages.
pub fn relation_name(kg: &MultiKg, r: RelationId) -> String {
    let surface = kg.relations().surface(r.0);
    match kg.relation_lang(r) {
        Some(l) => {
            let tag = &kg.languages()[l.index()];
            if surface.strip_prefix(tag.as_str()).is_some_and(|rest| rest.starts_with(':')) {
                surface.to_string()
            } else {
                format!("{tag}:{surface}")
            }
        }
        None => surface.to_string(),
    }
}

fn refresh_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Recomputes beliefs for every candidate pair of `ctx` from the current model.
pub fn refresh_beliefs(
    ctx: &SignatureContext,
    kind: BeliefKind,
    model: &KgeModel,
    opts: &BeliefOptions,
    epoch: usize,
) -> RelationBeliefTable {
    let hard = &ctx.hard;
    let mut table = RelationBeliefTable::empty(kind);
    table.epoch = epoch;
    table.pairs = ctx.candidates.clone();
    match kind {
        BeliefKind::Jaccard => {
            table.beliefs = ctx
                .candidates
                .iter()
                .map(|&(a, b)| {
                    let j = thresholded_jaccard(hard.get(a), hard.get(b), opts.tau);
                    PairBelief::new(j, j)
                })
                .collect();
        }
        BeliefKind::Asymmetric => {
            table.beliefs = ctx
                .candidates
                .iter()
                .map(|&(a, b)| {
                    PairBelief::new(
                        hard_subsumption(hard.get(a), hard.get(b)),
                        hard_subsumption(hard.get(b), hard.get(a)),
                    )
                })
                .collect();
        }
        BeliefKind::SoftAsymmetric => {
            let mut rng = ChaCha8Rng::seed_from_u64(refresh_seed(opts.seed, epoch));
            let mut used = vec![false; hard.len()];
            for &(a, b) in &ctx.candidates {
                used[a.index()] = true;
                used[b.index()] = true;
            }
            let sigs: Vec<Vec<Vec<f64>>> = (0..hard.len())
                .map(|r| {
                    if !used[r] {
                        return Vec::new();
                    }
                    soft_signature(model, &hard.sigs[r], opts.max_pairs, &mut rng)
                        .iter()
                        .map(|v| normalized(v))
                        .collect()
                })
                .collect();
            table.soft = ctx
                .candidates
                .par_iter()
                .map(|&(a, b)| {
                    let (sa, sb) = (&sigs[a.index()], &sigs[b.index()]);
                    SoftPairState {
                        partner_cos: partner_cosines(&unit_cosine_matrix(sa, sb)),
                        len1: sa.len(),
                        len2: sb.len(),
                    }
                })
                .collect();
            table.beliefs = table.soft.iter().map(|s| s.belief(model.overlap)).collect();
        }
    }
    table.compute_active(&ctx.relation_lang);
    table
}
