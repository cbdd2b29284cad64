//! Ranking evaluation: filtered link prediction, and cosine ranking for entity
//! and relation alignment. All ranks are pessimistic: candidates tied with the
//! gold answer are ranked ahead of it.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};

use rayon::prelude::*;

use crate::dataset::relation_train_counts;
use crate::embedding::{score_all_objects, score_all_subjects, CandidateSet, KgeModel};
use crate::error::{Error, Result};
use crate::kg::{EntityId, EquivClasses, FactIndex, Fold, LangId, MultiKg, RelationId, Triple};
use crate::signatures::relation_name;

pub const DEFAULT_RA_BUCKET: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    /// Only `(s, r, ?)` queries.
    pub tail_only: bool,
    /// Include dev facts in the filter set (train and test are always included).
    pub filter_dev: bool,
    pub global_candidates: bool,
    /// Relations with at least this many train triples fall in the frequent bucket.
    pub ra_bucket: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            tail_only: false,
            filter_dev: true,
            global_candidates: false,
            ra_bucket: DEFAULT_RA_BUCKET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalTasks {
    pub kgc: bool,
    pub ea: bool,
    pub ra: bool,
}

impl EvalTasks {
    pub const ALL: EvalTasks = EvalTasks {
        kgc: true,
        ea: true,
        ra: true,
    };

    /// Parses a comma-separated list such as `kgc,ea`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut t = EvalTasks {
            kgc: false,
            ea: false,
            ra: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "kgc" => t.kgc = true,
                "ea" => t.ea = true,
                "ra" => t.ra = true,
                _ => return Err(Error::Config(format!("unknown eval task {part:?} (expected kgc, ea, ra)"))),
            }
        }
        if !(t.kgc || t.ea || t.ra) {
            return Err(Error::Config("no eval tasks given".into()));
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Tail,
    Head,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Tail => "tail",
            Direction::Head => "head",
        }
    }
}

/// `1 + #{c != gold, not filtered, scores[c] >= scores[gold]}`.
pub fn filtered_rank(scores: &[f64], gold: usize, filtered: impl Fn(usize) -> bool) -> usize {
    let g = scores[gold];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(c, &s)| c != gold && s >= g && !filtered(c))
        .count()
}

pub fn raw_rank(scores: &[f64], gold: usize) -> usize {
    filtered_rank(scores, gold, |_| false)
}

/// MRR and HITS@k over a set of ranks.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RankStats {
    pub queries: usize,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
}

impl RankStats {
    pub fn from_ranks(ranks: &[usize]) -> Self {
        if ranks.is_empty() {
            return Self::default();
        }
        let n = ranks.len() as f64;
        let frac = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        Self {
            queries: ranks.len(),
            mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
            hits1: frac(1),
            hits3: frac(3),
            hits10: frac(10),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Split {
    Whole,
    Seen,
    Unseen,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Whole => "whole",
            Split::Seen => "seen",
            Split::Unseen => "unseen",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KgcRow {
    pub lang: String,
    pub split: Split,
    pub stats: RankStats,
}

/// Alignment ranking results for queries from `source` into `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignRow {
    pub source: String,
    pub target: String,
    /// Frequency bucket label for relation alignment, empty for entities.
    pub bucket: String,
    pub stats: RankStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankRecord {
    pub direction: Direction,
    pub triple: Triple,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub kgc: Vec<KgcRow>,
    pub ea: Vec<AlignRow>,
    pub ra: Vec<AlignRow>,
}

impl EvalReport {
    pub fn kgc_stats(&self, lang: &str, split: Split) -> Option<RankStats> {
        self.kgc.iter().find(|r| r.lang == lang && r.split == split).map(|r| r.stats)
    }

    /// Query-weighted mean over languages of one split.
    pub fn kgc_mean(&self, split: Split) -> RankStats {
        pooled(self.kgc.iter().filter(|r| r.split == split).map(|r| r.stats))
    }

    pub fn ea_mean(&self) -> RankStats {
        pooled(self.ea.iter().map(|r| r.stats))
    }

    pub fn ra_mean(&self, bucket: &str) -> RankStats {
        pooled(self.ra.iter().filter(|r| r.bucket == bucket).map(|r| r.stats))
    }

    /// Long format: `task scope split metric value`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("task\tscope\tsplit\tmetric\tvalue\n");
        let mut put = |task: &str, scope: &str, split: &str, s: &RankStats, metrics: &[&str]| {
            for &m in metrics {
                let v = match m {
                    "queries" => s.queries.to_string(),
                    "mrr" => format!("{:.6}", s.mrr),
                    "hits1" => format!("{:.6}", s.hits1),
                    "hits3" => format!("{:.6}", s.hits3),
                    _ => format!("{:.6}", s.hits10),
                };
                let _ = writeln!(out, "{task}\t{scope}\t{split}\t{m}\t{v}");
            }
        };
        for r in &self.kgc {
            put("kgc", &r.lang, r.split.name(), &r.stats, &["queries", "mrr", "hits1", "hits10"]);
        }
        for r in &self.ea {
            let scope = format!("{}->{}", r.source, r.target);
            put("ea", &scope, "all", &r.stats, &["queries", "hits1", "hits10"]);
        }
        for r in &self.ra {
            let scope = format!("{}->{}", r.source, r.target);
            put("ra", &scope, &r.bucket, &r.stats, &["queries", "hits1", "hits3"]);
        }
        out
    }
}

fn pooled(rows: impl Iterator<Item = RankStats>) -> RankStats {
    let mut acc = RankStats::default();
    for s in rows {
        let n = s.queries as f64;
        acc.queries += s.queries;
        acc.mrr += n * s.mrr;
        acc.hits1 += n * s.hits1;
        acc.hits3 += n * s.hits3;
        acc.hits10 += n * s.hits10;
    }
    if acc.queries > 0 {
        let n = acc.queries as f64;
        acc.mrr /= n;
        acc.hits1 /= n;
        acc.hits3 /= n;
        acc.hits10 /= n;
    }
    acc
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.kgc.is_empty() {
            writeln!(f, "Link prediction")?;
            writeln!(f, "  {:<12} {:<7} {:>8} {:>7} {:>7} {:>7}", "language", "split", "queries", "MRR", "H@1", "H@10")?;
            for r in &self.kgc {
                let s = r.stats;
                writeln!(
                    f,
                    "  {:<12} {:<7} {:>8} {:>7.4} {:>7.4} {:>7.4}",
                    r.lang,
                    r.split.name(),
                    s.queries,
                    s.mrr,
                    s.hits1,
                    s.hits10
                )?;
            }
        }
        if !self.ea.is_empty() {
            writeln!(f, "Entity alignment")?;
            writeln!(f, "  {:<24} {:>8} {:>7} {:>7}", "pair", "queries", "H@1", "H@10")?;
            for r in &self.ea {
                let pair = format!("{} -> {}", r.source, r.target);
                writeln!(f, "  {:<24} {:>8} {:>7.4} {:>7.4}", pair, r.stats.queries, r.stats.hits1, r.stats.hits10)?;
            }
        }
        if !self.ra.is_empty() {
            writeln!(f, "Relation alignment")?;
            writeln!(f, "  {:<24} {:<7} {:>8} {:>7} {:>7}", "pair", "bucket", "queries", "H@1", "H@3")?;
            for r in &self.ra {
                let pair = format!("{} -> {}", r.source, r.target);
                writeln!(
                    f,
                    "  {:<24} {:<7} {:>8} {:>7.4} {:>7.4}",
                    pair, r.bucket, r.stats.queries, r.stats.hits1, r.stats.hits3
                )?;
            }
        }
        Ok(())
    }
}

/// Marks each triple as seen when another language's train fold holds a fact
/// with the same entity classes and an equivalent relation.
pub fn split_seen_unseen(
    kg: &MultiKg,
    lang: LangId,
    triples: &[Triple],
    entity_classes: &EquivClasses,
    relation_classes: &EquivClasses,
) -> Vec<bool> {
    let key = |t: &Triple| {
        (
            entity_classes.rep(t.s.index()),
            relation_classes.rep(t.r.index()),
            entity_classes.rep(t.o.index()),
        )
    };
    let mut elsewhere = HashSet::new();
    for l in kg.lang_ids().filter(|&l| l != lang) {
        elsewhere.extend(kg.triples(l, Fold::Train).iter().map(key));
    }
    triples.iter().map(|t| elsewhere.contains(&key(t))).collect()
}

/// Known facts of one language in row space.
fn known_facts(kg: &MultiKg, model: &KgeModel, lang: LangId, filter_dev: bool) -> FactIndex {
    let mut idx = FactIndex::default();
    for fold in Fold::ALL {
        if fold == Fold::Dev && !filter_dev {
            continue;
        }
        for t in kg.triples(lang, fold) {
            idx.insert(
                model.entity_row(t.s) as u32,
                model.relation_row(t.r) as u32,
                model.entity_row(t.o) as u32,
            );
        }
    }
    idx
}

/// Filtered rank of one query against `cands`.
pub fn rank_query(
    model: &KgeModel,
    cands: &CandidateSet,
    known: &FactIndex,
    t: Triple,
    dir: Direction,
) -> Result<usize> {
    let (s, r, o) = (model.entity_row(t.s), model.relation_row(t.r), model.entity_row(t.o));
    let (scores, gold_row, others) = match dir {
        Direction::Tail => (
            score_all_objects(&model.entities, model.entities.row(s), model.relations.row(r), cands.rows()),
            o,
            known.objects(s as u32, r as u32),
        ),
        Direction::Head => (
            score_all_subjects(&model.entities, model.entities.row(o), model.relations.row(r), cands.rows()),
            s,
            known.subjects(r as u32, o as u32),
        ),
    };
    let gold = cands
        .position(gold_row)
        .ok_or_else(|| Error::Internal(format!("gold row {gold_row} not among candidates")))?;
    let mut mask = vec![false; scores.len()];
    for &c in others {
        if let Some(p) = cands.position(c as usize) {
            if p != gold {
                mask[p] = true;
            }
        }
    }
    Ok(filtered_rank(&scores, gold, |c| mask[c]))
}

/// Filtered link prediction on `fold` of every language, split into seen and
/// unseen facts. Returns the report rows and every individual rank.
pub fn eval_kgc(
    model: &KgeModel,
    kg: &MultiKg,
    fold: Fold,
    opts: &EvalOptions,
) -> Result<(Vec<KgcRow>, Vec<RankRecord>)> {
    let cands = CandidateSet::per_language(kg, &model.entity_rows, opts.global_candidates);
    let ent_classes = kg.revealed_classes();
    let rel_classes = kg.gold_relation_classes();
    let dirs: &[Direction] = if opts.tail_only {
        &[Direction::Tail]
    } else {
        &[Direction::Tail, Direction::Head]
    };
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for l in kg.lang_ids() {
        let triples = kg.triples(l, fold);
        if triples.is_empty() {
            continue;
        }
        let known = known_facts(kg, model, l, opts.filter_dev);
        let seen = split_seen_unseen(kg, l, triples, &ent_classes, &rel_classes);
        let ranks: Vec<Vec<usize>> = triples
            .par_iter()
            .map(|&t| {
                dirs.iter()
                    .map(|&d| rank_query(model, &cands[l.index()], &known, t, d))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let (mut all, mut s, mut u) = (Vec::new(), Vec::new(), Vec::new());
        for (i, rs) in ranks.iter().enumerate() {
            for (&d, &r) in dirs.iter().zip(rs) {
                all.push(r);
                if seen[i] { &mut s } else { &mut u }.push(r);
                records.push(RankRecord {
                    direction: d,
                    triple: triples[i],
                    rank: r,
                });
            }
        }
        let lang = kg.languages()[l.index()].clone();
        for (split, ranks) in [(Split::Whole, all), (Split::Seen, s), (Split::Unseen, u)] {
            rows.push(KgcRow {
                lang: lang.clone(),
                split,
                stats: RankStats::from_ranks(&ranks),
            });
        }
    }
    Ok((rows, records))
}

/// Display name of an entity that is unique across languages.
pub fn entity_name(kg: &MultiKg, e: EntityId) -> String {
    let surface = kg.entities().surface(e.0);
    let tag = &kg.languages()[kg.entity_lang(e).index()];
    if surface.strip_prefix(tag.as_str()).is_some_and(|rest| rest.starts_with(':')) {
        surface.to_string()
    } else {
        format!("{tag}:{surface}")
    }
}

/// Per-query dump with header `direction s r o rank`.
pub fn rank_dump(kg: &MultiKg, records: &[RankRecord]) -> String {
    let mut out = String::from("direction\ts\tr\to\trank\n");
    for rec in records {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            rec.direction.name(),
            entity_name(kg, rec.triple.s),
            relation_name(kg, rec.triple.r),
            entity_name(kg, rec.triple.o),
            rec.rank
        );
    }
    out
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        v
    } else {
        v.into_iter().map(|x| x / n).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Rank of `gold` among `cands` by cosine to `query`; all vectors unit or zero.
pub fn cosine_rank(query: &[f64], cands: &[&[f64]], gold: usize) -> usize {
    let scores: Vec<f64> = cands.iter().map(|c| dot(query, c)).collect();
    raw_rank(&scores, gold)
}

/// Cosine ranking of held-out entity alignments, both directions, grouped by
/// ordered language pair. Rows aliased into the query's class are not
/// candidates; pairs already sharing a row are skipped.
pub fn eval_ea(model: &KgeModel, kg: &MultiKg) -> Vec<AlignRow> {
    let vecs: Vec<Vec<f64>> = (0..model.entities.rows())
        .map(|r| unit(model.entities.row_concat(r)))
        .collect();
    let lang_rows: Vec<Vec<usize>> = kg
        .lang_ids()
        .map(|l| {
            let mut rows: Vec<usize> = kg.entities_in(l).iter().map(|&e| model.entity_row(e)).collect();
            rows.sort_unstable();
            rows.dedup();
            rows
        })
        .collect();
    let mut queries = Vec::new();
    for &(a, b) in &kg.entity_alignment().held_out {
        if model.entity_row(a) == model.entity_row(b) {
            continue;
        }
        queries.push((a, b));
        queries.push((b, a));
    }
    let ranks: Vec<(LangId, LangId, usize)> = queries
        .par_iter()
        .map(|&(q, g)| {
            let (lq, lg) = (kg.entity_lang(q), kg.entity_lang(g));
            let qrow = model.entity_row(q);
            let grow = model.entity_row(g);
            let rows: Vec<usize> = lang_rows[lg.index()].iter().copied().filter(|&r| r != qrow).collect();
            let gold = rows.iter().position(|&r| r == grow).expect("gold row is a target-language row");
            let cands: Vec<&[f64]> = rows.iter().map(|&r| vecs[r].as_slice()).collect();
            (lq, lg, cosine_rank(&vecs[qrow], &cands, gold))
        })
        .collect();
    group_rows(kg, ranks.into_iter().map(|(a, b, r)| ((a, b, String::new()), r)))
}

fn group_rows(kg: &MultiKg, items: impl Iterator<Item = ((LangId, LangId, String), usize)>) -> Vec<AlignRow> {
    let mut groups: BTreeMap<(LangId, LangId, String), Vec<usize>> = BTreeMap::new();
    for (k, r) in items {
        groups.entry(k).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((a, b, bucket), ranks)| AlignRow {
            source: kg.languages()[a.index()].clone(),
            target: kg.languages()[b.index()].clone(),
            bucket,
            stats: RankStats::from_ranks(&ranks),
        })
        .collect()
}

pub fn ra_bucket_label(count: usize, threshold: usize) -> String {
    if count >= threshold {
        format!(">={threshold}")
    } else {
        format!("<{threshold}")
    }
}

/// Cosine ranking of gold relation alignments, both directions, bucketed by the
/// source relation's train-triple count. Other gold partners of the source in
/// the target language are not candidates.
pub fn eval_ra(model: &KgeModel, kg: &MultiKg, bucket: usize) -> Vec<AlignRow> {
    let counts: HashMap<RelationId, usize> = relation_train_counts(kg);
    let vecs: Vec<Vec<f64>> = (0..model.relations.rows())
        .map(|r| unit(model.relations.row_concat(r)))
        .collect();
    let classes = kg.gold_relation_classes();
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for &(a, b) in kg.relation_gold() {
        for (q, g) in [(a, b), (b, a)] {
            if !seen.insert((q, g)) {
                continue;
            }
            let (Some(lq), Some(lg)) = (kg.relation_lang(q), kg.relation_lang(g)) else { continue };
            let grow = model.relation_row(g);
            let mut rows: Vec<usize> = kg
                .relations_in(lg)
                .iter()
                .filter(|&&r| r == g || !classes.same(r.index(), q.index()))
                .map(|&r| model.relation_row(r))
                .collect();
            rows.sort_unstable();
            rows.dedup();
            let gold = rows.iter().position(|&r| r == grow).expect("gold relation among candidates");
            let cands: Vec<&[f64]> = rows.iter().map(|&r| vecs[r].as_slice()).collect();
            let rank = cosine_rank(&vecs[model.relation_row(q)], &cands, gold);
            let label = ra_bucket_label(counts.get(&q).copied().unwrap_or(0), bucket);
            items.push(((lq, lg, label), rank));
        }
    }
    group_rows(kg, items.into_iter())
}

/// Runs the requested tasks on `fold`.
pub fn evaluate(
    model: &KgeModel,
    kg: &MultiKg,
    fold: Fold,
    tasks: EvalTasks,
    opts: &EvalOptions,
) -> Result<(EvalReport, Vec<RankRecord>)> {
    let mut report = EvalReport::default();
    let mut records = Vec::new();
    if tasks.kgc {
        let (rows, recs) = eval_kgc(model, kg, fold, opts)?;
        report.kgc = rows;
        records = recs;
    }
    if tasks.ea {
        report.ea = eval_ea(model, kg);
    }
    if tasks.ra {
        report.ra = eval_ra(model, kg, opts.ra_bucket);
    }
    Ok((report, records))
}
