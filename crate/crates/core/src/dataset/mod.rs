//! Dataset layout on disk, loading, writing and relation-id uniquification.
//!
//! A dataset directory looks like
//!
//! ```text
//! <root>/<lang>/{train,dev,test}.tsv          s \t r \t o
//! <root>/entity_align/<l1>-<l2>.tsv           e_l1 \t e_l2
//! <root>/relation_align/<l1>-<l2>.tsv         r_l1 \t r_l2   (optional)
//! <root>/manifest.txt                         key=value      (optional)
//! ```
//!
//! When `relation_align/` is absent, relation surfaces are treated as one
//! vocabulary shared by all languages and are split per language on load, with
//! the gold relation alignment derived from shared surfaces.

pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::{
    EntityAlignment, EntityId, Fold, LangId, LanguageFolds, MultiKg, MultiKgBuilder, RelationId,
    Triple, Vocab,
};
use crate::kv::KeyValues;

pub use synthetic::{generate_synthetic, SyntheticSpec};

pub const ENTITY_ALIGN_DIR: &str = "entity_align";
pub const RELATION_ALIGN_DIR: &str = "relation_align";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetLayout {
    pub root: PathBuf,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn triples_path(&self, lang: &str, fold: Fold) -> PathBuf {
        self.root
            .join(lang)
            .join(format!("{}.tsv", fold.file_stem()))
    }

    pub fn entity_alignment_path(&self, l1: &str, l2: &str) -> PathBuf {
        self.root.join(ENTITY_ALIGN_DIR).join(format!("{l1}-{l2}.tsv"))
    }

    pub fn relation_alignment_path(&self, l1: &str, l2: &str) -> PathBuf {
        self.root
            .join(RELATION_ALIGN_DIR)
            .join(format!("{l1}-{l2}.tsv"))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn has_relation_alignment(&self) -> bool {
        self.root.join(RELATION_ALIGN_DIR).is_dir()
    }

    /// Language tags: subdirectories holding a `train.tsv`, sorted.
    pub fn languages(&self) -> Result<Vec<String>> {
        let rd = fs::read_dir(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let mut out = Vec::new();
        for entry in rd {
            let entry = entry.map_err(|e| Error::io(&self.root, e))?;
            let path = entry.path();
            if path.is_dir() && path.join("train.tsv").is_file() {
                if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                    out.push(name.to_owned());
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// Alignment files in `dir`, each resolved to its (l1, l2) language pair.
    fn alignment_files(&self, dir: &str, languages: &[String]) -> Result<Vec<(usize, usize, PathBuf)>> {
        let dir_path = self.root.join(dir);
        if !dir_path.is_dir() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        let rd = fs::read_dir(&dir_path).map_err(|e| Error::io(&dir_path, e))?;
        for entry in rd {
            let path = entry.map_err(|e| Error::io(&dir_path, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("tsv") {
                continue;
            }
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_owned();
            let pair = stem.match_indices('-').find_map(|(i, _)| {
                let a = languages.iter().position(|l| *l == stem[..i])?;
                let b = languages.iter().position(|l| *l == stem[i + 1..])?;
                Some((a, b))
            });
            match pair {
                Some((a, b)) if a != b => out.push((a, b, path)),
                _ => {
                    return Err(Error::load(
                        &path,
                        0,
                        "file name is not <lang1>-<lang2>.tsv over known languages",
                    ))
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// Fails with the expected path of the first language pair that has no
    /// entity alignment file in either orientation.
    pub fn require_entity_alignments(&self, languages: &[String]) -> Result<()> {
        for (i, a) in languages.iter().enumerate() {
            for b in &languages[i + 1..] {
                let fwd = self.entity_alignment_path(a, b);
                if !fwd.is_file() && !self.entity_alignment_path(b, a).is_file() {
                    return Err(Error::MissingFile(fwd));
                }
            }
        }
        Ok(())
    }

    pub fn read_manifest(&self) -> Result<Option<KeyValues>> {
        let p = self.manifest_path();
        if p.is_file() {
            KeyValues::read(&p).map(Some)
        } else {
            Ok(None)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    /// Fraction of gold entity alignments revealed at train time.
    pub seed_fraction: f64,
    pub split_seed: u64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            seed_fraction: 0.5,
            split_seed: 0,
        }
    }
}

impl LoadOptions {
    /// Defaults overridden by `seed_align_fraction` / `seed` from the dataset manifest.
    pub fn from_layout(layout: &DatasetLayout) -> Result<Self> {
        let mut opts = Self::default();
        if let Some(m) = layout.read_manifest()? {
            if let Some(f) = m.parse_value("seed_align_fraction")? {
                opts.seed_fraction = f;
            }
            if let Some(s) = m.parse_value("seed")? {
                opts.split_seed = s;
            }
        }
        Ok(opts)
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Splits a TSV file into rows of exactly `width` non-empty fields.
fn tsv_rows<'a>(
    text: &'a str,
    path: &'a Path,
    width: usize,
) -> impl Iterator<Item = Result<(usize, Vec<&'a str>)>> + 'a {
    text.lines().enumerate().map(move |(i, line)| {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != width || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::load(
                path,
                i + 1,
                format!("expected {width} tab-separated fields, got {line:?}"),
            ));
        }
        Ok((i + 1, fields))
    })
}

pub fn load_dataset(layout: &DatasetLayout, opts: LoadOptions) -> Result<MultiKg> {
    if !(opts.seed_fraction > 0.0 && opts.seed_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "seed fraction must be in (0, 1], got {}",
            opts.seed_fraction
        )));
    }
    let languages = layout.languages()?;
    let per_language_relations = layout.has_relation_alignment();
    let mut b = MultiKgBuilder::new(!per_language_relations);
    for tag in &languages {
        let l = b.add_language(tag);
        for fold in Fold::ALL {
            let path = layout.triples_path(tag, fold);
            let text = read_text(&path)?;
            for row in tsv_rows(&text, &path, 3) {
                let (_, f) = row?;
                b.add_triple(l, fold, f[0], f[1], f[2]);
            }
        }
    }
    let mut kg = b.build();

    let mut gold = BTreeSet::new();
    for (la, lb, path) in layout.alignment_files(ENTITY_ALIGN_DIR, &languages)? {
        let text = read_text(&path)?;
        for row in tsv_rows(&text, &path, 2) {
            let (line, f) = row?;
            let a = lookup(kg.entities(), la, f[0]).map(EntityId);
            let b = lookup(kg.entities(), lb, f[1]).map(EntityId);
            match (a, b) {
                (Some(a), Some(b)) => {
                    gold.insert((a.min(b), a.max(b)));
                }
                _ => {
                    return Err(Error::load(
                        &path,
                        line,
                        format!("alignment references unknown entity: {}\t{}", f[0], f[1]),
                    ))
                }
            }
        }
    }
    let alignment = split_alignment(gold.into_iter().collect(), opts.seed_fraction, opts.split_seed);
    kg.set_entity_alignment(alignment)?;

    if per_language_relations {
        let mut pairs = BTreeSet::new();
        for (la, lb, path) in layout.alignment_files(RELATION_ALIGN_DIR, &languages)? {
            let text = read_text(&path)?;
            for row in tsv_rows(&text, &path, 2) {
                let (line, f) = row?;
                let a = lookup(kg.relations(), la, f[0]).map(RelationId);
                let b = lookup(kg.relations(), lb, f[1]).map(RelationId);
                match (a, b) {
                    (Some(a), Some(b)) => {
                        pairs.insert((a.min(b), a.max(b)));
                    }
                    _ => {
                        return Err(Error::load(
                            &path,
                            line,
                            format!("alignment references unknown relation: {}\t{}", f[0], f[1]),
                        ))
                    }
                }
            }
        }
        kg.set_relation_gold(pairs.into_iter().collect())?;
        Ok(kg)
    } else {
        let (kg, _) = uniquify_relations(&kg)?;
        Ok(kg)
    }
}

fn lookup(vocab: &Vocab, lang: usize, surface: &str) -> Option<u32> {
    vocab.get(Some(LangId(lang as u32)), surface)
}

/// Reveals `round(fraction * n)` of the gold pairs, chosen by a seeded shuffle.
/// Both halves come back sorted.
pub fn split_alignment(
    mut gold: Vec<(EntityId, EntityId)>,
    fraction: f64,
    seed: u64,
) -> EntityAlignment {
    gold.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gold.shuffle(&mut rng);
    let k = ((gold.len() as f64) * fraction).round() as usize;
    let k = k.min(gold.len());
    let mut held_out = gold.split_off(k);
    gold.sort();
    held_out.sort();
    EntityAlignment {
        revealed: gold,
        held_out,
    }
}

/// Gives every (language, relation) its own id. Gold relation alignment pairs
/// every two languages that used the same original relation.
pub fn uniquify_relations(kg: &MultiKg) -> Result<(MultiKg, Vec<(RelationId, RelationId)>)> {
    let mut vocab = Vocab::new();
    let mut by_original: BTreeMap<RelationId, BTreeMap<LangId, RelationId>> = BTreeMap::new();
    let mut folds = Vec::with_capacity(kg.num_languages());
    for l in kg.lang_ids() {
        let src = kg.folds(l);
        let mut remap = |t: &Triple| {
            let id = RelationId(vocab.intern(Some(l), kg.relations().surface(t.r.0)));
            by_original.entry(t.r).or_default().insert(l, id);
            Triple { r: id, ..*t }
        };
        let train = src.train.iter().map(&mut remap).collect();
        let dev = src.dev.iter().map(&mut remap).collect();
        let test = src.test.iter().map(&mut remap).collect();
        folds.push(LanguageFolds { train, dev, test });
    }
    let mut gold = Vec::new();
    for ids in by_original.values() {
        let ids: Vec<RelationId> = ids.values().copied().collect();
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                gold.push((ids[i], ids[j]));
            }
        }
    }
    gold.sort();
    let mut out = kg.clone();
    out.replace_relations(vocab, folds);
    out.set_relation_gold(gold.clone())?;
    Ok((out, gold))
}

/// Writes `kg` in the directory layout above. The full gold entity alignment is
/// written; the revealed/held-out split is recomputed on load.
pub fn write_dataset(kg: &MultiKg, layout: &DatasetLayout) -> Result<()> {
    let langs = kg.languages();
    let ent = kg.entities();
    let rel = kg.relations();
    for l in kg.lang_ids() {
        let dir = layout.root.join(&langs[l.index()]);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for fold in Fold::ALL {
            let mut s = String::new();
            for t in kg.triples(l, fold) {
                let _ = writeln!(
                    s,
                    "{}\t{}\t{}",
                    ent.surface(t.s.0),
                    rel.surface(t.r.0),
                    ent.surface(t.o.0)
                );
            }
            let path = layout.triples_path(&langs[l.index()], fold);
            fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
        }
    }

    let mut ent_files: BTreeMap<(LangId, LangId), Vec<(EntityId, EntityId)>> = BTreeMap::new();
    for &(a, b) in kg.entity_alignment().gold() {
        let (a, b) = if kg.entity_lang(a) <= kg.entity_lang(b) { (a, b) } else { (b, a) };
        ent_files
            .entry((kg.entity_lang(a), kg.entity_lang(b)))
            .or_default()
            .push((a, b));
    }
    let mut rel_files: BTreeMap<(LangId, LangId), Vec<(RelationId, RelationId)>> = BTreeMap::new();
    for i in kg.lang_ids() {
        for j in kg.lang_ids().filter(|j| *j > i) {
            rel_files.insert((i, j), Vec::new());
        }
    }
    for &(a, b) in kg.relation_gold() {
        let (la, lb) = (kg.relation_lang(a), kg.relation_lang(b));
        let (Some(la), Some(lb)) = (la, lb) else {
            continue;
        };
        let ((a, la), (b, lb)) = if la <= lb { ((a, la), (b, lb)) } else { ((b, lb), (a, la)) };
        rel_files.entry((la, lb)).or_default().push((a, b));
    }

    let edir = layout.root.join(ENTITY_ALIGN_DIR);
    fs::create_dir_all(&edir).map_err(|e| Error::io(&edir, e))?;
    for ((la, lb), mut pairs) in ent_files {
        pairs.sort();
        let mut s = String::new();
        for (a, b) in pairs {
            let _ = writeln!(s, "{}\t{}", ent.surface(a.0), ent.surface(b.0));
        }
        let path = layout.entity_alignment_path(&langs[la.index()], &langs[lb.index()]);
        fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
    }
    let rdir = layout.root.join(RELATION_ALIGN_DIR);
    fs::create_dir_all(&rdir).map_err(|e| Error::io(&rdir, e))?;
    for ((la, lb), mut pairs) in rel_files {
        pairs.sort();
        let mut s = String::new();
        for (a, b) in pairs {
            let _ = writeln!(s, "{}\t{}", rel.surface(a.0), rel.surface(b.0));
        }
        let path = layout.relation_alignment_path(&langs[la.index()], &langs[lb.index()]);
        fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Seeded 60/30/10 train/dev/test split.
pub fn split_folds<T>(mut items: Vec<T>, seed: u64) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    items.shuffle(&mut rng);
    let n = items.len();
    let n_train = (0.6 * n as f64).round() as usize;
    let n_dev = ((0.3 * n as f64).round() as usize).min(n - n_train);
    let mut rest = items.split_off(n_train);
    let test = rest.split_off(n_dev);
    (items, rest, test)
}

/// SHA-256 digests of every dataset file, keyed by path relative to the root.
pub fn input_digests(layout: &DatasetLayout) -> Result<Vec<(String, String)>> {
    use sha2::{Digest, Sha256};
    let mut files = Vec::new();
    let mut stack = vec![layout.root.clone()];
    while let Some(dir) = stack.pop() {
        let rd = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in rd {
            let p = entry.map_err(|e| Error::io(&dir, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().and_then(|e| e.to_str()) == Some("tsv") {
                files.push(p);
            }
        }
    }
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            let digest: String = Sha256::digest(&bytes)
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect();
            let rel = p
                .strip_prefix(&layout.root)
                .unwrap_or(&p)
                .to_string_lossy()
                .replace('\\', "/");
            Ok((rel, digest))
        })
        .collect()
}

/// Per-relation train triple counts.
pub fn relation_train_counts(kg: &MultiKg) -> HashMap<RelationId, usize> {
    let mut counts = HashMap::new();
    for l in kg.lang_ids() {
        for t in kg.triples(l, Fold::Train) {
            *counts.entry(t.r).or_insert(0) += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(path: &Path, text: &str) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, text).unwrap();
    }

    fn tiny_layout(dir: &Path) -> DatasetLayout {
        let layout = DatasetLayout::new(dir);
        write(&layout.triples_path("en", Fold::Train), "a\tcapital\tb\nb\tnear\tc\n");
        write(&layout.triples_path("en", Fold::Dev), "");
        write(&layout.triples_path("en", Fold::Test), "c\tcapital\ta\n");
        write(&layout.triples_path("fr", Fold::Train), "x\tcapital\ty\n");
        write(&layout.triples_path("fr", Fold::Dev), "");
        write(&layout.triples_path("fr", Fold::Test), "");
        write(&layout.entity_alignment_path("en", "fr"), "a\tx\nb\ty\n");
        layout
    }

    #[test]
    fn shared_relations_are_uniquified_on_load() {
        let tmp = tempfile::tempdir().unwrap();
        let layout = tiny_layout(tmp.path());
        let kg = load_dataset(&layout, LoadOptions::default()).unwrap();
        assert_eq!(kg.languages(), ["en", "fr"]);
        assert_eq!(kg.num_relations(), 3);
        assert_eq!(kg.relation_gold().len(), 1);
        let (a, b) = kg.relation_gold()[0];
        assert_eq!(kg.relations().surface(a.0), "capital");
        assert_eq!(kg.relations().surface(b.0), "capital");
        assert_ne!(kg.relation_lang(a), kg.relation_lang(b));
        assert_eq!(kg.entity_alignment().gold().count(), 2);
        assert_eq!(kg.entity_alignment().revealed.len(), 1);
    }

    #[test]
    fn unknown_entity_in_alignment_names_the_row() {
        let tmp = tempfile::tempdir().unwrap();
        let layout = tiny_layout(tmp.path());
        write(&layout.entity_alignment_path("en", "fr"), "a\tx\nzzz\ty\n");
        let err = load_dataset(&layout, LoadOptions::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("en-fr.tsv:2"), "{msg}");
        assert!(msg.contains("zzz"), "{msg}");
    }

    #[test]
    fn malformed_triple_row_is_a_load_error() {
        let tmp = tempfile::tempdir().unwrap();
        let layout = tiny_layout(tmp.path());
        write(&layout.triples_path("fr", Fold::Train), "x\tcapital\ty\nbroken\trow\n");
        match load_dataset(&layout, LoadOptions::default()) {
            Err(Error::Load { path, line, .. }) => {
                assert!(path.ends_with("fr/train.tsv"));
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_fold_file_is_reported() {
        let tmp = tempfile::tempdir().unwrap();
        let layout = tiny_layout(tmp.path());
        fs::remove_file(layout.triples_path("fr", Fold::Dev)).unwrap();
        assert!(matches!(
            load_dataset(&layout, LoadOptions::default()),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn missing_alignment_file_is_named() {
        let tmp = tempfile::tempdir().unwrap();
        let layout = tiny_layout(tmp.path());
        let langs = layout.languages().unwrap();
        layout.require_entity_alignments(&langs).unwrap();
        fs::remove_file(layout.entity_alignment_path("en", "fr")).unwrap();
        match layout.require_entity_alignments(&langs) {
            Err(Error::MissingFile(p)) => assert!(p.ends_with("entity_align/en-fr.tsv")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn half_split_of_hundred_pairs() {
        let gold: Vec<_> = (0..100).map(|i| (EntityId(i), EntityId(100 + i))).collect();
        let a = split_alignment(gold.clone(), 0.5, 3);
        assert_eq!(a.revealed.len(), 50);
        assert_eq!(a.held_out.len(), 50);
        let mut all: Vec<_> = a.gold().copied().collect();
        all.sort();
        assert_eq!(all, gold);
        assert_eq!(a, split_alignment(gold, 0.5, 3));
    }

    #[test]
    fn relation_in_five_languages_gives_ten_pairs() {
        let langs = ["a", "b", "c", "d", "e"];
        let mut b = MultiKgBuilder::new(true);
        for tag in langs {
            let l = b.add_language(tag);
            b.add_triple(l, Fold::Train, "s", "capital", "o");
        }
        let l = b.lang_id("a").unwrap();
        b.add_triple(l, Fold::Train, "s", "only_here", "o");
        let kg = b.build();
        let (u, gold) = uniquify_relations(&kg).unwrap();
        assert_eq!(u.num_relations(), 6);
        assert_eq!(gold.len(), 10);
        let capital: BTreeSet<_> = gold.iter().flat_map(|&(a, b)| [a, b]).collect();
        assert_eq!(capital.len(), 5);
    }

    #[test]
    fn uniquify_preserves_triples_up_to_renaming() {
        let mut b = MultiKgBuilder::new(true);
        let en = b.add_language("en");
        let fr = b.add_language("fr");
        b.add_triple(en, Fold::Train, "a", "r1", "b");
        b.add_triple(en, Fold::Test, "b", "r2", "a");
        b.add_triple(fr, Fold::Dev, "x", "r1", "y");
        let kg = b.build();
        let (u, _) = uniquify_relations(&kg).unwrap();
        for l in kg.lang_ids() {
            for fold in Fold::ALL {
                let before = kg.triples(l, fold);
                let after = u.triples(l, fold);
                assert_eq!(before.len(), after.len());
                for (x, y) in before.iter().zip(after) {
                    assert_eq!((x.s, x.o), (y.s, y.o));
                    assert_eq!(kg.relations().surface(x.r.0), u.relations().surface(y.r.0));
                    assert_eq!(u.relation_lang(y.r), Some(l));
                }
            }
        }
    }

    #[test]
    fn fold_split_ratios() {
        for n in [0usize, 1, 7, 10, 1999, 2000] {
            let (tr, dv, te) = split_folds((0..n).collect(), 1);
            assert_eq!(tr.len() + dv.len() + te.len(), n);
            assert!((tr.len() as f64 - 0.6 * n as f64).abs() <= 1.0);
            assert!((dv.len() as f64 - 0.3 * n as f64).abs() <= 1.0);
            assert!((te.len() as f64 - 0.1 * n as f64).abs() <= 1.0);
        }
    }
}
