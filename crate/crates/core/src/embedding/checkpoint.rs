//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! magic    8 bytes  b"KGALIGN\0"
//! version  u32
//! n_ent    u64      entities (one row per entity id; shared rows are expanded)
//! n_rel    u64      relations (one row per relation id)
//! dim      u64
//! f64 x n_ent*dim   entity real parts, row-major
//! f64 x n_ent*dim   entity imaginary parts
//! f64 x n_rel*dim   relation real parts
//! f64 x n_rel*dim   relation imaginary parts
//! f64               w
//! f64               c
//! ```
//!
//! A text sidecar `<checkpoint>.manifest` records vocabulary hashes so a
//! checkpoint is never evaluated against a different dataset.

use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::{EmbeddingTable, KgeModel, RowMap};
use crate::error::{Error, Result};
use crate::kg::MultiKg;
use crate::kv::KeyValues;
use crate::signatures::OverlapParams;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"KGALIGN\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint(model: &KgeModel, path: &Path) -> Result<()> {
    let n_e = model.entity_rows.len();
    let n_r = model.relation_rows.len();
    let d = model.dim();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut buf = Vec::with_capacity(36 + 16 * d * (n_e + n_r) + 16);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for n in [n_e, n_r, d] {
        buf.extend_from_slice(&(n as u64).to_le_bytes());
    }
    let put_rows = |buf: &mut Vec<u8>, table: &EmbeddingTable, rows: &RowMap, imag: bool| {
        for id in 0..rows.len() {
            let row = table.row(rows.row(id));
            for v in if imag { row.im } else { row.re } {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    };
    put_rows(&mut buf, &model.entities, &model.entity_rows, false);
    put_rows(&mut buf, &model.entities, &model.entity_rows, true);
    put_rows(&mut buf, &model.relations, &model.relation_rows, false);
    put_rows(&mut buf, &model.relations, &model.relation_rows, true);
    buf.extend_from_slice(&model.overlap.w.to_le_bytes());
    buf.extend_from_slice(&model.overlap.c.to_le_bytes());
    w.write_all(&buf)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint with one row per id (no sharing).
pub fn read_checkpoint(path: &Path) -> Result<KgeModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
    if bytes.len() < 36 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let read_u64 = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize;
    let (n_e, n_r, d) = (read_u64(12), read_u64(20), read_u64(28));
    let n_floats = 2 * d * (n_e + n_r) + 2;
    if bytes.len() != 36 + 8 * n_floats {
        return Err(bad("size does not match header"));
    }
    let mut floats = bytes[36..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |n: usize| -> Vec<f64> { floats.by_ref().take(n).collect() };
    let e_re = take(n_e * d);
    let e_im = take(n_e * d);
    let r_re = take(n_r * d);
    let r_im = take(n_r * d);
    let w = take(1)[0];
    let c = take(1)[0];
    Ok(KgeModel {
        entities: EmbeddingTable::from_parts(n_e, d, e_re, e_im),
        relations: EmbeddingTable::from_parts(n_r, d, r_re, r_im),
        entity_rows: RowMap::identity(n_e),
        relation_rows: RowMap::identity(n_r),
        overlap: OverlapParams { w, c },
    })
}

/// Sidecar metadata stored next to a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub entity_vocab: String,
    pub relation_vocab: String,
    pub variant: String,
    pub shares_entities: bool,
    pub seed_fraction: f64,
    pub split_seed: u64,
}

impl CheckpointMeta {
    pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
        let mut name = checkpoint.as_os_str().to_owned();
        name.push(".manifest");
        PathBuf::from(name)
    }

    pub fn for_dataset(
        kg: &MultiKg,
        variant: &str,
        shares_entities: bool,
        seed_fraction: f64,
        split_seed: u64,
    ) -> Self {
        Self {
            entity_vocab: kg.entities().digest(kg.languages()),
            relation_vocab: kg.relations().digest(kg.languages()),
            variant: variant.to_owned(),
            shares_entities,
            seed_fraction,
            split_seed,
        }
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("format", "kgalign-checkpoint-v1");
        kv.set("entity_vocab_sha256", &self.entity_vocab);
        kv.set("relation_vocab_sha256", &self.relation_vocab);
        kv.set("variant", &self.variant);
        kv.set("shares_entities", self.shares_entities);
        kv.set("seed_fraction", self.seed_fraction);
        kv.set("split_seed", self.split_seed);
        kv
    }

    pub fn write(&self, checkpoint: &Path) -> Result<()> {
        self.to_key_values().write(&Self::sidecar_path(checkpoint))
    }

    pub fn read(checkpoint: &Path) -> Result<Self> {
        let kv = KeyValues::read(&Self::sidecar_path(checkpoint))?;
        let need = |k: &str| {
            kv.get(k)
                .map(str::to_owned)
                .ok_or_else(|| Error::Checkpoint(format!("sidecar is missing {k}")))
        };
        Ok(Self {
            entity_vocab: need("entity_vocab_sha256")?,
            relation_vocab: need("relation_vocab_sha256")?,
            variant: need("variant")?,
            shares_entities: kv.parse_value("shares_entities")?.unwrap_or(false),
            seed_fraction: kv.parse_value("seed_fraction")?.unwrap_or(0.5),
            split_seed: kv.parse_value("split_seed")?.unwrap_or(0),
        })
    }

    /// Refuses a dataset whose vocabularies differ from the ones trained on.
    pub fn verify(&self, kg: &MultiKg) -> Result<()> {
        let ent = kg.entities().digest(kg.languages());
        let rel = kg.relations().digest(kg.languages());
        if ent != self.entity_vocab || rel != self.relation_vocab {
            return Err(Error::Checkpoint(
                "vocabulary hash mismatch between checkpoint and dataset".into(),
            ));
        }
        Ok(())
    }
}

/// Checks a loaded model's shape against a dataset.
pub fn check_shape(model: &KgeModel, kg: &MultiKg) -> Result<()> {
    if model.entity_rows.len() != kg.num_entities() || model.relation_rows.len() != kg.num_relations() {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {} entities / {} relations, dataset has {} / {}",
            model.entity_rows.len(),
            model.relation_rows.len(),
            kg.num_entities(),
            kg.num_relations()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{EntityId, EquivClasses};

    #[test]
    fn header_layout_and_roundtrip() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("c.bin");
        let mut m = KgeModel::init(5, 2, 3, 1).unwrap();
        m.overlap = OverlapParams { w: 7.5, c: -3.25 };
        write_checkpoint(&m, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 5);
        assert_eq!(u64::from_le_bytes(bytes[20..28].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[28..36].try_into().unwrap()), 3);
        let first = f64::from_le_bytes(bytes[36..44].try_into().unwrap());
        assert_eq!(first, m.entities.re[0]);
        let tail = bytes.len();
        assert_eq!(f64::from_le_bytes(bytes[tail - 8..].try_into().unwrap()), -3.25);
        assert_eq!(read_checkpoint(&path).unwrap(), m);
    }

    #[test]
    fn shared_rows_are_expanded_and_restored() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("c.bin");
        let eq = EquivClasses::from_pairs(4, [(0, 2)]);
        let m = KgeModel::init_with_rows(RowMap::from_classes(&eq), RowMap::identity(1), 2, 3).unwrap();
        write_checkpoint(&m, &path).unwrap();
        let loaded = read_checkpoint(&path).unwrap();
        assert_eq!(loaded.entities.rows(), 4);
        assert_eq!(loaded.entity(EntityId(0)).re, loaded.entity(EntityId(2)).re);
        assert_eq!(loaded.shared_by(&eq), m);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("c.bin");
        write_checkpoint(&KgeModel::init(2, 1, 2, 0).unwrap(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn sidecar_detects_vocab_mismatch() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("c.bin");
        let kg = MultiKg::from_raw([("en", crate::kg::Fold::Train, ["a", "r", "b"])]);
        let meta = CheckpointMeta::for_dataset(&kg, "one", false, 0.5, 0);
        meta.write(&path).unwrap();
        let back = CheckpointMeta::read(&path).unwrap();
        assert_eq!(back, meta);
        back.verify(&kg).unwrap();
        let other = MultiKg::from_raw([("en", crate::kg::Fold::Train, ["a", "r", "c"])]);
        assert!(matches!(back.verify(&other), Err(Error::Checkpoint(_))));
    }
}
