//! Joint completion and alignment of several language-specific knowledge graphs.
//!
//! Entities aligned by seed equivalences share one embedding row; relations are
//! pulled together by a loss weighted with signature-overlap beliefs.

pub mod dataset;
pub mod embedding;
pub mod eval;
pub mod error;
pub mod kg;
pub mod kv;
pub mod signatures;
pub mod train;

pub use embedding::{CheckpointMeta, EmbeddingTable, KgeModel, RowMap};
pub use error::{Error, Result};
pub use kg::{EntityId, EquivClasses, Fold, LangId, MultiKg, RelationId, Triple};
pub use signatures::{BeliefKind, OverlapParams, RelationBeliefTable};
