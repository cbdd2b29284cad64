//! Joint objective and the epoch loop.

mod config;
mod losses;
mod optimizer;
mod trainer;

pub use config::{RaLossForm, TrainConfig, Variant};
pub use losses::{bce_cosine, kgc_loss, ra_loss, regularizer, Gradients};
pub use optimizer::{adagrad_step, Adagrad, ADAGRAD_EPS};
pub use trainer::{
    derive_seed, loss_csv, merge_language_models, train, variant_rows, write_loss_csv, LossBreakdown, Trainer,
    TrainOutcome, LOSS_CSV_HEADER,
};
