use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::signatures::{BeliefKind, BeliefOptions, DEFAULT_MAX_PAIRS, DEFAULT_TAU};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Independent per-language models.
    One,
    /// Seed-aligned entities collapsed into one row, plain ComplEx.
    Union,
    Jaccard,
    Asymmetric,
    SoftAsymmetric,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::One,
        Variant::Union,
        Variant::Jaccard,
        Variant::Asymmetric,
        Variant::SoftAsymmetric,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::One => "one",
            Variant::Union => "union",
            Variant::Jaccard => "jaccard",
            Variant::Asymmetric => "asymmetric",
            Variant::SoftAsymmetric => "softAsymmetric",
        }
    }

    pub fn belief_kind(self) -> Option<BeliefKind> {
        match self {
            Variant::One | Variant::Union => None,
            Variant::Jaccard => Some(BeliefKind::Jaccard),
            Variant::Asymmetric => Some(BeliefKind::Asymmetric),
            Variant::SoftAsymmetric => Some(BeliefKind::SoftAsymmetric),
        }
    }

    pub fn shares_entities(self) -> bool {
        self != Variant::One
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown variant {s:?} (expected one of one, union, jaccard, asymmetric, softAsymmetric)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RaLossForm {
    /// `b * |r - r'|_1`
    L1,
    /// Binary cross-entropy between `b` and `sigmoid(cos(r, r'))`.
    BceCosine,
}

impl RaLossForm {
    pub fn name(self) -> &'static str {
        match self {
            RaLossForm::L1 => "l1",
            RaLossForm::BceCosine => "bceCosine",
        }
    }
}

impl fmt::Display for RaLossForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RaLossForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(RaLossForm::L1),
            "bceCosine" => Ok(RaLossForm::BceCosine),
            _ => Err(Error::Config(format!("unknown RA loss form {s:?} (expected l1 or bceCosine)"))),
        }
    }
}

/// All training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub lr: f64,
    /// Learning rate for the overlap parameters `(w, c)`.
    pub overlap_lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub alpha: f64,
    pub beta: f64,
    pub variant: Variant,
    pub ra_loss: RaLossForm,
    /// `(w, c)` stay frozen while `epoch < freeze_epochs`.
    pub freeze_epochs: usize,
    pub tau: f64,
    pub max_pairs: usize,
    pub seed: u64,
    /// Rank against every entity instead of the query language's entities.
    pub global_candidates: bool,
    /// For `union`, also merge gold-equivalent relations into one row.
    pub union_rename_gold_relations: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 200,
            lr: 0.5,
            overlap_lr: 0.05,
            batch_size: 512,
            epochs: 100,
            alpha: 0.1,
            beta: 100.0,
            variant: Variant::SoftAsymmetric,
            ra_loss: RaLossForm::L1,
            freeze_epochs: 5,
            tau: DEFAULT_TAU,
            max_pairs: DEFAULT_MAX_PAIRS,
            seed: 0,
            global_candidates: false,
            union_rename_gold_relations: false,
        }
    }
}

const KEYS: &[&str] = &[
    "dim",
    "lr",
    "overlap_lr",
    "batch_size",
    "epochs",
    "alpha",
    "beta",
    "variant",
    "ra_loss",
    "curriculum_freeze_epochs",
    "tau",
    "max_pairs",
    "seed",
    "global_candidates",
    "union_rename_gold_relations",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.overlap_lr >= 0.0 && self.overlap_lr.is_finite()) {
            return bad("overlap_lr must be non-negative");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) || !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("alpha and beta must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1]");
        }
        if self.max_pairs == 0 {
            return bad("max_pairs must be at least 1");
        }
        Ok(())
    }

    /// Starts from the defaults and applies `kv`. Unknown keys are rejected.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut c = Self::default();
        c.apply(kv)?;
        Ok(c)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_key_values(&KeyValues::read(path)?)
    }

    /// Overrides fields named in `kv`.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        if let Some(k) = kv.keys().find(|k| !KEYS.contains(k)) {
            return Err(Error::Config(format!("unknown config key {k:?}")));
        }
        macro_rules! set {
            ($field:ident, $key:literal) => {
                if let Some(v) = kv.parse_value($key)? {
                    self.$field = v;
                }
            };
        }
        set!(dim, "dim");
        set!(lr, "lr");
        set!(overlap_lr, "overlap_lr");
        set!(batch_size, "batch_size");
        set!(epochs, "epochs");
        set!(alpha, "alpha");
        set!(beta, "beta");
        set!(freeze_epochs, "curriculum_freeze_epochs");
        set!(tau, "tau");
        set!(max_pairs, "max_pairs");
        set!(seed, "seed");
        set!(global_candidates, "global_candidates");
        set!(union_rename_gold_relations, "union_rename_gold_relations");
        if let Some(v) = kv.get("variant") {
            self.variant = v.parse()?;
        }
        if let Some(v) = kv.get("ra_loss") {
            self.ra_loss = v.parse()?;
        }
        self.validate()
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("dim", self.dim);
        kv.set("lr", self.lr);
        kv.set("overlap_lr", self.overlap_lr);
        kv.set("batch_size", self.batch_size);
        kv.set("epochs", self.epochs);
        kv.set("alpha", self.alpha);
        kv.set("beta", self.beta);
        kv.set("variant", self.variant);
        kv.set("ra_loss", self.ra_loss);
        kv.set("curriculum_freeze_epochs", self.freeze_epochs);
        kv.set("tau", self.tau);
        kv.set("max_pairs", self.max_pairs);
        kv.set("seed", self.seed);
        kv.set("global_candidates", self.global_candidates);
        kv.set("union_rename_gold_relations", self.union_rename_gold_relations);
        kv
    }

    pub fn belief_options(&self) -> BeliefOptions {
        BeliefOptions {
            tau: self.tau,
            max_pairs: self.max_pairs,
            seed: self.seed,
        }
    }
}
