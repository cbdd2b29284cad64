use std::fs;
use std::path::{Path, PathBuf};

use kgalign_core::dataset::{
    generate_synthetic, input_digests, load_dataset, DatasetLayout, LoadOptions, SyntheticSpec,
};
use kgalign_core::embedding::{check_shape, read_checkpoint, write_checkpoint};
use kgalign_core::eval::{evaluate, rank_dump, EvalOptions, EvalReport, EvalTasks};
use kgalign_core::kv::KeyValues;
use kgalign_core::signatures::{refresh_beliefs, BeliefOptions, SignatureContext};
use kgalign_core::train::{train as train_model, write_loss_csv, TrainConfig, Variant};
use kgalign_core::{BeliefKind, CheckpointMeta, Error, Fold, KgeModel, MultiKg, OverlapParams};

use crate::{BeliefsArgs, CliError, CliResult, EvalArgs, GenerateArgs, TrainArgs, VERSION};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOSSES_FILE: &str = "losses.csv";
pub const REPORT_FILE: &str = "report.tsv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const BELIEFS_FILE: &str = "beliefs.tsv";

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| {
        CliError::Core(Error::Io {
            path: path.to_owned(),
            source: e,
        })
    })
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| {
        CliError::Core(Error::Io {
            path: dir.to_owned(),
            source: e,
        })
    })
}

pub fn generate(args: &GenerateArgs) -> CliResult<DatasetLayout> {
    let spec = SyntheticSpec::from_key_values(&KeyValues::read(&args.spec)?)?;
    create_dir(&args.out)?;
    Ok(generate_synthetic(&spec, &args.out)?)
}

/// Config file, then `--variant`, then `--set` overrides.
pub fn resolve_config(args: &TrainArgs) -> CliResult<TrainConfig> {
    let mut cfg = match &args.config {
        Some(p) => TrainConfig::read(p)?,
        None => TrainConfig::default(),
    };
    let mut kv = KeyValues::new();
    if let Some(v) = &args.variant {
        kv.set("variant", v);
    }
    for o in &args.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {o:?}")))?;
        kv.set(k.trim(), v.trim());
    }
    cfg.apply(&kv)?;
    Ok(cfg)
}

fn load(data: &Path, opts: LoadOptions) -> CliResult<(DatasetLayout, MultiKg)> {
    let layout = DatasetLayout::new(data);
    if !layout.root.is_dir() {
        return Err(Error::MissingFile(layout.root.clone()).into());
    }
    let kg = load_dataset(&layout, opts)?;
    Ok((layout, kg))
}

/// What `train` produced, for callers that drive the CLI in-process.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub config: TrainConfig,
    pub dev_report: EvalReport,
    pub overlap_history: Vec<OverlapParams>,
    pub checkpoints: Vec<PathBuf>,
}

pub fn train(args: &TrainArgs) -> CliResult<TrainSummary> {
    let cfg = resolve_config(args)?;
    let layout = DatasetLayout::new(&args.data);
    if !layout.root.is_dir() {
        return Err(Error::MissingFile(layout.root.clone()).into());
    }
    if cfg.variant != Variant::One {
        layout.require_entity_alignments(&layout.languages()?)?;
    }
    let opts = LoadOptions::from_layout(&layout)?;
    let (layout, kg) = load(&layout.root, opts)?;
    create_dir(&args.out)?;

    let outcome = train_model(&kg, &cfg)?;

    let meta = CheckpointMeta::for_dataset(
        &kg,
        cfg.variant.name(),
        cfg.variant.shares_entities(),
        opts.seed_fraction,
        opts.split_seed,
    );
    let main_ckpt = args.out.join(CHECKPOINT_FILE);
    write_checkpoint(&outcome.model, &main_ckpt)?;
    meta.write(&main_ckpt)?;
    let mut checkpoints = vec![main_ckpt];
    for (l, m) in &outcome.per_language {
        let path = args
            .out
            .join(format!("checkpoint.{}.bin", kg.languages()[l.index()]));
        write_checkpoint(m, &path)?;
        meta.write(&path)?;
        checkpoints.push(path);
    }
    write_loss_csv(&args.out.join(LOSSES_FILE), &outcome.losses)?;
    if let Some(t) = &outcome.beliefs {
        write_text(&args.out.join(BELIEFS_FILE), &t.to_tsv(&kg, outcome.model.overlap))?;
    }

    let eval_opts = EvalOptions {
        global_candidates: cfg.global_candidates,
        ra_bucket: args.ra_bucket,
        ..EvalOptions::default()
    };
    let (report, _) = evaluate(&outcome.model, &kg, Fold::Dev, EvalTasks::ALL, &eval_opts)?;
    write_text(&args.out.join(REPORT_FILE), &report.to_tsv())?;

    let mut manifest = KeyValues::new();
    manifest.set("version", VERSION);
    manifest.set("command", "train");
    manifest.set("data", layout.root.display());
    manifest.set("seed_fraction", opts.seed_fraction);
    manifest.set("split_seed", opts.split_seed);
    for (k, v) in cfg.to_key_values().iter() {
        manifest.set(&format!("config.{k}"), v);
    }
    for (file, digest) in input_digests(&layout)? {
        manifest.set(&format!("input.{file}"), digest);
    }
    if let Some(last) = outcome.losses.last() {
        manifest.set("final_total_loss", last.total);
    }
    manifest.write(&args.out.join(MANIFEST_FILE))?;

    Ok(TrainSummary {
        config: cfg,
        dev_report: report,
        overlap_history: outcome.overlap_history,
        checkpoints,
    })
}

/// Loads the dataset a checkpoint was trained on and the model with its
/// revealed row sharing restored.
pub fn load_checkpoint(data: &Path, checkpoint: &Path) -> CliResult<(MultiKg, KgeModel, CheckpointMeta)> {
    let meta = CheckpointMeta::read(checkpoint)?;
    let opts = LoadOptions {
        seed_fraction: meta.seed_fraction,
        split_seed: meta.split_seed,
    };
    let (_, kg) = load(data, opts)?;
    meta.verify(&kg)?;
    let mut model = read_checkpoint(checkpoint)?;
    check_shape(&model, &kg)?;
    if meta.shares_entities {
        model = model.shared_by(&kg.revealed_classes());
    }
    Ok((kg, model, meta))
}

pub fn eval(args: &EvalArgs) -> CliResult<EvalReport> {
    let tasks = EvalTasks::parse(&args.tasks)?;
    let fold = match args.fold.as_str() {
        "dev" => Fold::Dev,
        "test" => Fold::Test,
        other => return Err(CliError::Usage(format!("--fold must be dev or test, got {other:?}"))),
    };
    let (kg, model, _) = load_checkpoint(&args.data, &args.checkpoint)?;
    let opts = EvalOptions {
        tail_only: args.tail_only,
        filter_dev: !args.no_dev_filter,
        global_candidates: args.global_candidates,
        ra_bucket: args.ra_bucket,
    };
    let (report, records) = evaluate(&model, &kg, fold, tasks, &opts)?;
    if let Some(path) = &args.rank_dump {
        write_text(path, &rank_dump(&kg, &records))?;
    }
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        write_text(&dir.join(REPORT_FILE), &report.to_tsv())?;
    }
    Ok(report)
}

pub fn beliefs(args: &BeliefsArgs) -> CliResult<()> {
    let (kg, model, meta) = load_checkpoint(&args.data, &args.checkpoint)?;
    let kind = match &args.kind {
        Some(k) => k
            .parse::<Variant>()?
            .belief_kind()
            .ok_or_else(|| CliError::Usage(format!("{k} has no belief table")))?,
        None => meta
            .variant
            .parse::<Variant>()
            .ok()
            .and_then(|v| v.belief_kind())
            .unwrap_or(BeliefKind::Asymmetric),
    };
    let opts = BeliefOptions {
        tau: args.tau,
        max_pairs: args.max_pairs,
        seed: args.seed,
    };
    let ctx = SignatureContext::new(&kg, &kg.revealed_classes());
    let table = refresh_beliefs(&ctx, kind, &model, &opts, 0);
    let tsv = table.to_tsv(&kg, model.overlap);
    match &args.out {
        Some(p) => write_text(p, &tsv),
        None => {
            print!("{tsv}");
            Ok(())
        }
    }
}
