use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use kgalign_core::dataset::{generate_synthetic, load_dataset, LoadOptions, SyntheticSpec};
use kgalign_core::embedding::score;
use kgalign_core::eval::{evaluate, EvalOptions, EvalTasks};
use kgalign_core::signatures::{refresh_beliefs, SignatureContext};
use kgalign_core::train::{kgc_loss, Gradients, TrainConfig, Trainer};
use kgalign_core::{BeliefKind, EntityId, Fold, KgeModel, MultiKg, RelationId};

fn synthetic_kg() -> MultiKg {
    let spec = SyntheticSpec {
        n_languages: 2,
        n_entities: 200,
        n_relations: 20,
        n_triples: 2000,
        fact_drop_fraction: 0.3,
        seed_align_fraction: 0.5,
        seed: 7,
    };
    let dir = tempfile::tempdir().unwrap();
    let layout = generate_synthetic(&spec, dir.path()).unwrap();
    let opts = LoadOptions::from_layout(&layout).unwrap();
    load_dataset(&layout, opts).unwrap()
}

fn config() -> TrainConfig {
    TrainConfig {
        dim: 64,
        batch_size: 128,
        tau: 0.02,
        ..TrainConfig::default()
    }
}

fn scoring(c: &mut Criterion) {
    let m = KgeModel::init(2, 1, 200, 0).unwrap();
    c.bench_function("score d=200", |b| {
        b.iter(|| score(m.entity(EntityId(0)), m.relation(RelationId(0)), black_box(m.entity(EntityId(1)))))
    });
}

fn kgc(c: &mut Criterion) {
    let kg = synthetic_kg();
    let trainer = Trainer::new(&kg, &config()).unwrap();
    let m = trainer.model();
    let batch: Vec<_> = kg
        .lang_ids()
        .flat_map(|l| kg.triples(l, Fold::Train).iter().map(move |&t| (l, t)))
        .take(128)
        .collect();
    c.bench_function("kgc_loss batch=128 d=64", |b| {
        b.iter_batched(
            || Gradients::zeros(m),
            |mut g| kgc_loss(m, &batch, trainer.candidates(), &mut g, 1.0).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn beliefs(c: &mut Criterion) {
    let kg = synthetic_kg();
    let trainer = Trainer::new(&kg, &config()).unwrap();
    let ctx = SignatureContext::new(&kg, &kg.revealed_classes());
    let opts = config().belief_options();
    let mut g = c.benchmark_group("refresh_beliefs");
    g.sample_size(20);
    for kind in [BeliefKind::Jaccard, BeliefKind::Asymmetric, BeliefKind::SoftAsymmetric] {
        g.bench_function(format!("{kind:?}"), |b| b.iter(|| refresh_beliefs(&ctx, kind, trainer.model(), &opts, 0)));
    }
    g.finish();
}

fn eval(c: &mut Criterion) {
    let kg = synthetic_kg();
    let trainer = Trainer::new(&kg, &config()).unwrap();
    let opts = EvalOptions::default();
    let mut g = c.benchmark_group("evaluate");
    g.sample_size(20);
    g.bench_function("test fold, all tasks", |b| {
        b.iter(|| evaluate(trainer.model(), &kg, Fold::Test, EvalTasks::ALL, &opts).unwrap())
    });
    g.finish();
}

criterion_group!(benches, scoring, kgc, beliefs, eval);
criterion_main!(benches);
