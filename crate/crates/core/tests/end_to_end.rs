use kgalign_core::dataset::{generate_synthetic, load_dataset, LoadOptions, SyntheticSpec};
use kgalign_core::embedding::{check_shape, read_checkpoint, write_checkpoint};
use kgalign_core::eval::{evaluate, EvalOptions, EvalTasks, Split};
use kgalign_core::signatures::{refresh_beliefs, BeliefOptions, SignatureContext};
use kgalign_core::train::{train, TrainConfig, Trainer, Variant};
use kgalign_core::{BeliefKind, CheckpointMeta, Fold, MultiKg};

fn small(drop: f64, align: f64) -> (tempfile::TempDir, MultiKg) {
    let spec = SyntheticSpec {
        n_languages: 2,
        n_entities: 60,
        n_relations: 6,
        n_triples: 400,
        fact_drop_fraction: drop,
        seed_align_fraction: align,
        seed: 3,
    };
    let dir = tempfile::tempdir().unwrap();
    let layout = generate_synthetic(&spec, dir.path()).unwrap();
    let kg = load_dataset(&layout, LoadOptions::from_layout(&layout).unwrap()).unwrap();
    (dir, kg)
}

#[test]
fn training_beats_an_untrained_model() {
    let (_dir, kg) = small(0.3, 0.5);
    let cfg = TrainConfig {
        dim: 16,
        epochs: 15,
        batch_size: 64,
        variant: Variant::SoftAsymmetric,
        ..TrainConfig::default()
    };
    let untrained = Trainer::new(&kg, &cfg).unwrap().into_model();
    let trained = train(&kg, &cfg).unwrap();
    assert_eq!(trained.losses.len(), 15);
    assert!(trained.losses.last().unwrap().total < trained.losses[0].total);
    let opts = EvalOptions::default();
    let mrr = |m| {
        let (r, _) = evaluate(m, &kg, Fold::Test, EvalTasks::ALL, &opts).unwrap();
        r.kgc_mean(Split::Whole).mrr
    };
    assert!(mrr(&trained.model) > mrr(&untrained) + 0.05);
}

#[test]
fn checkpoint_round_trip_restores_scores() {
    let (dir, kg) = small(0.3, 0.5);
    let cfg = TrainConfig {
        dim: 8,
        epochs: 2,
        variant: Variant::Jaccard,
        ..TrainConfig::default()
    };
    let out = train(&kg, &cfg).unwrap();
    let path = dir.path().join("model.bin");
    write_checkpoint(&out.model, &path).unwrap();
    CheckpointMeta::for_dataset(&kg, "jaccard", true, 0.5, 0).write(&path).unwrap();
    CheckpointMeta::read(&path).unwrap().verify(&kg).unwrap();

    let back = read_checkpoint(&path).unwrap();
    check_shape(&back, &kg).unwrap();
    let back = back.shared_by(&kg.revealed_classes());
    for l in kg.lang_ids() {
        for t in kg.triples(l, Fold::Test) {
            assert_eq!(back.score(t.s, t.r, t.o), out.model.score(t.s, t.r, t.o));
        }
    }
}

#[test]
fn gold_relation_pairs_get_higher_beliefs() {
    let (_dir, kg) = small(0.0, 1.0);
    let ctx = SignatureContext::new(&kg, &kg.revealed_classes());
    let model = Trainer::new(&kg, &TrainConfig { dim: 4, ..TrainConfig::default() }).unwrap().into_model();
    let opts = BeliefOptions { tau: 0.1, max_pairs: 512, seed: 0 };
    let gold: Vec<_> = kg.relation_gold().to_vec();
    for kind in [BeliefKind::Jaccard, BeliefKind::Asymmetric] {
        let table = refresh_beliefs(&ctx, kind, &model, &opts, 0);
        let (mut g, mut other) = (Vec::new(), Vec::new());
        for (idx, &(a, b)) in table.pairs().iter().enumerate() {
            let v = table.belief(idx).equiv;
            if gold.contains(&(a, b)) || gold.contains(&(b, a)) {
                g.push(v);
            } else {
                other.push(v);
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert_eq!(g.len(), gold.len(), "{kind:?}: every gold pair is a candidate");
        assert!(mean(&g) > mean(&other) + 0.2, "{kind:?}: {} vs {}", mean(&g), mean(&other));
    }
}
