use roleablate::eval::{run_experiment, run_experiment_with, ExperimentPlan};
use roleablate::{generate, BackendId, EmbeddingTable, OovPolicy, RoleKind, Setting, SynthSpec, TrainConfig};

fn table() -> EmbeddingTable {
    EmbeddingTable::empty(300, OovPolicy::Random { seed: 17 })
}

#[test]
fn cue_determined_corpus_separates_settings() {
    let spec = SynthSpec {
        n_instances: 1000,
        seed: 5,
        ..Default::default()
    };
    let corpus = generate(&spec).unwrap().corpus;
    let settings = [Setting::AsIs, Setting::Only(RoleKind::Cue), Setting::Without(RoleKind::Cue)];
    let results = run_experiment(
        &corpus,
        &settings,
        &BackendId::Linear,
        &TrainConfig::default(),
        3,
        100,
        &table(),
    )
    .unwrap();
    let f1 = |s| results.get("synth", s).unwrap().mean.f1;
    let chance = 1.0 / spec.labels.len() as f64;
    eprintln!(
        "as-is {:.3} only {:.3} without {:.3}",
        f1(Setting::AsIs),
        f1(Setting::Only(RoleKind::Cue)),
        f1(Setting::Without(RoleKind::Cue))
    );
    assert!(f1(Setting::AsIs) >= 0.95);
    assert!(f1(Setting::Only(RoleKind::Cue)) >= 0.95);
    assert!(f1(Setting::Without(RoleKind::Cue)) <= chance + 0.10);
    let without = results.get("synth", Setting::Without(RoleKind::Cue)).unwrap();
    assert!(!without.above_asis.f1);
    assert_eq!(without.n_runs, 3);
}

#[test]
fn single_run_is_reproducible() {
    let corpus = generate(&SynthSpec {
        n_instances: 300,
        noise: 0.1,
        ..Default::default()
    })
    .unwrap()
    .corpus;
    let settings = [Setting::AsIs, Setting::Position(RoleKind::Stimulus)];
    let run = || {
        run_experiment(&corpus, &settings, &BackendId::Linear, &TrainConfig::default(), 1, 7, &table()).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn shared_split_and_seeds() {
    let corpus = generate(&SynthSpec {
        n_instances: 200,
        ..Default::default()
    })
    .unwrap()
    .corpus;
    let plan = ExperimentPlan {
        jobs: 2,
        ..ExperimentPlan::new(
            vec![Setting::AsIs, Setting::Without(RoleKind::Target)],
            BackendId::Linear,
            TrainConfig::default(),
            2,
            40,
        )
    };
    let out = run_experiment_with(&corpus, &plan, &table()).unwrap();
    assert_eq!(out.runs.len(), 4);
    for run in 0..2 {
        let ids: Vec<Vec<&str>> = out
            .runs
            .iter()
            .filter(|r| r.run == run)
            .map(|r| r.predictions.iter().map(|p| p.id.as_str()).collect())
            .collect();
        assert_eq!(ids[0], ids[1], "settings of run {run} share the test split");
        assert!(out.runs.iter().filter(|r| r.run == run).all(|r| r.seed == 40 + run as u64));
    }
    let first: Vec<&str> = out.runs[0].predictions.iter().map(|p| p.id.as_str()).collect();
    let third: Vec<&str> = out.runs[2].predictions.iter().map(|p| p.id.as_str()).collect();
    assert_ne!(first, third, "runs use different splits");
}

#[test]
fn missing_asis_rejected_before_training() {
    let corpus = generate(&SynthSpec {
        n_instances: 50,
        ..Default::default()
    })
    .unwrap()
    .corpus;
    let err = run_experiment(
        &corpus,
        &[Setting::Only(RoleKind::Cue)],
        &BackendId::Linear,
        &TrainConfig::default(),
        1,
        0,
        &table(),
    )
    .unwrap_err();
    assert!(err.is_input_error());
}
