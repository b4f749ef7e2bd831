use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{confusion, macro_prf, MacroScores};
use super::results::{ResultsAccumulator, ResultsTable};
use crate::corpus::{split, Corpus, SplitOptions, SplitRatios};
use crate::error::{Error, Result, ResultExt};
use crate::model::{train, BackendId, ClassifierModel, EmbeddingTable, TrainConfig, TrainingMeta};
use crate::transform::{transform_corpus, AbsentPolicy, Setting, SpecialTokens};

/// Everything that determines an experiment apart from the corpus and the
/// embedding table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub settings: Vec<Setting>,
    pub backend: BackendId,
    #[serde(default)]
    pub config: TrainConfig,
    pub n_runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub specials: SpecialTokens,
    #[serde(default)]
    pub absent_policy: AbsentPolicy,
    #[serde(default)]
    pub ratios: SplitRatios,
    #[serde(default)]
    pub stratified: bool,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub jobs: usize,
    /// Return trained models alongside the scores.
    #[serde(default)]
    pub keep_models: bool,
}

impl ExperimentPlan {
    pub fn new(settings: Vec<Setting>, backend: BackendId, config: TrainConfig, n_runs: usize, base_seed: u64) -> Self {
        ExperimentPlan {
            settings,
            backend,
            config,
            n_runs,
            base_seed,
            specials: SpecialTokens::default(),
            absent_policy: AbsentPolicy::default(),
            ratios: SplitRatios::default(),
            stratified: false,
            jobs: 0,
            keep_models: false,
        }
    }

    /// Seed of run `k`, used for both its split and its model.
    pub fn run_seed(&self, k: usize) -> u64 {
        self.base_seed.wrapping_add(k as u64)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.settings.contains(&Setting::AsIs) {
            return Err(Error::InvalidConfig("settings must include as-is".into()));
        }
        if self.n_runs == 0 {
            return Err(Error::InvalidConfig("n_runs must be at least 1".into()));
        }
        let mut seen = self.settings.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.settings.len() {
            return Err(Error::InvalidConfig("settings contain duplicates".into()));
        }
        self.ratios.validate()?;
        self.config.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub gold: String,
    pub pred: String,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub run: usize,
    pub seed: u64,
    pub setting: Setting,
    pub scores: MacroScores,
    pub predictions: Vec<Prediction>,
    pub meta: TrainingMeta,
    /// Instances removed by the absent-role policy across train, dev and test.
    pub dropped: usize,
    pub model: Option<ClassifierModel>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub table: ResultsTable,
    /// Ordered by run, then by the plan's setting order.
    pub runs: Vec<RunOutput>,
}

fn run_one(
    corpus: &Corpus,
    parts: &(Corpus, Corpus, Corpus),
    setting: Setting,
    run: usize,
    plan: &ExperimentPlan,
    embeddings: &EmbeddingTable,
) -> Result<RunOutput> {
    let seed = plan.run_seed(run);
    let (tr, dr, te) = parts;
    let (train_set, a) = transform_corpus(tr, setting, &plan.specials, plan.absent_policy);
    let (dev_set, b) = transform_corpus(dr, setting, &plan.specials, plan.absent_policy);
    let (test_set, c) = transform_corpus(te, setting, &plan.specials, plan.absent_policy);
    let config = TrainConfig {
        seed,
        ..plan.config.clone()
    };
    let model = train(&plan.backend, &train_set, &dev_set, &corpus.label_set, embeddings, &config)?;
    let pred = model.predict(&test_set);
    let gold: Vec<&str> = test_set.iter().map(|i| i.label.as_str()).collect();
    let pred_refs: Vec<&str> = pred.iter().map(String::as_str).collect();
    let scores = macro_prf(&confusion(&gold, &pred_refs, &corpus.label_set)?);
    log::info!(
        "{} / {setting} / run {run}: macro-F1 {:.4} (dev {:.4}, {} epochs)",
        corpus.name,
        scores.f1,
        model.meta().best_dev_f1,
        model.meta().epochs_run
    );
    let predictions = test_set
        .iter()
        .zip(pred)
        .map(|(i, p)| Prediction {
            id: i.source_id.clone(),
            gold: i.label.clone(),
            pred: p,
        })
        .collect();
    Ok(RunOutput {
        run,
        seed,
        setting,
        scores,
        predictions,
        meta: model.meta().clone(),
        dropped: a.dropped + b.dropped + c.dropped,
        model: plan.keep_models.then_some(model),
    })
}

/// Completed tasks and the errors of failed ones; either may be empty.
#[derive(Debug)]
pub struct PartialOutput {
    /// Ordered by run, then by the plan's setting order.
    pub runs: Vec<RunOutput>,
    pub failures: Vec<Error>,
}

impl PartialOutput {
    /// Aggregates the completed runs; settings without any completed run are
    /// absent from the table.
    pub fn table(&self, dataset: &str) -> Result<ResultsTable> {
        let mut acc = ResultsAccumulator::new();
        for r in &self.runs {
            acc.insert(dataset, r.setting, r.run, r.scores.clone())?;
        }
        acc.finish()
    }
}

/// Like [`run_experiment_with`] but keeps going after a task fails. Plan,
/// split and specials errors still abort before any training.
pub fn run_experiment_partial(corpus: &Corpus, plan: &ExperimentPlan, embeddings: &EmbeddingTable) -> Result<PartialOutput> {
    plan.validate()?;
    plan.specials.check_corpus(corpus)?;
    let annotated = corpus.annotated_roles();
    for role in plan.settings.iter().filter_map(|s| s.role()) {
        if !annotated.contains(&role) {
            log::warn!("{}: role `{role}` is not annotated in any instance", corpus.name);
        }
    }
    let embeddings: Cow<EmbeddingTable> = if plan.specials.as_array().iter().all(|t| embeddings.is_special(t)) {
        Cow::Borrowed(embeddings)
    } else {
        Cow::Owned(embeddings.clone().with_specials(&plan.specials))
    };

    let splits: Vec<(Corpus, Corpus, Corpus)> = (0..plan.n_runs)
        .map(|k| {
            let options = SplitOptions {
                ratios: plan.ratios,
                seed: plan.run_seed(k),
                stratified: plan.stratified,
            };
            split(corpus, &options).context_with(|| format!("run {k}"))
        })
        .collect::<Result<_>>()?;
    let tasks: Vec<(usize, Setting)> = (0..plan.n_runs)
        .flat_map(|k| plan.settings.iter().map(move |&s| (k, s)))
        .collect();

    let execute = || -> Vec<Result<RunOutput>> {
        tasks
            .par_iter()
            .map(|&(k, s)| {
                run_one(corpus, &splits[k], s, k, plan, &embeddings)
                    .context_with(|| format!("{} / setting {s} / run {k}", corpus.name))
            })
            .collect()
    };
    let outputs = if plan.jobs == 0 {
        execute()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(plan.jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(execute)
    };
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for out in outputs {
        match out {
            Ok(r) => runs.push(r),
            Err(e) => failures.push(e),
        }
    }
    Ok(PartialOutput { runs, failures })
}

/// Trains and scores every setting on `n_runs` random splits. Run `k` uses
/// seed `base_seed + k` for its split and its models; all settings of a run
/// share one split. The first failing task aborts the experiment.
pub fn run_experiment_with(corpus: &Corpus, plan: &ExperimentPlan, embeddings: &EmbeddingTable) -> Result<ExperimentOutput> {
    let mut partial = run_experiment_partial(corpus, plan, embeddings)?;
    if !partial.failures.is_empty() {
        return Err(partial.failures.swap_remove(0));
    }
    Ok(ExperimentOutput {
        table: partial.table(&corpus.name)?,
        runs: partial.runs,
    })
}

pub fn run_experiment(
    corpus: &Corpus,
    settings: &[Setting],
    backend: &BackendId,
    config: &TrainConfig,
    n_runs: usize,
    base_seed: u64,
    embeddings: &EmbeddingTable,
) -> Result<ResultsTable> {
    let plan = ExperimentPlan::new(settings.to_vec(), backend.clone(), config.clone(), n_runs, base_seed);
    run_experiment_with(corpus, &plan, embeddings).map(|o| o.table)
}
