use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use roleablate::analysis::{
    disagreements_to_tsv, distribution_chart, emotion_distribution, mine_disagreements, top_role_tokens,
    DisagreementExample, EmotionDistribution, PredictionMap, TokenFrequency,
};
use roleablate::corpus::{
    compute_stats, filter_single_label, load_corpus, map_labels, read_canonical, split, write_canonical, Adapter,
    CorpusStats, LabelMap, SplitOptions,
};
use roleablate::eval::{per_emotion_report, run_experiment_partial, Prediction, RunOutput};
use roleablate::model::load_embeddings;
use roleablate::transform::sidecar_path;
use roleablate::{generate, Corpus, EmbeddingTable, Error, ResultsTable, RoleKind, Setting, SynthSpec};
use serde::Serialize;
use serde_json::Value;

use crate::spec::{ExperimentSpec, Manifest};

pub const FAILED_MARKER: &str = "FAILED";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> roleablate::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub name: String,
    pub instances: usize,
    pub multi_label_removed: usize,
    pub unmapped_dropped: usize,
    pub labels: Vec<String>,
}

impl fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}: {} instances", self.name, self.instances)?;
        writeln!(f, "  dropped (multi-label): {}", self.multi_label_removed)?;
        writeln!(f, "  dropped (unmapped label): {}", self.unmapped_dropped)?;
        write!(f, "  labels: {}", self.labels.join(", "))
    }
}

/// Loads `source` through `adapter`, drops multi-label instances, applies
/// the label map and returns the canonical corpus.
pub fn load_dataset(
    source: &Path,
    adapter: Adapter,
    options: &Value,
    label_map: Option<&Path>,
    single_label: bool,
) -> roleablate::Result<(Corpus, IngestSummary)> {
    let raw = load_corpus(source, adapter, options)?;
    let (corpus, filtered) = if single_label {
        filter_single_label(&raw)
    } else {
        (raw, Default::default())
    };
    let (corpus, mapped) = match label_map {
        Some(path) => map_labels(&corpus, &LabelMap::from_path(path)?)?,
        None => (corpus, Default::default()),
    };
    corpus.validate()?;
    let summary = IngestSummary {
        name: corpus.name.clone(),
        instances: corpus.len(),
        multi_label_removed: filtered.removed,
        unmapped_dropped: mapped.dropped,
        labels: corpus.label_set.clone(),
    };
    Ok((corpus, summary))
}

pub fn cmd_ingest(
    source: &Path,
    adapter: Adapter,
    options: &Value,
    label_map: Option<&Path>,
    output: &Path,
) -> roleablate::Result<IngestSummary> {
    let (corpus, summary) = load_dataset(source, adapter, options, label_map, true)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_canonical(output, &corpus)?;
    Ok(summary)
}

/// Statistics of each canonical file plus the rendered table. Empty files
/// produce no row and a warning.
pub fn cmd_stats(paths: &[PathBuf]) -> roleablate::Result<(Vec<CorpusStats>, String)> {
    let mut rows = Vec::new();
    for path in paths {
        let corpus = read_canonical(path)?;
        if corpus.is_empty() {
            log::warn!("{}: no instances", path.display());
            continue;
        }
        rows.push(compute_stats(&corpus));
    }
    let table = CorpusStats::render_table(&rows);
    Ok((rows, table))
}

/// Writes `train.jsonl`, `dev.jsonl` and `test.jsonl` into `out_dir`.
pub fn cmd_split(path: &Path, options: &SplitOptions, out_dir: &Path) -> roleablate::Result<[usize; 3]> {
    let corpus = read_canonical(path)?;
    let (train, dev, test) = split(&corpus, options)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (name, part) in [("train", &train), ("dev", &dev), ("test", &test)] {
        write_canonical(&out_dir.join(format!("{name}.jsonl")), part)?;
    }
    Ok([train.len(), dev.len(), test.len()])
}

#[derive(Serialize)]
struct SynthMeta<'a> {
    spec: &'a SynthSpec,
    flipped: &'a [String],
}

/// Writes the synthetic corpus and, next to it, a `.meta.json` sidecar with
/// the spec and the ids of noise-flipped instances.
pub fn cmd_synth(spec: &SynthSpec, output: &Path) -> roleablate::Result<(usize, usize)> {
    let out = generate(spec)?;
    out.corpus.validate()?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_canonical(output, &out.corpus)?;
    let meta = SynthMeta {
        spec,
        flipped: &out.flipped,
    };
    write(&sidecar_path(output), to_json(&meta))?;
    Ok((out.corpus.len(), out.flipped.len()))
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub table: ResultsTable,
}

fn load_embedding_table(spec: &ExperimentSpec, corpus: &Corpus) -> roleablate::Result<EmbeddingTable> {
    match &spec.embeddings {
        Some(path) => {
            let keep: HashSet<String> = corpus.vocabulary().into_iter().map(str::to_owned).collect();
            let table = load_embeddings(path, spec.embedding_dim, spec.oov, Some(&keep))?;
            log::info!(
                "{} of {} vocabulary words found in {} ({} malformed lines)",
                table.len(),
                keep.len(),
                path.display(),
                table.skipped_lines()
            );
            Ok(table)
        }
        None => Ok(EmbeddingTable::empty(spec.embedding_dim, spec.oov)),
    }
}

fn run_log_line(r: &RunOutput) -> String {
    format!(
        "{}\tp={:.6}\tr={:.6}\tf1={:.6}\tdev_f1={:.6}\tepochs={}\tbest_epoch={}\tdropped={}\n",
        r.setting,
        r.scores.precision,
        r.scores.recall,
        r.scores.f1,
        r.meta.best_dev_f1,
        r.meta.epochs_run,
        r.meta.best_epoch,
        r.dropped
    )
}

fn write_run_outputs(out: &Path, runs: &[RunOutput], seeds: &[u64]) -> roleablate::Result<()> {
    for (k, seed) in seeds.iter().enumerate() {
        let mine: Vec<&RunOutput> = runs.iter().filter(|r| r.run == k).collect();
        let mut log = format!("run {k}\tseed {seed}\n");
        for r in &mine {
            log.push_str(&run_log_line(r));
            let mut lines = String::new();
            for p in &r.predictions {
                lines.push_str(&serde_json::to_string(p).expect("prediction serializes"));
                lines.push('\n');
            }
            write(&out.join(format!("predictions/run-{k}/{}.jsonl", r.setting.slug())), lines)?;
            if let Some(model) = &r.model {
                model.save(&out.join(format!("checkpoints/run-{k}/{}", r.setting.slug())))?;
            }
        }
        write(&out.join(format!("logs/run-{k}.log")), log)?;
    }
    Ok(())
}

fn run_inner(spec: &ExperimentSpec, manifest: &Manifest, out: &Path) -> roleablate::Result<ResultsTable> {
    let (corpus, summary) = load_dataset(
        &spec.dataset,
        spec.adapter()?,
        &spec.adapter_options,
        spec.label_map.as_deref(),
        spec.single_label,
    )?;
    log::info!("{summary}");
    let embeddings = load_embedding_table(spec, &corpus)?;
    let partial = run_experiment_partial(&corpus, &spec.plan(), &embeddings)?;
    write_run_outputs(out, &partial.runs, &manifest.run_seeds)?;
    let table = partial.table(&corpus.name)?;
    if !partial.runs.is_empty() {
        write(&out.join("results.json"), table.to_json() + "\n")?;
        write(&out.join("results.tsv"), table.to_tsv())?;
    }
    match partial.failures.into_iter().next() {
        Some(first) => Err(first),
        None => Ok(table),
    }
}

/// Runs the experiment described by `spec` into `out`: `manifest.json`,
/// `results.json`, `results.tsv`, `logs/run-k.log`,
/// `predictions/run-k/<setting>.jsonl` and, when enabled,
/// `checkpoints/run-k/<setting>/`. On failure whatever completed is kept and
/// a `FAILED` file holds the error.
pub fn cmd_run(spec: &ExperimentSpec, out: &Path) -> roleablate::Result<RunSummary> {
    spec.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let marker = out.join(FAILED_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }
    let manifest = Manifest::new(spec)?;
    write(&out.join("manifest.json"), manifest.to_json() + "\n")?;
    match run_inner(spec, &manifest, out) {
        Ok(table) => Ok(RunSummary {
            out_dir: out.to_path_buf(),
            table,
        }),
        Err(e) => {
            let _ = fs::write(&marker, format!("{e}\n"));
            Err(e)
        }
    }
}

/// Replays a manifest after checking that its inputs are unchanged.
pub fn cmd_replay(manifest: &Path, out: &Path) -> roleablate::Result<RunSummary> {
    let manifest = Manifest::from_path(manifest)?;
    manifest.verify()?;
    cmd_run(&manifest.spec, out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyzeOptions {
    /// Roles for frequency tables; empty means every annotated role.
    pub roles: Vec<RoleKind>,
    pub k: usize,
    pub case_fold: bool,
    pub stoplist: Option<PathBuf>,
    /// Tokens whose emotion distribution is reported and plotted.
    pub tokens: Vec<String>,
    /// Emotions shown in distributions; empty means the corpus label set.
    pub emotions: Vec<String>,
    /// Mine As-Is versus Without disagreements from the predictions.
    pub disagreements: bool,
    /// Without roles to compare; empty means every one found.
    pub without_roles: Vec<RoleKind>,
    pub run: usize,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            roles: Vec::new(),
            k: 10,
            case_fold: true,
            stoplist: None,
            tokens: Vec::new(),
            emotions: Vec::new(),
            disagreements: false,
            without_roles: Vec::new(),
            run: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnalyzeReport {
    pub frequencies: Vec<TokenFrequency>,
    pub distributions: Vec<EmotionDistribution>,
    pub disagreements: Option<Vec<DisagreementExample>>,
    pub written: Vec<PathBuf>,
}

fn read_predictions(path: &Path, setting: Setting) -> roleablate::Result<Vec<Prediction>> {
    if !path.exists() {
        return Err(Error::InvalidConfig(format!(
            "missing predictions for setting {setting} ({})",
            path.display()
        )));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: i + 1,
                field: "prediction".into(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Directory holding `<setting>.jsonl` files for one run. Accepts a results
/// directory, its `predictions/` directory or a run directory.
fn run_dir(dir: &Path, run: usize) -> PathBuf {
    let dir = if dir.join("predictions").is_dir() {
        dir.join("predictions")
    } else {
        dir.to_path_buf()
    };
    let nested = dir.join(format!("run-{run}"));
    if nested.is_dir() {
        nested
    } else {
        dir
    }
}

fn load_disagreement_inputs(
    dir: &Path,
    options: &AnalyzeOptions,
) -> roleablate::Result<(BTreeMap<Setting, PredictionMap>, BTreeMap<String, String>)> {
    let dir = run_dir(dir, options.run);
    let mut settings = vec![Setting::AsIs];
    if options.without_roles.is_empty() {
        let found: Vec<Setting> = RoleKind::ALL
            .into_iter()
            .map(Setting::Without)
            .filter(|s| dir.join(format!("{}.jsonl", s.slug())).exists())
            .collect();
        if found.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "missing predictions for any without setting in {}",
                dir.display()
            )));
        }
        settings.extend(found);
    } else {
        settings.extend(options.without_roles.iter().map(|&r| Setting::Without(r)));
    }
    let mut maps = BTreeMap::new();
    let mut gold = BTreeMap::new();
    for setting in settings {
        let preds = read_predictions(&dir.join(format!("{}.jsonl", setting.slug())), setting)?;
        if setting == Setting::AsIs {
            gold = preds.iter().map(|p| (p.id.clone(), p.gold.clone())).collect();
        }
        maps.insert(setting, preds.into_iter().map(|p| (p.id, p.pred)).collect());
    }
    Ok((maps, gold))
}

fn read_stoplist(path: &Path) -> roleablate::Result<BTreeSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect())
}

/// Frequency tables per role, emotion distributions for chosen tokens with
/// an SVG chart, and optionally the disagreement list mined from
/// predictions. Every report is written as TSV and JSON under `out_dir`.
pub fn cmd_analyze(
    canonical: &Path,
    predictions: Option<&Path>,
    options: &AnalyzeOptions,
    out_dir: &Path,
) -> roleablate::Result<AnalyzeReport> {
    let corpus = read_canonical(canonical)?;
    let mut report = AnalyzeReport::default();
    let emit = |name: String, contents: String, report: &mut AnalyzeReport| -> roleablate::Result<()> {
        let path = out_dir.join(name);
        write(&path, contents)?;
        report.written.push(path);
        Ok(())
    };

    // Predictions are checked first so a missing file fails before any
    // report is written.
    let disagreement_inputs = if options.disagreements {
        let dir = predictions.ok_or_else(|| {
            Error::InvalidConfig("disagreements need a predictions directory".into())
        })?;
        Some(load_disagreement_inputs(dir, options)?)
    } else {
        None
    };

    let stoplist = options.stoplist.as_deref().map(read_stoplist).transpose()?;
    let roles = if options.roles.is_empty() {
        corpus.annotated_roles()
    } else {
        options.roles.clone()
    };
    for role in roles {
        let freq = top_role_tokens(&corpus, role, options.k, options.case_fold, stoplist.as_ref())?;
        emit(format!("frequencies-{role}.tsv"), freq.to_tsv(), &mut report)?;
        emit(format!("frequencies-{role}.json"), to_json(&freq), &mut report)?;
        report.frequencies.push(freq);
    }

    if !options.tokens.is_empty() {
        let emotions = if options.emotions.is_empty() {
            corpus.label_set.clone()
        } else {
            options.emotions.clone()
        };
        let dists = options
            .tokens
            .iter()
            .map(|t| emotion_distribution(&corpus, t, &emotions, options.case_fold))
            .collect::<roleablate::Result<Vec<_>>>()?;
        let tsv: String = dists.iter().map(EmotionDistribution::to_tsv).collect();
        emit("distributions.tsv".into(), tsv, &mut report)?;
        emit("distributions.json".into(), to_json(&dists), &mut report)?;
        emit("distributions.svg".into(), distribution_chart(&dists)?, &mut report)?;
        report.distributions = dists;
    }

    if let Some((maps, gold)) = disagreement_inputs {
        let examples = mine_disagreements(&maps, &gold)?;
        emit("disagreements.tsv".into(), disagreements_to_tsv(&examples), &mut report)?;
        emit("disagreements.json".into(), to_json(&examples), &mut report)?;
        report.disagreements = Some(examples);
    }
    Ok(report)
}

/// Renders the results table as TSV, followed by per-emotion F1 reports
/// for the requested settings of every dataset (As-Is is always first).
pub fn cmd_report(results: &Path, datasets: &[String], settings: &[Setting]) -> roleablate::Result<String> {
    let text = fs::read_to_string(results).map_err(|e| Error::io(results, e))?;
    let table = ResultsTable::from_json(&text)?;
    let mut out = table.to_tsv();
    if settings.is_empty() {
        return Ok(out);
    }
    let mut chosen = vec![Setting::AsIs];
    chosen.extend(settings.iter().copied().filter(|s| *s != Setting::AsIs));
    let names: Vec<String> = if datasets.is_empty() {
        table.datasets().into_iter().map(str::to_owned).collect()
    } else {
        datasets.to_vec()
    };
    for dataset in names {
        out.push('\n');
        out.push_str(&per_emotion_report(&table, &dataset, &chosen)?.render());
    }
    Ok(out)
}
