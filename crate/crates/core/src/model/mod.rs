//! Classifier backends: a bidirectional LSTM over word vectors, a
//! deterministic linear baseline, and a registry slot for external models.

mod adam;
pub mod embeddings;
pub mod external;
mod linear;
pub mod recurrent;
mod vocab;

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::eval::metrics::{macro_prf, ConfusionMatrix};
use crate::transform::TransformedInstance;
use adam::Adam;
pub use embeddings::{load_embeddings, EmbeddingTable, OovPolicy};
pub use external::{register_backend, ExternalBackend, ExternalModel};
use linear::{FitOptions, LinearModel};
use recurrent::{BiLstm, BiLstmParams, DropoutSpec};
use vocab::Vocab;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum BackendId {
    Recurrent,
    Linear,
    /// A backend registered with [`register_backend`].
    External(String),
}

impl fmt::Display for BackendId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendId::Recurrent => f.write_str("recurrent"),
            BackendId::Linear => f.write_str("linear"),
            BackendId::External(name) => write!(f, "external:{name}"),
        }
    }
}

impl FromStr for BackendId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "recurrent" | "bilstm" | "lstm" => Ok(BackendId::Recurrent),
            "linear" => Ok(BackendId::Linear),
            other => match other.strip_prefix("external:") {
                Some(name) if !name.is_empty() => Ok(BackendId::External(name.to_owned())),
                _ => Err(Error::InvalidConfig(format!("unknown backend `{s}`"))),
            },
        }
    }
}

impl Serialize for BackendId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BackendId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dropout: f64,
    pub recurrent_dropout: f64,
    pub learning_rate: f64,
    /// L2 penalty; the linear backend uses it only when `linear_l2_grid` is
    /// empty.
    pub l2: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub hidden_size: usize,
    pub fine_tune_embeddings: bool,
    /// Optimizer iteration cap for the linear backend.
    pub linear_max_iter: usize,
    /// Gradient max-norm at which the linear backend stops.
    pub linear_tolerance: f64,
    /// Candidate L2 penalties for the linear backend; the one with the best
    /// dev macro-F1 wins, ties going to the larger penalty.
    pub linear_l2_grid: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dropout: 0.3,
            recurrent_dropout: 0.3,
            learning_rate: 3e-4,
            l2: 1e-4,
            batch_size: 32,
            patience: 3,
            max_epochs: 100,
            seed: 0,
            hidden_size: 128,
            fine_tune_embeddings: true,
            linear_max_iter: 500,
            linear_tolerance: 1e-6,
            linear_l2_grid: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_owned()));
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.recurrent_dropout) {
            return bad("dropout rates must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.l2 >= 0.0) || self.linear_l2_grid.iter().any(|v| !(*v >= 0.0)) {
            return bad("l2 penalties must be non-negative");
        }
        if self.patience < 1 || self.batch_size < 1 || self.max_epochs < 1 || self.hidden_size < 1 {
            return bad("patience, batch_size, max_epochs and hidden_size must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    /// Epochs for the recurrent backend, optimizer iterations for the linear one.
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    #[serde(default)]
    pub dev_f1_history: Vec<f64>,
    /// Dev labels absent from training data; always scored as wrong.
    #[serde(default)]
    pub unseen_dev_labels: Vec<String>,
    /// L2 penalty the linear backend settled on.
    #[serde(default)]
    pub selected_l2: Option<f64>,
}

#[derive(Clone, Debug)]
enum Learned {
    Linear(LinearModel),
    Recurrent { vocab: Vocab, net: BiLstm },
    External(Arc<dyn ExternalModel>),
}

/// A trained classifier. Immutable after training and safe to share.
#[derive(Clone, Debug)]
pub struct ClassifierModel {
    backend: BackendId,
    label_set: Vec<String>,
    config: TrainConfig,
    meta: TrainingMeta,
    learned: Learned,
}

const PREDICT_CHUNK: usize = 64;

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

fn rows(a: Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

impl ClassifierModel {
    pub fn backend(&self) -> &BackendId {
        &self.backend
    }

    pub fn label_set(&self) -> &[String] {
        &self.label_set
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    /// Class scores in label-set order, one row per instance.
    pub fn scores(&self, instances: &[TransformedInstance]) -> Vec<Vec<f64>> {
        match &self.learned {
            Learned::Linear(m) => {
                let tokens: Vec<&[String]> = instances.iter().map(|i| i.tokens.as_slice()).collect();
                rows(m.scores(&tokens))
            }
            Learned::Recurrent { vocab, net } => {
                let ids: Vec<Vec<usize>> = instances.iter().map(|i| vocab.ids(&i.tokens)).collect();
                recurrent_scores(net, &ids)
            }
            Learned::External(m) => m.scores(instances),
        }
    }

    pub fn predict(&self, instances: &[TransformedInstance]) -> Vec<String> {
        self.scores(instances)
            .iter()
            .map(|row| self.label_set[argmax(row)].clone())
            .collect()
    }
}

fn recurrent_scores(net: &BiLstm, ids: &[Vec<usize>]) -> Vec<Vec<f64>> {
    ids.chunks(PREDICT_CHUNK)
        .flat_map(|chunk| rows(net.probabilities(chunk)))
        .collect()
}

fn macro_f1_of(gold: &[usize], pred: &[usize], label_set: &[String]) -> f64 {
    let mut m = ConfusionMatrix::zeros(label_set.to_vec());
    for (&g, &p) in gold.iter().zip(pred) {
        m.counts[g][p] += 1;
    }
    macro_prf(&m).f1
}

pub fn predict(model: &ClassifierModel, instances: &[TransformedInstance]) -> Vec<String> {
    model.predict(instances)
}

fn label_indices(instances: &[TransformedInstance], label_set: &[String], which: &str) -> Result<Vec<usize>> {
    instances
        .iter()
        .map(|i| {
            label_set.iter().position(|l| *l == i.label).ok_or_else(|| {
                Error::Training(format!(
                    "{which} instance `{}` has label `{}` outside the label set",
                    i.source_id, i.label
                ))
            })
        })
        .collect()
}

/// Trains `backend` on `train_set`, using `dev_set` for early stopping (the
/// recurrent backend) and for the reported dev score.
pub fn train(
    backend: &BackendId,
    train_set: &[TransformedInstance],
    dev_set: &[TransformedInstance],
    label_set: &[String],
    embeddings: &EmbeddingTable,
    config: &TrainConfig,
) -> Result<ClassifierModel> {
    config.validate()?;
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::Training("train and dev sets must be non-empty".into()));
    }
    if label_set.is_empty() {
        return Err(Error::Training("label set is empty".into()));
    }
    if train_set.iter().all(|i| i.tokens.is_empty()) {
        return Err(Error::Training("empty vocabulary: training instances have no tokens".into()));
    }
    let y_train = label_indices(train_set, label_set, "train")?;
    let y_dev = label_indices(dev_set, label_set, "dev")?;
    let seen: BTreeSet<&str> = train_set.iter().map(|i| i.label.as_str()).collect();
    let unseen: Vec<String> = dev_set
        .iter()
        .map(|i| i.label.as_str())
        .filter(|l| !seen.contains(l))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_owned)
        .collect();
    if !unseen.is_empty() {
        log::warn!("dev labels never seen in training: {}", unseen.join(", "));
    }
    let mut meta = TrainingMeta {
        seed: config.seed,
        unseen_dev_labels: unseen,
        ..Default::default()
    };

    let learned = match backend {
        BackendId::Linear => {
            let vocab = Vocab::build(&[train_set, dev_set]);
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let emb = vocab.embedding_matrix(embeddings, &mut rng);
            let tokens: Vec<&[String]> = train_set.iter().map(|i| i.tokens.as_slice()).collect();
            let dev_tokens: Vec<&[String]> = dev_set.iter().map(|i| i.tokens.as_slice()).collect();
            let mut grid = config.linear_l2_grid.clone();
            if grid.is_empty() {
                grid.push(config.l2);
            }
            // (dev F1, l2, model, iterations) of the best candidate so far.
            let mut best: Option<(f64, f64, LinearModel, usize)> = None;
            for &l2 in &grid {
                let options = FitOptions {
                    l2,
                    max_iter: config.linear_max_iter,
                    tolerance: config.linear_tolerance,
                };
                let (model, iterations) =
                    LinearModel::fit(vocab.clone(), emb.clone(), &tokens, &y_train, label_set.len(), options);
                let pred: Vec<usize> = rows(model.scores(&dev_tokens)).iter().map(|r| argmax(r)).collect();
                let f1 = macro_f1_of(&y_dev, &pred, label_set);
                meta.dev_f1_history.push(f1);
                let better = match &best {
                    None => true,
                    Some((bf, bl2, _, _)) => f1 > *bf || (f1 == *bf && l2 > *bl2),
                };
                if better {
                    best = Some((f1, l2, model, iterations));
                }
            }
            let (f1, l2, model, iterations) = best.expect("grid is non-empty");
            log::debug!("linear: selected l2 {l2} (dev macro-F1 {f1:.4})");
            meta.epochs_run = iterations;
            meta.best_epoch = iterations;
            meta.best_dev_f1 = f1;
            meta.selected_l2 = Some(l2);
            Learned::Linear(model)
        }
        BackendId::Recurrent => {
            let vocab = Vocab::build(&[train_set, dev_set]);
            let (net, history, best_epoch) =
                fit_recurrent(&vocab, embeddings, train_set, &y_train, dev_set, &y_dev, label_set, config);
            meta.epochs_run = history.len();
            meta.best_epoch = best_epoch;
            meta.best_dev_f1 = history.get(best_epoch.wrapping_sub(1)).copied().unwrap_or(0.0);
            meta.dev_f1_history = history;
            Learned::Recurrent { vocab, net }
        }
        BackendId::External(name) => {
            let ext = external::registered_backend(name)?;
            let model = ext.train(train_set, dev_set, label_set, embeddings, config)?;
            let pred: Vec<usize> = model.scores(dev_set).iter().map(|r| argmax(r)).collect();
            if let Some((epochs, best)) = model.training_summary() {
                meta.epochs_run = epochs;
                meta.best_dev_f1 = best;
            } else {
                meta.best_dev_f1 = macro_f1_of(&y_dev, &pred, label_set);
            }
            Learned::External(model)
        }
    };
    Ok(ClassifierModel {
        backend: backend.clone(),
        label_set: label_set.to_vec(),
        config: config.clone(),
        meta,
        learned,
    })
}

/// Adam with early stopping on dev macro-F1. Returns the best-epoch network,
/// the per-epoch dev scores and the 1-based best epoch.
#[allow(clippy::too_many_arguments)]
fn fit_recurrent(
    vocab: &Vocab,
    embeddings: &EmbeddingTable,
    train_set: &[TransformedInstance],
    y_train: &[usize],
    dev_set: &[TransformedInstance],
    y_dev: &[usize],
    label_set: &[String],
    config: &TrainConfig,
) -> (BiLstm, Vec<f64>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let emb = vocab.embedding_matrix(embeddings, &mut rng);
    let init_seed = rng.random::<u64>();
    let mut net = BiLstm::new(emb, config.hidden_size, label_set.len(), init_seed);
    let trainable: Vec<bool> = if config.fine_tune_embeddings {
        (0..vocab.rows()).map(|r| r != vocab::UNK).collect()
    } else {
        let mut t = vec![false; vocab.rows()];
        for r in vocab.special_rows(embeddings) {
            t[r] = true;
        }
        t
    };
    let train_ids: Vec<Vec<usize>> = train_set.iter().map(|i| vocab.ids(&i.tokens)).collect();
    let dev_ids: Vec<Vec<usize>> = dev_set.iter().map(|i| vocab.ids(&i.tokens)).collect();
    let sizes: Vec<usize> = net.params.tensors().iter().map(|t| t.len()).collect();
    let mut adam = Adam::new(config.learning_rate, &sizes);

    let mut order: Vec<usize> = (0..train_ids.len()).collect();
    let mut best: Option<(BiLstmParams, usize)> = None;
    let mut best_f1 = f64::NEG_INFINITY;
    let mut history = Vec::new();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Vec<usize>> = chunk.iter().map(|&i| train_ids[i].clone()).collect();
            let targets: Vec<usize> = chunk.iter().map(|&i| y_train[i]).collect();
            let spec = DropoutSpec {
                rng: &mut rng,
                input: config.dropout,
                recurrent: config.recurrent_dropout,
            };
            let (_, mut grads) = net.loss_and_grad_with(&batch, &targets, config.l2, Some(spec));
            for (r, &learn) in trainable.iter().enumerate() {
                if !learn {
                    grads.emb.row_mut(r).fill(0.0);
                }
            }
            adam.step(net.params.tensors_mut(), grads.tensors());
        }
        let pred: Vec<usize> = recurrent_scores(&net, &dev_ids).iter().map(|r| argmax(r)).collect();
        let f1 = macro_f1_of(y_dev, &pred, label_set);
        history.push(f1);
        log::debug!("epoch {epoch}: dev macro-F1 {f1:.4}");
        if f1 > best_f1 {
            best_f1 = f1;
            best = Some((net.params.clone(), epoch));
        } else if best.as_ref().is_some_and(|(_, e)| epoch - e >= config.patience) {
            break;
        }
    }
    let (params, best_epoch) = best.expect("at least one epoch");
    net.params = params;
    (net, history, best_epoch)
}

const METADATA_FILE: &str = "model.json";
const PARAMS_FILE: &str = "params.bin";

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    backend: BackendId,
    label_set: Vec<String>,
    config: TrainConfig,
    meta: TrainingMeta,
    vocab: Vec<String>,
    /// Tensor shapes in blob order.
    shapes: Vec<Vec<usize>>,
}

impl ClassifierModel {
    /// Writes `model.json` and a little-endian f64 parameter blob into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let (vocab, tensors): (&Vocab, Vec<(Vec<usize>, &[f64])>) = match &self.learned {
            Learned::Linear(m) => (
                &m.vocab,
                vec![
                    (m.emb.shape().to_vec(), m.emb.as_slice().expect("layout")),
                    (m.feat_mean.shape().to_vec(), m.feat_mean.as_slice().expect("layout")),
                    (m.feat_scale.shape().to_vec(), m.feat_scale.as_slice().expect("layout")),
                    (m.weights.shape().to_vec(), m.weights.as_slice().expect("layout")),
                    (m.bias.shape().to_vec(), m.bias.as_slice().expect("layout")),
                ],
            ),
            Learned::Recurrent { vocab, net } => {
                (vocab, net.params.shapes().into_iter().zip(net.params.tensors()).collect())
            }
            Learned::External(_) => {
                return Err(Error::InvalidConfig(format!(
                    "backend `{}` does not support checkpoints",
                    self.backend
                )))
            }
        };
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let header = CheckpointMeta {
            backend: self.backend.clone(),
            label_set: self.label_set.clone(),
            config: self.config.clone(),
            meta: self.meta.clone(),
            vocab: vocab.tokens().to_vec(),
            shapes: tensors.iter().map(|(s, _)| s.clone()).collect(),
        };
        let json = serde_json::to_string_pretty(&header).expect("serializable metadata");
        let meta_path = dir.join(METADATA_FILE);
        fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))?;
        let blob: Vec<u8> = tensors
            .iter()
            .flat_map(|(_, t)| t.iter().flat_map(|v| v.to_le_bytes()))
            .collect();
        let blob_path = dir.join(PARAMS_FILE);
        fs::write(&blob_path, blob).map_err(|e| Error::io(&blob_path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(METADATA_FILE);
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let header: CheckpointMeta = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", meta_path.display())))?;
        let blob_path = dir.join(PARAMS_FILE);
        let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
        let corrupt = |msg: &str| Error::InvalidConfig(format!("{}: {msg}", blob_path.display()));
        if blob.len() % 8 != 0 {
            return Err(corrupt("length is not a multiple of 8"));
        }
        let mut values = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut tensors = Vec::new();
        for shape in &header.shapes {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = values.by_ref().take(n).collect();
            if data.len() != n {
                return Err(corrupt("blob shorter than declared shapes"));
            }
            tensors.push((shape.clone(), data));
        }
        if values.next().is_some() {
            return Err(corrupt("blob longer than declared shapes"));
        }
        let two = |(shape, data): (Vec<usize>, Vec<f64>)| -> Result<Array2<f64>> {
            match shape.as_slice() {
                [r, c] => Ok(Array2::from_shape_vec((*r, *c), data).expect("length checked")),
                _ => Err(corrupt("expected a matrix")),
            }
        };
        let one = |(shape, data): (Vec<usize>, Vec<f64>)| -> Result<Array1<f64>> {
            match shape.as_slice() {
                [_] => Ok(Array1::from(data)),
                _ => Err(corrupt("expected a vector")),
            }
        };
        let vocab = Vocab::from_tokens(header.vocab);
        let mut it = tensors.into_iter();
        let mut next = || it.next().ok_or_else(|| corrupt("missing tensor"));
        let learned = match header.backend {
            BackendId::Linear => Learned::Linear(LinearModel {
                vocab,
                emb: two(next()?)?,
                feat_mean: one(next()?)?,
                feat_scale: one(next()?)?,
                weights: two(next()?)?,
                bias: one(next()?)?,
            }),
            BackendId::Recurrent => {
                let emb = two(next()?)?;
                let (w0, u0, b0) = (two(next()?)?, two(next()?)?, one(next()?)?);
                let (w1, u1, b1) = (two(next()?)?, two(next()?)?, one(next()?)?);
                let params = BiLstmParams {
                    emb,
                    w: [w0, w1],
                    u: [u0, u1],
                    b: [b0, b1],
                    proj: two(next()?)?,
                    proj_b: one(next()?)?,
                };
                Learned::Recurrent {
                    vocab,
                    net: BiLstm { params },
                }
            }
            BackendId::External(_) => return Err(corrupt("external backends have no checkpoints")),
        };
        Ok(ClassifierModel {
            backend: header.backend,
            label_set: header.label_set,
            config: header.config,
            meta: header.meta,
            learned,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::Setting;

    fn inst(id: usize, tokens: &[&str], label: &str) -> TransformedInstance {
        TransformedInstance {
            source_id: format!("i{id}"),
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
            label: label.into(),
            setting: Setting::AsIs,
        }
    }

    /// 20 instances; label `pos` iff the token `good` is present.
    fn separable() -> Vec<TransformedInstance> {
        let fillers = ["the", "movie", "was", "a", "day", "it", "very", "so", "plot", "and"];
        (0..20)
            .map(|i| {
                let mut t = vec![fillers[i % 10], fillers[(i * 3 + 1) % 10]];
                let label = if i % 2 == 0 {
                    t.push("good");
                    "pos"
                } else {
                    t.push(fillers[(i * 7 + 2) % 10]);
                    "neg"
                };
                inst(i, &t, label)
            })
            .collect()
    }

    fn labels() -> Vec<String> {
        vec!["neg".into(), "pos".into()]
    }

    fn table() -> EmbeddingTable {
        EmbeddingTable::empty(16, OovPolicy::Random { seed: 1 })
    }

    fn f1(model: &ClassifierModel, data: &[TransformedInstance]) -> f64 {
        let pred = model.predict(data);
        let gold: Vec<&str> = data.iter().map(|i| i.label.as_str()).collect();
        let m = crate::eval::metrics::confusion(&gold, &pred.iter().map(String::as_str).collect::<Vec<_>>(), model.label_set())
            .unwrap();
        macro_prf(&m).f1
    }

    #[test]
    fn linear_separable_toy() {
        let data = separable();
        let model = train(&BackendId::Linear, &data, &data, &labels(), &table(), &TrainConfig::default()).unwrap();
        assert_eq!(model.meta().best_dev_f1, 1.0);
        let pred = model.predict(&data);
        assert!(pred.iter().zip(&data).all(|(p, i)| *p == i.label));
        assert!(model.predict(&[]).is_empty());
    }

    #[test]
    fn linear_l2_selection_on_dev() {
        let data = separable();
        let fixed = TrainConfig {
            l2: 0.5,
            linear_l2_grid: vec![],
            ..Default::default()
        };
        let model = train(&BackendId::Linear, &data, &data, &labels(), &table(), &fixed).unwrap();
        assert_eq!(model.meta().selected_l2, Some(0.5));
        assert_eq!(model.meta().dev_f1_history.len(), 1);

        // Every candidate separates the toy set, so the tie goes to the
        // largest penalty; the grid's order does not matter.
        let grid = TrainConfig {
            linear_l2_grid: vec![1e-3, 1e-1, 1e-2],
            ..Default::default()
        };
        let model = train(&BackendId::Linear, &data, &data, &labels(), &table(), &grid).unwrap();
        assert_eq!(model.meta().dev_f1_history, vec![1.0; 3]);
        assert_eq!(model.meta().selected_l2, Some(1e-1));

        let bad = TrainConfig {
            linear_l2_grid: vec![-1.0],
            ..Default::default()
        };
        assert!(train(&BackendId::Linear, &data, &data, &labels(), &table(), &bad).is_err());
    }

    #[test]
    fn linear_is_bit_reproducible() {
        let data = separable();
        let cfg = TrainConfig::default();
        let a = train(&BackendId::Linear, &data, &data, &labels(), &table(), &cfg).unwrap();
        let b = train(&BackendId::Linear, &data, &data, &labels(), &table(), &cfg).unwrap();
        assert_eq!(a.scores(&data), b.scores(&data));
        assert_eq!(a.predict(&data), a.predict(&data));
    }

    #[test]
    fn fully_masked_training_is_no_better_than_majority() {
        let labels3: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let make = |n: usize, offset: usize| -> Vec<TransformedInstance> {
            (0..n)
                .map(|i| {
                    let len = 2 + (i + offset) % 5;
                    let label = ["a", "a", "b", "c", "a"][(i + offset) % 5];
                    inst(i, &vec!["X"; len], label)
                })
                .collect()
        };
        let (tr, dev) = (make(60, 0), make(25, 2));
        let tbl = table().with_specials(&crate::transform::SpecialTokens::default());
        let model = train(&BackendId::Linear, &tr, &dev, &labels3, &tbl, &TrainConfig::default()).unwrap();
        // Majority baseline: predict the most frequent dev label everywhere.
        let mut counts = std::collections::BTreeMap::new();
        for i in &dev {
            *counts.entry(i.label.clone()).or_insert(0usize) += 1;
        }
        let (major, _) = counts.iter().max_by_key(|(_, c)| **c).unwrap();
        let gold: Vec<&str> = dev.iter().map(|i| i.label.as_str()).collect();
        let base = vec![major.as_str(); dev.len()];
        let baseline = macro_prf(&crate::eval::metrics::confusion(&gold, &base, &labels3).unwrap()).f1;
        assert!(f1(&model, &dev) <= baseline + 0.05);
    }

    #[test]
    fn label_permutation_permutes_scores() {
        let data = separable();
        let cfg = TrainConfig::default();
        let a = train(&BackendId::Linear, &data, &data, &labels(), &table(), &cfg).unwrap();
        let flipped = vec!["pos".to_string(), "neg".to_string()];
        let b = train(&BackendId::Linear, &data, &data, &flipped, &table(), &cfg).unwrap();
        assert_eq!(a.predict(&data), b.predict(&data));
        for (ra, rb) in a.scores(&data).iter().zip(b.scores(&data)) {
            assert!((ra[0] - rb[1]).abs() < 1e-9 && (ra[1] - rb[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = separable();
        let cfg = TrainConfig::default();
        assert!(train(&BackendId::Linear, &[], &data, &labels(), &table(), &cfg).is_err());
        let only_neg = vec!["neg".to_string()];
        assert!(train(&BackendId::Linear, &data, &data, &only_neg, &table(), &cfg).is_err());
        let bad = TrainConfig {
            dropout: 1.0,
            ..cfg.clone()
        };
        assert!(train(&BackendId::Linear, &data, &data, &labels(), &table(), &bad).is_err());
        let blank = vec![inst(0, &[], "neg")];
        assert!(train(&BackendId::Linear, &blank, &data, &labels(), &table(), &cfg).is_err());
        assert!(train(&BackendId::External("nope".into()), &data, &data, &labels(), &table(), &cfg).is_err());
    }

    #[test]
    fn unseen_dev_label_is_recorded() {
        let data = separable();
        let tr: Vec<_> = data.iter().filter(|i| i.label == "neg").cloned().chain([inst(99, &["good"], "pos")]).collect();
        let mut dev = data.clone();
        dev.push(inst(100, &["odd"], "other"));
        let ls = vec!["neg".to_string(), "other".to_string(), "pos".to_string()];
        let model = train(&BackendId::Linear, &tr, &dev, &ls, &table(), &TrainConfig::default()).unwrap();
        assert_eq!(model.meta().unseen_dev_labels, vec!["other".to_string()]);
    }

    fn small_recurrent() -> TrainConfig {
        TrainConfig {
            hidden_size: 8,
            learning_rate: 0.02,
            max_epochs: 40,
            patience: 5,
            batch_size: 4,
            dropout: 0.0,
            recurrent_dropout: 0.0,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn recurrent_learns_separable_toy_and_stops_early() {
        let data = separable();
        let cfg = small_recurrent();
        let model = train(&BackendId::Recurrent, &data, &data, &labels(), &table(), &cfg).unwrap();
        let meta = model.meta();
        assert_eq!(meta.best_dev_f1, 1.0, "history {:?}", meta.dev_f1_history);
        assert!(meta.epochs_run <= meta.best_epoch + cfg.patience);
        assert!(meta.epochs_run <= cfg.max_epochs);
        assert_eq!(f1(&model, &data), 1.0);
    }

    #[test]
    fn recurrent_reproducible_with_dropout() {
        let data = separable();
        let cfg = TrainConfig {
            dropout: 0.3,
            recurrent_dropout: 0.3,
            max_epochs: 3,
            ..small_recurrent()
        };
        let a = train(&BackendId::Recurrent, &data, &data, &labels(), &table(), &cfg).unwrap();
        let b = train(&BackendId::Recurrent, &data, &data, &labels(), &table(), &cfg).unwrap();
        assert_eq!(a.scores(&data), b.scores(&data));
    }

    #[test]
    fn checkpoint_round_trip() {
        let data = separable();
        let dir = tempfile::tempdir().unwrap();
        for (backend, cfg) in [
            (BackendId::Linear, TrainConfig::default()),
            (BackendId::Recurrent, TrainConfig { max_epochs: 2, ..small_recurrent() }),
        ] {
            let model = train(&backend, &data, &data, &labels(), &table(), &cfg).unwrap();
            let path = dir.path().join(backend.to_string());
            model.save(&path).unwrap();
            let back = ClassifierModel::load(&path).unwrap();
            assert_eq!(back.scores(&data), model.scores(&data));
            assert_eq!(back.meta(), model.meta());
            assert_eq!(back.backend(), &backend);
        }
    }

    #[test]
    fn backend_id_strings() {
        for s in ["recurrent", "linear", "external:roberta"] {
            let id: BackendId = s.parse().unwrap();
            assert_eq!(id.to_string(), s);
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(serde_json::from_str::<BackendId>(&json).unwrap(), id);
        }
        assert!("svm".parse::<BackendId>().is_err());
    }

    #[derive(Debug)]
    struct Constant(usize, usize);

    impl ExternalModel for Constant {
        fn scores(&self, instances: &[TransformedInstance]) -> Vec<Vec<f64>> {
            instances
                .iter()
                .map(|_| (0..self.1).map(|k| if k == self.0 { 1.0 } else { 0.0 }).collect())
                .collect()
        }
    }

    struct ConstantBackend;

    impl ExternalBackend for ConstantBackend {
        fn train(
            &self,
            _: &[TransformedInstance],
            _: &[TransformedInstance],
            label_set: &[String],
            _: &EmbeddingTable,
            _: &TrainConfig,
        ) -> Result<Arc<dyn ExternalModel>> {
            Ok(Arc::new(Constant(1, label_set.len())))
        }
    }

    #[test]
    fn external_backend_delegates() {
        register_backend("constant-test", Arc::new(ConstantBackend));
        let data = separable();
        let id = BackendId::External("constant-test".into());
        let model = train(&id, &data, &data, &labels(), &table(), &TrainConfig::default()).unwrap();
        assert!(model.predict(&data).iter().all(|p| p == "pos"));
        assert!(model.save(Path::new("/nonexistent")).is_err());
    }
}
