//! Experiment specifications and the replay manifest written next to results.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use roleablate::corpus::{Adapter, SplitRatios};
use roleablate::{AbsentPolicy, BackendId, Error, ExperimentPlan, OovPolicy, Result, Setting, SpecialTokens, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

fn default_adapter() -> String {
    Adapter::CanonicalJsonl.as_str().to_owned()
}

fn default_runs() -> usize {
    1
}

fn default_dim() -> usize {
    300
}

/// One experiment: a dataset, the settings to compare and how to train.
/// Relative paths are resolved against the spec file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub dataset: PathBuf,
    #[serde(default = "default_adapter")]
    pub adapter: String,
    #[serde(default)]
    pub adapter_options: Value,
    #[serde(default)]
    pub label_map: Option<PathBuf>,
    /// Drop instances that carry several labels before mapping.
    #[serde(default = "yes")]
    pub single_label: bool,
    pub settings: Vec<Setting>,
    pub backend: BackendId,
    #[serde(default)]
    pub config: TrainConfig,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Pretrained vectors; without them every token gets a seeded random
    /// vector of `embedding_dim` dimensions.
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    #[serde(default = "default_dim")]
    pub embedding_dim: usize,
    #[serde(default)]
    pub oov: OovPolicy,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub absent_policy: AbsentPolicy,
    #[serde(default)]
    pub specials: SpecialTokens,
    #[serde(default)]
    pub ratios: SplitRatios,
    #[serde(default)]
    pub stratified: bool,
    /// Worker threads; 0 uses every core. Does not affect results.
    #[serde(default)]
    pub jobs: usize,
    /// Save every trained model under `checkpoints/`.
    #[serde(default)]
    pub checkpoints: bool,
}

fn yes() -> bool {
    true
}

fn not_found(path: &Path) -> Error {
    Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"))
}

impl ExperimentSpec {
    /// Spec with defaults for everything but the dataset, settings and backend.
    pub fn new(dataset: impl Into<PathBuf>, settings: Vec<Setting>, backend: BackendId) -> Self {
        ExperimentSpec {
            dataset: dataset.into(),
            adapter: default_adapter(),
            adapter_options: Value::Null,
            label_map: None,
            single_label: true,
            settings,
            backend,
            config: TrainConfig::default(),
            n_runs: 1,
            base_seed: 0,
            embeddings: None,
            embedding_dim: default_dim(),
            oov: OovPolicy::default(),
            output_dir: None,
            absent_policy: AbsentPolicy::default(),
            specials: SpecialTokens::default(),
            ratios: SplitRatios::default(),
            stratified: false,
            jobs: 0,
            checkpoints: false,
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: ExperimentSpec = serde_json::from_str(&text).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: e.line(),
            field: "spec".into(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.resolve_paths(base);
        Ok(spec)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.dataset);
        self.label_map.iter_mut().for_each(join);
        self.embeddings.iter_mut().for_each(join);
        self.output_dir.iter_mut().for_each(join);
    }

    pub fn adapter(&self) -> Result<Adapter> {
        self.adapter.parse()
    }

    /// Checks everything that can be checked without loading data.
    pub fn validate(&self) -> Result<()> {
        self.adapter()?;
        for path in [Some(&self.dataset), self.label_map.as_ref(), self.embeddings.as_ref()]
            .into_iter()
            .flatten()
        {
            if !path.exists() {
                return Err(not_found(path));
            }
        }
        if self.settings.is_empty() {
            return Err(Error::InvalidConfig("settings must not be empty".into()));
        }
        if self.embedding_dim == 0 {
            return Err(Error::InvalidConfig("embedding_dim must be positive".into()));
        }
        self.plan().validate()
    }

    pub fn plan(&self) -> ExperimentPlan {
        ExperimentPlan {
            specials: self.specials.clone(),
            absent_policy: self.absent_policy,
            ratios: self.ratios,
            stratified: self.stratified,
            jobs: self.jobs,
            keep_models: self.checkpoints,
            ..ExperimentPlan::new(
                self.settings.clone(),
                self.backend.clone(),
                self.config.clone(),
                self.n_runs,
                self.base_seed,
            )
        }
    }

    fn inputs(&self) -> Vec<(&'static str, &Path)> {
        let mut out = vec![("dataset", self.dataset.as_path())];
        if let Some(p) = &self.label_map {
            out.push(("label_map", p));
        }
        if let Some(p) = &self.embeddings {
            out.push(("embeddings", p));
        }
        out
    }
}

/// SHA-256 of a file, or of every file below a directory in path order
/// (relative name and content both enter the digest).
pub fn hash_path(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, &mut files)?;
        files.sort();
        for file in files {
            let rel = file.strip_prefix(path).unwrap_or(&file);
            hasher.update(rel.to_string_lossy().as_bytes());
            hasher.update([0]);
            hash_file(&file, &mut hasher)?;
        }
    } else {
        hash_file(path, &mut hasher)?;
    }
    Ok(hex::encode(hasher.finalize()))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

fn hash_file(path: &Path, hasher: &mut Sha256) -> Result<()> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Ok(());
        }
        hasher.update(&buf[..n]);
    }
}

/// Everything needed to repeat a run: the spec with absolute paths, the
/// seed of every run and digests of the inputs. Holds no timestamps, so
/// replays write identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub spec: ExperimentSpec,
    pub run_seeds: Vec<u64>,
    pub inputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(spec: &ExperimentSpec) -> Result<Self> {
        let mut spec = spec.clone();
        let absolute = |p: &mut PathBuf| {
            if let Ok(abs) = std::path::absolute(&*p) {
                *p = abs;
            }
        };
        absolute(&mut spec.dataset);
        spec.label_map.iter_mut().for_each(absolute);
        spec.embeddings.iter_mut().for_each(absolute);
        spec.output_dir = None;
        let plan = spec.plan();
        let run_seeds = (0..spec.n_runs).map(|k| plan.run_seed(k)).collect();
        let inputs = spec
            .inputs()
            .into_iter()
            .map(|(name, path)| Ok((name.to_owned(), hash_path(path)?)))
            .collect::<Result<_>>()?;
        Ok(Manifest {
            version: env!("CARGO_PKG_VERSION").to_owned(),
            spec,
            run_seeds,
            inputs,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: e.line(),
            field: "manifest".into(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// Fails when an input changed since the manifest was written or the
    /// recorded seeds disagree with the spec.
    pub fn verify(&self) -> Result<()> {
        self.spec.validate()?;
        let fresh = Manifest::new(&self.spec)?;
        for (name, digest) in &self.inputs {
            match fresh.inputs.get(name) {
                Some(d) if d == digest => {}
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "input `{name}` differs from the manifest digest"
                    )))
                }
            }
        }
        if fresh.run_seeds != self.run_seeds {
            return Err(Error::InvalidConfig("manifest seeds do not match base_seed and n_runs".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use roleablate::RoleKind;

    #[test]
    fn minimal_spec_parses_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("data.jsonl"), "").unwrap();
        let path = dir.path().join("spec.json");
        fs::write(
            &path,
            r#"{"dataset": "data.jsonl", "settings": ["as-is", "without:cue"], "backend": "linear"}"#,
        )
        .unwrap();
        let spec = ExperimentSpec::from_path(&path).unwrap();
        assert_eq!(spec.dataset, dir.path().join("data.jsonl"));
        assert_eq!(spec.settings, vec![Setting::AsIs, Setting::Without(RoleKind::Cue)]);
        assert_eq!(spec.n_runs, 1);
        assert_eq!(spec.embedding_dim, 300);
        spec.validate().unwrap();
    }

    #[test]
    fn validation_failures_are_input_errors() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data.jsonl");
        fs::write(&data, "").unwrap();
        let mut spec = ExperimentSpec::new(&data, vec![Setting::Only(RoleKind::Cue)], BackendId::Linear);
        assert!(spec.validate().unwrap_err().is_input_error());
        spec.settings.clear();
        assert!(spec.validate().unwrap_err().is_input_error());
        spec.settings = vec![Setting::AsIs];
        spec.label_map = Some(dir.path().join("missing.json"));
        let err = spec.validate().unwrap_err();
        assert!(err.to_string().contains("missing.json"));
        spec.label_map = None;
        spec.adapter = "xml".into();
        assert!(matches!(spec.validate(), Err(Error::UnknownAdapter(_))));
    }

    #[test]
    fn manifest_tracks_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data.jsonl");
        fs::write(&data, "a").unwrap();
        let spec = ExperimentSpec {
            n_runs: 3,
            base_seed: 10,
            ..ExperimentSpec::new(&data, vec![Setting::AsIs], BackendId::Linear)
        };
        let manifest = Manifest::new(&spec).unwrap();
        assert_eq!(manifest.run_seeds, vec![10, 11, 12]);
        // Digest of "a".
        assert_eq!(
            manifest.inputs["dataset"],
            "ca978112ca1bbdcafac231b39a23dc4da786eff8147c4e72b9807785afee48bb"
        );
        let back: Manifest = serde_json::from_str(&manifest.to_json()).unwrap();
        assert_eq!(back, manifest);
        back.verify().unwrap();
        fs::write(&data, "b").unwrap();
        assert!(back.verify().is_err());
    }

    #[test]
    fn directory_digest_depends_on_names_and_content() {
        let a = tempfile::tempdir().unwrap();
        fs::write(a.path().join("x.txt"), "1").unwrap();
        let first = hash_path(a.path()).unwrap();
        fs::rename(a.path().join("x.txt"), a.path().join("y.txt")).unwrap();
        assert_ne!(first, hash_path(a.path()).unwrap());
    }
}
