//! On-disk workspace: run configuration, artifact layout, and the stamps
//! that tie every derived artifact to the inputs and settings it was built
//! from.
//!
//! ```text
//! <root>/clav.conf                      run configuration (optional)
//! <root>/corpus.plex.jsonl              ingested corpus
//! <root>/heatmaps/<doc>.heatmap.csv     term-match counts (+ .truth.json)
//! <root>/topics/k<K>.clat               fitted topic model (+ .coherence.json)
//! <root>/topics/select-k.json           coherence sweep
//! <root>/models/pvdbow.bin              trained paragraph vectors
//! <root>/models/import-<name>.vec       imported vectors
//! <root>/indexes/<backend>.idx          paragraph index per backend
//! <root>/queries.jsonl                  last query set searched
//! <root>/results/<backend>.jsonl        result bundle per backend
//! <root>/communities/<backend>.json     detected communities
//! <root>/judgments.jsonl                relevance judgment log
//! <root>/reports/eval.{json,csv}        evaluation report
//! <root>/ui/                            static workbench bundle
//! ```
//!
//! Each artifact `X` that depends on settings has a sibling `X.stamp`
//! holding a SHA-256 over everything that produced it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::corpus::{ingest_corpus, sha256_hex, Corpus, IngestOptions};
use crate::embed::{fit_tfidf, EmbeddingBackend, ImportBackend, PvDbow, PvDbowParams, VectorIndex};
use crate::error::{Error, Result};
use crate::simsearch::ResultBundle;
use crate::textprep::{NormalizationConfig, Normalizer};
use crate::topics::{LdaParams, TopicDocument, TopicModel};

pub const ENV_WORKSPACE: &str = "CLAV_WORKSPACE";
pub const DEFAULT_WORKSPACE: &str = ".clav";
pub const CONFIG_FILE: &str = "clav.conf";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopicUnit {
    Document,
    Paragraph,
}

/// Every setting of a pipeline run. Serialized as flat `key = value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub min_chars: usize,
    pub normalization: NormalizationConfig,
    pub backend: String,
    pub pvdbow: PvDbowParams,
    pub lda_k: usize,
    /// `None` means `50 / k`.
    pub lda_alpha: Option<f64>,
    pub lda_beta: f64,
    pub lda_iterations: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub coherence_top_n: usize,
    pub topic_unit: TopicUnit,
    pub keyword_top_n: usize,
    pub keyword_theta: f64,
    pub top_k: usize,
    pub community_threshold: f64,
    pub community_min_size: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            min_chars: IngestOptions::default().min_chars,
            normalization: NormalizationConfig::default(),
            backend: "tfidf".into(),
            pvdbow: PvDbowParams::default(),
            lda_k: 10,
            lda_alpha: None,
            lda_beta: 0.01,
            lda_iterations: 1000,
            k_min: 2,
            k_max: 30,
            coherence_top_n: 10,
            topic_unit: TopicUnit::Document,
            keyword_top_n: 10,
            keyword_theta: 0.1,
            top_k: 20,
            community_threshold: 0.75,
            community_min_size: 2,
            seed: 1,
        }
    }
}

pub const NORMALIZATION_KEYS: &[&str] = &[
    "lowercase",
    "stopwords",
    "stem",
    "stem_rules",
    "min_len",
    "keep_numeric",
    "lexicon",
    "lexicon_strict",
];
pub const KEYS: &[&str] = &[
    "min_chars",
    "lowercase",
    "stopwords",
    "stem",
    "stem_rules",
    "min_len",
    "keep_numeric",
    "lexicon",
    "lexicon_strict",
    "backend",
    "pvdbow.dim",
    "pvdbow.epochs",
    "pvdbow.negative",
    "pvdbow.lr",
    "pvdbow.min_count",
    "pvdbow.infer_steps",
    "lda.k",
    "lda.alpha",
    "lda.beta",
    "lda.iterations",
    "lda.k_min",
    "lda.k_max",
    "lda.top_n",
    "lda.unit",
    "keywords.top_n",
    "keywords.theta",
    "search.top_k",
    "communities.threshold",
    "communities.min_size",
    "seed",
];

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn at_least(key: &str, value: &str, min: usize) -> Result<usize> {
    let v: usize = parse_value(key, value)?;
    if v < min {
        return Err(Error::Config(format!("`{key}` must be at least {min}")));
    }
    Ok(v)
}

fn positive(key: &str, value: &str) -> Result<f64> {
    let v: f64 = parse_value(key, value)?;
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Config(format!("`{key}` must be a positive number")));
    }
    Ok(v)
}

/// A number in [0, 1], or in (0, 1] when `open_low`.
fn fraction(key: &str, value: &str, open_low: bool) -> Result<f64> {
    let v: f64 = parse_value(key, value)?;
    let low_ok = if open_low { v > 0.0 } else { v >= 0.0 };
    if !(low_ok && v <= 1.0) {
        let range = if open_low { "(0, 1]" } else { "[0, 1]" };
        return Err(Error::Config(format!("`{key}` must lie in {range}")));
    }
    Ok(v)
}

fn parse_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Parses `key = value` lines over the defaults. Blank lines and `#`
    /// comments are skipped; unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    /// Reads a config file. Relative resource paths are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let n = &mut cfg.normalization;
        for p in [&mut n.stopword_path, &mut n.stem_rules_path, &mut n.content_lexicon_path]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let n = &mut self.normalization;
        match key {
            "min_chars" => self.min_chars = parse_value(key, value)?,
            "lowercase" => n.lowercase = parse_value(key, value)?,
            "stopwords" => n.stopword_path = parse_path(value),
            "stem" => n.stem = parse_value(key, value)?,
            "stem_rules" => n.stem_rules_path = parse_path(value),
            "min_len" => n.min_len = parse_value(key, value)?,
            "keep_numeric" => n.keep_numeric = parse_value(key, value)?,
            "lexicon" => n.content_lexicon_path = parse_path(value),
            "lexicon_strict" => n.lexicon_strict = parse_value(key, value)?,
            "backend" => {
                check_backend_id(value)?;
                self.backend = value.to_owned();
            }
            "pvdbow.dim" => self.pvdbow.dim = at_least(key, value, 1)?,
            "pvdbow.epochs" => self.pvdbow.epochs = at_least(key, value, 1)?,
            "pvdbow.negative" => self.pvdbow.negative = at_least(key, value, 1)?,
            "pvdbow.lr" => self.pvdbow.lr0 = positive(key, value)?,
            "pvdbow.min_count" => self.pvdbow.min_count = at_least(key, value, 1)? as u64,
            "pvdbow.infer_steps" => self.pvdbow.infer_steps = at_least(key, value, 1)?,
            "lda.k" => self.lda_k = at_least(key, value, 2)?,
            "lda.alpha" => {
                self.lda_alpha = match value {
                    "" | "auto" => None,
                    v => Some(positive(key, v)?),
                }
            }
            "lda.beta" => self.lda_beta = positive(key, value)?,
            "lda.iterations" => self.lda_iterations = at_least(key, value, 1)?,
            "lda.k_min" => self.k_min = at_least(key, value, 2)?,
            "lda.k_max" => self.k_max = at_least(key, value, 2)?,
            "lda.top_n" => self.coherence_top_n = at_least(key, value, 2)?,
            "lda.unit" => {
                self.topic_unit = match value {
                    "document" => TopicUnit::Document,
                    "paragraph" => TopicUnit::Paragraph,
                    _ => return Err(Error::Config(format!("`{key}` must be `document` or `paragraph`"))),
                }
            }
            "keywords.top_n" => self.keyword_top_n = at_least(key, value, 1)?,
            "keywords.theta" => self.keyword_theta = fraction(key, value, false)?,
            "search.top_k" => self.top_k = at_least(key, value, 1)?,
            "communities.threshold" => self.community_threshold = fraction(key, value, true)?,
            "communities.min_size" => self.community_min_size = at_least(key, value, 1)?,
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Canonical text form of one key's value.
    pub fn get(&self, key: &str) -> Option<String> {
        let n = &self.normalization;
        Some(match key {
            "min_chars" => self.min_chars.to_string(),
            "lowercase" => n.lowercase.to_string(),
            "stopwords" => show_path(&n.stopword_path),
            "stem" => n.stem.to_string(),
            "stem_rules" => show_path(&n.stem_rules_path),
            "min_len" => n.min_len.to_string(),
            "keep_numeric" => n.keep_numeric.to_string(),
            "lexicon" => show_path(&n.content_lexicon_path),
            "lexicon_strict" => n.lexicon_strict.to_string(),
            "backend" => self.backend.clone(),
            "pvdbow.dim" => self.pvdbow.dim.to_string(),
            "pvdbow.epochs" => self.pvdbow.epochs.to_string(),
            "pvdbow.negative" => self.pvdbow.negative.to_string(),
            "pvdbow.lr" => self.pvdbow.lr0.to_string(),
            "pvdbow.min_count" => self.pvdbow.min_count.to_string(),
            "pvdbow.infer_steps" => self.pvdbow.infer_steps.to_string(),
            "lda.k" => self.lda_k.to_string(),
            "lda.alpha" => self.lda_alpha.map_or("auto".into(), |a| a.to_string()),
            "lda.beta" => self.lda_beta.to_string(),
            "lda.iterations" => self.lda_iterations.to_string(),
            "lda.k_min" => self.k_min.to_string(),
            "lda.k_max" => self.k_max.to_string(),
            "lda.top_n" => self.coherence_top_n.to_string(),
            "lda.unit" => match self.topic_unit {
                TopicUnit::Document => "document".into(),
                TopicUnit::Paragraph => "paragraph".into(),
            },
            "keywords.top_n" => self.keyword_top_n.to_string(),
            "keywords.theta" => self.keyword_theta.to_string(),
            "search.top_k" => self.top_k.to_string(),
            "communities.threshold" => self.community_threshold.to_string(),
            "communities.min_size" => self.community_min_size.to_string(),
            "seed" => self.seed.to_string(),
            _ => return None,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("listed key"));
        }
        out
    }

    /// `key=value` lines of the given keys, for stamping.
    pub fn section(&self, keys: &[&str]) -> String {
        let mut out = String::new();
        for key in keys {
            let _ = writeln!(out, "{key}={}", self.get(key).expect("known key"));
        }
        out
    }

    pub fn ingest_options(&self) -> IngestOptions {
        IngestOptions {
            min_chars: self.min_chars,
        }
    }

    pub fn pvdbow_params(&self) -> PvDbowParams {
        PvDbowParams {
            seed: self.seed,
            ..self.pvdbow
        }
    }

    pub fn lda_params(&self, k: usize) -> LdaParams {
        let mut p = LdaParams::new(k, self.seed);
        if let Some(a) = self.lda_alpha {
            p.alpha = a;
        }
        p.beta = self.lda_beta;
        p.iterations = self.lda_iterations;
        p
    }
}

pub fn check_backend_id(id: &str) -> Result<()> {
    match id {
        "tfidf" | "pvdbow" => Ok(()),
        _ => match id.strip_prefix("import:") {
            Some(name) if !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') => {
                Ok(())
            }
            _ => Err(Error::Config(format!(
                "backend must be `tfidf`, `pvdbow` or `import:<name>` (name of letters, digits, - or _), got `{id}`"
            ))),
        },
    }
}

/// File-name form of a backend id (`import:x` becomes `import-x`).
pub fn backend_file_name(id: &str) -> String {
    id.replace(':', "-")
}

/// Hash over labelled parts.
pub fn stamp(parts: &[(&str, &str)]) -> String {
    let mut text = String::new();
    for (label, value) in parts {
        let _ = writeln!(text, "{label}\t{value}");
    }
    sha256_hex(text.as_bytes())
}

fn stamp_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".stamp");
    PathBuf::from(name)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn at(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    /// Explicit path, else `$CLAV_WORKSPACE`, else `./.clav`.
    pub fn resolve(explicit: Option<&Path>) -> Self {
        let root = explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(ENV_WORKSPACE).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_WORKSPACE));
        Workspace { root }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn init(&self) -> Result<()> {
        for dir in ["heatmaps", "topics", "models", "indexes", "results", "communities", "reports"] {
            fs::create_dir_all(self.root.join(dir))?;
        }
        Ok(())
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join(CONFIG_FILE)
    }

    /// The workspace config, or defaults when there is none.
    pub fn config(&self) -> Result<RunConfig> {
        let path = self.config_path();
        if path.exists() {
            RunConfig::load(&path)
        } else {
            Ok(RunConfig::default())
        }
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.root.join("corpus.plex.jsonl")
    }
    pub fn heatmap_dir(&self) -> PathBuf {
        self.root.join("heatmaps")
    }
    pub fn topic_model_path(&self, k: usize) -> PathBuf {
        self.root.join("topics").join(format!("k{k}.clat"))
    }
    pub fn coherence_path(&self, k: usize) -> PathBuf {
        self.root.join("topics").join(format!("k{k}.coherence.json"))
    }
    pub fn select_k_path(&self) -> PathBuf {
        self.root.join("topics").join("select-k.json")
    }
    pub fn pvdbow_path(&self) -> PathBuf {
        self.root.join("models").join("pvdbow.bin")
    }
    pub fn import_path(&self, name: &str) -> PathBuf {
        self.root.join("models").join(format!("import-{name}.vec"))
    }
    pub fn index_path(&self, backend_id: &str) -> PathBuf {
        self.root.join("indexes").join(format!("{}.idx", backend_file_name(backend_id)))
    }
    pub fn queries_path(&self) -> PathBuf {
        self.root.join("queries.jsonl")
    }
    pub fn bundle_path(&self, backend_id: &str) -> PathBuf {
        self.root.join("results").join(format!("{}.jsonl", backend_file_name(backend_id)))
    }
    pub fn communities_path(&self, backend_id: &str) -> PathBuf {
        self.root.join("communities").join(format!("{}.json", backend_file_name(backend_id)))
    }
    pub fn judgments_path(&self) -> PathBuf {
        self.root.join("judgments.jsonl")
    }
    pub fn report_json_path(&self) -> PathBuf {
        self.root.join("reports").join("eval.json")
    }
    pub fn report_csv_path(&self) -> PathBuf {
        self.root.join("reports").join("eval.csv")
    }
    pub fn ui_dir(&self) -> PathBuf {
        self.root.join("ui")
    }

    /// Writes an artifact and its stamp.
    pub fn write_artifact(&self, path: &Path, bytes: &[u8], stamp: &str) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, bytes)?;
        fs::write(stamp_path(path), format!("{stamp}\n"))?;
        Ok(())
    }

    pub fn read_stamp(&self, path: &Path) -> Option<String> {
        fs::read_to_string(stamp_path(path)).ok().map(|s| s.trim().to_owned())
    }

    /// Errors unless the artifact exists and carries the expected stamp.
    pub fn check_artifact(&self, path: &Path, expected: &str, what: &str, command: &str) -> Result<()> {
        if !path.exists() {
            return Err(Error::Missing {
                artifact: format!("{what} ({})", path.display()),
                command: command.into(),
            });
        }
        if self.read_stamp(path).as_deref() != Some(expected) {
            return Err(Error::Stale {
                artifact: format!("{what} ({})", path.display()),
                command: command.into(),
            });
        }
        Ok(())
    }

    pub fn corpus_stamp(cfg: &RunConfig) -> String {
        stamp(&[("corpus", &cfg.section(&["min_chars"]))])
    }

    pub fn save_corpus(&self, cfg: &RunConfig, corpus: &Corpus) -> Result<()> {
        self.write_artifact(&self.corpus_path(), corpus.to_records().as_bytes(), &Self::corpus_stamp(cfg))
    }

    pub fn load_corpus(&self, cfg: &RunConfig) -> Result<Corpus> {
        let path = self.corpus_path();
        self.check_artifact(&path, &Self::corpus_stamp(cfg), "corpus", "ingest <source>")?;
        ingest_corpus(&path, &cfg.ingest_options())
    }

    /// Stamp of the normalized paragraph tokens everything downstream sees.
    pub fn tokens_stamp(cfg: &RunConfig, corpus: &Corpus) -> String {
        stamp(&[
            ("corpus", &corpus.checksum()),
            ("normalization", &cfg.section(NORMALIZATION_KEYS)),
        ])
    }

    /// A model's stamp covers its inputs only. Its own hyperparameters
    /// describe the model, so refitting with other settings is a choice, not
    /// a staleness.
    pub fn pvdbow_stamp(cfg: &RunConfig, corpus: &Corpus) -> String {
        stamp(&[("tokens", &Self::tokens_stamp(cfg, corpus))])
    }

    pub fn load_pvdbow(&self, cfg: &RunConfig, corpus: &Corpus) -> Result<PvDbow> {
        let path = self.pvdbow_path();
        self.check_artifact(&path, &Self::pvdbow_stamp(cfg, corpus), "PV-DBOW model", "embed train")?;
        let bytes = fs::read(&path).map_err(|e| Error::read(&path, e))?;
        PvDbow::read_from(&mut bytes.as_slice())
    }

    /// Copies an import file into the workspace after checking it against
    /// the corpus.
    pub fn save_import(&self, name: &str, source: &Path, corpus: &Corpus) -> Result<ImportBackend> {
        check_backend_id(&format!("import:{name}"))?;
        let bytes = fs::read(source).map_err(|e| Error::read(source, e))?;
        let backend = ImportBackend::read_from(name, &mut bytes.as_slice())?;
        backend
            .check_keys(corpus)
            .map_err(|e| Error::Format(format!("{}: {e}", source.display())))?;
        let s = stamp(&[("import", &sha256_hex(&bytes))]);
        self.write_artifact(&self.import_path(name), &bytes, &s)?;
        Ok(backend)
    }

    /// Opens the embedding backend with the given id.
    pub fn open_backend(
        &self,
        cfg: &RunConfig,
        corpus: &Corpus,
        normalizer: &Normalizer,
        backend_id: &str,
    ) -> Result<Box<dyn EmbeddingBackend>> {
        check_backend_id(backend_id)?;
        match backend_id {
            "tfidf" => {
                let tokens: Vec<Vec<String>> = corpus.paragraphs().iter().map(|p| normalizer.terms(&p.text)).collect();
                Ok(Box::new(fit_tfidf(&tokens)?))
            }
            "pvdbow" => Ok(Box::new(self.load_pvdbow(cfg, corpus)?)),
            id => {
                let name = id.strip_prefix("import:").expect("checked above");
                let path = self.import_path(name);
                if !path.exists() {
                    return Err(Error::Missing {
                        artifact: format!("imported vectors `{name}`"),
                        command: format!("embed import --name {name} <file>"),
                    });
                }
                Ok(Box::new(ImportBackend::open(name, &path)?))
            }
        }
    }

    /// Stamp identifying the backend's state; part of its index stamp.
    pub fn backend_stamp(&self, cfg: &RunConfig, corpus: &Corpus, backend_id: &str) -> Result<String> {
        let inner = match backend_id {
            "tfidf" => Self::tokens_stamp(cfg, corpus),
            "pvdbow" => {
                let path = self.pvdbow_path();
                let bytes = fs::read(&path).map_err(|_| Error::Missing {
                    artifact: format!("PV-DBOW model ({})", path.display()),
                    command: "embed train".into(),
                })?;
                stamp(&[("tokens", &Self::tokens_stamp(cfg, corpus)), ("model", &sha256_hex(&bytes))])
            }
            id => {
                let name = id.strip_prefix("import:").unwrap_or(id);
                let file = self.read_stamp(&self.import_path(name)).ok_or_else(|| Error::Missing {
                    artifact: format!("imported vectors `{name}`"),
                    command: format!("embed import --name {name} <file>"),
                })?;
                stamp(&[("corpus", &corpus.checksum()), ("file", &file)])
            }
        };
        Ok(stamp(&[("backend", backend_id), ("state", &inner)]))
    }

    pub fn save_index(&self, cfg: &RunConfig, corpus: &Corpus, index: &VectorIndex) -> Result<()> {
        let s = self.backend_stamp(cfg, corpus, &index.backend_id)?;
        self.write_artifact(&self.index_path(&index.backend_id), &index.to_bytes(), &s)
    }

    pub fn load_index(&self, cfg: &RunConfig, corpus: &Corpus, backend_id: &str) -> Result<VectorIndex> {
        let path = self.index_path(backend_id);
        let expected = self.backend_stamp(cfg, corpus, backend_id)?;
        self.check_artifact(&path, &expected, &format!("`{backend_id}` index"), &format!("index --backend {backend_id}"))?;
        let bytes = fs::read(&path).map_err(|e| Error::read(&path, e))?;
        VectorIndex::read_from(&mut bytes.as_slice())
    }

    /// Ids of the imported backends, sorted.
    pub fn imported_backends(&self) -> Vec<String> {
        let mut out: Vec<String> = fs::read_dir(self.root.join("models"))
            .into_iter()
            .flatten()
            .flatten()
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                let inner = name.strip_prefix("import-")?.strip_suffix(".vec")?;
                Some(format!("import:{inner}"))
            })
            .collect();
        out.sort();
        out
    }

    /// Backends that can serve searches: TF-IDF always, PV-DBOW once
    /// trained, and every import.
    pub fn available_backends(&self) -> Vec<String> {
        let mut out = vec!["tfidf".to_string()];
        if self.pvdbow_path().exists() {
            out.push("pvdbow".into());
        }
        out.extend(self.imported_backends());
        out.sort();
        out
    }

    pub fn bundle_stamp(index_stamp: &str, cfg: &RunConfig, queries_jsonl: &str) -> String {
        stamp(&[
            ("index", index_stamp),
            ("search", &cfg.section(&["search.top_k"])),
            ("queries", &sha256_hex(queries_jsonl.as_bytes())),
        ])
    }

    /// All result bundles, ordered by backend id.
    pub fn load_bundles(&self) -> Result<Vec<ResultBundle>> {
        let dir = self.root.join("results");
        let mut paths: Vec<PathBuf> = match fs::read_dir(&dir) {
            Ok(entries) => entries
                .flatten()
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                .collect(),
            Err(_) => Vec::new(),
        };
        paths.sort();
        let mut bundles = paths.iter().map(|p| ResultBundle::read(p)).collect::<Result<Vec<_>>>()?;
        bundles.sort_by(|a, b| a.backend.cmp(&b.backend));
        Ok(bundles)
    }

    pub fn topic_documents(cfg: &RunConfig, corpus: &Corpus, normalizer: &Normalizer) -> Vec<TopicDocument> {
        match cfg.topic_unit {
            TopicUnit::Paragraph => corpus
                .paragraphs()
                .iter()
                .map(|p| TopicDocument {
                    id: p.reference.key(),
                    tokens: normalizer.terms(&p.text),
                })
                .collect(),
            TopicUnit::Document => corpus
                .documents()
                .iter()
                .map(|d| TopicDocument {
                    id: d.id.clone(),
                    tokens: corpus
                        .document_paragraphs(&d.id)
                        .iter()
                        .flat_map(|p| normalizer.terms(&p.text))
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn topics_stamp(cfg: &RunConfig, corpus: &Corpus, k: usize) -> String {
        stamp(&[
            ("tokens", &Self::tokens_stamp(cfg, corpus)),
            ("unit", &cfg.section(&["lda.unit"])),
            ("k", &k.to_string()),
        ])
    }

    pub fn load_topic_model(&self, cfg: &RunConfig, corpus: &Corpus, k: usize) -> Result<TopicModel> {
        let path = self.topic_model_path(k);
        self.check_artifact(
            &path,
            &Self::topics_stamp(cfg, corpus, k),
            &format!("k={k} topic model"),
            &format!("topics fit --k {k}"),
        )?;
        let bytes = fs::read(&path).map_err(|e| Error::read(&path, e))?;
        TopicModel::read_from(&mut bytes.as_slice())
    }

    /// Topic counts with a fitted model on disk, ascending.
    pub fn fitted_topic_counts(&self) -> Vec<usize> {
        let mut ks: Vec<usize> = fs::read_dir(self.root.join("topics"))
            .into_iter()
            .flatten()
            .flatten()
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                name.strip_prefix('k')?.strip_suffix(".clat")?.parse().ok()
            })
            .collect();
        ks.sort_unstable();
        ks
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_and_rejects_unknown_keys() {
        let mut cfg = RunConfig::default();
        cfg.set("pvdbow.dim", "50").unwrap();
        cfg.set("lda.alpha", "0.5").unwrap();
        cfg.set("backend", "import:sbert").unwrap();
        cfg.set("stopwords", "/tmp/sw.txt").unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert!(RunConfig::parse("nope = 1").is_err());
        assert!(RunConfig::parse("seed").is_err());
        assert!(RunConfig::parse("seed = x").is_err());
        assert!(RunConfig::parse("backend = import:").is_err());
        let parsed = RunConfig::parse("# comment\n\nseed = 7\nlda.unit = paragraph\n").unwrap();
        assert_eq!(parsed.seed, 7);
        assert_eq!(parsed.topic_unit, TopicUnit::Paragraph);
        assert_eq!(parsed.pvdbow_params().seed, 7);
    }

    #[test]
    fn out_of_range_values_are_config_errors() {
        let mut cfg = RunConfig::default();
        for (k, v) in [
            ("lda.beta", "-1"),
            ("lda.beta", "0"),
            ("lda.alpha", "NaN"),
            ("lda.k", "1"),
            ("pvdbow.dim", "0"),
            ("pvdbow.lr", "inf"),
            ("keywords.theta", "1.5"),
            ("communities.threshold", "0"),
            ("search.top_k", "0"),
        ] {
            assert!(matches!(cfg.set(k, v), Err(Error::Config(_))), "{k}={v}");
        }
        cfg.set("keywords.theta", "0").unwrap();
        cfg.set("communities.threshold", "1").unwrap();
        assert_eq!(cfg.get("communities.threshold").unwrap(), "1");
    }

    #[test]
    fn relative_resource_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clav.conf");
        fs::write(&path, "stopwords = sw.txt\nlexicon = /abs/lex.txt\n").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.normalization.stopword_path, Some(dir.path().join("sw.txt")));
        assert_eq!(cfg.normalization.content_lexicon_path, Some(PathBuf::from("/abs/lex.txt")));
    }

    #[test]
    fn missing_and_stale_artifacts_name_the_command() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::at(dir.path());
        let mut cfg = RunConfig::default();
        let err = ws.load_corpus(&cfg).unwrap_err();
        assert!(err.to_string().contains("clav ingest"), "{err}");

        let corpus = Corpus::default();
        ws.save_corpus(&cfg, &corpus).unwrap();
        assert_eq!(ws.load_corpus(&cfg).unwrap(), corpus);
        cfg.min_chars = 5;
        let err = ws.load_corpus(&cfg).unwrap_err();
        assert!(matches!(err, Error::Stale { .. }), "{err}");
    }

    #[test]
    fn backend_ids() {
        assert!(check_backend_id("tfidf").is_ok());
        assert!(check_backend_id("import:sbert-v2").is_ok());
        assert!(check_backend_id("import:a/b").is_err());
        assert!(check_backend_id("bm25").is_err());
        assert_eq!(backend_file_name("import:x"), "import-x");
    }
}
