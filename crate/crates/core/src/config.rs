//! Run configuration: a flat `key = value` file plus overrides.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the config file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::axis::Pooling;
use crate::context::{Method, DEFAULT_CONTEXT_K, DEFAULT_POOL_CAP};
use crate::corpus::{DEFAULT_MIN_CLUSTERS, DEFAULT_RESERVOIR_K, DEFAULT_STRATUM_CAP, DEFAULT_VOCAB_MIN};
use crate::error::{Error, Result};
use crate::lexicon::DEFAULT_MIN_POLE;
use crate::project::{DEFAULT_ALPHA, DEFAULT_BOOTSTRAP};
use crate::timeseries::{DEFAULT_K, DEFAULT_KERNEL, DEFAULT_MAX_ITERS, DEFAULT_RESTARTS};

/// What a monthly frequency is divided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Denominator {
    Documents,
    Tokens,
}

pub const PATH_KEYS: &[&str] = &[
    "db",
    "vocab",
    "term_vocab",
    "wp_vocab",
    "pool",
    "selections",
    "embeddings",
    "static_embeddings",
    "stats_sample",
    "axes",
    "axis_vectors",
    "corpus",
    "documents",
    "pronouns",
    "plurals",
    "terms",
    "targets",
    "categories",
    "groups",
    "background",
    "ideologies",
    "occurrences",
    "series",
    "clusters",
    "scores",
    "out",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub paths: BTreeMap<String, PathBuf>,
    pub method: Method,
    /// Validate every method variant instead of `method` alone.
    pub compare_methods: bool,
    pub zscored: bool,
    pub pooling: Pooling,
    pub seed: u64,
    pub threads: usize,
    pub min_pole: usize,
    pub context_k: usize,
    pub pool_cap: usize,
    pub bootstrap: usize,
    pub alpha: f64,
    pub null_value: Option<f64>,
    pub k: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub smoothing: usize,
    pub fem_threshold: f64,
    pub vocab_min: u64,
    pub min_clusters: u64,
    pub require_each: bool,
    pub reservoir_k: usize,
    pub stratum_cap: usize,
    pub top_k: usize,
    pub denominator: Denominator,
    /// Run the simulated extractor as part of a full run.
    pub toy_extract: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: BTreeMap::new(),
            method: Method::BertProb,
            compare_methods: false,
            zscored: true,
            pooling: Pooling::Contexts,
            seed: 0,
            threads: 1,
            min_pole: DEFAULT_MIN_POLE,
            context_k: DEFAULT_CONTEXT_K,
            pool_cap: DEFAULT_POOL_CAP,
            bootstrap: DEFAULT_BOOTSTRAP,
            alpha: DEFAULT_ALPHA,
            null_value: None,
            k: DEFAULT_K,
            restarts: DEFAULT_RESTARTS,
            max_iters: DEFAULT_MAX_ITERS,
            smoothing: DEFAULT_KERNEL,
            fem_threshold: 0.75,
            vocab_min: DEFAULT_VOCAB_MIN,
            min_clusters: DEFAULT_MIN_CLUSTERS,
            require_each: false,
            reservoir_k: DEFAULT_RESERVOIR_K,
            stratum_cap: DEFAULT_STRATUM_CAP,
            top_k: 2,
            denominator: Denominator::Documents,
            toy_extract: false,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn positive<T: std::str::FromStr + PartialOrd + Default>(key: &str, v: &str) -> Result<T> {
    let x: T = num(key, v)?;
    if x <= T::default() {
        return Err(Error::Config(format!("{key} must be positive, got {v}")));
    }
    Ok(x)
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

impl RunConfig {
    /// Sets one key. `base` resolves relative paths.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let v = value.trim();
        if PATH_KEYS.contains(&key) {
            let p = PathBuf::from(v);
            let p = if p.is_absolute() { p } else { base.join(p) };
            self.paths.insert(key.to_string(), p);
            return Ok(());
        }
        match key {
            "method" => {
                self.method = Method::parse(v).ok_or_else(|| Error::Config(format!("unknown method {v:?}")))?
            }
            "compare_methods" => self.compare_methods = flag(key, v)?,
            "toy_extract" => self.toy_extract = flag(key, v)?,
            "zscored" => self.zscored = flag(key, v)?,
            "pooling" => {
                self.pooling = match v {
                    "contexts" => Pooling::Contexts,
                    "adjective-first" => Pooling::AdjectiveFirst,
                    _ => return Err(Error::Config(format!("unknown pooling {v:?}"))),
                }
            }
            "seed" => self.seed = num(key, v)?,
            "threads" => self.threads = positive(key, v)?,
            "min_pole" => self.min_pole = positive(key, v)?,
            "context_k" => self.context_k = positive(key, v)?,
            "pool_cap" => self.pool_cap = positive(key, v)?,
            "bootstrap" => self.bootstrap = positive(key, v)?,
            "alpha" => {
                let a: f64 = num(key, v)?;
                if !(a > 0.0 && a < 1.0) {
                    return Err(Error::Config(format!("alpha must be in (0, 1), got {v}")));
                }
                self.alpha = a;
            }
            "null_value" => self.null_value = if v.is_empty() { None } else { Some(num(key, v)?) },
            "k" => self.k = positive(key, v)?,
            "restarts" => self.restarts = positive(key, v)?,
            "max_iters" => self.max_iters = positive(key, v)?,
            "smoothing" => {
                let s: usize = positive(key, v)?;
                if s.is_multiple_of(2) {
                    return Err(Error::Config(format!("smoothing must be odd, got {s}")));
                }
                self.smoothing = s;
            }
            "fem_threshold" => {
                let f: f64 = num(key, v)?;
                if !(f > 0.0 && f < 1.0) {
                    return Err(Error::Config(format!("fem_threshold must be in (0, 1), got {v}")));
                }
                self.fem_threshold = f;
            }
            "vocab_min" => self.vocab_min = positive(key, v)?,
            "min_clusters" => self.min_clusters = positive(key, v)?,
            "require_each" => self.require_each = flag(key, v)?,
            "reservoir_k" => self.reservoir_k = positive(key, v)?,
            "stratum_cap" => self.stratum_cap = positive(key, v)?,
            "top_k" => self.top_k = positive(key, v)?,
            "denominator" => {
                self.denominator = match v {
                    "documents" => Denominator::Documents,
                    "tokens" => Denominator::Tokens,
                    _ => return Err(Error::Config(format!("unknown denominator {v:?}"))),
                }
            }
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str, base: &Path) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k.trim(), v, base)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::parse(&fs::read_to_string(path)?, base)
    }

    pub fn path(&self, key: &str) -> Option<&Path> {
        self.paths.get(key).map(PathBuf::as_path)
    }

    /// A path that must be configured.
    pub fn require(&self, key: &str) -> Result<&Path> {
        self.path(key)
            .ok_or_else(|| Error::Config(format!("no `{key}` path configured")))
    }

    /// Canonical `key=value` lines, sorted. Output paths are excluded so
    /// moving the output directory keeps the hash.
    pub fn canonical(&self) -> String {
        let mut kv: BTreeMap<&str, String> = BTreeMap::new();
        for (k, p) in &self.paths {
            if k != "out" {
                kv.insert(k, p.display().to_string());
            }
        }
        kv.insert("method", self.method.name().into());
        kv.insert("compare_methods", self.compare_methods.to_string());
        kv.insert("toy_extract", self.toy_extract.to_string());
        kv.insert("zscored", self.zscored.to_string());
        kv.insert(
            "pooling",
            match self.pooling {
                Pooling::Contexts => "contexts",
                Pooling::AdjectiveFirst => "adjective-first",
            }
            .into(),
        );
        kv.insert("seed", self.seed.to_string());
        kv.insert("min_pole", self.min_pole.to_string());
        kv.insert("context_k", self.context_k.to_string());
        kv.insert("pool_cap", self.pool_cap.to_string());
        kv.insert("bootstrap", self.bootstrap.to_string());
        kv.insert("alpha", self.alpha.to_string());
        kv.insert("null_value", self.null_value.map(|v| v.to_string()).unwrap_or_default());
        kv.insert("k", self.k.to_string());
        kv.insert("restarts", self.restarts.to_string());
        kv.insert("max_iters", self.max_iters.to_string());
        kv.insert("smoothing", self.smoothing.to_string());
        kv.insert("fem_threshold", self.fem_threshold.to_string());
        kv.insert("vocab_min", self.vocab_min.to_string());
        kv.insert("min_clusters", self.min_clusters.to_string());
        kv.insert("require_each", self.require_each.to_string());
        kv.insert("reservoir_k", self.reservoir_k.to_string());
        kv.insert("stratum_cap", self.stratum_cap.to_string());
        kv.insert("top_k", self.top_k.to_string());
        kv.insert(
            "denominator",
            match self.denominator {
                Denominator::Documents => "documents",
                Denominator::Tokens => "tokens",
            }
            .into(),
        );
        kv.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}
