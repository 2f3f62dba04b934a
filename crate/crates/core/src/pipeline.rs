//! Stage orchestration.
//!
//! Each stage writes into `out/<stage>.partial/`, which is renamed to
//! `out/<stage>/` on success and left in place on failure. `out/manifest.json`
//! records, per stage, the config hash, root seed and SHA-256 digests of
//! every input and output file. Stages read earlier stages' outputs from
//! their default locations unless the config names a path.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::axis::{read_axis_store, realize_all, write_axis_store, gather_pole, Axis, EmbeddingSource, RealizeOptions, Realized};
use crate::config::{Denominator, RunConfig};
use crate::context::{read_context_records, select_for_axis, write_selections, ContextPool, Method, SelectionParams};
use crate::corpus::{
    build_vocab, find_occurrences, ingest, monthly_counts, monthly_token_counts, read_documents, read_occurrences,
    read_plural_map, read_pronoun_counts, read_raw_corpus, read_vocab, replace_target, stratified_sample,
    term_doc_counts, vocab_to_tsv, write_documents, write_occurrences, GenderWordlist, LeaningInputs, LeaningParams,
    NumberLexicon, Occurrence, PronounCounts,
};
use crate::embedding::{compute_set_stats, mean_pool, split_key, Embedding, EmbeddingSet, ZScoreStats};
use crate::error::{Error, Result};
use crate::format::{load_embeddings, write_embeddings};
use crate::lexicon::{build_axes, read_axes, read_word_list, write_axes, AxisSpec, SynsetDb};
use crate::plot::{bar_chart, line_chart, Bar, LineSeries};
use crate::project::{
    axis_score, contrast_experiment, contrast_to_tsv, mean_difference_ranking, mean_difference_to_tsv, rank_poles,
    AxisGroups, ContrastParams,
};
use crate::rng::derive_seed;
use crate::stats::mean;
use crate::timeseries::{
    build_series, cluster_axis_profile, cluster_series, profile_to_tsv, rank_axis_variance, read_series, series_to_tsv,
    smooth, ClusterOutput, KscParams,
};
use crate::validate::{compare_methods, consistency_report, reports_to_tsv, summarize_method, ConsistencyReport};

/// Stages in the order a full run executes them.
pub const STAGES: &[&str] = &[
    "build-lexicon",
    "select-contexts",
    "build-axes",
    "validate",
    "ingest",
    "vocab",
    "sample",
    "toy-extract",
    "project",
    "contrast",
    "variants",
    "timeline",
    "cluster",
    "report",
];

const ALL_METHODS: [Method; 3] = [Method::Glove, Method::BertDefault, Method::BertProb];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    pub root_seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        if !path.exists() {
            return Ok(Manifest::default());
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

#[derive(Serialize, Deserialize)]
struct StoredStats {
    mean: Vec<f64>,
    std: Vec<f64>,
    sample_count: usize,
}

fn write_stats(path: &Path, s: &ZScoreStats) -> Result<()> {
    let stored = StoredStats {
        mean: s.mean().to_vec(),
        std: s.std().to_vec(),
        sample_count: s.sample_count(),
    };
    fs::write(path, serde_json::to_string_pretty(&stored)?)?;
    Ok(())
}

fn read_stats(path: &Path) -> Result<ZScoreStats> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let s: StoredStats = serde_json::from_str(&fs::read_to_string(path)?)?;
    ZScoreStats::new(s.mean, s.std, s.sample_count)
}

/// One term per line (multi-word terms allowed), lowercased; `#` comments.
pub fn read_terms(path: &Path) -> Result<Vec<String>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut seen = HashSet::new();
    Ok(fs::read_to_string(path)?
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter(|l| seen.insert(l.clone()))
        .collect())
}

/// Two-column TSV; a first line starting with `header` is skipped.
pub fn read_pairs(path: &Path, header: &str) -> Result<Vec<(String, String)>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let label = path.display().to_string();
    fs::read_to_string(path)?
        .lines()
        .enumerate()
        .filter(|(i, l)| !l.trim().is_empty() && !(*i == 0 && l.starts_with(header)))
        .map(|(i, l)| match l.split('\t').collect::<Vec<_>>().as_slice() {
            [a, b] => Ok((a.trim().to_string(), b.trim().to_string())),
            _ => Err(Error::parse(label.clone(), i + 1, "expected two tab-separated columns")),
        })
        .collect()
}

/// Mean-pooled vector per word, grouping `word#context` keys by word.
pub fn term_vectors(set: &EmbeddingSet) -> Result<BTreeMap<String, Embedding>> {
    let mut groups: BTreeMap<&str, Vec<&Embedding>> = BTreeMap::new();
    for (key, embs) in set.iter() {
        groups.entry(split_key(key).0).or_default().extend(embs);
    }
    groups
        .into_iter()
        .map(|(w, es)| Ok((w.to_string(), mean_pool(es)?)))
        .collect()
}

/// Term-level scores: axis id to term to score.
pub type TermScores = BTreeMap<String, BTreeMap<String, f64>>;

pub fn score_terms(
    terms: &BTreeMap<String, Embedding>,
    axes: &[Axis],
    stats: Option<&ZScoreStats>,
) -> Result<TermScores> {
    let mut out = TermScores::new();
    for a in axes {
        let per = out.entry(a.axis_id().to_string()).or_default();
        for (t, e) in terms {
            per.insert(t.clone(), axis_score(t, e, a, stats)?.score);
        }
    }
    Ok(out)
}

/// `target, axis_id, score, pole` TSV back into term scores.
pub fn read_scores(path: &Path) -> Result<TermScores> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let label = path.display().to_string();
    let mut out = TermScores::new();
    for (i, l) in fs::read_to_string(path)?.lines().enumerate().skip(1) {
        let c: Vec<&str> = l.split('\t').collect();
        if c.len() != 4 {
            return Err(Error::parse(label.clone(), i + 1, "expected target, axis_id, score, pole"));
        }
        let s: f64 = c[2].parse().map_err(|_| Error::parse(label.clone(), i + 1, "bad score"))?;
        out.entry(c[1].to_string()).or_default().insert(c[0].to_string(), s);
    }
    Ok(out)
}

struct Sources {
    static_set: Option<EmbeddingSet>,
    ctx_set: Option<EmbeddingSet>,
    pool: Option<ContextPool>,
    wp: Option<HashSet<String>>,
    sample: Option<EmbeddingSet>,
}

pub struct Pipeline {
    cfg: RunConfig,
    out: PathBuf,
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Pipeline> {
        let out = cfg.require("out")?.to_path_buf();
        Ok(Pipeline { cfg, out })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.out.join(stage)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out.join("manifest.json")
    }

    fn input(&self, key: &str, stage: &str, file: &str) -> PathBuf {
        self.cfg
            .path(key)
            .map(Path::to_path_buf)
            .unwrap_or_else(|| self.stage_dir(stage).join(file))
    }

    fn label(&self, p: &Path) -> String {
        match p.strip_prefix(&self.out) {
            Ok(rel) => rel.display().to_string(),
            Err(_) => p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        }
    }

    fn run_stage<F>(&self, name: &str, inputs: &[PathBuf], body: F) -> Result<PathBuf>
    where
        F: FnOnce(&Path) -> Result<()>,
    {
        let wrap = |e: Error| Error::Stage {
            stage: name.to_string(),
            source: Box::new(e),
        };
        for p in inputs {
            if !p.exists() {
                return Err(wrap(Error::MissingFile(p.clone())));
            }
        }
        info!("stage {name}");
        let dir = self.stage_dir(name);
        let partial = self.out.join(format!("{name}.partial"));
        let attempt = || -> Result<()> {
            if partial.exists() {
                fs::remove_dir_all(&partial)?;
            }
            fs::create_dir_all(&partial)?;
            body(&partial)?;
            if dir.exists() {
                fs::remove_dir_all(&dir)?;
            }
            fs::rename(&partial, &dir)?;
            self.record(name, inputs, &dir)
        };
        attempt().map_err(wrap)?;
        Ok(dir)
    }

    fn record(&self, name: &str, inputs: &[PathBuf], dir: &Path) -> Result<()> {
        let mut rec = StageRecord {
            config_hash: self.cfg.hash(),
            root_seed: self.cfg.seed,
            ..Default::default()
        };
        for p in inputs {
            rec.inputs.insert(self.label(p), sha256_file(p)?);
        }
        let mut files: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
        files.sort();
        for f in files {
            rec.outputs.insert(self.label(&f), sha256_file(&f)?);
        }
        let path = self.manifest_path();
        let mut m = Manifest::load(&path)?;
        m.stages.insert(name.to_string(), rec);
        fs::write(&path, serde_json::to_string_pretty(&m)? + "\n")?;
        Ok(())
    }

    fn specs_path(&self) -> PathBuf {
        self.input("axes", "build-lexicon", "axes.jsonl")
    }

    fn static_path(&self) -> Result<PathBuf> {
        match self.cfg.path("static_embeddings") {
            Some(p) => Ok(p.to_path_buf()),
            None => Ok(self.cfg.require("embeddings")?.to_path_buf()),
        }
    }

    fn source_paths(&self, methods: &[Method]) -> Result<Vec<PathBuf>> {
        let mut v = vec![];
        if methods.contains(&Method::Glove) {
            v.push(self.static_path()?);
        }
        if methods.iter().any(|m| m.is_contextual()) {
            v.push(self.cfg.require("embeddings")?.to_path_buf());
            v.push(self.cfg.require("pool")?.to_path_buf());
            v.extend(self.cfg.path("wp_vocab").map(Path::to_path_buf));
        }
        if self.cfg.zscored {
            v.extend(self.cfg.path("stats_sample").map(Path::to_path_buf));
        }
        Ok(v)
    }

    fn load_pool(&self) -> Result<ContextPool> {
        let records = read_context_records(self.cfg.require("pool")?)?;
        let (pool, dropped) = ContextPool::from_records(records, self.cfg.pool_cap);
        if dropped > 0 {
            info!("context pool: {dropped} records screened out or over the cap");
        }
        Ok(pool)
    }

    fn load_sources(&self, methods: &[Method]) -> Result<Sources> {
        let contextual = methods.iter().any(|m| m.is_contextual());
        Ok(Sources {
            static_set: if methods.contains(&Method::Glove) {
                Some(load_embeddings(&self.static_path()?)?)
            } else {
                None
            },
            ctx_set: if contextual {
                Some(load_embeddings(self.cfg.require("embeddings")?)?)
            } else {
                None
            },
            pool: if contextual { Some(self.load_pool()?) } else { None },
            wp: match (contextual, self.cfg.path("wp_vocab")) {
                (true, Some(p)) => Some(read_word_list(p)?),
                _ => None,
            },
            sample: match (self.cfg.zscored, self.cfg.path("stats_sample")) {
                (true, Some(p)) => Some(load_embeddings(p)?),
                _ => None,
            },
        })
    }

    /// Realizes `specs` under one method. Returns the axes, the statistics
    /// used for z-scoring and the embedding set poles were drawn from.
    fn realize<'s>(
        &self,
        specs: &[AxisSpec],
        method: Method,
        src: &'s Sources,
    ) -> Result<(Realized, Option<ZScoreStats>, &'s EmbeddingSet)> {
        let missing = || Error::Precondition(format!("no embeddings loaded for {method}"));
        let set = if method.is_contextual() { src.ctx_set.as_ref() } else { src.static_set.as_ref() }.ok_or_else(missing)?;
        let stats = if self.cfg.zscored {
            Some(compute_set_stats(src.sample.as_ref().unwrap_or(set))?)
        } else {
            None
        };
        let source = if method.is_contextual() {
            EmbeddingSource::Contextual {
                embeddings: set,
                pool: src.pool.as_ref().ok_or_else(missing)?,
                wp_vocab: src.wp.as_ref(),
            }
        } else {
            EmbeddingSource::Static(set)
        };
        let opts = RealizeOptions {
            method,
            stats: stats.as_ref(),
            seed: self.cfg.seed,
            context_k: self.cfg.context_k,
            pooling: self.cfg.pooling,
        };
        let realized = realize_all(specs, &source, &opts)?;
        Ok((realized, stats, set))
    }

    fn load_axis_store(&self) -> Result<(Vec<PathBuf>, Vec<Axis>, Option<ZScoreStats>)> {
        let saxe = self.input("axis_vectors", "build-axes", "axes.saxe");
        let manifest = saxe.with_extension("jsonl");
        let stats_path = saxe.with_file_name("zstats.json");
        let axes = read_axis_store(&saxe, &manifest)?;
        let mut inputs = vec![saxe, manifest];
        let stats = if axes.iter().any(|a| a.zscored) {
            let s = read_stats(&stats_path)?;
            inputs.push(stats_path);
            Some(s)
        } else {
            None
        };
        Ok((inputs, axes, stats))
    }

    fn targets_path(&self) -> PathBuf {
        self.input("targets", "toy-extract", "occurrences.saxe")
    }

    pub fn build_lexicon(&self) -> Result<PathBuf> {
        let db = self.cfg.require("db")?.to_path_buf();
        let vocab = self.cfg.require("vocab")?.to_path_buf();
        self.run_stage("build-lexicon", &[db.clone(), vocab.clone()], |dir| {
            let built = build_axes(&SynsetDb::from_path(&db)?, &read_word_list(&vocab)?, self.cfg.min_pole);
            info!("{} axes", built.axes.len());
            write_axes(&dir.join("axes.jsonl"), &built.axes)?;
            fs::write(dir.join("warnings.txt"), built.warnings.iter().map(|w| format!("{w}\n")).collect::<String>())?;
            Ok(())
        })
    }

    pub fn select_contexts(&self) -> Result<PathBuf> {
        if !self.cfg.method.is_contextual() {
            return Err(Error::Config(format!("select-contexts needs a contextual method, got {}", self.cfg.method)));
        }
        let specs_path = self.specs_path();
        let mut inputs = vec![specs_path.clone(), self.cfg.require("pool")?.to_path_buf()];
        inputs.extend(self.cfg.path("wp_vocab").map(Path::to_path_buf));
        self.run_stage("select-contexts", &inputs, |dir| {
            let specs = read_axes(&specs_path)?;
            let pool = self.load_pool()?;
            let wp = self.cfg.path("wp_vocab").map(read_word_list).transpose()?;
            let params = SelectionParams {
                k: self.cfg.context_k,
                root_seed: self.cfg.seed,
                wp_vocab: wp.as_ref(),
            };
            let mut sels = vec![];
            for s in &specs {
                match select_for_axis(s, &pool, self.cfg.method, &params) {
                    Ok(sel) => sels.push(sel),
                    Err(e) => warn!("{}: skipped: {e}", s.axis_id),
                }
            }
            write_selections(&dir.join("selections.jsonl"), &sels)
        })
    }

    pub fn build_axes(&self) -> Result<PathBuf> {
        let specs_path = self.specs_path();
        let mut inputs = vec![specs_path.clone()];
        inputs.extend(self.source_paths(&[self.cfg.method])?);
        self.run_stage("build-axes", &inputs, |dir| {
            let specs = read_axes(&specs_path)?;
            let src = self.load_sources(&[self.cfg.method])?;
            let (realized, stats, _) = self.realize(&specs, self.cfg.method, &src)?;
            info!("{} axes realized, {} skipped", realized.axes.len(), realized.skipped.len());
            write_axis_store(&dir.join("axes.saxe"), &dir.join("axes.jsonl"), &realized.axes)?;
            write_skipped(&dir.join("skipped.tsv"), &realized.skipped)?;
            if let Some(s) = &stats {
                write_stats(&dir.join("zstats.json"), s)?;
            }
            Ok(())
        })
    }

    pub fn validate(&self) -> Result<PathBuf> {
        let methods: Vec<Method> = if self.cfg.compare_methods { ALL_METHODS.to_vec() } else { vec![self.cfg.method] };
        let specs_path = self.specs_path();
        let mut inputs = vec![specs_path.clone()];
        inputs.extend(self.source_paths(&methods)?);
        self.run_stage("validate", &inputs, |dir| {
            let specs = read_axes(&specs_path)?;
            let src = self.load_sources(&methods)?;
            let mut by_method: Vec<(Method, Vec<ConsistencyReport>)> = vec![];
            let mut skipped = vec![];
            for &m in &methods {
                let (realized, stats, set) = self.realize(&specs, m, &src)?;
                let mut reports = vec![];
                for a in &realized.axes {
                    let left = gather_pole(&a.left_sources, set, stats.as_ref())?;
                    let right = gather_pole(&a.right_sources, set, stats.as_ref())?;
                    reports.push(consistency_report(a.axis_id(), m, a.zscored, &left, &right, self.cfg.pooling)?);
                }
                skipped.extend(realized.skipped.into_iter().map(|(id, why)| (id, format!("{m}: {why}"))));
                by_method.push((m, reports));
            }
            let all: Vec<ConsistencyReport> = by_method.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
            fs::write(dir.join("consistency.tsv"), reports_to_tsv(&all))?;
            let mut jsonl = String::new();
            for r in &all {
                jsonl.push_str(&serde_json::to_string(r)?);
                jsonl.push('\n');
            }
            fs::write(dir.join("reports.jsonl"), jsonl)?;
            write_skipped(&dir.join("skipped.tsv"), &skipped)?;

            let mut summaries = vec![];
            let mut bars = vec![];
            for (m, reports) in &by_method {
                if reports.is_empty() {
                    warn!("{m}: no axes realized");
                    continue;
                }
                let s = summarize_method(reports)?;
                bars.push(Bar { group: m.name().into(), label: "mean C".into(), value: s.mean_c, ci: s.ci95 });
                summaries.push(s);
            }
            let mut comparisons = vec![];
            for (i, (ma, ra)) in by_method.iter().enumerate() {
                for (mb, rb) in &by_method[i + 1..] {
                    if let Some(t) = compare_methods(ra, rb) {
                        comparisons.push(serde_json::json!({ "a": ma, "b": mb, "mann_whitney": t }));
                    }
                }
            }
            let summary = serde_json::json!({ "methods": summaries, "comparisons": comparisons });
            fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
            bar_chart("Axis consistency by method", &bars).write(&dir.join("consistency_chart.svg"))
        })
    }

    pub fn project(&self) -> Result<PathBuf> {
        let (mut inputs, axes, stats) = self.load_axis_store()?;
        let targets = self.targets_path();
        inputs.push(targets.clone());
        self.run_stage("project", &inputs, |dir| {
            let terms = term_vectors(&load_embeddings(&targets)?)?;
            let mut scores = String::from("target\taxis_id\tscore\tpole\n");
            for (t, e) in &terms {
                for a in &axes {
                    let s = axis_score(t, e, a, stats.as_ref())?;
                    let _ = writeln!(scores, "{}\t{}\t{}\t{}", s.target, s.axis_id, s.score, s.assigned_pole.name());
                }
            }
            fs::write(dir.join("scores.tsv"), scores)?;
            let mut ranked = String::from("target\trank\taxis_id\tpole\tlabel\tmagnitude\n");
            let mut json = BTreeMap::new();
            for (t, e) in &terms {
                let r = rank_poles(e, &axes, stats.as_ref(), self.cfg.top_k)?;
                for (i, p) in r.iter().enumerate() {
                    let _ = writeln!(ranked, "{t}\t{}\t{}\t{}\t{}\t{}", i + 1, p.axis_id, p.pole.name(), p.label, p.magnitude);
                }
                json.insert(t.clone(), r);
            }
            fs::write(dir.join("ranked.tsv"), ranked)?;
            fs::write(dir.join("ranked.json"), serde_json::to_string_pretty(&json)? + "\n")?;
            Ok(())
        })
    }

    pub fn contrast(&self) -> Result<PathBuf> {
        let (mut inputs, axes, stats) = self.load_axis_store()?;
        let targets = self.targets_path();
        let cats_path = self.cfg.require("categories")?.to_path_buf();
        inputs.extend([targets.clone(), cats_path.clone()]);
        inputs.extend(self.cfg.path("background").map(Path::to_path_buf));
        self.run_stage("contrast", &inputs, |dir| {
            let terms = term_vectors(&load_embeddings(&targets)?)?;
            let scores = score_terms(&terms, &axes, stats.as_ref())?;
            let mut categories: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for (t, c) in read_pairs(&cats_path, "term\t")? {
                if terms.contains_key(&t) {
                    categories.entry(c).or_default().push(t);
                } else {
                    warn!("{t}: no target embedding, left out of contrast");
                }
            }
            let background: Vec<String> = match self.cfg.path("background") {
                Some(p) => read_terms(p)?.into_iter().filter(|t| terms.contains_key(t)).collect(),
                None => categories.values().flatten().cloned().collect(),
            };
            let mut sig_tsv = String::new();
            let mut all_tsv = String::new();
            let mut json = BTreeMap::new();
            for (cat, members) in &categories {
                let groups: Vec<AxisGroups> = scores
                    .iter()
                    .map(|(axis_id, per)| AxisGroups {
                        axis_id: axis_id.clone(),
                        category: members.iter().map(|t| per[t]).collect(),
                        background: background.iter().map(|t| per[t]).collect(),
                    })
                    .collect();
                let params = ContrastParams {
                    bootstrap: self.cfg.bootstrap,
                    alpha: self.cfg.alpha,
                    root_seed: derive_seed(self.cfg.seed, &format!("contrast:{cat}")),
                    null_value: self.cfg.null_value,
                };
                let report = contrast_experiment(&groups, &params)?;
                append_with_column(&mut sig_tsv, "category", cat, &contrast_to_tsv(&report.significant()));
                let tested: Vec<_> = report.tested.iter().collect();
                append_with_column(&mut all_tsv, "category", cat, &contrast_to_tsv(&tested));
                json.insert(cat.clone(), serde_json::json!({
                    "terms": members,
                    "significant": report.significant(),
                    "excluded": report.excluded,
                }));
            }
            fs::write(dir.join("contrast.tsv"), sig_tsv)?;
            fs::write(dir.join("contrast_all.tsv"), all_tsv)?;
            fs::write(dir.join("contrast.json"), serde_json::to_string_pretty(&json)? + "\n")?;
            Ok(())
        })
    }

    pub fn variants(&self) -> Result<PathBuf> {
        let (mut inputs, axes, stats) = self.load_axis_store()?;
        let targets = self.targets_path();
        let groups_path = self.cfg.require("groups")?.to_path_buf();
        inputs.extend([targets.clone(), groups_path.clone()]);
        self.run_stage("variants", &inputs, |dir| {
            let set = load_embeddings(&targets)?;
            let mut groups: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
            for (t, g) in read_pairs(&groups_path, "term\t")? {
                groups.entry(g).or_default().insert(t);
            }
            let names: Vec<&String> = groups.keys().collect();
            if names.len() != 2 {
                return Err(Error::Config(format!("variants need exactly two groups, found {}", names.len())));
            }
            let mut rows = vec![];
            for a in &axes {
                let mut per: [Vec<f64>; 2] = [vec![], vec![]];
                for (key, embs) in set.iter() {
                    let word = split_key(key).0;
                    for (i, n) in names.iter().enumerate() {
                        if groups[*n].contains(word) {
                            for e in embs {
                                per[i].push(axis_score(key, e, a, stats.as_ref())?.score);
                            }
                        }
                    }
                }
                let [sa, sb] = per;
                if sa.is_empty() || sb.is_empty() {
                    warn!("{}: a variant group has no occurrences", a.axis_id());
                    continue;
                }
                rows.push((a.axis_id().to_string(), sa, sb));
            }
            let ranked = mean_difference_ranking(&rows)?;
            let header = format!("# a = {}, b = {}\n", names[0], names[1]);
            fs::write(dir.join("variants.tsv"), header + &mean_difference_to_tsv(&ranked))?;
            let bars: Vec<Bar> = ranked
                .iter()
                .flat_map(|r| {
                    [
                        Bar { group: names[0].clone(), label: r.axis_id.clone(), value: r.mean_a, ci: r.ci_a },
                        Bar { group: names[1].clone(), label: r.axis_id.clone(), value: r.mean_b, ci: r.ci_b },
                    ]
                })
                .collect();
            bar_chart("Axis scores by variant group", &bars).write(&dir.join("variants_chart.svg"))
        })
    }

    pub fn ingest(&self) -> Result<PathBuf> {
        let corpus = self.cfg.require("corpus")?.to_path_buf();
        self.run_stage("ingest", std::slice::from_ref(&corpus), |dir| {
            let (docs, summary) = ingest(read_raw_corpus(&corpus)?);
            info!("kept {} of {} documents", summary.kept_documents, summary.input_documents);
            write_documents(&dir.join("documents.jsonl"), &docs)?;
            fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
            Ok(())
        })
    }

    pub fn vocab(&self) -> Result<PathBuf> {
        let docs_path = self.input("documents", "ingest", "documents.jsonl");
        let terms_path = self.cfg.require("terms")?.to_path_buf();
        let mut inputs = vec![docs_path.clone(), terms_path.clone()];
        inputs.extend(self.cfg.path("pronouns").map(Path::to_path_buf));
        inputs.extend(self.cfg.path("plurals").map(Path::to_path_buf));
        self.run_stage("vocab", &inputs, |dir| {
            let docs = read_documents(&docs_path)?;
            let terms: HashSet<String> = read_terms(&terms_path)?.into_iter().collect();
            let pronouns = match self.cfg.path("pronouns") {
                Some(p) => read_pronoun_counts(p)?,
                None => PronounCounts::new(),
            };
            let plurals = match self.cfg.path("plurals") {
                Some(p) => read_plural_map(p)?,
                None => BTreeMap::new(),
            };
            let wordlist = GenderWordlist::default();
            let inputs = LeaningInputs {
                pronouns: &pronouns,
                wordlist: &wordlist,
                plurals: &plurals,
                params: LeaningParams {
                    min_clusters: self.cfg.min_clusters,
                    require_each: self.cfg.require_each,
                },
            };
            let vocab = build_vocab(&term_doc_counts(&docs, &terms), self.cfg.vocab_min, &inputs);
            info!("{} of {} terms pass the frequency cutoff", vocab.len(), terms.len());
            fs::write(dir.join("vocab.tsv"), vocab_to_tsv(&vocab))?;
            let kept: HashSet<String> = vocab.iter().map(|v| v.surface.clone()).collect();
            let (per_term, totals) = match self.cfg.denominator {
                Denominator::Documents => monthly_counts(&docs, &kept)?,
                Denominator::Tokens => monthly_token_counts(&docs, &kept)?,
            };
            let empty = BTreeMap::new();
            let mut series = vec![];
            for t in kept.iter().collect::<BTreeSet<_>>() {
                series.push(build_series(t, per_term.get(t).unwrap_or(&empty), &totals)?);
            }
            fs::write(dir.join("series.tsv"), series_to_tsv(&series))?;
            Ok(())
        })
    }

    pub fn sample(&self) -> Result<PathBuf> {
        let docs_path = self.input("documents", "ingest", "documents.jsonl");
        let vocab_path = self.input("term_vocab", "vocab", "vocab.tsv");
        let mut inputs = vec![docs_path.clone(), vocab_path.clone()];
        inputs.extend(self.cfg.path("plurals").map(Path::to_path_buf));
        inputs.extend(self.cfg.path("ideologies").map(Path::to_path_buf));
        self.run_stage("sample", &inputs, |dir| {
            let docs = read_documents(&docs_path)?;
            let terms: HashSet<String> = read_vocab(&vocab_path)?.into_iter().map(|r| r.surface).collect();
            let lex = match self.cfg.path("plurals") {
                Some(p) => NumberLexicon::from_plural_map(&read_plural_map(p)?),
                None => NumberLexicon::default(),
            };
            let ideology: BTreeMap<String, String> = match self.cfg.path("ideologies") {
                Some(p) => read_pairs(p, "community\t")?.into_iter().collect(),
                None => BTreeMap::new(),
            };
            let occs = find_occurrences(&docs, &terms)?
                .iter()
                .map(|o| replace_target(o, &lex))
                .collect::<Result<Vec<Occurrence>>>()?;
            let stratum = |o: &Occurrence| {
                let ideo = ideology.get(&o.community).unwrap_or(&o.community);
                format!("{}|{}|{}|{}", o.term, o.platform, ideo, &o.month[..4])
            };
            let strat = stratified_sample(occs.clone(), stratum, self.cfg.stratum_cap, derive_seed(self.cfg.seed, "sample:stratified"));
            let monthly = stratified_sample(
                occs,
                |o: &Occurrence| format!("{}|{}", o.term, o.month),
                self.cfg.reservoir_k,
                derive_seed(self.cfg.seed, "sample:monthly"),
            );
            let flat = |m: BTreeMap<String, Vec<Occurrence>>| m.into_values().flatten().collect::<Vec<_>>();
            write_occurrences(&dir.join("occurrences.jsonl"), &flat(strat))?;
            write_occurrences(&dir.join("monthly.jsonl"), &flat(monthly))?;
            Ok(())
        })
    }

    fn sample_files(&self) -> Vec<PathBuf> {
        match self.cfg.path("occurrences") {
            Some(p) => vec![p.to_path_buf()],
            None => vec![self.stage_dir("sample").join("occurrences.jsonl"), self.stage_dir("sample").join("monthly.jsonl")],
        }
    }

    fn read_sampled(&self, files: &[PathBuf]) -> Result<BTreeMap<String, Occurrence>> {
        let mut out = BTreeMap::new();
        for f in files {
            for o in read_occurrences(f)? {
                out.insert(o.occ_id.clone(), o);
            }
        }
        Ok(out)
    }

    /// Simulated extractor over the sampled occurrences (toy data only).
    pub fn toy_extract(&self) -> Result<PathBuf> {
        let files = self.sample_files();
        let specs_path = self.specs_path();
        let mut inputs = files.clone();
        inputs.push(specs_path.clone());
        self.run_stage("toy-extract", &inputs, |dir| {
            let occs: Vec<Occurrence> = self.read_sampled(&files)?.into_values().collect();
            let set = crate::toy::extract_occurrences(&occs, &read_axes(&specs_path)?, self.cfg.seed)?;
            write_embeddings(&dir.join("occurrences.saxe"), &set)
        })
    }

    pub fn timeline(&self) -> Result<PathBuf> {
        let (mut inputs, axes, stats) = self.load_axis_store()?;
        let targets = self.targets_path();
        let files = match self.cfg.path("occurrences") {
            Some(p) => vec![p.to_path_buf()],
            None => vec![self.stage_dir("sample").join("monthly.jsonl")],
        };
        inputs.push(targets.clone());
        inputs.extend(files.clone());
        self.run_stage("timeline", &inputs, |dir| {
            let set = load_embeddings(&targets)?;
            let months: BTreeMap<String, String> =
                self.read_sampled(&files)?.into_iter().map(|(id, o)| (id, o.month)).collect();
            let mut tsv = String::from("term\taxis_id\tmonth\tn\tmean\n");
            for a in &axes {
                let mut cells: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
                for (key, embs) in set.iter() {
                    let (word, ctx) = split_key(key);
                    let Some(month) = ctx.and_then(|c| months.get(c)) else { continue };
                    for e in embs {
                        cells.entry((word, month)).or_default().push(axis_score(key, e, a, stats.as_ref())?.score);
                    }
                }
                let mut lines: BTreeMap<&str, Vec<(String, f64)>> = BTreeMap::new();
                for ((word, month), xs) in &cells {
                    let m = mean(xs);
                    let _ = writeln!(tsv, "{word}\t{}\t{month}\t{}\t{m}", a.axis_id(), xs.len());
                    lines.entry(word).or_default().push((month.to_string(), m));
                }
                let series: Vec<LineSeries> =
                    lines.into_iter().map(|(w, points)| LineSeries { name: w.to_string(), points }).collect();
                line_chart(&format!("Monthly scores on {}", a.axis_id()), &series).write(&dir.join(format!("{}.svg", a.axis_id())))?;
            }
            fs::write(dir.join("timeline.tsv"), tsv)?;
            Ok(())
        })
    }

    pub fn cluster(&self) -> Result<PathBuf> {
        let series_path = self.input("series", "vocab", "series.tsv");
        self.run_stage("cluster", std::slice::from_ref(&series_path), |dir| {
            let smoothed = read_series(&series_path)?
                .iter()
                .map(|s| smooth(s, self.cfg.smoothing))
                .collect::<Result<Vec<_>>>()?;
            fs::write(dir.join("smoothed.tsv"), series_to_tsv(&smoothed))?;
            let params = KscParams {
                k: self.cfg.k,
                max_iters: self.cfg.max_iters,
                seed: derive_seed(self.cfg.seed, "cluster"),
                restarts: self.cfg.restarts,
            };
            let out = cluster_series(&smoothed, &params)?;
            fs::write(dir.join("clusters.json"), serde_json::to_string_pretty(&out)? + "\n")?;
            centroid_chart(&out, &smoothed).write(&dir.join("centroids.svg"))
        })
    }

    pub fn report(&self) -> Result<PathBuf> {
        let clusters = self.input("clusters", "cluster", "clusters.json");
        let scores_path = self.input("scores", "project", "scores.tsv");
        let vocab_path = self.input("term_vocab", "vocab", "vocab.tsv");
        let inputs = [clusters.clone(), scores_path.clone(), vocab_path.clone()];
        self.run_stage("report", &inputs, |dir| {
            let model: ClusterOutput = serde_json::from_str(&fs::read_to_string(&clusters)?)?;
            let scores = read_scores(&scores_path)?;
            let vocab = read_vocab(&vocab_path)?;
            let frequency: BTreeMap<String, f64> = vocab.iter().map(|r| (r.surface.clone(), r.count as f64)).collect();
            let scored: BTreeSet<&String> = scores.values().flat_map(|m| m.keys()).collect();
            let assignments: BTreeMap<String, usize> = model
                .assignments
                .iter()
                .filter(|(t, _)| {
                    let ok = scored.contains(t) && frequency.contains_key(*t);
                    if !ok {
                        warn!("{t}: clustered but unscored, left out of the profile");
                    }
                    ok
                })
                .map(|(t, c)| (t.clone(), *c))
                .collect();
            let profile = cluster_axis_profile(&assignments, &frequency, &scores)?;
            fs::write(dir.join("profile.tsv"), profile_to_tsv(&profile))?;
            let bars: Vec<Bar> = profile
                .iter()
                .map(|r| Bar {
                    group: format!("c{} {}", r.cluster, r.half.name()),
                    label: r.axis_id.clone(),
                    value: r.mean,
                    ci: r.ci95,
                })
                .collect();
            bar_chart("Axis scores by temporal cluster", &bars).write(&dir.join("profile_chart.svg"))?;

            let feminine: Vec<&str> = vocab
                .iter()
                .filter(|r| r.leaning.is_some_and(|l| l > self.cfg.fem_threshold))
                .map(|r| r.surface.as_str())
                .collect();
            let per_axis: BTreeMap<String, Vec<f64>> = scores
                .iter()
                .map(|(a, per)| (a.clone(), feminine.iter().filter_map(|t| per.get(*t).copied()).collect()))
                .collect();
            let mut tsv = String::from("axis_id\tvariance\tn\n");
            if per_axis.values().all(|v| v.len() >= 2) && !per_axis.is_empty() {
                for (a, v) in rank_axis_variance(&per_axis)? {
                    let _ = writeln!(tsv, "{a}\t{v}\t{}", per_axis[&a].len());
                }
            } else {
                warn!("fewer than two scored feminine-leaning terms; axis variance not computed");
            }
            fs::write(dir.join("axis_variance.tsv"), tsv)?;
            let mut members = String::from("term\tcluster\tcount\tleaning\n");
            for (t, c) in &model.assignments {
                let row = vocab.iter().find(|r| &r.surface == t);
                let count = row.map(|r| r.count.to_string()).unwrap_or_default();
                let leaning = row.and_then(|r| r.leaning).map(|l| l.to_string()).unwrap_or_default();
                let _ = writeln!(members, "{t}\t{c}\t{count}\t{leaning}");
            }
            fs::write(dir.join("clusters.tsv"), members)?;
            Ok(())
        })
    }

    pub fn run_stage_by_name(&self, stage: &str) -> Result<PathBuf> {
        match stage {
            "build-lexicon" => self.build_lexicon(),
            "select-contexts" => self.select_contexts(),
            "build-axes" => self.build_axes(),
            "validate" => self.validate(),
            "ingest" => self.ingest(),
            "vocab" => self.vocab(),
            "sample" => self.sample(),
            "toy-extract" => self.toy_extract(),
            "project" => self.project(),
            "contrast" => self.contrast(),
            "variants" => self.variants(),
            "timeline" => self.timeline(),
            "cluster" => self.cluster(),
            "report" => self.report(),
            _ => Err(Error::Config(format!("unknown stage {stage:?}"))),
        }
    }

    /// Stages a full run executes given what the config provides.
    pub fn planned_stages(&self) -> Vec<&'static str> {
        let has = |k: &str| self.cfg.path(k).is_some();
        let corpus = has("corpus") && has("terms");
        let targets = has("targets") || (corpus && self.cfg.toy_extract);
        STAGES
            .iter()
            .copied()
            .filter(|s| match *s {
                "select-contexts" => self.cfg.method.is_contextual() && has("pool"),
                "ingest" | "vocab" | "sample" | "cluster" => corpus,
                "toy-extract" => corpus && self.cfg.toy_extract,
                "project" | "timeline" => targets,
                "contrast" => targets && has("categories"),
                "variants" => targets && has("groups"),
                "report" => targets && corpus,
                _ => true,
            })
            .collect()
    }

    pub fn run_all(&self) -> Result<Vec<&'static str>> {
        let stages = self.planned_stages();
        for s in &stages {
            self.run_stage_by_name(s)?;
        }
        Ok(stages)
    }
}

fn write_skipped(path: &Path, skipped: &[(String, String)]) -> Result<()> {
    let mut s = String::from("axis_id\treason\n");
    for (id, why) in skipped {
        let _ = writeln!(s, "{id}\t{why}");
    }
    fs::write(path, s)?;
    Ok(())
}

/// Appends `tsv` with an extra leading column; the header is written once.
fn append_with_column(acc: &mut String, name: &str, value: &str, tsv: &str) {
    let mut lines = tsv.lines();
    let header = lines.next().unwrap_or_default();
    if acc.is_empty() {
        let _ = writeln!(acc, "{name}\t{header}");
    }
    for l in lines {
        let _ = writeln!(acc, "{value}\t{l}");
    }
}

/// Centroids drawn at half the peak height of their cluster's members.
fn centroid_chart(out: &ClusterOutput, series: &[crate::timeseries::FrequencySeries]) -> crate::plot::Chart {
    let lines: Vec<LineSeries> = out
        .centroids
        .iter()
        .enumerate()
        .map(|(c, centroid)| {
            let peak = series
                .iter()
                .filter(|s| out.assignments.get(&s.term) == Some(&c))
                .flat_map(|s| s.values.iter().copied())
                .fold(0.0, f64::max);
            let top = centroid.iter().copied().fold(0.0, f64::max);
            let scale = if top > 0.0 { 0.5 * peak / top } else { 0.0 };
            LineSeries {
                name: format!("cluster {c}"),
                points: out.months.iter().cloned().zip(centroid.iter().map(|v| v * scale)).collect(),
            }
        })
        .collect();
    line_chart("Temporal cluster centroids", &lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn term_vectors_pool_by_word() {
        let mut set = EmbeddingSet::new(2).unwrap();
        set.push("nurse#a", Embedding::new(vec![1.0, 0.0]).unwrap()).unwrap();
        set.push("nurse#b", Embedding::new(vec![0.0, 1.0]).unwrap()).unwrap();
        set.push("chad", Embedding::new(vec![2.0, 2.0]).unwrap()).unwrap();
        let t = term_vectors(&set).unwrap();
        assert_eq!(t["nurse"].values(), [0.5, 0.5]);
        assert_eq!(t["chad"].values(), [2.0, 2.0]);
    }

    #[test]
    fn column_prefix() {
        let mut acc = String::new();
        append_with_column(&mut acc, "c", "x", "h1\th2\n1\t2\n");
        append_with_column(&mut acc, "c", "y", "h1\th2\n3\t4\n");
        assert_eq!(acc, "c\th1\th2\nx\t1\t2\ny\t3\t4\n");
    }

    #[test]
    fn failed_stage_keeps_partial() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.paths.insert("out".into(), dir.path().to_path_buf());
        let p = Pipeline::new(cfg).unwrap();
        let err = p
            .run_stage("demo", &[], |d| {
                fs::write(d.join("half.txt"), "x")?;
                Err(Error::Precondition("boom".into()))
            })
            .unwrap_err();
        assert!(err.to_string().contains("demo"));
        assert!(dir.path().join("demo.partial/half.txt").exists());
        assert!(!dir.path().join("demo").exists());
        p.run_stage("demo", &[], |d| Ok(fs::write(d.join("ok.txt"), "y")?)).unwrap();
        assert!(!dir.path().join("demo.partial").exists());
        let m = Manifest::load(&p.manifest_path()).unwrap();
        assert!(m.stages["demo"].outputs.contains_key("demo/ok.txt"));
    }

    #[test]
    fn missing_input_is_input_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.paths.insert("out".into(), dir.path().to_path_buf());
        let p = Pipeline::new(cfg).unwrap();
        let err = p.run_stage("demo", &[dir.path().join("nope.saxe")], |_| Ok(())).unwrap_err();
        assert!(err.is_input_error());
        assert!(err.to_string().contains("nope.saxe"));
    }
}
