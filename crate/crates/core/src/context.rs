//! Context selection for contextual pole embeddings.
//!
//! Two strategies: probability filtering (keep contexts where a masked LM
//! prefers the pole's synonyms over its antonyms, rank by synonym
//! probability) and uniform random sampling across the pole.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use log::warn;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{single_wordpiece_pole, AxisSpec, Side};

pub const MIN_TOKENS_EXCLUSIVE: usize = 10;
pub const MAX_TOKENS: usize = 150;
pub const DEFAULT_POOL_CAP: usize = 1000;
pub const DEFAULT_CONTEXT_K: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub context_id: String,
    pub adjective: String,
    pub tokens: Vec<String>,
    pub target_index: usize,
    #[serde(default)]
    pub syn_probs: BTreeMap<String, f64>,
    #[serde(default)]
    pub ant_probs: BTreeMap<String, f64>,
}

fn map_mean(m: &BTreeMap<String, f64>) -> Option<f64> {
    if m.is_empty() {
        None
    } else {
        Some(m.values().sum::<f64>() / m.len() as f64)
    }
}

impl ContextRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.target_index >= self.tokens.len() {
            return Err(format!(
                "target_index {} out of range for {} tokens",
                self.target_index,
                self.tokens.len()
            ));
        }
        for (w, p) in self.syn_probs.iter().chain(&self.ant_probs) {
            if !(0.0..=1.0).contains(p) {
                return Err(format!("probability for {w} outside [0,1]: {p}"));
            }
        }
        Ok(())
    }

    /// Unweighted mean over present synonym candidates.
    pub fn syn_mean(&self) -> Option<f64> {
        map_mean(&self.syn_probs)
    }

    pub fn ant_mean(&self) -> Option<f64> {
        map_mean(&self.ant_probs)
    }
}

/// True iff `10 < len <= 150`.
pub fn length_ok(tokens: &[String]) -> bool {
    tokens.len() > MIN_TOKENS_EXCLUSIVE && tokens.len() <= MAX_TOKENS
}

/// Candidate contexts per adjective, length-screened and capped.
#[derive(Debug, Clone, Default)]
pub struct ContextPool {
    by_adjective: BTreeMap<String, Vec<ContextRecord>>,
}

impl ContextPool {
    /// Keeps records that pass [`length_ok`], at most `cap` per adjective in
    /// input order. Returns the pool and the number of screened-out records.
    pub fn from_records<I>(records: I, cap: usize) -> (Self, usize)
    where
        I: IntoIterator<Item = ContextRecord>,
    {
        let mut pool = ContextPool::default();
        let mut dropped = 0;
        for r in records {
            if !length_ok(&r.tokens) {
                dropped += 1;
                continue;
            }
            let list = pool.by_adjective.entry(r.adjective.clone()).or_default();
            if list.len() < cap {
                list.push(r);
            } else {
                dropped += 1;
            }
        }
        (pool, dropped)
    }

    pub fn get(&self, adjective: &str) -> &[ContextRecord] {
        self.by_adjective
            .get(adjective)
            .map(Vec::as_slice)
            .unwrap_or_default()
    }

    pub fn adjectives(&self) -> impl Iterator<Item = &str> {
        self.by_adjective.keys().map(String::as_str)
    }

    pub fn record_count(&self) -> usize {
        self.by_adjective.values().map(Vec::len).sum()
    }

    /// Records of all `adjectives`, concatenated in lexicographic adjective
    /// order.
    pub fn merged<'a>(&'a self, adjectives: &[String]) -> Vec<&'a ContextRecord> {
        let mut adjs: Vec<&String> = adjectives.iter().collect();
        adjs.sort();
        adjs.dedup();
        adjs.into_iter().flat_map(|a| self.get(a)).collect()
    }
}

pub fn read_context_records(path: &Path) -> Result<Vec<ContextRecord>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let label = path.display().to_string();
    let text = fs::read_to_string(path)?;
    let mut out = vec![];
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ContextRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(label.clone(), i + 1, e))?;
        rec.validate().map_err(|m| Error::parse(label.clone(), i + 1, m))?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct ProbSelection<'a> {
    pub selected: Vec<&'a ContextRecord>,
    pub warnings: Vec<String>,
}

fn by_syn_then_id(a: &(f64, &ContextRecord), b: &(f64, &ContextRecord)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then_with(|| a.1.context_id.cmp(&b.1.context_id))
        .then_with(|| a.1.adjective.cmp(&b.1.adjective))
}

/// Drops records whose mean antonym probability exceeds the mean synonym
/// probability, sorts the rest by mean synonym probability (descending,
/// ties by context id) and keeps the first `k`. Records with an empty
/// probability map are excluded with a warning.
pub fn select_prob_contexts<'a, I>(records: I, k: usize) -> ProbSelection<'a>
where
    I: IntoIterator<Item = &'a ContextRecord>,
{
    let mut warnings = vec![];
    let mut kept: Vec<(f64, &ContextRecord)> = vec![];
    for r in records {
        match (r.syn_mean(), r.ant_mean()) {
            (Some(s), Some(a)) => {
                if a <= s {
                    kept.push((s, r));
                }
            }
            _ => warnings.push(format!(
                "context {} ({}): empty probability map, excluded",
                r.context_id, r.adjective
            )),
        }
    }
    kept.sort_by(by_syn_then_id);
    kept.truncate(k);
    ProbSelection {
        selected: kept.into_iter().map(|(_, r)| r).collect(),
        warnings,
    }
}

/// Pole-level probability selection: filter and rank per adjective, then
/// keep the global top `k` across the pole by synonym probability.
pub fn select_prob_pole<'a>(
    pool: &'a ContextPool,
    adjectives: &[String],
    k: usize,
) -> ProbSelection<'a> {
    let mut adjs: Vec<&String> = adjectives.iter().collect();
    adjs.sort();
    adjs.dedup();
    let mut merged = vec![];
    let mut warnings = vec![];
    for a in adjs {
        let per = select_prob_contexts(pool.get(a), k);
        merged.extend(per.selected);
        warnings.extend(per.warnings);
    }
    let mut global = select_prob_contexts(merged, k);
    global.warnings.splice(0..0, warnings);
    global
}

/// Uniform sample without replacement of `min(k, n)` records, returned in
/// pool order. Deterministic in `(pool order, k, seed)`.
pub fn select_default_contexts<'a>(
    pool: &[&'a ContextRecord],
    k: usize,
    seed: u64,
) -> Result<Vec<&'a ContextRecord>> {
    if pool.is_empty() {
        return Err(Error::Precondition(
            "empty context pool: pole cannot be represented".into(),
        ));
    }
    if pool.len() <= k {
        return Ok(pool.to_vec());
    }
    let mut rng = crate::rng::rng_from_seed(seed);
    let mut idx = index::sample(&mut rng, pool.len(), k).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| pool[i]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "glove")]
    Glove,
    #[serde(rename = "bert-default")]
    BertDefault,
    #[serde(rename = "bert-prob")]
    BertProb,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Glove => "glove",
            Method::BertDefault => "bert-default",
            Method::BertProb => "bert-prob",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "glove" | "static" => Some(Method::Glove),
            "bert-default" | "default" => Some(Method::BertDefault),
            "bert-prob" | "prob" => Some(Method::BertProb),
            _ => None,
        }
    }

    pub fn is_contextual(self) -> bool {
        !matches!(self, Method::Glove)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContextRef {
    pub adjective: String,
    pub context_id: String,
}

impl From<&ContextRecord> for ContextRef {
    fn from(r: &ContextRecord) -> Self {
        ContextRef {
            adjective: r.adjective.clone(),
            context_id: r.context_id.clone(),
        }
    }
}

/// Contexts chosen for both poles of one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSelection {
    pub axis_id: String,
    /// Method actually used (after any backoff).
    pub method: Method,
    pub backoff: Option<String>,
    pub left: Vec<ContextRef>,
    pub right: Vec<ContextRef>,
}

impl AxisSelection {
    pub fn side(&self, side: Side) -> &[ContextRef] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SelectionParams<'a> {
    pub k: usize,
    pub root_seed: u64,
    pub wp_vocab: Option<&'a HashSet<String>>,
}

fn default_side(
    pool: &ContextPool,
    spec: &AxisSpec,
    side: Side,
    k: usize,
    root_seed: u64,
) -> Result<Vec<ContextRef>> {
    let merged = pool.merged(&spec.pole(side).adjectives);
    let label = format!("select-default:{}:{}", spec.axis_id, side.name());
    let seed = crate::rng::derive_seed(root_seed, &label);
    Ok(select_default_contexts(&merged, k, seed)?
        .into_iter()
        .map(ContextRef::from)
        .collect())
}

/// Chooses contexts for both poles. `BertProb` falls back to `BertDefault`
/// for the whole axis when a pole has no single-wordpiece adjective or when
/// probability filtering leaves a pole empty.
pub fn select_for_axis(
    spec: &AxisSpec,
    pool: &ContextPool,
    method: Method,
    params: &SelectionParams<'_>,
) -> Result<AxisSelection> {
    let default = |backoff: Option<String>| -> Result<AxisSelection> {
        Ok(AxisSelection {
            axis_id: spec.axis_id.clone(),
            method: Method::BertDefault,
            backoff,
            left: default_side(pool, spec, Side::Left, params.k, params.root_seed)?,
            right: default_side(pool, spec, Side::Right, params.k, params.root_seed)?,
        })
    };
    match method {
        Method::Glove => Err(Error::Precondition(
            "static method does not select contexts".into(),
        )),
        Method::BertDefault => default(None),
        Method::BertProb => {
            if let Some(wp) = params.wp_vocab {
                for side in [Side::Left, Side::Right] {
                    if !single_wordpiece_pole(spec.pole(side), wp) {
                        return default(Some(format!(
                            "{} pole has no single-wordpiece adjective",
                            side.name()
                        )));
                    }
                }
            }
            let left = select_prob_pole(pool, &spec.left.adjectives, params.k);
            let right = select_prob_pole(pool, &spec.right.adjectives, params.k);
            for w in left.warnings.iter().chain(&right.warnings) {
                warn!("{}: {w}", spec.axis_id);
            }
            if left.selected.is_empty() || right.selected.is_empty() {
                let side = if left.selected.is_empty() { "left" } else { "right" };
                return default(Some(format!(
                    "probability filtering left the {side} pole empty"
                )));
            }
            Ok(AxisSelection {
                axis_id: spec.axis_id.clone(),
                method: Method::BertProb,
                backoff: None,
                left: left.selected.into_iter().map(ContextRef::from).collect(),
                right: right.selected.into_iter().map(ContextRef::from).collect(),
            })
        }
    }
}

pub fn write_selections(path: &Path, sels: &[AxisSelection]) -> Result<()> {
    let mut out = String::new();
    for s in sels {
        out.push_str(&serde_json::to_string(s)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_selections(path: &Path) -> Result<Vec<AxisSelection>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let label = path.display().to_string();
    fs::read_to_string(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(label.clone(), i + 1, e)))
        .collect()
}
