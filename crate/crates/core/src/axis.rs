//! Realizing axis specifications as direction vectors.
//!
//! An axis vector is the mean of the left pole's embeddings minus the mean
//! of the right pole's. Vectors are stored unnormalized.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::context::{select_for_axis, AxisSelection, ContextPool, ContextRef, Method, SelectionParams};
use crate::embedding::{context_key, mean_pool, zscore, Embedding, EmbeddingSet, ZScoreStats};
use crate::error::{Error, Result};
use crate::format;
use crate::lexicon::{AxisSpec, Side};

/// How a pole's embeddings are averaged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// Every selected context embedding weighs the same.
    #[default]
    Contexts,
    /// Average within each adjective first, then across adjectives.
    AdjectiveFirst,
}

/// Embeddings of one pole grouped by adjective (sorted).
pub type PoleEmbeddings = BTreeMap<String, Vec<Embedding>>;

fn pole_mean(pole: &PoleEmbeddings, pooling: Pooling) -> Option<Result<Embedding>> {
    let all: Vec<&Embedding> = pole.values().flatten().collect();
    if all.is_empty() {
        return None;
    }
    Some(match pooling {
        Pooling::Contexts => mean_pool(all),
        Pooling::AdjectiveFirst => pole
            .values()
            .filter(|v| !v.is_empty())
            .map(mean_pool)
            .collect::<Result<Vec<_>>>()
            .and_then(|means| mean_pool(&means)),
    })
}

/// `mean(left) - mean(right)`; inputs are z-scored first when `stats` is
/// given.
pub fn build_axis(
    left: &[Embedding],
    right: &[Embedding],
    stats: Option<&ZScoreStats>,
) -> Result<Embedding> {
    if left.is_empty() {
        return Err(Error::EmptyPole("left"));
    }
    if right.is_empty() {
        return Err(Error::EmptyPole("right"));
    }
    let prep = |es: &[Embedding]| -> Result<Vec<Embedding>> {
        match stats {
            Some(s) => es.iter().map(|e| zscore(e, s)).collect(),
            None => Ok(es.to_vec()),
        }
    };
    let l = mean_pool(&prep(left)?)?;
    let r = mean_pool(&prep(right)?)?;
    l.sub(&r)
}

/// Axis vector from adjective-grouped embeddings (already standardized if
/// needed).
pub fn axis_from_poles(
    left: &PoleEmbeddings,
    right: &PoleEmbeddings,
    pooling: Pooling,
) -> Result<Embedding> {
    let l = pole_mean(left, pooling).ok_or(Error::EmptyPole("left"))??;
    let r = pole_mean(right, pooling).ok_or(Error::EmptyPole("right"))??;
    l.sub(&r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub spec: AxisSpec,
    #[serde(skip)]
    pub vector: Option<Embedding>,
    pub method: Method,
    pub zscored: bool,
    pub backoff: Option<String>,
    pub left_sources: Vec<ContextRef>,
    pub right_sources: Vec<ContextRef>,
}

impl Axis {
    pub fn axis_id(&self) -> &str {
        &self.spec.axis_id
    }

    pub fn vector(&self) -> &Embedding {
        self.vector.as_ref().expect("axis vector is set after realization")
    }

    pub fn sources(&self, side: Side) -> &[ContextRef] {
        match side {
            Side::Left => &self.left_sources,
            Side::Right => &self.right_sources,
        }
    }

    /// Key under which the vector is stored in a SAXE file.
    pub fn store_key(&self) -> String {
        store_key(&self.spec.axis_id, self.method, self.zscored)
    }
}

pub fn store_key(axis_id: &str, method: Method, zscored: bool) -> String {
    format!(
        "axis:{axis_id}:{}:{}",
        method.name(),
        if zscored { "z" } else { "raw" }
    )
}

/// Where pole embeddings come from.
pub enum EmbeddingSource<'a> {
    /// One type-level vector per word key.
    Static(&'a EmbeddingSet),
    /// Per-context vectors keyed `word#context_id`, chosen from a pool.
    Contextual {
        embeddings: &'a EmbeddingSet,
        pool: &'a ContextPool,
        wp_vocab: Option<&'a HashSet<String>>,
    },
}

#[derive(Debug, Clone)]
pub struct RealizeOptions<'a> {
    pub method: Method,
    pub stats: Option<&'a ZScoreStats>,
    pub seed: u64,
    pub context_k: usize,
    pub pooling: Pooling,
}

impl RealizeOptions<'_> {
    pub fn zscored(&self) -> bool {
        self.stats.is_some()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Realized {
    pub axes: Vec<Axis>,
    pub skipped: Vec<(String, String)>,
}

fn standardize(e: &Embedding, stats: Option<&ZScoreStats>) -> Result<Embedding> {
    match stats {
        Some(s) => zscore(e, s),
        None => Ok(e.clone()),
    }
}

/// Looks up (and standardizes) the embeddings behind a list of sources.
/// Sources without an embedding are dropped.
pub fn gather_pole(
    sources: &[ContextRef],
    set: &EmbeddingSet,
    stats: Option<&ZScoreStats>,
) -> Result<PoleEmbeddings> {
    let mut out = PoleEmbeddings::new();
    for s in sources {
        let found: Vec<&Embedding> = if s.context_id.is_empty() {
            set.first(&s.adjective).into_iter().collect()
        } else {
            set.get(&context_key(&s.adjective, &s.context_id))
                .unwrap_or_default()
                .iter()
                .collect()
        };
        for e in found {
            out.entry(s.adjective.clone())
                .or_default()
                .push(standardize(e, stats)?);
        }
    }
    Ok(out)
}

fn static_sources(spec: &AxisSpec, side: Side, set: &EmbeddingSet) -> Vec<ContextRef> {
    spec.pole(side)
        .adjectives
        .iter()
        .filter(|a| set.first(a).is_some())
        .map(|a| ContextRef {
            adjective: a.clone(),
            context_id: String::new(),
        })
        .collect()
}

fn keep_available(refs: &[ContextRef], set: &EmbeddingSet) -> Vec<ContextRef> {
    refs.iter()
        .filter(|r| set.get(&context_key(&r.adjective, &r.context_id)).is_some())
        .cloned()
        .collect()
}

/// Realizes every spec under one method variant. Specs lacking usable
/// embeddings on either side are skipped and reported.
pub fn realize_all(
    specs: &[AxisSpec],
    source: &EmbeddingSource<'_>,
    opts: &RealizeOptions<'_>,
) -> Result<Realized> {
    let mut out = Realized::default();
    for spec in specs {
        let (method, backoff, left_sources, right_sources, set) = match source {
            EmbeddingSource::Static(set) => {
                if opts.method != Method::Glove {
                    return Err(Error::Precondition(format!(
                        "{} needs contextual embeddings",
                        opts.method
                    )));
                }
                (
                    Method::Glove,
                    None,
                    static_sources(spec, Side::Left, set),
                    static_sources(spec, Side::Right, set),
                    *set,
                )
            }
            EmbeddingSource::Contextual {
                embeddings,
                pool,
                wp_vocab,
            } => {
                let params = SelectionParams {
                    k: opts.context_k,
                    root_seed: opts.seed,
                    wp_vocab: *wp_vocab,
                };
                let sel: AxisSelection = match select_for_axis(spec, pool, opts.method, &params) {
                    Ok(s) => s,
                    Err(e) => {
                        warn!("{}: skipped: {e}", spec.axis_id);
                        out.skipped.push((spec.axis_id.clone(), e.to_string()));
                        continue;
                    }
                };
                if let Some(b) = &sel.backoff {
                    info!("{}: backoff to {}: {b}", spec.axis_id, sel.method);
                }
                (
                    sel.method,
                    sel.backoff.clone(),
                    keep_available(&sel.left, embeddings),
                    keep_available(&sel.right, embeddings),
                    *embeddings,
                )
            }
        };
        if left_sources.is_empty() || right_sources.is_empty() {
            let side = if left_sources.is_empty() { "left" } else { "right" };
            let reason = format!("no usable embeddings on the {side} pole");
            warn!("{}: skipped: {reason}", spec.axis_id);
            out.skipped.push((spec.axis_id.clone(), reason));
            continue;
        }
        let left = gather_pole(&left_sources, set, opts.stats)?;
        let right = gather_pole(&right_sources, set, opts.stats)?;
        let vector = axis_from_poles(&left, &right, opts.pooling)?;
        out.axes.push(Axis {
            spec: spec.clone(),
            vector: Some(vector),
            method,
            zscored: opts.zscored(),
            backoff,
            left_sources,
            right_sources,
        });
    }
    Ok(out)
}

/// Writes axis vectors to a SAXE file and their metadata to a JSON-lines
/// manifest (one record per axis, same order as the vectors' keys).
pub fn write_axis_store(saxe: &Path, manifest: &Path, axes: &[Axis]) -> Result<()> {
    let dim = axes
        .first()
        .map(|a| a.vector().dim())
        .unwrap_or(1);
    let mut set = EmbeddingSet::new(dim)?;
    let mut sorted: Vec<&Axis> = axes.iter().collect();
    sorted.sort_by_key(|a| a.store_key());
    let mut text = String::new();
    for a in sorted {
        set.push(a.store_key(), a.vector().clone())?;
        text.push_str(&serde_json::to_string(a)?);
        text.push('\n');
    }
    format::write_embeddings(saxe, &set)?;
    fs::write(manifest, text)?;
    Ok(())
}

/// Reads axes written by [`write_axis_store`]. Vectors are widened from the
/// stored `f32`.
pub fn read_axis_store(saxe: &Path, manifest: &Path) -> Result<Vec<Axis>> {
    let set = format::load_embeddings(saxe)?;
    if !manifest.exists() {
        return Err(Error::MissingFile(manifest.to_path_buf()));
    }
    let label = manifest.display().to_string();
    let mut axes = vec![];
    for (i, line) in fs::read_to_string(manifest)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut a: Axis =
            serde_json::from_str(line).map_err(|e| Error::parse(label.clone(), i + 1, e))?;
        let key = a.store_key();
        let v = set
            .first(&key)
            .ok_or_else(|| Error::parse(label.clone(), i + 1, format!("no vector for {key}")))?;
        a.vector = Some(v.clone());
        axes.push(a);
    }
    Ok(axes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::ContextRecord;
    use crate::lexicon::Pole;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn rand_vecs(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Embedding> {
        (0..n)
            .map(|_| emb(&(0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()))
            .collect()
    }

    #[test]
    fn symmetric_pair_doubles() {
        let e1 = emb(&[1.0, 0.0, 0.0]);
        let v = build_axis(std::slice::from_ref(&e1), &[e1.scale(-1.0)], None).unwrap();
        assert_eq!(v.values(), &[2.0, 0.0, 0.0]);
    }

    #[test]
    fn identical_sides_cancel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let es = rand_vecs(&mut rng, 4, 5);
        let v = build_axis(&es, &es, None).unwrap();
        assert!(v.values().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn empty_side_named() {
        let e = emb(&[1.0]);
        assert!(matches!(build_axis(&[], std::slice::from_ref(&e), None), Err(Error::EmptyPole("left"))));
        assert!(matches!(build_axis(&[e], &[], None), Err(Error::EmptyPole("right"))));
    }

    #[test]
    fn matches_independent_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = rand_vecs(&mut rng, 5, 6);
        let r = rand_vecs(&mut rng, 5, 6);
        let v = build_axis(&l, &r, None).unwrap();
        for d in 0..6 {
            let mut sl = 0.0;
            let mut sr = 0.0;
            for i in 0..5 {
                sl += l[i].values()[d];
                sr += r[i].values()[d];
            }
            assert!((v.values()[d] - (sl / 5.0 - sr / 5.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn zscored_inputs() {
        let stats = ZScoreStats::new(vec![1.0, 1.0], vec![2.0, 2.0], 3).unwrap();
        let v = build_axis(&[emb(&[3.0, 5.0])], &[emb(&[1.0, 1.0])], Some(&stats)).unwrap();
        assert_eq!(v.values(), &[1.0, 2.0]);
    }

    #[test]
    fn adjective_first_pooling_differs_from_context_pooling() {
        let mut left = PoleEmbeddings::new();
        left.insert("a".into(), vec![emb(&[1.0]), emb(&[1.0]), emb(&[1.0])]);
        left.insert("b".into(), vec![emb(&[0.0])]);
        let mut right = PoleEmbeddings::new();
        right.insert("c".into(), vec![emb(&[0.0])]);
        let ctx = axis_from_poles(&left, &right, Pooling::Contexts).unwrap();
        let adj = axis_from_poles(&left, &right, Pooling::AdjectiveFirst).unwrap();
        assert_eq!(ctx.values(), &[0.75]);
        assert_eq!(adj.values(), &[0.5]);
    }

    fn spec(id: &str, l: &[&str], r: &[&str]) -> AxisSpec {
        let pole = |s: &str, ws: &[&str]| Pole {
            seed_synset: s.into(),
            adjectives: ws.iter().map(|w| w.to_string()).collect(),
        };
        AxisSpec {
            axis_id: id.into(),
            left: pole("l", l),
            right: pole("r", r),
        }
    }

    #[test]
    fn glove_realization_counts_sources() {
        let mut set = EmbeddingSet::new(2).unwrap();
        for (w, v) in [("a", [1.0, 0.0]), ("b", [0.0, 1.0]), ("c", [-1.0, 0.0]), ("d", [0.0, -1.0]), ("e", [2.0, 2.0])] {
            set.push(w, emb(&v)).unwrap();
        }
        let specs = vec![spec("s1", &["a", "b"], &["c", "d", "e"]), spec("s2", &["a"], &["zz"])];
        let opts = RealizeOptions {
            method: Method::Glove,
            stats: None,
            seed: 0,
            context_k: 100,
            pooling: Pooling::Contexts,
        };
        let out = realize_all(&specs, &EmbeddingSource::Static(&set), &opts).unwrap();
        assert_eq!(out.axes.len(), 1);
        assert_eq!(out.skipped.len(), 1);
        let ax = &out.axes[0];
        assert_eq!(ax.left_sources.len(), 2);
        assert_eq!(ax.right_sources.len(), 3);
        // mean(a,b) = (.5,.5); mean(c,d,e) = (1/3, 1/3)
        assert!((ax.vector().values()[0] - (0.5 - 1.0 / 3.0)).abs() < 1e-12);
    }

    fn ctx(id: &str, adj: &str, syn: f64, ant: f64) -> ContextRecord {
        ContextRecord {
            context_id: id.into(),
            adjective: adj.into(),
            tokens: vec!["w".into(); 12],
            target_index: 0,
            syn_probs: [("s".to_string(), syn)].into_iter().collect(),
            ant_probs: [("a".to_string(), ant)].into_iter().collect(),
        }
    }

    #[test]
    fn contextual_backoff_is_recorded() {
        let recs = vec![ctx("1", "good", 0.5, 0.1), ctx("2", "bad", 0.5, 0.1)];
        let (pool, _) = ContextPool::from_records(recs, 1000);
        let mut set = EmbeddingSet::new(2).unwrap();
        set.push(context_key("good", "1"), emb(&[1.0, 0.0])).unwrap();
        set.push(context_key("bad", "2"), emb(&[0.0, 1.0])).unwrap();
        let wp: HashSet<String> = ["good".to_string()].into_iter().collect();
        let source = EmbeddingSource::Contextual {
            embeddings: &set,
            pool: &pool,
            wp_vocab: Some(&wp),
        };
        let opts = RealizeOptions {
            method: Method::BertProb,
            stats: None,
            seed: 3,
            context_k: 100,
            pooling: Pooling::Contexts,
        };
        let out = realize_all(&[spec("s", &["good"], &["bad"])], &source, &opts).unwrap();
        let ax = &out.axes[0];
        assert_eq!(ax.method, Method::BertDefault);
        assert!(ax.backoff.is_some());
        assert_eq!(ax.vector().values(), &[1.0, -1.0]);
    }

    #[test]
    fn store_round_trip() {
        let mut set = EmbeddingSet::new(2).unwrap();
        for (w, v) in [("a", [1.0, 0.5]), ("b", [0.25, 1.0]), ("c", [-1.0, 0.0])] {
            set.push(w, emb(&v)).unwrap();
        }
        let opts = RealizeOptions {
            method: Method::Glove,
            stats: None,
            seed: 0,
            context_k: 100,
            pooling: Pooling::Contexts,
        };
        let axes = realize_all(&[spec("s1", &["a", "b"], &["c"])], &EmbeddingSource::Static(&set), &opts)
            .unwrap()
            .axes;
        let dir = tempfile::tempdir().unwrap();
        let (p, m) = (dir.path().join("axes.saxe"), dir.path().join("axes.jsonl"));
        write_axis_store(&p, &m, &axes).unwrap();
        let back = read_axis_store(&p, &m).unwrap();
        assert_eq!(back, axes);
        let keys: Vec<String> = format::load_embeddings(&p).unwrap().keys().map(String::from).collect();
        assert_eq!(keys, ["axis:s1:glove:raw"]);
    }
}
