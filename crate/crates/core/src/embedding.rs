//! Dense embeddings, embedding sets and per-dimension standardization.
//!
//! Vectors are held as `f64` in memory so that axis arithmetic stays exact to
//! well below `f32` resolution; the on-disk format ([`crate::format`]) stores
//! `f32` and widens on read.

use indexmap::IndexMap;

use crate::error::{Error, Result};

/// Standard deviations below this are clamped before dividing.
pub const STD_FLOOR: f64 = 1e-8;

/// Separator between a word and a context id inside an embedding key.
pub const CONTEXT_SEP: char = '#';

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Precondition("embedding must have dim > 0".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding".into()));
        }
        Ok(Embedding { values })
    }

    pub fn zeros(dim: usize) -> Self {
        Embedding {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> Embedding {
        Embedding {
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn sub(&self, other: &Embedding) -> Result<Embedding> {
        check_dim(self.dim(), other.dim())?;
        Ok(Embedding {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn add(&self, other: &Embedding) -> Result<Embedding> {
        check_dim(self.dim(), other.dim())?;
        Ok(Embedding {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimMismatch { expected, found });
    }
    Ok(())
}

/// Cosine similarity; errors if either vector has zero norm.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 {
        return Err(Error::ZeroNorm("first cosine argument".into()));
    }
    if nb == 0.0 {
        return Err(Error::ZeroNorm("second cosine argument".into()));
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Builds the key used for a contextual embedding of `word` in `context_id`.
pub fn context_key(word: &str, context_id: &str) -> String {
    format!("{word}{CONTEXT_SEP}{context_id}")
}

/// Splits a key into `(word, Some(context_id))`, or `(word, None)` for a
/// type-level key.
pub fn split_key(key: &str) -> (&str, Option<&str>) {
    match key.split_once(CONTEXT_SEP) {
        Some((w, c)) => (w, Some(c)),
        None => (key, None),
    }
}

/// A keyed collection of embeddings sharing one dimensionality. Keys keep
/// the order in which they were inserted (or stored on disk).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    entries: IndexMap<String, Vec<Embedding>>,
}

impl EmbeddingSet {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Precondition("embedding set dim must be > 0".into()));
        }
        Ok(EmbeddingSet {
            dim,
            entries: IndexMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn push(&mut self, key: impl Into<String>, embedding: Embedding) -> Result<()> {
        check_dim(self.dim, embedding.dim())?;
        self.entries.entry(key.into()).or_default().push(embedding);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&[Embedding]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    /// First embedding stored under `key`.
    pub fn first(&self, key: &str) -> Option<&Embedding> {
        self.entries.get(key).and_then(|v| v.first())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Embedding])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Every embedding in the set, in key order.
    pub fn embeddings(&self) -> impl Iterator<Item = &Embedding> {
        self.entries.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn embedding_count(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }
}

/// Componentwise arithmetic mean.
pub fn mean_pool<'a, I>(parts: I) -> Result<Embedding>
where
    I: IntoIterator<Item = &'a Embedding>,
{
    let mut iter = parts.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::Precondition("mean_pool requires at least one embedding".into()))?;
    let mut acc = first.values.clone();
    let mut n = 1usize;
    for e in iter {
        check_dim(acc.len(), e.dim())?;
        for (a, v) in acc.iter_mut().zip(&e.values) {
            *a += v;
        }
        n += 1;
    }
    let inv = n as f64;
    acc.iter_mut().for_each(|a| *a /= inv);
    Ok(Embedding { values: acc })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZScoreStats {
    mean: Vec<f64>,
    std: Vec<f64>,
    sample_count: usize,
}

impl ZScoreStats {
    /// Builds stats from explicit vectors, clamping std components to
    /// [`STD_FLOOR`].
    pub fn new(mean: Vec<f64>, std: Vec<f64>, sample_count: usize) -> Result<Self> {
        check_dim(mean.len(), std.len())?;
        if mean.is_empty() || sample_count == 0 {
            return Err(Error::Precondition("z-score stats must be non-empty".into()));
        }
        let std = std.into_iter().map(|s| s.max(STD_FLOOR)).collect();
        Ok(ZScoreStats {
            mean,
            std,
            sample_count,
        })
    }

    pub fn identity(dim: usize) -> Self {
        ZScoreStats {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
            sample_count: 1,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }
}

/// Per-dimension mean and population standard deviation over every
/// embedding in the iterator (every occurrence counts once).
pub fn compute_zscore_stats<'a, I>(embeddings: I) -> Result<ZScoreStats>
where
    I: IntoIterator<Item = &'a Embedding>,
{
    let all: Vec<&Embedding> = embeddings.into_iter().collect();
    if all.len() < 2 {
        return Err(Error::Precondition(format!(
            "z-score stats need at least 2 embeddings, got {}",
            all.len()
        )));
    }
    let mean = mean_pool(all.iter().copied())?.values;
    let n = all.len() as f64;
    let mut var = vec![0.0; mean.len()];
    for e in &all {
        for ((acc, v), m) in var.iter_mut().zip(&e.values).zip(&mean) {
            let d = v - m;
            *acc += d * d;
        }
    }
    let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
    ZScoreStats::new(mean, std, all.len())
}

pub fn compute_set_stats(set: &EmbeddingSet) -> Result<ZScoreStats> {
    compute_zscore_stats(set.embeddings())
}

pub fn zscore(e: &Embedding, stats: &ZScoreStats) -> Result<Embedding> {
    check_dim(stats.dim(), e.dim())?;
    Ok(Embedding {
        values: e
            .values
            .iter()
            .zip(stats.mean.iter().zip(&stats.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect(),
    })
}

/// Inverse of [`zscore`].
pub fn unzscore(z: &Embedding, stats: &ZScoreStats) -> Result<Embedding> {
    check_dim(stats.dim(), z.dim())?;
    Ok(Embedding {
        values: z
            .values
            .iter()
            .zip(stats.mean.iter().zip(&stats.std))
            .map(|(v, (m, s))| v * s + m)
            .collect(),
    })
}
