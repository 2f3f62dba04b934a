//! Monthly frequency series and K-Spectral-Centroid clustering.
//!
//! The distance is the scale-invariant (but not shift-invariant) variant
//! `d(x, y) = |x - a*y| / |x|` with the optimal `a = x.y / |y|^2`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::stats::{mean_ci95, population_variance, Interval};

pub const DEFAULT_K: usize = 6;
pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_MAX_ITERS: usize = 100;
pub const DEFAULT_KERNEL: usize = 3;

/// A `YYYY-MM` month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    pub year: i32,
    pub month: u32,
}

impl Month {
    pub fn parse(s: &str) -> Option<Month> {
        let (y, m) = s.split_once('-')?;
        let month: u32 = m.parse().ok()?;
        if m.len() != 2 || !(1..=12).contains(&month) {
            return None;
        }
        Some(Month {
            year: y.parse().ok()?,
            month,
        })
    }

    pub fn next(self) -> Month {
        if self.month == 12 {
            Month { year: self.year + 1, month: 1 }
        } else {
            Month { year: self.year, month: self.month + 1 }
        }
    }

    /// Every month from `lo` to `hi` inclusive.
    pub fn range(lo: Month, hi: Month) -> Vec<Month> {
        let mut out = vec![];
        let mut m = lo;
        while m <= hi {
            out.push(m);
            m = m.next();
        }
        out
    }
}

impl std::fmt::Display for Month {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySeries {
    pub term: String,
    pub months: Vec<String>,
    pub values: Vec<f64>,
}

impl FrequencySeries {
    /// At least one month with a positive value.
    pub fn usable(&self) -> bool {
        self.values.iter().any(|v| *v > 0.0)
    }
}

fn parse_month(s: &str) -> Result<Month> {
    Month::parse(s).ok_or_else(|| Error::Precondition(format!("bad month key {s:?}")))
}

/// Month grid from the earliest to the latest month in `totals`.
pub fn month_grid(totals: &BTreeMap<String, u64>) -> Result<Vec<String>> {
    let months = totals.keys().map(|k| parse_month(k)).collect::<Result<BTreeSet<_>>>()?;
    match (months.first(), months.last()) {
        (Some(lo), Some(hi)) => Ok(Month::range(*lo, *hi).iter().map(Month::to_string).collect()),
        _ => Ok(vec![]),
    }
}

/// Share of each month's documents that contain the term. Months with no
/// documents give 0.
pub fn build_series(
    term: &str,
    counts: &BTreeMap<String, u64>,
    totals: &BTreeMap<String, u64>,
) -> Result<FrequencySeries> {
    let months = month_grid(totals)?;
    let mut values = Vec::with_capacity(months.len());
    for m in &months {
        let c = counts.get(m).copied().unwrap_or(0);
        let t = totals.get(m).copied().unwrap_or(0);
        if t == 0 {
            if c > 0 {
                warn!("{term}: {c} documents in {m}, which has no total");
            }
            values.push(0.0);
        } else {
            values.push(c as f64 / t as f64);
        }
    }
    let s = FrequencySeries {
        term: term.to_string(),
        months,
        values,
    };
    if !s.usable() {
        warn!("{term}: all-zero series, unusable for clustering");
    }
    Ok(s)
}

/// Centered moving average. Windows are truncated at the boundaries.
pub fn smooth(series: &FrequencySeries, kernel: usize) -> Result<FrequencySeries> {
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(Error::Precondition(format!("kernel must be odd and positive, got {kernel}")));
    }
    let h = kernel / 2;
    let n = series.values.len();
    let values = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(h);
            let hi = (i + h).min(n - 1);
            series.values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    Ok(FrequencySeries {
        term: series.term.clone(),
        months: series.months.clone(),
        values,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn ksc_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let nx = norm(x);
    let ny = norm(y);
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::ZeroNorm("series".into()));
    }
    let alpha = dot(x, y) / (ny * ny);
    let resid: f64 = x.iter().zip(y).map(|(a, b)| (a - alpha * b).powi(2)).sum::<f64>().sqrt();
    Ok((resid / nx).clamp(0.0, 1.0))
}

fn unit(x: &[f64]) -> Vec<f64> {
    let n = norm(x);
    x.iter().map(|v| v / n).collect()
}

/// Unit vector maximizing the summed squared cosine to `members` (rows
/// already unit-norm), oriented so its components sum to at least zero.
pub fn ksc_centroid(members: &[&[f64]]) -> Vec<f64> {
    let m = members.len();
    let t = members[0].len();
    let x = DMatrix::from_fn(m, t, |i, j| members[i][j]);
    let v: DVector<f64> = if m < t {
        let eig = SymmetricEigen::new(&x * x.transpose());
        let u = eig.eigenvectors.column(eig.eigenvalues.imax()).into_owned();
        x.transpose() * u
    } else {
        let eig = SymmetricEigen::new(x.transpose() * &x);
        eig.eigenvectors.column(eig.eigenvalues.imax()).into_owned()
    };
    let mut c: Vec<f64> = unit(v.as_slice());
    if c.iter().sum::<f64>() < 0.0 {
        c.iter_mut().for_each(|z| *z = -*z);
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KscParams {
    pub k: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for KscParams {
    fn default() -> Self {
        KscParams {
            k: DEFAULT_K,
            max_iters: DEFAULT_MAX_ITERS,
            seed: 0,
            restarts: DEFAULT_RESTARTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Cluster index per input series.
    pub assignments: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Sum of squared distances to assigned centroids.
    pub objective: f64,
    /// Objective after each centroid update.
    pub history: Vec<f64>,
    pub restart: usize,
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = ksc_distance(x, c).expect("nonzero series and unit centroids");
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn objective(series: &[Vec<f64>], centroids: &[Vec<f64>], assign: &[usize]) -> f64 {
    series
        .iter()
        .zip(assign)
        .map(|(x, &a)| ksc_distance(x, &centroids[a]).expect("nonzero").powi(2))
        .sum()
}

/// One clustering run from the given initial series indices.
pub fn ksc_run(series: &[Vec<f64>], init: &[usize], max_iters: usize) -> ClusterModel {
    let k = init.len();
    let mut centroids: Vec<Vec<f64>> = init.iter().map(|&i| unit(&series[i])).collect();
    let mut assign: Vec<usize> = vec![usize::MAX; series.len()];
    let mut history = vec![];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        let step: Vec<(usize, f64)> = series.iter().map(|x| nearest(x, &centroids)).collect();
        let next: Vec<usize> = step.iter().map(|s| s.0).collect();
        if next == assign {
            converged = true;
            break;
        }
        assign = next;
        iterations += 1;
        let mut taken = BTreeSet::new();
        for (j, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&[f64]> = series
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == j)
                .map(|(x, _)| x.as_slice())
                .collect();
            if members.is_empty() {
                // Reseed with the series farthest from its own centroid.
                let far = (0..series.len())
                    .filter(|i| !taken.contains(i))
                    .max_by(|&a, &b| step[a].1.total_cmp(&step[b].1).then(b.cmp(&a)))
                    .expect("at least k series");
                taken.insert(far);
                *centroid = unit(&series[far]);
            } else {
                let units: Vec<Vec<f64>> = members.iter().map(|x| unit(x)).collect();
                let refs: Vec<&[f64]> = units.iter().map(Vec::as_slice).collect();
                *centroid = ksc_centroid(&refs);
            }
        }
        history.push(objective(series, &centroids, &assign));
    }
    let obj = objective(series, &centroids, &assign);
    ClusterModel {
        k,
        centroids,
        assignments: assign,
        iterations,
        converged,
        objective: obj,
        history,
        restart: 0,
    }
}

/// Initial series indices for one restart.
pub fn ksc_init(n: usize, k: usize, seed: u64, restart: usize) -> Vec<usize> {
    let mut rng = rng_for(seed, &format!("ksc-restart:{restart}"));
    index::sample(&mut rng, n, k).into_vec()
}

/// Best of `restarts` runs by objective; earlier restarts win ties.
pub fn ksc_cluster(series: &[Vec<f64>], params: &KscParams) -> Result<ClusterModel> {
    if params.k == 0 || params.restarts == 0 {
        return Err(Error::Precondition("k and restarts must be positive".into()));
    }
    if series.len() < params.k {
        return Err(Error::Precondition(format!(
            "{} series is fewer than k = {}",
            series.len(),
            params.k
        )));
    }
    let len = series[0].len();
    for s in series {
        if s.len() != len {
            return Err(Error::DimMismatch { expected: len, found: s.len() });
        }
        if norm(s) == 0.0 || !s.iter().all(|v| v.is_finite()) {
            return Err(Error::Precondition("series must be finite with a positive value".into()));
        }
    }
    let mut best: Option<ClusterModel> = None;
    for r in 0..params.restarts {
        let init = ksc_init(series.len(), params.k, params.seed, r);
        let mut m = ksc_run(series, &init, params.max_iters);
        m.restart = r;
        if best.as_ref().is_none_or(|b| m.objective < b.objective) {
            best = Some(m);
        }
    }
    Ok(best.expect("restarts > 0"))
}

/// Clusters named series; unusable (all-zero) series are left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterOutput {
    #[serde(rename = "K")]
    pub k: usize,
    pub months: Vec<String>,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: BTreeMap<String, usize>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restart: usize,
    pub history: Vec<f64>,
    pub skipped: Vec<String>,
}

pub fn cluster_series(series: &[FrequencySeries], params: &KscParams) -> Result<ClusterOutput> {
    let (usable, skipped): (Vec<&FrequencySeries>, Vec<&FrequencySeries>) =
        series.iter().partition(|s| s.usable());
    let data: Vec<Vec<f64>> = usable.iter().map(|s| s.values.clone()).collect();
    let model = ksc_cluster(&data, params)?;
    Ok(ClusterOutput {
        k: model.k,
        months: usable.first().map(|s| s.months.clone()).unwrap_or_default(),
        centroids: model.centroids,
        assignments: usable
            .iter()
            .zip(&model.assignments)
            .map(|(s, &a)| (s.term.clone(), a))
            .collect(),
        objective: model.objective,
        iterations: model.iterations,
        converged: model.converged,
        restart: model.restart,
        history: model.history,
        skipped: skipped.iter().map(|s| s.term.clone()).collect(),
    })
}

/// Population variance of per-term scores on one axis.
pub fn axis_variance(scores: &[f64]) -> Result<f64> {
    if scores.len() < 2 {
        return Err(Error::Precondition("axis variance needs at least two scores".into()));
    }
    Ok(population_variance(scores))
}

/// Axes ordered by variance, largest first (ties by axis id).
pub fn rank_axis_variance(scores: &BTreeMap<String, Vec<f64>>) -> Result<Vec<(String, f64)>> {
    let mut out = scores
        .iter()
        .map(|(a, s)| Ok((a.clone(), axis_variance(s)?)))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreqHalf {
    Low,
    High,
}

impl FreqHalf {
    pub fn name(self) -> &'static str {
        match self {
            FreqHalf::Low => "low",
            FreqHalf::High => "high",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub cluster: usize,
    pub half: FreqHalf,
    pub axis_id: String,
    pub n: usize,
    pub mean: f64,
    pub ci95: Option<Interval>,
}

/// Mean axis score per (cluster, frequency half, axis). Terms above the
/// median overall frequency of the clustered terms form the high half.
pub fn cluster_axis_profile(
    assignments: &BTreeMap<String, usize>,
    frequency: &BTreeMap<String, f64>,
    scores: &BTreeMap<String, BTreeMap<String, f64>>,
) -> Result<Vec<ProfileRow>> {
    let mut freqs = assignments
        .keys()
        .map(|t| {
            frequency
                .get(t)
                .copied()
                .ok_or_else(|| Error::Precondition(format!("{t}: no overall frequency")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if freqs.is_empty() {
        return Ok(vec![]);
    }
    freqs.sort_by(f64::total_cmp);
    let median = crate::stats::quantile_sorted(&freqs, 0.5);
    let mut groups: BTreeMap<(usize, FreqHalf, &str), Vec<f64>> = BTreeMap::new();
    for (axis_id, per_term) in scores {
        for (term, &cluster) in assignments {
            let s = per_term
                .get(term)
                .ok_or_else(|| Error::Precondition(format!("{term}: no score on {axis_id}")))?;
            let half = if frequency[term] > median { FreqHalf::High } else { FreqHalf::Low };
            groups.entry((cluster, half, axis_id)).or_default().push(*s);
        }
    }
    Ok(groups
        .into_iter()
        .map(|((cluster, half, axis_id), xs)| {
            let (mean, ci95) = mean_ci95(&xs);
            ProfileRow {
                cluster,
                half,
                axis_id: axis_id.to_string(),
                n: xs.len(),
                mean,
                ci95,
            }
        })
        .collect())
}

pub fn series_to_tsv(series: &[FrequencySeries]) -> String {
    let mut s = String::from("term\tmonth\tvalue\n");
    for fs in series {
        for (m, v) in fs.months.iter().zip(&fs.values) {
            let _ = writeln!(s, "{}\t{m}\t{v}", fs.term);
        }
    }
    s
}

pub fn write_series(path: &Path, series: &[FrequencySeries]) -> Result<()> {
    fs::write(path, series_to_tsv(series))?;
    Ok(())
}

/// Reads a `term, month, value` TSV. Each term's months are put on the
/// shared grid from the file's earliest to latest month, zero-filled.
pub fn read_series(path: &Path) -> Result<Vec<FrequencySeries>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let label = path.display().to_string();
    let mut by_term: BTreeMap<String, BTreeMap<Month, f64>> = BTreeMap::new();
    for (i, line) in fs::read_to_string(path)?.lines().enumerate() {
        if i == 0 && line.starts_with("term\t") || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(label.clone(), i + 1, "expected term, month, value"));
        }
        let month = Month::parse(cols[1])
            .ok_or_else(|| Error::parse(label.clone(), i + 1, format!("bad month {:?}", cols[1])))?;
        let value: f64 = cols[2]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| Error::parse(label.clone(), i + 1, format!("bad value {:?}", cols[2])))?;
        by_term.entry(cols[0].to_string()).or_default().insert(month, value);
    }
    let all: BTreeSet<Month> = by_term.values().flat_map(|m| m.keys().copied()).collect();
    let grid = match (all.first(), all.last()) {
        (Some(lo), Some(hi)) => Month::range(*lo, *hi),
        _ => vec![],
    };
    let months: Vec<String> = grid.iter().map(Month::to_string).collect();
    Ok(by_term
        .into_iter()
        .map(|(term, vals)| FrequencySeries {
            term,
            months: months.clone(),
            values: grid.iter().map(|m| vals.get(m).copied().unwrap_or(0.0)).collect(),
        })
        .collect())
}

pub fn profile_to_tsv(rows: &[ProfileRow]) -> String {
    let mut s = String::from("cluster\thalf\taxis_id\tn\tmean\tci_lo\tci_hi\n");
    for r in rows {
        let (lo, hi) = match r.ci95 {
            Some(c) => (c.lo.to_string(), c.hi.to_string()),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}\t{lo}\t{hi}", r.cluster, r.half.name(), r.axis_id, r.n, r.mean);
    }
    s
}
