//! Scoring targets against axes, and the group contrasts built on top.

use std::cmp::Ordering;
use std::fmt::Write as _;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::axis::Axis;
use crate::embedding::{cosine, zscore, Embedding, ZScoreStats};
use crate::error::{Error, Result};
use crate::lexicon::Side;
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::{mean, mean_ci95, one_sample_t_test, quantile_sorted, Interval};

pub const DEFAULT_BOOTSTRAP: usize = 1000;
pub const DEFAULT_ALPHA: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisScore {
    pub target: String,
    pub axis_id: String,
    pub score: f64,
    pub assigned_pole: Side,
}

/// Positive scores go to the left pole; zero goes right.
pub fn assign_pole(score: f64) -> Side {
    if score > 0.0 {
        Side::Left
    } else {
        Side::Right
    }
}

/// Cosine of a target against an axis. Targets are standardized first when
/// the axis was built from z-scored embeddings.
pub fn axis_score(
    target_key: &str,
    target: &Embedding,
    axis: &Axis,
    stats: Option<&ZScoreStats>,
) -> Result<AxisScore> {
    let t = if axis.zscored {
        let s = stats.ok_or_else(|| {
            Error::Precondition(format!("axis {} is z-scored but no statistics were given", axis.axis_id()))
        })?;
        zscore(target, s)?
    } else {
        target.clone()
    };
    let score = cosine(&t, axis.vector())?;
    Ok(AxisScore {
        target: target_key.to_string(),
        axis_id: axis.axis_id().to_string(),
        score,
        assigned_pole: assign_pole(score),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPole {
    pub axis_id: String,
    pub pole: Side,
    /// Seed synset of the assigned pole, a readable label.
    pub label: String,
    pub magnitude: f64,
}

fn by_magnitude(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Axes ordered by |score| descending (ties by axis id), truncated to
/// `top_k`.
pub fn rank_poles(
    target: &Embedding,
    axes: &[Axis],
    stats: Option<&ZScoreStats>,
    top_k: usize,
) -> Result<Vec<RankedPole>> {
    let mut out = axes
        .iter()
        .map(|a| {
            let s = axis_score("", target, a, stats)?;
            Ok(RankedPole {
                axis_id: s.axis_id,
                pole: s.assigned_pole,
                label: a.spec.pole(s.assigned_pole).seed_synset.clone(),
                magnitude: s.score.abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| by_magnitude((a.magnitude, &a.axis_id), (b.magnitude, &b.axis_id)));
    out.truncate(top_k);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bootstrap {
    /// Mean of the resample means.
    pub mean: f64,
    /// 2.5th and 97.5th percentiles of the resample means.
    pub ci95: Interval,
}

pub fn bootstrap_mean(scores: &[f64], b: usize, seed: u64) -> Result<Bootstrap> {
    if scores.is_empty() {
        return Err(Error::Precondition("bootstrap needs at least one score".into()));
    }
    if b == 0 {
        return Err(Error::Precondition("bootstrap needs at least one resample".into()));
    }
    let n = scores.len();
    let mut rng = rng_from_seed(seed);
    // Sum deviations from the first score so a constant sample stays exact.
    let x0 = scores[0];
    let mut means: Vec<f64> = (0..b)
        .map(|_| x0 + (0..n).map(|_| scores[rng.random_range(0..n)] - x0).sum::<f64>() / n as f64)
        .collect();
    let m = x0 + means.iter().map(|v| v - x0).sum::<f64>() / b as f64;
    means.sort_by(f64::total_cmp);
    Ok(Bootstrap {
        mean: m,
        ci95: Interval {
            lo: quantile_sorted(&means, 0.025),
            hi: quantile_sorted(&means, 0.975),
        },
    })
}

/// Per-axis scores of one category and of the background it is compared to.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisGroups {
    pub axis_id: String,
    pub category: Vec<f64>,
    pub background: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "+")]
    Up,
    #[serde(rename = "-")]
    Down,
}

impl Direction {
    pub fn symbol(self) -> &'static str {
        match self {
            Direction::Up => "+",
            Direction::Down => "-",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastResult {
    pub axis_id: String,
    pub category_mean: f64,
    pub background_mean: f64,
    pub difference: f64,
    pub direction: Direction,
    pub t: f64,
    pub p_value: f64,
    pub ci95: Interval,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastParams {
    pub bootstrap: usize,
    pub alpha: f64,
    pub root_seed: u64,
    /// Null value of the t-test; `None` uses the background mean.
    pub null_value: Option<f64>,
}

impl Default for ContrastParams {
    fn default() -> Self {
        ContrastParams {
            bootstrap: DEFAULT_BOOTSTRAP,
            alpha: DEFAULT_ALPHA,
            root_seed: 0,
            null_value: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContrastReport {
    /// Every tested axis, in input order.
    pub tested: Vec<ContrastResult>,
    /// Axes with fewer than two category scores or no background.
    pub excluded: Vec<String>,
}

impl ContrastReport {
    /// Significant results ranked by |difference| descending.
    pub fn significant(&self) -> Vec<&ContrastResult> {
        let mut out: Vec<&ContrastResult> = self.tested.iter().filter(|r| r.significant).collect();
        out.sort_by(|a, b| {
            by_magnitude((a.difference.abs(), &a.axis_id), (b.difference.abs(), &b.axis_id))
        });
        out
    }
}

/// One-sample t-test of each axis's category scores against the background
/// mean, with a bootstrap interval on the category mean. Bootstrap seeds are
/// derived from the axis id.
pub fn contrast_experiment(groups: &[AxisGroups], params: &ContrastParams) -> Result<ContrastReport> {
    let mut report = ContrastReport::default();
    for g in groups {
        if g.category.len() < 2 || g.background.is_empty() {
            warn!("{}: excluded from contrast ({} category scores)", g.axis_id, g.category.len());
            report.excluded.push(g.axis_id.clone());
            continue;
        }
        let background_mean = mean(&g.background);
        let mu0 = params.null_value.unwrap_or(background_mean);
        let test = one_sample_t_test(&g.category, mu0).expect("n >= 2");
        let seed = derive_seed(params.root_seed, &format!("bootstrap:{}", g.axis_id));
        let boot = bootstrap_mean(&g.category, params.bootstrap, seed)?;
        let category_mean = mean(&g.category);
        let difference = category_mean - background_mean;
        report.tested.push(ContrastResult {
            axis_id: g.axis_id.clone(),
            category_mean,
            background_mean,
            difference,
            direction: if difference >= 0.0 { Direction::Up } else { Direction::Down },
            t: test.t,
            p_value: test.p_value,
            ci95: boot.ci95,
            significant: test.p_value < params.alpha,
        });
    }
    Ok(report)
}

pub fn contrast_to_tsv(results: &[&ContrastResult]) -> String {
    let mut s = String::from(
        "axis_id\tcategory_mean\tbackground_mean\tdifference\tdirection\tt\tp_value\tci_lo\tci_hi\tsignificant\n",
    );
    for r in results {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.axis_id,
            r.category_mean,
            r.background_mean,
            r.difference,
            r.direction.symbol(),
            r.t,
            r.p_value,
            r.ci95.lo,
            r.ci95.hi,
            r.significant
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanDifference {
    pub axis_id: String,
    pub mean_a: f64,
    pub ci_a: Option<Interval>,
    pub mean_b: f64,
    pub ci_b: Option<Interval>,
    pub difference: f64,
}

/// Axes ranked by |mean(A) - mean(B)| descending, ties by axis id.
pub fn mean_difference_ranking(groups: &[(String, Vec<f64>, Vec<f64>)]) -> Result<Vec<MeanDifference>> {
    let mut out = Vec::with_capacity(groups.len());
    for (axis_id, a, b) in groups {
        if a.is_empty() || b.is_empty() {
            return Err(Error::Precondition(format!("{axis_id}: both groups need scores")));
        }
        let (mean_a, ci_a) = mean_ci95(a);
        let (mean_b, ci_b) = mean_ci95(b);
        out.push(MeanDifference {
            axis_id: axis_id.clone(),
            mean_a,
            ci_a,
            mean_b,
            ci_b,
            difference: mean_a - mean_b,
        });
    }
    out.sort_by(|x, y| by_magnitude((x.difference.abs(), &x.axis_id), (y.difference.abs(), &y.axis_id)));
    Ok(out)
}

fn ci_cells(ci: &Option<Interval>) -> String {
    match ci {
        Some(c) => format!("{}\t{}", c.lo, c.hi),
        None => "\t".into(),
    }
}

pub fn mean_difference_to_tsv(rows: &[MeanDifference]) -> String {
    let mut s = String::from("axis_id\tmean_a\tci_a_lo\tci_a_hi\tmean_b\tci_b_lo\tci_b_hi\tdifference\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.axis_id,
            r.mean_a,
            ci_cells(&r.ci_a),
            r.mean_b,
            ci_cells(&r.ci_b),
            r.difference
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::Method;
    use crate::lexicon::{AxisSpec, Pole};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn e(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn axis(id: &str, v: &[f64], zscored: bool) -> Axis {
        let pole = |s: &str| Pole {
            seed_synset: s.into(),
            adjectives: vec![s.into()],
        };
        Axis {
            spec: AxisSpec {
                axis_id: id.into(),
                left: pole(&format!("{id}-l")),
                right: pole(&format!("{id}-r")),
            },
            vector: Some(e(v)),
            method: Method::Glove,
            zscored,
            backoff: None,
            left_sources: vec![],
            right_sources: vec![],
        }
    }

    #[test]
    fn self_and_orthogonal() {
        let a = axis("a", &[0.3, -0.4], false);
        let s = axis_score("t", &e(&[0.3, -0.4]), &a, None).unwrap();
        assert!((s.score - 1.0).abs() < 1e-12);
        assert_eq!(s.assigned_pole, Side::Left);
        let s = axis_score("t", &e(&[0.4, 0.3]), &a, None).unwrap();
        assert!(s.score.abs() < 1e-12);
        let s = axis_score("t", &e(&[0.0, 1.0]), &axis("b", &[1.0, 0.0], false), None).unwrap();
        assert_eq!(s.score, 0.0);
        assert_eq!(s.assigned_pole, Side::Right);
    }

    #[test]
    fn zscored_axis_requires_stats() {
        let a = axis("a", &[1.0, 0.0], true);
        assert!(axis_score("t", &e(&[1.0, 0.0]), &a, None).is_err());
        let stats = ZScoreStats::new(vec![1.0, 0.0], vec![1.0, 1.0], 2).unwrap();
        let s = axis_score("t", &e(&[3.0, 0.0]), &a, Some(&stats)).unwrap();
        assert!((s.score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn arithmetic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let t: Vec<f64> = (0..9).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v: Vec<f64> = (0..9).map(|_| rng.random_range(-2.0..2.0)).collect();
            let dot: f64 = t.iter().zip(&v).map(|(a, b)| a * b).sum();
            let want = dot / (t.iter().map(|x| x * x).sum::<f64>().sqrt() * v.iter().map(|x| x * x).sum::<f64>().sqrt());
            let got = axis_score("t", &e(&t), &axis("a", &v, false), None).unwrap().score;
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn forced_rank_order() {
        // Build axes so the target's cosines are 0.9, -0.95 and 0.1.
        let target = e(&[1.0, 0.0]);
        let mk = |id: &str, c: f64| axis(id, &[c, (1.0 - c * c).sqrt()], false);
        let axes = vec![mk("A", 0.9), mk("B", -0.95), mk("C", 0.1)];
        let r = rank_poles(&target, &axes, None, 2).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!((r[0].axis_id.as_str(), r[0].pole), ("B", Side::Right));
        assert_eq!((r[1].axis_id.as_str(), r[1].pole), ("A", Side::Left));
        assert_eq!(r[0].label, "B-r");
        let single = rank_poles(&target, &axes[2..], None, 5).unwrap();
        assert_eq!(single[0].axis_id, "C");
    }

    #[test]
    fn bootstrap_degenerate_and_symmetric() {
        let b = bootstrap_mean(&[0.7; 12], 200, 1).unwrap();
        assert_eq!(b.mean, 0.7);
        assert_eq!((b.ci95.lo, b.ci95.hi), (0.7, 0.7));
        let b = bootstrap_mean(&[0.0, 1.0], 5000, 2).unwrap();
        assert!((b.mean - 0.5).abs() < 0.05);
    }

    #[test]
    fn bootstrap_replays_seed_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = bootstrap_mean(&xs, 300, 42).unwrap();
        // Replay: same generator, same draw order.
        let mut r = rng_from_seed(42);
        let mut means = vec![];
        for _ in 0..300 {
            let mut s = 0.0;
            for _ in 0..30 {
                s += xs[r.random_range(0..30)];
            }
            means.push(s / 30.0);
        }
        let m = means.iter().sum::<f64>() / 300.0;
        let tol = 1e-12;
        means.sort_by(f64::total_cmp);
        assert!((got.mean - m).abs() < tol);
        assert!((got.ci95.lo - quantile_sorted(&means, 0.025)).abs() < tol);
        assert_eq!(got, bootstrap_mean(&xs, 300, 42).unwrap());
    }

    #[test]
    fn contrast_null_and_forced() {
        let bg = vec![0.1, 0.2, 0.3, 0.2, 0.2];
        let groups = vec![
            AxisGroups { axis_id: "null".into(), category: vec![0.2; 10], background: bg.clone() },
            AxisGroups {
                axis_id: "shift".into(),
                category: (0..10).map(|i| 1.2 + 0.001 * i as f64).collect(),
                background: bg.clone(),
            },
            AxisGroups { axis_id: "tiny".into(), category: vec![0.3], background: bg },
        ];
        let rep = contrast_experiment(&groups, &ContrastParams { bootstrap: 100, ..Default::default() }).unwrap();
        assert_eq!(rep.excluded, ["tiny"]);
        let sig = rep.significant();
        assert_eq!(sig.len(), 1);
        assert_eq!(sig[0].axis_id, "shift");
        assert_eq!(sig[0].direction, Direction::Up);
        assert!(!rep.tested[0].significant);
    }

    #[test]
    fn mean_difference_forced_order() {
        let base: Vec<f64> = vec![0.1, 0.2, 0.3];
        let groups = vec![
            ("a".to_string(), base.clone(), base.clone()),
            ("b".to_string(), base.iter().map(|x| x + 0.2).collect(), base.clone()),
        ];
        let r = mean_difference_ranking(&groups).unwrap();
        assert_eq!(r[0].axis_id, "b");
        assert!((r[0].difference - 0.2).abs() < 1e-12);
        assert!(r[1].difference.abs() < 1e-15);
    }
}
