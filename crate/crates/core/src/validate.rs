//! Leave-one-out consistency of axis poles.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::axis::{axis_from_poles, PoleEmbeddings, Pooling};
use crate::context::Method;
use crate::embedding::{cosine, mean_pool};
use crate::error::{Error, Result};
use crate::lexicon::Side;
use crate::stats::{mean_ci95, mann_whitney_u, Interval, MannWhitney};

/// Cosine between a held-out adjective (its embeddings averaged) and the
/// axis rebuilt without it. Always measured against `left - right`, so a
/// well-placed right-pole adjective scores negative.
pub fn loo_cosine(
    left: &PoleEmbeddings,
    right: &PoleEmbeddings,
    held_out: &str,
    side: Side,
    pooling: Pooling,
) -> Result<f64> {
    let pole = match side {
        Side::Left => left,
        Side::Right => right,
    };
    let held = pole
        .get(held_out)
        .filter(|v| !v.is_empty())
        .ok_or_else(|| Error::Precondition(format!("{held_out} has no embeddings on the {} pole", side.name())))?;
    let mut rest = pole.clone();
    rest.remove(held_out);
    rest.retain(|_, v| !v.is_empty());
    if rest.is_empty() {
        return Err(Error::Precondition(format!(
            "holding out {held_out} empties the {} pole",
            side.name()
        )));
    }
    let target = mean_pool(held)?;
    let axis = match side {
        Side::Left => axis_from_poles(&rest, right, pooling)?,
        Side::Right => axis_from_poles(left, &rest, pooling)?,
    };
    cosine(&target, &axis)
}

/// Pole consistency C with per-adjective leave-one-out cosines. Right-pole
/// cosines are negated. C is exactly 0 when fewer than two distinct
/// adjectives contributed embeddings.
pub fn pole_consistency(
    left: &PoleEmbeddings,
    right: &PoleEmbeddings,
    side: Side,
    pooling: Pooling,
) -> Result<(f64, Vec<(String, f64)>)> {
    let pole = match side {
        Side::Left => left,
        Side::Right => right,
    };
    let adjectives: Vec<&String> = pole.iter().filter(|(_, v)| !v.is_empty()).map(|(k, _)| k).collect();
    if adjectives.is_empty() {
        return Err(Error::EmptyPole(side.name()));
    }
    if adjectives.len() < 2 {
        return Ok((0.0, vec![]));
    }
    let sign = match side {
        Side::Left => 1.0,
        Side::Right => -1.0,
    };
    let mut loo = Vec::with_capacity(adjectives.len());
    for a in adjectives {
        loo.push((a.clone(), loo_cosine(left, right, a, side, pooling)?));
    }
    let c = sign * loo.iter().map(|(_, x)| x).sum::<f64>() / loo.len() as f64;
    Ok((c, loo))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub axis_id: String,
    pub method: Method,
    pub zscored: bool,
    pub left_c: f64,
    pub right_c: f64,
    pub left_loo: Vec<(String, f64)>,
    pub right_loo: Vec<(String, f64)>,
    pub consistent: bool,
}

pub fn consistency_report(
    axis_id: &str,
    method: Method,
    zscored: bool,
    left: &PoleEmbeddings,
    right: &PoleEmbeddings,
    pooling: Pooling,
) -> Result<ConsistencyReport> {
    let (left_c, left_loo) = pole_consistency(left, right, Side::Left, pooling)?;
    let (right_c, right_loo) = pole_consistency(left, right, Side::Right, pooling)?;
    Ok(ConsistencyReport {
        axis_id: axis_id.to_string(),
        method,
        zscored,
        left_c,
        right_c,
        left_loo,
        right_loo,
        consistent: left_c >= 0.0 && right_c >= 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub zscored: bool,
    pub axis_count: usize,
    /// Mean over all pole-level C values (two per axis).
    pub mean_c: f64,
    pub ci95: Option<Interval>,
    pub consistent_count: usize,
    pub ci_method: String,
}

pub fn pole_values(reports: &[ConsistencyReport]) -> Vec<f64> {
    reports.iter().flat_map(|r| [r.left_c, r.right_c]).collect()
}

pub fn summarize_method(reports: &[ConsistencyReport]) -> Result<MethodSummary> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Precondition("no consistency reports to summarize".into()))?;
    let (mean_c, ci95) = mean_ci95(&pole_values(reports));
    Ok(MethodSummary {
        method: first.method,
        zscored: first.zscored,
        axis_count: reports.len(),
        mean_c,
        ci95,
        consistent_count: reports.iter().filter(|r| r.consistent).count(),
        ci_method: "normal approximation, mean +/- 1.96 standard errors".into(),
    })
}

/// Mann-Whitney U between two methods' pole-level C values.
pub fn compare_methods(a: &[ConsistencyReport], b: &[ConsistencyReport]) -> Option<MannWhitney> {
    mann_whitney_u(&pole_values(a), &pole_values(b))
}

pub fn reports_to_tsv(reports: &[ConsistencyReport]) -> String {
    let mut s = String::from("axis_id\tmethod\tzscored\tleft_C\tright_C\tconsistent\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.axis_id, r.method, r.zscored, r.left_c, r.right_c, r.consistent
        );
    }
    s
}

pub fn write_reports_tsv(path: &Path, reports: &[ConsistencyReport]) -> Result<()> {
    fs::write(path, reports_to_tsv(reports))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Embedding;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn e(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn pole(items: &[(&str, Vec<Embedding>)]) -> PoleEmbeddings {
        items.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn perfect_alignment() {
        let l = pole(&[("a", vec![e(&[1.0, 0.0])]), ("b", vec![e(&[1.0, 0.0])])]);
        let r = pole(&[("c", vec![e(&[-1.0, 0.0])])]);
        let c = loo_cosine(&l, &r, "a", Side::Left, Pooling::Contexts).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_holdout() {
        let l = pole(&[("a", vec![e(&[0.0, 1.0])]), ("b", vec![e(&[1.0, 0.0])])]);
        let r = pole(&[("c", vec![e(&[-1.0, 0.0])])]);
        let c = loo_cosine(&l, &r, "a", Side::Left, Pooling::Contexts).unwrap();
        assert!(c.abs() < 1e-12);
    }

    #[test]
    fn emptied_side_is_error() {
        let l = pole(&[("a", vec![e(&[1.0])])]);
        let r = pole(&[("c", vec![e(&[-1.0])])]);
        assert!(loo_cosine(&l, &r, "a", Side::Left, Pooling::Contexts).is_err());
    }

    #[test]
    fn right_pole_sign_convention() {
        let l = pole(&[("a", vec![e(&[1.0, 0.0])])]);
        let r = pole(&[("c", vec![e(&[-1.0, 0.0])]), ("d", vec![e(&[-1.0, 0.0])])]);
        let (c, loo) = pole_consistency(&l, &r, Side::Right, Pooling::Contexts).unwrap();
        assert!(loo.iter().all(|(_, x)| (x + 1.0).abs() < 1e-12));
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_adjective_zero_rule() {
        let l = pole(&[("a", vec![e(&[1.0, 0.2]), e(&[0.9, 0.1]), e(&[1.1, 0.0])])]);
        let r = pole(&[("c", vec![e(&[-1.0, 0.0])]), ("d", vec![e(&[-1.0, 0.5])])]);
        let rep = consistency_report("x", Method::BertProb, true, &l, &r, Pooling::Contexts).unwrap();
        assert_eq!(rep.left_c, 0.0);
        assert!(rep.left_loo.is_empty());
        assert!(rep.consistent);
    }

    fn rand_pole(rng: &mut ChaCha8Rng, names: &[&str], d: usize) -> PoleEmbeddings {
        names
            .iter()
            .map(|n| {
                let k = rng.random_range(1..4);
                let es = (0..k)
                    .map(|_| e(&(0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()))
                    .collect();
                (n.to_string(), es)
            })
            .collect()
    }

    // Brute force: flatten the remainder into plain lists and recompute.
    fn oracle_loo(l: &PoleEmbeddings, r: &PoleEmbeddings, held: &str, side: Side) -> f64 {
        let d = l.values().next().unwrap()[0].dim();
        let avg = |xs: Vec<&Embedding>| -> Vec<f64> {
            let mut m = vec![0.0; d];
            for x in &xs {
                for (acc, v) in m.iter_mut().zip(x.values()) {
                    *acc += v;
                }
            }
            m.iter().map(|v| v / xs.len() as f64).collect()
        };
        let pick = |p: &PoleEmbeddings, skip: Option<&str>| -> Vec<f64> {
            avg(p.iter().filter(|(k, _)| Some(k.as_str()) != skip).flat_map(|(_, v)| v).collect())
        };
        let (lm, rm, t) = match side {
            Side::Left => (pick(l, Some(held)), pick(r, None), avg(l[held].iter().collect())),
            Side::Right => (pick(l, None), pick(r, Some(held)), avg(r[held].iter().collect())),
        };
        let v: Vec<f64> = (0..d).map(|i| lm[i] - rm[i]).collect();
        let dot: f64 = (0..d).map(|i| v[i] * t[i]).sum();
        let nv: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nt: f64 = t.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (nv * nt)
    }

    #[test]
    fn loo_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let l = rand_pole(&mut rng, &["a", "b", "c", "d"], 7);
            let r = rand_pole(&mut rng, &["w", "x", "y", "z"], 7);
            let mut sum = 0.0;
            for k in ["w", "x", "y", "z"] {
                let got = loo_cosine(&l, &r, k, Side::Right, Pooling::Contexts).unwrap();
                let want = oracle_loo(&l, &r, k, Side::Right);
                assert!((got - want).abs() < 1e-9);
                sum -= want;
            }
            let (c, _) = pole_consistency(&l, &r, Side::Right, Pooling::Contexts).unwrap();
            assert!((c - sum / 4.0).abs() < 1e-9);
            for k in ["a", "b", "c", "d"] {
                let got = loo_cosine(&l, &r, k, Side::Left, Pooling::Contexts).unwrap();
                assert!((got - oracle_loo(&l, &r, k, Side::Left)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn negation_leaves_c_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = rand_pole(&mut rng, &["a", "b", "c"], 5);
        let r = rand_pole(&mut rng, &["x", "y", "z"], 5);
        let neg = |p: &PoleEmbeddings| -> PoleEmbeddings {
            p.iter().map(|(k, v)| (k.clone(), v.iter().map(|x| x.scale(-1.0)).collect())).collect()
        };
        let a = consistency_report("t", Method::Glove, false, &l, &r, Pooling::Contexts).unwrap();
        let b = consistency_report("t", Method::Glove, false, &neg(&l), &neg(&r), Pooling::Contexts).unwrap();
        assert!((a.left_c - b.left_c).abs() < 1e-12);
        assert!((a.right_c - b.right_c).abs() < 1e-12);
    }

    #[test]
    fn summary_of_single_axis() {
        let rep = ConsistencyReport {
            axis_id: "a".into(),
            method: Method::Glove,
            zscored: false,
            left_c: 0.5,
            right_c: 0.5,
            left_loo: vec![],
            right_loo: vec![],
            consistent: true,
        };
        let s = summarize_method(&[rep]).unwrap();
        assert_eq!(s.mean_c, 0.5);
        assert_eq!(s.consistent_count, 1);
        assert_eq!(s.ci95.unwrap().width(), 0.0);
    }
}
