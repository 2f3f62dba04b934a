//! Acceptance checks. Run with `cargo test -p saxe-core --test acceptance`;
//! prints one PASS/FAIL line per criterion and exits nonzero on any failure.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use saxe::axis::{build_axis, PoleEmbeddings, Pooling};
use saxe::config::RunConfig;
use saxe::context::{select_prob_contexts, ContextRecord};
use saxe::embedding::{Embedding, EmbeddingSet};
use saxe::format::{decode, encode};
use saxe::lexicon::{axes_to_jsonl, build_axes, read_word_list, Side, SynsetDb, DEFAULT_MIN_POLE};
use saxe::pipeline::Pipeline;
use saxe::project::{bootstrap_mean, contrast_experiment, AxisGroups, ContrastParams};
use saxe::timeseries::{ksc_cluster, ksc_distance, ksc_init, ksc_run, KscParams};
use saxe::validate::{loo_cosine, pole_consistency};
use saxe::Error;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// Plain-slice helpers for the oracles; nothing here touches the library.

fn vmean(vs: &[&Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; vs[0].len()];
    for v in vs {
        for (a, b) in m.iter_mut().zip(v.iter()) {
            *a += b;
        }
    }
    m.iter().map(|x| x / vs.len() as f64).collect()
}

fn vsub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn vdot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn vcos(a: &[f64], b: &[f64]) -> f64 {
    vdot(a, b) / (vdot(a, a).sqrt() * vdot(b, b).sqrt())
}

type RawPole = BTreeMap<String, Vec<Vec<f64>>>;

fn raw_pole_mean(pole: &RawPole, pooling: Pooling) -> Vec<f64> {
    match pooling {
        Pooling::Contexts => vmean(&pole.values().flatten().collect::<Vec<_>>()),
        Pooling::AdjectiveFirst => {
            let means: Vec<Vec<f64>> = pole.values().map(|v| vmean(&v.iter().collect::<Vec<_>>())).collect();
            vmean(&means.iter().collect::<Vec<_>>())
        }
    }
}

/// Brute-force leave-one-out cosines and C for one pole.
fn oracle_consistency(left: &RawPole, right: &RawPole, side: Side, pooling: Pooling) -> (f64, Vec<(String, f64)>) {
    let pole = if side == Side::Left { left } else { right };
    let mut loo = vec![];
    for (adj, embs) in pole {
        let held = vmean(&embs.iter().collect::<Vec<_>>());
        let mut rest = pole.clone();
        rest.remove(adj);
        let (l, r) = match side {
            Side::Left => (raw_pole_mean(&rest, pooling), raw_pole_mean(right, pooling)),
            Side::Right => (raw_pole_mean(left, pooling), raw_pole_mean(&rest, pooling)),
        };
        loo.push((adj.clone(), vcos(&held, &vsub(&l, &r))));
    }
    let sign = if side == Side::Left { 1.0 } else { -1.0 };
    let c = sign * loo.iter().map(|x| x.1).sum::<f64>() / loo.len() as f64;
    (c, loo)
}

fn to_pole(raw: &RawPole) -> PoleEmbeddings {
    raw.iter()
        .map(|(k, vs)| (k.clone(), vs.iter().map(|v| Embedding::new(v.clone()).unwrap()).collect()))
        .collect()
}

fn random_raw_pole(r: &mut ChaCha8Rng, prefix: &str, dim: usize) -> RawPole {
    let n_adj = r.random_range(4..=6);
    (0..n_adj)
        .map(|i| {
            let n_emb = r.random_range(1..=3);
            let embs = (0..n_emb).map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
            (format!("{prefix}{i}"), embs)
        })
        .collect()
}

fn consistency_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(101);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..50 {
        let left = random_raw_pole(&mut r, "l", 8);
        let right = random_raw_pole(&mut r, "r", 8);
        let (pl, pr) = (to_pole(&left), to_pole(&right));
        for pooling in [Pooling::Contexts, Pooling::AdjectiveFirst] {
            for side in [Side::Left, Side::Right] {
                let (c, loo) = pole_consistency(&pl, &pr, side, pooling).map_err(|e| e.to_string())?;
                let (oc, oloo) = oracle_consistency(&left, &right, side, pooling);
                ensure(loo.len() == oloo.len(), || "adjective count differs".into())?;
                for ((a, x), (b, y)) in loo.iter().zip(&oloo) {
                    ensure(a == b, || format!("adjective order {a} vs {b}"))?;
                    let direct = loo_cosine(&pl, &pr, a, side, pooling).map_err(|e| e.to_string())?;
                    worst = worst.max((x - y).abs()).max((direct - y).abs());
                    checked += 1;
                }
                worst = worst.max((c - oc).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-9, || format!("max deviation {worst:e}"))?;
    ensure(secs < 5.0, || format!("took {secs:.2}s"))?;
    Ok(format!("{checked} leave-one-out cosines, max deviation {worst:.1e}, {secs:.2}s"))
}

fn axis_algebra() -> Outcome {
    let mut r = rng(202);
    let (mut trans, mut scale): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let dim = r.random_range(2..=32);
        let vecs = |n: usize, r: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..dim).map(|_| r.random_range(-2.0..2.0)).collect()).collect()
        };
        let (nl, nr) = (r.random_range(1..8), r.random_range(1..8));
        let left = vecs(nl, &mut r);
        let right = vecs(nr, &mut r);
        let shift: Vec<f64> = (0..dim).map(|_| r.random_range(-5.0..5.0)).collect();
        let s: f64 = r.random_range(0.1..10.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
        let emb = |vs: &[Vec<f64>], f: &dyn Fn(usize, f64) -> f64| -> Vec<Embedding> {
            vs.iter().map(|v| Embedding::new(v.iter().enumerate().map(|(i, x)| f(i, *x)).collect()).unwrap()).collect()
        };
        let id = |_: usize, x: f64| x;
        let base = build_axis(&emb(&left, &id), &emb(&right, &id), None).map_err(|e| e.to_string())?;
        let swapped = build_axis(&emb(&right, &id), &emb(&left, &id), None).map_err(|e| e.to_string())?;
        for (a, b) in base.values().iter().zip(swapped.values()) {
            ensure(a.to_bits() == (-b).to_bits() || (*a == 0.0 && *b == 0.0), || format!("swap gave {a} vs {b}"))?;
        }
        let tr = |i: usize, x: f64| x + shift[i];
        let moved = build_axis(&emb(&left, &tr), &emb(&right, &tr), None).map_err(|e| e.to_string())?;
        let sc = |_: usize, x: f64| x * s;
        let scaled = build_axis(&emb(&left, &sc), &emb(&right, &sc), None).map_err(|e| e.to_string())?;
        for ((a, m), z) in base.values().iter().zip(moved.values()).zip(scaled.values()) {
            trans = trans.max((a - m).abs());
            scale = scale.max((a * s - z).abs());
        }
    }
    ensure(trans <= 1e-9, || format!("translation deviation {trans:e}"))?;
    ensure(scale <= 1e-9, || format!("scale deviation {scale:e}"))?;
    Ok(format!("1000 axes, exact negation, translation {trans:.1e}, scale {scale:.1e}"))
}

fn ksc_identity() -> Outcome {
    let mut r = rng(303);
    let (mut ident, mut sym): (f64, f64) = (0.0, 0.0);
    let mut triple: f64 = 0.0;
    for _ in 0..10_000 {
        let t = r.random_range(2..=64);
        let mut v = || -> Vec<f64> {
            loop {
                let x: Vec<f64> = (0..t).map(|_| r.random_range(-10.0..10.0)).collect();
                if vdot(&x, &x) > 0.0 {
                    return x;
                }
            }
        };
        let (x, y) = (v(), v());
        let c = vcos(&x, &y);
        let dxy = ksc_distance(&x, &y).map_err(|e| e.to_string())?;
        let dyx = ksc_distance(&y, &x).map_err(|e| e.to_string())?;
        ident = ident.max((dxy - (1.0 - c * c).max(0.0).sqrt()).abs());
        sym = sym.max((dxy - dyx).abs());
        let x3: Vec<f64> = x.iter().map(|a| 3.0 * a).collect();
        triple = triple.max(ksc_distance(&x, &x3).map_err(|e| e.to_string())?);
    }
    ensure(ident <= 1e-9, || format!("identity deviation {ident:e}"))?;
    ensure(sym <= 1e-9, || format!("asymmetry {sym:e}"))?;
    ensure(triple <= 1e-12, || format!("d(x,3x) = {triple:e}"))?;
    Ok(format!("10000 pairs, identity {ident:.1e}, symmetry {sym:.1e}, d(x,3x) {triple:.1e}"))
}

/// Same partition up to relabeling.
fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let mut fwd = HashMap::new();
    let mut back = HashMap::new();
    a.iter().zip(b).all(|(x, y)| *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x)
}

fn ksc_recovery() -> Outcome {
    const T: usize = 84;
    const GROUPS: usize = 6;
    const PER: usize = 10;
    let mut recovered = 0;
    let mut runs_checked = 0;
    for run in 0..100u64 {
        let mut r = rng(4000 + run);
        let mut series = vec![];
        let mut truth = vec![];
        for g in 0..GROUPS {
            let center = 6.0 + 12.0 * g as f64;
            for _ in 0..PER {
                let peak = r.random_range(50.0..500.0);
                let noise = Normal::new(0.0, 0.05 * peak).unwrap();
                let s: Vec<f64> = (0..T)
                    .map(|t| {
                        let z = (t as f64 - center) / 2.5;
                        peak * (-0.5 * z * z).exp() + noise.sample(&mut r)
                    })
                    .collect();
                series.push(s);
                truth.push(g);
            }
        }
        let mut order: Vec<usize> = (0..series.len()).collect();
        order.shuffle(&mut r);
        let series: Vec<Vec<f64>> = order.iter().map(|&i| series[i].clone()).collect();
        let truth: Vec<usize> = order.iter().map(|&i| truth[i]).collect();
        let params = KscParams { k: GROUPS, seed: run, ..KscParams::default() };
        for restart in 0..params.restarts {
            let m = ksc_run(&series, &ksc_init(series.len(), GROUPS, run, restart), params.max_iters);
            for w in m.history.windows(2) {
                ensure(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), || {
                    format!("run {run} restart {restart}: objective rose {} -> {}", w[0], w[1])
                })?;
            }
            runs_checked += 1;
        }
        let model = ksc_cluster(&series, &params).map_err(|e| e.to_string())?;
        if same_partition(&model.assignments, &truth) {
            recovered += 1;
        }
    }
    ensure(recovered >= 95, || format!("recovered {recovered}/100"))?;
    Ok(format!("recovered {recovered}/100, objective monotone in {runs_checked} restarts"))
}

fn random_record(r: &mut ChaCha8Rng, i: usize) -> ContextRecord {
    let levels = [0.0, 0.1, 0.25, 0.5, 0.75, 1.0];
    let probs = |r: &mut ChaCha8Rng| -> BTreeMap<String, f64> {
        let n = if r.random_bool(0.1) { 0 } else { r.random_range(1..=3) };
        (0..n).map(|j| (format!("w{j}"), levels[r.random_range(0..levels.len())])).collect()
    };
    ContextRecord {
        context_id: format!("c{}", r.random_range(0..6)),
        adjective: format!("adj{}", r.random_range(0..3)),
        tokens: vec![format!("t{i}")],
        target_index: 0,
        syn_probs: probs(r),
        ant_probs: probs(r),
    }
}

fn oracle_mean(m: &BTreeMap<String, f64>) -> Option<f64> {
    (!m.is_empty()).then(|| m.values().sum::<f64>() / m.len() as f64)
}

/// Filter, then repeated first-minimum extraction, then truncate.
fn oracle_select(records: &[ContextRecord], k: usize) -> Vec<usize> {
    let mut left: Vec<(usize, f64)> = records
        .iter()
        .enumerate()
        .filter_map(|(i, rec)| match (oracle_mean(&rec.syn_probs), oracle_mean(&rec.ant_probs)) {
            (Some(s), Some(a)) if a <= s => Some((i, s)),
            _ => None,
        })
        .collect();
    let before = |a: &(usize, f64), b: &(usize, f64)| -> bool {
        let (ra, rb) = (&records[a.0], &records[b.0]);
        if a.1 != b.1 {
            return a.1 > b.1;
        }
        if ra.context_id != rb.context_id {
            return ra.context_id < rb.context_id;
        }
        ra.adjective < rb.adjective
    };
    let mut out = vec![];
    while !left.is_empty() && out.len() < k {
        let mut best = 0;
        for j in 1..left.len() {
            if before(&left[j], &left[best]) {
                best = j;
            }
        }
        out.push(left.remove(best).0);
    }
    out
}

fn selection_equivalence() -> Outcome {
    let mut r = rng(505);
    let mut ties = 0;
    for case in 0..20_000 {
        let n = r.random_range(0..=20);
        let records: Vec<ContextRecord> = (0..n).map(|i| random_record(&mut r, i)).collect();
        let k = r.random_range(0..=22);
        let got: Vec<usize> = select_prob_contexts(&records, k)
            .selected
            .iter()
            .map(|p| records.iter().position(|q| std::ptr::eq(*p, q)).unwrap())
            .collect();
        let want = oracle_select(&records, k);
        ensure(got == want, || format!("case {case}: got {got:?}, want {want:?}"))?;
        let sel: Vec<_> = want.iter().map(|&i| (oracle_mean(&records[i].syn_probs), &records[i].context_id)).collect();
        ties += sel.windows(2).filter(|w| w[0] == w[1]).count();
    }
    Ok(format!("20000 pools of <= 20 records, {ties} exact ties resolved identically"))
}

fn calibration() -> Outcome {
    let mut r = rng(606);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let trials = 10_000;
    let per_call = 100;
    let mut flagged = 0;
    for call in 0..trials / per_call {
        let groups: Vec<AxisGroups> = (0..per_call)
            .map(|i| AxisGroups {
                axis_id: format!("null{i}"),
                category: (0..10).map(|_| normal.sample(&mut r)).collect(),
                background: (0..2000).map(|_| normal.sample(&mut r)).collect(),
            })
            .collect();
        let params = ContrastParams { bootstrap: 10, alpha: 0.001, root_seed: call as u64, null_value: None };
        let rep = contrast_experiment(&groups, &params).map_err(|e| e.to_string())?;
        flagged += rep.tested.iter().filter(|t| t.significant).count();
    }
    let rate = flagged as f64 / trials as f64;
    ensure(rate <= 0.005, || format!("null flag rate {rate}"))?;

    let truth = 0.3;
    let dist = Normal::new(truth, 1.0).unwrap();
    let mut covered = 0;
    for t in 0..5000u64 {
        let xs: Vec<f64> = (0..30).map(|_| dist.sample(&mut r)).collect();
        let b = bootstrap_mean(&xs, 1000, 7000 + t).map_err(|e| e.to_string())?;
        if b.ci95.contains(truth) {
            covered += 1;
        }
    }
    let cov = covered as f64 / 5000.0;
    ensure((0.93..=0.97).contains(&cov), || format!("bootstrap coverage {cov}"))?;
    Ok(format!("null flag rate {rate:.4} at alpha 0.001, bootstrap coverage {cov:.4}"))
}

fn lexicon_fixture() -> Outcome {
    let dir = workspace().join("fixtures/toy");
    let db = SynsetDb::from_path(&dir.join("synsets.jsonl")).map_err(|e| e.to_string())?;
    let vocab = read_word_list(&dir.join("vocab.txt")).map_err(|e| e.to_string())?;
    let records = fs::read_to_string(dir.join("synsets.jsonl")).map_err(|e| e.to_string())?.lines().count();
    ensure(records == 40 && vocab.len() == 60, || format!("{records} synsets, {} vocab words", vocab.len()))?;
    let expected = fs::read_to_string(dir.join("expected_axes.jsonl")).map_err(|e| e.to_string())?;
    let first = axes_to_jsonl(&build_axes(&db, &vocab, DEFAULT_MIN_POLE).axes).map_err(|e| e.to_string())?;
    let second = axes_to_jsonl(&build_axes(&db, &vocab, DEFAULT_MIN_POLE).axes).map_err(|e| e.to_string())?;
    ensure(first == expected, || "axis set differs from the hand-traced expectation".into())?;
    ensure(first == second, || "reruns differ".into())?;
    Ok(format!("{} axes match the hand-traced set, reruns identical", first.lines().count()))
}

fn format_roundtrip() -> Outcome {
    let mut r = rng(808);
    let dim = 12;
    let mut set = EmbeddingSet::new(dim).unwrap();
    let specials = [0.0f32, -0.0, f32::MIN_POSITIVE, 1e-40, f32::MAX, -f32::MAX, f32::EPSILON];
    let keys: Vec<String> = (0..4000)
        .map(|i| {
            let len = r.random_range(1..12);
            let s: String = (0..len).map(|_| ['a', 'é', 'z', '#', '漢', '_'][r.random_range(0..6)]).collect();
            format!("{s}{i}")
        })
        .collect();
    for _ in 0..10_000 {
        let key = &keys[r.random_range(0..keys.len())];
        let v: Vec<f64> = (0..dim)
            .map(|_| {
                if r.random_bool(0.05) {
                    specials[r.random_range(0..specials.len())] as f64
                } else {
                    f32::from_bits(r.random::<u32>() & 0x7f7f_ffff | (r.random::<u32>() & 0x8000_0000)) as f64
                }
            })
            .collect();
        set.push(key.clone(), Embedding::new(v).unwrap()).unwrap();
    }
    let bytes = encode(&set).map_err(|e| e.to_string())?;
    let back = decode(&bytes).map_err(|e| e.to_string())?;
    ensure(back.embedding_count() == 10_000, || format!("{} records back", back.embedding_count()))?;
    for (k, embs) in set.iter() {
        let got = back.get(k).ok_or_else(|| format!("key {k} lost"))?;
        ensure(got.len() == embs.len(), || format!("key {k}: record count differs"))?;
        for (a, b) in embs.iter().zip(got) {
            ensure(
                a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()),
                || format!("key {k}: values differ"),
            )?;
        }
    }
    ensure(encode(&back).map_err(|e| e.to_string())? == bytes, || "re-encoding differs".into())?;

    let fx = workspace().join("fixtures/saxe");
    decode(&fs::read(fx.join("valid.saxe")).map_err(|e| e.to_string())?).map_err(|e| format!("valid.saxe: {e}"))?;
    let cases = [
        ("bad_magic.saxe", 0),
        ("bad_version.saxe", 4),
        ("zero_dim.saxe", 8),
        ("truncated_header.saxe", 12),
        ("count_overrun.saxe", 34),
        ("trailing_bytes.saxe", 34),
    ];
    for (name, want) in cases {
        let bytes = fs::read(fx.join(name)).map_err(|e| e.to_string())?;
        match decode(&bytes) {
            Err(Error::Format { offset, .. }) if offset == want => {}
            other => return Err(format!("{name}: expected format error at {want}, got {other:?}")),
        }
    }
    Ok(format!("10000 records bit-exact, {} corrupted fixtures rejected at the right offset", cases.len()))
}

fn run_toy(out: &Path) -> Result<(), String> {
    let mut cfg = RunConfig::load(&workspace().join("fixtures/toy/toy.conf")).map_err(|e| e.to_string())?;
    cfg.set("out", &out.display().to_string(), out).map_err(|e| e.to_string())?;
    Pipeline::new(cfg).and_then(|p| p.run_all()).map_err(|e| e.to_string())?;
    Ok(())
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_toy(&a)?;
    run_toy(&b)?;
    let secs = start.elapsed().as_secs_f64();
    let (ta, tb) = (tree(&a), tree(&b));
    ensure(ta.len() > 20, || format!("only {} output files", ta.len()))?;
    ensure(ta.keys().eq(tb.keys()), || "output file sets differ".into())?;
    for (p, bytes) in &ta {
        ensure(tb[p] == *bytes, || format!("{} differs between runs", p.display()))?;
    }
    ensure(secs < 60.0, || format!("two runs took {secs:.1}s"))?;
    Ok(format!("{} files byte-identical across two runs, {secs:.1}s total", ta.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("consistency oracle", consistency_oracle),
        ("axis algebra", axis_algebra),
        ("ksc distance identity", ksc_identity),
        ("ksc recovery", ksc_recovery),
        ("context selection equivalence", selection_equivalence),
        ("statistical calibration", calibration),
        ("lexicon fixture", lexicon_fixture),
        ("format round-trip", format_roundtrip),
        ("end-to-end determinism", end_to_end),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
