//! Deterministic toy data for demos and end-to-end tests.
//!
//! Given the realized axis specs, every adjective's vector is built from
//! per-axis directions (plus an offset and noise), so axes computed from the
//! toy files point where they should. A small timestamped corpus exercises
//! ingestion, and [`extract_occurrences`] stands in for the external
//! embedding extractor.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::context::ContextRecord;
use crate::corpus::Occurrence;
use crate::embedding::{context_key, Embedding, EmbeddingSet};
use crate::error::Result;
use crate::format::write_embeddings;
use crate::lexicon::{AxisSpec, Side};
use crate::rng::rng_for;

pub const TOY_DIM: usize = 16;
const DIRECTION_ROOT: u64 = 0x5a5e;
const MONTHS: i64 = 36;
/// 2019-01-01T00:00:00Z.
const START: i64 = 1_546_300_800;

/// Toy adjectives treated as splitting into several wordpieces.
const MULTI_PIECE: &[&str] = &["calm", "quiet", "silent", "lion_hearted", "courageous", "impoverished"];

const FILLER: &[&str] = &[
    "the", "a", "said", "that", "was", "really", "about", "this", "thread", "just", "like", "they", "it",
    "when", "people", "think", "know", "always", "never", "post", "read", "day", "time", "thing", "again",
    "here", "there", "what", "which", "so",
];

/// People terms, their category, and the month their usage peaks.
pub const PEOPLE: &[(&str, &str, i64)] = &[
    ("woman", "general", 4),
    ("women", "general", 4),
    ("man", "general", 10),
    ("men", "general", 10),
    ("nurse", "care", 16),
    ("nurses", "care", 16),
    ("doctor", "care", 22),
    ("doctors", "care", 22),
    ("chad", "archetype", 28),
    ("chads", "archetype", 28),
    ("stacy", "archetype", 33),
    ("stacies", "archetype", 33),
    ("incel", "slang", 4),
    ("incels", "slang", 16),
    ("femoid", "slang", 28),
    ("femoids", "slang", 33),
    ("red pill", "slang", 10),
];

pub const PLURALS: &[(&str, &str)] = &[
    ("women", "woman"),
    ("men", "man"),
    ("nurses", "nurse"),
    ("doctors", "doctor"),
    ("chads", "chad"),
    ("stacies", "stacy"),
    ("incels", "incel"),
    ("femoids", "femoid"),
];

/// Feminine and masculine pronoun cluster counts.
pub const PRONOUNS: &[(&str, u64, u64)] = &[
    ("nurse", 30, 5),
    ("doctor", 6, 30),
    ("chad", 2, 8),
    ("stacy", 9, 0),
    ("incel", 1, 25),
    ("femoid", 12, 3),
    ("red pill", 3, 3),
];

/// Variant pairs for the lexical-variant comparison.
pub const GROUPS: &[(&str, &str)] = &[
    ("woman", "standard"),
    ("women", "standard"),
    ("femoid", "variant"),
    ("femoids", "variant"),
];

fn normal(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    Normal::new(0.0, sd).expect("sd > 0").sample(rng)
}

fn unit_direction(seed: u64, label: &str) -> Vec<f64> {
    let mut rng = rng_for(seed, label);
    let v: Vec<f64> = (0..TOY_DIM).map(|_| normal(&mut rng, 1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Per-axis unit directions keyed by axis id. They do not depend on the
/// seed, so data generated and extracted under different seeds agree.
pub fn axis_directions(specs: &[AxisSpec]) -> BTreeMap<String, Vec<f64>> {
    specs
        .iter()
        .map(|s| (s.axis_id.clone(), unit_direction(DIRECTION_ROOT, &format!("toy-axis:{}", s.axis_id))))
        .collect()
}

fn offset() -> Vec<f64> {
    (0..TOY_DIM).map(|i| 0.5 + 0.05 * i as f64).collect()
}

fn add_scaled(acc: &mut [f64], v: &[f64], s: f64) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += s * b;
    }
}

fn emb(v: Vec<f64>) -> Embedding {
    Embedding::new(v).expect("finite toy vector")
}

/// Static vector of a word: its pole memberships, a shared offset, noise.
fn word_vector(word: &str, specs: &[AxisSpec], dirs: &BTreeMap<String, Vec<f64>>, seed: u64) -> Vec<f64> {
    let mut v = offset();
    for s in specs {
        for side in [Side::Left, Side::Right] {
            if s.pole(side).adjectives.iter().any(|a| a == word) {
                let sign = if side == Side::Left { 1.0 } else { -1.0 };
                add_scaled(&mut v, &dirs[&s.axis_id], 2.0 * sign);
            }
        }
    }
    let mut rng = rng_for(seed, &format!("toy-word:{word}"));
    for x in v.iter_mut() {
        *x += normal(&mut rng, 0.35);
    }
    v
}

fn pole_adjectives(specs: &[AxisSpec]) -> BTreeSet<String> {
    specs
        .iter()
        .flat_map(|s| s.left.adjectives.iter().chain(&s.right.adjectives).cloned())
        .collect()
}

pub fn wp_vocab(vocab: &BTreeSet<String>) -> BTreeSet<String> {
    vocab
        .iter()
        .filter(|w| !MULTI_PIECE.contains(&w.as_str()) && !w.contains('_'))
        .cloned()
        .collect()
}

pub fn static_embeddings(
    vocab: &BTreeSet<String>,
    specs: &[AxisSpec],
    seed: u64,
) -> Result<EmbeddingSet> {
    let dirs = axis_directions(specs);
    let mut set = EmbeddingSet::new(TOY_DIM)?;
    for w in vocab {
        set.push(w.clone(), emb(word_vector(w, specs, &dirs, seed)))?;
    }
    Ok(set)
}

/// Context records and their embeddings for every pole adjective. About a
/// quarter of contexts use the word in an off sense: antonyms outscore
/// synonyms and the embedding leans the other way.
pub fn context_data(
    specs: &[AxisSpec],
    wp: &BTreeSet<String>,
    seed: u64,
) -> Result<(Vec<ContextRecord>, EmbeddingSet)> {
    let dirs = axis_directions(specs);
    let base = offset();
    let mut records = vec![];
    let mut set = EmbeddingSet::new(TOY_DIM)?;
    for adj in pole_adjectives(specs) {
        let mut rng = rng_for(seed, &format!("toy-contexts:{adj}"));
        let (syn, ant): (BTreeSet<&String>, BTreeSet<&String>) = {
            let mut syn = BTreeSet::new();
            let mut ant = BTreeSet::new();
            for s in specs {
                for side in [Side::Left, Side::Right] {
                    if s.pole(side).adjectives.contains(&adj) {
                        syn.extend(s.pole(side).adjectives.iter().filter(|w| wp.contains(*w)));
                        ant.extend(s.pole(side.other()).adjectives.iter().filter(|w| wp.contains(*w)));
                    }
                }
            }
            (syn, ant)
        };
        let word = word_vector(&adj, specs, &dirs, seed);
        let n = rng.random_range(6..14);
        for c in 0..n {
            let len = rng.random_range(8..28);
            let target = rng.random_range(0..len);
            let tokens: Vec<String> = (0..len)
                .map(|i| {
                    if i == target {
                        adj.clone()
                    } else {
                        FILLER[rng.random_range(0..FILLER.len())].to_string()
                    }
                })
                .collect();
            let off_sense = rng.random_bool(0.25);
            let (hi, lo) = if off_sense { (&ant, &syn) } else { (&syn, &ant) };
            let mut probs = |words: &BTreeSet<&String>, range: std::ops::Range<f64>| -> BTreeMap<String, f64> {
                words.iter().map(|w| ((*w).clone(), rng.random_range(range.clone()))).collect()
            };
            let hi_p = probs(hi, 0.10..0.40);
            let lo_p = probs(lo, 0.001..0.08);
            let (syn_probs, ant_probs) = if off_sense { (lo_p, hi_p) } else { (hi_p, lo_p) };
            let context_id = format!("{adj}-{c:02}");
            let mut v = base.clone();
            let sign = if off_sense { -0.4 } else { 1.0 };
            for (i, x) in v.iter_mut().enumerate() {
                *x += sign * (word[i] - base[i]) + normal(&mut rng, 0.5);
            }
            set.push(context_key(&adj, &context_id), emb(v))?;
            records.push(ContextRecord {
                context_id,
                adjective: adj.clone(),
                tokens,
                target_index: target,
                syn_probs,
                ant_probs,
            });
        }
    }
    Ok((records, set))
}

fn category_of(term: &str) -> Option<(&'static str, i64)> {
    PEOPLE.iter().find(|p| p.0 == term).map(|p| (p.1, p.2))
}

/// Corpus JSON lines spanning 36 months, including one bot author and a
/// few duplicated forum posts.
pub fn corpus_jsonl(seed: u64) -> String {
    let mut rng = rng_for(seed, "toy-corpus");
    let mut out = String::new();
    let mut id = 0usize;
    let mut push = |out: &mut String, ts: i64, platform: &str, community: &str, author: &str, text: &str| {
        let rec = serde_json::json!({
            "id": format!("d{id:05}"),
            "created_utc": ts,
            "platform": platform,
            "community": community,
            "author": author,
            "text": text,
        });
        id += 1;
        out.push_str(&rec.to_string());
        out.push('\n');
    };
    let communities = [("reddit", "r/alpha"), ("reddit", "r/beta"), ("forum", "f/gamma")];
    let mut forum_posts = vec![];
    for m in 0..MONTHS {
        let month_start = START + m * 30 * 86_400 + (m / 12) * 5 * 86_400 + (m * 11 / 24) * 86_400;
        for _ in 0..24 {
            let (platform, community) = communities[rng.random_range(0..communities.len())];
            let author = format!("user{}", rng.random_range(0..20));
            let mut sentences = vec![];
            for _ in 0..rng.random_range(1..4) {
                let mut words: Vec<String> =
                    (0..rng.random_range(4..12)).map(|_| FILLER[rng.random_range(0..FILLER.len())].to_string()).collect();
                for (term, _, peak) in PEOPLE {
                    let dist = (m - peak).abs() as f64;
                    let p = 0.02 + 0.35 * (-dist * dist / 8.0).exp();
                    if rng.random_bool(p) {
                        let at = rng.random_range(0..=words.len());
                        words.insert(at, term.to_string());
                    }
                }
                sentences.push(format!("{} .", words.join(" ")));
            }
            let text = sentences.join(" ");
            let ts = month_start + rng.random_range(0..20 * 86_400);
            if platform == "forum" {
                forum_posts.push((ts, author.clone(), text.clone()));
            }
            push(&mut out, ts, platform, community, &author, &text);
        }
    }
    let spam = "buy cheap followers now at the best price on the whole web today";
    for i in 0..110 {
        push(&mut out, START + i * 3_600, "forum", "f/gamma", "spambot", spam);
    }
    for (ts, author, text) in forum_posts.iter().step_by(9).take(5) {
        push(&mut out, ts + 60, "forum", "f/gamma", author, text);
    }
    out
}

/// Stand-in for the contextual extractor: one vector per occurrence keyed
/// `term#occ_id`. Categories lean along fixed axes; `slang` drifts over
/// time and the `variant` group sits further toward the second pole of
/// the cleanliness axis.
pub fn extract_occurrences(
    occs: &[Occurrence],
    specs: &[AxisSpec],
    seed: u64,
) -> Result<EmbeddingSet> {
    let dirs = axis_directions(specs);
    let dir = |id: &str| dirs.get(id).cloned().unwrap_or_else(|| vec![0.0; TOY_DIM]);
    let month0 = crate::corpus::month_of(START)?;
    let mut set = EmbeddingSet::new(TOY_DIM)?;
    for o in occs {
        let mut rng = rng_for(seed, &format!("toy-occ:{}", o.occ_id));
        let mut v = offset();
        let month = crate::timeseries::Month::parse(&o.month).unwrap_or(month0);
        let t = ((month.year - month0.year) * 12 + month.month as i32 - month0.month as i32) as f64;
        match category_of(&o.term).map(|c| c.0) {
            Some("care") => {
                add_scaled(&mut v, &dir("a01--a02"), 0.8);
                add_scaled(&mut v, &dir("a15--a16"), 0.6);
            }
            Some("archetype") => add_scaled(&mut v, &dir("a03--a04"), 0.9),
            Some("slang") => add_scaled(&mut v, &dir("a01--a02"), -0.6 - 0.02 * t),
            _ => {}
        }
        if GROUPS.iter().any(|g| g.0 == o.term && g.1 == "variant") {
            add_scaled(&mut v, &dir("a11--a12"), -0.8);
        }
        for x in v.iter_mut() {
            *x += normal(&mut rng, 0.4);
        }
        set.push(context_key(&o.term, &o.occ_id), emb(v))?;
    }
    Ok(set)
}

fn tsv<I: IntoIterator<Item = String>>(header: &str, rows: I) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        let _ = writeln!(s, "{r}");
    }
    s
}

/// Writes every derived toy input next to the hand-made lexicon files.
pub fn write_toy(dir: &Path, specs: &[AxisSpec], vocab: &HashSet<String>, seed: u64) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let vocab: BTreeSet<String> = vocab.iter().cloned().collect();
    let wp = wp_vocab(&vocab);
    let mut written = vec![];
    let mut put = |name: &str, text: String| -> Result<()> {
        fs::write(dir.join(name), text)?;
        written.push(name.to_string());
        Ok(())
    };
    put("wp_vocab.txt", wp.iter().map(|w| format!("{w}\n")).collect())?;
    let (records, ctx) = context_data(specs, &wp, seed)?;
    let mut pool = String::new();
    for r in &records {
        pool.push_str(&serde_json::to_string(r)?);
        pool.push('\n');
    }
    put("pool.jsonl", pool)?;
    put("corpus.jsonl", corpus_jsonl(seed))?;
    put("terms.txt", PEOPLE.iter().map(|p| format!("{}\n", p.0)).collect())?;
    put("plurals.tsv", tsv("plural\tsingular", PLURALS.iter().map(|(p, s)| format!("{p}\t{s}"))))?;
    put("pronouns.tsv", tsv("term\tfem_clusters\tmasc_clusters", PRONOUNS.iter().map(|(t, f, m)| format!("{t}\t{f}\t{m}"))))?;
    put("categories.tsv", tsv("term\tcategory", PEOPLE.iter().map(|(t, c, _)| format!("{t}\t{c}"))))?;
    put("groups.tsv", tsv("term\tgroup", GROUPS.iter().map(|(t, g)| format!("{t}\t{g}"))))?;
    write_embeddings(&dir.join("glove.saxe"), &static_embeddings(&vocab, specs, seed)?)?;
    written.push("glove.saxe".into());
    write_embeddings(&dir.join("contexts.saxe"), &ctx)?;
    written.push("contexts.saxe".into());
    Ok(written)
}

/// Config for a full run over the toy directory. Paths are relative to it.
pub const TOY_CONF: &str = "\
# Toy end-to-end run. Regenerate the data files with `saxe make-toy`.
db = synsets.jsonl
vocab = vocab.txt
wp_vocab = wp_vocab.txt
pool = pool.jsonl
embeddings = contexts.saxe
static_embeddings = glove.saxe
corpus = corpus.jsonl
terms = terms.txt
pronouns = pronouns.tsv
plurals = plurals.tsv
categories = categories.tsv
groups = groups.tsv
out = out

method = bert-prob
compare_methods = true
zscored = true
toy_extract = true
seed = 7
context_k = 5
bootstrap = 200
alpha = 0.01
vocab_min = 20
k = 3
restarts = 5
reservoir_k = 40
stratum_cap = 20
";

/// Builds the toy axes from `db` and `vocab`, then writes the lexicon
/// files, every derived input and `toy.conf` into `dir`.
pub fn make_toy(db: &Path, vocab: &Path, dir: &Path, seed: u64) -> Result<Vec<String>> {
    let synsets = crate::lexicon::SynsetDb::from_path(db)?;
    let words = crate::lexicon::read_word_list(vocab)?;
    let specs = crate::lexicon::build_axes(&synsets, &words, crate::lexicon::DEFAULT_MIN_POLE).axes;
    fs::create_dir_all(dir)?;
    for (src, name) in [(db, "synsets.jsonl"), (vocab, "vocab.txt")] {
        let dst = dir.join(name);
        if fs::canonicalize(src).ok() != fs::canonicalize(&dst).ok() {
            fs::copy(src, &dst)?;
        }
    }
    let mut written = write_toy(dir, &specs, &words, seed)?;
    fs::write(dir.join("toy.conf"), TOY_CONF)?;
    written.push("toy.conf".into());
    Ok(written)
}
