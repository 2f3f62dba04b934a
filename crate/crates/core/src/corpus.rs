//! Corpus ingestion, the people vocabulary, sampling and target rewriting.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::{DateTime, Datelike};
use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::timeseries::Month;

pub const BOT_NGRAM: usize = 10;
pub const BOT_MAX_REPEATS: usize = 100;
pub const DEFAULT_VOCAB_MIN: u64 = 500;
pub const DEFAULT_MIN_CLUSTERS: u64 = 10;
pub const DEFAULT_RESERVOIR_K: usize = 1000;
pub const DEFAULT_STRATUM_CAP: usize = 500;

/// Platforms whose posts are not deduplicated.
pub const NO_DEDUPE_PLATFORMS: &[&str] = &["reddit"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub timestamp: i64,
    pub platform: String,
    pub community: String,
    pub author: String,
    pub tokens: Vec<String>,
}

impl Document {
    pub fn month(&self) -> Result<Month> {
        month_of(self.timestamp)
    }
}

/// UTC month of a unix timestamp.
pub fn month_of(ts: i64) -> Result<Month> {
    let dt = DateTime::from_timestamp(ts, 0)
        .ok_or_else(|| Error::Precondition(format!("timestamp {ts} out of range")))?;
    Ok(Month {
        year: dt.year(),
        month: dt.month(),
    })
}

/// Lowercases and splits on whitespace; punctuation becomes its own token
/// except apostrophes inside words.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = vec![];
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut word = String::new();
        for (i, &c) in chars.iter().enumerate() {
            let inner_apostrophe = c == '\''
                && !word.is_empty()
                && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
            if c.is_alphanumeric() || inner_apostrophe {
                word.extend(c.to_lowercase());
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(c.to_string());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

#[derive(Debug, Deserialize)]
struct RawDocument {
    id: serde_json::Value,
    created_utc: serde_json::Value,
    platform: String,
    community: String,
    author: String,
    text: String,
}

fn value_string(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn value_timestamp(v: &serde_json::Value) -> Option<i64> {
    match v {
        serde_json::Value::Number(n) => n.as_i64().or_else(|| n.as_f64().map(|f| f.floor() as i64)),
        serde_json::Value::String(s) => s.trim().parse::<f64>().ok().map(|f| f.floor() as i64),
        _ => None,
    }
}

/// Reads `{id, created_utc, platform, community, author, text}` JSON lines.
/// Documents with no tokens are skipped.
pub fn read_raw_corpus(path: &Path) -> Result<Vec<Document>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let label = path.display().to_string();
    let mut out = vec![];
    for (i, line) in BufReader::new(fs::File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDocument = serde_json::from_str(&line).map_err(|e| Error::parse(label.clone(), i + 1, e))?;
        let doc_id = value_string(&raw.id).ok_or_else(|| Error::parse(label.clone(), i + 1, "bad id"))?;
        let timestamp = value_timestamp(&raw.created_utc)
            .ok_or_else(|| Error::parse(label.clone(), i + 1, "bad created_utc"))?;
        month_of(timestamp).map_err(|e| Error::parse(label.clone(), i + 1, e))?;
        let tokens = tokenize(&raw.text);
        if tokens.is_empty() {
            warn!("{label}:{}: document {doc_id} has no tokens, skipped", i + 1);
            continue;
        }
        out.push(Document {
            doc_id,
            timestamp,
            platform: raw.platform,
            community: raw.community,
            author: raw.author,
            tokens,
        });
    }
    Ok(out)
}

pub fn write_documents(path: &Path, docs: &[Document]) -> Result<()> {
    let mut s = String::new();
    for d in docs {
        s.push_str(&serde_json::to_string(d)?);
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_documents(path: &Path) -> Result<Vec<Document>> {
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

/// Authors repeating any 10-gram more than 100 times across their documents.
pub fn bot_filter(docs: &[Document]) -> BTreeSet<String> {
    let mut counts: HashMap<&str, HashMap<&[String], usize>> = HashMap::new();
    let mut flagged = BTreeSet::new();
    for d in docs {
        if flagged.contains(&d.author) {
            continue;
        }
        let per = counts.entry(d.author.as_str()).or_default();
        for g in d.tokens.windows(BOT_NGRAM) {
            let c = per.entry(g).or_insert(0);
            *c += 1;
            if *c > BOT_MAX_REPEATS {
                flagged.insert(d.author.clone());
                break;
            }
        }
    }
    flagged
}

/// Drops exact token-sequence duplicates (first one kept) outside the
/// exempt platforms.
pub fn dedupe(docs: Vec<Document>, exempt: &[&str]) -> (Vec<Document>, usize) {
    let mut seen: HashSet<(String, Vec<String>)> = HashSet::new();
    let before = docs.len();
    let kept: Vec<Document> = docs
        .into_iter()
        .filter(|d| exempt.contains(&d.platform.as_str()) || seen.insert((d.platform.clone(), d.tokens.clone())))
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub input_documents: usize,
    pub flagged_authors: Vec<String>,
    pub bot_documents: usize,
    pub duplicates: usize,
    pub kept_documents: usize,
}

/// Bot filtering then deduplication. Output is ordered by document id.
pub fn ingest(docs: Vec<Document>) -> (Vec<Document>, IngestSummary) {
    let input_documents = docs.len();
    let flagged = bot_filter(&docs);
    let before = docs.len();
    let docs: Vec<Document> = docs.into_iter().filter(|d| !flagged.contains(&d.author)).collect();
    let bot_documents = before - docs.len();
    let (mut docs, duplicates) = dedupe(docs, NO_DEDUPE_PLATFORMS);
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    let summary = IngestSummary {
        input_documents,
        flagged_authors: flagged.into_iter().collect(),
        bot_documents,
        duplicates,
        kept_documents: docs.len(),
    };
    (docs, summary)
}

fn term_tokens(term: &str) -> Vec<&str> {
    term.split_whitespace().collect()
}

/// Terms (unigrams or space-separated bigrams) present in a token list.
fn terms_in<'a>(tokens: &[String], terms: &'a HashSet<String>, max_len: usize) -> BTreeSet<&'a str> {
    let mut found = BTreeSet::new();
    for n in 1..=max_len {
        for w in tokens.windows(n) {
            if let Some(t) = terms.get(&w.join(" ")) {
                found.insert(t.as_str());
            }
        }
    }
    found
}

fn max_term_len(terms: &HashSet<String>) -> usize {
    terms.iter().map(|t| term_tokens(t).len()).max().unwrap_or(1)
}

/// Number of documents containing each term, counted once per document.
pub fn term_doc_counts(docs: &[Document], terms: &HashSet<String>) -> BTreeMap<String, u64> {
    let n = max_term_len(terms);
    let mut out = BTreeMap::new();
    for d in docs {
        for t in terms_in(&d.tokens, terms, n) {
            *out.entry(t.to_string()).or_insert(0) += 1;
        }
    }
    out
}

/// Per-term per-month document counts and per-month document totals.
#[allow(clippy::type_complexity)]
pub fn monthly_counts(
    docs: &[Document],
    terms: &HashSet<String>,
) -> Result<(BTreeMap<String, BTreeMap<String, u64>>, BTreeMap<String, u64>)> {
    let n = max_term_len(terms);
    let mut per_term: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    let mut totals: BTreeMap<String, u64> = BTreeMap::new();
    for d in docs {
        let m = d.month()?.to_string();
        *totals.entry(m.clone()).or_insert(0) += 1;
        for t in terms_in(&d.tokens, terms, n) {
            *per_term.entry(t.to_string()).or_default().entry(m.clone()).or_insert(0) += 1;
        }
    }
    Ok((per_term, totals))
}

/// Per-term per-month mention counts and per-month token totals, for
/// token-normalized frequencies.
#[allow(clippy::type_complexity)]
pub fn monthly_token_counts(
    docs: &[Document],
    terms: &HashSet<String>,
) -> Result<(BTreeMap<String, BTreeMap<String, u64>>, BTreeMap<String, u64>)> {
    let mut per_term: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    let mut totals: BTreeMap<String, u64> = BTreeMap::new();
    for d in docs {
        *totals.entry(d.month()?.to_string()).or_insert(0) += d.tokens.len() as u64;
    }
    for o in find_occurrences(docs, terms)? {
        *per_term.entry(o.term).or_default().entry(o.month).or_insert(0) += 1;
    }
    Ok((per_term, totals))
}

pub fn vocab_filter(counts: &BTreeMap<String, u64>, min_count: u64) -> BTreeMap<String, u64> {
    counts
        .iter()
        .filter(|(_, &c)| c >= min_count)
        .map(|(t, &c)| (t.clone(), c))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Fem,
    Masc,
}

const MASCULINE: &[&str] = &[
    "man", "men", "boy", "boys", "father", "fathers", "son", "sons", "brother", "brothers", "husband",
    "husbands", "uncle", "uncles", "nephew", "nephews", "emperor", "emperors", "king", "kings", "prince",
    "princes", "duke", "dukes", "lord", "lords", "knight", "knights", "waiter", "waiters", "actor", "actors",
    "god", "gods", "policeman", "policemen", "postman", "postmen", "hero", "heros", "wizard", "wizards",
    "steward", "stewards", "male", "males", "dude", "dudes", "guy", "guys", "boyfriend", "boyfriends", "bf",
    "bro", "transmen", "he",
];

const FEMININE: &[&str] = &[
    "woman", "women", "girl", "girls", "mother", "mothers", "daughter", "daughters", "sister", "sisters",
    "wife", "wives", "aunt", "aunts", "niece", "nieces", "empress", "empresses", "queen", "queens",
    "princess", "princesses", "duchess", "duchesses", "lady", "ladies", "dame", "dames", "waitress",
    "waitresses", "actress", "actresses", "goddess", "goddesses", "policewoman", "policewomen", "postwoman",
    "postwomen", "heroine", "heroines", "witch", "witches", "stewardess", "stewardesses", "female", "females",
    "chick", "chicks", "girlfriend", "girlfriends", "gf", "gal", "gals", "transwomen", "she",
];

/// Words gendered by definition.
#[derive(Debug, Clone, PartialEq)]
pub struct GenderWordlist {
    pub fem: HashSet<String>,
    pub masc: HashSet<String>,
}

impl Default for GenderWordlist {
    fn default() -> Self {
        GenderWordlist {
            fem: FEMININE.iter().map(|s| s.to_string()).collect(),
            masc: MASCULINE.iter().map(|s| s.to_string()).collect(),
        }
    }
}


impl GenderWordlist {
    pub fn word(&self, w: &str) -> Option<Gender> {
        if self.fem.contains(w) {
            Some(Gender::Fem)
        } else if self.masc.contains(w) {
            Some(Gender::Masc)
        } else {
            None
        }
    }

    /// Gender of a term containing a listed word; `None` when it contains
    /// no listed word or words of both genders.
    pub fn term(&self, term: &str) -> Option<Gender> {
        let found: BTreeSet<Gender> = term_tokens(term).into_iter().filter_map(|w| self.word(w)).collect();
        match found.len() {
            1 => found.first().copied(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeaningSource {
    Wordlist,
    Pronouns,
    PluralTransfer,
    BigramTransfer,
    None,
}

impl LeaningSource {
    pub fn name(self) -> &'static str {
        match self {
            LeaningSource::Wordlist => "wordlist",
            LeaningSource::Pronouns => "pronouns",
            LeaningSource::PluralTransfer => "plural_transfer",
            LeaningSource::BigramTransfer => "bigram_transfer",
            LeaningSource::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<LeaningSource> {
        [
            LeaningSource::Wordlist,
            LeaningSource::Pronouns,
            LeaningSource::PluralTransfer,
            LeaningSource::BigramTransfer,
            LeaningSource::None,
        ]
        .into_iter()
        .find(|l| l.name() == s)
    }
}

/// Feminine and masculine pronoun coreference-cluster counts.
pub type PronounCounts = BTreeMap<String, (u64, u64)>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaningParams {
    pub min_clusters: u64,
    /// Require `min_clusters` of each gender rather than in total.
    pub require_each: bool,
}

impl Default for LeaningParams {
    fn default() -> Self {
        LeaningParams {
            min_clusters: DEFAULT_MIN_CLUSTERS,
            require_each: false,
        }
    }
}

pub struct LeaningInputs<'a> {
    pub pronouns: &'a PronounCounts,
    pub wordlist: &'a GenderWordlist,
    /// Plural surface form to singular.
    pub plurals: &'a BTreeMap<String, String>,
    pub params: LeaningParams,
}

fn leaning_rec(term: &str, inp: &LeaningInputs<'_>, visited: &mut HashSet<String>) -> (Option<f64>, LeaningSource) {
    if !visited.insert(term.to_string()) {
        return (None, LeaningSource::None);
    }
    if let Some(g) = inp.wordlist.term(term) {
        let v = if g == Gender::Fem { 1.0 } else { 0.0 };
        return (Some(v), LeaningSource::Wordlist);
    }
    if let Some(&(f, m)) = inp.pronouns.get(term) {
        let p = inp.params;
        let enough = if p.require_each {
            f >= p.min_clusters && m >= p.min_clusters
        } else {
            f + m >= p.min_clusters
        };
        if enough && f + m > 0 {
            return (Some(f as f64 / (f + m) as f64), LeaningSource::Pronouns);
        }
    }
    if let Some(single) = inp.plurals.get(term) {
        if let (Some(v), _) = leaning_rec(single, inp, visited) {
            return (Some(v), LeaningSource::PluralTransfer);
        }
    }
    let toks = term_tokens(term);
    if toks.len() == 2 && inp.wordlist.word(toks[0]).is_none() {
        if let (Some(v), _) = leaning_rec(toks[1], inp, visited) {
            return (Some(v), LeaningSource::BigramTransfer);
        }
    }
    (None, LeaningSource::None)
}

/// Gender leaning in [0, 1] (1 = feminine) and the rule that produced it:
/// gendered word list, then pronoun proportion, then the singular's
/// leaning for plurals, then the head word's leaning for bigrams.
pub fn gender_leaning(term: &str, inp: &LeaningInputs<'_>) -> (Option<f64>, LeaningSource) {
    leaning_rec(term, inp, &mut HashSet::new())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabTerm {
    pub surface: String,
    pub total_count: u64,
    pub fem_pronoun_clusters: u64,
    pub masc_pronoun_clusters: u64,
    pub semantically_gendered: Option<Gender>,
    pub gender_leaning: Option<f64>,
    pub leaning_source: LeaningSource,
}

pub fn build_vocab(counts: &BTreeMap<String, u64>, min_count: u64, inp: &LeaningInputs<'_>) -> Vec<VocabTerm> {
    vocab_filter(counts, min_count)
        .into_iter()
        .map(|(surface, total_count)| {
            let (f, m) = inp.pronouns.get(&surface).copied().unwrap_or((0, 0));
            let (gender_leaning, leaning_source) = gender_leaning(&surface, inp);
            VocabTerm {
                semantically_gendered: inp.wordlist.term(&surface),
                surface,
                total_count,
                fem_pronoun_clusters: f,
                masc_pronoun_clusters: m,
                gender_leaning,
                leaning_source,
            }
        })
        .collect()
}

pub fn vocab_to_tsv(terms: &[VocabTerm]) -> String {
    let mut s = String::from("surface\tcount\tleaning\tsource\n");
    for t in terms {
        let leaning = t.gender_leaning.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{}\t{}\t{leaning}\t{}", t.surface, t.total_count, t.leaning_source.name());
    }
    s
}

/// A row of the vocabulary TSV.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabRow {
    pub surface: String,
    pub count: u64,
    pub leaning: Option<f64>,
    pub source: LeaningSource,
}

fn tsv_rows(path: &Path, header: &str) -> Result<Vec<(usize, Vec<String>)>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?
        .lines()
        .enumerate()
        .filter(|(i, l)| !l.trim().is_empty() && !(*i == 0 && l.starts_with(header)))
        .map(|(i, l)| (i + 1, l.split('\t').map(str::to_string).collect()))
        .collect())
}

pub fn read_vocab(path: &Path) -> Result<Vec<VocabRow>> {
    let label = path.display().to_string();
    tsv_rows(path, "surface\t")?
        .into_iter()
        .map(|(n, c)| {
            let bad = |m: &str| Error::parse(label.clone(), n, m);
            if c.len() != 4 {
                return Err(bad("expected surface, count, leaning, source"));
            }
            Ok(VocabRow {
                surface: c[0].clone(),
                count: c[1].parse().map_err(|_| bad("bad count"))?,
                leaning: if c[2].is_empty() {
                    None
                } else {
                    Some(c[2].parse().map_err(|_| bad("bad leaning"))?)
                },
                source: LeaningSource::parse(&c[3]).ok_or_else(|| bad("bad source"))?,
            })
        })
        .collect()
}

/// `term, fem_clusters, masc_clusters` TSV.
pub fn read_pronoun_counts(path: &Path) -> Result<PronounCounts> {
    let label = path.display().to_string();
    tsv_rows(path, "term\t")?
        .into_iter()
        .map(|(n, c)| {
            let bad = || Error::parse(label.clone(), n, "expected term, fem_clusters, masc_clusters");
            if c.len() != 3 {
                return Err(bad());
            }
            Ok((c[0].clone(), (c[1].parse().map_err(|_| bad())?, c[2].parse().map_err(|_| bad())?)))
        })
        .collect()
}

/// `plural, singular` TSV.
pub fn read_plural_map(path: &Path) -> Result<BTreeMap<String, String>> {
    let label = path.display().to_string();
    tsv_rows(path, "plural\t")?
        .into_iter()
        .map(|(n, c)| match c.as_slice() {
            [p, s] => Ok((p.clone(), s.clone())),
            _ => Err(Error::parse(label.clone(), n, "expected plural, singular")),
        })
        .collect()
}

/// A sentence-level mention of a vocabulary term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occurrence {
    pub occ_id: String,
    pub doc_id: String,
    pub month: String,
    pub platform: String,
    pub community: String,
    pub term: String,
    pub tokens: Vec<String>,
    pub start: usize,
    pub len: usize,
    pub replaced: bool,
}

/// Sentences end after `.`, `!` or `?` tokens.
pub fn split_sentences(tokens: &[String]) -> Vec<&[String]> {
    let mut out = vec![];
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        if matches!(t.as_str(), "." | "!" | "?") {
            out.push(&tokens[start..=i]);
            start = i + 1;
        }
    }
    if start < tokens.len() {
        out.push(&tokens[start..]);
    }
    out
}

/// Every mention of a term, longest match first, in (document id, sentence,
/// start) order.
pub fn find_occurrences(docs: &[Document], terms: &HashSet<String>) -> Result<Vec<Occurrence>> {
    let max_len = max_term_len(terms);
    let mut sorted: Vec<&Document> = docs.iter().collect();
    sorted.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    let mut out = vec![];
    for d in sorted {
        let month = d.month()?.to_string();
        for (si, sent) in split_sentences(&d.tokens).into_iter().enumerate() {
            let mut i = 0;
            while i < sent.len() {
                let hit = (1..=max_len.min(sent.len() - i))
                    .rev()
                    .find(|&n| terms.contains(&sent[i..i + n].join(" ")));
                match hit {
                    Some(n) => {
                        out.push(Occurrence {
                            occ_id: format!("{}-{si}-{i}", d.doc_id),
                            doc_id: d.doc_id.clone(),
                            month: month.clone(),
                            platform: d.platform.clone(),
                            community: d.community.clone(),
                            term: sent[i..i + n].join(" "),
                            tokens: sent.to_vec(),
                            start: i,
                            len: n,
                            replaced: false,
                        });
                        i += n;
                    }
                    None => i += 1,
                }
            }
        }
    }
    Ok(out)
}

/// Algorithm R: a uniform sample of up to `k` items in one pass.
pub fn reservoir_sample<T, I: IntoIterator<Item = T>>(stream: I, k: usize, seed: u64) -> Vec<T> {
    let mut rng = rng_from_seed(seed);
    let mut res: Vec<T> = Vec::with_capacity(k);
    for (i, item) in stream.into_iter().enumerate() {
        if i < k {
            res.push(item);
        } else {
            let j = rng.random_range(0..=i);
            if j < k {
                res[j] = item;
            }
        }
    }
    res
}

/// Independent reservoir of up to `cap` items per stratum key. Each
/// stratum's seed is derived from its key; strata are returned in key order.
pub fn stratified_sample<T, F>(items: Vec<T>, key: F, cap: usize, root_seed: u64) -> BTreeMap<String, Vec<T>>
where
    F: Fn(&T) -> String,
{
    let mut strata: BTreeMap<String, Vec<T>> = BTreeMap::new();
    for it in items {
        strata.entry(key(&it)).or_default().push(it);
    }
    strata
        .into_iter()
        .map(|(k, v)| {
            let seed = derive_seed(root_seed, &format!("stratum:{k}"));
            let s = reservoir_sample(v, cap, seed);
            (k, s)
        })
        .collect()
}

/// Grammatical number of surface forms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NumberLexicon {
    pub plural: HashSet<String>,
    pub singular: HashSet<String>,
}

impl NumberLexicon {
    pub fn from_plural_map(map: &BTreeMap<String, String>) -> NumberLexicon {
        NumberLexicon {
            plural: map.keys().cloned().collect(),
            singular: map.values().cloned().collect(),
        }
    }

    /// Lexicon entry if any, else a trailing `s` means plural.
    pub fn is_plural(&self, surface: &str) -> bool {
        if self.plural.contains(surface) {
            true
        } else if self.singular.contains(surface) {
            false
        } else {
            surface.ends_with('s')
        }
    }
}

/// Replaces the target span with `person` or `people`.
pub fn replace_target(occ: &Occurrence, lex: &NumberLexicon) -> Result<Occurrence> {
    if occ.len == 0 || occ.start + occ.len > occ.tokens.len() {
        return Err(Error::Precondition(format!("{}: span out of bounds", occ.occ_id)));
    }
    let surface = occ.tokens[occ.start..occ.start + occ.len].join(" ");
    let head = &occ.tokens[occ.start + occ.len - 1];
    let plural = lex.plural.contains(&surface) || (!lex.singular.contains(&surface) && lex.is_plural(head));
    let word = if plural { "people" } else { "person" };
    let mut tokens = occ.tokens[..occ.start].to_vec();
    tokens.push(word.to_string());
    tokens.extend_from_slice(&occ.tokens[occ.start + occ.len..]);
    Ok(Occurrence {
        tokens,
        len: 1,
        replaced: true,
        ..occ.clone()
    })
}

pub fn write_occurrences(path: &Path, occs: &[Occurrence]) -> Result<()> {
    let mut s = String::new();
    for o in occs {
        s.push_str(&serde_json::to_string(o)?);
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_occurrences(path: &Path) -> Result<Vec<Occurrence>> {
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
