//! Antonym-pole lexicon construction from a WordNet-style synset export.
//!
//! Input is JSON lines, one synset per line:
//! `{"id": .., "pos": "a"|"s", "lemmas": [..], "similar_to": [..], "antonym_of": ..}`.
//! Each antonym-linked synset pair becomes one axis whose poles are the seed
//! synset's lemmas plus those of its direct `similar_to` neighbours.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of in-vocabulary adjectives on each pole.
pub const DEFAULT_MIN_POLE: usize = 3;

#[derive(Debug, Clone, Deserialize)]
struct SynsetRecord {
    id: String,
    #[serde(default)]
    pos: String,
    lemmas: Vec<String>,
    #[serde(default)]
    similar_to: Vec<String>,
    #[serde(default)]
    antonym_of: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Synset {
    pub id: String,
    pub pos: String,
    /// Lowercased lemmas, source order.
    pub lemmas: Vec<String>,
    pub similar_to: Vec<String>,
    pub antonym_of: Option<String>,
}

/// Parsed synset collection, adjectives only.
#[derive(Debug, Clone, Default)]
pub struct SynsetDb {
    synsets: BTreeMap<String, Synset>,
    /// Lowercased forms of lemmas written fully uppercase in the source.
    uppercase: HashSet<String>,
}

fn is_adjective_pos(pos: &str) -> bool {
    matches!(pos, "a" | "s" | "adj")
}

fn is_all_caps(raw: &str) -> bool {
    let mut letters = raw.chars().filter(|c| c.is_alphabetic()).peekable();
    letters.peek().is_some() && letters.all(|c| c.is_uppercase())
}

impl SynsetDb {
    pub fn from_reader<R: BufRead>(reader: R, label: &str) -> Result<Self> {
        let mut db = SynsetDb::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SynsetRecord =
                serde_json::from_str(&line).map_err(|e| Error::parse(label, i + 1, e))?;
            if !is_adjective_pos(&rec.pos) {
                continue;
            }
            if rec.lemmas.is_empty() {
                return Err(Error::parse(label, i + 1, format!("synset {} has no lemmas", rec.id)));
            }
            if db.synsets.contains_key(&rec.id) {
                return Err(Error::parse(label, i + 1, format!("duplicate synset id {}", rec.id)));
            }
            for raw in &rec.lemmas {
                if is_all_caps(raw) {
                    db.uppercase.insert(raw.to_lowercase());
                }
            }
            let synset = Synset {
                id: rec.id.clone(),
                pos: rec.pos,
                lemmas: rec.lemmas.iter().map(|l| l.to_lowercase()).collect(),
                similar_to: rec.similar_to,
                antonym_of: rec.antonym_of.filter(|a| !a.is_empty()),
            };
            db.synsets.insert(rec.id, synset);
        }
        Ok(db)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let f = fs::File::open(path)?;
        Self::from_reader(BufReader::new(f), &path.display().to_string())
    }

    pub fn get(&self, id: &str) -> Option<&Synset> {
        self.synsets.get(id)
    }

    pub fn len(&self) -> usize {
        self.synsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.synsets.is_empty()
    }

    pub fn synsets(&self) -> impl Iterator<Item = &Synset> {
        self.synsets.values()
    }

    /// Acronym rule: fully uppercase in the source, or at most three
    /// characters with no vowel (`y` counts as a vowel).
    pub fn is_acronym(&self, lemma: &str) -> bool {
        if self.uppercase.contains(lemma) {
            return true;
        }
        lemma.chars().count() <= 3 && !lemma.chars().any(|c| "aeiouy".contains(c))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pole {
    #[serde(rename = "seed")]
    pub seed_synset: String,
    /// Sorted, deduplicated, lowercase.
    pub adjectives: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub axis_id: String,
    pub left: Pole,
    pub right: Pole,
}

impl AxisSpec {
    /// Short human-readable label, e.g. `good <-> bad`.
    pub fn label(&self) -> String {
        let first = |p: &Pole| p.adjectives.first().cloned().unwrap_or_default();
        format!("{} <-> {}", first(&self.left), first(&self.right))
    }

    pub fn pole(&self, side: Side) -> &Pole {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// The same axis with poles exchanged.
    pub fn swapped(&self) -> AxisSpec {
        AxisSpec {
            axis_id: self.axis_id.clone(),
            left: self.right.clone(),
            right: self.left.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// One-hop `similar_to` expansion of a seed synset. Dangling ids are
/// skipped and reported in the returned warnings.
pub fn expand_pole(seed: &Synset, db: &SynsetDb) -> (Pole, Vec<String>) {
    let mut adjectives: BTreeSet<String> = seed.lemmas.iter().cloned().collect();
    let mut warnings = vec![];
    for nid in &seed.similar_to {
        match db.get(nid) {
            Some(n) => adjectives.extend(n.lemmas.iter().cloned()),
            None => warnings.push(format!(
                "synset {}: similar_to target {nid} not found",
                seed.id
            )),
        }
    }
    (
        Pole {
            seed_synset: seed.id.clone(),
            adjectives: adjectives.into_iter().collect(),
        },
        warnings,
    )
}

#[derive(Debug, Clone, Default)]
pub struct LexiconBuild {
    pub axes: Vec<AxisSpec>,
    pub warnings: Vec<String>,
}

/// Compiles one axis per antonym-linked synset pair. Poles are expanded,
/// stripped of acronyms, intersected with `vocab`, made disjoint, and kept
/// only if both retain at least `min_pole` adjectives.
pub fn build_axes(db: &SynsetDb, vocab: &HashSet<String>, min_pole: usize) -> LexiconBuild {
    let mut pairs = BTreeSet::new();
    let mut warnings = vec![];
    for s in db.synsets() {
        if let Some(t) = &s.antonym_of {
            if db.get(t).is_none() {
                warnings.push(format!("synset {}: antonym_of target {t} not found", s.id));
                continue;
            }
            if t == &s.id {
                continue;
            }
            let (a, b) = if s.id < *t { (&s.id, t) } else { (t, &s.id) };
            pairs.insert((a.clone(), b.clone()));
        }
    }

    let mut axes = vec![];
    for (left_id, right_id) in pairs {
        let (mut left, wl) = expand_pole(db.get(&left_id).unwrap(), db);
        let (mut right, wr) = expand_pole(db.get(&right_id).unwrap(), db);
        warnings.extend(wl);
        warnings.extend(wr);
        let keep = |a: &String| !db.is_acronym(a) && vocab.contains(a);
        left.adjectives.retain(keep);
        right.adjectives.retain(keep);
        let shared: HashSet<String> = left
            .adjectives
            .iter()
            .filter(|a| right.adjectives.contains(a))
            .cloned()
            .collect();
        left.adjectives.retain(|a| !shared.contains(a));
        right.adjectives.retain(|a| !shared.contains(a));
        if left.adjectives.len() < min_pole || right.adjectives.len() < min_pole {
            continue;
        }
        axes.push(AxisSpec {
            axis_id: format!("{left_id}--{right_id}"),
            left,
            right,
        });
    }
    axes.sort_by(|a, b| a.axis_id.cmp(&b.axis_id));
    for w in &warnings {
        warn!("{w}");
    }
    LexiconBuild { axes, warnings }
}

/// True iff at least one pole adjective is a single wordpiece.
pub fn single_wordpiece_pole(pole: &Pole, wp_vocab: &HashSet<String>) -> bool {
    pole.adjectives.iter().any(|a| wp_vocab.contains(a))
}

/// Reads a one-token-per-line vocabulary file (GloVe-style vocab lists may
/// carry extra whitespace-separated columns; only the first is used).
pub fn read_word_list(path: &Path) -> Result<HashSet<String>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_whitespace().next())
        .map(str::to_string)
        .collect())
}

pub fn axes_to_jsonl(axes: &[AxisSpec]) -> Result<String> {
    let mut out = String::new();
    for a in axes {
        out.push_str(&serde_json::to_string(a)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_axes(path: &Path, axes: &[AxisSpec]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(axes_to_jsonl(axes)?.as_bytes())?;
    Ok(())
}

pub fn read_axes(path: &Path) -> Result<Vec<AxisSpec>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    let label = path.display().to_string();
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(label.clone(), i + 1, e)))
        .collect()
}
