use std::collections::HashMap;

use thiserror::Error;

use crate::extraction::PosTag;

#[derive(Debug, Error, PartialEq)]
pub enum LexiconError {
    #[error("line {line}: expected `word<TAB>score`")]
    Syntax { line: usize },
    #[error("line {line}: score {score} outside [1, 5]")]
    OutOfRange { line: usize, score: f64 },
}

/// Word concreteness ratings from 1 (abstract) to 5 (concrete).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConcretenessLexicon {
    entries: HashMap<String, f64>,
}

impl ConcretenessLexicon {
    /// Parses `word<TAB>score` rows. A non-numeric score on the first row
    /// is treated as a header.
    pub fn parse_tsv(text: &str) -> Result<Self, LexiconError> {
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let (Some(word), Some(score)) = (cols.next(), cols.next()) else {
                return Err(LexiconError::Syntax { line: i + 1 });
            };
            let score: f64 = match score.trim().parse() {
                Ok(s) => s,
                Err(_) if i == 0 => continue,
                Err(_) => return Err(LexiconError::Syntax { line: i + 1 }),
            };
            if !(1.0..=5.0).contains(&score) {
                return Err(LexiconError::OutOfRange {
                    line: i + 1,
                    score,
                });
            }
            entries.insert(word.trim().to_lowercase(), score);
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, word: &str, score: f64) {
        self.entries.insert(word.to_lowercase(), score.clamp(1.0, 5.0));
    }

    pub fn get(&self, word: &str) -> Option<f64> {
        self.entries.get(&word.to_lowercase()).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Score of a word form, trying its lemma(s) first and the surface last.
    pub fn lookup(&self, word: &str) -> Option<f64> {
        let lower = word.to_lowercase();
        lemma_candidates(&lower)
            .iter()
            .chain(std::iter::once(&lower))
            .find_map(|w| self.get(w))
    }
}

const IRREGULAR: &[(&str, &str)] = &[
    ("am", "be"), ("is", "be"), ("are", "be"), ("was", "be"), ("were", "be"),
    ("been", "be"), ("has", "have"), ("had", "have"), ("did", "do"), ("done", "do"),
    ("does", "do"), ("went", "go"), ("gone", "go"), ("goes", "go"), ("made", "make"),
    ("took", "take"), ("taken", "take"), ("told", "tell"), ("said", "say"),
    ("got", "get"), ("gotten", "get"), ("came", "come"), ("saw", "see"),
    ("seen", "see"), ("put", "put"), ("cut", "cut"), ("set", "set"),
    ("found", "find"), ("thought", "think"), ("felt", "feel"), ("gave", "give"),
    ("given", "give"), ("ate", "eat"), ("eaten", "eat"), ("drank", "drink"),
    ("wore", "wear"), ("worn", "wear"), ("threw", "throw"), ("thrown", "throw"),
    ("bought", "buy"), ("brought", "bring"), ("left", "leave"), ("kept", "keep"),
    ("slept", "sleep"), ("woke", "wake"), ("ran", "run"), ("sat", "sit"),
    ("stood", "stand"), ("held", "hold"), ("began", "begin"), ("begun", "begin"),
    ("knew", "know"), ("known", "know"), ("wrote", "write"), ("written", "write"),
    ("children", "child"), ("men", "man"), ("women", "woman"), ("teeth", "tooth"),
    ("feet", "foot"), ("knives", "knife"), ("leaves", "leaf"), ("mice", "mouse"),
];

/// Candidate lemmas for an inflected word form: the irregular table first,
/// then `-ies`/`-es`/`-s`/`-ed`/`-ing` stripping.
pub fn lemma_candidates(word: &str) -> Vec<String> {
    if let Some((_, lemma)) = IRREGULAR.iter().find(|(form, _)| *form == word) {
        return vec![lemma.to_string()];
    }
    let mut out = Vec::new();
    let mut strip = |suffix: &str, replacement: &str, min_stem: usize| {
        if let Some(stem) = word.strip_suffix(suffix) {
            if stem.len() >= min_stem {
                out.push(format!("{stem}{replacement}"));
            }
        }
    };
    strip("ies", "y", 2);
    strip("es", "", 2);
    strip("s", "", 2);
    strip("ed", "e", 2);
    strip("ed", "", 2);
    strip("ing", "e", 2);
    strip("ing", "", 2);
    // doubled consonant: chopped -> chop, cutting -> cut
    for suffix in ["ed", "ing"] {
        if let Some(stem) = word.strip_suffix(suffix) {
            let b = stem.as_bytes();
            if b.len() >= 3 && b[b.len() - 1] == b[b.len() - 2] {
                out.push(stem[..stem.len() - 1].to_string());
            }
        }
    }
    out.retain(|c| c != word);
    out
}

/// Highest concreteness over the action's verbs and nouns; `None` when no
/// verb or noun is in the lexicon.
pub fn concreteness_score<S: AsRef<str>>(
    tokens: &[S],
    tags: &[PosTag],
    lexicon: &ConcretenessLexicon,
) -> Option<f64> {
    tokens
        .iter()
        .zip(tags)
        .filter(|(_, t)| t.is_verb() || t.is_noun())
        .filter_map(|(w, _)| lexicon.lookup(w.as_ref()))
        .reduce(f64::max)
}
