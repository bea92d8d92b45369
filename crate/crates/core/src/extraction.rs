//! Candidate-action extraction: tokenization, POS tagging, sentence
//! segmentation and a rule-based verb-phrase chunker.
//!
//! The chunker is deliberately simple. A chunk starts at a verb that is not
//! an auxiliary, may absorb one adverb directly in front of it, and grows to
//! the right over object-like tags until another finite verb, a tag outside
//! the extension set, or the length cap stops it. The rule table lives in a
//! config file (see [`ChunkRules`]) so it can be tuned without recompiling.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kv::{KvConfig, KvError};
use crate::transcript::Transcript;

const BUILTIN_LEXICON: &str = include_str!("../data/lexicon.tsv");
const BUILTIN_RULES: &str = include_str!("../data/chunk_rules.conf");

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("tag stream has {tags} tokens but the transcript has {tokens}")]
    TagTokenMismatch { tags: usize, tokens: usize },
    #[error("token {index} has surface {got:?}, transcript has {expected:?}")]
    SurfaceMismatch {
        index: usize,
        got: String,
        expected: String,
    },
    #[error("token refers to cue {cue_index}, transcript has {cues} cues")]
    DanglingCueIndex { cue_index: usize, cues: usize },
    #[error("unknown POS tag {0:?}")]
    UnknownTag(String),
    #[error("line {line}: expected `surface<TAB>tag`")]
    BadTsv { line: usize },
    #[error(transparent)]
    Config(#[from] KvError),
}

macro_rules! penn_tags {
    ($($variant:ident => $s:literal),* $(,)?) => {
        /// Penn Treebank part-of-speech tags, including punctuation tags.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum PosTag { $($variant),* }

        impl PosTag {
            pub const ALL: &'static [PosTag] = &[$(PosTag::$variant),*];

            pub fn as_str(self) -> &'static str {
                match self { $(PosTag::$variant => $s),* }
            }
        }

        impl FromStr for PosTag {
            type Err = ExtractionError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($s => Ok(PosTag::$variant),)*
                    other => Err(ExtractionError::UnknownTag(other.to_string())),
                }
            }
        }
    };
}

penn_tags! {
    CC => "CC", CD => "CD", DT => "DT", EX => "EX", FW => "FW", IN => "IN",
    JJ => "JJ", JJR => "JJR", JJS => "JJS", LS => "LS", MD => "MD",
    NN => "NN", NNS => "NNS", NNP => "NNP", NNPS => "NNPS", PDT => "PDT",
    POS => "POS", PRP => "PRP", PRPS => "PRP$", RB => "RB", RBR => "RBR",
    RBS => "RBS", RP => "RP", SYM => "SYM", TO => "TO", UH => "UH",
    VB => "VB", VBD => "VBD", VBG => "VBG", VBN => "VBN", VBP => "VBP",
    VBZ => "VBZ", WDT => "WDT", WP => "WP", WPS => "WP$", WRB => "WRB",
    Stop => ".", Comma => ",", Colon => ":", OpenQuote => "``",
    CloseQuote => "''", LeftParen => "-LRB-", RightParen => "-RRB-",
    Hash => "#", Dollar => "$",
}

impl PosTag {
    pub fn is_verb(self) -> bool {
        matches!(
            self,
            PosTag::VB | PosTag::VBD | PosTag::VBG | PosTag::VBN | PosTag::VBP | PosTag::VBZ
        )
    }

    pub fn is_noun(self) -> bool {
        matches!(self, PosTag::NN | PosTag::NNS | PosTag::NNP | PosTag::NNPS)
    }

    pub fn is_adverb(self) -> bool {
        matches!(self, PosTag::RB | PosTag::RBR | PosTag::RBS)
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for PosTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for PosTag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn punctuation_tag(token: &str) -> Option<PosTag> {
    if token.is_empty() || token.chars().any(char::is_alphanumeric) {
        return None;
    }
    Some(match token {
        "." | "!" | "?" => PosTag::Stop,
        "," => PosTag::Comma,
        "(" | "[" => PosTag::LeftParen,
        ")" | "]" => PosTag::RightParen,
        "\"" => PosTag::CloseQuote,
        "#" => PosTag::Hash,
        "$" => PosTag::Dollar,
        _ => PosTag::Colon,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedToken {
    pub surface: String,
    pub pos: PosTag,
    pub cue_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub tokens: Vec<TaggedToken>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCandidate {
    pub tokens: Vec<TaggedToken>,
    pub sentence_index: usize,
    /// Half-open token offsets within the sentence.
    pub span: (usize, usize),
    /// Start of the cue holding the first token; set by [`extract_actions`].
    pub time_s: Option<f64>,
}

impl ActionCandidate {
    pub fn text(&self) -> String {
        self.tokens
            .iter()
            .map(|t| t.surface.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn surfaces(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.surface.clone()).collect()
    }

    pub fn tags(&self) -> Vec<PosTag> {
        self.tokens.iter().map(|t| t.pos).collect()
    }
}

const CONTRACTIONS: &[&str] = &["'re", "'s", "'m", "'ve", "'ll", "'d"];

fn split_contraction(word: &str) -> Vec<String> {
    let lower = word.to_lowercase();
    if lower.len() > 3 && lower.ends_with("n't") {
        let cut = word.len() - 3;
        return vec![word[..cut].to_string(), word[cut..].to_string()];
    }
    for suffix in CONTRACTIONS {
        if lower.len() > suffix.len() && lower.ends_with(suffix) {
            let cut = word.len() - suffix.len();
            return vec![word[..cut].to_string(), word[cut..].to_string()];
        }
    }
    vec![word.to_string()]
}

fn is_edge_punct(c: char) -> bool {
    matches!(
        c,
        '.' | ',' | '!' | '?' | ';' | ':' | '"' | '(' | ')' | '[' | ']'
    )
}

/// Splits caption text into tokens: whitespace first, then edge punctuation
/// and clitic contractions (`you're` becomes `you` + `'re`).
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let word = raw.replace(['\u{2019}', '\u{2018}'], "'");
        let mut core = word.as_str();
        let mut lead = Vec::new();
        while let Some(c) = core.chars().next().filter(|&c| is_edge_punct(c)) {
            lead.push(c.to_string());
            core = &core[c.len_utf8()..];
        }
        let mut trail = Vec::new();
        while let Some(c) = core.chars().last().filter(|&c| is_edge_punct(c)) {
            trail.push(c.to_string());
            core = &core[..core.len() - c.len_utf8()];
        }
        out.extend(lead);
        if !core.is_empty() {
            out.extend(split_contraction(core));
        }
        out.extend(trail.into_iter().rev());
    }
    out
}

/// Transcript tokens in order, each with the index of its cue.
pub fn transcript_tokens(t: &Transcript) -> Vec<(String, usize)> {
    t.cues
        .iter()
        .enumerate()
        .flat_map(|(i, cue)| tokenize(&cue.text).into_iter().map(move |w| (w, i)))
        .collect()
}

/// Word to tag table. Lookups are case-folded.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, PosTag>,
}

impl Lexicon {
    pub fn parse_tsv(text: &str) -> Result<Self, ExtractionError> {
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, tag) = line
                .split_once('\t')
                .ok_or(ExtractionError::BadTsv { line: i + 1 })?;
            entries.insert(word.trim().to_lowercase(), tag.trim().parse()?);
        }
        Ok(Self { entries })
    }

    /// A small general-purpose lexicon shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse_tsv(BUILTIN_LEXICON).expect("builtin lexicon is well formed")
    }

    pub fn insert(&mut self, word: &str, tag: PosTag) {
        self.entries.insert(word.to_lowercase(), tag);
    }

    pub fn get(&self, word: &str) -> Option<PosTag> {
        self.entries.get(&word.to_lowercase()).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Tags tokens by lexicon lookup. Punctuation gets its Penn punctuation tag;
/// any other out-of-vocabulary token is tagged `NN`.
pub fn tag_with_lexicon(tokens: &[(String, usize)], lexicon: &Lexicon) -> Vec<TaggedToken> {
    tokens
        .iter()
        .map(|(surface, cue_index)| TaggedToken {
            pos: lexicon
                .get(surface)
                .or_else(|| punctuation_tag(surface))
                .unwrap_or(PosTag::NN),
            surface: surface.clone(),
            cue_index: *cue_index,
        })
        .collect()
}

/// Reads a CoNLL-style `surface<TAB>tag` sidecar. Blank lines separate
/// sentences; the result is one token list per sentence.
pub fn read_pos_sidecar(text: &str) -> Result<Vec<Vec<(String, PosTag)>>, ExtractionError> {
    let mut sentences = Vec::new();
    let mut current = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        let (surface, tag) = line
            .split_once('\t')
            .ok_or(ExtractionError::BadTsv { line: i + 1 })?;
        current.push((surface.to_string(), tag.trim().parse()?));
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    Ok(sentences)
}

/// Aligns a sidecar with the transcript's own tokenization. Returns the
/// tagged tokens and the token offsets where the sidecar starts a sentence.
pub fn tag_from_sidecar(
    t: &Transcript,
    sidecar: &[Vec<(String, PosTag)>],
) -> Result<(Vec<TaggedToken>, Vec<usize>), ExtractionError> {
    let tokens = transcript_tokens(t);
    let total: usize = sidecar.iter().map(Vec::len).sum();
    if total != tokens.len() {
        return Err(ExtractionError::TagTokenMismatch {
            tags: total,
            tokens: tokens.len(),
        });
    }
    let mut tagged = Vec::with_capacity(total);
    let mut starts = Vec::with_capacity(sidecar.len());
    for sentence in sidecar {
        starts.push(tagged.len());
        for (surface, pos) in sentence {
            let i = tagged.len();
            let (expected, cue_index) = &tokens[i];
            if surface != expected {
                return Err(ExtractionError::SurfaceMismatch {
                    index: i,
                    got: surface.clone(),
                    expected: expected.clone(),
                });
            }
            tagged.push(TaggedToken {
                surface: surface.clone(),
                pos: *pos,
                cue_index: *cue_index,
            });
        }
    }
    Ok((tagged, starts))
}

/// Chunker configuration. Loaded from a `key = value` file; see
/// `data/chunk_rules.conf` for the shipped defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkRules {
    pub max_len: usize,
    /// Pause between cues, in seconds, that ends a sentence.
    pub gap_s: f64,
    /// Lower-cased verb forms that never head a chunk.
    pub auxiliaries: BTreeSet<String>,
    /// Tags a chunk may extend over after its head.
    pub extend_tags: BTreeSet<PosTag>,
    pub include_preceding_adverb: bool,
    /// Skip heads like `going` in `going to take`, where the real action is
    /// the verb after `to`.
    pub skip_catenative: bool,
    /// Stop before a pronoun that is the subject of a following verb or modal.
    pub subject_pronoun_break: bool,
}

impl Default for ChunkRules {
    fn default() -> Self {
        Self::from_kv(&KvConfig::parse(BUILTIN_RULES).expect("builtin rules parse"))
            .expect("builtin rules are valid")
    }
}

impl ChunkRules {
    pub fn from_kv(cfg: &KvConfig) -> Result<Self, ExtractionError> {
        let mut rules = Self {
            max_len: 7,
            gap_s: 5.0,
            auxiliaries: BTreeSet::new(),
            extend_tags: BTreeSet::new(),
            include_preceding_adverb: true,
            skip_catenative: true,
            subject_pronoun_break: true,
        };
        if let Some(v) = cfg.parse_value("max_len")? {
            rules.max_len = v;
        }
        if let Some(v) = cfg.parse_value("gap_s")? {
            rules.gap_s = v;
        }
        if let Some(v) = cfg.parse_value("include_preceding_adverb")? {
            rules.include_preceding_adverb = v;
        }
        if let Some(v) = cfg.parse_value("skip_catenative")? {
            rules.skip_catenative = v;
        }
        if let Some(v) = cfg.parse_value("subject_pronoun_break")? {
            rules.subject_pronoun_break = v;
        }
        if let Some(aux) = cfg.list("auxiliaries") {
            rules.auxiliaries = aux.into_iter().map(|a| a.to_lowercase()).collect();
        }
        if let Some(tags) = cfg.list("extend_tags") {
            rules.extend_tags = tags
                .iter()
                .map(|t| t.parse())
                .collect::<Result<_, _>>()?;
        }
        if rules.max_len == 0 {
            return Err(KvError::BadValue {
                key: "max_len".into(),
                value: "0".into(),
            }
            .into());
        }
        Ok(rules)
    }

    pub fn parse(text: &str) -> Result<Self, ExtractionError> {
        Self::from_kv(&KvConfig::parse(text)?)
    }

    fn is_auxiliary(&self, surface: &str) -> bool {
        self.auxiliaries.contains(&surface.to_lowercase())
    }
}

/// Groups tagged tokens into sentences. A sentence ends after `.`/`!`/`?`,
/// before a token whose cue starts more than `gap_s` after the previous
/// token's cue ends, and before every offset in `forced_starts`.
pub fn split_sentences_at(
    t: &Transcript,
    tags: &[TaggedToken],
    gap_s: f64,
    forced_starts: &[usize],
) -> Result<Vec<Sentence>, ExtractionError> {
    let expected = transcript_tokens(t).len();
    if tags.len() != expected {
        return Err(ExtractionError::TagTokenMismatch {
            tags: tags.len(),
            tokens: expected,
        });
    }
    if let Some(bad) = tags.iter().find(|tok| tok.cue_index >= t.cues.len()) {
        return Err(ExtractionError::DanglingCueIndex {
            cue_index: bad.cue_index,
            cues: t.cues.len(),
        });
    }
    let forced: BTreeSet<usize> = forced_starts.iter().copied().collect();
    let mut sentences = Vec::new();
    let mut current: Vec<TaggedToken> = Vec::new();
    for (i, tok) in tags.iter().enumerate() {
        if let Some(prev) = current.last() {
            let paused = prev.cue_index != tok.cue_index
                && t.cues[tok.cue_index].start_s - t.cues[prev.cue_index].end_s > gap_s;
            if paused || forced.contains(&i) {
                sentences.push(Sentence {
                    index: sentences.len(),
                    tokens: std::mem::take(&mut current),
                });
            }
        }
        current.push(tok.clone());
        if tok.pos == PosTag::Stop {
            sentences.push(Sentence {
                index: sentences.len(),
                tokens: std::mem::take(&mut current),
            });
        }
    }
    if !current.is_empty() {
        sentences.push(Sentence {
            index: sentences.len(),
            tokens: current,
        });
    }
    Ok(sentences)
}

pub fn split_sentences(
    t: &Transcript,
    tags: &[TaggedToken],
    gap_s: f64,
) -> Result<Vec<Sentence>, ExtractionError> {
    split_sentences_at(t, tags, gap_s, &[])
}

fn is_head(tokens: &[TaggedToken], i: usize, rules: &ChunkRules) -> bool {
    let tok = &tokens[i];
    if !tok.pos.is_verb() || rules.is_auxiliary(&tok.surface) {
        return false;
    }
    if rules.skip_catenative {
        let to = tokens.get(i + 1).map(|t| t.pos);
        let verb = tokens.get(i + 2).map(|t| t.pos);
        if to == Some(PosTag::TO) && verb == Some(PosTag::VB) {
            return false;
        }
    }
    true
}

fn starts_clause(tokens: &[TaggedToken], i: usize) -> bool {
    matches!(tokens[i].pos, PosTag::PRP | PosTag::EX)
        && tokens
            .get(i + 1)
            .is_some_and(|n| n.pos.is_verb() || n.pos == PosTag::MD)
}

/// Chunks one sentence into non-overlapping candidate actions, left to right.
pub fn extract_candidates(s: &Sentence, rules: &ChunkRules) -> Vec<ActionCandidate> {
    let tokens = &s.tokens;
    let mut out = Vec::new();
    let mut free_from = 0;
    let mut i = 0;
    while i < tokens.len() {
        if !is_head(tokens, i, rules) {
            i += 1;
            continue;
        }
        let mut start = i;
        if rules.include_preceding_adverb
            && i > free_from
            && tokens[i - 1].pos == PosTag::RB
            && rules.max_len > 1
        {
            start = i - 1;
        }
        let mut end = i + 1;
        while end < tokens.len() && end - start < rules.max_len {
            let pos = tokens[end].pos;
            let extends = pos == PosTag::VBG || rules.extend_tags.contains(&pos);
            if !extends || (rules.subject_pronoun_break && starts_clause(tokens, end)) {
                break;
            }
            end += 1;
        }
        out.push(ActionCandidate {
            tokens: tokens[start..end].to_vec(),
            sentence_index: s.index,
            span: (start, end),
            time_s: None,
        });
        free_from = end;
        i = end;
    }
    out
}

/// Start time of the cue holding the candidate's first token.
pub fn timestamp_action(a: &ActionCandidate, t: &Transcript) -> Result<f64, ExtractionError> {
    let first = a.tokens.first().ok_or(ExtractionError::DanglingCueIndex {
        cue_index: usize::MAX,
        cues: t.cues.len(),
    })?;
    t.cues
        .get(first.cue_index)
        .map(|c| c.start_s)
        .ok_or(ExtractionError::DanglingCueIndex {
            cue_index: first.cue_index,
            cues: t.cues.len(),
        })
}

/// Runs the chunker over every sentence and stamps each candidate with its
/// cue time.
pub fn extract_actions(
    t: &Transcript,
    sentences: &[Sentence],
    rules: &ChunkRules,
) -> Result<Vec<ActionCandidate>, ExtractionError> {
    let mut out = Vec::new();
    for s in sentences {
        for mut c in extract_candidates(s, rules) {
            c.time_s = Some(timestamp_action(&c, t)?);
            out.push(c);
        }
    }
    Ok(out)
}
