//! Crowd annotation: HIT composition, spam screening, majority aggregation,
//! agreement, and the channel-based data split.

pub mod agreement;
pub mod service;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agreement::{count_matrix, fleiss_kappa, KappaError};

pub const RATERS_PER_ITEM: usize = 3;
pub const CLIPS_PER_HIT: usize = 5;
pub const MAX_ACTIONS_PER_CLIP: usize = 7;
/// Ground-truth accuracy below this rejects a HIT.
pub const MIN_GT_ACCURACY: f64 = 0.20;

#[derive(Debug, Error, PartialEq)]
pub enum AnnotationError {
    #[error("no ground-truth miniclips available")]
    InsufficientGroundTruth,
    #[error("ground-truth miniclip {0} needs more than four labeled actions")]
    InvalidGroundTruth(String),
    #[error("{have} annotatable miniclips; a HIT needs {need}")]
    TooFewMiniclips { have: usize, need: usize },
    #[error("no label for action {action_id} in miniclip {miniclip_id}")]
    IncompleteSubmission {
        miniclip_id: String,
        action_id: String,
    },
    #[error("label for action {action_id} in miniclip {miniclip_id} is not part of the HIT")]
    UnexpectedLabel {
        miniclip_id: String,
        action_id: String,
    },
    #[error("action {action_id} in miniclip {miniclip_id} labeled twice")]
    DuplicateLabel {
        miniclip_id: String,
        action_id: String,
    },
    #[error("action {action_id} in miniclip {miniclip_id} has {count} annotations, expected 3")]
    WrongAnnotatorCount {
        miniclip_id: String,
        action_id: String,
        count: usize,
    },
    #[error("channel {0:?} is not assigned to any split")]
    UnknownChannel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RawLabel {
    Visible,
    NotVisible,
    NotAnAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinaryLabel {
    Visible,
    NotVisibleOrNotAction,
}

impl RawLabel {
    /// "Not visible" and "not an action" are merged.
    pub fn binarize(self) -> BinaryLabel {
        match self {
            RawLabel::Visible => BinaryLabel::Visible,
            RawLabel::NotVisible | RawLabel::NotAnAction => BinaryLabel::NotVisibleOrNotAction,
        }
    }
}

impl BinaryLabel {
    pub fn is_visible(self) -> bool {
        self == BinaryLabel::Visible
    }

    pub fn from_visible(visible: bool) -> Self {
        if visible {
            BinaryLabel::Visible
        } else {
            BinaryLabel::NotVisibleOrNotAction
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub worker_id: String,
    pub hit_id: String,
    pub miniclip_id: String,
    pub action_id: String,
    pub raw_label: RawLabel,
    /// Seconds since the Unix epoch.
    pub submitted_at: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteCounts {
    pub visible: u32,
    pub not_visible: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedLabel {
    pub miniclip_id: String,
    pub action_id: String,
    pub label: BinaryLabel,
    pub votes: VoteCounts,
}

/// One label in a worker's submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub miniclip_id: String,
    pub action_id: String,
    pub raw_label: RawLabel,
}

/// A miniclip offered for annotation with its timestamped actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipActions {
    pub miniclip_id: String,
    pub actions: Vec<(String, f64)>,
}

/// A pre-labeled miniclip used to screen workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthClip {
    pub miniclip_id: String,
    /// `(action_id, time_s, label)`.
    pub labels: Vec<(String, f64, BinaryLabel)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitClip {
    pub miniclip_id: String,
    pub action_ids: Vec<String>,
    pub ground_truth: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub hit_id: String,
    pub clips: Vec<HitClip>,
}

impl Hit {
    pub fn ground_truth_clip(&self) -> Option<&HitClip> {
        self.clips.iter().find(|c| c.ground_truth)
    }

    /// Every `(miniclip_id, action_id)` a worker must label.
    pub fn slots(&self) -> impl Iterator<Item = (&str, &str)> {
        self.clips.iter().flat_map(|c| {
            c.action_ids
                .iter()
                .map(move |a| (c.miniclip_id.as_str(), a.as_str()))
        })
    }
}

fn first_by_time<T: Clone>(items: &[T], time: impl Fn(&T) -> f64, max: usize) -> Vec<T> {
    let mut sorted = items.to_vec();
    sorted.sort_by(|a, b| time(a).total_cmp(&time(b)));
    sorted.truncate(max);
    sorted
}

/// Composes HITs of `per_hit - 1` regular miniclips plus one ground-truth
/// miniclip, each miniclip limited to its first `max_actions` actions by time.
///
/// Regular miniclips are shuffled with `seed`; when their count is not a
/// multiple of `per_hit - 1` the last HIT is filled with miniclips from the
/// start of the shuffled order. Ground-truth miniclips are reused round-robin.
pub fn build_hits(
    miniclips: &[ClipActions],
    gt_pool: &[GroundTruthClip],
    per_hit: usize,
    max_actions: usize,
    seed: u64,
) -> Result<Vec<Hit>, AnnotationError> {
    if gt_pool.is_empty() {
        return Err(AnnotationError::InsufficientGroundTruth);
    }
    if let Some(bad) = gt_pool.iter().find(|g| g.labels.len() <= 4) {
        return Err(AnnotationError::InvalidGroundTruth(bad.miniclip_id.clone()));
    }
    let regular_per_hit = per_hit.saturating_sub(1).max(1);
    let mut regular: Vec<&ClipActions> = miniclips.iter().filter(|m| !m.actions.is_empty()).collect();
    if regular.is_empty() {
        return Ok(Vec::new());
    }
    if regular.len() < regular_per_hit {
        return Err(AnnotationError::TooFewMiniclips {
            have: regular.len(),
            need: regular_per_hit,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    regular.shuffle(&mut rng);
    let mut gts: Vec<&GroundTruthClip> = gt_pool.iter().collect();
    gts.shuffle(&mut rng);

    let n_hits = regular.len().div_ceil(regular_per_hit);
    let mut hits = Vec::with_capacity(n_hits);
    for h in 0..n_hits {
        let mut clips: Vec<HitClip> = (0..regular_per_hit)
            .map(|k| {
                let m = regular[(h * regular_per_hit + k) % regular.len()];
                HitClip {
                    miniclip_id: m.miniclip_id.clone(),
                    action_ids: first_by_time(&m.actions, |a| a.1, max_actions)
                        .into_iter()
                        .map(|a| a.0)
                        .collect(),
                    ground_truth: false,
                }
            })
            .collect();
        let gt = gts[h % gts.len()];
        let gt_clip = HitClip {
            miniclip_id: gt.miniclip_id.clone(),
            action_ids: first_by_time(&gt.labels, |l| l.1, max_actions)
                .into_iter()
                .map(|l| l.0)
                .collect(),
            ground_truth: true,
        };
        let pos = rng.random_range(0..=clips.len());
        clips.insert(pos, gt_clip);
        hits.push(Hit {
            hit_id: format!("hit{h:05}"),
            clips,
        });
    }
    Ok(hits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpamVerdict {
    Accept,
    RejectUniform,
    RejectLowAccuracy,
}

/// Indexes a submission by slot, rejecting labels outside the HIT and
/// duplicates, and requiring every slot to be answered.
pub fn index_submission<'a>(
    hit: &'a Hit,
    labels: &[LabelEntry],
) -> Result<HashMap<(&'a str, &'a str), RawLabel>, AnnotationError> {
    let slots: BTreeSet<(&str, &str)> = hit.slots().collect();
    let mut answers = HashMap::with_capacity(labels.len());
    for l in labels {
        let key = slots
            .iter()
            .find(|(m, a)| *m == l.miniclip_id && *a == l.action_id)
            .copied()
            .ok_or_else(|| AnnotationError::UnexpectedLabel {
                miniclip_id: l.miniclip_id.clone(),
                action_id: l.action_id.clone(),
            })?;
        if answers.insert(key, l.raw_label).is_some() {
            return Err(AnnotationError::DuplicateLabel {
                miniclip_id: l.miniclip_id.clone(),
                action_id: l.action_id.clone(),
            });
        }
    }
    if let Some((m, a)) = slots.iter().find(|s| !answers.contains_key(*s)) {
        return Err(AnnotationError::IncompleteSubmission {
            miniclip_id: m.to_string(),
            action_id: a.to_string(),
        });
    }
    Ok(answers)
}

/// Screens one worker's answers for a HIT. Uniform answers across the whole
/// HIT are rejected outright; otherwise the binarized answers on the
/// ground-truth miniclip must reach 20% accuracy.
pub fn detect_spam(
    hit: &Hit,
    labels: &[LabelEntry],
    gt_labels: &HashMap<String, BinaryLabel>,
) -> Result<SpamVerdict, AnnotationError> {
    let answers = index_submission(hit, labels)?;
    let mut distinct = answers.values();
    if let Some(first) = distinct.next() {
        if distinct.all(|l| l == first) {
            return Ok(SpamVerdict::RejectUniform);
        }
    }
    let Some(gt) = hit.ground_truth_clip() else {
        return Err(AnnotationError::InsufficientGroundTruth);
    };
    let mut total = 0usize;
    let mut correct = 0usize;
    for action in &gt.action_ids {
        let Some(expected) = gt_labels.get(action) else {
            continue;
        };
        total += 1;
        if answers[&(gt.miniclip_id.as_str(), action.as_str())].binarize() == *expected {
            correct += 1;
        }
    }
    if total == 0 {
        return Err(AnnotationError::InvalidGroundTruth(gt.miniclip_id.clone()));
    }
    if (correct as f64) < MIN_GT_ACCURACY * total as f64 {
        Ok(SpamVerdict::RejectLowAccuracy)
    } else {
        Ok(SpamVerdict::Accept)
    }
}

/// Majority vote over exactly three accepted annotations per action.
/// Output is ordered by `(miniclip_id, action_id)`.
pub fn aggregate(records: &[AnnotationRecord]) -> Result<Vec<AggregatedLabel>, AnnotationError> {
    let mut groups: BTreeMap<(&str, &str), Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.miniclip_id.as_str(), r.action_id.as_str()))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((m, a), rs)| {
            let workers: BTreeSet<&str> = rs.iter().map(|r| r.worker_id.as_str()).collect();
            if rs.len() != RATERS_PER_ITEM || workers.len() != rs.len() {
                return Err(AnnotationError::WrongAnnotatorCount {
                    miniclip_id: m.to_string(),
                    action_id: a.to_string(),
                    count: workers.len(),
                });
            }
            let visible = rs
                .iter()
                .filter(|r| r.raw_label.binarize().is_visible())
                .count() as u32;
            let votes = VoteCounts {
                visible,
                not_visible: RATERS_PER_ITEM as u32 - visible,
            };
            Ok(AggregatedLabel {
                miniclip_id: m.to_string(),
                action_id: a.to_string(),
                label: BinaryLabel::from_visible(votes.visible > votes.not_visible),
                votes,
            })
        })
        .collect()
}

/// Binarized-vote count matrix (`[visible, not visible]` per action) for
/// actions with exactly three annotations.
pub fn vote_matrix(records: &[AnnotationRecord]) -> Vec<Vec<u32>> {
    let mut groups: BTreeMap<(&str, &str), [u32; 2]> = BTreeMap::new();
    let mut sizes: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for r in records {
        let key = (r.miniclip_id.as_str(), r.action_id.as_str());
        let slot = if r.raw_label.binarize().is_visible() { 0 } else { 1 };
        groups.entry(key).or_default()[slot] += 1;
        *sizes.entry(key).or_default() += 1;
    }
    groups
        .into_iter()
        .filter(|(k, _)| sizes[k] == RATERS_PER_ITEM)
        .map(|(_, c)| c.to_vec())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl ChannelSplit {
    /// First eight channels train, the ninth validates, the rest test.
    pub fn from_order(channels: &[String]) -> Self {
        Self::with_sizes(channels, 8, 1)
    }

    pub fn with_sizes(channels: &[String], n_train: usize, n_val: usize) -> Self {
        let n_train = n_train.min(channels.len());
        let n_val = n_val.min(channels.len() - n_train);
        Self {
            train: channels[..n_train].to_vec(),
            validation: channels[n_train..n_train + n_val].to_vec(),
            test: channels[n_train + n_val..].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partitions<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
}

/// Partitions items by channel. Every item's channel must be listed in
/// `split`.
pub fn split_by_channel<T>(
    items: Vec<T>,
    channel_of: impl Fn(&T) -> &str,
    split: &ChannelSplit,
) -> Result<Partitions<T>, AnnotationError> {
    let mut out = Partitions {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for item in items {
        let ch = channel_of(&item);
        let target = if split.train.iter().any(|c| c == ch) {
            &mut out.train
        } else if split.validation.iter().any(|c| c == ch) {
            &mut out.validation
        } else if split.test.iter().any(|c| c == ch) {
            &mut out.test
        } else {
            return Err(AnnotationError::UnknownChannel(ch.to_string()));
        };
        target.push(item);
    }
    Ok(out)
}
