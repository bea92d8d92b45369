//! In-process annotation store behind the labeling HTTP API.
//!
//! HITs are served first-in first-out. A HIT stays in the queue until three
//! workers have had a submission accepted for it; rejected submissions leave
//! it queued for someone else. Each HIT has its own lock for the submission
//! list, and accepted records go to one shared append-only store.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    detect_spam, fleiss_kappa, vote_matrix, AnnotationError, AnnotationRecord, BinaryLabel, Hit,
    LabelEntry, SpamVerdict, RATERS_PER_ITEM,
};
use crate::segmentation::frame_file_name;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown HIT {0}")]
    UnknownHit(String),
    #[error("worker {worker_id} already submitted HIT {hit_id}")]
    Duplicate { hit_id: String, worker_id: String },
    #[error("HIT {0} already has three accepted submissions")]
    HitComplete(String),
    #[error(transparent)]
    Invalid(#[from] AnnotationError),
    #[error("record log: {0}")]
    Log(#[from] std::io::Error),
}

/// Where the sampled frames for a miniclip live.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipFrames {
    pub frames_dir: PathBuf,
    pub fps: f64,
    pub start_s: f64,
    pub end_s: f64,
}

impl ClipFrames {
    /// Number of one-per-second samples.
    pub fn sample_count(&self) -> usize {
        let span = (self.end_s - self.start_s).max(0.0);
        span.floor() as usize + 1
    }

    /// Native frame index of the `i`-th one-per-second sample.
    pub fn native_index(&self, i: usize) -> usize {
        ((self.start_s + i as f64) * self.fps).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionView {
    pub action_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipView {
    pub miniclip_id: String,
    pub frame_urls: Vec<String>,
    pub actions: Vec<ActionView>,
}

/// What a worker sees. The ground-truth flag is not included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitView {
    pub hit_id: String,
    pub miniclips: Vec<ClipView>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub verdict: SpamVerdict,
    pub accepted_for_hit: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub hits_total: usize,
    pub hits_complete: usize,
    pub submissions_accepted: usize,
    pub submissions_rejected: usize,
    pub annotated: usize,
    pub required: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    /// `None` while kappa is undefined (no complete items, or one category).
    pub kappa: Option<f64>,
    pub items: usize,
}

#[derive(Debug, Default)]
struct HitState {
    workers: BTreeSet<String>,
    accepted: usize,
    rejected: usize,
}

#[derive(Default)]
struct Store {
    records: Vec<AnnotationRecord>,
    per_slot: HashMap<(String, String), usize>,
    log: Option<Box<dyn Write + Send + Sync>>,
}

pub struct AnnotationService {
    hits: Vec<Hit>,
    hit_index: HashMap<String, usize>,
    hit_states: Vec<Mutex<HitState>>,
    gt_labels: HashMap<String, BinaryLabel>,
    action_text: HashMap<String, String>,
    frames: HashMap<String, ClipFrames>,
    required: usize,
    store: RwLock<Store>,
}

impl AnnotationService {
    pub fn new(
        hits: Vec<Hit>,
        gt_labels: HashMap<String, BinaryLabel>,
        action_text: HashMap<String, String>,
        frames: HashMap<String, ClipFrames>,
    ) -> Self {
        let hit_index = hits
            .iter()
            .enumerate()
            .map(|(i, h)| (h.hit_id.clone(), i))
            .collect();
        let required = hits
            .iter()
            .flat_map(|h| h.clips.iter().filter(|c| !c.ground_truth))
            .flat_map(|c| c.action_ids.iter().map(move |a| (c.miniclip_id.as_str(), a.as_str())))
            .collect::<BTreeSet<_>>()
            .len();
        let hit_states = hits.iter().map(|_| Mutex::default()).collect();
        Self {
            hits,
            hit_index,
            hit_states,
            gt_labels,
            action_text,
            frames,
            required,
            store: RwLock::default(),
        }
    }

    /// Appends every newly accepted record to `log` as one JSON line.
    pub fn with_log(self, log: Box<dyn Write + Send + Sync>) -> Self {
        self.store.write().unwrap().log = Some(log);
        self
    }

    /// Replays records from an earlier run's log.
    pub fn restore(&self, records: Vec<AnnotationRecord>) {
        let mut store = self.store.write().unwrap();
        let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
        for r in records {
            if let Some(&i) = self.hit_index.get(&r.hit_id) {
                if seen.insert((r.hit_id.clone(), r.worker_id.clone())) {
                    let mut st = self.hit_states[i].lock().unwrap();
                    st.workers.insert(r.worker_id.clone());
                    st.accepted += 1;
                }
            }
            *store
                .per_slot
                .entry((r.miniclip_id.clone(), r.action_id.clone()))
                .or_default() += 1;
            store.records.push(r);
        }
    }

    pub fn hits(&self) -> &[Hit] {
        &self.hits
    }

    fn view(&self, hit: &Hit) -> HitView {
        HitView {
            hit_id: hit.hit_id.clone(),
            miniclips: hit
                .clips
                .iter()
                .map(|c| ClipView {
                    miniclip_id: c.miniclip_id.clone(),
                    frame_urls: (0..self.frames.get(&c.miniclip_id).map_or(0, ClipFrames::sample_count))
                        .map(|i| format!("/frames/{}/{i}.pgm", c.miniclip_id))
                        .collect(),
                    actions: c
                        .action_ids
                        .iter()
                        .map(|a| ActionView {
                            action_id: a.clone(),
                            text: self.action_text.get(a).cloned().unwrap_or_default(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// The oldest HIT that still needs accepted submissions and that this
    /// worker has not submitted.
    pub fn next_hit(&self, worker_id: &str) -> Option<HitView> {
        self.hits
            .iter()
            .zip(&self.hit_states)
            .find(|(_, st)| {
                let st = st.lock().unwrap();
                st.accepted < RATERS_PER_ITEM && !st.workers.contains(worker_id)
            })
            .map(|(h, _)| self.view(h))
    }

    pub fn submit(
        &self,
        hit_id: &str,
        worker_id: &str,
        labels: &[LabelEntry],
        submitted_at: u64,
    ) -> Result<SubmitOutcome, ServiceError> {
        let &i = self
            .hit_index
            .get(hit_id)
            .ok_or_else(|| ServiceError::UnknownHit(hit_id.to_string()))?;
        let hit = &self.hits[i];
        let mut st = self.hit_states[i].lock().unwrap();
        if st.workers.contains(worker_id) {
            return Err(ServiceError::Duplicate {
                hit_id: hit_id.to_string(),
                worker_id: worker_id.to_string(),
            });
        }
        if st.accepted >= RATERS_PER_ITEM {
            return Err(ServiceError::HitComplete(hit_id.to_string()));
        }
        let verdict = detect_spam(hit, labels, &self.gt_labels)?;
        st.workers.insert(worker_id.to_string());
        if verdict != SpamVerdict::Accept {
            st.rejected += 1;
            return Ok(SubmitOutcome {
                verdict,
                accepted_for_hit: st.accepted,
            });
        }
        st.accepted += 1;

        let gt_clip = hit.ground_truth_clip().map(|c| c.miniclip_id.as_str());
        let mut store = self.store.write().unwrap();
        let mut fresh = Vec::new();
        for l in labels.iter().filter(|l| Some(l.miniclip_id.as_str()) != gt_clip) {
            let count = store
                .per_slot
                .entry((l.miniclip_id.clone(), l.action_id.clone()))
                .or_default();
            // a miniclip repeated in a topped-up HIT can collect extra votes
            if *count >= RATERS_PER_ITEM {
                continue;
            }
            *count += 1;
            fresh.push(AnnotationRecord {
                worker_id: worker_id.to_string(),
                hit_id: hit_id.to_string(),
                miniclip_id: l.miniclip_id.clone(),
                action_id: l.action_id.clone(),
                raw_label: l.raw_label,
                submitted_at,
            });
        }
        if let Some(log) = store.log.as_mut() {
            for r in &fresh {
                serde_json::to_writer(&mut *log, r).map_err(std::io::Error::from)?;
                log.write_all(b"\n")?;
            }
            log.flush()?;
        }
        store.records.extend(fresh);
        Ok(SubmitOutcome {
            verdict,
            accepted_for_hit: st.accepted,
        })
    }

    pub fn records(&self) -> Vec<AnnotationRecord> {
        self.store.read().unwrap().records.clone()
    }

    pub fn progress(&self) -> Progress {
        let (mut complete, mut accepted, mut rejected) = (0, 0, 0);
        for st in &self.hit_states {
            let st = st.lock().unwrap();
            complete += (st.accepted >= RATERS_PER_ITEM) as usize;
            accepted += st.accepted;
            rejected += st.rejected;
        }
        let store = self.store.read().unwrap();
        Progress {
            hits_total: self.hits.len(),
            hits_complete: complete,
            submissions_accepted: accepted,
            submissions_rejected: rejected,
            annotated: store
                .per_slot
                .values()
                .filter(|&&c| c >= RATERS_PER_ITEM)
                .count(),
            required: self.required,
        }
    }

    pub fn agreement(&self) -> Agreement {
        let store = self.store.read().unwrap();
        let matrix = vote_matrix(&store.records);
        Agreement {
            kappa: fleiss_kappa(&matrix, RATERS_PER_ITEM as u32).ok(),
            items: matrix.len(),
        }
    }

    /// Path of the `i`-th one-per-second frame of a miniclip.
    pub fn frame_path(&self, miniclip_id: &str, i: usize) -> Option<PathBuf> {
        let f = self.frames.get(miniclip_id)?;
        if i >= f.sample_count() {
            return None;
        }
        Some(f.frames_dir.join(frame_file_name(f.native_index(i))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{build_hits, ClipActions, GroundTruthClip, RawLabel};
    use std::sync::Arc;

    fn service() -> AnnotationService {
        let clips: Vec<ClipActions> = (0..4)
            .map(|i| ClipActions {
                miniclip_id: format!("m{i}"),
                actions: (0..2).map(|a| (format!("m{i}_a{a}"), a as f64)).collect(),
            })
            .collect();
        let gt = GroundTruthClip {
            miniclip_id: "g".into(),
            labels: (0..5)
                .map(|a| (format!("g_a{a}"), a as f64, BinaryLabel::from_visible(a % 2 == 0)))
                .collect(),
        };
        let gt_labels = gt.labels.iter().map(|(a, _, l)| (a.clone(), *l)).collect();
        let hits = build_hits(&clips, &[gt], 5, 7, 0).unwrap();
        let mut frames = HashMap::new();
        frames.insert(
            "m0".to_string(),
            ClipFrames {
                frames_dir: "/frames/v".into(),
                fps: 30.0,
                start_s: 10.0,
                end_s: 12.5,
            },
        );
        AnnotationService::new(hits, gt_labels, HashMap::new(), frames)
    }

    fn answers(view: &HitView, visible: impl Fn(&str) -> bool) -> Vec<LabelEntry> {
        view.miniclips
            .iter()
            .flat_map(|c| {
                c.actions.iter().map(|a| LabelEntry {
                    miniclip_id: c.miniclip_id.clone(),
                    action_id: a.action_id.clone(),
                    raw_label: if visible(&a.action_id) {
                        RawLabel::Visible
                    } else {
                        RawLabel::NotVisible
                    },
                })
            })
            .collect()
    }

    fn good(a: &str) -> bool {
        a.ends_with("a0") || a.ends_with("a2") || a.ends_with("a4")
    }

    #[test]
    fn three_accepts_complete_a_hit() {
        let svc = service();
        let view = svc.next_hit("w1").unwrap();
        assert_eq!(view.miniclips.len(), 5);
        for w in ["w1", "w2", "w3"] {
            let out = svc.submit(&view.hit_id, w, &answers(&view, good), 1).unwrap();
            assert_eq!(out.verdict, SpamVerdict::Accept);
        }
        assert!(svc.next_hit("w4").is_none());
        let p = svc.progress();
        assert_eq!((p.hits_complete, p.annotated, p.required), (1, 8, 8));
        assert_eq!(svc.records().len(), 24);
        let agreement = svc.agreement();
        assert_eq!(agreement.items, 8);
        assert_eq!(agreement.kappa, Some(1.0));
    }

    #[test]
    fn duplicates_and_rejections() {
        let svc = service();
        let view = svc.next_hit("w1").unwrap();
        let out = svc.submit(&view.hit_id, "w1", &answers(&view, |_| true), 1).unwrap();
        assert_eq!(out.verdict, SpamVerdict::RejectUniform);
        assert!(matches!(
            svc.submit(&view.hit_id, "w1", &answers(&view, good), 1),
            Err(ServiceError::Duplicate { .. })
        ));
        // rejected HIT is offered to others, not to w1 again
        assert!(svc.next_hit("w1").is_none());
        assert_eq!(svc.next_hit("w2").unwrap().hit_id, view.hit_id);
        assert!(svc.records().is_empty());
        assert_eq!(svc.progress().submissions_rejected, 1);
        assert_eq!(svc.agreement().kappa, None);
        assert!(matches!(
            svc.submit("nope", "w1", &[], 1),
            Err(ServiceError::UnknownHit(_))
        ));
    }

    #[test]
    fn log_and_restore() {
        #[derive(Clone, Default)]
        struct Shared(Arc<Mutex<Vec<u8>>>);
        impl Write for Shared {
            fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
                self.0.lock().unwrap().extend_from_slice(b);
                Ok(b.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let buf = Shared::default();
        let svc = service().with_log(Box::new(buf.clone()));
        let view = svc.next_hit("w1").unwrap();
        svc.submit(&view.hit_id, "w1", &answers(&view, good), 5).unwrap();
        let text = String::from_utf8(buf.0.lock().unwrap().clone()).unwrap();
        let logged: Vec<AnnotationRecord> = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(logged, svc.records());

        let again = service();
        again.restore(logged);
        assert!(matches!(
            again.submit(&view.hit_id, "w1", &answers(&view, good), 6),
            Err(ServiceError::Duplicate { .. })
        ));
        assert_eq!(again.progress().submissions_accepted, 1);
    }

    #[test]
    fn frame_urls_and_paths() {
        let svc = service();
        let view = svc.next_hit("w").unwrap();
        let m0 = view.miniclips.iter().find(|c| c.miniclip_id == "m0").unwrap();
        assert_eq!(m0.frame_urls, vec!["/frames/m0/0.pgm", "/frames/m0/1.pgm", "/frames/m0/2.pgm"]);
        assert_eq!(
            svc.frame_path("m0", 1).unwrap(),
            PathBuf::from("/frames/v/frame_000330.pgm")
        );
        assert!(svc.frame_path("m0", 3).is_none());
        assert!(svc.frame_path("m9", 0).is_none());
    }
}
