//! Miniclip segmentation and the low-motion filter.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MAX_CORE_S: f64 = 60.0;
pub const DEFAULT_PAD_S: f64 = 15.0;
pub const DEFAULT_STRIDE: usize = 100;
pub const DEFAULT_MOTION_THRESHOLD: f64 = 0.8;

#[derive(Debug, Error)]
pub enum SegmentationError {
    #[error("no actions to segment")]
    EmptyActionList,
    #[error("actions are not sorted by time")]
    UnsortedActions,
    #[error("frames differ in size: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("frame has constant intensity")]
    ZeroVariance,
    #[error("{sampled} sampled frames; need at least 2")]
    TooFewFrames { sampled: usize },
    #[error("every sampled frame pair has a constant frame")]
    NoScorablePairs,
    #[error("frame must be at least 2x2 with width*height pixels")]
    BadFrame,
    #[error("invalid PGM: {0}")]
    Pgm(String),
    #[error("{clips} miniclips but {scores} scores")]
    ScoreCountMismatch { clips: usize, scores: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Miniclip {
    pub video_id: String,
    pub index: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub action_ids: Vec<String>,
}

impl Miniclip {
    pub fn id(&self) -> String {
        miniclip_id(&self.video_id, self.index)
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

pub fn miniclip_id(video_id: &str, index: usize) -> String {
    format!("{video_id}_m{index:03}")
}

/// Greedy grouping of time-sorted actions. A group grows while its span
/// (last minus first action time) stays within `max_core_s`; each group is
/// then padded by `pad_s` on both sides and clamped to the video.
pub fn segment(
    video_id: &str,
    duration_s: f64,
    actions: &[(String, f64)],
    max_core_s: f64,
    pad_s: f64,
) -> Result<Vec<Miniclip>, SegmentationError> {
    if actions.is_empty() {
        return Err(SegmentationError::EmptyActionList);
    }
    if actions.windows(2).any(|w| w[1].1 < w[0].1) {
        return Err(SegmentationError::UnsortedActions);
    }
    let mut groups: Vec<&[(String, f64)]> = Vec::new();
    let mut start = 0;
    for i in 1..actions.len() {
        if actions[i].1 - actions[start].1 > max_core_s {
            groups.push(&actions[start..i]);
            start = i;
        }
    }
    groups.push(&actions[start..]);

    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(index, g)| {
            let first = g[0].1;
            let last = g[g.len() - 1].1;
            Miniclip {
                video_id: video_id.to_string(),
                index,
                start_s: (first - pad_s).max(0.0),
                end_s: (last + pad_s).min(duration_s),
                action_ids: g.iter().map(|(id, _)| id.clone()).collect(),
            }
        })
        .collect())
}

/// 8-bit grayscale frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, SegmentationError> {
        if width < 2 || height < 2 || width * height != pixels.len() {
            return Err(SegmentationError::BadFrame);
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Reads a binary (P5) PGM with maxval 255.
    pub fn read_pgm<R: BufRead>(mut r: R) -> Result<Self, SegmentationError> {
        let mut fields = Vec::with_capacity(4);
        let mut buf = Vec::new();
        while fields.len() < 4 {
            buf.clear();
            // header tokens are whitespace separated; comments run to end of line
            let mut byte = [0u8];
            loop {
                if r.read(&mut byte)? == 0 {
                    return Err(SegmentationError::Pgm("truncated header".into()));
                }
                match byte[0] {
                    b'#' if buf.is_empty() => {
                        let mut skip = Vec::new();
                        r.read_until(b'\n', &mut skip)?;
                    }
                    b if b.is_ascii_whitespace() => {
                        if !buf.is_empty() {
                            break;
                        }
                    }
                    b => buf.push(b),
                }
            }
            fields.push(String::from_utf8_lossy(&buf).into_owned());
        }
        if fields[0] != "P5" {
            return Err(SegmentationError::Pgm(format!("magic {:?}", fields[0])));
        }
        let num = |s: &str| -> Result<usize, SegmentationError> {
            s.parse()
                .map_err(|_| SegmentationError::Pgm(format!("bad header field {s:?}")))
        };
        let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxval != 255 {
            return Err(SegmentationError::Pgm(format!("maxval {maxval}")));
        }
        let mut pixels = vec![0u8; w * h];
        r.read_exact(&mut pixels)
            .map_err(|_| SegmentationError::Pgm("truncated pixel data".into()))?;
        Self::new(w, h, pixels)
    }

    pub fn write_pgm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.pixels)
    }
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.pgm")
}

/// Pearson correlation over all pixels of two equally sized frames.
pub fn pearson_2d(a: &Frame, b: &Frame) -> Result<f64, SegmentationError> {
    if a.width != b.width || a.height != b.height {
        return Err(SegmentationError::DimensionMismatch(
            a.width, a.height, b.width, b.height,
        ));
    }
    let n = a.pixels.len() as f64;
    let mean = |p: &[u8]| p.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (ma, mb) = (mean(&a.pixels), mean(&b.pixels));
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.pixels.iter().zip(&b.pixels) {
        let dx = x as f64 - ma;
        let dy = y as f64 - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return Err(SegmentationError::ZeroVariance);
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    })
}

/// Frame indices kept by sampling every `stride`-th frame from `count`.
pub fn sampled_indices(count: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..count).step_by(stride.max(1))
}

/// Median correlation between consecutive sampled frames (every `stride`-th
/// frame starting at 0). Pairs involving a constant frame are skipped.
pub fn motion_score(frames: &[Frame], stride: usize) -> Result<f64, SegmentationError> {
    let sampled: Vec<&Frame> = sampled_indices(frames.len(), stride)
        .map(|i| &frames[i])
        .collect();
    if sampled.len() < 2 {
        return Err(SegmentationError::TooFewFrames {
            sampled: sampled.len(),
        });
    }
    let mut rs = Vec::with_capacity(sampled.len() - 1);
    for pair in sampled.windows(2) {
        match pearson_2d(pair[0], pair[1]) {
            Ok(r) => rs.push(r),
            Err(SegmentationError::ZeroVariance) => continue,
            Err(e) => return Err(e),
        }
    }
    median(&mut rs).ok_or(SegmentationError::NoScorablePairs)
}

/// Drops miniclips whose motion score is strictly above `threshold`.
pub fn filter_static<T>(
    miniclips: Vec<T>,
    scores: &[f64],
    threshold: f64,
) -> Result<(Vec<T>, Vec<T>), SegmentationError> {
    if miniclips.len() != scores.len() {
        return Err(SegmentationError::ScoreCountMismatch {
            clips: miniclips.len(),
            scores: scores.len(),
        });
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (clip, &score) in miniclips.into_iter().zip(scores) {
        if score > threshold {
            dropped.push(clip);
        } else {
            kept.push(clip);
        }
    }
    Ok((kept, dropped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn acts(times: &[f64]) -> Vec<(String, f64)> {
        times
            .iter()
            .enumerate()
            .map(|(i, &t)| (format!("a{i}"), t))
            .collect()
    }

    fn spans(clips: &[Miniclip]) -> Vec<(f64, f64)> {
        clips.iter().map(|c| (c.start_s, c.end_s)).collect()
    }

    #[test]
    fn one_group() {
        let clips = segment("v", 600.0, &acts(&[100.0, 110.0, 120.0]), 60.0, 15.0).unwrap();
        assert_eq!(spans(&clips), vec![(85.0, 135.0)]);
        assert_eq!(clips[0].action_ids, vec!["a0", "a1", "a2"]);
    }

    #[test]
    fn clamped_at_start_and_end() {
        let clips = segment("v", 600.0, &acts(&[5.0]), 60.0, 15.0).unwrap();
        assert_eq!(spans(&clips), vec![(0.0, 20.0)]);
        let clips = segment("v", 100.0, &acts(&[95.0]), 60.0, 15.0).unwrap();
        assert_eq!(spans(&clips), vec![(80.0, 100.0)]);
    }

    #[test]
    fn greedy_split() {
        // 65 - 0 > 60 starts a new group; 130 - 65 > 60 starts another.
        let clips = segment("v", 600.0, &acts(&[0.0, 30.0, 65.0, 130.0]), 60.0, 15.0).unwrap();
        assert_eq!(
            spans(&clips),
            vec![(0.0, 45.0), (50.0, 80.0), (115.0, 145.0)]
        );
        assert_eq!(clips[1].action_ids, vec!["a2"]);
        // exactly 60 s apart stays together
        let clips = segment("v", 600.0, &acts(&[10.0, 70.0]), 60.0, 15.0).unwrap();
        assert_eq!(spans(&clips), vec![(0.0, 85.0)]);
    }

    #[test]
    fn segment_errors() {
        assert!(matches!(
            segment("v", 10.0, &[], 60.0, 15.0),
            Err(SegmentationError::EmptyActionList)
        ));
        assert!(matches!(
            segment("v", 100.0, &acts(&[5.0, 1.0]), 60.0, 15.0),
            Err(SegmentationError::UnsortedActions)
        ));
    }

    fn frame(w: usize, h: usize, px: &[u8]) -> Frame {
        Frame::new(w, h, px.to_vec()).unwrap()
    }

    #[test]
    fn pearson_examples() {
        let a = frame(2, 2, &[0, 1, 2, 3]);
        let b = frame(2, 2, &[0, 2, 1, 3]);
        assert!((pearson_2d(&a, &b).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(pearson_2d(&a, &a).unwrap(), 1.0);
        let neg = frame(2, 2, &[255, 254, 253, 252]);
        assert!((pearson_2d(&a, &neg).unwrap() + 1.0).abs() < 1e-12);
        let flat = frame(2, 2, &[7; 4]);
        assert!(matches!(pearson_2d(&a, &flat), Err(SegmentationError::ZeroVariance)));
        let big = frame(3, 2, &[0; 6]);
        assert!(matches!(
            pearson_2d(&a, &big),
            Err(SegmentationError::DimensionMismatch(..))
        ));
        assert!(Frame::new(1, 4, vec![0; 4]).is_err());
        assert!(Frame::new(2, 2, vec![0; 5]).is_err());
    }

    #[test]
    fn median_definition() {
        assert_eq!(median(&mut [0.2, 0.9, 0.5]), Some(0.5));
        assert_eq!(median(&mut [0.2, 0.9, 0.5, 0.4]), Some(0.45));
        assert_eq!(median(&mut []), None);
    }

    fn random_frame(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Frame {
        Frame::new(w, h, (0..w * h).map(|_| rng.random()).collect()).unwrap()
    }

    #[test]
    fn motion_identical_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_frame(&mut rng, 8, 6);
        let frames = vec![f; 301];
        assert_eq!(motion_score(&frames, 100).unwrap(), 1.0);
        assert!(matches!(
            motion_score(&frames[..100], 100),
            Err(SegmentationError::TooFewFrames { sampled: 1 })
        ));
    }

    // Independent recomputation: explicit index list, textbook formula on
    // f64 vectors, sort-based median.
    fn oracle_motion(frames: &[Frame], stride: usize) -> f64 {
        let mut idx = Vec::new();
        let mut i = 0;
        while i < frames.len() {
            idx.push(i);
            i += stride;
        }
        let mut rs: Vec<f64> = idx
            .windows(2)
            .map(|w| {
                let x: Vec<f64> = frames[w[0]].pixels().iter().map(|&v| v.into()).collect();
                let y: Vec<f64> = frames[w[1]].pixels().iter().map(|&v| v.into()).collect();
                let n = x.len() as f64;
                let sx: f64 = x.iter().sum();
                let sy: f64 = y.iter().sum();
                let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
                let sxx: f64 = x.iter().map(|a| a * a).sum();
                let syy: f64 = y.iter().map(|b| b * b).sum();
                (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
            })
            .collect();
        rs.sort_by(f64::total_cmp);
        let m = rs.len();
        if m % 2 == 1 {
            rs[m / 2]
        } else {
            (rs[m / 2 - 1] + rs[m / 2]) / 2.0
        }
    }

    #[test]
    fn motion_matches_oracle_on_250_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = random_frame(&mut rng, 16, 12);
        let frames: Vec<Frame> = (0..250)
            .map(|i| {
                let px = base
                    .pixels()
                    .iter()
                    .map(|&p| p.saturating_add(((i * 7) % 50) as u8).wrapping_add(rng.random_range(0..40)))
                    .collect();
                Frame::new(16, 12, px).unwrap()
            })
            .collect();
        let got = motion_score(&frames, 100).unwrap();
        assert!((got - oracle_motion(&frames, 100)).abs() < 1e-9);
        let got = motion_score(&frames, 7).unwrap();
        assert!((got - oracle_motion(&frames, 7)).abs() < 1e-9);
    }

    #[test]
    fn constant_pairs_are_skipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_frame(&mut rng, 4, 4);
        let flat = Frame::new(4, 4, vec![9; 16]).unwrap();
        let frames = vec![a.clone(), a.clone(), flat.clone()];
        assert_eq!(motion_score(&frames, 1).unwrap(), 1.0);
        assert!(matches!(
            motion_score(&[flat.clone(), flat], 1),
            Err(SegmentationError::NoScorablePairs)
        ));
    }

    #[test]
    fn static_filter_boundary() {
        let (kept, dropped) = filter_static(vec!["a", "b", "c"], &[0.79, 0.80, 0.81], 0.8).unwrap();
        assert_eq!(kept, vec!["a", "b"]);
        assert_eq!(dropped, vec!["c"]);
        let (k, d) = filter_static(Vec::<u8>::new(), &[], 0.8).unwrap();
        assert!(k.is_empty() && d.is_empty());
        assert!(filter_static(vec![1], &[], 0.8).is_err());
    }

    #[test]
    fn static_filter_matches_recheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let scores: Vec<f64> = (0..50).map(|_| rng.random_range(0.5..1.0)).collect();
        let ids: Vec<usize> = (0..50).collect();
        let (kept, dropped) = filter_static(ids, &scores, 0.8).unwrap();
        for i in 0..50 {
            assert_eq!(kept.contains(&i), scores[i] <= 0.8);
            assert_eq!(dropped.contains(&i), scores[i] > 0.8);
        }
    }

    #[test]
    fn pgm_round_trip() {
        let f = frame(3, 2, &[0, 10, 20, 30, 40, 255]);
        let mut buf = Vec::new();
        f.write_pgm(&mut buf).unwrap();
        assert_eq!(Frame::read_pgm(&buf[..]).unwrap(), f);
        let with_comment = b"P5\n# made by hand\n3 2\n255\n\x00\x0a\x14\x1e\x28\xff";
        assert_eq!(Frame::read_pgm(&with_comment[..]).unwrap(), f);
        assert!(Frame::read_pgm(&buf[..buf.len() - 1]).is_err());
        assert!(Frame::read_pgm(&b"P2\n3 2\n255\n"[..]).is_err());
        assert_eq!(frame_file_name(42), "frame_000042.pgm");
    }

    proptest! {
        #[test]
        fn pearson_properties(
            px in prop::collection::vec((0u8..60, any::<u8>()), 4..64),
            alpha in 1u8..=3,
            beta in 0u8..=70,
        ) {
            let w = 2;
            let n = px.len() / w * w;
            let a = Frame::new(w, n / w, px[..n].iter().map(|p| p.0).collect()).unwrap();
            let b = Frame::new(w, n / w, px[..n].iter().map(|p| p.1).collect()).unwrap();
            if let (Ok(ab), Ok(ba)) = (pearson_2d(&a, &b), pearson_2d(&b, &a)) {
                prop_assert_eq!(ab, ba);
                prop_assert!(ab.abs() <= 1.0 + 1e-12);
                let a2 = Frame::new(w, n / w, a.pixels().iter().map(|&v| alpha * v + beta).collect()).unwrap();
                prop_assert!((pearson_2d(&a2, &b).unwrap() - ab).abs() < 1e-9);
            }
        }

        #[test]
        fn segments_cover_actions(mut times in prop::collection::vec(0.0f64..1200.0, 1..60)) {
            times.sort_by(f64::total_cmp);
            let actions = acts(&times);
            let clips = segment("v", 1200.0, &actions, 60.0, 15.0).unwrap();
            let ids: Vec<String> = clips.iter().flat_map(|c| c.action_ids.clone()).collect();
            let expected: Vec<String> = actions.iter().map(|a| a.0.clone()).collect();
            prop_assert_eq!(ids, expected);
            for c in &clips {
                prop_assert!(c.start_s >= 0.0 && c.start_s < c.end_s && c.end_s <= 1200.0);
                prop_assert!(c.duration_s() <= 90.0 + 1e-9);
                let ts: Vec<f64> = c.action_ids.iter().map(|id| actions.iter().find(|a| &a.0 == id).unwrap().1).collect();
                prop_assert!(ts[ts.len() - 1] - ts[0] <= 60.0);
                prop_assert!(ts.iter().all(|&t| t >= c.start_s && t <= c.end_s));
            }
        }
    }
}
