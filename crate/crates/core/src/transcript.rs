//! Timed transcripts: WebVTT-subset parsing, the video manifest, and the
//! speech-density filter.

use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack allowed between the last cue and the manifest duration, in seconds.
/// Caption providers round cue ends up past the real end of the video.
pub const DURATION_TOLERANCE_S: f64 = 1.0;

/// Default minimum speech density, in words per second.
pub const DEFAULT_MIN_RATE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("malformed timestamp {token:?} on line {line}")]
    MalformedTimestamp { line: usize, token: String },
    #[error("cue on line {line} ends before it starts")]
    InvertedCue { line: usize },
    #[error("cue block on line {line} has no timing line")]
    MalformedCue { line: usize },
    #[error("transcript for {video_id} has no cues")]
    EmptyTranscript { video_id: String },
    #[error("cue ending at {end_s}s exceeds video duration {duration_s}s")]
    CueBeyondDuration { end_s: f64, duration_s: f64 },
    #[error("video {video_id} has non-positive duration")]
    ZeroDuration { video_id: String },
    #[error("transcript is not valid UTF-8")]
    Encoding,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionCue {
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
}

impl CaptionCue {
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.text.split_whitespace()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub video_id: String,
    pub duration_s: f64,
    pub cues: Vec<CaptionCue>,
}

impl Transcript {
    /// Builds a transcript from already-parsed cues, sorting them by start
    /// time and checking them against the video duration.
    pub fn new(
        video_id: impl Into<String>,
        duration_s: f64,
        mut cues: Vec<CaptionCue>,
    ) -> Result<Self, TranscriptError> {
        let video_id = video_id.into();
        if cues.is_empty() {
            return Err(TranscriptError::EmptyTranscript { video_id });
        }
        // Stable: cues that share a start keep file order.
        cues.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        if let Some(late) = cues
            .iter()
            .find(|c| c.end_s > duration_s + DURATION_TOLERANCE_S)
        {
            return Err(TranscriptError::CueBeyondDuration {
                end_s: late.end_s,
                duration_s,
            });
        }
        Ok(Self {
            video_id,
            duration_s,
            cues,
        })
    }

    pub fn word_count(&self) -> usize {
        self.cues.iter().map(|c| c.words().count()).sum()
    }
}

/// One line of the JSON-lines video manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub video_id: String,
    pub channel: String,
    pub duration_s: f64,
    pub transcript_path: String,
    pub frames_dir: String,
    /// Native frame rate of the extracted frames. Absent in most manifests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
}

impl ManifestEntry {
    pub const DEFAULT_FPS: f64 = 30.0;

    pub fn fps(&self) -> f64 {
        self.fps.unwrap_or(Self::DEFAULT_FPS)
    }
}

pub fn read_manifest<R: BufRead>(reader: R) -> Result<Vec<ManifestEntry>, serde_json::Error> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(serde_json::Error::io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Parses `HH:MM:SS.mmm` into seconds.
pub fn parse_timestamp(token: &str) -> Option<f64> {
    let (hms, millis) = token.split_once('.')?;
    if millis.len() != 3 || !millis.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let mut parts = hms.split(':');
    let (h, m, s) = (parts.next()?, parts.next()?, parts.next()?);
    if parts.next().is_some() {
        return None;
    }
    let digits = |f: &str| f.len() >= 2 && f.bytes().all(|b| b.is_ascii_digit());
    if !digits(h) || !digits(m) || !digits(s) || m.len() != 2 || s.len() != 2 {
        return None;
    }
    let (h, m, s): (u64, u64, u64) = (h.parse().ok()?, m.parse().ok()?, s.parse().ok()?);
    if m > 59 || s > 59 {
        return None;
    }
    let ms: u64 = millis.parse().ok()?;
    Some((h * 3600 + m * 60 + s) as f64 + ms as f64 / 1000.0)
}

pub fn format_timestamp(seconds: f64) -> String {
    let total_ms = (seconds.max(0.0) * 1000.0).round() as u64;
    let (h, rem) = (total_ms / 3_600_000, total_ms % 3_600_000);
    let (m, rem) = (rem / 60_000, rem % 60_000);
    let (s, ms) = (rem / 1000, rem % 1000);
    format!("{h:02}:{m:02}:{s:02}.{ms:03}")
}

fn strip_inline_tags(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut depth = 0usize;
    for ch in text.chars() {
        match ch {
            '<' => depth += 1,
            '>' if depth > 0 => depth -= 1,
            _ if depth == 0 => out.push(ch),
            _ => {}
        }
    }
    out
}

fn parse_timing_line(line: &str, line_no: usize) -> Result<(f64, f64), TranscriptError> {
    let (lhs, rhs) = line
        .split_once("-->")
        .ok_or(TranscriptError::MalformedCue { line: line_no })?;
    let start_tok = lhs.trim();
    // Anything after the end timestamp is cue settings, which are ignored.
    let end_tok = rhs.split_whitespace().next().unwrap_or("");
    let start = parse_timestamp(start_tok).ok_or_else(|| TranscriptError::MalformedTimestamp {
        line: line_no,
        token: start_tok.to_string(),
    })?;
    let end = parse_timestamp(end_tok).ok_or_else(|| TranscriptError::MalformedTimestamp {
        line: line_no,
        token: end_tok.to_string(),
    })?;
    if end < start {
        return Err(TranscriptError::InvertedCue { line: line_no });
    }
    Ok((start, end))
}

/// Parses the WebVTT subset: an optional `WEBVTT` header, then blank-line
/// separated cue blocks of one timing line plus one or more text lines.
/// `NOTE`, `STYLE` and `REGION` blocks and cue identifiers are skipped.
pub fn parse_transcript(
    raw: &[u8],
    video_id: &str,
    duration_s: f64,
) -> Result<Transcript, TranscriptError> {
    let text = std::str::from_utf8(raw).map_err(|_| TranscriptError::Encoding)?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);

    let mut cues = Vec::new();
    let mut block: Vec<(usize, &str)> = Vec::new();
    let mut first_block = true;
    let lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    for (line_no, line) in lines.chain(std::iter::once((0, ""))) {
        if !line.trim().is_empty() {
            block.push((line_no, line));
            continue;
        }
        if block.is_empty() {
            continue;
        }
        let is_header = first_block && block[0].1.trim_start().starts_with("WEBVTT");
        first_block = false;
        let head = block[0].1.trim_start();
        let skip = is_header
            || head.starts_with("NOTE")
            || head.starts_with("STYLE")
            || head.starts_with("REGION");
        if !skip {
            let timing = block
                .iter()
                .position(|(_, l)| l.contains("-->"))
                .filter(|&p| p <= 1)
                .ok_or(TranscriptError::MalformedCue { line: block[0].0 })?;
            let (tl, tline) = block[timing];
            let (start_s, end_s) = parse_timing_line(tline, tl)?;
            let body: Vec<String> = block[timing + 1..]
                .iter()
                .map(|(_, l)| strip_inline_tags(l).trim().to_string())
                .filter(|l| !l.is_empty())
                .collect();
            let body = body.join(" ");
            if !body.is_empty() {
                cues.push(CaptionCue {
                    start_s,
                    end_s,
                    text: body,
                });
            }
        }
        block.clear();
    }
    Transcript::new(video_id, duration_s, cues)
}

pub fn to_webvtt(t: &Transcript) -> String {
    let mut out = String::from("WEBVTT\n");
    for cue in &t.cues {
        let _ = write!(
            out,
            "\n{} --> {}\n{}\n",
            format_timestamp(cue.start_s),
            format_timestamp(cue.end_s),
            cue.text
        );
    }
    out
}

/// Total whitespace-separated tokens over the manifest duration.
pub fn words_per_second(t: &Transcript) -> Result<f64, TranscriptError> {
    if !(t.duration_s > 0.0) {
        return Err(TranscriptError::ZeroDuration {
            video_id: t.video_id.clone(),
        });
    }
    Ok(t.word_count() as f64 / t.duration_s)
}

/// Splits transcripts into those meeting `min_rate` and those below it.
/// A rate exactly equal to `min_rate` is kept.
pub fn filter_by_density(
    transcripts: Vec<Transcript>,
    min_rate: f64,
) -> Result<(Vec<Transcript>, Vec<Transcript>), TranscriptError> {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for t in transcripts {
        if words_per_second(&t)? >= min_rate {
            kept.push(t);
        } else {
            dropped.push(t);
        }
    }
    Ok((kept, dropped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn transcript(words: usize, duration_s: f64) -> Transcript {
        let text = vec!["word"; words.max(1)].join(" ");
        let mut t = Transcript::new(
            "v",
            duration_s,
            vec![CaptionCue {
                start_s: 0.0,
                end_s: 1.0,
                text,
            }],
        )
        .unwrap();
        if words == 0 {
            t.cues[0].text = String::new();
        }
        t
    }

    #[test]
    fn single_cue() {
        let raw = b"WEBVTT\n\n00:00:01.000 --> 00:00:03.000\nhello world\n";
        let t = parse_transcript(raw, "v1", 10.0).unwrap();
        assert_eq!(t.cues.len(), 1);
        assert_eq!(t.cues[0].text, "hello world");
        assert_eq!(t.cues[0].start_s, 1.0);
        assert_eq!(t.cues[0].end_s, 3.0);
    }

    #[test]
    fn header_only_is_empty() {
        let err = parse_transcript(b"WEBVTT\n\n", "v1", 10.0).unwrap_err();
        assert!(matches!(err, TranscriptError::EmptyTranscript { .. }));
        let err = parse_transcript(b"", "v1", 10.0).unwrap_err();
        assert!(matches!(err, TranscriptError::EmptyTranscript { .. }));
    }

    #[test]
    fn bad_timestamp() {
        let raw = b"WEBVTT\n\n00:00:1.000 --> 00:00:03.000\nhi\n";
        let err = parse_transcript(raw, "v1", 10.0).unwrap_err();
        assert!(matches!(err, TranscriptError::MalformedTimestamp { line: 3, .. }));
        let raw = b"00:00:01.000 --> 00:61:03.000\nhi\n";
        assert!(parse_transcript(raw, "v1", 10.0).is_err());
    }

    #[test]
    fn header_optional_and_settings_ignored() {
        let raw = "1\n00:00:01.000 --> 00:00:02.500 align:start position:0%\n<c>so</c> nice\ntoday\n\nNOTE a comment\n\n00:00:03.000 --> 00:00:04.000\nok\n";
        let t = parse_transcript(raw.as_bytes(), "v", 5.0).unwrap();
        assert_eq!(t.cues.len(), 2);
        assert_eq!(t.cues[0].text, "so nice today");
        assert_eq!(t.cues[0].end_s, 2.5);
    }

    #[test]
    fn cue_past_duration_is_rejected() {
        let raw = b"00:00:01.000 --> 00:00:12.000\nhi\n";
        assert!(parse_transcript(raw, "v", 11.0).is_ok());
        assert!(matches!(
            parse_transcript(raw, "v", 10.0).unwrap_err(),
            TranscriptError::CueBeyondDuration { .. }
        ));
    }

    #[test]
    fn shuffled_cues_come_back_sorted() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let cues: Vec<(u32, String)> = (0..12).map(|i| (i * 2, format!("cue {i}"))).collect();
        for _ in 0..50 {
            let mut order = cues.clone();
            order.shuffle(&mut rng);
            let mut raw = String::from("WEBVTT\n");
            for (s, text) in &order {
                raw += &format!(
                    "\n{} --> {}\n{}\n",
                    format_timestamp(*s as f64),
                    format_timestamp(*s as f64 + 1.5),
                    text
                );
            }
            let t = parse_transcript(raw.as_bytes(), "v", 30.0).unwrap();
            // oracle: sort the generating list directly
            let mut expected = order.clone();
            expected.sort_by_key(|(s, _)| *s);
            let got: Vec<(u32, String)> = t
                .cues
                .iter()
                .map(|c| (c.start_s as u32, c.text.clone()))
                .collect();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn words_per_second_examples() {
        assert_eq!(words_per_second(&transcript(30, 60.0)).unwrap(), 0.5);
        assert_eq!(words_per_second(&transcript(0, 60.0)).unwrap(), 0.0);
        let mut t = transcript(1, 10.0);
        t.duration_s = 0.0;
        assert!(matches!(
            words_per_second(&t),
            Err(TranscriptError::ZeroDuration { .. })
        ));
    }

    #[test]
    fn corpus_level_density() {
        // 302,316 transcript words over 21 video hours.
        let rate: f64 = 302_316.0 / (21.0 * 3600.0);
        assert!((rate - 4.0).abs() < 0.01, "{rate}");
    }

    #[test]
    fn density_boundary_is_kept() {
        let ts = vec![
            transcript(4, 10.0),
            transcript(5, 10.0),
            transcript(6, 10.0),
        ];
        let (kept, dropped) = filter_by_density(ts, DEFAULT_MIN_RATE).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(dropped.len(), 1);
        assert_eq!(dropped[0].word_count(), 4);
        let (k, d) = filter_by_density(vec![], 0.5).unwrap();
        assert!(k.is_empty() && d.is_empty());
    }

    #[test]
    fn density_partition_matches_recount() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let ts: Vec<Transcript> = (0..100)
            .map(|_| {
                let words = rand::Rng::random_range(&mut rng, 0..80usize);
                let dur = rand::Rng::random_range(&mut rng, 20.0..120.0f64);
                transcript(words, dur)
            })
            .collect();
        let (kept, dropped) = filter_by_density(ts.clone(), 0.5).unwrap();
        assert_eq!(kept.len() + dropped.len(), ts.len());
        for t in &ts {
            let n = t
                .cues
                .iter()
                .flat_map(|c| c.text.split(char::is_whitespace))
                .filter(|w| !w.is_empty())
                .count();
            let expect_kept = n as f64 / t.duration_s >= 0.5;
            assert_eq!(kept.contains(t), expect_kept);
            assert_eq!(dropped.contains(t), !expect_kept);
        }
        let mut all = kept.clone();
        all.extend(dropped.clone());
        let (k2, d2) = filter_by_density(all, 0.5).unwrap();
        assert_eq!((k2, d2), (kept, dropped));
    }

    fn arb_cues() -> impl Strategy<Value = Vec<(u32, u32, String)>> {
        prop::collection::vec((0u32..3_600_000, 0u32..10_000, "[a-z]{1,8}( [a-z]{1,8}){0,5}"), 1..20)
    }

    proptest! {
        #[test]
        fn serialize_round_trip(cues in arb_cues()) {
            let cues: Vec<CaptionCue> = cues
                .into_iter()
                .map(|(s, d, text)| CaptionCue {
                    start_s: s as f64 / 1000.0,
                    end_s: (s + d) as f64 / 1000.0,
                    text,
                })
                .collect();
            let t = Transcript::new("v", 4000.0, cues).unwrap();
            let back = parse_transcript(to_webvtt(&t).as_bytes(), "v", 4000.0).unwrap();
            prop_assert_eq!(back.cues.len(), t.cues.len());
            for (a, b) in t.cues.iter().zip(&back.cues) {
                prop_assert!((a.start_s - b.start_s).abs() <= 1e-3);
                prop_assert!((a.end_s - b.end_s).abs() <= 1e-3);
                prop_assert_eq!(&a.text, &b.text);
            }
        }

        #[test]
        fn rate_invariant_under_rechunking(words in prop::collection::vec("[a-z]{1,6}", 2..40), cut in 0usize..40) {
            let cut = cut % words.len();
            let one = Transcript::new("v", 30.0, vec![
                CaptionCue { start_s: 0.0, end_s: 2.0, text: words[..cut].join(" ") + " " },
                CaptionCue { start_s: 2.0, end_s: 4.0, text: words[cut..].join(" ") },
            ]).unwrap();
            let other = Transcript::new("v", 30.0, vec![
                CaptionCue { start_s: 0.0, end_s: 2.0, text: words.join(" ") },
                CaptionCue { start_s: 2.0, end_s: 4.0, text: String::new() },
            ]).unwrap();
            prop_assert_eq!(words_per_second(&one).unwrap(), words_per_second(&other).unwrap());
        }
    }
}
