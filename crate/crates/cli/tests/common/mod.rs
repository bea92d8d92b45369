//! A small synthetic corpus on disk plus helpers for driving the binary.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vlogvis_core::annotation::{AnnotationRecord, BinaryLabel, GroundTruthClip, Hit, RawLabel};
use vlogvis_core::features::FeatureRows;
use vlogvis_core::segmentation::{frame_file_name, Frame};

pub const SENTENCES: &[&str] = &[
    "you're gonna actually cook it.",
    "you're going to take it out.",
    "i wash the dishes.",
    "we chop the onions.",
    "i really love this show.",
    "you put the pan in the oven.",
    "i think about my friends.",
    "we clean the kitchen.",
    "i drink some water.",
    "you fold the laundry.",
    "i feel so tired today.",
    "we stir the soup slowly.",
];

const VISIBLE_VERBS: &[&str] = &["cook", "take", "wash", "chop", "put", "clean", "drink", "fold", "stir"];

/// `(video_id, channel, moving frames)`.
pub const VIDEOS: &[(&str, &str, bool)] = &[
    ("v1", "chA", true),
    ("v2", "chB", true),
    ("v3", "chC", true),
    ("v4", "chD", true),
    ("v5", "chD", false),
];
pub const DURATION_S: f64 = 130.0;
const CUES: usize = 24;

pub struct Corpus {
    pub root: PathBuf,
}

impl Corpus {
    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

fn vtt(offset: usize, cues: usize) -> String {
    let mut s = String::from("WEBVTT\n\n");
    for i in 0..cues {
        let start = 5.0 * i as f64;
        s.push_str(&format!(
            "{} --> {}\n{}\n\n",
            stamp(start),
            stamp(start + 2.5),
            SENTENCES[(i + offset) % SENTENCES.len()]
        ));
    }
    s
}

fn stamp(t: f64) -> String {
    let ms = (t * 1000.0).round() as u64;
    format!("{:02}:{:02}:{:02}.{:03}", ms / 3_600_000, ms / 60_000 % 60, ms / 1000 % 60, ms % 1000)
}

fn write_frames(dir: &Path, moving: bool, seed: u64) {
    fs::create_dir_all(dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<u8> = (0..64).map(|_| rng.random()).collect();
    for i in 0..=DURATION_S as usize {
        let pixels: Vec<u8> = if moving {
            (0..64).map(|_| rng.random()).collect()
        } else {
            base.iter().map(|&p| p.saturating_add(rng.random_range(0..3))).collect()
        };
        let f = Frame::new(8, 8, pixels).unwrap();
        let mut bytes = Vec::new();
        f.write_pgm(&mut bytes).unwrap();
        fs::write(dir.join(frame_file_name(i)), bytes).unwrap();
    }
}

fn embedding(word: &str) -> Vec<f64> {
    let h = vlogvis_core::seed::fnv1a(word.as_bytes());
    let mut v: Vec<f64> = (0..4).map(|k| ((h >> (k * 8)) & 0xff) as f64 / 255.0 - 0.5).collect();
    v.push(if VISIBLE_VERBS.contains(&word) { 1.0 } else { 0.0 });
    v
}

/// The label the simulated annotators converge on.
pub fn truth(text: &str) -> bool {
    text.split_whitespace().any(|w| VISIBLE_VERBS.contains(&w))
}

/// Writes manifest, transcripts, frames, embeddings, lexicons, ground truth
/// and video features under `root`.
pub fn build(root: &Path) -> Corpus {
    fs::create_dir_all(root.join("transcripts")).unwrap();
    let mut manifest = String::new();
    for (n, &(vid, ch, moving)) in VIDEOS.iter().enumerate() {
        fs::write(root.join(format!("transcripts/{vid}.vtt")), vtt(n, CUES)).unwrap();
        write_frames(&root.join(format!("frames/{vid}")), moving, n as u64);
        manifest.push_str(&format!(
            "{{\"video_id\":\"{vid}\",\"channel\":\"{ch}\",\"duration_s\":{DURATION_S},\"transcript_path\":\"transcripts/{vid}.vtt\",\"frames_dir\":\"frames/{vid}\",\"fps\":1}}\n"
        ));
    }
    // Too little speech: dropped at ingest.
    fs::write(root.join("transcripts/quiet.vtt"), vtt(0, 2)).unwrap();
    manifest.push_str("{\"video_id\":\"quiet\",\"channel\":\"chA\",\"duration_s\":130,\"transcript_path\":\"transcripts/quiet.vtt\",\"frames_dir\":\"frames/quiet\"}\n");
    fs::write(root.join("manifest.jsonl"), manifest).unwrap();

    let mut words: Vec<String> = SENTENCES
        .iter()
        .flat_map(|s| vlogvis_core::extraction::tokenize(s))
        .map(|w| w.to_lowercase())
        .collect();
    words.sort();
    words.dedup();
    let table: String = words
        .iter()
        .filter(|w| w.chars().any(char::is_alphanumeric))
        .map(|w| {
            let v: Vec<String> = embedding(w).iter().map(|x| format!("{x:.6}")).collect();
            format!("{w} {}\n", v.join(" "))
        })
        .collect();
    fs::write(root.join("embeddings.txt"), table).unwrap();
    let tags = ["VB", "VBP", "NN", "NNS", "PRP", "RB", "DT", "IN", "RP", "JJ", "TO", "VBG", "MD", "."];
    let pos_table: String = tags
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{t} {} {}\n", i as f64 / 10.0, 1.0 - i as f64 / 10.0))
        .collect();
    fs::write(root.join("pos_embeddings.txt"), pos_table).unwrap();
    fs::write(
        root.join("concreteness.tsv"),
        "Word\tConc.M\ncook\t4.17\ntake\t3.5\nwash\t4.3\nchop\t4.4\nonion\t4.9\npan\t4.9\noven\t4.9\nthink\t1.6\nfeel\t1.9\nlove\t2.1\nshow\t3.2\nkitchen\t4.97\nwater\t5.0\nlaundry\t4.6\nsoup\t4.9\ndish\t4.8\nfriend\t4.0\n",
    )
    .unwrap();

    let gt = GroundTruthClip {
        miniclip_id: "gt_m000".into(),
        labels: (0..5)
            .map(|i| {
                let label = if i % 2 == 0 { BinaryLabel::Visible } else { BinaryLabel::NotVisibleOrNotAction };
                (format!("gt_a{i:04}"), i as f64 * 3.0, label)
            })
            .collect(),
    };
    fs::write(root.join("ground_truth.jsonl"), serde_json::to_string(&gt).unwrap() + "\n").unwrap();

    fs::create_dir_all(root.join("vfb")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for &(vid, _, _) in VIDEOS {
        for m in 0..10 {
            let rows = 3;
            let mut row = || (0..2).map(|_| rng.random_range(-1.0f32..1.0)).collect::<Vec<f32>>();
            let frame: Vec<Vec<f32>> = (0..rows).map(|_| row()).collect();
            let sequence: Vec<Vec<f32>> = (0..rows).map(|_| row()).collect();
            let fr = FeatureRows::new(2, 2, frame, sequence).unwrap();
            fs::write(root.join(format!("vfb/{vid}_m{m:03}.vfb")), fr.to_bytes()).unwrap();
        }
    }
    Corpus { root: root.to_path_buf() }
}

/// Three workers per HIT; the third disagrees on every fourth action.
pub fn simulate_annotations(hits_path: &Path, actions_path: &Path, out: &Path) {
    let text: BTreeMap<String, String> = fs::read_to_string(actions_path)
        .unwrap()
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["action_id"].as_str().unwrap().to_string(), v["text"].as_str().unwrap().to_string())
        })
        .collect();
    let mut records = Vec::new();
    for line in fs::read_to_string(hits_path).unwrap().lines() {
        let hit: Hit = serde_json::from_str(line).unwrap();
        for w in 0..3 {
            for (k, clip) in hit.clips.iter().filter(|c| !c.ground_truth).enumerate() {
                for (j, a) in clip.action_ids.iter().enumerate() {
                    let mut visible = truth(&text[a]);
                    if w == 2 && (j + k) % 4 == 0 {
                        visible = !visible;
                    }
                    records.push(AnnotationRecord {
                        worker_id: format!("{}_w{w}", hit.hit_id),
                        hit_id: hit.hit_id.clone(),
                        miniclip_id: clip.miniclip_id.clone(),
                        action_id: a.clone(),
                        raw_label: if visible { RawLabel::Visible } else { RawLabel::NotVisible },
                        submitted_at: 1_700_000_000,
                    });
                }
            }
        }
    }
    let body: String = records.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    fs::write(out, body).unwrap();
}

pub fn vlogvis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vlogvis"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn ok(args: &[&str]) -> Output {
    let out = vlogvis(args);
    assert!(
        out.status.success(),
        "vlogvis {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Runs every subcommand except `serve`, writing into `corpus/<dir>`.
/// Returns the artifact paths in stage order.
pub fn run_pipeline(c: &Corpus, dir: &str, jobs: &str) -> Vec<PathBuf> {
    let d = c.path(dir);
    fs::create_dir_all(&d).unwrap();
    let p = |n: &str| d.join(n).display().to_string();
    let seed = ["--seed", "7", "--jobs", jobs];
    let run = |sub: &str, args: &[&str]| {
        let mut all = vec![sub];
        all.extend_from_slice(args);
        all.extend_from_slice(&seed);
        ok(&all);
    };
    run("ingest", &["--manifest", &c.arg("manifest.jsonl"), "--out", &p("videos.jsonl")]);
    run("extract", &["--videos", &p("videos.jsonl"), "--out", &p("actions.jsonl")]);
    run("segment", &["--videos", &p("videos.jsonl"), "--actions", &p("actions.jsonl"), "--out", &p("miniclips.jsonl")]);
    run(
        "motion-filter",
        &["--videos", &p("videos.jsonl"), "--miniclips", &p("miniclips.jsonl"), "--out", &p("kept.jsonl"),
          "--stride", "10", "--scores-out", &p("motion.jsonl")],
    );
    run(
        "hits",
        &["--miniclips", &p("kept.jsonl"), "--actions", &p("actions.jsonl"),
          "--ground-truth", &c.arg("ground_truth.jsonl"), "--out", &p("hits.jsonl")],
    );
    simulate_annotations(&d.join("hits.jsonl"), &d.join("actions.jsonl"), &d.join("records.jsonl"));
    run("aggregate", &["--records", &p("records.jsonl"), "--out", &p("labels.jsonl")]);
    run("kappa", &["--records", &p("records.jsonl"), "--out", &p("kappa.json")]);
    run(
        "features",
        &["--videos", &p("videos.jsonl"), "--actions", &p("actions.jsonl"), "--miniclips", &p("kept.jsonl"),
          "--labels", &p("labels.jsonl"), "--embeddings", &c.arg("embeddings.txt"),
          "--pos-embeddings", &c.arg("pos_embeddings.txt"), "--concreteness", &c.arg("concreteness.tsv"),
          "--train-channels", "2", "--validation-channels", "1",
          "--out", &p("features.jsonl"), "--matrix-out", &p("matrix.jsonl"), "--inputs", "action,pos"],
    );
    run(
        "train",
        &["--model", "concreteness", "--features", &p("features.jsonl"), "--out", &p("concreteness.json"),
          "--eval-out", &p("concreteness_eval.csv")],
    );
    run(
        "train",
        &["--model", "linear", "--inputs", "action,pos,concreteness", "--features", &p("features.jsonl"),
          "--out", &p("linear.json"), "--folds", "3"],
    );
    run(
        "train",
        &["--model", "text", "--features", &p("features.jsonl"), "--embeddings", &c.arg("embeddings.txt"),
          "--epochs", "3", "--hidden-dim", "4", "--fc-sizes", "4", "--out", &p("text.vnf"), "--log", &p("text_log.csv")],
    );
    run(
        "train",
        &["--model", "multimodal", "--extras", "pos,context_s,concreteness", "--features", &p("features.jsonl"),
          "--video-features", &c.arg("vfb"), "--epochs", "2,3", "--hidden-dim", "3", "--fc-sizes", "4,3",
          "--out", &p("multimodal.vnf"), "--log", &p("multimodal_log.csv"), "--eval-out", &p("multimodal_eval.csv")],
    );
    let models = [p("concreteness.json"), p("linear.json"), p("text.vnf"), p("multimodal.vnf")].join(",");
    run(
        "evaluate",
        &["--features", &p("features.jsonl"), "--models", &models, "--video-features", &c.arg("vfb"),
          "--out", &p("results.csv"), "--markdown", &p("results.md"), "--ttest-out", &p("ttest.csv"),
          "--predictions-out", &p("predictions.jsonl")],
    );
    run("stats", &["--videos", &p("videos.jsonl"), "--features", &p("features.jsonl"), "--out", &p("stats.md")]);
    run("stats", &["--videos", &p("videos.jsonl"), "--features", &p("features.jsonl"), "--out", &p("stats.csv")]);
    [
        "videos.jsonl", "actions.jsonl", "miniclips.jsonl", "kept.jsonl", "motion.jsonl", "hits.jsonl",
        "labels.jsonl", "kappa.json", "features.jsonl", "matrix.jsonl", "concreteness.json",
        "concreteness_eval.csv", "linear.json", "text.vnf", "text_log.csv", "multimodal.vnf",
        "multimodal_log.csv", "multimodal_eval.csv", "results.csv", "results.md", "ttest.csv",
        "predictions.jsonl", "stats.md", "stats.csv",
    ]
    .iter()
    .map(|n| d.join(n))
    .collect()
}
