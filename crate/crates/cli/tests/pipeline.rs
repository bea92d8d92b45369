mod common;

use std::fs;

use common::{build, ok, run_pipeline, vlogvis};

fn jsonl(path: &std::path::Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn full_pipeline_runs_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let c = build(tmp.path());
    let first = run_pipeline(&c, "run1", "1");
    let d = c.path("run1");

    let videos = jsonl(&d.join("videos.jsonl"));
    let ids: Vec<&str> = videos.iter().map(|v| v["video_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["v1", "v2", "v3", "v4", "v5"], "low-density video dropped");

    let texts: Vec<String> = jsonl(&d.join("actions.jsonl"))
        .iter()
        .map(|a| a["text"].as_str().unwrap().to_string())
        .collect();
    assert!(texts.iter().any(|t| t == "actually cook it"), "{texts:?}");
    assert!(texts.iter().any(|t| t == "take it out"), "{texts:?}");

    let kept = jsonl(&d.join("kept.jsonl"));
    assert!(!kept.is_empty());
    assert!(kept.iter().all(|m| m["video_id"] != "v5"), "static video filtered");
    let all = jsonl(&d.join("miniclips.jsonl"));
    assert!(all.iter().any(|m| m["video_id"] == "v5"));

    for hit in jsonl(&d.join("hits.jsonl")) {
        let clips = hit["clips"].as_array().unwrap();
        assert_eq!(clips.len(), 5);
        assert_eq!(clips.iter().filter(|c| c["ground_truth"] == true).count(), 1);
    }

    let features = jsonl(&d.join("features.jsonl"));
    for split in ["train", "validation", "test"] {
        assert!(features.iter().any(|f| f["split"] == split), "split {split} empty");
    }
    let results = fs::read_to_string(d.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 5, "{results}");
    assert!(results.contains("Majority"));
    assert_eq!(fs::read(d.join("text.vnf")).unwrap()[..4], *b"VNF1");
    let ttest = fs::read_to_string(d.join("ttest.csv")).unwrap();
    assert!(ttest.starts_with("method_a,method_b,t_statistic,dof,p_two_tailed,infinite_t"));
    assert!(fs::read_to_string(d.join("stats.md")).unwrap().contains("Ambiguous actions"));

    // Same seed, same bytes; thread count does not matter.
    let again = run_pipeline(&c, "run2", "1");
    let parallel = run_pipeline(&c, "run3", "4");
    for ((a, b), p) in first.iter().zip(&again).zip(&parallel) {
        let bytes = fs::read(a).unwrap();
        assert_eq!(bytes, fs::read(b).unwrap(), "{} differs between runs", a.display());
        assert_eq!(bytes, fs::read(p).unwrap(), "{} differs with --jobs 4", a.display());
    }
}

#[test]
fn exit_codes_follow_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let out = root.join("out.jsonl").display().to_string();

    let missing = vlogvis(&["ingest", "--manifest", "/no/such/file", "--out", &out]);
    assert_eq!(missing.status.code(), Some(1));
    let unknown_flag = vlogvis(&["ingest", "--bogus", "x"]);
    assert_eq!(unknown_flag.status.code(), Some(1));
    let bad_value = vlogvis(&["kappa", "--matrix", &out, "--raters", "three"]);
    assert_eq!(bad_value.status.code(), Some(1));

    let bad = root.join("manifest.jsonl");
    fs::write(&bad, "{not json\n").unwrap();
    let malformed = vlogvis(&["ingest", "--manifest", bad.to_str().unwrap(), "--out", &out]);
    assert_eq!(malformed.status.code(), Some(2));

    let degenerate = root.join("degenerate.json");
    fs::write(&degenerate, "[[3,0],[3,0]]").unwrap();
    let undefined = vlogvis(&["kappa", "--matrix", degenerate.to_str().unwrap(), "--json-errors"]);
    assert_eq!(undefined.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&undefined.stderr).unwrap();
    assert_eq!(err["error"], "runtime");
    assert_eq!(err["exit_code"], 3);
    assert!(err["message"].as_str().unwrap().contains("kappa"));

    let json = vlogvis(&["ingest", "--manifest", bad.to_str().unwrap(), "--out", &out, "--json-errors"]);
    let err: serde_json::Value = serde_json::from_slice(&json.stderr).unwrap();
    assert_eq!(err["error"], "input_format");
    assert_eq!(err["exit_code"], 2);
    assert!(!root.join("out.jsonl").exists(), "no partial output on failure");
}

#[test]
fn kappa_prints_one_for_perfect_agreement() {
    let tmp = tempfile::tempdir().unwrap();
    let m = tmp.path().join("m.json");
    fs::write(&m, "[[3,0],[0,3],[3,0],[0,3]]").unwrap();
    let out = ok(&["kappa", "--matrix", m.to_str().unwrap()]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "1.0");
}

#[test]
fn config_file_supplies_settings_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let m = tmp.path().join("m.json");
    fs::write(&m, "[[2,0],[0,2],[1,1]]").unwrap();
    let cfg = tmp.path().join("settings.conf");
    fs::write(&cfg, format!("matrix = {}\nraters = 2\n", m.display())).unwrap();
    let from_file = ok(&["kappa", "--config", cfg.to_str().unwrap()]);
    let explicit = ok(&["kappa", "--matrix", m.to_str().unwrap(), "--raters", "2"]);
    assert_eq!(from_file.stdout, explicit.stdout);
    let wrong = vlogvis(&["kappa", "--config", cfg.to_str().unwrap(), "--raters", "3"]);
    assert_eq!(wrong.status.code(), Some(2), "flag overrides file value");
}
