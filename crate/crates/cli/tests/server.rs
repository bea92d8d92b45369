use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use vlogvis_core::annotation::service::{AnnotationService, ClipFrames};
use vlogvis_core::annotation::{BinaryLabel, Hit, HitClip, LabelEntry, RawLabel, SpamVerdict};
use vlogvis_core::segmentation::{frame_file_name, Frame};
use vlogvis_cli::server::{router, SubmitBody};

const GT: [BinaryLabel; 5] = [
    BinaryLabel::Visible,
    BinaryLabel::NotVisibleOrNotAction,
    BinaryLabel::Visible,
    BinaryLabel::Visible,
    BinaryLabel::NotVisibleOrNotAction,
];

fn service(frames_dir: &Path) -> AnnotationService {
    for i in 0..=5 {
        let f = Frame::new(2, 2, vec![i as u8; 4]).unwrap();
        let mut bytes = Vec::new();
        f.write_pgm(&mut bytes).unwrap();
        std::fs::write(frames_dir.join(frame_file_name(i)), bytes).unwrap();
    }
    let hit = Hit {
        hit_id: "h1".into(),
        clips: vec![
            HitClip {
                miniclip_id: "c1".into(),
                action_ids: vec!["a1".into(), "a2".into()],
                ground_truth: false,
            },
            HitClip {
                miniclip_id: "g".into(),
                action_ids: (0..5).map(|i| format!("g{i}")).collect(),
                ground_truth: true,
            },
        ],
    };
    let gt: HashMap<String, BinaryLabel> = GT.iter().enumerate().map(|(i, l)| (format!("g{i}"), *l)).collect();
    let text: HashMap<String, String> = ["a1", "a2", "g0", "g1", "g2", "g3", "g4"]
        .iter()
        .map(|a| (a.to_string(), format!("text of {a}")))
        .collect();
    let frames = HashMap::from([(
        "c1".to_string(),
        ClipFrames { frames_dir: frames_dir.to_path_buf(), fps: 1.0, start_s: 0.0, end_s: 5.0 },
    )]);
    AnnotationService::new(vec![hit], gt, text, frames)
}

fn honest(worker: &str) -> SubmitBody {
    let mut labels = vec![
        LabelEntry { miniclip_id: "c1".into(), action_id: "a1".into(), raw_label: RawLabel::Visible },
        LabelEntry { miniclip_id: "c1".into(), action_id: "a2".into(), raw_label: RawLabel::NotAnAction },
    ];
    for (i, l) in GT.iter().enumerate() {
        let raw = match l {
            BinaryLabel::Visible => RawLabel::Visible,
            BinaryLabel::NotVisibleOrNotAction => RawLabel::NotVisible,
        };
        labels.push(LabelEntry { miniclip_id: "g".into(), action_id: format!("g{i}"), raw_label: raw });
    }
    SubmitBody { worker_id: worker.into(), labels }
}

async fn call(app: &axum::Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post(uri: &str, body: &SubmitBody) -> Request<Body> {
    Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(serde_json::to_vec(body).unwrap()))
        .unwrap()
}

fn json_of(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

#[tokio::test]
async fn annotation_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(Arc::new(service(dir.path())));

    let (status, body) = call(&app, get("/api/hits/next?worker_id=w1")).await;
    assert_eq!(status, StatusCode::OK);
    let view = json_of(&body);
    assert_eq!(view["hit_id"], "h1");
    let clips = view["miniclips"].as_array().unwrap();
    assert_eq!(clips.len(), 2);
    assert!(!body.windows(12).any(|w| w == b"ground_truth"), "ground truth hidden");
    let c1 = clips.iter().find(|c| c["miniclip_id"] == "c1").unwrap();
    assert_eq!(c1["frame_urls"].as_array().unwrap().len(), 6);
    assert_eq!(c1["actions"][0]["text"], "text of a1");

    let accept = serde_json::to_value(SpamVerdict::Accept).unwrap();
    let (status, body) = call(&app, post("/api/hits/h1/labels", &honest("w1"))).await;
    assert_eq!(status, StatusCode::OK);
    let outcome = json_of(&body);
    assert_eq!(outcome["verdict"], accept);
    assert_eq!(outcome["accepted_for_hit"], 1);

    let (status, body) = call(&app, post("/api/hits/h1/labels", &honest("w1"))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(json_of(&body)["error"].is_string());

    let mut uniform = honest("w2");
    uniform.labels.iter_mut().for_each(|l| l.raw_label = RawLabel::Visible);
    let (status, body) = call(&app, post("/api/hits/h1/labels", &uniform)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json_of(&body)["verdict"], serde_json::to_value(SpamVerdict::RejectUniform).unwrap());

    let mut partial = honest("w3");
    partial.labels.pop();
    let (status, _) = call(&app, post("/api/hits/h1/labels", &partial)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, _) = call(&app, post("/api/hits/nope/labels", &honest("w4"))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, body) = call(&app, get("/api/progress")).await;
    assert_eq!(status, StatusCode::OK);
    let p = json_of(&body);
    assert_eq!(p["hits_total"], 1);
    assert_eq!(p["submissions_accepted"], 1);
    assert_eq!(p["submissions_rejected"], 1);

    let (status, body) = call(&app, get("/api/agreement")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json_of(&body), json!({"kappa": null, "items": 0}));

    for w in ["w5", "w6"] {
        let (status, _) = call(&app, post("/api/hits/h1/labels", &honest(w))).await;
        assert_eq!(status, StatusCode::OK);
    }
    let (status, _) = call(&app, post("/api/hits/h1/labels", &honest("w7"))).await;
    assert_eq!(status, StatusCode::CONFLICT, "hit already has three accepted workers");
    let (status, _) = call(&app, get("/api/hits/next?worker_id=w8")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (_, body) = call(&app, get("/api/agreement")).await;
    assert_eq!(json_of(&body), json!({"kappa": 1.0, "items": 2}));
}

#[tokio::test]
async fn frames_are_served_as_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(Arc::new(service(dir.path())));
    let resp = app.clone().oneshot(get("/frames/c1/3.pgm")).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "image/x-portable-graymap");
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let frame = Frame::read_pgm(&bytes[..]).unwrap();
    assert_eq!(frame, Frame::new(2, 2, vec![3; 4]).unwrap());

    for uri in ["/frames/c1/99.pgm", "/frames/c1/3.png", "/frames/unknown/0.pgm"] {
        let (status, _) = call(&app, get(uri)).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
    }
}
