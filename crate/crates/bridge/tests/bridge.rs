use std::time::Duration;

use futures::{SinkExt, StreamExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

use evswitch::data::{self, read_episode, segment_for_diffusion, segment_for_vla, Purpose, Segment};
use evswitch::sim::CameraConfig;
use evswitch::teleop::{decode_snapshot, encode_cmd, EpisodeUpload, TeleopCmd, TeleopSnapshot, UploadStep};
use evswitch::transport::payload::decode_error;
use evswitch::transport::{decode_frame, encode_frame, FrameType, DEFAULT_MAX_PAYLOAD};
use evswitch::types::HandModel;
use evswitch::{Instruction, ObjectKind, PlateColor, SceneConfig};
use evswitch_bridge::{Bridge, BridgeConfig};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

const HZ: f64 = 50.0;

async fn start(dataset: &std::path::Path) -> (Bridge, String) {
    let scene = SceneConfig { tick_hz: HZ, ..SceneConfig::default() };
    let bridge = Bridge::start(BridgeConfig {
        scene,
        camera: CameraConfig { width: 16, height: 12 },
        instruction: Instruction::canonical(ObjectKind::Tape, PlateColor::Yellow),
        seed: 1,
        dataset: dataset.to_path_buf(),
        realtime: true,
    })
    .unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let app = bridge.router();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (bridge, addr)
}

async fn connect(addr: &str) -> Ws {
    tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap().0
}

enum In {
    Snap(u32, Box<TeleopSnapshot>),
    Error(String, String),
}

async fn next(ws: &mut Ws) -> In {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next()).await.expect("bridge went quiet").unwrap().unwrap();
        if let Message::Binary(b) = msg {
            let (f, _) = decode_frame(&b, DEFAULT_MAX_PAYLOAD).unwrap();
            return match f.kind {
                FrameType::Snapshot => In::Snap(f.seq, Box::new(decode_snapshot(&f).unwrap())),
                FrameType::Error => {
                    let (code, message) = decode_error(&f.payload).unwrap();
                    In::Error(code, message)
                }
                k => panic!("unexpected frame {k:?}"),
            };
        }
    }
}

async fn next_snapshot(ws: &mut Ws) -> TeleopSnapshot {
    loop {
        if let In::Snap(_, s) = next(ws).await {
            return *s;
        }
    }
}

async fn send(ws: &mut Ws, cmd: &TeleopCmd) {
    ws.send(Message::Binary(encode_frame(&encode_cmd(0, cmd)).into())).await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn console_sees_snapshots_and_steers() {
    let dir = tempfile::tempdir().unwrap();
    let (bridge, addr) = start(dir.path()).await;
    let mut ws = connect(&addr).await;

    let (mut seqs, mut ticks) = (Vec::new(), Vec::new());
    while seqs.len() < 5 {
        if let In::Snap(seq, s) = next(&mut ws).await {
            seqs.push(seq);
            ticks.push(s.tick);
        }
    }
    assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1), "{seqs:?}");
    assert!(ticks.windows(2).all(|w| w[1] == w[0] + 1), "{ticks:?}");
    assert_eq!(bridge.status().clients, 1);

    send(&mut ws, &TeleopCmd::Sigma { pressed: true }).await;
    let mut waited = 0;
    while next_snapshot(&mut ws).await.sigma_operator != 1 {
        waited += 1;
        assert!(waited < 10, "button never showed up");
    }

    ws.send(Message::Binary(b"HPS1 nonsense".to_vec().into())).await.unwrap();
    let (code, msg) = loop {
        if let In::Error(code, msg) = next(&mut ws).await {
            break (code, msg);
        }
    };
    assert_eq!(code, "frame");
    assert!(!msg.is_empty());
    assert_eq!(bridge.status().rejected_frames, 1);

    send(&mut ws, &TeleopCmd::Command { text: "juggle".into() }).await;
    let (code, msg) = loop {
        if let In::Error(code, msg) = next(&mut ws).await {
            break (code, msg);
        }
    };
    assert_eq!(code, "command");
    assert!(!msg.is_empty());

    ws.close(None).await.unwrap();
    for _ in 0..50 {
        if bridge.status().clients == 0 {
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert_eq!(bridge.status().clients, 0);
}

/// Records `n` ticks of one segment, pressing the button as the pick-and-place
/// convention asks.
async fn record_segment(ws: &mut Ws, segment: Segment, n: usize, steps: &mut Vec<UploadStep>) {
    let pressed = matches!(segment, Segment::Grasp | Segment::Transport);
    send(ws, &TeleopCmd::Marker { segment }).await;
    send(ws, &TeleopCmd::Sigma { pressed }).await;
    let mut got = 0;
    while got < n {
        send(ws, &TeleopCmd::Drive { arm_delta: [0.0, -0.002, 0.0, 0.0, 0.0, 0.0] }).await;
        let s = next_snapshot(ws).await;
        if s.segment == Some(segment) && s.sigma_operator == pressed as u8 {
            steps.push(UploadStep::from(&s));
            got += 1;
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn recorded_episode_saves_validates_and_segments() {
    let dir = tempfile::tempdir().unwrap();
    let (_bridge, addr) = start(dir.path()).await;
    let mut ws = connect(&addr).await;

    let mut steps = Vec::new();
    for (segment, n) in [(Segment::Approach, 12), (Segment::Grasp, 12), (Segment::Transport, 10), (Segment::Release, 6)] {
        record_segment(&mut ws, segment, n, &mut steps).await;
    }
    let upload = EpisodeUpload {
        purpose: Purpose::Vla,
        instruction: "pick the tape and place on the yellow plate".into(),
        object: ObjectKind::Tape,
        plate: Some(PlateColor::Yellow),
        operator: "scripted".into(),
        seed: 1,
        camera: [16, 12],
        steps,
    };
    let http = reqwest::Client::new();
    let url = format!("http://{addr}/episodes");
    let resp = http.post(&url).json(&upload).send().await.unwrap();
    assert_eq!(resp.status(), 201);
    let body: serde_json::Value = resp.json().await.unwrap();
    assert_eq!(body["violations"], serde_json::json!([]));
    let id = body["id"].as_str().unwrap().to_string();

    let hand = HandModel::default();
    let report = data::validate_dataset(dir.path(), &hand, data::DEFAULT_CLOSE_TICKS).unwrap();
    assert!(report.is_clean(), "{}", report.to_text());
    let ep = read_episode(&dir.path().join(data::EPISODES).join(&id)).unwrap();
    assert_eq!(ep.steps.len(), 40);
    assert_eq!(segment_for_vla(&ep, &hand, data::DEFAULT_CLOSE_TICKS).unwrap().len(), 12 + 5 + 10 + 6);
    assert_eq!(segment_for_diffusion(&ep).unwrap().len(), 12);

    let mut broken = upload.clone();
    broken.steps.retain(|s| s.segment != Some(Segment::Grasp));
    let resp = http.post(&url).json(&broken).send().await.unwrap();
    assert_eq!(resp.status(), 422);
    let body: serde_json::Value = resp.json().await.unwrap();
    assert!(body["error"].as_str().unwrap().contains("grasp"), "{body}");
}

#[tokio::test(flavor = "multi_thread")]
async fn attached_console_leaves_the_cadence_alone() {
    let dir = tempfile::tempdir().unwrap();
    let (bridge, addr) = start(dir.path()).await;
    let period_ms = 1e3 / HZ;

    tokio::time::sleep(Duration::from_millis(1200)).await;
    let detached = bridge.status();
    assert_eq!(detached.clients, 0);

    let mut ws = connect(&addr).await;
    let reader = tokio::spawn(async move {
        for _ in 0..70 {
            next_snapshot(&mut ws).await;
        }
        ws
    });
    let ws = reader.await.unwrap();
    let attached = bridge.status();
    assert_eq!(attached.clients, 1);
    drop(ws);

    for s in [&detached, &attached] {
        assert!((s.mean_period_ms - period_ms).abs() / period_ms < 0.05, "{s:?}");
    }
    let change = (attached.mean_period_ms - detached.mean_period_ms).abs() / detached.mean_period_ms;
    assert!(change < 0.05, "detached {detached:?} attached {attached:?}");
}
