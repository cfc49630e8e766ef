use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};

use evswitch::data::{self, read_episode, DataError, Purpose, Segment};
use evswitch::sim::CameraConfig;
use evswitch::teleop::*;
use evswitch::transport::{decode_frame, encode_frame, DEFAULT_MAX_PAYLOAD};
use evswitch::types::HandModel;
use evswitch::{Instruction, ObjectKind, PlateColor, SceneConfig};

const CAM: CameraConfig = CameraConfig { width: 16, height: 12 };

fn session(seed: u64) -> TeleopSession {
    let instruction = Instruction::canonical(ObjectKind::Tape, PlateColor::Yellow);
    TeleopSession::new(&SceneConfig::default(), CAM, instruction, seed).unwrap()
}

#[test]
fn commands_and_snapshots_cross_the_wire() {
    let cmds = [
        TeleopCmd::Drive { arm_delta: [0.01, -0.02, 0.0, 0.0, 0.0, 0.1] },
        TeleopCmd::Grip { synergy: 0.4 },
        TeleopCmd::Sigma { pressed: true },
        TeleopCmd::Marker { segment: Segment::Transport },
        TeleopCmd::Reset { object: ObjectKind::Paper, plate: PlateColor::Purple, seed: 9 },
        TeleopCmd::Command { text: "pick the tape and place on the yellow plate".into() },
    ];
    for (i, c) in cmds.iter().enumerate() {
        let bytes = encode_frame(&encode_cmd(i as u32, c));
        let (f, used) = decode_frame(&bytes, DEFAULT_MAX_PAYLOAD).unwrap();
        assert_eq!(used, bytes.len());
        assert_eq!(f.seq, i as u32);
        assert_eq!(&decode_cmd(&f).unwrap(), c);
        assert!(decode_snapshot(&f).is_err());
    }
    let json: serde_json::Value = serde_json::from_slice(&encode_cmd(0, &cmds[2]).payload).unwrap();
    assert_eq!(json, serde_json::json!({"type": "sigma", "pressed": true}));

    let snap = session(1).step();
    let f = encode_snapshot(7, &snap);
    let (back, _) = decode_frame(&encode_frame(&f), DEFAULT_MAX_PAYLOAD).unwrap();
    assert_eq!(decode_snapshot(&back).unwrap(), snap);
    assert!(decode_cmd(&back).is_err());
}

#[test]
fn session_applies_commands_at_the_next_tick() {
    let mut s = session(2);
    let first = s.step();
    assert_eq!(first.tick, 0);
    assert_eq!(first.mode, SessionMode::Teleop);
    assert_eq!(first.camera, [16, 12]);
    assert_eq!(base64_len(&first.cam1), 16 * 12 * 3);
    assert_eq!(first.sigma_operator, 0);
    assert_eq!(first.segment, None);

    s.apply(&TeleopCmd::Drive { arm_delta: [0.005, 0.0, 0.0, 0.0, 0.0, 0.0] }).unwrap();
    s.apply(&TeleopCmd::Drive { arm_delta: [0.005, 0.0, 0.0, 0.0, 0.0, 0.0] }).unwrap();
    s.apply(&TeleopCmd::Sigma { pressed: true }).unwrap();
    s.apply(&TeleopCmd::Marker { segment: Segment::Approach }).unwrap();
    let before = s.step();
    let after = s.step();
    assert_eq!(before.sigma_operator, 1);
    assert_eq!(before.segment, Some(Segment::Approach));
    assert!((after.arm[0] - before.arm[0] - 0.01).abs() < 1e-9, "{} -> {}", before.arm[0], after.arm[0]);
    // drives are used up, the button stays down
    let later = s.step();
    assert!((later.arm[0] - after.arm[0]).abs() < 1e-12);
    assert_eq!(later.sigma_operator, 1);

    s.apply(&TeleopCmd::Reset { object: ObjectKind::Pepper, plate: PlateColor::Purple, seed: 5 }).unwrap();
    let reset = s.step();
    assert_eq!(reset.sigma_operator, 0);
    assert_eq!(reset.segment, None);
    assert!(reset.instruction.contains("pepper"));
    assert!(s.apply(&TeleopCmd::Command { text: "dance".into() }).is_err());
}

fn base64_len(s: &str) -> usize {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.decode(s).unwrap().len()
}

#[test]
fn loop_drains_commands_and_stops() {
    let (tx, rx) = mpsc::channel();
    let stop = Arc::new(AtomicBool::new(false));
    let mut s = session(3);
    tx.send(TeleopCmd::Sigma { pressed: true }).unwrap();
    tx.send(TeleopCmd::Command { text: "fly away".into() }).unwrap();
    let mut seen = Vec::new();
    let mut errors = 0;
    let flag = stop.clone();
    run_teleop_loop(
        &mut s,
        &rx,
        &stop,
        false,
        |snap| {
            seen.push(snap);
            if seen.len() == 20 {
                flag.store(true, Ordering::SeqCst);
            }
        },
        |_| errors += 1,
    );
    assert_eq!(seen.len(), 20);
    assert_eq!(errors, 1);
    assert!(seen.iter().all(|x| x.sigma_operator == 1));
    assert!(seen.windows(2).all(|w| w[1].tick == w[0].tick + 1));

    // a closed channel ends the loop too
    drop(tx);
    let stop = Arc::new(AtomicBool::new(false));
    run_teleop_loop(&mut s, &rx, &stop, false, |_| panic!("no tick after close"), |_| {});
}

#[test]
fn language_command_runs_the_autonomous_episode() {
    let (tx, rx) = mpsc::channel();
    let stop = Arc::new(AtomicBool::new(false));
    let mut s = session(4);
    tx.send(TeleopCmd::Command { text: "pick the tape and place on the yellow plate".into() }).unwrap();
    let flag = stop.clone();
    let mut seen: Vec<TeleopSnapshot> = Vec::new();
    run_teleop_loop(
        &mut s,
        &rx,
        &stop,
        false,
        |snap| {
            if snap.mode == SessionMode::Teleop {
                flag.store(true, Ordering::SeqCst);
            }
            seen.push(snap);
        },
        |e| panic!("{e}"),
    );
    let watch: Vec<_> = seen.iter().filter(|x| x.mode == SessionMode::Watch).collect();
    assert!(watch.len() > 50);
    assert_eq!(watch[0].phase, "approach");
    assert!(watch.iter().any(|x| x.active_policy.contains("tape")));
    // control returns to the operator once the episode ends
    assert_eq!(seen.last().unwrap().mode, SessionMode::Teleop);
    assert!(seen.windows(2).all(|w| w[1].tick == w[0].tick + 1));
}

/// Records a scripted session with the button and markers a console would send.
fn record(purpose: Purpose, plan: &[(Segment, usize, bool)]) -> EpisodeUpload {
    let mut s = session(6);
    let mut steps = Vec::new();
    for &(segment, n, pressed) in plan {
        for i in 0..n {
            let tail = purpose == Purpose::Diffusion && i + data::DIFFUSION_TAIL >= n;
            s.apply(&TeleopCmd::Marker { segment }).unwrap();
            s.apply(&TeleopCmd::Sigma { pressed: pressed || tail }).unwrap();
            s.apply(&TeleopCmd::Drive { arm_delta: [0.0, 0.0, -0.001, 0.0, 0.0, 0.0] }).unwrap();
            steps.push(UploadStep::from(&s.step()));
        }
    }
    EpisodeUpload {
        purpose,
        instruction: "pick the tape and place on the yellow plate".into(),
        object: ObjectKind::Tape,
        plate: (purpose == Purpose::Vla).then_some(PlateColor::Yellow),
        operator: "console".into(),
        seed: 6,
        camera: [CAM.width, CAM.height],
        steps,
    }
}

fn vla_upload() -> EpisodeUpload {
    record(
        Purpose::Vla,
        &[(Segment::Approach, 8, false), (Segment::Grasp, 6, true), (Segment::Transport, 7, true), (Segment::Release, 5, false)],
    )
}

#[test]
fn saved_recordings_validate_and_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let hand = HandModel::default();
    let up = vla_upload();
    let saved = save_upload(dir.path(), &up, &hand).unwrap();
    assert!(saved.violations.is_empty(), "{:?}", saved.violations);
    assert_eq!(saved.id, "vla_tape_ui_000");
    let ep = read_episode(&saved.path).unwrap();
    assert_eq!(ep.steps.len(), 26);
    assert_eq!(ep.meta.marker(Segment::Grasp).map(|m| (m.start, m.end)), Some((8, 13)));
    assert_eq!(ep.steps[3].arm, up.steps[3].arm);
    let frame = data::load_frame(&saved.path, &ep.steps[25].cam2).unwrap();
    assert_eq!(frame.dimensions(), (16, 12));

    let again = save_upload(dir.path(), &up, &hand).unwrap();
    assert_eq!(again.id, "vla_tape_ui_001");

    let grasp = record(Purpose::Diffusion, &[(Segment::Grasp, 30, false)]);
    let saved = save_upload(dir.path(), &grasp, &hand).unwrap();
    assert!(saved.violations.is_empty(), "{:?}", saved.violations);

    let report = data::validate_dataset(dir.path(), &hand, data::DEFAULT_CLOSE_TICKS).unwrap();
    assert!(report.is_clean(), "{}", report.to_text());
    assert_eq!(report.episodes, 3);
}

#[test]
fn broken_recordings_are_refused_or_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let hand = HandModel::default();

    let mut up = vla_upload();
    up.steps[10].segment = None;
    assert!(matches!(save_upload(dir.path(), &up, &hand), Err(DataError::IncompleteMarkers(_))));

    let no_release = record(Purpose::Vla, &[(Segment::Approach, 5, false), (Segment::Grasp, 5, true), (Segment::Transport, 5, true)]);
    assert!(matches!(save_upload(dir.path(), &no_release, &hand), Err(DataError::IncompleteMarkers(_))));

    let mut up = vla_upload();
    up.steps[0].cam1 = "%%%".into();
    assert!(matches!(save_upload(dir.path(), &up, &hand), Err(DataError::Upload(_))));

    let mut up = vla_upload();
    up.plate = None;
    assert!(matches!(save_upload(dir.path(), &up, &hand), Err(DataError::Upload(_))));
    assert!(!dir.path().join(data::EPISODES).exists());

    // a button slip is saved but reported
    let mut up = vla_upload();
    up.steps[2].sigma_operator = 1;
    let saved = save_upload(dir.path(), &up, &hand).unwrap();
    assert_eq!(saved.violations.len(), 1, "{:?}", saved.violations);
    assert_eq!(saved.violations[0].step, Some(2));
}
