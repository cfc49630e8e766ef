use serde::{Deserialize, Serialize};

use super::{DataError, RawEpisode, Segment, Step};
use crate::types::{HandModel, HAND_JOINTS};

/// Raised-signal steps at the end of every grasp demonstration.
pub const DIFFUSION_TAIL: usize = 10;

pub const STATE_DIM: usize = 6 + HAND_JOINTS;
pub const DEFAULT_CLOSE_TICKS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub episode: String,
    /// Recorded tick this sample comes from; `None` for inserted steps.
    pub source_tick: Option<u64>,
    /// Arm pose then hand joints.
    pub proprio: [f64; STATE_DIM],
    /// Change of `proprio` to the next step.
    pub action: [f64; STATE_DIM],
    pub sigma_label: f64,
    /// Frame paths, relative to the episode directory.
    pub frames: [String; 2],
}

fn state(arm: &[f64; 6], hand: &[f64; HAND_JOINTS]) -> [f64; STATE_DIM] {
    let mut s = [0.0; STATE_DIM];
    s[..6].copy_from_slice(arm);
    s[6..].copy_from_slice(hand);
    s
}

fn delta(a: &[f64; STATE_DIM], b: &[f64; STATE_DIM]) -> [f64; STATE_DIM] {
    std::array::from_fn(|i| b[i] - a[i])
}

fn recorded(ep: &RawEpisode, i: usize, sigma_label: f64) -> TrainingSample {
    let step = &ep.steps[i];
    let now = state(&step.arm, &step.hand);
    let action = match ep.steps.get(i + 1) {
        Some(next) => delta(&now, &state(&next.arm, &next.hand)),
        None => [0.0; STATE_DIM],
    };
    TrainingSample {
        episode: ep.meta.id.clone(),
        source_tick: Some(step.tick),
        proprio: now,
        action,
        sigma_label,
        frames: [step.cam1.clone(), step.cam2.clone()],
    }
}

fn range(ep: &RawEpisode, segment: Segment) -> Result<std::ops::Range<usize>, DataError> {
    let m = ep.meta.marker(segment).ok_or(DataError::MissingMarkers(segment))?;
    let end = (m.end as usize + 1).min(ep.steps.len());
    Ok((m.start as usize).min(end)..end)
}

/// Approach/transport/release training set. Grasp steps are dropped and
/// replaced by `close_ticks` inserted steps closing the hand in place.
pub fn segment_for_vla(ep: &RawEpisode, hand: &HandModel, close_ticks: usize) -> Result<Vec<TrainingSample>, DataError> {
    let approach = range(ep, Segment::Approach)?;
    range(ep, Segment::Grasp)?;
    let transport = range(ep, Segment::Transport)?;
    let release = range(ep, Segment::Release)?;

    let mut out: Vec<TrainingSample> = approach.clone().map(|i| recorded(ep, i, 0.0)).collect();

    let last: &Step = ep.steps.get(approach.end.saturating_sub(1)).ok_or(DataError::MissingMarkers(Segment::Approach))?;
    for k in 0..close_ticks {
        let now = state(&last.arm, &hand.posture(k as f64 / close_ticks as f64));
        let next = state(&last.arm, &hand.posture((k + 1) as f64 / close_ticks as f64));
        out.push(TrainingSample {
            episode: ep.meta.id.clone(),
            source_tick: None,
            proprio: now,
            action: delta(&now, &next),
            sigma_label: 1.0,
            frames: [last.cam1.clone(), last.cam2.clone()],
        });
    }

    out.extend(transport.map(|i| recorded(ep, i, 1.0)));
    let n = release.len();
    out.extend(release.enumerate().map(|(j, i)| recorded(ep, i, release_label(j, n))));
    Ok(out)
}

/// Signal label for the `j`-th of `n` release steps: falls linearly to 0.
pub fn release_label(j: usize, n: usize) -> f64 {
    1.0 - (j + 1) as f64 / n as f64
}

/// Grasp-only training set: signal 0 except on the final ten steps.
pub fn segment_for_diffusion(ep: &RawEpisode) -> Result<Vec<TrainingSample>, DataError> {
    let grasp = range(ep, Segment::Grasp)?;
    let n = grasp.len();
    if n < DIFFUSION_TAIL {
        return Err(DataError::SegmentTooShort { len: n, min: DIFFUSION_TAIL });
    }
    Ok(grasp.enumerate().map(|(j, i)| recorded(ep, i, tail_label(j, n))).collect())
}

pub fn tail_label(j: usize, n: usize) -> f64 {
    if j + DIFFUSION_TAIL >= n {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DemoMeta, Marker, Purpose};
    use crate::types::ObjectKind;

    fn episode(segments: &[(Segment, u64, u64)]) -> RawEpisode {
        let last = segments.last().map(|s| s.2).unwrap_or(0);
        let steps = (0..=last)
            .map(|t| Step {
                tick: t,
                arm: [t as f64 * 0.01, 0.0, 0.1, 0.0, 0.0, 0.0],
                hand: [0.0; HAND_JOINTS],
                sigma_operator: 0,
                cam1: format!("c1_{t}"),
                cam2: format!("c2_{t}"),
            })
            .collect();
        RawEpisode {
            meta: DemoMeta {
                id: "ep".into(),
                purpose: Purpose::Vla,
                instruction: "pick up the tape".into(),
                object: ObjectKind::Tape,
                plate: None,
                seed: 0,
                operator: "test".into(),
                camera: [4, 3],
                markers: segments.iter().map(|&(segment, start, end)| Marker { segment, start, end }).collect(),
            },
            steps,
        }
    }

    #[test]
    fn vla_drops_grasp_ticks() {
        let ep = episode(&[
            (Segment::Approach, 0, 99),
            (Segment::Grasp, 100, 180),
            (Segment::Transport, 181, 220),
            (Segment::Release, 221, 230),
        ]);
        let s = segment_for_vla(&ep, &HandModel::default(), 5).unwrap();
        assert!(s.iter().filter_map(|x| x.source_tick).all(|t| !(100..=180).contains(&t)));
        let synthetic: Vec<_> = s.iter().filter(|x| x.source_tick.is_none()).collect();
        assert_eq!(synthetic.len(), 5);
        assert!(synthetic.iter().all(|x| x.sigma_label == 1.0 && x.action[..6] == [0.0; 6]));
        assert!(s.iter().filter(|x| (181..=220).contains(&x.source_tick.unwrap_or(0))).all(|x| x.sigma_label == 1.0));
        assert_eq!(s.last().unwrap().sigma_label, 0.0);
        assert_eq!(s.len(), 100 + 5 + 40 + 10);
    }

    #[test]
    fn vla_needs_markers() {
        let ep = episode(&[(Segment::Approach, 0, 9), (Segment::Transport, 10, 20), (Segment::Release, 21, 25)]);
        assert!(matches!(segment_for_vla(&ep, &HandModel::default(), 5), Err(DataError::MissingMarkers(Segment::Grasp))));
    }

    #[test]
    fn diffusion_tail() {
        let s = segment_for_diffusion(&episode(&[(Segment::Grasp, 0, 89)])).unwrap();
        assert_eq!(s.iter().filter(|x| x.sigma_label == 0.0).count(), 80);
        assert!(s[80..].iter().all(|x| x.sigma_label == 1.0));
        let s = segment_for_diffusion(&episode(&[(Segment::Grasp, 0, 9)])).unwrap();
        assert!(s.iter().all(|x| x.sigma_label == 1.0));
        assert!(matches!(
            segment_for_diffusion(&episode(&[(Segment::Grasp, 0, 8)])),
            Err(DataError::SegmentTooShort { len: 9, .. })
        ));
    }
}
