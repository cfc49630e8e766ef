use serde::{Deserialize, Serialize};

/// Counts closing motions from the index-finger MCP angle: an attempt is an
/// upward crossing of `angle`, re-armed once the joint falls below
/// `angle - hysteresis`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttemptCounter {
    pub angle: f64,
    pub hysteresis: f64,
}

impl Default for AttemptCounter {
    fn default() -> Self {
        Self { angle: 1.0, hysteresis: 0.4 }
    }
}

pub fn attempts_count(index_mcp: &[f64], counter: &AttemptCounter) -> usize {
    let mut armed = true;
    let mut n = 0;
    for &q in index_mcp {
        if armed && q > counter.angle {
            n += 1;
            armed = false;
        } else if !armed && q < counter.angle - counter.hysteresis {
            armed = true;
        }
    }
    n
}
