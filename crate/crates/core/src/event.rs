//! The scalar event channel and its debounced edge detector.

use serde::{Deserialize, Serialize};

use crate::types::clamp_sigma;

/// One sample of an event channel. `sigma` is clamped to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventSample {
    sigma: f64,
    pub tick: u64,
}

impl EventSample {
    pub fn new(sigma: f64, tick: u64) -> Self {
        Self { sigma: clamp_sigma(sigma), tick }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Edge {
    None,
    Rising,
    Falling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeConfig {
    pub high_threshold: f64,
    pub low_threshold: f64,
    pub debounce_ticks: u32,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        Self { high_threshold: 0.9, low_threshold: 0.1, debounce_ticks: 3 }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EdgeConfigError {
    #[error("low threshold {low} must be below high threshold {high}")]
    Thresholds { low: f64, high: f64 },
    #[error("debounce must be at least one tick")]
    Debounce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Level {
    Low,
    High,
}

/// Hysteresis edge detector. Starts in the low state, so the first edge it
/// can report is `Rising`; afterwards edges strictly alternate.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDetector {
    config: EdgeConfig,
    level: Level,
    run: u32,
}

impl EdgeDetector {
    pub fn new(config: EdgeConfig) -> Result<Self, EdgeConfigError> {
        if config.low_threshold.partial_cmp(&config.high_threshold) != Some(std::cmp::Ordering::Less) {
            return Err(EdgeConfigError::Thresholds {
                low: config.low_threshold,
                high: config.high_threshold,
            });
        }
        if config.debounce_ticks == 0 {
            return Err(EdgeConfigError::Debounce);
        }
        Ok(Self { config, level: Level::Low, run: 0 })
    }

    pub fn config(&self) -> &EdgeConfig {
        &self.config
    }

    pub fn is_high(&self) -> bool {
        self.level == Level::High
    }

    pub fn reset(&mut self) {
        self.level = Level::Low;
        self.run = 0;
    }

    pub fn detect(&mut self, sample: EventSample) -> Edge {
        let sigma = sample.sigma();
        let beyond = match self.level {
            Level::Low => sigma > self.config.high_threshold,
            Level::High => sigma < self.config.low_threshold,
        };
        if !beyond {
            self.run = 0;
            return Edge::None;
        }
        self.run += 1;
        if self.run < self.config.debounce_ticks {
            return Edge::None;
        }
        self.run = 0;
        match self.level {
            Level::Low => {
                self.level = Level::High;
                Edge::Rising
            }
            Level::High => {
                self.level = Level::Low;
                Edge::Falling
            }
        }
    }
}

impl Default for EdgeDetector {
    fn default() -> Self {
        Self::new(EdgeConfig::default()).expect("default edge config is valid")
    }
}
