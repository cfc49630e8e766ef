//! Analytic grasp-attachment model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::types::ObjectKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GraspStrategy {
    DirectPick,
    SlideAndPick,
    /// Generic whole-hand closing sequence (1-DoF gripper convention).
    PowerGrasp,
}

impl GraspStrategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            GraspStrategy::DirectPick => "direct_pick",
            GraspStrategy::SlideAndPick => "slide_and_pick",
            GraspStrategy::PowerGrasp => "power_grasp",
        }
    }
}

/// Base success probability per strategy for one object kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyTable {
    pub direct_pick: f64,
    pub slide_and_pick: f64,
    pub power_grasp: f64,
}

impl StrategyTable {
    pub fn get(&self, strategy: GraspStrategy) -> f64 {
        match strategy {
            GraspStrategy::DirectPick => self.direct_pick,
            GraspStrategy::SlideAndPick => self.slide_and_pick,
            GraspStrategy::PowerGrasp => self.power_grasp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraspModel {
    /// Gaussian length scale of the planar-offset attenuation (m).
    pub lambda_offset: f64,
    /// Minimum overhang fraction for edge-supported picks.
    pub overhang_threshold: f64,
    /// Multiplier on the slide-and-pick base when the overhang gate is closed.
    pub unsupported_slide_factor: f64,
    /// Multiplier when a thin object is picked from the top at the wrong height.
    pub misaligned_height_factor: f64,
    /// Planar radius within which closing the hand reaches an object (m).
    pub capture_radius: f64,
    /// Height above an object's top within which closing reaches it (m).
    pub capture_height: f64,
    /// Synergy at which closing triggers an attempt.
    pub close_threshold: f64,
    /// Synergy below which a held object is let go.
    pub release_threshold: f64,
    /// Overhang fraction beyond which an unsupported object tips off the edge.
    pub fall_overhang: f64,
    pub q_base: BTreeMap<ObjectKind, StrategyTable>,
}

impl Default for GraspModel {
    fn default() -> Self {
        let table = |direct_pick, slide_and_pick, power_grasp| StrategyTable { direct_pick, slide_and_pick, power_grasp };
        let q_base = BTreeMap::from([
            (ObjectKind::Pepper, table(0.97, 0.60, 0.26)),
            (ObjectKind::Tape, table(0.96, 0.97, 0.03)),
            (ObjectKind::Paper, table(0.92, 0.95, 0.02)),
            (ObjectKind::Block, table(0.95, 0.97, 0.03)),
        ]);
        Self {
            lambda_offset: 0.11,
            overhang_threshold: 0.3,
            unsupported_slide_factor: 0.02,
            misaligned_height_factor: 0.05,
            capture_radius: 0.20,
            capture_height: 0.03,
            close_threshold: 0.7,
            release_threshold: 0.3,
            fall_overhang: 0.5,
            q_base,
        }
    }
}

/// Geometry of one grasp attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspGeometry {
    pub kind: ObjectKind,
    pub thin: bool,
    pub strategy: GraspStrategy,
    /// Fraction of the object's depth past the table edge.
    pub overhang: f64,
    /// Hand-to-object distance in the table plane (m).
    pub planar_offset: f64,
    /// |hand z - object top| (m).
    pub height_error: f64,
    pub height_tolerance: f64,
}

impl GraspModel {
    pub fn base(&self, kind: ObjectKind, strategy: GraspStrategy, overhang: f64) -> f64 {
        let table = self.q_base.get(&kind).map(|t| t.get(strategy)).unwrap_or(0.0);
        let gate = if strategy == GraspStrategy::SlideAndPick && overhang < self.overhang_threshold {
            self.unsupported_slide_factor
        } else {
            1.0
        };
        (table * gate).clamp(0.0, 1.0)
    }

    pub fn attenuation(&self, planar_offset: f64) -> f64 {
        (-(planar_offset / self.lambda_offset).powi(2)).exp()
    }

    /// Attachment probability
    /// `q = q_base(kind, strategy, overhang) * exp(-(offset / lambda)^2)`,
    /// with a height penalty for top-down picks of thin objects.
    pub fn probability(&self, g: &GraspGeometry) -> f64 {
        let mut q = self.base(g.kind, g.strategy, g.overhang) * self.attenuation(g.planar_offset);
        let top_down = matches!(g.strategy, GraspStrategy::DirectPick | GraspStrategy::PowerGrasp);
        if g.thin && top_down && g.height_error > g.height_tolerance {
            q *= self.misaligned_height_factor;
        }
        q.clamp(0.0, 1.0)
    }
}
