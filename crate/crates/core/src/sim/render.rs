//! Flat-shaded synthetic cameras.
//!
//! Both cameras map a world point (x, y, z) to continuous pixel
//! coordinates (u, v); pixel (i, j) covers [i, i+1) x [j, j+1) and is
//! painted with the topmost shape containing its center.
//!
//! Static camera (cam1), an oblique top-down view of the whole table:
//!
//! ```text
//! u = W * (x - X0) / SPAN_X
//! v = H * (Y_FAR - y - LIFT * z) / SPAN_Y
//! X0 = -0.6, SPAN_X = 1.2, Y_FAR = 0.9, SPAN_Y = 1.2, LIFT = 0.5
//! ```
//!
//! Wrist camera (cam2), looking straight down from the hand at (hx, hy):
//!
//! ```text
//! u = W / 2 + (x - hx) * S
//! v = H / 2 - (y - hy) * S
//! S = W / FIELD, FIELD = 0.4
//! ```

use serde::{Deserialize, Serialize};

use super::World;
use crate::image::Image;
use crate::types::{ObjectKind, PlateColor};

pub const CAM1_X0: f64 = -0.6;
pub const CAM1_SPAN_X: f64 = 1.2;
pub const CAM1_Y_FAR: f64 = 0.9;
pub const CAM1_SPAN_Y: f64 = 1.2;
pub const CAM1_LIFT: f64 = 0.5;
pub const CAM2_FIELD: f64 = 0.4;
const HAND_RADIUS: f64 = 0.025;

pub const FLOOR: [u8; 3] = [40, 40, 44];
pub const TABLE: [u8; 3] = [196, 190, 180];
pub const HAND: [u8; 3] = [250, 250, 250];

pub fn plate_color(c: PlateColor) -> [u8; 3] {
    match c {
        PlateColor::Yellow => [232, 200, 40],
        PlateColor::Purple => [128, 60, 160],
    }
}

pub fn object_color(k: ObjectKind) -> [u8; 3] {
    match k {
        ObjectKind::Pepper => [210, 30, 30],
        ObjectKind::Tape => [170, 120, 60],
        ObjectKind::Paper => [50, 90, 210],
        ObjectKind::Block => [20, 40, 130],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Camera {
    Cam1Static,
    Cam2Wrist,
}

/// Render resolution for observations. A zero size disables rendering.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub width: u32,
    pub height: u32,
}

impl CameraConfig {
    pub fn enabled(&self) -> bool {
        self.width > 0 && self.height > 0
    }
}

enum Shape {
    Rect { x0: f64, x1: f64, y0: f64, y1: f64 },
    Disk { cx: f64, cy: f64, r: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Rect { x0, x1, y0, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Shape::Disk { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
        }
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        match *self {
            Shape::Rect { x0, x1, y0, y1 } => (x0, x1, y0, y1),
            Shape::Disk { cx, cy, r } => (cx - r, cx + r, cy - r, cy + r),
        }
    }
}

struct Item {
    z: f64,
    shape: Shape,
    color: [u8; 3],
}

/// Affine world-plane ↔ pixel map at a given height.
struct Projection {
    width: f64,
    height: f64,
    camera: Camera,
    hand: (f64, f64),
}

impl Projection {
    fn project(&self, x: f64, y: f64, z: f64) -> (f64, f64) {
        match self.camera {
            Camera::Cam1Static => (
                self.width * (x - CAM1_X0) / CAM1_SPAN_X,
                self.height * (CAM1_Y_FAR - y - CAM1_LIFT * z) / CAM1_SPAN_Y,
            ),
            Camera::Cam2Wrist => {
                let s = self.width / CAM2_FIELD;
                (self.width / 2.0 + (x - self.hand.0) * s, self.height / 2.0 - (y - self.hand.1) * s)
            }
        }
    }

    fn unproject(&self, u: f64, v: f64, z: f64) -> (f64, f64) {
        match self.camera {
            Camera::Cam1Static => (
                CAM1_X0 + u / self.width * CAM1_SPAN_X,
                CAM1_Y_FAR - CAM1_LIFT * z - v / self.height * CAM1_SPAN_Y,
            ),
            Camera::Cam2Wrist => {
                let s = self.width / CAM2_FIELD;
                (self.hand.0 + (u - self.width / 2.0) / s, self.hand.1 - (v - self.height / 2.0) / s)
            }
        }
    }
}

/// Projects a world point to continuous pixel coordinates.
pub fn project(world: &World, camera: Camera, width: u32, height: u32, p: [f64; 3]) -> (f64, f64) {
    let hand = world.hand_pose();
    Projection { width: width as f64, height: height as f64, camera, hand: (hand.x, hand.y) }.project(p[0], p[1], p[2])
}

pub fn render(world: &World, camera: Camera, width: u32, height: u32) -> Image {
    if width == 0 || height == 0 {
        return Image::empty();
    }
    let cfg = world.config();
    let hand = world.hand_pose();
    let proj = Projection { width: width as f64, height: height as f64, camera, hand: (hand.x, hand.y) };

    let mut items = vec![Item {
        z: 0.0,
        shape: Shape::Rect { x0: cfg.table.x_min, x1: cfg.table.x_max, y0: 0.0, y1: cfg.table.y_max },
        color: TABLE,
    }];
    for (color, plate) in &cfg.plates {
        items.push(Item {
            z: plate.height,
            shape: Shape::Disk { cx: plate.center[0], cy: plate.center[1], r: plate.radius },
            color: plate_color(*color),
        });
    }
    for o in world.objects().iter().filter(|o| !o.fallen) {
        let [w, d] = o.spec.footprint;
        items.push(Item {
            z: o.top(),
            shape: Shape::Rect {
                x0: o.position[0] - w / 2.0,
                x1: o.position[0] + w / 2.0,
                y0: o.position[1] - d / 2.0,
                y1: o.position[1] + d / 2.0,
            },
            color: object_color(o.kind),
        });
    }
    if camera == Camera::Cam1Static {
        items.push(Item { z: hand.z, shape: Shape::Disk { cx: hand.x, cy: hand.y, r: HAND_RADIUS }, color: HAND });
    }
    // painter's order; stable so equal heights keep insertion order
    items.sort_by(|a, b| a.z.total_cmp(&b.z));

    let mut img = Image::new(width, height, FLOOR);
    for item in &items {
        let (x0, x1, y0, y1) = item.shape.bounds();
        let corners = [
            proj.project(x0, y0, item.z),
            proj.project(x1, y0, item.z),
            proj.project(x0, y1, item.z),
            proj.project(x1, y1, item.z),
        ];
        let umin = corners.iter().map(|c| c.0).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
        let umax = corners.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max).ceil().min(width as f64) as u32;
        let vmin = corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
        let vmax = corners.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max).ceil().min(height as f64) as u32;
        for j in vmin..vmax {
            for i in umin..umax {
                let (x, y) = proj.unproject(i as f64 + 0.5, j as f64 + 0.5, item.z);
                if item.shape.contains(x, y) {
                    img.put(i, j, item.color);
                }
            }
        }
    }
    img
}
