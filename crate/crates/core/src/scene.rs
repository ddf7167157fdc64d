//! Simulated workspace: objects, a straight-on pinhole camera producing the
//! gaze screen, and target resolution by ray casting (the depth sensor's
//! role in a physical setup).

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaze::Screen;
use crate::math;
use crate::vec::{Normalized, Scene, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere {
        radius: f64,
    },
    Box {
        half_extents: [f64; 3],
    },
    /// Flat strip lying along `x`. `marked` is the cut segment as
    /// `[start, end]` offsets along the strip from its center, meters.
    Strip {
        length: f64,
        width: f64,
        thickness: f64,
        marked: Option<[f64; 2]>,
    },
}

impl Shape {
    fn half_extents(&self) -> Option<[f64; 3]> {
        match *self {
            Shape::Sphere { .. } => None,
            Shape::Box { half_extents } => Some(half_extents),
            Shape::Strip {
                length,
                width,
                thickness,
                ..
            } => Some([length / 2.0, width / 2.0, thickness / 2.0]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub shape: Shape,
    /// Center of the shape, meters.
    pub position: Vec3<Scene>,
    #[serde(default)]
    pub hazard: bool,
    #[serde(default)]
    pub target: bool,
}

impl SceneObject {
    /// Signed distance from `p` to the surface (negative inside).
    pub fn signed_distance(&self, p: Vec3<Scene>) -> f64 {
        let d = p - self.position;
        match self.shape {
            Shape::Sphere { radius } => d.norm() - radius,
            _ => {
                let h = self.shape.half_extents().expect("box-like");
                let q = Vec3::<Scene>::new(d.x.abs() - h[0], d.y.abs() - h[1], d.z.abs() - h[2]);
                let outside = q.map(|c| c.max(0.0)).norm();
                let inside = q.x.max(q.y).max(q.z).min(0.0);
                outside + inside
            }
        }
    }

    /// Top of the object along `+z`; the marked segment center for a strip.
    pub fn goal_point(&self) -> Vec3<Scene> {
        let p = self.position;
        match self.shape {
            Shape::Sphere { radius } => Vec3::new(p.x, p.y, p.z + radius),
            Shape::Box { half_extents } => Vec3::new(p.x, p.y, p.z + half_extents[2]),
            Shape::Strip { thickness, marked, .. } => {
                let along = marked.map_or(0.0, |[a, b]| 0.5 * (a + b));
                Vec3::new(p.x + along, p.y, p.z + thickness / 2.0)
            }
        }
    }

    /// Ray parameter of the first hit with `origin + s * dir`, `s > 0`.
    fn intersect(&self, origin: Vec3<Scene>, dir: Vec3<Scene>) -> Option<f64> {
        let oc = origin - self.position;
        match self.shape {
            Shape::Sphere { radius } => {
                let a = dir.dot(dir);
                let b = 2.0 * oc.dot(dir);
                let c = oc.dot(oc) - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = math::sqrt(disc);
                let s0 = (-b - sq) / (2.0 * a);
                let s1 = (-b + sq) / (2.0 * a);
                [s0, s1].into_iter().find(|&s| s > 0.0)
            }
            _ => {
                let h = self.shape.half_extents().expect("box-like");
                let o = oc.to_array();
                let d = dir.to_array();
                let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                for i in 0..3 {
                    if d[i].abs() < 1e-300 {
                        if o[i] < -h[i] || o[i] > h[i] {
                            return None;
                        }
                        continue;
                    }
                    let a = (-h[i] - o[i]) / d[i];
                    let b = (h[i] - o[i]) / d[i];
                    lo = lo.max(a.min(b));
                    hi = hi.min(a.max(b));
                }
                if hi < lo || hi <= 0.0 {
                    None
                } else if lo > 0.0 {
                    Some(lo)
                } else {
                    Some(hi)
                }
            }
        }
    }
}

/// Pinhole camera above the workspace looking straight down `-z`. Image `u`
/// grows with `+x`, image `v` grows with `-y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: Vec3<Scene>,
    pub focal_px: f64,
    pub screen: Screen,
}

impl Default for Camera {
    fn default() -> Self {
        Self {
            position: Vec3::new(0.0, 0.0, 1.0),
            focal_px: 600.0,
            screen: Screen::default(),
        }
    }
}

impl Camera {
    fn principal(&self) -> (f64, f64) {
        (f64::from(self.screen.width) / 2.0, f64::from(self.screen.height) / 2.0)
    }

    /// Pixel of a scene point, `None` for points at or above the camera.
    pub fn project(&self, p: Vec3<Scene>) -> Option<(f64, f64)> {
        let depth = self.position.z - p.z;
        if depth <= 0.0 {
            return None;
        }
        let (cu, cv) = self.principal();
        Some((
            cu + self.focal_px * (p.x - self.position.x) / depth,
            cv - self.focal_px * (p.y - self.position.y) / depth,
        ))
    }

    /// Un-normalized ray direction through a pixel; its `z` component is -1.
    pub fn ray(&self, u: f64, v: f64) -> Vec3<Scene> {
        let (cu, cv) = self.principal();
        Vec3::new((u - cu) / self.focal_px, (cv - v) / self.focal_px, -1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Floor {
    pub z: f64,
}

impl Default for Floor {
    fn default() -> Self {
        Self { z: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SceneModel {
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub camera: Camera,
    #[serde(default)]
    pub floor: Floor,
}

impl SceneModel {
    pub fn validate(&self) -> Result<()> {
        let targets = self.objects.iter().filter(|o| o.target).count();
        if targets != 1 {
            return Err(Error::InvalidScene(alloc::format!(
                "expected exactly one target, found {targets}"
            )));
        }
        let marked = self
            .objects
            .iter()
            .filter(|o| matches!(o.shape, Shape::Strip { marked: Some(_), .. }))
            .count();
        if marked > 1 {
            return Err(Error::InvalidScene(
                "more than one strip carries a marked segment".into(),
            ));
        }
        for o in &self.objects {
            let ok = match o.shape {
                Shape::Sphere { radius } => radius > 0.0,
                Shape::Box { half_extents } => half_extents.iter().all(|&h| h > 0.0),
                Shape::Strip {
                    length,
                    width,
                    thickness,
                    marked,
                } => {
                    length > 0.0
                        && width > 0.0
                        && thickness > 0.0
                        && marked.is_none_or(|[a, b]| a < b && a >= -length / 2.0 && b <= length / 2.0)
                }
            };
            if !ok || !o.position.is_finite() {
                return Err(Error::InvalidScene(alloc::format!("object {} has bad geometry", o.id)));
            }
            if o.target && o.hazard {
                return Err(Error::InvalidScene(alloc::format!(
                    "object {} is both target and hazard",
                    o.id
                )));
            }
            if o.target && matches!(o.shape, Shape::Strip { marked: None, .. }) {
                return Err(Error::InvalidScene(alloc::format!(
                    "target strip {} has no marked segment",
                    o.id
                )));
            }
        }
        if self.camera.focal_px <= 0.0 || self.camera.position.z <= self.floor.z {
            return Err(Error::InvalidScene("camera must sit above the floor".into()));
        }
        Ok(())
    }

    pub fn target(&self) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.target)
    }

    pub fn hazards(&self) -> impl Iterator<Item = &SceneObject> {
        self.objects.iter().filter(|o| o.hazard)
    }

    /// First surface hit by the camera ray through pixel `(u, v)`; the floor
    /// when no object is hit.
    pub fn raycast(&self, u: f64, v: f64) -> Vec3<Scene> {
        let origin = self.camera.position;
        let dir = self.camera.ray(u, v);
        let floor_s = origin.z - self.floor.z;
        let s = self
            .objects
            .iter()
            .filter_map(|o| o.intersect(origin, dir))
            .fold(floor_s, f64::min);
        origin + dir * s
    }

    /// Resolves a fixation centroid (pixels) into a workspace point.
    pub fn resolve_target(&self, centroid: (f64, f64)) -> Result<Vec3<Scene>> {
        let (u, v) = centroid;
        let screen = self.camera.screen;
        if !screen.contains(u, v) {
            return Err(Error::OutsideScreen {
                x: u,
                y: v,
                width: screen.width,
                height: screen.height,
            });
        }
        Ok(self.raycast(u, v))
    }
}

/// Axis-aligned box of the scene mapped onto the unit cube for fixture math.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub min: Vec3<Scene>,
    pub max: Vec3<Scene>,
}

impl Default for Workspace {
    fn default() -> Self {
        Self {
            min: Vec3::new(-0.3, -0.3, 0.0),
            max: Vec3::new(0.3, 0.3, 0.4),
        }
    }
}

impl Workspace {
    pub fn extent(&self) -> Vec3<Scene> {
        self.max - self.min
    }

    pub fn normalize(&self, p: Vec3<Scene>) -> Vec3<Normalized> {
        let e = self.extent();
        Vec3::new(
            (p.x - self.min.x) / e.x,
            (p.y - self.min.y) / e.y,
            (p.z - self.min.z) / e.z,
        )
    }

    pub fn denormalize(&self, p: Vec3<Normalized>) -> Vec3<Scene> {
        let e = self.extent();
        Vec3::new(self.min.x + p.x * e.x, self.min.y + p.y * e.y, self.min.z + p.z * e.z)
    }

    /// Maps a normalized-frame displacement to scene axes (meters).
    pub fn denormalize_delta(&self, d: Vec3<Normalized>) -> Vec3<Scene> {
        let e = self.extent();
        Vec3::new(d.x * e.x, d.y * e.y, d.z * e.z)
    }

    pub fn clamp(&self, p: Vec3<Scene>) -> Vec3<Scene> {
        Vec3::new(
            math::clamp(p.x, self.min.x, self.max.x),
            math::clamp(p.y, self.min.y, self.max.y),
            math::clamp(p.z, self.min.z, self.max.z),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ball(id: &str, x: f64, y: f64, z: f64, r: f64) -> SceneObject {
        SceneObject {
            id: id.into(),
            shape: Shape::Sphere { radius: r },
            position: Vec3::new(x, y, z),
            hazard: false,
            target: false,
        }
    }

    fn crate_box(id: &str, center: Vec3<Scene>, h: [f64; 3]) -> SceneObject {
        SceneObject {
            id: id.into(),
            shape: Shape::Box { half_extents: h },
            position: center,
            hazard: false,
            target: false,
        }
    }

    #[test]
    fn projection_round_trip_hits_sphere_top() {
        let mut b = ball("ball", 0.12, -0.07, 0.05, 0.033);
        b.target = true;
        let scene = SceneModel {
            objects: vec![b.clone()],
            ..Default::default()
        };
        let px = scene.camera.project(b.position).unwrap();
        let hit = scene.resolve_target(px).unwrap();
        // ray through the center's pixel meets the near (upper) surface
        assert!(b.signed_distance(hit).abs() < 1e-12);
        assert!(hit.z > b.position.z);
        let back = scene.camera.project(hit).unwrap();
        assert!((back.0 - px.0).abs() < 1e-9 && (back.1 - px.1).abs() < 1e-9);
    }

    #[test]
    fn empty_scene_center_pixel_hits_floor_below_camera() {
        let scene = SceneModel::default();
        let p = scene.resolve_target((320.0, 240.0)).unwrap();
        assert_eq!(p, Vec3::new(0.0, 0.0, 0.0));
    }

    #[test]
    fn stacked_objects_resolve_to_nearer() {
        let lower = crate_box("lower", Vec3::new(0.1, 0.1, 0.05), [0.05, 0.05, 0.05]);
        let upper = crate_box("upper", Vec3::new(0.1, 0.1, 0.15), [0.03, 0.03, 0.05]);
        let scene = SceneModel {
            objects: vec![lower, upper],
            ..Default::default()
        };
        let px = scene.camera.project(Vec3::new(0.1, 0.1, 0.2)).unwrap();
        let hit = scene.resolve_target(px).unwrap();
        // top face of the upper box at z = 0.2, computed by hand
        assert!((hit.z - 0.2).abs() < 1e-12);
        assert!((hit.x - 0.1).abs() < 1e-12 && (hit.y - 0.1).abs() < 1e-12);
    }

    #[test]
    fn outside_screen_rejected() {
        let scene = SceneModel::default();
        assert!(matches!(
            scene.resolve_target((640.0, 10.0)),
            Err(Error::OutsideScreen { .. })
        ));
        assert!(scene.resolve_target((-0.1, 10.0)).is_err());
    }

    #[test]
    fn validate_requires_one_target() {
        let scene = SceneModel {
            objects: vec![ball("a", 0.0, 0.0, 0.0, 0.01)],
            ..Default::default()
        };
        assert!(matches!(scene.validate(), Err(Error::InvalidScene(_))));
    }

    #[test]
    fn box_signed_distance() {
        let b = crate_box("b", Vec3::zero(), [1.0, 1.0, 1.0]);
        assert!((b.signed_distance(Vec3::new(2.0, 0.0, 0.0)) - 1.0).abs() < 1e-12);
        assert!((b.signed_distance(Vec3::new(0.5, 0.0, 0.0)) + 0.5).abs() < 1e-12);
        assert!((b.signed_distance(Vec3::new(2.0, 2.0, 0.0)) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn workspace_round_trip() {
        let w = Workspace::default();
        let p = Vec3::new(0.1, -0.2, 0.3);
        let back = w.denormalize(w.normalize(p));
        assert!((back - p).norm() < 1e-12);
        assert_eq!(w.normalize(Vec3::new(0.0, 0.0, 0.2)), Vec3::new(0.5, 0.5, 0.5));
    }
}
