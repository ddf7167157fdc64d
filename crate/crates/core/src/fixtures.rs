//! Confidence-modulated virtual fixtures.
//!
//! Two assistance primitives share one confidence input:
//!
//! * a guidance force derived from a Gaussian potential field blending the
//!   joystick position with the gaze target, normalized by its numerically
//!   located maximum;
//! * a forbidden-region safety boundary shaped as a funnel (flat disc of
//!   radius `S`, cone wall at angle `theta` up to height `H`, free space
//!   above), tightened or opened by scaled confidence.
//!
//! Field math runs in the [`Normalized`] frame; the boundary lives in the
//! [`Scene`] frame with parameters in centimeters and degrees.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::vec::{Normalized, Scene, Vec3};

pub const DEFAULT_SIGMA: f64 = 0.4;

pub const S_RANGE_CM: (f64, f64) = (1.0, 7.0);
pub const H_RANGE_CM: (f64, f64) = (0.0, 15.0);
pub const THETA_RANGE_DEG: (f64, f64) = (5.0, 85.0);

pub const DEFAULT_ITHRESH: f64 = 0.60;
pub const DEFAULT_STIFFNESS_N_PER_CM: f64 = 5.0;
pub const DEFAULT_FORCE_SCALE_N: f64 = 3.0;

const CM_PER_M: f64 = 100.0;

/// How the printed diagonal of the field's matrix is read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaReading {
    /// `sigma` is a per-axis standard deviation: `exp(-1/2 sum (d/sigma)^2)`.
    #[default]
    StdDev,
    /// `sigma^2` is taken literally as the inverse-covariance entry:
    /// `exp(-1/2 sum d^2 sigma^2)`.
    InverseCovariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    pub sigma: [f64; 3],
    /// Per-axis influence of the field on the blended position.
    pub d: [f64; 3],
    #[serde(default)]
    pub reading: SigmaReading,
}

impl Default for FieldParams {
    fn default() -> Self {
        Self {
            sigma: [DEFAULT_SIGMA; 3],
            d: [1.0; 3],
            reading: SigmaReading::StdDev,
        }
    }
}

impl FieldParams {
    pub fn new(sigma: [f64; 3], d: [f64; 3]) -> Self {
        Self {
            sigma,
            d,
            reading: SigmaReading::StdDev,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter("sigma must be positive".into()));
        }
        if self.d.iter().any(|&d| !(0.0..=1.0).contains(&d)) {
            return Err(Error::InvalidParameter("d must lie in [0, 1]".into()));
        }
        Ok(())
    }

    fn weights(&self) -> Vec3<Normalized> {
        Vec3::from_array(self.d)
    }
}

/// Field value `W` in `(0, 1]`, peaking at the gaze target.
pub fn potential_weight(p_j: Vec3<Normalized>, p_g: Vec3<Normalized>, fp: &FieldParams) -> f64 {
    let delta = (p_j - p_g).to_array();
    let mut q = 0.0;
    for i in 0..3 {
        q += match fp.reading {
            SigmaReading::StdDev => {
                let u = delta[i] / fp.sigma[i];
                u * u
            }
            SigmaReading::InverseCovariance => delta[i] * delta[i] * fp.sigma[i] * fp.sigma[i],
        };
    }
    math::exp(-0.5 * q)
}

/// Per-axis blend `c_i = p_j,i (1 - W d_i) + p_g,i W d_i`.
pub fn combine(p_j: Vec3<Normalized>, p_g: Vec3<Normalized>, fp: &FieldParams) -> Vec3<Normalized> {
    let w = potential_weight(p_j, p_g, fp);
    let wd = fp.weights() * w;
    let one = Vec3::splat(1.0);
    p_j.hadamard(one - wd) + p_g.hadamard(wd)
}

fn displacement_norm(p_j: Vec3<Normalized>, p_g: Vec3<Normalized>, fp: &FieldParams) -> f64 {
    (combine(p_j, p_g, fp) - p_j).norm()
}

/// Largest displacement `|c - p_j|` over the unit workspace with the target
/// at its center: a coarse grid followed by a shrinking compass search.
pub fn gf_max(fp: &FieldParams) -> Result<f64> {
    fp.validate()?;
    if fp.d.iter().all(|&d| d == 0.0) {
        return Err(Error::NoFieldInfluence);
    }
    const GRID: usize = 20;
    let p_g = Vec3::<Normalized>::splat(0.5);
    let f = |p: Vec3<Normalized>| displacement_norm(p, p_g, fp);

    let mut best = (p_g, 0.0);
    for i in 0..=GRID {
        for j in 0..=GRID {
            for k in 0..=GRID {
                let p = Vec3::new(i as f64, j as f64, k as f64) * (1.0 / GRID as f64);
                let v = f(p);
                if v > best.1 {
                    best = (p, v);
                }
            }
        }
    }

    let inside = |p: Vec3<Normalized>| {
        Vec3::new(
            math::clamp(p.x, 0.0, 1.0),
            math::clamp(p.y, 0.0, 1.0),
            math::clamp(p.z, 0.0, 1.0),
        )
    };
    let dirs: [Vec3<Normalized>; 6] = [
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(-1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, -1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
        Vec3::new(0.0, 0.0, -1.0),
    ];
    let mut step = 1.0 / GRID as f64;
    while step > 1e-10 {
        let mut improved = false;
        for d in dirs {
            let p = inside(best.0 + d * step);
            let v = f(p);
            if v > best.1 {
                best = (p, v);
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(best.1)
}

/// Field parameters paired with their precomputed `gf_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceField {
    pub params: FieldParams,
    /// `None` when the field has no influence on any axis.
    pub gf_max: Option<f64>,
}

impl GuidanceField {
    pub fn new(params: FieldParams) -> Result<Self> {
        params.validate()?;
        let gf_max = match gf_max(&params) {
            Ok(v) => Some(v),
            Err(Error::NoFieldInfluence) => None,
            Err(e) => return Err(e),
        };
        Ok(Self { params, gf_max })
    }

    pub fn with_gf_max(params: FieldParams, gf_max: Option<f64>) -> Self {
        Self { params, gf_max }
    }

    /// Guidance force toward `p_g`, scaled linearly by the non-negative part
    /// of the scaled confidence.
    pub fn force(
        &self,
        p_j: Vec3<Normalized>,
        p_g: Vec3<Normalized>,
        ci: f64,
        policy: &AdjustmentPolicy,
    ) -> GuidanceForce {
        let Some(max) = self.gf_max.filter(|&m| m > 0.0) else {
            return GuidanceForce {
                gf: Vec3::zero(),
                degenerate: true,
            };
        };
        let strength = scaled_confidence(ci, policy).max(0.0);
        let c = combine(p_j, p_g, &self.params);
        GuidanceForce {
            gf: (c - p_j) * (strength / max),
            degenerate: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GuidanceForce {
    /// Normalized, dimensionless strength per axis.
    pub gf: Vec3<Normalized>,
    /// Set when the field had no influence; `gf` is then zero.
    pub degenerate: bool,
}

impl GuidanceForce {
    /// Device force in newtons for a scale of `newtons_per_unit`.
    pub fn newtons(&self, newtons_per_unit: f64) -> Vec3<Normalized> {
        self.gf * newtons_per_unit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxAdjust {
    #[serde(rename = "S")]
    pub s_cm: f64,
    #[serde(rename = "H")]
    pub h_cm: f64,
    #[serde(rename = "theta")]
    pub theta_deg: f64,
}

impl Default for MaxAdjust {
    fn default() -> Self {
        Self {
            s_cm: -2.0,
            h_cm: 5.0,
            theta_deg: 25.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentPolicy {
    pub ithresh: f64,
    pub max_adjust: MaxAdjust,
}

impl Default for AdjustmentPolicy {
    fn default() -> Self {
        Self {
            ithresh: DEFAULT_ITHRESH,
            max_adjust: MaxAdjust::default(),
        }
    }
}

impl AdjustmentPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.ithresh > 0.5 && self.ithresh < 1.0) {
            return Err(Error::InvalidParameter("ithresh must lie in (0.5, 1)".into()));
        }
        Ok(())
    }
}

/// Confidence re-centered on the threshold: `[0, ithresh) -> [-1, 0)`,
/// `[ithresh, 1] -> [0, 1]`.
pub fn scaled_confidence(ci: f64, policy: &AdjustmentPolicy) -> f64 {
    let t = policy.ithresh;
    if ci >= t {
        (ci - t) / (1.0 - t)
    } else {
        (ci - t) / t
    }
}

/// Funnel shape plus its placement in the scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryParams {
    /// Flat-bottom radius, cm.
    #[serde(rename = "S")]
    pub s_cm: f64,
    /// Height of the cone / lower face of the free region, cm.
    #[serde(rename = "H")]
    pub h_cm: f64,
    /// Cone wall angle measured from the bottom plane, degrees.
    #[serde(rename = "theta")]
    pub theta_deg: f64,
    pub center: Vec3<Scene>,
    /// Unit approach axis pointing out of the funnel.
    pub axis: Vec3<Scene>,
}

/// `(theta deg, H cm, S cm)` of the eight tested parameter sets.
pub const BOUNDARY_SETS: [(f64, f64, f64); 8] = [
    (30.0, 5.0, 3.0),
    (30.0, 5.0, 5.0),
    (30.0, 10.0, 3.0),
    (30.0, 10.0, 5.0),
    (60.0, 5.0, 3.0),
    (60.0, 5.0, 5.0),
    (60.0, 10.0, 3.0),
    (60.0, 10.0, 5.0),
];

/// Default set for cutting.
pub const CUTTING_SET: u8 = 2;
/// Default set for grasping.
pub const GRASPING_SET: u8 = 5;

impl BoundaryParams {
    pub fn new(s_cm: f64, h_cm: f64, theta_deg: f64, center: Vec3<Scene>, axis: Vec3<Scene>) -> Self {
        Self {
            s_cm,
            h_cm,
            theta_deg,
            center,
            axis: axis.normalized().unwrap_or(Vec3::new(0.0, 0.0, 1.0)),
        }
    }

    /// One of the eight preset sets (1-based).
    pub fn preset(set: u8, center: Vec3<Scene>, axis: Vec3<Scene>) -> Result<Self> {
        let (theta, h, s) = *BOUNDARY_SETS
            .get(usize::from(set).wrapping_sub(1))
            .ok_or_else(|| Error::InvalidParameter(alloc::format!("boundary set {set} not in 1..=8")))?;
        Ok(Self::new(s, h, theta, center, axis))
    }

    pub fn with_center(self, center: Vec3<Scene>) -> Self {
        Self { center, ..self }
    }

    pub fn clamped(self) -> Self {
        Self {
            s_cm: math::clamp(self.s_cm, S_RANGE_CM.0, S_RANGE_CM.1),
            h_cm: math::clamp(self.h_cm, H_RANGE_CM.0, H_RANGE_CM.1),
            theta_deg: math::clamp(self.theta_deg, THETA_RANGE_DEG.0, THETA_RANGE_DEG.1),
            ..self
        }
    }

    pub fn in_ranges(&self) -> bool {
        (S_RANGE_CM.0..=S_RANGE_CM.1).contains(&self.s_cm)
            && (H_RANGE_CM.0..=H_RANGE_CM.1).contains(&self.h_cm)
            && (THETA_RANGE_DEG.0..=THETA_RANGE_DEG.1).contains(&self.theta_deg)
            && (self.axis.norm() - 1.0).abs() < 1e-9
    }

    /// Radius of the allowed funnel at axial height `h_cm`.
    pub fn allowed_radius(&self, h_cm: f64) -> f64 {
        let th = math::to_radians(self.theta_deg);
        self.s_cm + h_cm * math::cos(th) / math::sin(th)
    }

    /// Axial height and radial offset of `p`, both in cm, plus the unit
    /// radial direction (zero on the axis).
    fn cylindrical(&self, p: Vec3<Scene>) -> (f64, f64, Vec3<Scene>) {
        let v = p - self.center;
        let h = v.dot(self.axis);
        let radial = v - self.axis * h;
        let r = radial.norm();
        let dir = if r > 0.0 { radial * (1.0 / r) } else { Vec3::zero() };
        (h * CM_PER_M, r * CM_PER_M, dir)
    }

    fn point_at(&self, h_cm: f64, r_cm: f64, dir: Vec3<Scene>) -> Vec3<Scene> {
        self.center + self.axis * (h_cm / CM_PER_M) + dir * (r_cm / CM_PER_M)
    }

    fn allows_cyl(&self, h: f64, r: f64) -> bool {
        h >= self.h_cm || (h >= 0.0 && r <= self.allowed_radius(h))
    }

    /// Whether the boundary lets the effector occupy `p`.
    pub fn allows(&self, p: Vec3<Scene>) -> bool {
        let (h, r, _) = self.cylindrical(p);
        self.allows_cyl(h, r)
    }

    /// Nearest allowed point to `commanded` and the spring force pulling the
    /// handle there (`stiffness` in N/cm, force in N along scene axes).
    pub fn constrain(&self, commanded: Vec3<Scene>, stiffness: f64) -> Constrained {
        if self.allows(commanded) {
            return Constrained {
                point: commanded,
                restoring: Vec3::zero(),
                active: false,
            };
        }
        let (h, r, dir) = self.cylindrical(commanded);
        let (mut h2, mut r2, face) = self.nearest_in_profile(h, r);
        let mut point = self.point_at(h2, r2, dir);
        let mut eps = 1e-12;
        while !self.allows(point) && eps < 1e-3 {
            match face {
                Face::Lip | Face::Bottom => h2 += eps * (1.0 + h2.abs()),
                Face::Wall => r2 = (r2 - eps * (1.0 + r2)).max(0.0),
            }
            point = self.point_at(h2, r2, dir);
            eps *= 10.0;
        }
        Constrained {
            point,
            restoring: (point - commanded) * (stiffness * CM_PER_M),
            active: true,
        }
    }

    /// Nearest point of the allowed region's closure in the `(h, r)` half
    /// plane. The region is the union of the half plane `h >= H` and the
    /// trapezoid `(0,0) (S,0) (S + H cot theta, H) (0,H)`.
    fn nearest_in_profile(&self, h: f64, r: f64) -> (f64, f64, Face) {
        let s = self.s_cm;
        let top_r = self.allowed_radius(self.h_cm);
        let mut best = (self.h_cm, r, Face::Lip, (self.h_cm - h).max(0.0));
        let mut consider = |a: (f64, f64), b: (f64, f64), face: Face| {
            let (ph, pr) = nearest_on_segment((h, r), a, b);
            let d = math::hypot(ph - h, pr - r);
            if d < best.3 {
                best = (ph, pr, face, d);
            }
        };
        consider((0.0, 0.0), (0.0, s), Face::Bottom);
        if self.h_cm > 0.0 {
            consider((0.0, s), (self.h_cm, top_r), Face::Wall);
        }
        (best.0, best.1, best.2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Face {
    Lip,
    Bottom,
    Wall,
}

/// Closest point to `p` on segment `a`-`b`, all as `(h, r)` pairs.
fn nearest_on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let ab = (b.0 - a.0, b.1 - a.1);
    let len2 = ab.0 * ab.0 + ab.1 * ab.1;
    if len2 == 0.0 {
        return a;
    }
    let t = math::clamp(((p.0 - a.0) * ab.0 + (p.1 - a.1) * ab.1) / len2, 0.0, 1.0);
    (a.0 + t * ab.0, a.1 + t * ab.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constrained {
    pub point: Vec3<Scene>,
    /// Spring force on the handle, newtons.
    pub restoring: Vec3<Scene>,
    /// The commanded point was outside the allowed region.
    pub active: bool,
}

/// Boundary after confidence adjustment, clamped into the parameter ranges.
pub fn adjust_boundary(base: &BoundaryParams, sci: f64, policy: &AdjustmentPolicy) -> BoundaryParams {
    let m = policy.max_adjust;
    BoundaryParams {
        s_cm: base.s_cm + sci * m.s_cm,
        h_cm: base.h_cm + sci * m.h_cm,
        theta_deg: base.theta_deg + sci * m.theta_deg,
        ..*base
    }
    .clamped()
}
