//! Numerical and geometric oracles that share no code with the library.

use intentfix_core::fixtures::{adjust_boundary, AdjustmentPolicy, BoundaryParams, BOUNDARY_SETS};
use intentfix_core::rng::{self, uniform};
use intentfix_core::stats::dist;
use intentfix_core::{Scene, Vec3};

/// Adaptive Simpson on `[a, b]` given `(x, f(x))` at both ends and the middle.
fn simpson(f: &dyn Fn(f64) -> f64, pts: [(f64, f64); 3], whole: f64, tol: f64, depth: u32) -> f64 {
    let [(a, fa), (m, fm), (b, fb)] = pts;
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, [(a, fa), (lm, flm), (m, fm)], left, tol / 2.0, depth - 1)
        + simpson(f, [(m, fm), (rm, frm), (b, fb)], right, tol / 2.0, depth - 1)
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(&f, [(a, fa), (m, fm), (b, fb)], whole, 1e-13, 40)
}

/// Gamma at positive integers and half integers.
fn gamma_half(k2: u32) -> f64 {
    // Gamma(k2 / 2)
    match k2 {
        1 => std::f64::consts::PI.sqrt(),
        2 => 1.0,
        _ => (k2 as f64 / 2.0 - 1.0) * gamma_half(k2 - 2),
    }
}

#[test]
fn normal_cdf_matches_quadrature() {
    let phi = |u: f64| (-u * u / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    for &x in &[-4.0, -2.5, -1.0, -0.3, 0.0, 0.4, 1.0, 1.96, 3.0] {
        let oracle = 0.5 + integrate(phi, 0.0, x);
        assert!((dist::normal_cdf(x) - oracle).abs() < 1e-6, "x={x}");
    }
}

#[test]
fn chi_square_tail_matches_quadrature() {
    for &k in &[1u32, 2, 3, 4, 5, 10] {
        let norm = 2f64.powf(k as f64 / 2.0) * gamma_half(k);
        // t = u^2 removes the singularity at zero for k = 1
        let pdf_u = |u: f64| 2.0 * u.powi(k as i32 - 1) * (-u * u / 2.0).exp() / norm;
        for &x in &[0.01f64, 0.455, 1.0, 2.5, 3.841, 6.0, 10.0, 20.0] {
            let oracle = 1.0 - integrate(pdf_u, 0.0, x.sqrt());
            let got = dist::chi2_sf(x, k as f64);
            assert!((got - oracle).abs() < 1e-6, "k={k} x={x} got={got} oracle={oracle}");
        }
    }
}

#[test]
fn t_cdf_matches_quadrature() {
    for &nu in &[1.0f64, 2.0, 3.3, 4.0, 7.5, 10.0, 30.0] {
        // t = sqrt(nu) tan(phi) turns the density into cos^(nu-1)
        let g = |phi: f64| phi.cos().powf(nu - 1.0);
        let total = integrate(g, 0.0, std::f64::consts::FRAC_PI_2);
        for &t in &[-6.0f64, -2.0, -1.2247, -0.5, 0.0, 0.7, 1.5, 2.776, 5.0] {
            let upto = integrate(g, 0.0, (t.abs() / nu.sqrt()).atan());
            let half = 0.5 * upto / total;
            let oracle = if t >= 0.0 { 0.5 + half } else { 0.5 - half };
            let got = dist::t_cdf(t, nu);
            assert!((got - oracle).abs() < 1e-6, "nu={nu} t={t} got={got} oracle={oracle}");
            let two = dist::t_two_sided(t, nu);
            assert!((two - (1.0 - 2.0 * half)).abs() < 1e-6);
        }
    }
}

/// Even-odd ray test on the `(r, h)` profile polygon of the allowed region.
fn profile_allows(s: f64, h_top: f64, theta_deg: f64, r: f64, h: f64) -> bool {
    let big = 1e4;
    let top = s + h_top / theta_deg.to_radians().tan();
    let poly = [(0.0, 0.0), (s, 0.0), (top, h_top), (big, h_top), (big, big), (0.0, big)];
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (ri, hi) = poly[i];
        let (rj, hj) = poly[(i + n - 1) % n];
        if (hi > h) != (hj > h) && r < (rj - ri) * (h - hi) / (hj - hi) + ri {
            inside = !inside;
        }
    }
    inside
}

fn oracle_cylindrical(b: &BoundaryParams, p: Vec3<Scene>) -> (f64, f64) {
    let a = b.axis.to_array();
    let len = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let v = (p - b.center).to_array();
    let h = (v[0] * a[0] + v[1] * a[1] + v[2] * a[2]) / len;
    let r2 = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) - h * h;
    (100.0 * h, 100.0 * r2.max(0.0).sqrt())
}

#[test]
fn containment_matches_profile_oracle() {
    let mut rng = rng::seeded(20240611);
    let axis = Vec3::<Scene>::new(0.2, -0.1, 1.0).normalized().unwrap();
    let center = Vec3::new(0.05, -0.03, 0.1);
    let pol = AdjustmentPolicy::default();
    let mut boundaries = Vec::new();
    for k in 1..=8u8 {
        let base = BoundaryParams::preset(k, center, axis).unwrap();
        for sci in [-1.0, -0.4, 0.0, 0.5, 1.0] {
            boundaries.push(adjust_boundary(&base, sci, &pol));
        }
    }
    let mut disagreements = 0;
    let per = 100_000 / boundaries.len() + 1;
    for b in &boundaries {
        for _ in 0..per {
            let p = center
                + Vec3::new(
                    uniform(&mut rng, -0.25, 0.25),
                    uniform(&mut rng, -0.25, 0.25),
                    uniform(&mut rng, -0.05, 0.25),
                );
            let (h, r) = oracle_cylindrical(b, p);
            let expect = profile_allows(b.s_cm, b.h_cm, b.theta_deg, r, h);
            if b.allows(p) != expect {
                disagreements += 1;
            }
        }
    }
    assert_eq!(disagreements, 0);
    assert_eq!(BOUNDARY_SETS.len(), 8);
}

#[test]
fn constrained_points_match_dense_surface_search() {
    let axis = Vec3::<Scene>::new(0.0, 0.0, 1.0);
    let center = Vec3::new(0.0, 0.0, 0.0);
    let b = BoundaryParams::preset(2, center, axis).unwrap();
    let cot = 1.0 / b.theta_deg.to_radians().tan();
    let mut rng = rng::seeded(3);
    for _ in 0..40 {
        // just outside the wall, below the lip
        let h = uniform(&mut rng, 0.5, b.h_cm - 0.5);
        let r = b.s_cm + h * cot + uniform(&mut rng, 0.01, 0.3);
        let ang: f64 = uniform(&mut rng, 0.0, std::f64::consts::TAU);
        let dir = Vec3::<Scene>::new(ang.cos(), ang.sin(), 0.0);
        let p = center + axis * (h / 100.0) + dir * (r / 100.0);
        let k = b.constrain(p, 5.0);
        assert!(k.active);

        let n = (axis * cot - dir).normalized().unwrap();
        let f = k.restoring.normalized().unwrap();
        assert!((f - n).norm() < 1e-6, "restoring not normal to the wall");

        // nearest point on a fine sampling of the wall surface
        let mut best = f64::INFINITY;
        let steps = 400;
        for i in 0..=steps {
            let hh = b.h_cm * i as f64 / steps as f64;
            let rr = b.s_cm + hh * cot;
            for j in -20..=20 {
                let a2 = ang + j as f64 * 1e-3;
                let q = center + axis * (hh / 100.0) + Vec3::new(a2.cos(), a2.sin(), 0.0) * (rr / 100.0);
                best = best.min(q.distance(p));
            }
        }
        let got = k.point.distance(p);
        assert!(got <= best + 1e-9, "projection farther than a sampled surface point");
        assert!(best - got < 2e-4, "dense search found nothing near the projection");
    }
}

#[test]
fn vertical_wall_with_no_disc_blocks_everything_below_the_lip() {
    let axis = Vec3::<Scene>::new(0.0, 0.0, 1.0);
    let b = BoundaryParams {
        s_cm: 0.0,
        h_cm: 10.0,
        theta_deg: 90.0,
        center: Vec3::zero(),
        axis,
    };
    let mut rng = rng::seeded(11);
    for _ in 0..10_000 {
        let h = uniform(&mut rng, 1e-6, 10.0 - 1e-6);
        let r = uniform(&mut rng, 1e-6, 30.0);
        let ang: f64 = uniform(&mut rng, 0.0, std::f64::consts::TAU);
        let p = Vec3::new(ang.cos() * r / 100.0, ang.sin() * r / 100.0, h / 100.0);
        assert!(!b.allows(p));
    }
}
