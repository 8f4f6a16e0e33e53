//! Real spherical harmonics (ACN order, SN3D normalization), direction
//! handling and per-degree taper gains.
//!
//! Coordinate frame: +x forward, +y left, +z up. Azimuth is measured
//! counter-clockwise from +x in the horizontal plane, elevation is positive
//! upwards.

mod grid;

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::signal::channel_count;

pub use grid::{default_weights, lebedev50, voronoi_weights, SphereGrid};

/// ACN channel index of degree `n`, index `m` (`-n <= m <= n`).
pub fn acn(n: usize, m: i64) -> usize {
    ((n * n + n) as i64 + m) as usize
}

/// Degree of an ACN channel.
pub fn acn_degree(channel: usize) -> usize {
    (channel as f64).sqrt().floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalDirection {
    /// Radians, wrapped to (-pi, pi].
    pub azimuth: f64,
    /// Radians, in [-pi/2, pi/2].
    pub elevation: f64,
    /// Meters; 0 denotes the far field.
    pub radius: f64,
}

impl SphericalDirection {
    /// Far-field direction. Azimuth is wrapped, elevation clamped.
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        Self {
            azimuth: wrap_angle(azimuth),
            elevation: elevation.clamp(-FRAC_PI_2, FRAC_PI_2),
            radius: 0.0,
        }
    }

    pub fn from_degrees(azimuth: f64, elevation: f64) -> Self {
        Self::new(azimuth.to_radians(), elevation.to_radians())
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius.max(0.0);
        self
    }

    /// Direction of a (non-zero) cartesian vector; radius is the vector norm.
    pub fn from_vector(v: Vector3<f64>) -> Self {
        let r = v.norm();
        let el = if r > 0.0 { (v.z / r).clamp(-1.0, 1.0).asin() } else { 0.0 };
        let az = v.y.atan2(v.x);
        Self::new(az, el).with_radius(r)
    }

    pub fn unit_vector(&self) -> Vector3<f64> {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        Vector3::new(ce * ca, ce * sa, se)
    }

    pub fn azimuth_deg(&self) -> f64 {
        self.azimuth.to_degrees()
    }

    pub fn elevation_deg(&self) -> f64 {
        self.elevation.to_degrees()
    }
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShVector {
    pub order: usize,
    pub coeffs: Vec<f64>,
}

/// SN3D-normalized real spherical harmonics up to `order` for `dir`, in ACN
/// order, without the Condon-Shortley phase.
pub fn eval_real_sh(order: usize, dir: &SphericalDirection) -> ShVector {
    let mut coeffs = vec![0.0; channel_count(order)];
    eval_real_sh_into(order, dir.azimuth, dir.elevation, &mut coeffs);
    ShVector { order, coeffs }
}

/// Same as [`eval_real_sh`] for a raw (azimuth, elevation) pair, writing into
/// `out` (length at least `(order+1)^2`). Hot path of the room simulator.
pub fn eval_real_sh_into(order: usize, azimuth: f64, elevation: f64, out: &mut [f64]) {
    let x = elevation.sin();
    let s = elevation.cos().max(0.0);
    // Associated Legendre P_n^m(sin el), no Condon-Shortley phase, for m <= n.
    let dim = order + 1;
    let mut p = vec![0.0; dim * dim];
    let idx = |n: usize, m: usize| n * dim + m;
    p[idx(0, 0)] = 1.0;
    for m in 1..=order {
        p[idx(m, m)] = p[idx(m - 1, m - 1)] * (2 * m - 1) as f64 * s;
    }
    for m in 0..order {
        p[idx(m + 1, m)] = x * (2 * m + 1) as f64 * p[idx(m, m)];
    }
    for m in 0..=order {
        for n in (m + 2)..=order {
            p[idx(n, m)] = ((2 * n - 1) as f64 * x * p[idx(n - 1, m)]
                - (n + m - 1) as f64 * p[idx(n - 2, m)])
                / (n - m) as f64;
        }
    }
    for n in 0..=order {
        for m in 0..=n {
            // sqrt((2 - delta_m0) (n-m)!/(n+m)!)
            let mut ratio = 1.0;
            for k in (n - m + 1)..=(n + m) {
                ratio /= k as f64;
            }
            let norm = if m == 0 { 1.0 } else { (2.0 * ratio).sqrt() };
            let base = norm * p[idx(n, m)];
            if m == 0 {
                out[acn(n, 0)] = base;
            } else {
                let (sm, cm) = (m as f64 * azimuth).sin_cos();
                out[acn(n, m as i64)] = base * cm;
                out[acn(n, -(m as i64))] = base * sm;
            }
        }
    }
}

/// Plane-wave encoding gains for a source at `dir`.
pub fn encode_plane_wave(order: usize, dir: &SphericalDirection) -> ShVector {
    eval_real_sh(order, dir)
}

/// Head orientation as a world-frame rotation: yaw about +z, then pitch
/// (nose up positive) about the rotated interaural axis.
pub fn head_rotation(yaw: f64, pitch: f64) -> Matrix3<f64> {
    let (sy, cy) = yaw.sin_cos();
    let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
    // Rotation about y by -pitch so that a positive pitch lifts +x towards +z.
    let (sp, cp) = (-pitch).sin_cos();
    let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    rz * ry
}

/// Re-expresses a world-frame direction in the frame of a head rotated by
/// `yaw` and `pitch`. Radius is preserved.
pub fn rotate_to_head_frame(dir: &SphericalDirection, yaw: f64, pitch: f64) -> SphericalDirection {
    let v = head_rotation(yaw, pitch).transpose() * dir.unit_vector();
    let mut out = SphericalDirection::from_vector(v);
    out.radius = dir.radius;
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaperProfile {
    None,
    /// Half-cosine ramp over the top `k` degrees.
    HalfCosine(usize),
}

impl Default for TaperProfile {
    fn default() -> Self {
        TaperProfile::HalfCosine(3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaperWeights {
    pub order: usize,
    pub per_order_gain: Vec<f64>,
}

impl TaperWeights {
    pub fn ones(order: usize) -> Self {
        Self {
            order,
            per_order_gain: vec![1.0; order + 1],
        }
    }

    /// Gain for each ACN channel.
    pub fn per_channel(&self) -> Vec<f64> {
        (0..channel_count(self.order))
            .map(|c| self.per_order_gain[acn_degree(c)])
            .collect()
    }
}

/// Per-degree gains. With `HalfCosine(k)`, degree `n = order - k + j`
/// (`j = 1..=k`) gets `cos^2(pi/2 * j / (k + 0.5))`; lower degrees get 1.
pub fn taper_weights(order: usize, profile: TaperProfile) -> Result<TaperWeights> {
    if order < 1 {
        return Err(invalid("taper order must be >= 1"));
    }
    let k = match profile {
        TaperProfile::None => 0,
        TaperProfile::HalfCosine(k) => k,
    };
    if k > order {
        return Err(invalid(format!(
            "taper covers {k} degrees but order is {order}"
        )));
    }
    let per_order_gain = (0..=order)
        .map(|n| {
            if n + k <= order {
                1.0
            } else {
                let j = (n + k - order) as f64;
                (FRAC_PI_2 * j / (k as f64 + 0.5)).cos().powi(2)
            }
        })
        .collect();
    Ok(TaperWeights {
        order,
        per_order_gain,
    })
}

/// SN3D to N3D factor for degree `n`: `sqrt(2n + 1)`.
pub fn n3d_factor(n: usize) -> f64 {
    ((2 * n + 1) as f64).sqrt()
}

pub fn sn3d_to_n3d(v: &ShVector) -> ShVector {
    ShVector {
        order: v.order,
        coeffs: v
            .coeffs
            .iter()
            .enumerate()
            .map(|(c, x)| x * n3d_factor(acn_degree(c)))
            .collect(),
    }
}

pub fn n3d_to_sn3d(v: &ShVector) -> ShVector {
    ShVector {
        order: v.order,
        coeffs: v
            .coeffs
            .iter()
            .enumerate()
            .map(|(c, x)| x / n3d_factor(acn_degree(c)))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn zeroth_order_is_constant() {
        for (az, el) in [(0.0, 0.0), (1.0, 0.3), (-2.5, -1.2)] {
            let y = eval_real_sh(0, &SphericalDirection::new(az, el));
            assert_eq!(y.coeffs, vec![1.0]);
        }
    }

    #[test]
    fn first_order_frontal() {
        let y = eval_real_sh(1, &SphericalDirection::new(0.0, 0.0));
        assert_abs_diff_eq!(y.coeffs[1], 0.0);
        assert_abs_diff_eq!(y.coeffs[2], 0.0);
        assert_abs_diff_eq!(y.coeffs[3], 1.0);
    }

    #[test]
    fn first_order_matches_cartesian() {
        let d = SphericalDirection::new(0.7, -0.4);
        let u = d.unit_vector();
        let y = eval_real_sh(1, &d);
        assert_abs_diff_eq!(y.coeffs[1], u.y, epsilon = 1e-15);
        assert_abs_diff_eq!(y.coeffs[2], u.z, epsilon = 1e-15);
        assert_abs_diff_eq!(y.coeffs[3], u.x, epsilon = 1e-15);
    }

    #[test]
    fn second_order_closed_forms() {
        // ambiX SN3D second-order terms.
        let d = SphericalDirection::new(0.9, 0.35);
        let (az, el) = (d.azimuth, d.elevation);
        let y = eval_real_sh(2, &d);
        let k = 3f64.sqrt() / 2.0;
        assert_abs_diff_eq!(y.coeffs[4], k * (2.0 * az).sin() * el.cos().powi(2), epsilon = 1e-14);
        assert_abs_diff_eq!(y.coeffs[5], k * az.sin() * (2.0 * el).sin(), epsilon = 1e-14);
        assert_abs_diff_eq!(y.coeffs[6], 0.5 * (3.0 * el.sin().powi(2) - 1.0), epsilon = 1e-14);
        assert_abs_diff_eq!(y.coeffs[7], k * az.cos() * (2.0 * el).sin(), epsilon = 1e-14);
        assert_abs_diff_eq!(y.coeffs[8], k * (2.0 * az).cos() * el.cos().powi(2), epsilon = 1e-14);
    }

    #[test]
    fn rotation_examples() {
        let d = rotate_to_head_frame(&SphericalDirection::from_degrees(30.0, 0.0), 30f64.to_radians(), 0.0);
        assert_abs_diff_eq!(d.azimuth, 0.0, epsilon = 1e-12);
        let d = rotate_to_head_frame(&SphericalDirection::from_degrees(0.0, 0.0), 0.0, 10f64.to_radians());
        assert_abs_diff_eq!(d.elevation_deg(), -10.0, epsilon = 1e-10);
        let orig = SphericalDirection::new(1.1, 0.2).with_radius(2.5);
        let same = rotate_to_head_frame(&orig, 0.0, 0.0);
        assert_abs_diff_eq!(same.azimuth, orig.azimuth, epsilon = 1e-12);
        assert_abs_diff_eq!(same.elevation, orig.elevation, epsilon = 1e-12);
        assert_eq!(same.radius, 2.5);
    }

    #[test]
    fn pitch_example_matches_matrix_oracle() {
        // Independent oracle: explicit rotation about y by +pitch applied to the
        // world vector (inverse of a nose-up head rotation).
        let p = 10f64.to_radians();
        let v = Vector3::new(1.0, 0.0, 0.0);
        let inv = Matrix3::new(p.cos(), 0.0, p.sin(), 0.0, 1.0, 0.0, -p.sin(), 0.0, p.cos());
        let want = inv * v;
        let got = rotate_to_head_frame(&SphericalDirection::new(0.0, 0.0), 0.0, p).unit_vector();
        assert_abs_diff_eq!((want - got).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn taper_examples() {
        let none = taper_weights(10, TaperProfile::None).unwrap();
        assert_eq!(none.per_order_gain, vec![1.0; 11]);
        let t = taper_weights(10, TaperProfile::HalfCosine(3)).unwrap();
        assert!(t.per_order_gain[..=7].iter().all(|g| *g == 1.0));
        let want = (FRAC_PI_2 * 3.0 / 3.5).cos().powi(2);
        assert_abs_diff_eq!(t.per_order_gain[10], want, epsilon = 1e-15);
        for w in t.per_order_gain.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(taper_weights(10, TaperProfile::HalfCosine(11)).is_err());
        assert!(taper_weights(0, TaperProfile::None).is_err());
        let full = taper_weights(3, TaperProfile::HalfCosine(3)).unwrap();
        assert_eq!(full.per_order_gain[0], 1.0);
    }

    #[test]
    fn wrap_angle_range() {
        assert_abs_diff_eq!(wrap_angle(PI), PI);
        assert_abs_diff_eq!(wrap_angle(-PI), PI);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn rotation_preserves_angles(
            az1 in -3.1f64..3.1, el1 in -1.5f64..1.5,
            az2 in -3.1f64..3.1, el2 in -1.5f64..1.5,
            yaw in -3.1f64..3.1, pitch in -1.5f64..1.5,
        ) {
            let a = SphericalDirection::new(az1, el1);
            let b = SphericalDirection::new(az2, el2);
            let ra = rotate_to_head_frame(&a, yaw, pitch).unit_vector();
            let rb = rotate_to_head_frame(&b, yaw, pitch).unit_vector();
            prop_assert!((ra.norm() - 1.0).abs() < 1e-12);
            prop_assert!((ra.dot(&rb) - a.unit_vector().dot(&b.unit_vector())).abs() < 1e-12);
        }

        #[test]
        fn n3d_round_trip(az in -3.1f64..3.1, el in -1.5f64..1.5) {
            let y = eval_real_sh(6, &SphericalDirection::new(az, el));
            let back = n3d_to_sn3d(&sn3d_to_n3d(&y));
            for (a, b) in y.coeffs.iter().zip(&back.coeffs) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
        }

        #[test]
        fn sn3d_addition_theorem(az1 in -3.1f64..3.1, el1 in -1.5f64..1.5, az2 in -3.1f64..3.1, el2 in -1.5f64..1.5) {
            // sum_m Y_nm(a) Y_nm(b) = P_n(cos gamma) for SN3D.
            let a = SphericalDirection::new(az1, el1);
            let b = SphericalDirection::new(az2, el2);
            let ya = eval_real_sh(4, &a);
            let yb = eval_real_sh(4, &b);
            let cg = a.unit_vector().dot(&b.unit_vector());
            let legendre = [1.0, cg, 0.5 * (3.0 * cg * cg - 1.0), 0.5 * (5.0 * cg.powi(3) - 3.0 * cg),
                (35.0 * cg.powi(4) - 30.0 * cg * cg + 3.0) / 8.0];
            for n in 0..=4usize {
                let s: f64 = (-(n as i64)..=n as i64).map(|m| ya.coeffs[acn(n, m)] * yb.coeffs[acn(n, m)]).sum();
                prop_assert!((s - legendre[n]).abs() < 1e-12);
            }
        }
    }
}
