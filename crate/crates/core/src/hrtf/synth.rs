//! Synthetic HRTF sets for tests and demos: a rigid spherical head (one-pole
//! head-shadow filter plus Woodworth delays), pure interaural delays, and
//! identical unit impulses.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::dsp::{iir_filter, SincInterpolator};
use crate::room::SPEED_OF_SOUND;
use crate::sh::SphereGrid;
use crate::sh::SphericalDirection;
use crate::signal::Ear;

use super::HrtfSet;

/// Sphere radius giving a 17.5 cm ear distance.
pub const HEAD_RADIUS: f64 = 0.0875;
/// Bulk delay added to every synthetic IR so the earliest arrival stays causal.
pub const BULK_DELAY_S: f64 = 1e-3;
const ALPHA_MIN: f64 = 0.1;
const THETA_MIN: f64 = 5.0 * PI / 6.0;
const DELAY_HALF_TAPS: usize = 16;

fn ear_axis(ear: Ear) -> Vector3<f64> {
    match ear {
        Ear::Left => Vector3::new(0.0, 1.0, 0.0),
        Ear::Right => Vector3::new(0.0, -1.0, 0.0),
    }
}

/// Angle between the source direction and the ear's interaural axis.
fn ear_angle(dir: &SphericalDirection, ear: Ear) -> f64 {
    dir.unit_vector().dot(&ear_axis(ear)).clamp(-1.0, 1.0).acos()
}

/// Arrival time at `ear` relative to the head center (Woodworth): the
/// straight-path advance `-a cos(theta) / c` on the lit side and the creeping
/// path `a (theta - pi/2) / c` on the shadowed side.
pub fn woodworth_delay(dir: &SphericalDirection, ear: Ear, radius: f64) -> f64 {
    let theta = ear_angle(dir, ear);
    if theta < PI / 2.0 {
        -radius * theta.cos() / SPEED_OF_SOUND
    } else {
        radius * (theta - PI / 2.0) / SPEED_OF_SOUND
    }
}

/// Right-ear minus left-ear arrival time; positive for sources on the left.
pub fn woodworth_itd(dir: &SphericalDirection, radius: f64) -> f64 {
    woodworth_delay(dir, Ear::Right, radius) - woodworth_delay(dir, Ear::Left, radius)
}

fn delayed_impulse(delay_samples: f64, len: usize) -> Vec<f64> {
    let k = SincInterpolator::new(DELAY_HALF_TAPS, 1.0);
    (0..len).map(|n| k.kernel(n as f64 - delay_samples)).collect()
}

/// Bilinear-transformed head-shadow filter `(1 + j alpha w / (2 w0)) / (1 + j w / (2 w0))`
/// with `w0 = c / a`.
fn head_shadow(theta: f64, radius: f64, fs: f64) -> ([f64; 2], [f64; 2]) {
    let alpha = (1.0 + ALPHA_MIN / 2.0) + (1.0 - ALPHA_MIN / 2.0) * (theta / THETA_MIN * PI).cos();
    let w0 = SPEED_OF_SOUND / radius;
    let k = 2.0 * fs;
    let (bz, pz) = (alpha / (2.0 * w0), 1.0 / (2.0 * w0));
    let a0 = pz * k + 1.0;
    (
        [(bz * k + 1.0) / a0, (1.0 - bz * k) / a0],
        [1.0, (1.0 - pz * k) / a0],
    )
}

fn build(grid: &SphereGrid, fs: f64, len: usize, shadow: bool) -> HrtfSet {
    let mut left = Vec::with_capacity(grid.directions.len());
    let mut right = Vec::with_capacity(grid.directions.len());
    for dir in &grid.directions {
        for (ear, out) in [(Ear::Left, &mut left), (Ear::Right, &mut right)] {
            let t = BULK_DELAY_S + woodworth_delay(dir, ear, HEAD_RADIUS);
            let mut ir = delayed_impulse(t * fs, len);
            if shadow {
                let (b, a) = head_shadow(ear_angle(dir, ear), HEAD_RADIUS, fs);
                ir = iir_filter(&b, &a, &ir);
            }
            out.push(ir);
        }
    }
    HrtfSet {
        fs,
        directions: grid.directions.clone(),
        left,
        right,
        weights: grid.weights.clone(),
        meta: super::HrtfMetadata {
            name: Some(if shadow { "spherical-head" } else { "pure-delay" }.into()),
            ..Default::default()
        },
    }
}

/// Rigid-sphere model: Woodworth delays and a one-pole head-shadow filter per ear.
pub fn spherical_head_set(grid: &SphereGrid, fs: f64, len: usize) -> HrtfSet {
    build(grid, fs, len, true)
}

/// Per-direction pure delays (Woodworth) with flat magnitude.
pub fn pure_delay_set(grid: &SphereGrid, fs: f64, len: usize) -> HrtfSet {
    build(grid, fs, len, false)
}

/// The same unit impulse (at sample 0) for every direction and ear.
pub fn delta_set(grid: &SphereGrid, fs: f64, len: usize) -> HrtfSet {
    let mut ir = vec![0.0; len];
    ir[0] = 1.0;
    let n = grid.directions.len();
    HrtfSet {
        fs,
        directions: grid.directions.clone(),
        left: vec![ir.clone(); n],
        right: vec![ir; n],
        weights: grid.weights.clone(),
        meta: super::HrtfMetadata {
            name: Some("delta".into()),
            ..Default::default()
        },
    }
}
