use std::f64::consts::PI;

use nalgebra::Vector3;

use super::SphericalDirection;

/// Directions on the unit sphere with positive quadrature weights summing to 4 pi.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereGrid {
    pub directions: Vec<SphericalDirection>,
    pub weights: Vec<f64>,
}

/// The 50-point Lebedev rule (exact for polynomials up to degree 11).
pub fn lebedev50() -> SphereGrid {
    // Unit-sum weights of the four orbits.
    let a1 = 4.0 / 315.0;
    let a2 = 64.0 / 2835.0;
    let a3 = 27.0 / 1280.0;
    let b1 = 14641.0 / 725_760.0;

    let mut pts: Vec<(Vector3<f64>, f64)> = Vec::with_capacity(50);
    for axis in 0..3 {
        for s in [1.0, -1.0] {
            let mut v = Vector3::zeros();
            v[axis] = s;
            pts.push((v, a1));
        }
    }
    let h = 0.5f64.sqrt();
    for zero_axis in 0..3 {
        for s1 in [1.0, -1.0] {
            for s2 in [1.0, -1.0] {
                let mut v = Vector3::zeros();
                let others: Vec<usize> = (0..3).filter(|&a| a != zero_axis).collect();
                v[others[0]] = s1 * h;
                v[others[1]] = s2 * h;
                pts.push((v, a2));
            }
        }
    }
    let t = 1.0 / 3f64.sqrt();
    for sx in [1.0, -1.0] {
        for sy in [1.0, -1.0] {
            for sz in [1.0, -1.0] {
                pts.push((Vector3::new(sx * t, sy * t, sz * t), a3));
            }
        }
    }
    let l = 1.0 / 11f64.sqrt();
    let m = 3.0 / 11f64.sqrt();
    for big_axis in 0..3 {
        for sx in [1.0, -1.0] {
            for sy in [1.0, -1.0] {
                for sz in [1.0, -1.0] {
                    let mut v = Vector3::new(sx * l, sy * l, sz * l);
                    v[big_axis] = [sx, sy, sz][big_axis] * m;
                    pts.push((v, b1));
                }
            }
        }
    }
    SphereGrid {
        directions: pts
            .iter()
            .map(|(v, _)| SphericalDirection::from_vector(*v).with_radius(0.0))
            .collect(),
        weights: pts.iter().map(|(_, w)| w * 4.0 * PI).collect(),
    }
}

/// Approximate spherical-Voronoi cell areas for an arbitrary grid, obtained
/// by assigning a dense Fibonacci lattice to the nearest grid direction.
/// Deterministic; weights sum to 4 pi.
pub fn voronoi_weights(directions: &[SphericalDirection]) -> Vec<f64> {
    const SAMPLES: usize = 40_000;
    let grid: Vec<Vector3<f64>> = directions.iter().map(|d| d.unit_vector()).collect();
    let mut counts = vec![0usize; grid.len()];
    let golden = PI * (3.0 - 5f64.sqrt());
    for i in 0..SAMPLES {
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / SAMPLES as f64;
        let r = (1.0 - z * z).sqrt();
        let phi = golden * i as f64;
        let p = Vector3::new(r * phi.cos(), r * phi.sin(), z);
        let nearest = grid
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.dot(&p).total_cmp(&b.1.dot(&p)))
            .map(|(k, _)| k)
            .unwrap_or(0);
        counts[nearest] += 1;
    }
    counts
        .iter()
        .map(|&c| 4.0 * PI * c as f64 / SAMPLES as f64)
        .collect()
}

/// Quadrature weights for a grid: the Lebedev weights when `directions` is a
/// permutation of the 50-point Lebedev grid, Voronoi areas otherwise.
pub fn default_weights(directions: &[SphericalDirection]) -> Vec<f64> {
    let leb = lebedev50();
    if directions.len() == leb.directions.len() {
        let matched: Option<Vec<f64>> = directions
            .iter()
            .map(|d| {
                let v = d.unit_vector();
                leb.directions
                    .iter()
                    .position(|l| l.unit_vector().metric_distance(&v) < 1e-6)
                    .map(|i| leb.weights[i])
            })
            .collect();
        if let Some(w) = matched {
            return w;
        }
    }
    voronoi_weights(directions)
}
