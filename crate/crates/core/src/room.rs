//! Shoebox image-source simulator producing spherical-harmonic (Ambisonics)
//! room impulse responses.
//!
//! Every image source adds an impulse of amplitude `beta^k / (4 pi d)` at
//! delay `d / c`, spread over the ACN channels by the real SH gains of its
//! arrival direction expressed in the head frame.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dsp::SincInterpolator;
use crate::error::{invalid, Error, Result};
use crate::sh::{eval_real_sh_into, head_rotation};
use crate::signal::{channel_count, AmbiSignal};

pub const SPEED_OF_SOUND: f64 = 343.0;
pub const DEFAULT_EAR_DISTANCE: f64 = 0.175;
/// Image enumeration covers travel times up to this multiple of RT60.
pub const RIR_LENGTH_FACTOR: f64 = 1.2;
const SABINE_CONSTANT: f64 = 0.161;
/// Half width (taps per side) of the fractional-delay kernel; 32 taps total.
const SINC_HALF_TAPS: usize = 16;

pub type Position = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub dims: [f64; 3],
    pub rt60: f64,
}

impl RoomSpec {
    pub fn new(dims: [f64; 3], rt60: f64) -> Result<Self> {
        let room = Self { dims, rt60 };
        room.validate()?;
        Ok(room)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(invalid(format!("room dimensions must be > 0: {:?}", self.dims)));
        }
        if !(self.rt60 > 0.0) || !self.rt60.is_finite() {
            return Err(invalid(format!("rt60 must be > 0, got {}", self.rt60)));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dims;
        2.0 * (x * y + y * z + x * z)
    }

    /// Strictly inside the box.
    pub fn contains(&self, p: &Position) -> bool {
        p.iter().zip(&self.dims).all(|(v, d)| *v > 0.0 && *v < *d)
    }

    fn check_inside(&self, what: &'static str, p: &Position) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::OutsideRoom {
                what,
                pos: *p,
                dims: self.dims,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadPose {
    pub position: Position,
    /// Radians, rotation about +z.
    pub yaw: f64,
    /// Radians, nose-up positive.
    pub pitch: f64,
    pub ear_distance: f64,
}

impl HeadPose {
    pub fn new(position: Position, yaw: f64, pitch: f64) -> Self {
        Self {
            position,
            yaw,
            pitch,
            ear_distance: DEFAULT_EAR_DISTANCE,
        }
    }
}

/// Wall absorption model used to invert a target RT60.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AbsorptionModel {
    /// `alpha = 0.161 V / (S T)`; fails when `alpha > 1`.
    Sabine,
    /// `alpha = 1 - exp(-0.161 V / (S T))`; always in (0, 1).
    Eyring,
    /// Reflectivity searched so that the simulated omnidirectional response
    /// between two canonical points of the room decays with the target T30.
    #[default]
    Calibrated,
    /// Fixed pressure reflection coefficient in [0, 1].
    Reflectivity(f64),
}

/// Uniform pressure reflection coefficient `sqrt(1 - alpha)` for the room.
pub fn rt60_to_reflectivity(room: &RoomSpec, model: AbsorptionModel) -> Result<f64> {
    room.validate()?;
    let x = SABINE_CONSTANT * room.volume() / (room.surface() * room.rt60);
    let alpha = match model {
        AbsorptionModel::Sabine => x,
        AbsorptionModel::Eyring => 1.0 - (-x).exp(),
        AbsorptionModel::Calibrated => return Ok(calibrate_reflectivity(room)),
        AbsorptionModel::Reflectivity(beta) => {
            if !(0.0..=1.0).contains(&beta) {
                return Err(invalid(format!("reflectivity must be in [0, 1], got {beta}")));
            }
            return Ok(beta);
        }
    };
    if alpha > 1.0 {
        return Err(invalid(format!(
            "rt60 {} s is too short for a {:?} m room (Sabine absorption {alpha:.3} > 1)",
            room.rt60, room.dims
        )));
    }
    Ok((1.0 - alpha).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RirMode {
    DirectOnly,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayInterpolation {
    #[default]
    Nearest,
    /// 32-tap Kaiser-windowed sinc.
    Sinc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub order: usize,
    pub fs: f64,
    pub mode: RirMode,
    pub interpolation: DelayInterpolation,
    pub absorption: AbsorptionModel,
}

impl SimulationOptions {
    pub fn new(order: usize, fs: f64, mode: RirMode) -> Self {
        Self {
            order,
            fs,
            mode,
            interpolation: DelayInterpolation::Nearest,
            absorption: AbsorptionModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbiRir {
    pub mode: RirMode,
    pub signal: AmbiSignal,
}

impl AmbiRir {
    pub fn order(&self) -> usize {
        self.signal.order
    }

    pub fn fs(&self) -> f64 {
        self.signal.fs
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.signal.channels
    }
}

/// RIR length in samples shared by both modes, so the direct-only response
/// is a sample-exact prefix component of the full one.
fn rir_length(room: &RoomSpec, direct_distance: f64, fs: f64) -> usize {
    let decay = (RIR_LENGTH_FACTOR * room.rt60 * fs).ceil() as usize;
    let direct = (direct_distance / SPEED_OF_SOUND * fs).ceil() as usize;
    decay.max(direct) + 2 * SINC_HALF_TAPS + 1
}

/// Simulates the SH-domain impulse response from `source` to `receiver`,
/// with arrival directions rotated into the frame of `head`.
pub fn simulate_ambi_rir(
    room: &RoomSpec,
    source: &Position,
    receiver: &Position,
    head: &HeadPose,
    opts: &SimulationOptions,
) -> Result<AmbiRir> {
    room.validate()?;
    room.check_inside("source", source)?;
    room.check_inside("receiver", receiver)?;
    if !(opts.fs > 0.0) {
        return Err(invalid("sample rate must be > 0"));
    }
    let src = Vector3::from(*source);
    let rcv = Vector3::from(*receiver);
    let direct_distance = (src - rcv).norm();
    if direct_distance <= 1e-9 {
        return Err(invalid("source and receiver coincide"));
    }
    let beta = rt60_to_reflectivity(room, opts.absorption)?;
    let len = rir_length(room, direct_distance, opts.fs);
    let nch = channel_count(opts.order);
    let mut channels = vec![vec![0.0; len]; nch];
    let to_head = head_rotation(head.yaw, head.pitch).transpose();
    let max_dist = match opts.mode {
        RirMode::DirectOnly => direct_distance,
        RirMode::Full => (RIR_LENGTH_FACTOR * room.rt60 * SPEED_OF_SOUND).max(direct_distance),
    };
    let interp = SincInterpolator::new(SINC_HALF_TAPS, 1.0);
    let mut sh = vec![0.0; nch];
    let mut emit = |image: Vector3<f64>, reflections: u32| {
        let v = image - rcv;
        let d = v.norm();
        let amp = beta.powi(reflections as i32) / (4.0 * std::f64::consts::PI * d);
        let local = to_head * v;
        let az = local.y.atan2(local.x);
        let el = (local.z / d).clamp(-1.0, 1.0).asin();
        eval_real_sh_into(opts.order, az, el, &mut sh);
        let t = d / SPEED_OF_SOUND * opts.fs;
        match opts.interpolation {
            DelayInterpolation::Nearest => {
                let n = t.round() as usize;
                if n < len {
                    for (ch, g) in channels.iter_mut().zip(&sh) {
                        ch[n] += amp * g;
                    }
                }
            }
            DelayInterpolation::Sinc => {
                let lo = (t - SINC_HALF_TAPS as f64).ceil().max(0.0) as usize;
                let hi = ((t + SINC_HALF_TAPS as f64).floor() as usize).min(len - 1);
                for n in lo..=hi {
                    let k = amp * interp.kernel(n as f64 - t);
                    if k != 0.0 {
                        for (ch, g) in channels.iter_mut().zip(&sh) {
                            ch[n] += k * g;
                        }
                    }
                }
            }
        }
    };

    match opts.mode {
        RirMode::DirectOnly => emit(src, 0),
        RirMode::Full => for_each_image(room, &src, &rcv, max_dist, |p, k| emit(p, k)),
    }
    Ok(AmbiRir {
        mode: opts.mode,
        signal: AmbiSignal {
            order: opts.order,
            fs: opts.fs,
            channels,
        },
    })
}

/// Left and right ear positions: head position offset by half the ear
/// distance along the rotated interaural (+y) axis.
pub fn ear_positions(head: &HeadPose, room: &RoomSpec) -> Result<(Position, Position)> {
    if !(head.ear_distance > 0.0) {
        return Err(invalid("ear distance must be > 0"));
    }
    let axis = head_rotation(head.yaw, head.pitch) * Vector3::new(0.0, 1.0, 0.0);
    let center = Vector3::from(head.position);
    let half = 0.5 * head.ear_distance;
    let left: Position = (center + axis * half).into();
    let right: Position = (center - axis * half).into();
    room.check_inside("left ear", &left)?;
    room.check_inside("right ear", &right)?;
    Ok((left, right))
}

/// Sample rate of the calibration simulation.
const CALIBRATION_FS: f64 = 16_000.0;
/// Range in dB of the attenuation per reflection scanned by the calibration.
const CALIBRATION_ATTEN_DB: (f64, f64) = (1e-3, 60.0);
const CALIBRATION_GRID: usize = 40;
const CALIBRATION_REFINE: usize = 20;

/// Receiver height and source distance of the calibration geometry.
const CALIBRATION_HEIGHT: f64 = 1.5;
const CALIBRATION_DISTANCE: f64 = 1.75;

/// Calibration geometry: receiver at the horizontal room center at ear height,
/// sources on a horizontal circle around it at four azimuths.
fn calibration_points(room: &RoomSpec) -> (Vec<Vector3<f64>>, Vector3<f64>) {
    let [x, y, z] = room.dims;
    let rcv = Vector3::new(x / 2.0, y / 2.0, CALIBRATION_HEIGHT.min(z / 2.0));
    let r = CALIBRATION_DISTANCE.min(0.4 * x.min(y));
    let srcs = (0..4)
        .map(|i| {
            let a = i as f64 * std::f64::consts::FRAC_PI_2;
            rcv + Vector3::new(r * a.cos(), r * a.sin(), 0.0)
        })
        .collect();
    (srcs, rcv)
}

/// Bisection on the reflectivity so that the T30 of the omnidirectional
/// energy response, pooled over the calibration sources, equals `room.rt60`.
/// Estimates that do not exist (too little decay range) count as too short.
fn calibrate_reflectivity(room: &RoomSpec) -> f64 {
    let (srcs, rcv) = calibration_points(room);
    let fs = CALIBRATION_FS;
    let dist = srcs[0].metric_distance(&rcv);
    let len = rir_length(room, dist, fs);
    let max_dist = (RIR_LENGTH_FACTOR * room.rt60 * SPEED_OF_SOUND).max(dist);
    // Per source: (sample index, reflection count, 1/(4 pi d)) of every image.
    let images: Vec<Vec<(usize, u32, f64)>> = srcs
        .iter()
        .map(|src| {
            let mut list = Vec::new();
            for_each_image(room, src, &rcv, max_dist, |p, k| {
                let d = (p - rcv).norm();
                let n = (d / SPEED_OF_SOUND * fs).round() as usize;
                if n < len {
                    list.push((n, k, 1.0 / (4.0 * std::f64::consts::PI * d)));
                }
            });
            list
        })
        .collect();
    let mut ir = vec![0.0; len];
    let mut energy = vec![0.0; len];
    let mut t30 = |beta: f64| -> f64 {
        energy.iter_mut().for_each(|v| *v = 0.0);
        for list in &images {
            ir.iter_mut().for_each(|v| *v = 0.0);
            for &(n, k, a) in list {
                ir[n] += a * beta.powi(k as i32);
            }
            for (e, v) in energy.iter_mut().zip(&ir) {
                *e += v * v;
            }
        }
        let pooled: Vec<f64> = energy.iter().map(|e| e.sqrt()).collect();
        estimate_rt60(&pooled, fs).unwrap_or(0.0)
    };
    // The truncated T30 is neither monotone nor unbounded in the reflectivity.
    // Scan the attenuation per reflection upwards on a log grid and take the
    // first crossing of the target (the reverberant branch), refined by
    // bisection. Without a crossing, the grid point closest in log ratio wins.
    let target = room.rt60;
    let grid: Vec<f64> = (0..CALIBRATION_GRID)
        .map(|i| {
            let f = i as f64 / (CALIBRATION_GRID - 1) as f64;
            CALIBRATION_ATTEN_DB.0 * (CALIBRATION_ATTEN_DB.1 / CALIBRATION_ATTEN_DB.0).powf(f)
        })
        .collect();
    let beta = |atten_db: f64| 10f64.powf(-atten_db / 20.0);
    let times: Vec<f64> = grid.iter().map(|a| t30(beta(*a))).collect();
    if let Some(i) = (1..grid.len()).find(|&i| times[i - 1] >= target && times[i] < target) {
        let (mut lo, mut hi) = (grid[i - 1], grid[i]);
        for _ in 0..CALIBRATION_REFINE {
            let mid = (lo * hi).sqrt();
            if t30(beta(mid)) >= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return beta((lo * hi).sqrt());
    }
    let cost = |t: f64| if t > 0.0 { (t / target).ln().abs() } else { f64::INFINITY };
    let best = (0..grid.len())
        .min_by(|i, j| cost(times[*i]).total_cmp(&cost(times[*j])))
        .unwrap_or(0);
    beta(grid[best])
}

/// Visits every image source within `max_dist` of `rcv` with its reflection count.
fn for_each_image(
    room: &RoomSpec,
    src: &Vector3<f64>,
    rcv: &Vector3<f64>,
    max_dist: f64,
    mut visit: impl FnMut(Vector3<f64>, u32),
) {
    let dims = room.dims;
    let bound = |axis: usize| (max_dist / (2.0 * dims[axis])).ceil() as i64 + 1;
    let (bx, by, bz) = (bound(0), bound(1), bound(2));
    let r2 = max_dist * max_dist;
    for nx in -bx..=bx {
        for ux in 0..2i64 {
            let px = (1 - 2 * ux) as f64 * src.x + 2.0 * nx as f64 * dims[0];
            let kx = (nx - ux).unsigned_abs() + nx.unsigned_abs();
            let dx = px - rcv.x;
            if dx * dx > r2 {
                continue;
            }
            for ny in -by..=by {
                for uy in 0..2i64 {
                    let py = (1 - 2 * uy) as f64 * src.y + 2.0 * ny as f64 * dims[1];
                    let ky = (ny - uy).unsigned_abs() + ny.unsigned_abs();
                    let dy = py - rcv.y;
                    if dx * dx + dy * dy > r2 {
                        continue;
                    }
                    for nz in -bz..=bz {
                        for uz in 0..2i64 {
                            let pz = (1 - 2 * uz) as f64 * src.z + 2.0 * nz as f64 * dims[2];
                            let kz = (nz - uz).unsigned_abs() + nz.unsigned_abs();
                            let dz = pz - rcv.z;
                            if dx * dx + dy * dy + dz * dz > r2 {
                                continue;
                            }
                            visit(Vector3::new(px, py, pz), (kx + ky + kz) as u32);
                        }
                    }
                }
            }
        }
    }
}

/// Backward-integrated energy decay curve in dB (0 dB at the start).
pub fn schroeder_curve(ir: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut edc: Vec<f64> = ir
        .iter()
        .rev()
        .map(|v| {
            acc += v * v;
            acc
        })
        .collect();
    edc.reverse();
    let total = edc.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    edc.iter()
        .map(|e| 10.0 * (e / total).max(1e-300).log10())
        .collect()
}

/// T30-style reverberation time. The decay curve is integrated from just
/// after the direct sound (largest magnitude sample plus the interpolation
/// kernel half width); samples between its first -5 dB and first -35 dB
/// crossings are fitted by least squares and the slope extrapolated to 60 dB.
/// `None` when that interval holds fewer than two samples.
pub fn estimate_rt60(ir: &[f64], fs: f64) -> Option<f64> {
    let peak = ir
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))?
        .0;
    let start = (peak + SINC_HALF_TAPS + 1).min(ir.len());
    let edc = schroeder_curve(&ir[start..]);
    let first_below = |db: f64| edc.iter().position(|v| *v <= db);
    let (a, b) = (first_below(-5.0)?, first_below(-35.0)?);
    if b < a + 1 {
        return None;
    }
    let pts = &edc[a..=b];
    let n = pts.len() as f64;
    let mt = (a + b) as f64 / 2.0;
    let md = pts.iter().sum::<f64>() / n;
    let num: f64 = pts.iter().enumerate().map(|(i, d)| ((a + i) as f64 - mt) * (d - md)).sum();
    let den: f64 = (a..=b).map(|i| (i as f64 - mt).powi(2)).sum();
    let slope = num / den * fs;
    if !(slope < 0.0) {
        return None;
    }
    Some(-60.0 / slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn frontal_setup(distance: f64) -> (RoomSpec, Position, HeadPose) {
        let room = RoomSpec::new([10.0, 8.0, 4.0], 0.4).unwrap();
        let head = HeadPose::new([3.0, 4.0, 1.5], 0.0, 0.0);
        let src = [3.0 + distance, 4.0, 1.5];
        (room, src, head)
    }

    #[test]
    fn sabine_example() {
        let room = RoomSpec::new([5.0, 4.0, 3.0], 0.3).unwrap();
        let alpha = 0.161 * 60.0 / (94.0 * 0.3);
        assert_abs_diff_eq!(alpha, 0.3426, epsilon = 1e-4);
        let beta = rt60_to_reflectivity(&room, AbsorptionModel::Sabine).unwrap();
        assert_abs_diff_eq!(beta, (1.0f64 - alpha).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(beta, 0.8108, epsilon = 1e-4);
    }

    #[test]
    fn sabine_boundary_and_rejection() {
        let dims = [5.0, 4.0, 3.0];
        let t = 0.161 * 60.0 / 94.0;
        let room = RoomSpec::new(dims, t).unwrap();
        assert_abs_diff_eq!(
            rt60_to_reflectivity(&room, AbsorptionModel::Sabine).unwrap(),
            0.0,
            epsilon = 1e-7
        );
        let short = RoomSpec::new(dims, t * 0.5).unwrap();
        assert!(rt60_to_reflectivity(&short, AbsorptionModel::Sabine).is_err());
        let eyring = rt60_to_reflectivity(&short, AbsorptionModel::Eyring).unwrap();
        assert!(eyring > 0.0 && eyring < 1.0);
    }

    #[test]
    fn direct_only_free_field() {
        let (room, src, head) = frontal_setup(1.0);
        let fs = 48_000.0;
        let rir = simulate_ambi_rir(&room, &src, &head.position, &head, &SimulationOptions::new(1, fs, RirMode::DirectOnly)).unwrap();
        let n = (fs / SPEED_OF_SOUND).round() as usize;
        let w = &rir.channels()[0];
        assert_abs_diff_eq!(w[n], 1.0 / (4.0 * PI), epsilon = 1e-12);
        assert_eq!(w.iter().filter(|v| **v != 0.0).count(), 1);
        assert!(rir.channels()[1].iter().all(|v| v.abs() < 1e-15));
        assert!(rir.channels()[2].iter().all(|v| v.abs() < 1e-15));

        let (room, src2, head) = frontal_setup(2.0);
        let rir2 = simulate_ambi_rir(&room, &src2, &head.position, &head, &SimulationOptions::new(1, fs, RirMode::DirectOnly)).unwrap();
        let peak1 = w.iter().cloned().fold(0.0, f64::max);
        let peak2 = rir2.channels()[0].iter().cloned().fold(0.0, f64::max);
        assert_abs_diff_eq!(peak2, peak1 / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn first_order_images_in_cube() {
        let room = RoomSpec::new([4.0, 4.0, 4.0], 0.3).unwrap();
        let src = [1.5, 2.0, 2.0];
        let rcv = [2.5, 2.0, 2.0];
        let head = HeadPose::new(rcv, 0.0, 0.0);
        let fs = 16_000.0;
        let beta = 0.7;
        let mut opts = SimulationOptions::new(0, fs, RirMode::Full);
        opts.absorption = AbsorptionModel::Reflectivity(beta);
        let rir = simulate_ambi_rir(&room, &src, &rcv, &head, &opts).unwrap();
        // Hand-enumerated mirror images across the six walls.
        let images = [
            [-1.5, 2.0, 2.0],
            [6.5, 2.0, 2.0],
            [1.5, -2.0, 2.0],
            [1.5, 6.0, 2.0],
            [1.5, 2.0, -2.0],
            [1.5, 2.0, 6.0],
        ];
        let w = &rir.channels()[0];
        for im in images {
            let d = ((im[0] - rcv[0]).powi(2) + (im[1] - rcv[1]).powi(2) + (im[2] - rcv[2]).powi(2)).sqrt();
            let n = (d / SPEED_OF_SOUND * fs).round() as usize;
            let near = (n - 1..=n + 1).map(|i| w[i]).fold(0.0, f64::max);
            assert!(near >= beta / (4.0 * PI * d) * 0.999, "image at {im:?} missing");
        }
    }

    #[test]
    fn direct_only_matches_full_first_arrival() {
        let (room, src, head) = frontal_setup(1.3);
        let opts = SimulationOptions::new(3, 16_000.0, RirMode::Full);
        let full = simulate_ambi_rir(&room, &src, &head.position, &head, &opts).unwrap();
        let direct = simulate_ambi_rir(&room, &src, &head.position, &head, &SimulationOptions { mode: RirMode::DirectOnly, ..opts }).unwrap();
        assert_eq!(full.signal.len(), direct.signal.len());
        let n = direct.channels()[0].iter().position(|v| *v != 0.0).unwrap();
        for (f, d) in full.channels().iter().zip(direct.channels()) {
            assert!(d[..n].iter().all(|v| *v == 0.0));
            assert_eq!(f[..n].iter().filter(|v| **v != 0.0).count(), 0);
            assert_eq!(f[n], d[n]);
        }
    }

    #[test]
    fn doubling_fs_doubles_delays() {
        let (room, src, head) = frontal_setup(1.0);
        let a = simulate_ambi_rir(&room, &src, &head.position, &head, &SimulationOptions::new(0, 8000.0, RirMode::DirectOnly)).unwrap();
        let b = simulate_ambi_rir(&room, &src, &head.position, &head, &SimulationOptions::new(0, 16000.0, RirMode::DirectOnly)).unwrap();
        let ia = a.channels()[0].iter().position(|v| *v != 0.0).unwrap();
        let ib = b.channels()[0].iter().position(|v| *v != 0.0).unwrap();
        assert!((ib as i64 - 2 * ia as i64).abs() <= 1);
        assert_eq!(a.channels()[0][ia], b.channels()[0][ib]);
    }

    #[test]
    fn sinc_interpolation_keeps_dc_gain() {
        let (room, src, head) = frontal_setup(1.01);
        let mut opts = SimulationOptions::new(0, 48_000.0, RirMode::DirectOnly);
        opts.interpolation = DelayInterpolation::Sinc;
        let rir = simulate_ambi_rir(&room, &src, &head.position, &head, &opts).unwrap();
        let sum: f64 = rir.channels()[0].iter().sum();
        assert_abs_diff_eq!(sum, 1.0 / (4.0 * PI * 1.01), epsilon = 1e-5);
    }

    #[test]
    fn ear_position_examples() {
        let room = RoomSpec::new([6.0, 5.0, 3.0], 0.3).unwrap();
        let head = HeadPose::new([3.0, 2.5, 1.5], 0.0, 0.0);
        let (l, r) = ear_positions(&head, &room).unwrap();
        assert_abs_diff_eq!(l[1] - 2.5, 0.0875, epsilon = 1e-15);
        assert_abs_diff_eq!(l[0], 3.0);
        assert_abs_diff_eq!(r[1] - 2.5, -0.0875, epsilon = 1e-15);
        let turned = HeadPose::new([3.0, 2.5, 1.5], PI / 2.0, 0.0);
        let (l, r) = ear_positions(&turned, &room).unwrap();
        assert_abs_diff_eq!(l[0], 3.0 - 0.0875, epsilon = 1e-12);
        assert_abs_diff_eq!(r[0], 3.0 + 0.0875, epsilon = 1e-12);
        let corner = HeadPose::new([0.05, 2.5, 1.5], 0.0, 0.0);
        assert!(ear_positions(&HeadPose { position: [3.0, 0.05, 1.5], ..corner }, &room).is_err());
    }

    #[test]
    fn receiver_outside_is_rejected() {
        let (room, src, head) = frontal_setup(1.0);
        let bad = [11.0, 1.0, 1.0];
        assert!(matches!(
            simulate_ambi_rir(&room, &src, &bad, &head, &SimulationOptions::new(1, 16_000.0, RirMode::Full)),
            Err(Error::OutsideRoom { .. })
        ));
    }

    #[test]
    fn fixed_reflectivity_is_validated() {
        let room = RoomSpec::new([5.0, 4.0, 3.0], 0.3).unwrap();
        assert_eq!(rt60_to_reflectivity(&room, AbsorptionModel::Reflectivity(0.4)).unwrap(), 0.4);
        assert!(rt60_to_reflectivity(&room, AbsorptionModel::Reflectivity(1.5)).is_err());
    }

    #[test]
    fn calibrated_decay_matches_target_away_from_calibration_points() {
        let room = RoomSpec::new([7.0, 5.0, 3.0], 0.3).unwrap();
        let head = HeadPose::new([2.6, 2.1, 1.2], 0.4, 0.0);
        let src = [4.1, 3.0, 1.6];
        let fs = 16_000.0;
        let rir = simulate_ambi_rir(&room, &src, &head.position, &head, &SimulationOptions::new(0, fs, RirMode::Full)).unwrap();
        let est = estimate_rt60(&rir.channels()[0], fs).unwrap();
        assert!((est / 0.3 - 1.0).abs() < 0.2, "T30 {est}");
        let edc = schroeder_curve(&rir.channels()[0]);
        assert!(edc.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn calibrated_reflectivity_grows_with_rt60() {
        let short = RoomSpec::new([7.0, 5.0, 3.0], 0.2).unwrap();
        let long = RoomSpec::new([7.0, 5.0, 3.0], 0.5).unwrap();
        let b0 = rt60_to_reflectivity(&short, AbsorptionModel::Calibrated).unwrap();
        let b1 = rt60_to_reflectivity(&long, AbsorptionModel::Calibrated).unwrap();
        assert!(0.0 < b0 && b0 < b1 && b1 < 1.0);
    }

    #[test]
    fn schroeder_of_exponential() {
        let fs = 8000.0;
        let t60 = 0.5;
        let ir: Vec<f64> = (0..8000).map(|i| 10f64.powf(-3.0 * i as f64 / fs / t60)).collect();
        let est = estimate_rt60(&ir, fs).unwrap();
        assert_abs_diff_eq!(est, t60, epsilon = 0.01);
    }
}
