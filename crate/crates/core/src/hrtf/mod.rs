//! HRTF sets and their conditioning: direct-path cropping, low-frequency
//! extension and the coupling compensation filter.

mod compensation;
mod container;
pub mod synth;

pub use compensation::{
    compensation_target, coupling_compensation_fit, coupling_compensation_fit_at, fit_iir_magnitude, IirFilter,
    DEFAULT_COMPENSATION_ORDER,
};
pub use container::{read_hrtf_dir, read_hrtf_interleaved, write_hrtf_dir, write_hrtf_interleaved};

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{fade_out, irfft, minimum_phase, next_pow2, rfft, unwrap_phase};
use crate::error::{invalid, Error, Result};
use crate::sh::{default_weights, SphereGrid};
use crate::sh::SphericalDirection;

/// Length of the raised-cosine fade applied by [`crop_direct`].
pub const CROP_FADE_LEN: usize = 16;
/// An IR onset is the first sample within this many dB of its peak.
pub const ONSET_THRESHOLD_DB: f64 = -20.0;

/// Descriptive metadata carried with a set. Measurement distance and the
/// original IR length have no defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HrtfMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement_distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured_ir_length: Option<usize>,
    /// Length set by a previous [`crop_direct`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cropped_to: Option<usize>,
    /// Frequency used by a previous [`lfe_extend`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lfe_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HrtfSet {
    pub fs: f64,
    pub directions: Vec<SphericalDirection>,
    pub left: Vec<Vec<f64>>,
    pub right: Vec<Vec<f64>>,
    /// Positive quadrature weights summing to 4 pi.
    pub weights: Vec<f64>,
    pub meta: HrtfMetadata,
}

impl HrtfSet {
    /// Builds a validated set. Without weights, the Lebedev weights are used
    /// for the 50-point Lebedev grid and Voronoi cell areas otherwise.
    pub fn new(
        fs: f64,
        directions: Vec<SphericalDirection>,
        left: Vec<Vec<f64>>,
        right: Vec<Vec<f64>>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        let weights = weights.unwrap_or_else(|| default_weights(&directions));
        let set = Self {
            fs,
            directions,
            left,
            right,
            weights,
            meta: HrtfMetadata::default(),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn from_grid(fs: f64, grid: &SphereGrid, left: Vec<Vec<f64>>, right: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(fs, grid.directions.clone(), left, right, Some(grid.weights.clone()))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.directions.len();
        if n == 0 {
            return Err(Error::Data("HRTF set has no directions".into()));
        }
        if !(self.fs > 0.0) {
            return Err(Error::Data(format!("HRTF sample rate must be > 0, got {}", self.fs)));
        }
        if self.left.len() != n || self.right.len() != n || self.weights.len() != n {
            return Err(Error::Data(format!(
                "HRTF set has {n} directions but {} left, {} right IRs and {} weights",
                self.left.len(),
                self.right.len(),
                self.weights.len()
            )));
        }
        let len = self.left[0].len();
        if len == 0 || self.left.iter().chain(&self.right).any(|ir| ir.len() != len) {
            return Err(Error::Data("HRTF impulse responses must share one non-zero length".into()));
        }
        if self.weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Data("quadrature weights must be > 0".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn ir_len(&self) -> usize {
        self.left.first().map_or(0, Vec::len)
    }

    fn map_irs(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> HrtfSet {
        HrtfSet {
            fs: self.fs,
            directions: self.directions.clone(),
            left: self.left.iter().map(|ir| f(ir)).collect(),
            right: self.right.iter().map(|ir| f(ir)).collect(),
            weights: self.weights.clone(),
            meta: self.meta.clone(),
        }
    }
}

/// Index of the first sample within [`ONSET_THRESHOLD_DB`] of the peak.
pub fn onset(ir: &[f64]) -> Option<usize> {
    let peak = ir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return None;
    }
    let thr = peak * 10f64.powf(ONSET_THRESHOLD_DB / 20.0);
    ir.iter().position(|v| v.abs() >= thr)
}

/// Truncates every IR to `max_len` with a raised-cosine fade over the final
/// 16 samples. A set already cropped to `max_len` is returned unchanged.
pub fn crop_direct(set: &HrtfSet, max_len: usize) -> Result<HrtfSet> {
    set.validate()?;
    if set.meta.cropped_to == Some(max_len) && set.ir_len() == max_len {
        return Ok(set.clone());
    }
    if max_len == 0 || max_len > set.ir_len() {
        return Err(invalid(format!(
            "crop length {max_len} must be in 1..={}",
            set.ir_len()
        )));
    }
    for (i, ir) in set.left.iter().chain(&set.right).enumerate() {
        if let Some(on) = onset(ir) {
            if on >= max_len {
                return Err(invalid(format!(
                    "crop length {max_len} cuts before the onset ({on}) of IR {}",
                    i % set.len()
                )));
            }
        }
    }
    let fade_len = CROP_FADE_LEN.min(max_len);
    let fade = fade_out(fade_len);
    let mut out = set.map_irs(|ir| {
        let mut v = ir[..max_len].to_vec();
        for (s, g) in v[max_len - fade_len..].iter_mut().zip(&fade) {
            *s *= g;
        }
        v
    });
    out.meta.cropped_to = Some(max_len);
    Ok(out)
}

/// Upper edge of the crossfade as a ratio of `f_lo` (one third of an octave).
const LFE_CROSSFADE_RATIO: f64 = 1.259_921_049_894_873_2;

/// Replaces the magnitude below `f_lo` by the mean magnitude over
/// `[f_lo, 2 f_lo]`, crossfaded over the third octave above `f_lo`. The new
/// magnitude gets its minimum phase plus the IR's excess phase; below the
/// crossfade the excess phase is continued as the bulk delay fitted over
/// `[f_lo, 2 f_lo]`. Outputs have length `max(2 * len, 8 fs / f_lo)` rounded
/// up to a power of two.
pub fn lfe_extend(set: &HrtfSet, f_lo: f64) -> Result<HrtfSet> {
    set.validate()?;
    if !(f_lo > 0.0) || 2.0 * f_lo >= set.fs / 2.0 {
        return Err(invalid(format!(
            "LFE frequency {f_lo} Hz must satisfy 0 < 2 f_lo < fs/2 = {}",
            set.fs / 2.0
        )));
    }
    let n = next_pow2((2 * set.ir_len()).max((8.0 * set.fs / f_lo).ceil() as usize));
    let df = set.fs / n as f64;
    let band: Vec<usize> = (0..=n / 2)
        .filter(|&k| {
            let f = k as f64 * df;
            f >= f_lo && f <= 2.0 * f_lo
        })
        .collect();
    if band.len() < 2 {
        return Err(invalid("LFE band holds fewer than two frequency bins"));
    }
    let weight = |k: usize| -> f64 {
        let f = k as f64 * df;
        if f <= f_lo {
            1.0
        } else if f >= f_lo * LFE_CROSSFADE_RATIO {
            0.0
        } else {
            let x = (f / f_lo).log2() / LFE_CROSSFADE_RATIO.log2();
            0.5 * (1.0 + (std::f64::consts::PI * x).cos())
        }
    };
    let mut out = set.map_irs(|ir| extend_one(ir, n, &band, df, &weight));
    out.meta.lfe_hz = Some(f_lo);
    Ok(out)
}

fn extend_one(ir: &[f64], n: usize, band: &[usize], df: f64, weight: &dyn Fn(usize) -> f64) -> Vec<f64> {
    let spec = rfft(ir, n);
    let mag: Vec<f64> = spec.iter().map(|c| c.norm()).collect();
    let plateau = band.iter().map(|&k| mag[k]).sum::<f64>() / band.len() as f64;
    let new_mag: Vec<f64> = mag
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let w = weight(k);
            w * plateau + (1.0 - w) * m
        })
        .collect();
    let min_old = minimum_phase(&mag, n);
    let excess: Vec<f64> = spec
        .iter()
        .zip(&min_old)
        .map(|(h, m)| if m.norm() > 0.0 { (h / m).arg() } else { 0.0 })
        .collect();
    let mut excess = unwrap_phase(&excess);
    // Least-squares line over the band; shift by whole turns so its intercept
    // is near zero, then continue it below the band as a pure delay.
    let (sf, sp, sff, sfp) = band.iter().fold((0.0, 0.0, 0.0, 0.0), |acc, &k| {
        let f = k as f64 * df;
        (acc.0 + f, acc.1 + excess[k], acc.2 + f * f, acc.3 + f * excess[k])
    });
    let m = band.len() as f64;
    let slope = (m * sfp - sf * sp) / (m * sff - sf * sf);
    let intercept = (sp - slope * sf) / m;
    let turns = (intercept / (2.0 * std::f64::consts::PI)).round();
    excess.iter_mut().for_each(|p| *p -= turns * 2.0 * std::f64::consts::PI);
    let min_new = minimum_phase(&new_mag, n);
    let out: Vec<Complex64> = (0..=n / 2)
        .map(|k| {
            let w = weight(k);
            let phase = w * slope * k as f64 * df + (1.0 - w) * excess[k];
            min_new[k] * Complex64::from_polar(1.0, phase)
        })
        .collect();
    irfft(&out, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{db20, energy};
    use crate::sh::lebedev50;

    fn set_of(ir: Vec<f64>, fs: f64) -> HrtfSet {
        let g = lebedev50();
        let n = g.directions.len();
        HrtfSet::from_grid(fs, &g, vec![ir.clone(); n], vec![ir; n]).unwrap()
    }

    fn mag_db(ir: &[f64], n: usize, fs: f64, f: f64) -> f64 {
        let s = rfft(ir, n);
        db20(s[(f / fs * n as f64).round() as usize].norm())
    }

    #[test]
    fn crop_keeps_impulse_and_zero_tail() {
        let mut ir = vec![0.0; 256];
        ir[10] = 1.0;
        let out = crop_direct(&set_of(ir, 48_000.0), 64).unwrap();
        assert_eq!(out.ir_len(), 64);
        assert_eq!(out.left[0][10], 1.0);
        assert!(out.left[0].iter().enumerate().all(|(i, v)| i == 10 || *v == 0.0));
    }

    #[test]
    fn crop_removes_reflection() {
        let mut ir = vec![0.0; 512];
        for (i, v) in [0.3, 1.0, -0.6, 0.2].iter().enumerate() {
            ir[20 + i] = *v;
        }
        let direct = energy(&ir);
        ir[200] = 0.5;
        let out = crop_direct(&set_of(ir, 48_000.0), 128).unwrap();
        assert!(out.left[0][100..].iter().all(|v| v.abs() < 1e-12));
        assert!((10.0 * (energy(&out.left[0]) / direct).log10()).abs() < 0.1);
    }

    #[test]
    fn crop_is_idempotent_and_checks_onset() {
        let mut ir = vec![0.0; 300];
        ir[5] = 1.0;
        ir[100] = 0.3;
        let once = crop_direct(&set_of(ir.clone(), 48_000.0), 120).unwrap();
        assert_eq!(crop_direct(&once, 120).unwrap(), once);
        let mut late = vec![0.0; 300];
        late[150] = 1.0;
        assert!(crop_direct(&set_of(late, 48_000.0), 100).is_err());
        assert!(crop_direct(&set_of(ir, 48_000.0), 301).is_err());
    }

    #[test]
    fn lfe_of_flat_is_flat() {
        let fs = 48_000.0;
        let mut ir = vec![0.0; 256];
        ir[10] = 1.0;
        let out = lfe_extend(&set_of(ir, fs), 200.0).unwrap();
        let y = &out.left[0];
        let n = y.len();
        for f in [20.0, 100.0, 200.0, 300.0, 1000.0, 10_000.0, 20_000.0] {
            assert!(mag_db(y, n, fs, f).abs() < 0.1, "{f} Hz");
        }
        assert!((y[10] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lfe_fills_highpassed_bass() {
        let fs = 48_000.0;
        // Second-order high-pass at 200 Hz (bilinear Butterworth) applied to a delayed impulse.
        let w = (std::f64::consts::PI * 200.0 / fs).tan();
        let k = 1.0 / (1.0 + std::f64::consts::SQRT_2 * w + w * w);
        let b = [k, -2.0 * k, k];
        let a = [1.0, 2.0 * (w * w - 1.0) * k, (1.0 - std::f64::consts::SQRT_2 * w + w * w) * k];
        let mut x = vec![0.0; 4096];
        x[40] = 1.0;
        let ir = crate::dsp::iir_filter(&b, &a, &x);
        let set = set_of(ir.clone(), fs);
        let out = lfe_extend(&set, 250.0).unwrap();
        let y = &out.left[0];
        let n = y.len();
        let df = fs / n as f64;
        let spec = rfft(&ir, n);
        let band: Vec<f64> = (0..=n / 2)
            .filter(|k| (250.0..=500.0).contains(&(*k as f64 * df)))
            .map(|k| spec[k].norm())
            .collect();
        let mean = band.iter().sum::<f64>() / band.len() as f64;
        assert!((mag_db(y, n, fs, 50.0) - db20(mean)).abs() < 1.0);
        for f in [520.0, 1000.0, 5000.0, 15_000.0] {
            assert!((mag_db(y, n, fs, f) - mag_db(&ir, n, fs, f)).abs() < 0.1, "{f} Hz");
        }
        assert_eq!(out.len(), set.len());
        assert_eq!(out.fs, set.fs);
        assert!(lfe_extend(&set, 13_000.0).is_err());
    }
}
