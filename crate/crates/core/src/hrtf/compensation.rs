//! Direction-independent coupling compensation: target magnitude from two
//! HRTF sets and its approximation by a stable minimum-phase IIR filter.

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{freqz, iir_filter, minimum_phase, next_pow2, rfft};
use crate::error::{invalid, Error, Result};

use super::HrtfSet;

pub const DEFAULT_COMPENSATION_ORDER: usize = 16;
/// Band over which fits are weighted and evaluated: `[100 Hz, 0.9 fs/2]`.
pub const FIT_BAND_LOW_HZ: f64 = 100.0;
pub const FIT_BAND_HIGH_FRACTION: f64 = 0.9;
const SK_ITERATIONS: usize = 12;
const MIN_TARGET_FFT: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IirFilter {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
    pub fs: f64,
}

impl IirFilter {
    pub fn identity(fs: f64) -> Self {
        Self {
            b: vec![1.0],
            a: vec![1.0],
            fs,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        iir_filter(&self.b, &self.a, x)
    }

    pub fn response(&self, f_hz: f64) -> Complex64 {
        freqz(&self.b, &self.a, 2.0 * std::f64::consts::PI * f_hz / self.fs)
    }

    pub fn poles(&self) -> Vec<Complex64> {
        poly_roots(&self.a)
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        poly_roots(&self.b)
    }

    pub fn max_pole_radius(&self) -> f64 {
        self.poles().iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.max_pole_radius() < 1.0
    }

    /// Mean absolute dB error against `target` magnitudes sampled at `freqs`,
    /// over the bins inside the fit band.
    pub fn mean_log_error_db(&self, freqs: &[f64], target: &[f64]) -> f64 {
        let hi = FIT_BAND_HIGH_FRACTION * self.fs / 2.0;
        let (sum, n) = freqs
            .iter()
            .zip(target)
            .filter(|(f, _)| **f >= FIT_BAND_LOW_HZ && **f <= hi)
            .fold((0.0, 0usize), |(s, n), (f, t)| {
                (s + (20.0 * (self.response(*f).norm() / t).log10()).abs(), n + 1)
            });
        sum / n.max(1) as f64
    }
}

/// Roots of `p[0] + p[1] z^-1 + ... + p[n] z^-n`, i.e. of the polynomial in `z`
/// with coefficients `p`. Leading zeros of `p` are skipped, trailing zeros
/// give roots at the origin.
fn poly_roots(p: &[f64]) -> Vec<Complex64> {
    let scale = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let start = match p.iter().position(|v| v.abs() > 1e-14 * scale) {
        Some(s) => s,
        None => return Vec::new(),
    };
    let p = &p[start..];
    let n = p.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let mut c = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        c[(0, j)] = -p[j + 1] / p[0];
    }
    for i in 1..n {
        c[(i, i - 1)] = 1.0;
    }
    c.complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect()
}

/// Real coefficients of `prod (1 - r z^-1)`, scaled by `lead`.
fn poly_from_roots(roots: &[Complex64], lead: f64) -> Vec<f64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (i, v) in c.iter().enumerate() {
            next[i] += v;
            next[i + 1] -= v * r;
        }
        c = next;
    }
    c.iter().map(|v| v.re * lead).collect()
}

fn reflect_inside(roots: &[Complex64]) -> Vec<Complex64> {
    roots
        .iter()
        .map(|r| if r.norm() > 1.0 { 1.0 / r.conj() } else { *r })
        .collect()
}

/// Quadrature-weighted mean over directions and both ears of the magnitude
/// ratio `|bare| / |with_ha|`, on the half spectrum of an `n`-point FFT.
pub fn compensation_target(with_ha: &HrtfSet, bare: &HrtfSet, n: usize) -> Result<Vec<f64>> {
    with_ha.validate()?;
    bare.validate()?;
    if with_ha.fs != bare.fs {
        return Err(Error::Mismatch(format!(
            "sample rates differ: {} vs {}",
            with_ha.fs, bare.fs
        )));
    }
    if with_ha.len() != bare.len()
        || with_ha
            .directions
            .iter()
            .zip(&bare.directions)
            .any(|(a, b)| a.unit_vector().metric_distance(&b.unit_vector()) > 1e-6)
    {
        return Err(Error::Mismatch("direction grids differ".into()));
    }
    let spectra = |set: &HrtfSet| -> Vec<Vec<f64>> {
        set.left
            .iter()
            .chain(&set.right)
            .map(|ir| rfft(ir, n).iter().map(|c| c.norm()).collect())
            .collect()
    };
    let w_spec = spectra(with_ha);
    let b_spec = spectra(bare);
    let peak = w_spec.iter().flatten().fold(0.0f64, |m, v| m.max(*v));
    if peak == 0.0 {
        return Err(Error::Silent("HRTF set with hearing aid"));
    }
    let floor = peak * 1e-8;
    let weights: Vec<f64> = with_ha.weights.iter().chain(&with_ha.weights).copied().collect();
    let total: f64 = weights.iter().sum();
    Ok((0..=n / 2)
        .map(|k| {
            w_spec
                .iter()
                .zip(&b_spec)
                .zip(&weights)
                .map(|((w, b), q)| q * b[k] / w[k].max(floor))
                .sum::<f64>()
                / total
        })
        .collect())
}

/// Fits a stable minimum-phase IIR filter of `order` poles and zeros to a
/// magnitude response given on the half spectrum (`0..=fs/2`, uniform bins).
///
/// The target gets its minimum phase; numerator and denominator are then
/// solved by iteratively reweighted equation-error least squares over the fit
/// band, roots outside the unit circle are mirrored inside, and the gain is
/// set by least squares on log magnitude.
pub fn fit_iir_magnitude(mag_half: &[f64], fs: f64, order: usize) -> Result<IirFilter> {
    if mag_half.len() < 2 {
        return Err(invalid("magnitude response needs at least two bins"));
    }
    if mag_half.iter().any(|m| !m.is_finite() || *m < 0.0) {
        return Err(Error::Numeric("target magnitude is not finite and non-negative".into()));
    }
    let n = 2 * (mag_half.len() - 1);
    let df = fs / n as f64;
    let h = minimum_phase(mag_half, n);
    let hi = FIT_BAND_HIGH_FRACTION * fs / 2.0;
    let bins: Vec<usize> = (0..mag_half.len())
        .filter(|&k| {
            let f = k as f64 * df;
            f >= FIT_BAND_LOW_HZ && f <= hi
        })
        .collect();
    let unknowns = 2 * order + 1;
    if 2 * bins.len() < unknowns {
        return Err(Error::Numeric(format!(
            "rank-deficient fit: {} bins in band for {unknowns} coefficients",
            bins.len()
        )));
    }
    let mut a = vec![1.0];
    let mut b = vec![1.0];
    for _ in 0..SK_ITERATIONS {
        let mut m = DMatrix::<f64>::zeros(2 * bins.len(), unknowns);
        let mut rhs = DVector::<f64>::zeros(2 * bins.len());
        for (row, &k) in bins.iter().enumerate() {
            let w = 2.0 * std::f64::consts::PI * k as f64 * df / fs;
            let s = 1.0 / freqz(&a, &[1.0], w).norm().max(1e-12);
            let hk = h[k];
            for i in 0..=order {
                let e = Complex64::from_polar(s, -w * i as f64);
                m[(2 * row, i)] = e.re;
                m[(2 * row + 1, i)] = e.im;
                if i > 0 {
                    let v = -hk * e;
                    m[(2 * row, order + i)] = v.re;
                    m[(2 * row + 1, order + i)] = v.im;
                }
            }
            rhs[2 * row] = s * hk.re;
            rhs[2 * row + 1] = s * hk.im;
        }
        let svd = m.svd(true, true);
        let smax = svd.singular_values.max();
        let tol = smax * 1e-12;
        let rank = svd.singular_values.iter().filter(|v| **v > tol).count();
        if rank < order + 1 {
            return Err(Error::Numeric(format!("rank-deficient fit (rank {rank})")));
        }
        let x = svd
            .solve(&rhs, tol)
            .map_err(|e| Error::Numeric(format!("least-squares solve failed: {e}")))?;
        b = x.rows(0, order + 1).iter().copied().collect();
        a = std::iter::once(1.0)
            .chain(x.rows(order + 1, order).iter().copied())
            .collect();
    }
    let poles = reflect_inside(&poly_roots(&a));
    let a = poly_from_roots(&poles, 1.0);
    let b_lead = b.iter().copied().find(|v| v.abs() > 0.0).unwrap_or(1.0);
    let b_start = b.iter().position(|v| v.abs() > 1e-14 * b_lead.abs()).unwrap_or(0);
    let zeros = reflect_inside(&poly_roots(&b));
    let mut b_new = vec![0.0; b_start];
    b_new.extend(poly_from_roots(&zeros, b_lead));
    b_new.resize(order + 1, 0.0);
    let mut filt = IirFilter { b: b_new, a, fs };
    let log_gain = bins
        .iter()
        .map(|&k| (mag_half[k].max(1e-300) / filt.response(k as f64 * df).norm().max(1e-300)).ln())
        .sum::<f64>()
        / bins.len() as f64;
    let g = log_gain.exp();
    filt.b.iter_mut().for_each(|v| *v *= g);
    if filt.b.iter().chain(&filt.a).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite filter coefficients".into()));
    }
    if !filt.is_stable() {
        return Err(Error::Numeric(format!(
            "fitted filter is unstable (max pole radius {})",
            filt.max_pole_radius()
        )));
    }
    Ok(filt)
}

fn target_fft_len(with_ha: &HrtfSet, bare: &HrtfSet) -> usize {
    next_pow2(with_ha.ir_len().max(bare.ir_len())).max(MIN_TARGET_FFT)
}

/// Fits the compensation filter at the HRTF sample rate.
pub fn coupling_compensation_fit(with_ha: &HrtfSet, bare: &HrtfSet, filter_order: usize) -> Result<IirFilter> {
    let n = target_fft_len(with_ha, bare);
    let target = compensation_target(with_ha, bare, n)?;
    fit_iir_magnitude(&target, with_ha.fs, filter_order)
}

/// Fits the compensation filter for use at another sample rate: the target
/// magnitude is linearly interpolated onto that rate's frequency grid (held
/// constant above the HRTF Nyquist frequency) before fitting.
pub fn coupling_compensation_fit_at(
    with_ha: &HrtfSet,
    bare: &HrtfSet,
    filter_order: usize,
    fs: f64,
) -> Result<IirFilter> {
    if !(fs > 0.0) {
        return Err(invalid("sample rate must be > 0"));
    }
    let n = target_fft_len(with_ha, bare);
    let target = compensation_target(with_ha, bare, n)?;
    let df_in = with_ha.fs / n as f64;
    let n_out = next_pow2((n as f64 * fs / with_ha.fs).round() as usize).max(MIN_TARGET_FFT);
    let df_out = fs / n_out as f64;
    let resampled: Vec<f64> = (0..=n_out / 2)
        .map(|k| {
            let pos = k as f64 * df_out / df_in;
            let i = pos.floor() as usize;
            if i + 1 >= target.len() {
                target[target.len() - 1]
            } else {
                let t = pos - i as f64;
                target[i] * (1.0 - t) + target[i + 1] * t
            }
        })
        .collect();
    fit_iir_magnitude(&resampled, fs, filter_order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hrtf::synth::spherical_head_set;
    use crate::sh::lebedev50;

    fn with_filter(set: &HrtfSet, b: &[f64], a: &[f64]) -> HrtfSet {
        let mut out = set.clone();
        for ir in out.left.iter_mut().chain(out.right.iter_mut()) {
            *ir = iir_filter(b, a, ir);
        }
        out
    }

    fn freqs(n: usize, fs: f64) -> Vec<f64> {
        (0..=n / 2).map(|k| k as f64 * fs / n as f64).collect()
    }

    #[test]
    fn identity_target_gives_flat_filter() {
        let set = spherical_head_set(&lebedev50(), 48_000.0, 256);
        let filt = coupling_compensation_fit(&set, &set, DEFAULT_COMPENSATION_ORDER).unwrap();
        for f in [50.0, 100.0, 1000.0, 8000.0, 20_000.0] {
            assert!(20.0 * filt.response(f).norm().log10() < 0.1, "{f}");
            assert!(20.0 * filt.response(f).norm().log10() > -0.1, "{f}");
        }
        assert!(filt.is_stable());
    }

    #[test]
    fn inverts_one_pole_lowpass() {
        let fs = 48_000.0;
        let bare = spherical_head_set(&lebedev50(), fs, 256);
        let p = 0.8;
        let with_ha = with_filter(&bare, &[1.0 - p], &[1.0, -p]);
        let filt = coupling_compensation_fit(&with_ha, &bare, DEFAULT_COMPENSATION_ORDER).unwrap();
        let oracle = IirFilter {
            b: vec![1.0 / (1.0 - p), -p / (1.0 - p)],
            a: vec![1.0],
            fs,
        };
        let n = 1024;
        let f = freqs(n, fs);
        let t: Vec<f64> = f.iter().map(|f| oracle.response(*f).norm()).collect();
        assert!(filt.mean_log_error_db(&f, &t) < 1.0);
        assert!(filt.max_pole_radius() < 1.0);
    }

    #[test]
    fn fit_tracks_target_within_one_db() {
        let fs = 48_000.0;
        let bare = spherical_head_set(&lebedev50(), fs, 256);
        // Resonant peak plus a shelf, as a receiver coupling might add.
        let with_ha = with_filter(&with_filter(&bare, &[1.0, -1.2, 0.72], &[1.0, -1.5, 0.85]), &[0.6, 0.2], &[1.0, -0.2]);
        let n = 1024;
        let target = compensation_target(&with_ha, &bare, n).unwrap();
        let filt = fit_iir_magnitude(&target, fs, DEFAULT_COMPENSATION_ORDER).unwrap();
        assert!(filt.mean_log_error_db(&freqs(n, fs), &target) < 1.0);
        assert!(filt.is_stable());
    }

    #[test]
    fn scale_equivariance() {
        let fs = 48_000.0;
        let bare = spherical_head_set(&lebedev50(), fs, 256);
        let with_ha = with_filter(&bare, &[0.5, 0.3], &[1.0, -0.4]);
        let f1 = coupling_compensation_fit(&with_ha, &bare, 8).unwrap();
        let g = 3.0;
        let scaled = with_filter(&bare, &[g], &[1.0]);
        let f2 = coupling_compensation_fit(&with_ha, &scaled, 8).unwrap();
        for f in [200.0, 1000.0, 6000.0, 15_000.0] {
            let d = 20.0 * (f2.response(f).norm() / (g * f1.response(f).norm())).log10();
            assert!(d.abs() < 0.05, "{f}: {d}");
        }
    }

    #[test]
    fn fit_at_other_rate() {
        let fs = 48_000.0;
        let bare = spherical_head_set(&lebedev50(), fs, 256);
        let p = 0.5;
        let with_ha = with_filter(&bare, &[1.0 - p], &[1.0, -p]);
        let filt = coupling_compensation_fit_at(&with_ha, &bare, 8, 16_000.0).unwrap();
        assert_eq!(filt.fs, 16_000.0);
        let inv = |f: f64| 1.0 / IirFilter { b: vec![1.0 - p], a: vec![1.0, -p], fs }.response(f).norm();
        for f in [200.0, 1000.0, 4000.0, 7000.0] {
            assert!((20.0 * (filt.response(f).norm() / inv(f)).log10()).abs() < 1.0, "{f}");
        }
    }

    #[test]
    fn rejects_mismatched_sets_and_tiny_spectra() {
        let set = spherical_head_set(&lebedev50(), 48_000.0, 64);
        let mut other = set.clone();
        other.fs = 44_100.0;
        assert!(coupling_compensation_fit(&set, &other, 4).is_err());
        assert!(fit_iir_magnitude(&[1.0, 1.0, 1.0], 48_000.0, 4).is_err());
    }

    #[test]
    fn roots_roundtrip() {
        let roots = [Complex64::new(0.5, 0.3), Complex64::new(0.5, -0.3), Complex64::new(-0.2, 0.0)];
        let p = poly_from_roots(&roots, 2.0);
        let mut back = poly_roots(&p);
        back.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
        assert!((back[0] - roots[2]).norm() < 1e-12);
        assert!((back[1] - roots[1]).norm() < 1e-12);
        assert!((back[2] - roots[0]).norm() < 1e-12);
    }
}
