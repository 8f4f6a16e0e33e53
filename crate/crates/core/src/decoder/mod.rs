//! Ambisonics-to-binaural decoding with magnitude least squares, and the
//! in-phase loudspeaker decoder used for the evaluation scenes.
//!
//! The binaural fit solves, per frequency bin and ear, a quadrature-weighted
//! Tikhonov-regularized least-squares problem over the HRTF grid. Below `fc`
//! the complex HRTF is matched; from `fc` upwards only its magnitude, with the
//! phase taken from the previous bin's reconstruction. Per-degree taper gains
//! are part of the model and multiplied into the final filters.

mod artifact;
mod loudspeaker;

pub use artifact::{read_decoder, write_decoder, DecoderManifest, DECODER_FORMAT, DECODER_VERSION};
pub use loudspeaker::{
    fit_inphase_decoder, fit_inphase_decoder_with, inphase_weights, normalize_feeds, pad_ambisonics_order,
    LoudspeakerLayout, LsDecoder, LsMethod, Speaker, DEFAULT_FEED_ENERGY,
};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{fade_out, irfft, next_pow2, resample, rfft};
use crate::error::{invalid, Error, Result};
use crate::hrtf::HrtfSet;
use crate::sh::{eval_real_sh, taper_weights, SphericalDirection, TaperProfile, TaperWeights};
use crate::signal::{channel_count, AmbiSignal, BinauralSignal, Ear};

pub const DEFAULT_FC: f64 = 6239.0;
pub const DEFAULT_NFFT: usize = 2048;
pub const DEFAULT_FILTER_LEN: usize = 512;
/// Tikhonov weight relative to the largest eigenvalue of the weighted normal matrix.
pub const DEFAULT_REGULARIZATION: f64 = 1e-3;
const FADE_IN_LEN: usize = 16;
const FADE_OUT_LEN: usize = 32;
/// Overlap-add transform length as a multiple of the filter length.
const BLOCK_FACTOR: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagLsOptions {
    pub order: usize,
    pub fc: f64,
    pub taper: TaperWeights,
    pub nfft: usize,
    pub filter_len: usize,
    pub regularization: f64,
}

impl MagLsOptions {
    /// Defaults: `fc` 6239 Hz, half-cosine taper over the top three degrees
    /// (fewer for low orders), 2048-point FFT, 512 taps.
    pub fn new(order: usize) -> Result<Self> {
        Ok(Self {
            order,
            fc: DEFAULT_FC,
            taper: taper_weights(order, TaperProfile::HalfCosine(3.min(order)))?,
            nfft: DEFAULT_NFFT,
            filter_len: DEFAULT_FILTER_LEN,
            regularization: DEFAULT_REGULARIZATION,
        })
    }
}

/// Per-channel, per-ear FIR filters. Outputs are delayed by `latency`
/// samples relative to the HRTFs they were fitted to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinauralDecoder {
    pub order: usize,
    pub fs: f64,
    pub filter_len: usize,
    pub left_filters: Vec<Vec<f64>>,
    pub right_filters: Vec<Vec<f64>>,
    pub fc: f64,
    pub taper: TaperWeights,
    pub regularization: f64,
    pub nfft: usize,
    pub latency: f64,
}

impl BinauralDecoder {
    pub fn validate(&self) -> Result<()> {
        let c = channel_count(self.order);
        if self.left_filters.len() != c || self.right_filters.len() != c {
            return Err(Error::Data(format!(
                "order {} decoder needs {c} filters per ear",
                self.order
            )));
        }
        if self
            .left_filters
            .iter()
            .chain(&self.right_filters)
            .any(|f| f.len() != self.filter_len || f.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Data("decoder filters must be finite and of uniform length".into()));
        }
        if !(self.fc > 0.0 && self.fc < self.fs / 2.0) {
            return Err(Error::Data(format!("fc {} outside (0, fs/2)", self.fc)));
        }
        if self.taper.order != self.order {
            return Err(Error::Data("taper order differs from decoder order".into()));
        }
        Ok(())
    }

    pub fn filters(&self, ear: Ear) -> &[Vec<f64>] {
        match ear {
            Ear::Left => &self.left_filters,
            Ear::Right => &self.right_filters,
        }
    }

    /// Binaural impulse response of a unit plane wave from `dir`.
    pub fn plane_wave_response(&self, dir: &SphericalDirection) -> BinauralSignal {
        let y = eval_real_sh(self.order, dir).coeffs;
        let mix = |filters: &[Vec<f64>]| -> Vec<f64> {
            (0..self.filter_len)
                .map(|i| filters.iter().zip(&y).map(|(f, g)| f[i] * g).sum())
                .collect()
        };
        BinauralSignal {
            fs: self.fs,
            left: mix(&self.left_filters),
            right: mix(&self.right_filters),
        }
    }

    /// The decoder at another sample rate. Filters are band-limited resampled
    /// and scaled by `fs / new_fs` so their frequency responses are kept.
    pub fn resampled(&self, new_fs: f64) -> Result<BinauralDecoder> {
        if !(new_fs > 0.0) || self.fc >= new_fs / 2.0 {
            return Err(invalid(format!(
                "cannot resample a decoder with fc {} Hz to {new_fs} Hz",
                self.fc
            )));
        }
        if new_fs == self.fs {
            return Ok(self.clone());
        }
        let gain = self.fs / new_fs;
        let conv = |filters: &[Vec<f64>]| -> Vec<Vec<f64>> {
            filters
                .iter()
                .map(|f| resample(f, self.fs, new_fs).into_iter().map(|v| v * gain).collect())
                .collect()
        };
        let left_filters = conv(&self.left_filters);
        let right_filters = conv(&self.right_filters);
        Ok(BinauralDecoder {
            order: self.order,
            fs: new_fs,
            filter_len: left_filters[0].len(),
            left_filters,
            right_filters,
            fc: self.fc,
            taper: self.taper.clone(),
            regularization: self.regularization,
            nfft: self.nfft,
            latency: self.latency * new_fs / self.fs,
        })
    }
}

/// Fits a decoder with the default FFT size, filter length and regularization.
pub fn fit_bimagls(set: &HrtfSet, order: usize, fc: f64, taper: &TaperWeights) -> Result<BinauralDecoder> {
    let mut opts = MagLsOptions::new(order)?;
    opts.fc = fc;
    opts.taper = taper.clone();
    fit_bimagls_with(set, &opts)
}

pub fn fit_bimagls_with(set: &HrtfSet, opts: &MagLsOptions) -> Result<BinauralDecoder> {
    set.validate()?;
    if set.is_empty() {
        return Err(invalid("HRTF set has no directions"));
    }
    if opts.order < 1 {
        return Err(invalid("decoder order must be >= 1"));
    }
    if opts.taper.order != opts.order || opts.taper.per_order_gain.len() != opts.order + 1 {
        return Err(invalid("taper does not match the decoder order"));
    }
    if !(opts.fc > 0.0 && opts.fc < set.fs / 2.0) {
        return Err(invalid(format!(
            "fc {} Hz must lie in (0, {}) Hz",
            opts.fc,
            set.fs / 2.0
        )));
    }
    if !(opts.regularization >= 0.0) {
        return Err(invalid("regularization must be non-negative"));
    }
    let nfft = opts.nfft.max(next_pow2(set.ir_len()));
    if opts.filter_len < FADE_IN_LEN + FADE_OUT_LEN || opts.filter_len > nfft {
        return Err(invalid(format!(
            "filter length {} must lie in [{}, {nfft}]",
            opts.filter_len,
            FADE_IN_LEN + FADE_OUT_LEN
        )));
    }

    let c = channel_count(opts.order);
    let q = set.len();
    let gains = opts.taper.per_channel();
    let mut a = DMatrix::<f64>::zeros(q, c);
    for (d, dir) in set.directions.iter().enumerate() {
        let y = eval_real_sh(opts.order, dir).coeffs;
        for ch in 0..c {
            a[(d, ch)] = y[ch] * gains[ch];
        }
    }
    let w = DVector::from_vec(set.weights.clone());
    let mut atw = a.transpose();
    for d in 0..q {
        let mut col = atw.column_mut(d);
        col *= w[d];
    }
    let normal = &atw * &a;
    let sigma_max = normal.symmetric_eigenvalues().max();
    let lambda = opts.regularization * sigma_max;
    let mut reg = normal;
    for i in 0..c {
        reg[(i, i)] += lambda;
    }
    let chol = reg
        .cholesky()
        .ok_or_else(|| Error::Numeric("regularized normal matrix is not positive definite".into()))?;
    let p = chol.solve(&atw);
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("decoder projection is not finite".into()));
    }

    let shift = opts.filter_len / 2;
    let fade_in: Vec<f64> = fade_out(FADE_IN_LEN).into_iter().rev().collect();
    let fade_tail = fade_out(FADE_OUT_LEN);
    let fit_ear = |irs: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let spectra = fit_ear_spectra(irs, &a, &p, nfft, set.fs, opts.fc);
        spectra
            .iter()
            .zip(&gains)
            .map(|(spec, g)| {
                let h = irfft(spec, nfft);
                let mut f: Vec<f64> = (0..opts.filter_len)
                    .map(|i| g * h[(i + nfft - shift) % nfft])
                    .collect();
                for (v, wgt) in f.iter_mut().zip(&fade_in) {
                    *v *= wgt;
                }
                let start = opts.filter_len - FADE_OUT_LEN;
                for (v, wgt) in f[start..].iter_mut().zip(&fade_tail) {
                    *v *= wgt;
                }
                f
            })
            .collect()
    };
    let dec = BinauralDecoder {
        order: opts.order,
        fs: set.fs,
        filter_len: opts.filter_len,
        left_filters: fit_ear(&set.left),
        right_filters: fit_ear(&set.right),
        fc: opts.fc,
        taper: opts.taper.clone(),
        regularization: opts.regularization,
        nfft,
        latency: shift as f64,
    };
    dec.validate()?;
    Ok(dec)
}

/// SH-domain spectra (channel x bin) for one ear.
fn fit_ear_spectra(
    irs: &[Vec<f64>],
    a: &DMatrix<f64>,
    p: &DMatrix<f64>,
    nfft: usize,
    fs: f64,
    fc: f64,
) -> Vec<Vec<Complex64>> {
    let hd: Vec<Vec<Complex64>> = irs.iter().map(|ir| rfft(ir, nfft)).collect();
    let bins = nfft / 2 + 1;
    let (q, c) = a.shape();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); bins]; c];
    let mut recon = DVector::<f64>::zeros(q);
    let mut recon_im = DVector::<f64>::zeros(q);
    let mut tre = DVector::<f64>::zeros(q);
    let mut tim = DVector::<f64>::zeros(q);
    for k in 0..bins {
        let f = k as f64 * fs / nfft as f64;
        for d in 0..q {
            let h = hd[d][k];
            let t = if f < fc {
                h
            } else {
                Complex64::from_polar(h.norm(), recon_im[d].atan2(recon[d]))
            };
            tre[d] = t.re;
            tim[d] = t.im;
        }
        let xr = p * &tre;
        let xi = p * &tim;
        recon = a * &xr;
        recon_im = a * &xi;
        for ch in 0..c {
            out[ch][k] = Complex64::new(xr[ch], xi[ch]);
        }
    }
    out
}

fn check_signal(sig: &AmbiSignal, dec: &BinauralDecoder) -> Result<()> {
    if sig.order != dec.order {
        return Err(Error::Mismatch(format!(
            "signal order {} differs from decoder order {}",
            sig.order, dec.order
        )));
    }
    if (sig.fs - dec.fs).abs() > 1e-9 {
        return Err(Error::Mismatch(format!(
            "signal rate {} Hz differs from decoder rate {} Hz",
            sig.fs, dec.fs
        )));
    }
    Ok(())
}

fn is_silent(x: &[f64]) -> bool {
    x.iter().all(|v| *v == 0.0)
}

/// Overlap-add rendering of both ears: every block of every channel is
/// filtered in the frequency domain and summed over channels in ACN order
/// before one inverse transform per block and ear. When both ears see the
/// same field, its block spectra are shared.
fn render_ears(left: &AmbiSignal, right: &AmbiSignal, dec: &BinauralDecoder, out_len: usize) -> (Vec<f64>, Vec<f64>) {
    if out_len == 0 {
        return (Vec::new(), Vec::new());
    }
    let n = next_pow2(BLOCK_FACTOR * dec.filter_len);
    let hop = n - dec.filter_len + 1;
    let spectra = |filters: &[Vec<f64>]| -> Vec<Vec<Complex64>> { filters.par_iter().map(|f| rfft(f, n)).collect() };
    let (fl, fr) = (spectra(&dec.left_filters), spectra(&dec.right_filters));
    let shared = std::ptr::eq(left, right);
    let sig_len = left.len();
    let blocks = sig_len.div_ceil(hop);
    let bins = n / 2 + 1;
    let rendered: Vec<(Vec<f64>, Vec<f64>)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let range = b * hop..((b + 1) * hop).min(sig_len);
            let mut acc_l = vec![Complex64::new(0.0, 0.0); bins];
            let mut acc_r = acc_l.clone();
            let add = |acc: &mut Vec<Complex64>, x: &[Complex64], f: &[Complex64]| {
                for ((a, x), f) in acc.iter_mut().zip(x).zip(f) {
                    *a += x * f;
                }
            };
            for c in 0..left.channels.len() {
                let seg = &left.channels[c][range.clone()];
                if !is_silent(seg) {
                    let x = rfft(seg, n);
                    add(&mut acc_l, &x, &fl[c]);
                    if shared {
                        add(&mut acc_r, &x, &fr[c]);
                    }
                }
                if !shared {
                    let seg = &right.channels[c][range.clone()];
                    if !is_silent(seg) {
                        add(&mut acc_r, &rfft(seg, n), &fr[c]);
                    }
                }
            }
            (irfft(&acc_l, n), irfft(&acc_r, n))
        })
        .collect();
    let mut out_l = vec![0.0; out_len];
    let mut out_r = vec![0.0; out_len];
    for (b, (yl, yr)) in rendered.iter().enumerate() {
        let start = b * hop;
        let m = n.min(out_len - start);
        for i in 0..m {
            out_l[start + i] += yl[i];
            out_r[start + i] += yr[i];
        }
    }
    (out_l, out_r)
}

fn out_len(sig: &AmbiSignal, dec: &BinauralDecoder) -> usize {
    if sig.is_empty() {
        0
    } else {
        sig.len() + dec.filter_len - 1
    }
}

/// Renders one field to both ears. Output length is `len + filter_len - 1`.
pub fn decode_binaural(sig: &AmbiSignal, dec: &BinauralDecoder) -> Result<BinauralSignal> {
    decode_bilateral(sig, sig, dec)
}

/// Renders the left ear from `left_field` and the right ear from `right_field`.
pub fn decode_bilateral(
    left_field: &AmbiSignal,
    right_field: &AmbiSignal,
    dec: &BinauralDecoder,
) -> Result<BinauralSignal> {
    check_signal(left_field, dec)?;
    check_signal(right_field, dec)?;
    if left_field.len() != right_field.len() {
        return Err(Error::Mismatch(format!(
            "ear fields differ in length ({} vs {})",
            left_field.len(),
            right_field.len()
        )));
    }
    let (left, right) = render_ears(left_field, right_field, dec, out_len(left_field, dec));
    Ok(BinauralSignal {
        fs: dec.fs,
        left,
        right,
    })
}

/// Quadrature-weighted mean absolute magnitude error in dB between the
/// decoder's reconstruction at the grid directions and the HRTFs, over
/// bins in `[f_lo, f_hi]` and both ears.
pub fn magnitude_error_db(dec: &BinauralDecoder, set: &HrtfSet, f_lo: f64, f_hi: f64) -> Result<f64> {
    if (set.fs - dec.fs).abs() > 1e-9 {
        return Err(Error::Mismatch("HRTF and decoder rates differ".into()));
    }
    let n = next_pow2(dec.filter_len.max(set.ir_len())).max(dec.nfft);
    let k_lo = (f_lo * n as f64 / dec.fs).ceil().max(0.0) as usize;
    let k_hi = ((f_hi * n as f64 / dec.fs).floor() as usize).min(n / 2);
    if k_hi < k_lo {
        return Err(invalid("empty frequency range"));
    }
    let mut total = 0.0;
    let mut weight = 0.0;
    for (d, dir) in set.directions.iter().enumerate() {
        let resp = dec.plane_wave_response(dir);
        for (r, h) in [(&resp.left, &set.left[d]), (&resp.right, &set.right[d])] {
            let rs = rfft(r, n);
            let hs = rfft(h, n);
            for k in k_lo..=k_hi {
                let ratio = (rs[k].norm() + 1e-12) / (hs[k].norm() + 1e-12);
                total += set.weights[d] * (20.0 * ratio.log10()).abs();
                weight += set.weights[d];
            }
        }
    }
    Ok(total / weight)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hrtf::synth::{delta_set, pure_delay_set, spherical_head_set};
    use crate::sh::lebedev50;

    fn small_opts(order: usize) -> MagLsOptions {
        let mut o = MagLsOptions::new(order).unwrap();
        o.nfft = 256;
        o.filter_len = 128;
        o
    }

    #[test]
    fn delta_set_gives_an_omni_impulse() {
        let set = delta_set(&lebedev50(), 48_000.0, 64);
        let dec = fit_bimagls_with(&set, &small_opts(4)).unwrap();
        let resp = dec.plane_wave_response(&SphericalDirection::new(0.3, 0.2));
        let peak = resp.left.iter().cloned().fold(0.0, f64::max);
        assert!((peak - 1.0).abs() < 0.01);
        assert_eq!(
            resp.left.iter().position(|v| *v == peak).unwrap(),
            dec.latency as usize
        );
        for ch in 1..channel_count(4) {
            assert!(dec.left_filters[ch].iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let set = delta_set(&lebedev50(), 48_000.0, 64);
        let t = taper_weights(2, TaperProfile::None).unwrap();
        assert!(fit_bimagls(&set, 2, 24_000.0, &t).is_err());
        assert!(fit_bimagls(&set, 3, 6000.0, &t).is_err());
        let mut o = small_opts(2);
        o.regularization = 0.0;
        // 9 coefficients, 50 directions: well posed without regularization.
        assert!(fit_bimagls_with(&set, &o).is_ok());
        let mut o = small_opts(10);
        o.regularization = 0.0;
        assert_eq!(
            fit_bimagls_with(&set, &o).unwrap_err().kind(),
            crate::error::ErrorKind::Numeric
        );
    }

    #[test]
    fn fit_is_deterministic() {
        let set = spherical_head_set(&lebedev50(), 48_000.0, 128);
        let a = fit_bimagls_with(&set, &small_opts(3)).unwrap();
        let b = fit_bimagls_with(&set, &small_opts(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn complex_ls_is_stationary_below_fc() {
        // With an untapered, unregularized, overdetermined fit every filter
        // coefficient perturbation increases the weighted residual.
        let set = spherical_head_set(&lebedev50(), 48_000.0, 64);
        let order = 2;
        let nfft = 64;
        let c = channel_count(order);
        let mut a = DMatrix::<f64>::zeros(set.len(), c);
        for (d, dir) in set.directions.iter().enumerate() {
            let y = eval_real_sh(order, dir).coeffs;
            for ch in 0..c {
                a[(d, ch)] = y[ch];
            }
        }
        let mut atw = a.transpose();
        for d in 0..set.len() {
            let mut col = atw.column_mut(d);
            col *= set.weights[d];
        }
        let p = (&atw * &a).cholesky().unwrap().solve(&atw);
        let spectra = fit_ear_spectra(&set.left, &a, &p, nfft, set.fs, 20_000.0);
        let hd: Vec<Vec<Complex64>> = set.left.iter().map(|ir| rfft(ir, nfft)).collect();
        let residual = |sp: &Vec<Vec<Complex64>>, k: usize| -> f64 {
            (0..set.len())
                .map(|d| {
                    let r: Complex64 = (0..c).map(|ch| sp[ch][k] * a[(d, ch)]).sum();
                    set.weights[d] * (r - hd[d][k]).norm_sqr()
                })
                .sum()
        };
        for k in [1, 5, 11] {
            let base = residual(&spectra, k);
            for ch in 0..c {
                for delta in [Complex64::new(1e-4, 0.0), Complex64::new(0.0, -1e-4)] {
                    let mut s = spectra.clone();
                    s[ch][k] += delta;
                    assert!(residual(&s, k) > base);
                }
            }
        }
    }

    #[test]
    fn decode_is_linear_and_sized() {
        let set = spherical_head_set(&lebedev50(), 48_000.0, 64);
        let dec = fit_bimagls_with(&set, &small_opts(2)).unwrap();
        let mk = |s: f64| {
            AmbiSignal::new(
                2,
                48_000.0,
                (0..9)
                    .map(|c| (0..100).map(|i| ((i * (c + 1)) as f64 * s).sin()).collect())
                    .collect(),
            )
            .unwrap()
        };
        let (x, y) = (mk(0.1), mk(0.37));
        let sum = x.add(&y).unwrap();
        let dx = decode_binaural(&x, &dec).unwrap();
        let dy = decode_binaural(&y, &dec).unwrap();
        let ds = decode_binaural(&sum, &dec).unwrap();
        assert_eq!(ds.len(), 100 + dec.filter_len - 1);
        let scale = ds.left.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..ds.len() {
            assert!((ds.left[i] - dx.left[i] - dy.left[i]).abs() <= 1e-9 * scale);
            assert!((ds.right[i] - dx.right[i] - dy.right[i]).abs() <= 1e-9 * scale);
        }
        let zero = decode_binaural(&AmbiSignal::zeros(2, 48_000.0, 50), &dec).unwrap();
        assert!(zero.left.iter().chain(&zero.right).all(|v| *v == 0.0));
    }

    #[test]
    fn bilateral_routes_fields_to_their_ears() {
        let set = spherical_head_set(&lebedev50(), 48_000.0, 64);
        let dec = fit_bimagls_with(&set, &small_opts(2)).unwrap();
        let mut field = AmbiSignal::zeros(2, 48_000.0, 40);
        field.channels[0][3] = 1.0;
        field.channels[1][7] = 0.5;
        let both = decode_binaural(&field, &dec).unwrap();
        let same = decode_bilateral(&field, &field, &dec).unwrap();
        assert_eq!(both, same);
        let silent = AmbiSignal::zeros(2, 48_000.0, 40);
        let one = decode_bilateral(&field, &silent, &dec).unwrap();
        assert_eq!(one.left, both.left);
        assert!(one.right.iter().all(|v| *v == 0.0));
        let wrong = AmbiSignal::zeros(1, 48_000.0, 40);
        assert!(decode_bilateral(&field, &wrong, &dec).is_err());
    }

    #[test]
    fn plane_wave_matches_pure_delay_itd() {
        use crate::hrtf::synth::{woodworth_itd, HEAD_RADIUS};
        let fs = 48_000.0;
        let set = pure_delay_set(&lebedev50(), fs, 256);
        let mut o = MagLsOptions::new(6).unwrap();
        o.nfft = 1024;
        o.filter_len = 512;
        let dec = fit_bimagls_with(&set, &o).unwrap();
        for dir in set.directions.iter().step_by(7) {
            let r = dec.plane_wave_response(dir);
            let lag = |x: &[f64]| -> f64 {
                let spec = rfft(x, 2048);
                // peak of the response low-passed to 2 kHz
                let cut = (2000.0 * 2048.0 / fs) as usize;
                let lp: Vec<Complex64> = spec
                    .iter()
                    .enumerate()
                    .map(|(k, v)| if k <= cut { *v } else { Complex64::new(0.0, 0.0) })
                    .collect();
                let y = irfft(&lp, 2048);
                y.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .unwrap()
                    .0 as f64
            };
            let itd = (lag(&r.right) - lag(&r.left)) / fs;
            assert!((itd - woodworth_itd(dir, HEAD_RADIUS)).abs() * fs <= 1.0);
        }
    }

    #[test]
    fn resampling_keeps_the_response() {
        let set = delta_set(&lebedev50(), 48_000.0, 64);
        let dec = fit_bimagls_with(&set, &small_opts(2)).unwrap();
        let low = dec.resampled(16_000.0).unwrap();
        assert_eq!(low.fs, 16_000.0);
        assert!((low.latency - dec.latency / 3.0).abs() < 1e-12);
        let dc: f64 = low.left_filters[0].iter().sum();
        assert!((dc - dec.left_filters[0].iter().sum::<f64>()).abs() < 0.01);
        assert!(dec.resampled(12_000.0).is_err());
    }
}
