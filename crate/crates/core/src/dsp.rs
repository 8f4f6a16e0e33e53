//! Small DSP toolbox shared by the simulators, the decoder fit and the
//! corpus builder: FFT helpers, convolution, minimum-phase reconstruction,
//! band-limited resampling and fades.

use std::f64::consts::PI;

use std::cell::RefCell;

use rayon::prelude::*;
use realfft::RealFftPlanner;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn db10(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn db20(x: f64) -> f64 {
    20.0 * x.log10()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
    static REAL_PLANNER: RefCell<RealFftPlanner<f64>> = RefCell::new(RealFftPlanner::new());
}

/// Forward FFT of a real signal zero-padded to `n`; returns all `n` bins.
pub fn fft_real(x: &[f64], n: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(x.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n)).process(&mut buf);
    buf
}

/// Half spectrum (bins `0..=n/2`) of a real signal zero-padded (or
/// truncated) to `n`.
pub fn rfft(x: &[f64], n: usize) -> Vec<Complex64> {
    let plan = REAL_PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n));
    let mut input = vec![0.0; n];
    let m = x.len().min(n);
    input[..m].copy_from_slice(&x[..m]);
    let mut out = plan.make_output_vec();
    plan.process(&mut input, &mut out).expect("buffers sized by the plan");
    out
}

/// Inverse of [`rfft`]. The imaginary parts of the DC and (for even `n`)
/// Nyquist bins are ignored.
pub fn irfft(half: &[Complex64], n: usize) -> Vec<f64> {
    assert_eq!(half.len(), n / 2 + 1, "half spectrum length must be n/2+1");
    let plan = REAL_PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n));
    let mut buf = half.to_vec();
    buf[0].im = 0.0;
    if n % 2 == 0 {
        buf[n / 2].im = 0.0;
    }
    let mut out = plan.make_output_vec();
    plan.process(&mut buf, &mut out).expect("buffers sized by the plan");
    let scale = 1.0 / n as f64;
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

/// Linear convolution, direct for short kernels and FFT-based otherwise.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 48 {
        let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
        let mut out = vec![0.0; out_len];
        for (j, &s) in short.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            for (i, &l) in long.iter().enumerate() {
                out[i + j] += s * l;
            }
        }
        return out;
    }
    let n = next_pow2(out_len);
    let fa = rfft(a, n);
    let fb = rfft(b, n);
    let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    let mut out = irfft(&prod, n);
    out.truncate(out_len);
    out
}

/// Convolves `x` with every kernel, sharing the transform of `x`. Each
/// output has length `kernel.len() + x.len() - 1`.
pub fn convolve_each(kernels: &[Vec<f64>], x: &[f64]) -> Vec<Vec<f64>> {
    let longest = kernels.iter().map(Vec::len).max().unwrap_or(0);
    if x.is_empty() || longest == 0 || x.len().min(longest) <= 48 {
        return kernels.iter().map(|k| convolve(k, x)).collect();
    }
    let n = next_pow2(longest + x.len() - 1);
    let fx = rfft(x, n);
    kernels
        .par_iter()
        .map(|k| {
            if k.is_empty() {
                return Vec::new();
            }
            let prod: Vec<Complex64> = rfft(k, n).iter().zip(&fx).map(|(a, b)| a * b).collect();
            let mut y = irfft(&prod, n);
            y.truncate(k.len() + x.len() - 1);
            y
        })
        .collect()
}

/// Adds `src` into `dst` element-wise, growing `dst` if needed.
pub fn accumulate(dst: &mut Vec<f64>, src: &[f64]) {
    if dst.len() < src.len() {
        dst.resize(src.len(), 0.0);
    }
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Minimum-phase spectrum with the given half-spectrum magnitude (bins `0..=n/2`),
/// computed through the folded real cepstrum.
pub fn minimum_phase(mag_half: &[f64], n: usize) -> Vec<Complex64> {
    assert_eq!(mag_half.len(), n / 2 + 1);
    let peak = mag_half.iter().cloned().fold(0.0, f64::max).max(1e-300);
    let floor = peak * 1e-10;
    let log_half: Vec<Complex64> = mag_half
        .iter()
        .map(|m| Complex64::new(m.max(floor).ln(), 0.0))
        .collect();
    let cep = irfft(&log_half, n);
    let mut folded = vec![Complex64::new(0.0, 0.0); n];
    folded[0] = Complex64::new(cep[0], 0.0);
    for k in 1..n / 2 {
        folded[k] = Complex64::new(2.0 * cep[k], 0.0);
    }
    folded[n / 2] = Complex64::new(cep[n / 2], 0.0);
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut folded);
    folded.truncate(n / 2 + 1);
    folded.iter().map(|c| c.exp()).collect()
}

/// Unwraps a phase sequence so consecutive differences stay within (-pi, pi].
pub fn unwrap_phase(phase: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(phase.len());
    let mut offset: f64 = 0.0;
    for (i, &p) in phase.iter().enumerate() {
        if i > 0 {
            let d = p + offset - out[i - 1];
            if d.abs() > PI {
                offset -= 2.0 * PI * (d / (2.0 * PI)).round();
            }
        }
        out.push(p + offset);
    }
    out
}

/// Raised-cosine fade-out gains for `len` samples, from just below 1 down to
/// just above 0 (the end points 1 and 0 themselves are excluded).
pub fn fade_out(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 * (1.0 + (PI * (i as f64 + 1.0) / (len as f64 + 1.0)).cos()))
        .collect()
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

const KAISER_BETA: f64 = 8.6;

fn kaiser(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        return 0.0;
    }
    static NORM: std::sync::OnceLock<f64> = std::sync::OnceLock::new();
    bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) / *NORM.get_or_init(|| bessel_i0(KAISER_BETA))
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Windowed-sinc reader over a sampled signal: evaluates the band-limited
/// signal at fractional positions with a Kaiser-windowed sinc of `half_width`
/// zero crossings per side, low-passed at `cutoff` (fraction of Nyquist).
#[derive(Debug, Clone, Copy)]
pub struct SincInterpolator {
    pub half_width: usize,
    pub cutoff: f64,
}

impl SincInterpolator {
    pub fn new(half_width: usize, cutoff: f64) -> Self {
        Self {
            half_width,
            cutoff: cutoff.clamp(1e-6, 1.0),
        }
    }

    pub fn kernel(&self, u: f64) -> f64 {
        let span = self.half_width as f64 / self.cutoff;
        if u.abs() >= span {
            return 0.0;
        }
        self.cutoff * sinc(self.cutoff * u) * kaiser(u / span)
    }

    pub fn value_at(&self, x: &[f64], t: f64) -> f64 {
        let span = self.half_width as f64 / self.cutoff;
        let lo = (t - span).ceil().max(0.0) as usize;
        let hi = ((t + span).floor() as isize).min(x.len() as isize - 1);
        if hi < lo as isize {
            return 0.0;
        }
        (lo..=hi as usize)
            .map(|k| x[k] * self.kernel(t - k as f64))
            .sum()
    }
}

/// Band-limited resampling of `x` from rate `fs_in` to `fs_out` (signal
/// semantics: amplitudes are preserved). Output length is
/// `round(len * fs_out / fs_in)`.
pub fn resample(x: &[f64], fs_in: f64, fs_out: f64) -> Vec<f64> {
    let ratio = fs_out / fs_in;
    let out_len = (x.len() as f64 * ratio).round() as usize;
    resample_to_len(x, ratio, out_len)
}

/// Reads `x` at positions `i / ratio` for `i in 0..out_len`, band-limited to
/// `min(1, ratio)` of the input Nyquist rate.
pub fn resample_to_len(x: &[f64], ratio: f64, out_len: usize) -> Vec<f64> {
    let interp = SincInterpolator::new(32, ratio.min(1.0));
    (0..out_len)
        .map(|i| interp.value_at(x, i as f64 / ratio))
        .collect()
}

/// Direct-form-II-transposed IIR filter with `a[0]` normalized to 1.
pub fn iir_filter(b: &[f64], a: &[f64], x: &[f64]) -> Vec<f64> {
    let a0 = a[0];
    let b: Vec<f64> = b.iter().map(|v| v / a0).collect();
    let a: Vec<f64> = a.iter().map(|v| v / a0).collect();
    let order = b.len().max(a.len());
    let mut state = vec![0.0; order];
    let mut out = Vec::with_capacity(x.len());
    for &xn in x {
        let yn = b.first().copied().unwrap_or(0.0) * xn + state[0];
        for k in 1..order {
            let bk = b.get(k).copied().unwrap_or(0.0);
            let ak = a.get(k).copied().unwrap_or(0.0);
            state[k - 1] = bk * xn - ak * yn + if k < order - 1 { state[k] } else { 0.0 };
        }
        out.push(yn);
    }
    out
}

/// Frequency response of `b(z)/a(z)` at normalized angular frequency `w`.
pub fn freqz(b: &[f64], a: &[f64], w: f64) -> Complex64 {
    let eval = |c: &[f64]| -> Complex64 {
        c.iter()
            .enumerate()
            .map(|(k, &v)| Complex64::from_polar(v, -w * k as f64))
            .sum()
    };
    eval(b) / eval(a)
}
