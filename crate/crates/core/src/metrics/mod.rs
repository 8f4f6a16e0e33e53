//! Intrusive objective metrics: cross-correlation alignment, level
//! normalization, SISDR, best-ear reduction and benefit.

mod report;

pub use report::{
    anonymize, discover_recordings, evaluate_set, write_report, EvalItem, EvaluationSpec, ExternalMetric, ItemReport,
    MetricReport, SummaryRow, FLAT_AUDIOGRAM,
};

use crate::dsp::{db10, irfft, next_pow2, rfft};
use crate::error::{invalid, Error, Result};
use crate::signal::{BinauralSignal, Ear};

/// Value reported when the estimate is an exact scaled copy of the reference.
pub const SISDR_CAP_DB: f64 = 60.0;
pub const DEFAULT_LEVEL_DBFS: f64 = -26.0;
pub const DEFAULT_MAX_LAG_S: f64 = 0.5;
pub const MIN_OVERLAP_S: f64 = 1.0;
/// Samples more than this far below the peak of the ear-averaged signal at
/// its start and end are excluded from the level measurement.
pub const ACTIVE_THRESHOLD_DB: f64 = -60.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    pub reference: BinauralSignal,
    pub estimate: BinauralSignal,
    /// Delay of the estimate relative to the reference, in samples.
    pub lag: i64,
}

fn ear_sum(x: &BinauralSignal) -> Vec<f64> {
    x.left.iter().zip(&x.right).map(|(l, r)| l + r).collect()
}

/// Finds the delay of `estimate` relative to `reference` by cross-correlating
/// their ear sums within `max_lag_s`, then shifts both ears of the estimate
/// by the same amount and trims both signals to their common support.
/// Ties go to the smallest absolute lag.
pub fn align_xcorr(reference: &BinauralSignal, estimate: &BinauralSignal, max_lag_s: f64) -> Result<Aligned> {
    if (reference.fs - estimate.fs).abs() > 1e-9 {
        return Err(Error::Mismatch(format!(
            "reference at {} Hz, estimate at {} Hz",
            reference.fs, estimate.fs
        )));
    }
    if !(max_lag_s >= 0.0) {
        return Err(invalid("maximum lag must be non-negative"));
    }
    let fs = reference.fs;
    let r = ear_sum(reference);
    let e = ear_sum(estimate);
    let n = next_pow2(r.len() + e.len());
    let rs = rfft(&r, n);
    let es = rfft(&e, n);
    let cross: Vec<_> = es.iter().zip(&rs).map(|(a, b)| a * b.conj()).collect();
    let c = irfft(&cross, n);
    let max_lag = ((max_lag_s * fs).round() as i64)
        .min(e.len() as i64 - 1)
        .max(0);
    let min_lag = -((max_lag_s * fs).round() as i64).min(r.len() as i64 - 1).max(0);
    let at = |k: i64| c[k.rem_euclid(n as i64) as usize];
    let mut best = (0i64, at(0));
    for m in 1..=max_lag.max(-min_lag) {
        for k in [m, -m] {
            if k <= max_lag && k >= min_lag && at(k) > best.1 {
                best = (k, at(k));
            }
        }
    }
    let lag = best.0;
    let (e0, r0) = if lag >= 0 { (lag as usize, 0) } else { (0, (-lag) as usize) };
    let len = (estimate.len() - e0).min(reference.len() - r0);
    if (len as f64) < MIN_OVERLAP_S * fs {
        return Err(Error::Data(format!(
            "only {len} samples overlap after alignment (lag {lag})"
        )));
    }
    let cut = |x: &BinauralSignal, s: usize| x.map_ears(|v| v[s..s + len].to_vec());
    Ok(Aligned {
        reference: cut(reference, r0),
        estimate: cut(estimate, e0),
        lag,
    })
}

/// RMS in dBFS of the ear average `(L + R) / 2`, over the span between the
/// first and last samples within `ACTIVE_THRESHOLD_DB` of its peak.
pub fn active_level_dbfs(x: &BinauralSignal) -> Result<f64> {
    let mid = x.mid();
    let peak = mid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(peak > 0.0) {
        return Err(Error::Silent("signal"));
    }
    let thr = peak * 10f64.powf(ACTIVE_THRESHOLD_DB / 20.0);
    let first = mid.iter().position(|v| v.abs() >= thr).unwrap_or(0);
    let last = mid.iter().rposition(|v| v.abs() >= thr).unwrap_or(mid.len() - 1);
    let span = &mid[first..=last];
    let ms = span.iter().map(|v| v * v).sum::<f64>() / span.len() as f64;
    Ok(db10(ms))
}

/// Scales both ears by one gain so that [`active_level_dbfs`] equals `target_dbfs`.
pub fn normalize_level(x: &BinauralSignal, target_dbfs: f64) -> Result<BinauralSignal> {
    let level = active_level_dbfs(x)?;
    Ok(x.scaled(10f64.powf((target_dbfs - level) / 20.0)))
}

/// Scale-invariant signal-to-distortion ratio in dB:
/// `10 log10(|a y|^2 / |a y - e|^2)` with `a = e.y / |y|^2`, clipped to
/// [`SISDR_CAP_DB`].
pub fn sisdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::Mismatch(format!(
            "estimate has {} samples, reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    let yy: f64 = reference.iter().map(|v| v * v).sum();
    if !(yy > 0.0) {
        return Err(Error::Silent("reference"));
    }
    if !estimate.iter().any(|v| *v != 0.0) {
        return Err(Error::Silent("estimate"));
    }
    let ey: f64 = estimate.iter().zip(reference).map(|(e, y)| e * y).sum();
    let a = ey / yy;
    let target = a * a * yy;
    let distortion: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(e, y)| (a * y - e).powi(2))
        .sum();
    if distortion <= 0.0 {
        return Ok(SISDR_CAP_DB);
    }
    Ok(db10(target / distortion).min(SISDR_CAP_DB))
}

/// The better of the two per-ear values; the left ear wins ties.
pub fn best_ear<F>(metric: F, estimate: &BinauralSignal, reference: &BinauralSignal) -> Result<(f64, Ear)>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    let l = metric(&estimate.left, &reference.left)?;
    let r = metric(&estimate.right, &reference.right)?;
    Ok(if r > l { (r, Ear::Right) } else { (l, Ear::Left) })
}

pub fn sisdr_best_ear(estimate: &BinauralSignal, reference: &BinauralSignal) -> Result<(f64, Ear)> {
    best_ear(sisdr, estimate, reference)
}

/// `metric(estimate, reference) - metric(baseline, reference)`.
pub fn benefit<F>(metric: F, estimate: &BinauralSignal, baseline: &BinauralSignal, reference: &BinauralSignal) -> Result<f64>
where
    F: Fn(&BinauralSignal, &BinauralSignal) -> Result<f64>,
{
    Ok(metric(estimate, reference)? - metric(baseline, reference)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use proptest::prelude::*;

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = StreamRng::new(seed, 9);
        (0..n).map(|_| rng.normal()).collect()
    }

    fn bin(l: Vec<f64>, r: Vec<f64>) -> BinauralSignal {
        BinauralSignal::new(16_000.0, l, r).unwrap()
    }

    /// Unit-norm `y` and `w` orthogonal to it with `|w|^2 = p`.
    fn orthogonal_pair(seed: u64, n: usize, p: f64) -> (Vec<f64>, Vec<f64>) {
        let y = noise(seed, n);
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y: Vec<f64> = y.iter().map(|v| v / ny).collect();
        let w = noise(seed + 1, n);
        let proj: f64 = w.iter().zip(&y).map(|(a, b)| a * b).sum();
        let w: Vec<f64> = w.iter().zip(&y).map(|(a, b)| a - proj * b).collect();
        let nw = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        (y, w.iter().map(|v| v / nw * p.sqrt()).collect())
    }

    #[test]
    fn sisdr_identity_and_orthogonal_noise() {
        let (y, w) = orthogonal_pair(1, 4000, 0.1);
        assert_eq!(sisdr(&y, &y).unwrap(), SISDR_CAP_DB);
        let y2: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        assert_eq!(sisdr(&y2, &y).unwrap(), SISDR_CAP_DB);
        let e: Vec<f64> = y.iter().zip(&w).map(|(a, b)| a + b).collect();
        assert!((sisdr(&e, &y).unwrap() - 10.0).abs() < 1e-6);
        assert!(sisdr(&e, &vec![0.0; 4000]).is_err());
        assert!(sisdr(&vec![0.0; 4000], &y).is_err());
    }

    proptest! {
        #[test]
        fn sisdr_scale_invariance(seed in 0u64..500, g in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0]) {
            let y = noise(seed, 500);
            let e: Vec<f64> = noise(seed + 1000, 500).iter().zip(&y).map(|(a, b)| 0.5 * a + b).collect();
            let base = sisdr(&e, &y).unwrap();
            let ge: Vec<f64> = e.iter().map(|v| v * g).collect();
            let gy: Vec<f64> = y.iter().map(|v| v * g).collect();
            prop_assert!((sisdr(&ge, &y).unwrap() - base).abs() < 1e-9);
            prop_assert!((sisdr(&e, &gy).unwrap() - base).abs() < 1e-9);
        }
    }

    #[test]
    fn alignment_recovers_a_delay() {
        let x = noise(3, 32_000);
        let reference = bin(x.clone(), x.iter().map(|v| 0.5 * v).collect());
        let mut d = vec![0.0; 480];
        d.extend(&x);
        let delayed = bin(d.clone(), d.iter().map(|v| 0.5 * v).collect());
        let a = align_xcorr(&reference, &delayed, 0.1).unwrap();
        assert_eq!(a.lag, 480);
        assert_eq!(a.estimate.left, a.reference.left);
        let back = align_xcorr(&delayed, &reference, 0.1).unwrap();
        assert_eq!(back.lag, -480);
        assert_eq!(align_xcorr(&reference, &reference, 0.1).unwrap().lag, 0);
        let short = bin(x[..8000].to_vec(), x[..8000].to_vec());
        assert!(align_xcorr(&short, &short, 0.1).is_err());
    }

    #[test]
    fn level_normalization() {
        let fs = 16_000.0;
        let sine: Vec<f64> = (0..16_000).map(|i| (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / fs).sin()).collect();
        let x = bin(sine.clone(), sine);
        let y = normalize_level(&x, -26.0).unwrap();
        assert!((active_level_dbfs(&y).unwrap() + 26.0).abs() < 1e-6);
        let z = normalize_level(&y, -26.0).unwrap();
        for (a, b) in y.left.iter().zip(&z.left) {
            assert!((a - b).abs() < 1e-12);
        }
        let w = normalize_level(&x.scaled(3.0), -26.0).unwrap();
        for (a, b) in y.left.iter().zip(&w.left) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(normalize_level(&bin(vec![0.0; 10], vec![0.0; 10]), -26.0).is_err());
    }

    #[test]
    fn best_ear_and_benefit() {
        let y = noise(5, 2000);
        let reference = bin(y.clone(), y.clone());
        assert_eq!(sisdr_best_ear(&reference, &reference).unwrap().1, Ear::Left);
        let bad: Vec<f64> = noise(6, 2000).iter().zip(&y).map(|(n, v)| v + 3.0 * n).collect();
        let est = bin(y.iter().map(|v| v + 0.01).collect(), bad.clone());
        let (v, ear) = sisdr_best_ear(&est, &reference).unwrap();
        assert_eq!(ear, Ear::Left);
        let l = sisdr(&est.left, &y).unwrap();
        let r = sisdr(&bad, &y).unwrap();
        assert_eq!(v, l.max(r));
        let m = |e: &BinauralSignal, r: &BinauralSignal| sisdr_best_ear(e, r).map(|x| x.0);
        assert_eq!(benefit(m, &est, &est, &reference).unwrap(), 0.0);

        let (yy, w0) = orthogonal_pair(11, 3000, 1.0);
        let w10: Vec<f64> = w0.iter().map(|v| v * 0.1f64.sqrt()).collect();
        let r = bin(yy.clone(), yy.clone());
        let base: Vec<f64> = yy.iter().zip(&w0).map(|(a, b)| a + b).collect();
        let good: Vec<f64> = yy.iter().zip(&w10).map(|(a, b)| a + b).collect();
        let d = benefit(m, &bin(good.clone(), good), &bin(base.clone(), base), &r).unwrap();
        assert!((d - 10.0).abs() < 1e-6);
    }
}
