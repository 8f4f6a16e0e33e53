//! Synthetic inputs for trying the pipeline without external corpora, and
//! simulated device recordings for exercising the evaluation stage.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use crate::audio::{read_ambi, read_binaural, write_ambi, write_binaural, write_wav};
use crate::decoder::{decode_binaural, BinauralDecoder, LoudspeakerLayout};
use crate::dsp::iir_filter;
use crate::error::{Error, Result};
use crate::hrtf::write_hrtf_dir;
use crate::hrtf::synth::spherical_head_set;
use crate::hrtf::HrtfSet;
use crate::mixgen::Split;
use crate::rng::StreamRng;
use crate::sh::{encode_plane_wave, lebedev50, SphericalDirection};
use crate::signal::{AmbiSignal, BinauralSignal};

/// Irregular 25-speaker array shipped with the crate.
pub const DEMO_LAYOUT: &str = include_str!("../../data/layout25.txt");
pub const DEMO_HRTF_FS: f64 = 48_000.0;
pub const DEMO_HRTF_LEN: usize = 256;
pub const DEMO_NOISE_ORDER: usize = 4;
/// Conditions written by [`simulate_recordings`].
pub const BYPASS: &str = "bypass";
pub const ORACLE: &str = "oracle";
pub const ORACLE_SNR_DB: f64 = 10.0;

const STREAM_SPEECH: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_EVAL: u64 = 4;
const STREAM_RECORDINGS: u64 = 5;

pub fn demo_layout() -> LoudspeakerLayout {
    LoudspeakerLayout::parse("layout25", DEMO_LAYOUT).expect("bundled layout is valid")
}

/// RBJ peaking equalizer.
fn peaking(fs: f64, f0: f64, q: f64, gain_db: f64) -> ([f64; 3], [f64; 3]) {
    let a = 10f64.powf(gain_db / 40.0);
    let w = 2.0 * PI * f0 / fs;
    let alpha = w.sin() / (2.0 * q);
    let c = w.cos();
    (
        [1.0 + alpha * a, -2.0 * c, 1.0 - alpha * a],
        [1.0 + alpha / a, -2.0 * c, 1.0 - alpha / a],
    )
}

/// Spherical-head set coloured by a device resonance, standing in for HRTFs
/// measured with a hearing aid in place.
pub fn demo_hearing_aid_set() -> HrtfSet {
    let bare = spherical_head_set(&lebedev50(), DEMO_HRTF_FS, DEMO_HRTF_LEN);
    let (b1, a1) = peaking(DEMO_HRTF_FS, 2_800.0, 1.2, 8.0);
    let (b2, a2) = peaking(DEMO_HRTF_FS, 6_500.0, 2.0, -6.0);
    let colour = |ir: &Vec<f64>| iir_filter(&b2, &a2, &iir_filter(&b1, &a1, ir));
    let mut set = bare.clone();
    set.left = bare.left.iter().map(colour).collect();
    set.right = bare.right.iter().map(colour).collect();
    set.meta.name = Some("demo-hearing-aid".into());
    set
}

fn one_pole(x: &[f64], pole: f64) -> Vec<f64> {
    iir_filter(&[1.0 - pole], &[1.0, -pole], x)
}

/// Voiced syllables with two moving formants, separated by short gaps and
/// occasional pauses.
pub fn synthetic_speech(rng: &mut StreamRng, fs: f64, seconds: f64, f0: f64) -> Vec<f64> {
    let n = (seconds * fs).round() as usize;
    let mut x = vec![0.0; n];
    let mut t = (rng.uniform(0.05, 0.2) * fs) as usize;
    let mut phase = 0.0;
    while t < n {
        let len = ((rng.uniform(0.12, 0.3) * fs) as usize).min(n - t);
        let (f1, f2) = (rng.uniform(300.0, 900.0), rng.uniform(900.0, 2500.0));
        let pitch = f0 * rng.uniform(0.85, 1.15);
        let harmonics = ((4_000.0f64.min(fs / 2.2)) / pitch) as usize;
        let amps: Vec<f64> = (1..=harmonics)
            .map(|k| {
                let f = k as f64 * pitch;
                (1.0 + 3.0 * (-((f - f1) / 150.0).powi(2)).exp() + 2.0 * (-((f - f2) / 200.0).powi(2)).exp())
                    / k as f64
            })
            .collect();
        for i in 0..len {
            let u = i as f64 / len as f64;
            let env = (PI * u).sin().powi(2);
            let f = pitch * (1.0 + 0.05 * (2.0 * PI * 3.0 * u).sin());
            phase += 2.0 * PI * f / fs;
            let v: f64 = amps.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * phase).sin()).sum();
            x[t + i] = env * v;
        }
        t += len + (rng.uniform(0.02, 0.12) * fs) as usize;
        if rng.unit() < 0.2 {
            t += (rng.uniform(0.25, 0.5) * fs) as usize;
        }
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    x
}

/// Partially correlated low-passed noise with a slow level modulation.
pub fn synthetic_binaural_noise(rng: &mut StreamRng, fs: f64, seconds: f64) -> BinauralSignal {
    let n = (seconds * fs).round() as usize;
    let mut draw = || -> Vec<f64> { (0..n).map(|_| rng.normal()).collect() };
    let (common, l, r) = (one_pole(&draw(), 0.7), one_pole(&draw(), 0.5), one_pole(&draw(), 0.5));
    let rate = 0.5 + 2.0 * (n as f64 % 7.0) / 7.0;
    let m = |i: usize| 1.0 + 0.5 * (2.0 * PI * rate * i as f64 / fs).sin();
    let left = (0..n).map(|i| 0.05 * m(i) * (common[i] + 0.6 * l[i])).collect();
    let right = (0..n).map(|i| 0.05 * m(i) * (common[i] + 0.6 * r[i])).collect();
    BinauralSignal { fs, left, right }
}

/// Diffuse-like field: independent noises from `sources` random directions.
pub fn synthetic_ambi_noise(rng: &mut StreamRng, order: usize, fs: f64, seconds: f64, sources: usize, pole: f64) -> AmbiSignal {
    let n = (seconds * fs).round() as usize;
    let mut sig = AmbiSignal::zeros(order, fs, n);
    for _ in 0..sources {
        let az = rng.uniform(-PI, PI);
        let el = rng.uniform(-1.0, 1.0).asin();
        let gains = encode_plane_wave(order, &SphericalDirection::new(az, el)).coeffs;
        let s = one_pole(&(0..n).map(|_| rng.normal() * 0.02).collect::<Vec<_>>(), pole);
        for (ch, g) in sig.channels.iter_mut().zip(gains.iter()) {
            for (o, v) in ch.iter_mut().zip(&s) {
                *o += g * v;
            }
        }
    }
    sig
}

const DEMO_CONFIG: &str = r#"# Demo configuration written by make-demo-data.
seed = {SEED}
jobs = 0
output_dir = "out"

[decoder]
hrtf = "hrtf/with_ha"
bare_hrtf = "hrtf/bare"
order = 10

[corpus]
speech_root = "speech"
noise_root = "noise"
counts = { tr = 4, cv = 2, tt = 2 }

[eval]
speech = "eval/speech.wav"
noise_dir = "eval/noise"
layout = "layout25.txt"
rt60 = { party = 0.45, restaurant = 0.55, office = 0.35 }

[evaluate]
baseline = "bypass"
"#;

/// Writes HRTF sets, split speech and noise corpora, evaluation inputs, the
/// bundled layout and a matching `config.toml` under `dir`.
pub fn make_demo_data(dir: &Path, seed: u64) -> Result<PathBuf> {
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    mkdir(dir)?;
    write_hrtf_dir(&demo_hearing_aid_set(), &dir.join("hrtf/with_ha"))?;
    let mut bare = spherical_head_set(&lebedev50(), DEMO_HRTF_FS, DEMO_HRTF_LEN);
    bare.meta.name = Some("demo-bare".into());
    write_hrtf_dir(&bare, &dir.join("hrtf/bare"))?;

    let fs = 16_000.0;
    let mut rng = StreamRng::new(seed, STREAM_SPEECH);
    let speakers: [(Split, &[&str]); 3] = [
        (Split::Tr, &["spk01", "spk02", "spk03", "spk04"]),
        (Split::Cv, &["spk05"]),
        (Split::Tt, &["spk06"]),
    ];
    for (split, names) in speakers {
        let d = dir.join("speech").join(split.name());
        mkdir(&d)?;
        for (k, spk) in names.iter().enumerate() {
            let f0 = if k % 2 == 0 { 120.0 } else { 210.0 };
            for utt in 0..2 {
                let secs = rng.uniform(3.0, 6.0);
                let x = synthetic_speech(&mut rng, fs, secs, f0);
                write_wav(&d.join(format!("{spk}_{utt:02}.wav")), fs, &[x])?;
            }
        }
    }
    let mut rng = StreamRng::new(seed, STREAM_NOISE);
    for (split, count) in [(Split::Tr, 4), (Split::Cv, 2), (Split::Tt, 2)] {
        let d = dir.join("noise").join(split.name());
        mkdir(&d)?;
        for k in 0..count {
            let secs = rng.uniform(4.0, 6.0);
            let x = synthetic_binaural_noise(&mut rng, fs, secs);
            write_binaural(&d.join(format!("{}_noise{k:02}.wav", split.name())), &x)?;
        }
    }

    let mut rng = StreamRng::new(seed, STREAM_EVAL);
    mkdir(&dir.join("eval/noise"))?;
    let speech: Vec<f64> = (0..3)
        .flat_map(|_| synthetic_speech(&mut rng, DEMO_HRTF_FS, 1.0, 210.0))
        .collect();
    write_wav(&dir.join("eval/speech.wav"), DEMO_HRTF_FS, &[speech])?;
    for (env, pole, sources) in [("party", 0.6, 16), ("restaurant", 0.8, 24), ("office", 0.9, 6)] {
        let n = synthetic_ambi_noise(&mut rng, DEMO_NOISE_ORDER, DEMO_HRTF_FS, 2.0, sources, pole);
        write_ambi(&dir.join(format!("eval/noise/{env}.wav")), &n)?;
    }
    let layout = dir.join("layout25.txt");
    std::fs::write(&layout, DEMO_LAYOUT).map_err(|e| Error::io(&layout, e))?;
    let config = dir.join("config.toml");
    std::fs::write(&config, DEMO_CONFIG.replace("{SEED}", &seed.to_string())).map_err(|e| Error::io(&config, e))?;
    Ok(config)
}

/// Adds noise orthogonal to `reference` so that the reference-to-noise
/// energy ratio is `snr_db`.
pub fn add_orthogonal_noise(reference: &[f64], rng: &mut StreamRng, snr_db: f64) -> Vec<f64> {
    let mut n: Vec<f64> = (0..reference.len()).map(|_| rng.normal()).collect();
    let rr: f64 = reference.iter().map(|v| v * v).sum();
    if rr > 0.0 {
        let proj = n.iter().zip(reference).map(|(a, b)| a * b).sum::<f64>() / rr;
        n.iter_mut().zip(reference).for_each(|(a, b)| *a -= proj * b);
        let nn: f64 = n.iter().map(|v| v * v).sum();
        let g = (rr / nn / 10f64.powf(snr_db / 10.0)).sqrt();
        n.iter_mut().for_each(|v| *v *= g);
    }
    reference.iter().zip(&n).map(|(a, b)| a + b).collect()
}

/// Simulated recordings for every bundle under `eval_dir`: `bypass` is the
/// binaural decode of the Ambisonics mixture, `oracle` the reference plus
/// orthogonal noise at 10 dB. Each device applies its own broadband gain.
/// Files go to `out/<device>/<condition>/<bundle>.wav`.
pub fn simulate_recordings(
    eval_dir: &Path,
    dec: &BinauralDecoder,
    out: &Path,
    devices: usize,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    let mut bundles: Vec<PathBuf> = std::fs::read_dir(eval_dir)
        .map_err(|e| Error::io(eval_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("mixture_ambi.wav").is_file() && p.join("reference.wav").is_file())
        .collect();
    bundles.sort();
    if bundles.is_empty() {
        return Err(Error::Data(format!("no evaluation bundles in {}", eval_dir.display())));
    }
    let mut written = Vec::new();
    for (b, bundle) in bundles.iter().enumerate() {
        let name = bundle.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let bypass = decode_binaural(&read_ambi(&bundle.join("mixture_ambi.wav"))?, dec)?;
        let reference = read_binaural(&bundle.join("reference.wav"))?;
        for d in 0..devices {
            let device = format!("device{:02}", d + 1);
            let gain = 10f64.powf(-3.0 * d as f64 / 20.0);
            let mut rng = StreamRng::new(seed, (STREAM_RECORDINGS << 40) | ((d as u64) << 20) | b as u64);
            let oracle = reference.map_ears(|x| add_orthogonal_noise(x, &mut rng, ORACLE_SNR_DB));
            for (cond, sig) in [(BYPASS, &bypass), (ORACLE, &oracle)] {
                let p = out.join(&device).join(cond).join(format!("{name}.wav"));
                write_binaural(&p, &sig.scaled(gain))?;
                written.push(p);
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::fit_inphase_decoder;

    #[test]
    fn bundled_layout_supports_order_five() {
        let layout = demo_layout();
        assert_eq!(layout.len(), 25);
        let dec = fit_inphase_decoder(&layout, 5).unwrap();
        assert_eq!(dec.gains.len(), 25);
    }

    #[test]
    fn orthogonal_noise_has_the_requested_ratio() {
        let mut rng = StreamRng::new(3, 0);
        let r: Vec<f64> = (0..4000).map(|i| (i as f64 * 0.01).sin()).collect();
        let y = add_orthogonal_noise(&r, &mut rng, 10.0);
        let n: Vec<f64> = y.iter().zip(&r).map(|(a, b)| a - b).collect();
        let dot: f64 = n.iter().zip(&r).map(|(a, b)| a * b).sum();
        let ratio = r.iter().map(|v| v * v).sum::<f64>() / n.iter().map(|v| v * v).sum::<f64>();
        assert!(dot.abs() < 1e-9);
        assert!((10.0 * ratio.log10() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn speech_has_pauses_and_bounded_peak() {
        let mut rng = StreamRng::new(1, 0);
        let x = synthetic_speech(&mut rng, 16_000.0, 3.0, 150.0);
        assert_eq!(x.len(), 48_000);
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 0.5).abs() < 1e-12);
        assert!(x.iter().filter(|v| **v == 0.0).count() > 1000);
    }
}
