//! Training and evaluation mixtures: chunk selection, noise augmentation,
//! SNR weighting and reverberant rendering through the binaural decoder.

mod corpus;

pub use corpus::{
    generate_corpus, speaker_id, CorpusOutcome, CorpusSpec, DatasetManifest, ManifestHeader, Split, SplitCounts,
    UtteranceRecord, MANIFEST_FILE, MANIFEST_SCHEMA_VERSION,
};

use serde::{Deserialize, Serialize};

use crate::decoder::{decode_bilateral, decode_binaural, normalize_feeds, pad_ambisonics_order, BinauralDecoder, LsDecoder};
use crate::dsp::{convolve, db10, resample_to_len};
use crate::error::{invalid, Error, Result};
use crate::hrtf::IirFilter;
use crate::rng::StreamRng;
use crate::room::{ear_positions, simulate_ambi_rir, AmbiRir, RirMode, SimulationOptions};
use crate::scene::SceneSpec;
use crate::signal::{channel_count, AmbiSignal, BinauralSignal, MultiSignal};

pub const CHUNK_SECONDS: f64 = 4.0;
pub const CHUNK_HOP_SECONDS: f64 = 0.25;
pub const STRETCH_RANGE: (f64, f64) = (0.9, 1.1);

#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub start: usize,
    pub samples: Vec<f64>,
}

/// The `duration_s` window with the largest sum of squares among starts on a
/// `CHUNK_HOP_SECONDS` grid plus the final possible start. Ties go to the
/// earliest start.
pub fn select_chunk(x: &[f64], duration_s: f64, fs: f64) -> Result<Chunk> {
    let w = (duration_s * fs).round() as usize;
    if w == 0 {
        return Err(invalid("chunk duration must be positive"));
    }
    if x.len() < w {
        return Err(Error::Data(format!(
            "signal of {} samples is shorter than the {w}-sample chunk",
            x.len()
        )));
    }
    let hop = ((CHUNK_HOP_SECONDS * fs).round() as usize).max(1);
    let last = x.len() - w;
    let mut starts: Vec<usize> = (0..=last).step_by(hop).collect();
    if starts.last() != Some(&last) {
        starts.push(last);
    }
    let mut best = (0usize, f64::NEG_INFINITY);
    for s in starts {
        let e: f64 = x[s..s + w].iter().map(|v| v * v).sum();
        if e > best.1 {
            best = (s, e);
        }
    }
    Ok(Chunk {
        start: best.0,
        samples: x[best.0..best.0 + w].to_vec(),
    })
}

/// Noise augmentation, applied as phase inversion, then channel swap, then
/// time stretch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub phase_invert: bool,
    pub lr_swap: bool,
    pub stretch: Option<f64>,
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(f) = self.stretch {
            if !(STRETCH_RANGE.0..=STRETCH_RANGE.1).contains(&f) {
                return Err(invalid(format!(
                    "stretch factor {f} outside [{}, {}]",
                    STRETCH_RANGE.0, STRETCH_RANGE.1
                )));
            }
        }
        Ok(())
    }
}

/// Relative frequency of each augmentation combination in the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationMix {
    pub none: f64,
    pub phase_invert: f64,
    pub lr_swap: f64,
    pub phase_invert_lr_swap: f64,
    pub stretch: f64,
    pub all: f64,
}

impl Default for AugmentationMix {
    /// Thousands of noise utterances per combination in the reference training set.
    fn default() -> Self {
        Self {
            none: 52.0,
            phase_invert: 52.0,
            lr_swap: 52.0,
            phase_invert_lr_swap: 52.0,
            stretch: 6.5,
            all: 6.5,
        }
    }
}

impl AugmentationMix {
    fn entries(&self) -> [(f64, bool, bool, bool); 6] {
        [
            (self.none, false, false, false),
            (self.phase_invert, true, false, false),
            (self.lr_swap, false, true, false),
            (self.phase_invert_lr_swap, true, true, false),
            (self.stretch, false, false, true),
            (self.all, true, true, true),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.entries();
        if e.iter().any(|x| !(x.0 >= 0.0) || !x.0.is_finite()) || e.iter().map(|x| x.0).sum::<f64>() <= 0.0 {
            return Err(Error::Config("augmentation proportions must be non-negative with a positive sum".into()));
        }
        Ok(())
    }

    /// Draws a combination, then a uniform stretch factor when it stretches.
    pub fn draw(&self, rng: &mut StreamRng) -> AugmentationSpec {
        let entries = self.entries();
        let total: f64 = entries.iter().map(|x| x.0).sum();
        let mut u = rng.unit() * total;
        let mut pick = entries[entries.len() - 1];
        for e in entries {
            if u < e.0 {
                pick = e;
                break;
            }
            u -= e.0;
        }
        let stretch = pick.3.then(|| rng.uniform(STRETCH_RANGE.0, STRETCH_RANGE.1));
        AugmentationSpec {
            phase_invert: pick.1,
            lr_swap: pick.2,
            stretch,
        }
    }
}

/// Applies `spec` to a two-channel noise. The stretch resamples the signal
/// so that its duration becomes `factor` times the original.
pub fn augment_noise(noise: &BinauralSignal, spec: &AugmentationSpec) -> Result<BinauralSignal> {
    spec.validate()?;
    let mut out = noise.clone();
    if spec.phase_invert {
        out = out.map_ears(|x| x.iter().map(|v| -v).collect());
    }
    if spec.lr_swap {
        std::mem::swap(&mut out.left, &mut out.right);
    }
    if let Some(f) = spec.stretch {
        let len = (noise.len() as f64 * f).round() as usize;
        out = out.map_ears(|x| resample_to_len(x, f, len));
    }
    Ok(out)
}

/// Noise gain `g` such that `10 log10(E_speech / (g^2 E_noise)) = snr_db`,
/// with energies summed over both ears.
pub fn weight_snr_binaural(speech: &BinauralSignal, noise: &BinauralSignal, snr_db: f64) -> Result<f64> {
    let es = speech.energy();
    let en = noise.energy();
    if !(es > 0.0) {
        return Err(Error::Silent("speech"));
    }
    if !(en > 0.0) {
        return Err(Error::Silent("noise"));
    }
    Ok((es / en * 10f64.powf(-snr_db / 10.0)).sqrt())
}

/// Binaural SNR in dB, energies summed over both ears.
pub fn binaural_snr_db(speech: &BinauralSignal, noise: &BinauralSignal) -> f64 {
    db10(speech.energy() / noise.energy())
}

/// Repeats `x` (or truncates it) to exactly `len` samples.
fn loop_to_len(x: &[f64], len: usize) -> Vec<f64> {
    if x.is_empty() {
        return vec![0.0; len];
    }
    x.iter().cycle().take(len).copied().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    /// Reverberant speech plus weighted noise.
    pub input: BinauralSignal,
    /// Direct-path speech.
    pub target: BinauralSignal,
    /// Reverberant speech alone.
    pub reverberant: BinauralSignal,
    /// Augmented noise after weighting.
    pub noise: BinauralSignal,
    pub noise_gain: f64,
}

/// Ear-position RIRs for the scene target, in the given mode.
fn ear_rirs(scene: &SceneSpec, order: usize, fs: f64, mode: RirMode) -> Result<(AmbiRir, AmbiRir)> {
    let (left, right) = ear_positions(&scene.head, &scene.room)?;
    let opts = SimulationOptions::new(order, fs, mode);
    Ok((
        simulate_ambi_rir(&scene.room, &scene.target_position, &left, &scene.head, &opts)?,
        simulate_ambi_rir(&scene.room, &scene.target_position, &right, &scene.head, &opts)?,
    ))
}

/// Renders a speech signal through ear-position RIRs and the decoder,
/// truncated to `len` samples.
fn render_speech(
    rirs: &(AmbiRir, AmbiRir),
    speech: &[f64],
    dec: &BinauralDecoder,
    comp: Option<&IirFilter>,
    len: usize,
) -> Result<BinauralSignal> {
    let brir = decode_bilateral(&rirs.0.signal, &rirs.1.signal, dec)?;
    let mut out = brir.map_ears(|h| {
        let mut y = convolve(h, speech);
        y.resize(len, 0.0);
        y
    });
    if let Some(f) = comp {
        out = out.map_ears(|x| f.apply(x));
    }
    Ok(out)
}

fn check_rate(what: &str, fs: f64, expected: f64) -> Result<()> {
    if (fs - expected).abs() > 1e-9 {
        return Err(Error::Mismatch(format!("{what} at {fs} Hz, decoder at {expected} Hz")));
    }
    Ok(())
}

/// Renders one training pair at the decoder rate. Speech (a chunk at
/// `dec.fs`) is rendered through direct-only (target) and full (input) ear
/// RIRs; `comp` is applied to both speech renderings; the augmented noise is
/// looped or truncated to the chunk length and weighted to `scene.snr_db`
/// against the reverberant speech. All outputs have the speech length.
pub fn build_training_example(
    scene: &SceneSpec,
    speech: &[f64],
    noise: &BinauralSignal,
    dec: &BinauralDecoder,
    aug: &AugmentationSpec,
    comp: Option<&IirFilter>,
) -> Result<TrainingExample> {
    check_rate("noise", noise.fs, dec.fs)?;
    if let Some(f) = comp {
        check_rate("compensation filter", f.fs, dec.fs)?;
    }
    let len = speech.len();
    if len == 0 {
        return Err(Error::Silent("speech"));
    }
    let target = render_speech(&ear_rirs(scene, dec.order, dec.fs, RirMode::DirectOnly)?, speech, dec, comp, len)?;
    let reverberant = render_speech(&ear_rirs(scene, dec.order, dec.fs, RirMode::Full)?, speech, dec, comp, len)?;
    if !(target.energy() > 0.0) {
        return Err(Error::Silent("target"));
    }
    let aug_noise = augment_noise(noise, aug)?.map_ears(|x| loop_to_len(x, len));
    let noise_gain = weight_snr_binaural(&reverberant, &aug_noise, scene.snr_db)?;
    let noise = aug_noise.scaled(noise_gain);
    let input = reverberant.add(&noise)?;
    Ok(TrainingExample {
        input,
        target,
        reverberant,
        noise,
        noise_gain,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalScene {
    /// Normalized loudspeaker feeds of the mixture.
    pub feeds: MultiSignal,
    /// Direct-path binaural speech at the ears.
    pub reference: BinauralSignal,
    /// Speech field plus weighted noise field at the head center.
    pub mixture_ambi: AmbiSignal,
    /// Speech field alone.
    pub speech_ambi: AmbiSignal,
    pub noise_gain: f64,
}

/// Renders one evaluation scene at the decoder rate and order. The noise
/// field is zero-padded to the decoder order, looped or truncated to the
/// speech length and weighted so that the binaural decodes of speech and
/// noise fields have the preset SNR. The mixture is truncated to the
/// loudspeaker decoder order, decoded to feeds and normalized to
/// `feed_energy`.
pub fn build_eval_scene(
    preset: &SceneSpec,
    speech: &[f64],
    ambi_noise: &AmbiSignal,
    dec: &BinauralDecoder,
    ls: &LsDecoder,
    feed_energy: f64,
) -> Result<EvalScene> {
    check_rate("noise field", ambi_noise.fs, dec.fs)?;
    if ambi_noise.order > dec.order {
        return Err(Error::Mismatch(format!(
            "noise field order {} exceeds decoder order {}",
            ambi_noise.order, dec.order
        )));
    }
    if ls.order > dec.order {
        return Err(Error::Mismatch(format!(
            "loudspeaker decoder order {} exceeds binaural decoder order {}",
            ls.order, dec.order
        )));
    }
    let len = speech.len();
    if len == 0 {
        return Err(Error::Silent("speech"));
    }
    let opts = SimulationOptions::new(dec.order, dec.fs, RirMode::Full);
    let rir = simulate_ambi_rir(
        &preset.room,
        &preset.target_position,
        &preset.head.position,
        &preset.head,
        &opts,
    )?;
    let speech_ambi = rir.signal.convolve_mono(speech).with_len(len);
    let padded = pad_ambisonics_order(ambi_noise, dec.order)?;
    let noise = AmbiSignal {
        order: dec.order,
        fs: dec.fs,
        channels: padded.channels.iter().map(|c| loop_to_len(c, len)).collect(),
    };
    let speech_bin = decode_binaural(&speech_ambi, dec)?;
    let noise_bin = decode_binaural(&noise, dec)?;
    let noise_gain = if noise_bin.energy() > 0.0 {
        weight_snr_binaural(&speech_bin, &noise_bin, preset.snr_db)?
    } else {
        0.0
    };
    let mixture_ambi = speech_ambi.add(&noise.scaled(noise_gain))?;
    let truncated = AmbiSignal {
        order: ls.order,
        fs: dec.fs,
        channels: mixture_ambi.channels[..channel_count(ls.order)].to_vec(),
    };
    let feeds = normalize_feeds(&ls.decode(&truncated)?, feed_energy)?;
    let direct = ear_rirs(preset, dec.order, dec.fs, RirMode::DirectOnly)?;
    let reference = render_speech(&direct, speech, dec, None, len)?;
    Ok(EvalScene {
        feeds,
        reference,
        mixture_ambi,
        speech_ambi,
        noise_gain,
    })
}
