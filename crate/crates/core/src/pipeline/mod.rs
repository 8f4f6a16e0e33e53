//! Pipeline stages driven by one TOML configuration: decoder fitting, corpus
//! synthesis, evaluation-scene rendering and metric reporting.
//!
//! Relative paths in a configuration file are resolved against the file's
//! directory. Stage outputs live under `output_dir`:
//!
//! ```text
//! output_dir/decoder/      left.wav, right.wav, decoder.json, compensation.json
//! output_dir/corpus/       manifest.jsonl, records/, tr/, cv/, tt/
//! output_dir/eval/<scene>/ feeds.wav, reference.wav, mixture_ambi.wav, scene.json
//! output_dir/recordings/   <device>/<condition>/<scene>.wav (simulated)
//! output_dir/report/       report.jsonl, summary.json, summary.txt
//! ```

pub mod demo;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{read_ambi, read_binaural, read_mono, write_ambi, write_binaural, write_multi};
use crate::decoder::{
    fit_bimagls_with, fit_inphase_decoder, magnitude_error_db, read_decoder, write_decoder, BinauralDecoder,
    DecoderManifest, LoudspeakerLayout, MagLsOptions, DEFAULT_FC, DEFAULT_FEED_ENERGY, DEFAULT_FILTER_LEN,
    DEFAULT_NFFT, DEFAULT_REGULARIZATION,
};
use crate::dsp::resample;
use crate::error::{Error, Result};
use crate::hrtf::{
    coupling_compensation_fit_at, crop_direct, lfe_extend, read_hrtf_dir, read_hrtf_interleaved, HrtfSet, IirFilter,
    DEFAULT_COMPENSATION_ORDER,
};
use crate::metrics::{
    anonymize, discover_recordings, evaluate_set, write_report, EvaluationSpec, ExternalMetric, MetricReport,
    DEFAULT_LEVEL_DBFS, DEFAULT_MAX_LAG_S, FLAT_AUDIOGRAM,
};
use crate::mixgen::{
    build_eval_scene, generate_corpus, AugmentationMix, CorpusOutcome, CorpusSpec, SplitCounts, CHUNK_SECONDS,
};
use crate::scene::{eval_scene_presets, Environment, SceneSpec, TargetAngle};
use crate::sh::{taper_weights, TaperProfile};
use crate::signal::AmbiSignal;

pub const DECODER_DIR: &str = "decoder";
pub const COMPENSATION_FILE: &str = "compensation.json";
pub const CORPUS_DIR: &str = "corpus";
pub const EVAL_DIR: &str = "eval";
pub const RECORDINGS_DIR: &str = "recordings";
pub const REPORT_DIR: &str = "report";
pub const SCENE_FILE: &str = "scene.json";
/// Decoder orders above this draw a warning: the 50-point grid cannot
/// resolve them.
pub const MAX_RECOMMENDED_ORDER: usize = 10;
pub const DEFAULT_CORPUS_FS: f64 = 16_000.0;
pub const DEFAULT_CROP_LEN: usize = 256;
pub const DEFAULT_LFE_HZ: f64 = 200.0;
pub const DEFAULT_LS_ORDER: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed for every random draw.
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub jobs: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub decoder: Option<DecoderConfig>,
    #[serde(default)]
    pub corpus: Option<CorpusConfig>,
    #[serde(default)]
    pub eval: Option<EvalConfig>,
    #[serde(default)]
    pub evaluate: Option<EvaluateConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderConfig {
    /// HRTF set measured with the hearing aid: a container directory or an
    /// interleaved WAV file.
    pub hrtf: PathBuf,
    /// Set measured without the device; enables the compensation filter fit.
    #[serde(default)]
    pub bare_hrtf: Option<PathBuf>,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_fc")]
    pub fc: f64,
    /// Degrees covered by the half-cosine taper; defaults to `min(3, order)`.
    #[serde(default)]
    pub taper_degrees: Option<usize>,
    #[serde(default = "default_crop")]
    pub crop_len: usize,
    #[serde(default = "default_lfe")]
    pub lfe_hz: f64,
    #[serde(default = "default_filter_len")]
    pub filter_len: usize,
    #[serde(default = "default_nfft")]
    pub nfft: usize,
    #[serde(default = "default_regularization")]
    pub regularization: f64,
    #[serde(default = "default_comp_order")]
    pub compensation_order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub speech_root: PathBuf,
    pub noise_root: PathBuf,
    pub counts: SplitCounts,
    #[serde(default = "default_corpus_fs")]
    pub fs: f64,
    #[serde(default = "default_chunk")]
    pub chunk_seconds: f64,
    #[serde(default)]
    pub augmentation: AugmentationMix,
    /// Apply the coupling compensation filter to the speech renderings.
    #[serde(default = "default_true")]
    pub compensate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Mono target speech.
    pub speech: PathBuf,
    /// Directory holding one Ambisonics noise recording per environment,
    /// named `<environment>.wav`.
    pub noise_dir: PathBuf,
    pub layout: PathBuf,
    /// RT60 in seconds for every selected environment.
    pub rt60: BTreeMap<String, f64>,
    #[serde(default = "default_environments")]
    pub environments: Vec<Environment>,
    #[serde(default = "default_angles")]
    pub angles: Vec<TargetAngle>,
    #[serde(default = "default_ls_order")]
    pub ls_order: usize,
    #[serde(default = "default_feed_energy")]
    pub feed_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Recordings root; defaults to `output_dir/recordings`.
    #[serde(default)]
    pub recordings: Option<PathBuf>,
    /// Rendered scenes with references; defaults to `output_dir/eval`.
    #[serde(default)]
    pub eval_dir: Option<PathBuf>,
    #[serde(default = "default_baseline")]
    pub baseline: String,
    #[serde(default)]
    pub anonymize: bool,
    #[serde(default = "default_max_lag")]
    pub max_lag_s: f64,
    #[serde(default = "default_level")]
    pub level_dbfs: f64,
    #[serde(default = "default_audiogram")]
    pub audiogram: String,
    #[serde(default)]
    pub external: Vec<ExternalMetric>,
}

fn default_order() -> usize {
    10
}
fn default_fc() -> f64 {
    DEFAULT_FC
}
fn default_crop() -> usize {
    DEFAULT_CROP_LEN
}
fn default_lfe() -> f64 {
    DEFAULT_LFE_HZ
}
fn default_filter_len() -> usize {
    DEFAULT_FILTER_LEN
}
fn default_nfft() -> usize {
    DEFAULT_NFFT
}
fn default_regularization() -> f64 {
    DEFAULT_REGULARIZATION
}
fn default_comp_order() -> usize {
    DEFAULT_COMPENSATION_ORDER
}
fn default_corpus_fs() -> f64 {
    DEFAULT_CORPUS_FS
}
fn default_chunk() -> f64 {
    CHUNK_SECONDS
}
fn default_true() -> bool {
    true
}
fn default_environments() -> Vec<Environment> {
    Environment::ALL.to_vec()
}
fn default_angles() -> Vec<TargetAngle> {
    TargetAngle::ALL.to_vec()
}
fn default_ls_order() -> usize {
    DEFAULT_LS_ORDER
}
fn default_feed_energy() -> f64 {
    DEFAULT_FEED_ENERGY
}
fn default_baseline() -> String {
    "bypass".into()
}
fn default_max_lag() -> f64 {
    DEFAULT_MAX_LAG_S
}
fn default_level() -> f64 {
    DEFAULT_LEVEL_DBFS
}
fn default_audiogram() -> String {
    FLAT_AUDIOGRAM.into()
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn require_path(what: &str, p: &Path) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} {} does not exist", p.display())))
    }
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref()
        .ok_or_else(|| Error::Config(format!("configuration has no [{name}] section")))
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a configuration file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        rebase(base, &mut self.output_dir);
        if let Some(d) = &mut self.decoder {
            rebase(base, &mut d.hrtf);
            if let Some(b) = &mut d.bare_hrtf {
                rebase(base, b);
            }
        }
        if let Some(c) = &mut self.corpus {
            rebase(base, &mut c.speech_root);
            rebase(base, &mut c.noise_root);
        }
        if let Some(e) = &mut self.eval {
            rebase(base, &mut e.speech);
            rebase(base, &mut e.noise_dir);
            rebase(base, &mut e.layout);
        }
        if let Some(v) = &mut self.evaluate {
            for p in [&mut v.recordings, &mut v.eval_dir].into_iter().flatten() {
                rebase(base, p);
            }
        }
    }

    pub fn decoder_dir(&self) -> PathBuf {
        self.output_dir.join(DECODER_DIR)
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.output_dir.join(CORPUS_DIR)
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.evaluate
            .as_ref()
            .and_then(|e| e.eval_dir.clone())
            .unwrap_or_else(|| self.output_dir.join(EVAL_DIR))
    }

    pub fn recordings_dir(&self) -> PathBuf {
        self.evaluate
            .as_ref()
            .and_then(|e| e.recordings.clone())
            .unwrap_or_else(|| self.output_dir.join(RECORDINGS_DIR))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.output_dir.join(REPORT_DIR)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        require_path("HRTF set", &self.hrtf)?;
        if let Some(b) = &self.bare_hrtf {
            require_path("bare HRTF set", b)?;
        }
        if self.order == 0 {
            return Err(Error::Config("decoder order must be >= 1".into()));
        }
        if self.order > MAX_RECOMMENDED_ORDER {
            log::warn!(
                "decoder order {} exceeds {MAX_RECOMMENDED_ORDER}; the fit is underdetermined on a 50-point grid",
                self.order
            );
        }
        Ok(())
    }

    pub fn options(&self) -> Result<MagLsOptions> {
        let degrees = self.taper_degrees.unwrap_or(3.min(self.order));
        let taper = if degrees == 0 {
            TaperProfile::None
        } else {
            TaperProfile::HalfCosine(degrees)
        };
        Ok(MagLsOptions {
            order: self.order,
            fc: self.fc,
            taper: taper_weights(self.order, taper).map_err(|e| Error::Config(e.to_string()))?,
            nfft: self.nfft,
            filter_len: self.filter_len,
            regularization: self.regularization,
        })
    }
}

pub fn load_hrtf(path: &Path) -> Result<HrtfSet> {
    if path.is_dir() {
        read_hrtf_dir(path)
    } else {
        read_hrtf_interleaved(path)
    }
}

/// Direct-path cropping followed by low-frequency extension.
pub fn condition_hrtf(set: &HrtfSet, crop_len: usize, lfe_hz: f64) -> Result<HrtfSet> {
    lfe_extend(&crop_direct(set, crop_len.min(set.ir_len()))?, lfe_hz)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OctaveError {
    pub center_hz: f64,
    pub error_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub manifest: DecoderManifest,
    pub octave_errors: Vec<OctaveError>,
    pub compensation: Option<IirFilter>,
}

impl FitSummary {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "decoder order {} at {} Hz, fingerprint {}\nmean magnitude error per octave:\n",
            self.manifest.order, self.manifest.fs, self.manifest.fingerprint
        );
        for o in &self.octave_errors {
            s += &format!("  {:>7.0} Hz  {:6.2} dB\n", o.center_hz, o.error_db);
        }
        if let Some(c) = &self.compensation {
            s += &format!(
                "compensation filter: order {} at {} Hz\n",
                c.a.len().saturating_sub(1),
                c.fs
            );
        }
        s
    }
}

/// Mean magnitude error per octave band (125 Hz upwards, bands above Nyquist
/// dropped, the top band clipped at Nyquist).
pub fn octave_errors(dec: &BinauralDecoder, set: &HrtfSet) -> Result<Vec<OctaveError>> {
    let nyquist = dec.fs / 2.0;
    let mut out = Vec::new();
    let mut center = 125.0;
    while center / std::f64::consts::SQRT_2 < nyquist {
        let lo = center / std::f64::consts::SQRT_2;
        let hi = (center * std::f64::consts::SQRT_2).min(nyquist);
        out.push(OctaveError {
            center_hz: center,
            error_db: magnitude_error_db(dec, set, lo, hi)?,
        });
        center *= 2.0;
    }
    Ok(out)
}

/// Conditions the HRTF set, fits and writes the decoder and, with a bare set,
/// the compensation filter at the corpus rate.
pub fn fit_decoder(cfg: &PipelineConfig) -> Result<FitSummary> {
    let dc = section(&cfg.decoder, "decoder")?;
    dc.validate()?;
    let opts = dc.options()?;
    let with_ha = condition_hrtf(&load_hrtf(&dc.hrtf)?, dc.crop_len, dc.lfe_hz)?;
    let dec = fit_bimagls_with(&with_ha, &opts)?;
    let dir = cfg.decoder_dir();
    let manifest = write_decoder(&dec, &dir)?;
    let octave_errors = octave_errors(&dec, &with_ha)?;
    let comp_path = dir.join(COMPENSATION_FILE);
    let compensation = match &dc.bare_hrtf {
        Some(bare) => {
            let bare = condition_hrtf(&load_hrtf(bare)?, dc.crop_len, dc.lfe_hz)?;
            let fs = cfg.corpus.as_ref().map_or(DEFAULT_CORPUS_FS, |c| c.fs);
            let f = coupling_compensation_fit_at(&with_ha, &bare, dc.compensation_order, fs)?;
            std::fs::write(&comp_path, serde_json::to_string_pretty(&f)? + "\n")
                .map_err(|e| Error::io(&comp_path, e))?;
            Some(f)
        }
        None => {
            if comp_path.exists() {
                std::fs::remove_file(&comp_path).map_err(|e| Error::io(&comp_path, e))?;
            }
            None
        }
    };
    Ok(FitSummary {
        manifest,
        octave_errors,
        compensation,
    })
}

pub fn read_compensation(path: &Path) -> Result<IirFilter> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Renders the training corpus with the fitted decoder resampled to the
/// corpus rate.
pub fn synth(cfg: &PipelineConfig, resume: bool) -> Result<CorpusOutcome> {
    let cc = section(&cfg.corpus, "corpus")?;
    require_path("speech corpus", &cc.speech_root)?;
    require_path("noise corpus", &cc.noise_root)?;
    let dec = read_decoder(&cfg.decoder_dir())?;
    let fingerprint = dec.fingerprint();
    let dec = dec.resampled(cc.fs)?;
    let comp = if cc.compensate {
        let path = cfg.decoder_dir().join(COMPENSATION_FILE);
        if !path.exists() {
            return Err(Error::Config(format!(
                "compensation requested but {} is missing; set decoder.bare_hrtf or corpus.compensate = false",
                path.display()
            )));
        }
        let f = read_compensation(&path)?;
        if (f.fs - cc.fs).abs() > 1e-9 {
            return Err(Error::Mismatch(format!(
                "compensation filter at {} Hz, corpus at {} Hz; refit the decoder",
                f.fs, cc.fs
            )));
        }
        Some(f)
    } else {
        None
    };
    let spec = CorpusSpec {
        speech_root: cc.speech_root.clone(),
        noise_root: cc.noise_root.clone(),
        output_dir: cfg.corpus_dir(),
        counts: cc.counts.clone(),
        seed: cfg.seed,
        fs: cc.fs,
        chunk_seconds: cc.chunk_seconds,
        augmentation: cc.augmentation.clone(),
        jobs: cfg.jobs,
        resume,
    };
    generate_corpus(&spec, &dec, comp.as_ref(), &fingerprint)
}

/// Contents of `scene.json` in an evaluation bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleInfo {
    pub name: String,
    pub environment: Environment,
    pub angle: TargetAngle,
    pub rt60: f64,
    pub fs: f64,
    pub samples: usize,
    pub noise_gain: f64,
    pub feed_energy: f64,
    pub ls_order: usize,
    pub layout: String,
    pub speakers: Vec<String>,
    pub decoder_fingerprint: String,
    pub scene: SceneSpec,
}

pub fn bundle_name(env: Environment, angle: TargetAngle) -> String {
    format!("{}_{}", env.name(), angle.name())
}

fn resample_ambi(sig: AmbiSignal, fs: f64) -> AmbiSignal {
    if (sig.fs - fs).abs() < 1e-9 {
        return sig;
    }
    AmbiSignal {
        order: sig.order,
        fs,
        channels: sig.channels.iter().map(|c| resample(c, sig.fs, fs)).collect(),
    }
}

/// Renders one bundle per (environment, angle) at the decoder rate.
pub fn render_eval(cfg: &PipelineConfig) -> Result<Vec<BundleInfo>> {
    let ec = section(&cfg.eval, "eval")?;
    require_path("evaluation speech", &ec.speech)?;
    require_path("noise directory", &ec.noise_dir)?;
    require_path("loudspeaker layout", &ec.layout)?;
    let dec = read_decoder(&cfg.decoder_dir())?;
    let fingerprint = dec.fingerprint();
    if ec.ls_order > dec.order {
        return Err(Error::Mismatch(format!(
            "loudspeaker order {} exceeds decoder order {}",
            ec.ls_order, dec.order
        )));
    }
    let layout = LoudspeakerLayout::from_file(&ec.layout)?;
    let ls = fit_inphase_decoder(&layout, ec.ls_order)?;
    let (fs, speech) = read_mono(&ec.speech)?;
    let speech = if (fs - dec.fs).abs() < 1e-9 {
        speech
    } else {
        resample(&speech, fs, dec.fs)
    };
    let mut jobs = Vec::new();
    for &env in &ec.environments {
        let rt60 = *ec
            .rt60
            .get(env.name())
            .ok_or_else(|| Error::Config(format!("eval.rt60 has no value for {}", env.name())))?;
        let noise_path = ec.noise_dir.join(format!("{}.wav", env.name()));
        let noise = resample_ambi(read_ambi(&noise_path)?, dec.fs);
        for &angle in &ec.angles {
            jobs.push((env, angle, rt60, noise.clone()));
        }
    }
    let root = cfg.output_dir.join(EVAL_DIR);
    let render = |(env, angle, rt60, noise): &(Environment, TargetAngle, f64, AmbiSignal)| -> Result<BundleInfo> {
        let preset = eval_scene_presets(*env, *angle, *rt60)?;
        let scene = build_eval_scene(&preset, &speech, noise, &dec, &ls, ec.feed_energy)?;
        let name = bundle_name(*env, *angle);
        let dir = root.join(&name);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_multi(&dir.join("feeds.wav"), &scene.feeds)?;
        write_binaural(&dir.join("reference.wav"), &scene.reference)?;
        write_ambi(&dir.join("mixture_ambi.wav"), &scene.mixture_ambi)?;
        let info = BundleInfo {
            name,
            environment: *env,
            angle: *angle,
            rt60: *rt60,
            fs: dec.fs,
            samples: speech.len(),
            noise_gain: scene.noise_gain,
            feed_energy: ec.feed_energy,
            ls_order: ec.ls_order,
            layout: layout.name.clone(),
            speakers: layout.speakers.iter().map(|s| s.name.clone()).collect(),
            decoder_fingerprint: fingerprint.clone(),
            scene: preset,
        };
        let p = dir.join(SCENE_FILE);
        std::fs::write(&p, serde_json::to_string_pretty(&info)? + "\n").map_err(|e| Error::io(&p, e))?;
        Ok(info)
    };
    cfg.pool()?.install(|| jobs.par_iter().map(render).collect())
}

/// Binaural references of every bundle under `eval_dir`, keyed by bundle name.
pub fn load_references(eval_dir: &Path) -> Result<BTreeMap<String, crate::signal::BinauralSignal>> {
    let mut refs = BTreeMap::new();
    for e in std::fs::read_dir(eval_dir).map_err(|e| Error::io(eval_dir, e))? {
        let p = e.map_err(|e| Error::io(eval_dir, e))?.path();
        let r = p.join("reference.wav");
        if r.is_file() {
            let name = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            refs.insert(name, read_binaural(&r)?);
        }
    }
    Ok(refs)
}

/// Scores the recordings against the bundle references and writes the report.
pub fn evaluate(cfg: &PipelineConfig) -> Result<MetricReport> {
    let default = EvaluateConfig {
        recordings: None,
        eval_dir: None,
        baseline: default_baseline(),
        anonymize: false,
        max_lag_s: DEFAULT_MAX_LAG_S,
        level_dbfs: DEFAULT_LEVEL_DBFS,
        audiogram: default_audiogram(),
        external: Vec::new(),
    };
    let vc = cfg.evaluate.as_ref().unwrap_or(&default);
    let (eval_dir, rec_dir) = (cfg.eval_dir(), cfg.recordings_dir());
    require_path("evaluation bundles", &eval_dir)?;
    require_path("recordings", &rec_dir)?;
    let refs = load_references(&eval_dir)?;
    let items = discover_recordings(&rec_dir)?;
    if items.is_empty() {
        return Err(Error::Data(format!("no recordings under {}", rec_dir.display())));
    }
    let spec = EvaluationSpec {
        baseline: vc.baseline.clone(),
        max_lag_s: vc.max_lag_s,
        level_dbfs: vc.level_dbfs,
        audiogram: vc.audiogram.clone(),
        external: vc.external.clone(),
        work_dir: cfg.output_dir.join("work"),
    };
    let report = cfg.pool()?.install(|| evaluate_set(&refs, &items, &spec))?;
    let report = if vc.anonymize { anonymize(&report) } else { report };
    write_report(&report, &cfg.report_dir())?;
    Ok(report)
}
