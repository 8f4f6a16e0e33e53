//! Corpus generation with split bookkeeping, per-record random streams,
//! resumable output and a line-delimited JSON manifest.
//!
//! Source layout: `<root>/{tr,cv,tt}/*.wav` for both speech (mono) and noise
//! (two channels). The speaker of a speech file is its file-name prefix up to
//! the first `_`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{read_binaural, read_mono, write_binaural};
use crate::decoder::BinauralDecoder;
use crate::dsp::resample;
use crate::error::{Error, Result};
use crate::hrtf::IirFilter;
use crate::rng::StreamRng;
use crate::scene::{sample_scene, SceneSpec};
use crate::signal::BinauralSignal;

use super::{binaural_snr_db, build_training_example, select_chunk, AugmentationMix, AugmentationSpec};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
const RECORD_DIR: &str = "records";
const SCENE_ATTEMPTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Tr,
    Cv,
    Tt,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Tr, Split::Cv, Split::Tt];

    pub fn name(self) -> &'static str {
        match self {
            Split::Tr => "tr",
            Split::Cv => "cv",
            Split::Tt => "tt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitCounts {
    #[serde(default)]
    pub tr: usize,
    #[serde(default)]
    pub cv: usize,
    #[serde(default)]
    pub tt: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Tr => self.tr,
            Split::Cv => self.cv,
            Split::Tt => self.tt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub speech_root: PathBuf,
    pub noise_root: PathBuf,
    pub output_dir: PathBuf,
    pub counts: SplitCounts,
    pub seed: u64,
    pub fs: f64,
    pub chunk_seconds: f64,
    pub augmentation: AugmentationMix,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
    /// Keep records whose files are already complete.
    pub resume: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    pub split: Split,
    pub speech_id: String,
    pub speaker_id: String,
    pub noise_id: String,
    pub speech_start: usize,
    /// The source was shorter than a chunk and was zero-padded.
    pub speech_padded: bool,
    pub noise_offset: usize,
    pub scene: SceneSpec,
    pub augmentation: AugmentationSpec,
    pub noise_gain: f64,
    pub measured_snr_db: f64,
    pub compensated: bool,
    pub input_path: String,
    pub target_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub schema_version: u32,
    pub toolkit_version: String,
    pub decoder_fingerprint: String,
    pub fs: f64,
    pub seed: u64,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub records: Vec<UtteranceRecord>,
}

impl DatasetManifest {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = serde_json::to_string(&self.header)? + "\n";
        for r in &self.records {
            out += &serde_json::to_string(r)?;
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |e: serde_json::Error| Error::Data(format!("{}: {e}", path.display()));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: ManifestHeader = serde_json::from_str(
            lines
                .next()
                .ok_or_else(|| Error::Data(format!("{}: empty manifest", path.display())))?,
        )
        .map_err(bad)?;
        if header.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "{}: unsupported manifest schema {}",
                path.display(),
                header.schema_version
            )));
        }
        let records = lines
            .map(|l| serde_json::from_str(l).map_err(bad))
            .collect::<Result<Vec<UtteranceRecord>>>()?;
        Ok(Self { header, records })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusOutcome {
    pub manifest: DatasetManifest,
    /// Record id and error message for every record that failed.
    pub failures: Vec<(String, String)>,
}

/// Speaker id of a source file stem: the prefix before the first `_`.
pub fn speaker_id(stem: &str) -> &str {
    stem.split('_').next().unwrap_or(stem)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

struct Sources {
    speech: BTreeMap<Split, Vec<PathBuf>>,
    noise: BTreeMap<Split, Vec<PathBuf>>,
}

fn disjoint(what: &str, by_split: &BTreeMap<Split, BTreeSet<String>>) -> Result<()> {
    let splits: Vec<_> = by_split.iter().collect();
    for (i, (sa, a)) in splits.iter().enumerate() {
        for (sb, b) in &splits[i + 1..] {
            if let Some(shared) = a.intersection(b).next() {
                return Err(Error::Contamination(format!(
                    "{what} {shared} appears in both {} and {}",
                    sa.name(),
                    sb.name()
                )));
            }
        }
    }
    Ok(())
}

/// Lists the source files and refuses splits that share speakers (speech)
/// or files (noise).
fn collect_sources(spec: &CorpusSpec) -> Result<Sources> {
    let mut speech = BTreeMap::new();
    let mut noise = BTreeMap::new();
    for split in Split::ALL {
        for (root, map) in [(&spec.speech_root, &mut speech), (&spec.noise_root, &mut noise)] {
            let dir = root.join(split.name());
            let files = if dir.is_dir() { list_wavs(&dir)? } else { Vec::new() };
            if spec.counts.get(split) > 0 && files.is_empty() {
                return Err(Error::Data(format!("no source files in {}", dir.display())));
            }
            map.insert(split, files);
        }
    }
    let speakers = speech
        .iter()
        .map(|(s, f)| (*s, f.iter().map(|p| speaker_id(&stem(p)).to_string()).collect()))
        .collect();
    disjoint("speaker", &speakers)?;
    let noise_ids = noise
        .iter()
        .map(|(s, f)| (*s, f.iter().map(|p| stem(p)).collect()))
        .collect();
    disjoint("noise file", &noise_ids)?;
    Ok(Sources { speech, noise })
}

fn record_id(split: Split, index: usize) -> String {
    format!("{}_{index:06}", split.name())
}

fn record_stream(split: Split, index: usize) -> u64 {
    ((split as u64 + 1) << 32) | index as u64
}

struct Job {
    split: Split,
    index: usize,
}

struct Ctx<'a> {
    spec: &'a CorpusSpec,
    sources: &'a Sources,
    dec: &'a BinauralDecoder,
    comp: Option<&'a IirFilter>,
}

fn record_json_path(out: &Path, id: &str) -> PathBuf {
    out.join(RECORD_DIR).join(format!("{id}.json"))
}

fn load_completed(out: &Path, id: &str) -> Option<UtteranceRecord> {
    let text = std::fs::read_to_string(record_json_path(out, id)).ok()?;
    let rec: UtteranceRecord = serde_json::from_str(&text).ok()?;
    (out.join(&rec.input_path).is_file() && out.join(&rec.target_path).is_file()).then_some(rec)
}

fn render_record(ctx: &Ctx, job: &Job) -> Result<UtteranceRecord> {
    let spec = ctx.spec;
    let id = record_id(job.split, job.index);
    if spec.resume {
        if let Some(rec) = load_completed(&spec.output_dir, &id) {
            return Ok(rec);
        }
    }
    let mut rng = StreamRng::new(spec.seed, record_stream(job.split, job.index));
    let speech_files = &ctx.sources.speech[&job.split];
    let noise_files = &ctx.sources.noise[&job.split];
    let speech_path = &speech_files[rng.below(speech_files.len() as u64) as usize];
    let noise_path = &noise_files[rng.below(noise_files.len() as u64) as usize];
    let aug = if job.split == Split::Tr {
        spec.augmentation.draw(&mut rng)
    } else {
        AugmentationSpec::default()
    };
    let mut scene = None;
    let mut last_err = None;
    for _ in 0..SCENE_ATTEMPTS {
        match sample_scene(rng.next_u64()) {
            Ok(s) => {
                scene = Some(s);
                break;
            }
            Err(e) => last_err = Some(e),
        }
    }
    let scene = match (scene, last_err) {
        (Some(s), _) => s,
        (None, Some(e)) => return Err(e),
        (None, None) => return Err(Error::Data("no scene drawn".into())),
    };
    let noise_u = rng.unit();

    let (sfs, raw) = read_mono(speech_path)?;
    let speech = if sfs == spec.fs { raw } else { resample(&raw, sfs, spec.fs) };
    let chunk_len = (spec.chunk_seconds * spec.fs).round() as usize;
    let (speech_start, speech_padded, chunk) = if speech.len() >= chunk_len {
        let c = select_chunk(&speech, spec.chunk_seconds, spec.fs)?;
        (c.start, false, c.samples)
    } else {
        let mut padded = speech;
        padded.resize(chunk_len, 0.0);
        (0, true, padded)
    };

    let raw_noise = read_binaural(noise_path)?;
    let noise = if raw_noise.fs == spec.fs {
        raw_noise
    } else {
        BinauralSignal {
            fs: spec.fs,
            left: resample(&raw_noise.left, raw_noise.fs, spec.fs),
            right: resample(&raw_noise.right, raw_noise.fs, spec.fs),
        }
    };
    let needed = (chunk_len as f64 / aug.stretch.unwrap_or(1.0)).ceil() as usize + 1;
    let (noise_offset, segment) = if noise.len() > needed {
        let off = ((noise_u * (noise.len() - needed + 1) as f64) as usize).min(noise.len() - needed);
        let seg = noise.map_ears(|x| x[off..off + needed].to_vec());
        (off, seg)
    } else {
        (0, noise)
    };

    let ex = build_training_example(&scene, &chunk, &segment, ctx.dec, &aug, ctx.comp)?;
    let out = &spec.output_dir;
    let input_path = format!("{}/{id}_input.wav", job.split.name());
    let target_path = format!("{}/{id}_target.wav", job.split.name());
    write_binaural(&out.join(&input_path), &ex.input)?;
    write_binaural(&out.join(&target_path), &ex.target)?;
    let rec = UtteranceRecord {
        id: id.clone(),
        split: job.split,
        speech_id: stem(speech_path),
        speaker_id: speaker_id(&stem(speech_path)).to_string(),
        noise_id: stem(noise_path),
        speech_start,
        speech_padded,
        noise_offset,
        scene,
        augmentation: aug,
        noise_gain: ex.noise_gain,
        measured_snr_db: binaural_snr_db(&ex.reverberant, &ex.noise),
        compensated: ctx.comp.is_some(),
        input_path,
        target_path,
    };
    let json_path = record_json_path(out, &id);
    let tmp = json_path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_string_pretty(&rec)? + "\n").map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, &json_path).map_err(|e| Error::io(&json_path, e))?;
    Ok(rec)
}

/// Renders the requested number of records per split with `dec` (already at
/// `spec.fs`) and writes `manifest.jsonl` in the output directory. Records
/// that fail are reported in the outcome and left out of the manifest.
pub fn generate_corpus(
    spec: &CorpusSpec,
    dec: &BinauralDecoder,
    comp: Option<&IirFilter>,
    decoder_fingerprint: &str,
) -> Result<CorpusOutcome> {
    spec.augmentation.validate()?;
    if (dec.fs - spec.fs).abs() > 1e-9 {
        return Err(Error::Mismatch(format!(
            "decoder at {} Hz, corpus at {} Hz",
            dec.fs, spec.fs
        )));
    }
    if !(spec.chunk_seconds > 0.0) {
        return Err(Error::Config("chunk duration must be positive".into()));
    }
    let sources = collect_sources(spec)?;
    let out = &spec.output_dir;
    for dir in [out.join(RECORD_DIR)]
        .into_iter()
        .chain(Split::ALL.iter().map(|s| out.join(s.name())))
    {
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let jobs: Vec<Job> = Split::ALL
        .iter()
        .flat_map(|&split| (0..spec.counts.get(split)).map(move |index| Job { split, index }))
        .collect();
    let ctx = Ctx {
        spec,
        sources: &sources,
        dec,
        comp,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<UtteranceRecord>> =
        pool.install(|| jobs.par_iter().map(|j| render_record(&ctx, j)).collect());
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (job, res) in jobs.iter().zip(results) {
        match res {
            Ok(r) => records.push(r),
            Err(e) => {
                let id = record_id(job.split, job.index);
                log::error!("record {id} failed: {e}");
                failures.push((id, e.to_string()));
            }
        }
    }
    let manifest = DatasetManifest {
        header: ManifestHeader {
            schema_version: MANIFEST_SCHEMA_VERSION,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            decoder_fingerprint: decoder_fingerprint.to_string(),
            fs: spec.fs,
            seed: spec.seed,
            records: records.len(),
        },
        records,
    };
    manifest.write(&out.join(MANIFEST_FILE))?;
    Ok(CorpusOutcome { manifest, failures })
}
