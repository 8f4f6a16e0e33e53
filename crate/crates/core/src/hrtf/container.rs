//! On-disk HRTF containers.
//!
//! Directory form: `manifest.json` plus one two-channel (left, right) float
//! WAV per direction. Interleaved form: a single WAV whose channels are
//! `L0, R0, L1, R1, ...`, with the same manifest stored next to it as
//! `<stem>.json`. See [`HrtfManifest`] for the fields.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, write_wav};
use crate::error::{Error, Result};
use crate::sh::SphericalDirection;

use super::{HrtfMetadata, HrtfSet};

pub const MANIFEST_FORMAT: &str = "ambiscene-hrtf";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrtfEntry {
    /// Directory form only: file name relative to the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    /// Optional quadrature weight; weights must be given for all or none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrtfManifest {
    pub format: String,
    pub version: u32,
    pub fs: f64,
    pub ir_length: usize,
    /// Interleaved form only: the audio file name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interleaved_file: Option<String>,
    pub directions: Vec<HrtfEntry>,
    #[serde(default)]
    pub metadata: HrtfMetadata,
}

fn manifest_for(set: &HrtfSet, files: Option<Vec<String>>, interleaved: Option<String>) -> HrtfManifest {
    HrtfManifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        fs: set.fs,
        ir_length: set.ir_len(),
        interleaved_file: interleaved,
        directions: set
            .directions
            .iter()
            .zip(&set.weights)
            .enumerate()
            .map(|(i, (d, w))| HrtfEntry {
                file: files.as_ref().map(|f| f[i].clone()),
                azimuth_deg: d.azimuth_deg(),
                elevation_deg: d.elevation_deg(),
                weight: Some(*w),
            })
            .collect(),
        metadata: set.meta.clone(),
    }
}

fn write_json(path: &Path, manifest: &HrtfManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_manifest(path: &Path) -> Result<HrtfManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: HrtfManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: invalid HRTF manifest: {e}", path.display())))?;
    if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
        return Err(Error::Data(format!(
            "{}: unsupported HRTF manifest {} v{}",
            path.display(),
            m.format,
            m.version
        )));
    }
    Ok(m)
}

fn weights_of(m: &HrtfManifest) -> Result<Option<Vec<f64>>> {
    let given: Vec<f64> = m.directions.iter().filter_map(|e| e.weight).collect();
    match given.len() {
        0 => Ok(None),
        n if n == m.directions.len() => Ok(Some(given)),
        _ => Err(Error::Data("quadrature weights must be given for all directions or none".into())),
    }
}

fn assemble(m: HrtfManifest, left: Vec<Vec<f64>>, right: Vec<Vec<f64>>) -> Result<HrtfSet> {
    let dirs = m
        .directions
        .iter()
        .map(|e| SphericalDirection::from_degrees(e.azimuth_deg, e.elevation_deg))
        .collect();
    if left.iter().chain(&right).any(|ir| ir.len() != m.ir_length) {
        return Err(Error::Data(format!(
            "impulse responses do not match the declared length {}",
            m.ir_length
        )));
    }
    let mut set = HrtfSet::new(m.fs, dirs, left, right, weights_of(&m)?)?;
    set.meta = m.metadata;
    Ok(set)
}

pub fn write_hrtf_dir(set: &HrtfSet, dir: &Path) -> Result<()> {
    set.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files: Vec<String> = (0..set.len()).map(|i| format!("dir_{i:04}.wav")).collect();
    for (i, f) in files.iter().enumerate() {
        write_wav(&dir.join(f), set.fs, &[set.left[i].clone(), set.right[i].clone()])?;
    }
    write_json(&dir.join("manifest.json"), &manifest_for(set, Some(files), None))
}

pub fn read_hrtf_dir(dir: &Path) -> Result<HrtfSet> {
    let m = read_manifest(&dir.join("manifest.json"))?;
    let mut left = Vec::with_capacity(m.directions.len());
    let mut right = Vec::with_capacity(m.directions.len());
    for e in &m.directions {
        let file = e
            .file
            .as_ref()
            .ok_or_else(|| Error::Data("manifest entry without a file".into()))?;
        let path = dir.join(file);
        let (fs, mut ch) = read_wav(&path)?;
        if fs != m.fs || ch.len() != 2 {
            return Err(Error::Data(format!(
                "{}: expected 2 channels at {} Hz, found {} at {fs} Hz",
                path.display(),
                m.fs,
                ch.len()
            )));
        }
        right.push(ch.pop().unwrap_or_default());
        left.push(ch.pop().unwrap_or_default());
    }
    assemble(m, left, right)
}

fn sidecar(wav: &Path) -> PathBuf {
    wav.with_extension("json")
}

pub fn write_hrtf_interleaved(set: &HrtfSet, wav: &Path) -> Result<()> {
    set.validate()?;
    let channels: Vec<Vec<f64>> = set
        .left
        .iter()
        .zip(&set.right)
        .flat_map(|(l, r)| [l.clone(), r.clone()])
        .collect();
    write_wav(wav, set.fs, &channels)?;
    let name = wav.file_name().map(|n| n.to_string_lossy().into_owned());
    write_json(&sidecar(wav), &manifest_for(set, None, name))
}

pub fn read_hrtf_interleaved(wav: &Path) -> Result<HrtfSet> {
    let m = read_manifest(&sidecar(wav))?;
    let (fs, ch) = read_wav(wav)?;
    if fs != m.fs || ch.len() != 2 * m.directions.len() {
        return Err(Error::Data(format!(
            "{}: expected {} channels at {} Hz, found {} at {fs} Hz",
            wav.display(),
            2 * m.directions.len(),
            m.fs,
            ch.len()
        )));
    }
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (i, c) in ch.into_iter().enumerate() {
        if i % 2 == 0 {
            left.push(c);
        } else {
            right.push(c);
        }
    }
    assemble(m, left, right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hrtf::synth::spherical_head_set;
    use crate::sh::lebedev50;

    fn close(a: &HrtfSet, b: &HrtfSet) {
        assert_eq!(a.len(), b.len());
        assert_eq!(a.fs, b.fs);
        for (x, y) in a.left.iter().chain(&a.right).zip(b.left.iter().chain(&b.right)) {
            for (u, v) in x.iter().zip(y) {
                assert!((u - v).abs() < 1e-6);
            }
        }
        for (x, y) in a.directions.iter().zip(&b.directions) {
            assert!(x.unit_vector().metric_distance(&y.unit_vector()) < 1e-9);
        }
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn directory_roundtrip() {
        let tmp = tempfile::tempdir().unwrap();
        let mut set = spherical_head_set(&lebedev50(), 48_000.0, 128);
        set.meta.measurement_distance = Some(1.2);
        write_hrtf_dir(&set, tmp.path()).unwrap();
        let back = read_hrtf_dir(tmp.path()).unwrap();
        close(&set, &back);
        assert_eq!(back.meta.measurement_distance, Some(1.2));
    }

    #[test]
    fn interleaved_roundtrip() {
        let tmp = tempfile::tempdir().unwrap();
        let set = spherical_head_set(&lebedev50(), 48_000.0, 64);
        let wav = tmp.path().join("set.wav");
        write_hrtf_interleaved(&set, &wav).unwrap();
        close(&set, &read_hrtf_interleaved(&wav).unwrap());
    }

    #[test]
    fn corrupted_manifest_is_a_data_error() {
        let tmp = tempfile::tempdir().unwrap();
        std::fs::write(tmp.path().join("manifest.json"), "{ not json").unwrap();
        let err = read_hrtf_dir(tmp.path()).unwrap_err();
        assert_eq!(err.kind(), crate::error::ErrorKind::Data);
    }
}
