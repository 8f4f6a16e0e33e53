//! Decoder artifacts: `left.wav` and `right.wav` (one channel per ACN
//! channel, 32-bit float) plus `decoder.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::{read_wav, write_wav};
use crate::error::{Error, Result};
use crate::sh::TaperWeights;

use super::BinauralDecoder;

pub const DECODER_FORMAT: &str = "ambiscene-decoder";
pub const DECODER_VERSION: u32 = 1;
const MANIFEST: &str = "decoder.json";
const LEFT: &str = "left.wav";
const RIGHT: &str = "right.wav";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderManifest {
    pub format: String,
    pub version: u32,
    pub order: usize,
    pub fs: f64,
    pub fc: f64,
    pub filter_len: usize,
    pub nfft: usize,
    pub latency: f64,
    pub regularization: f64,
    pub taper: TaperWeights,
    pub left_file: String,
    pub right_file: String,
    pub fingerprint: String,
}

#[derive(Serialize)]
struct FingerprintParams<'a> {
    order: usize,
    fs: f64,
    fc: f64,
    filter_len: usize,
    nfft: usize,
    latency: f64,
    regularization: f64,
    taper: &'a TaperWeights,
}

impl BinauralDecoder {
    /// SHA-256 over the parameters and the filters as stored (32-bit float),
    /// so a written and re-read decoder keeps its fingerprint.
    pub fn fingerprint(&self) -> String {
        let params = FingerprintParams {
            order: self.order,
            fs: self.fs,
            fc: self.fc,
            filter_len: self.filter_len,
            nfft: self.nfft,
            latency: self.latency,
            regularization: self.regularization,
            taper: &self.taper,
        };
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&params).unwrap_or_default());
        for f in self.left_filters.iter().chain(&self.right_filters) {
            for v in f {
                h.update((*v as f32).to_le_bytes());
            }
        }
        format!("{:x}", h.finalize())
    }
}

pub fn write_decoder(dec: &BinauralDecoder, dir: &Path) -> Result<DecoderManifest> {
    dec.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_wav(&dir.join(LEFT), dec.fs, &dec.left_filters)?;
    write_wav(&dir.join(RIGHT), dec.fs, &dec.right_filters)?;
    let manifest = DecoderManifest {
        format: DECODER_FORMAT.into(),
        version: DECODER_VERSION,
        order: dec.order,
        fs: dec.fs,
        fc: dec.fc,
        filter_len: dec.filter_len,
        nfft: dec.nfft,
        latency: dec.latency,
        regularization: dec.regularization,
        taper: dec.taper.clone(),
        left_file: LEFT.into(),
        right_file: RIGHT.into(),
        fingerprint: dec.fingerprint(),
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_decoder(dir: &Path) -> Result<BinauralDecoder> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: DecoderManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: invalid decoder manifest: {e}", path.display())))?;
    if m.format != DECODER_FORMAT || m.version != DECODER_VERSION {
        return Err(Error::Data(format!(
            "{}: unsupported decoder artifact {} v{}",
            path.display(),
            m.format,
            m.version
        )));
    }
    let load = |file: &str| -> Result<Vec<Vec<f64>>> {
        let (fs, ch) = read_wav(&dir.join(file))?;
        if fs != m.fs {
            return Err(Error::Data(format!("{file}: rate {fs} Hz, manifest says {} Hz", m.fs)));
        }
        Ok(ch)
    };
    let dec = BinauralDecoder {
        order: m.order,
        fs: m.fs,
        filter_len: m.filter_len,
        left_filters: load(&m.left_file)?,
        right_filters: load(&m.right_file)?,
        fc: m.fc,
        taper: m.taper,
        regularization: m.regularization,
        nfft: m.nfft,
        latency: m.latency,
    };
    dec.validate()?;
    if dec.fingerprint() != m.fingerprint {
        return Err(Error::Data(format!(
            "{}: decoder fingerprint does not match its filters",
            dir.display()
        )));
    }
    Ok(dec)
}
