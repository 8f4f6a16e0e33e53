//! 32-bit float multichannel WAV reading and writing.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::signal::{AmbiSignal, BinauralSignal, MultiSignal};

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> Error + '_ {
    move |source| match source {
        hound::Error::IoError(e) => Error::io(path, e),
        source => Error::Wav {
            path: path.to_path_buf(),
            source,
        },
    }
}

/// Writes channels of equal length as interleaved 32-bit float samples.
pub fn write_wav(path: &Path, fs: f64, channels: &[Vec<f64>]) -> Result<()> {
    if channels.is_empty() || channels.len() > u16::MAX as usize {
        return Err(Error::InvalidArgument(format!(
            "cannot write {} channels",
            channels.len()
        )));
    }
    let len = channels[0].len();
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::Mismatch("channels of unequal length".into()));
    }
    let rate = fs.round();
    if !(rate >= 1.0 && rate <= u32::MAX as f64) || (rate - fs).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "sample rate {fs} is not a positive integer"
        )));
    }
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate: rate as u32,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec).map_err(wav_err(path))?;
    for i in 0..len {
        for c in channels {
            w.write_sample(c[i] as f32).map_err(wav_err(path))?;
        }
    }
    w.finalize().map_err(wav_err(path))
}

/// Reads a WAV file into de-interleaved channels. Integer formats are scaled
/// to [-1, 1).
pub fn read_wav(path: &Path) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut r = WavReader::open(path).map_err(wav_err(path))?;
    let spec = r.spec();
    let nch = spec.channels as usize;
    let samples: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => r
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err(path))?,
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            r.samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err(path))?
        }
    };
    let frames = samples.len() / nch.max(1);
    let mut channels = vec![Vec::with_capacity(frames); nch];
    for frame in samples.chunks_exact(nch) {
        for (c, v) in channels.iter_mut().zip(frame) {
            c.push(*v);
        }
    }
    Ok((spec.sample_rate as f64, channels))
}

pub fn write_binaural(path: &Path, sig: &BinauralSignal) -> Result<()> {
    write_wav(path, sig.fs, &[sig.left.clone(), sig.right.clone()])
}

pub fn read_binaural(path: &Path) -> Result<BinauralSignal> {
    let (fs, mut ch) = read_wav(path)?;
    if ch.len() != 2 {
        return Err(Error::Data(format!(
            "{}: expected 2 channels, found {}",
            path.display(),
            ch.len()
        )));
    }
    let right = ch.pop().unwrap_or_default();
    let left = ch.pop().unwrap_or_default();
    BinauralSignal::new(fs, left, right)
}

pub fn write_ambi(path: &Path, sig: &AmbiSignal) -> Result<()> {
    write_wav(path, sig.fs, &sig.channels)
}

/// Reads an ACN-ordered file; the channel count must be a square.
pub fn read_ambi(path: &Path) -> Result<AmbiSignal> {
    let (fs, ch) = read_wav(path)?;
    let order = (ch.len() as f64).sqrt().round() as usize;
    if order == 0 || (order) * (order) != ch.len() {
        return Err(Error::Data(format!(
            "{}: {} channels is not a full Ambisonics order",
            path.display(),
            ch.len()
        )));
    }
    AmbiSignal::new(order - 1, fs, ch)
}

pub fn write_multi(path: &Path, sig: &MultiSignal) -> Result<()> {
    write_wav(path, sig.fs, &sig.channels)
}

/// Reads a mono file, or the mean of all channels when there are several.
pub fn read_mono(path: &Path) -> Result<(f64, Vec<f64>)> {
    let (fs, ch) = read_wav(path)?;
    match ch.len() {
        0 => Err(Error::Data(format!("{}: no channels", path.display()))),
        1 => Ok((fs, ch.into_iter().next().unwrap_or_default())),
        n => {
            let len = ch[0].len();
            let mean = (0..len)
                .map(|i| ch.iter().map(|c| c[i]).sum::<f64>() / n as f64)
                .collect();
            Ok((fs, mean))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_roundtrip_with_many_channels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let channels: Vec<Vec<f64>> = (0..121)
            .map(|c| (0..50).map(|i| ((c * 50 + i) as f32 * 1e-3) as f64).collect())
            .collect();
        write_wav(&path, 16_000.0, &channels).unwrap();
        let (fs, back) = read_wav(&path).unwrap();
        assert_eq!(fs, 16_000.0);
        assert_eq!(back, channels);
        let ambi = read_ambi(&path).unwrap();
        assert_eq!(ambi.order, 10);
    }

    #[test]
    fn rejects_fractional_rate_and_ragged_channels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.wav");
        assert!(write_wav(&path, 44_100.5, &[vec![0.0]]).is_err());
        assert!(write_wav(&path, 8000.0, &[vec![0.0], vec![]]).is_err());
    }
}
