//! Multichannel signal containers.

use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{invalid, Error, Result};

/// Number of ACN channels for a given Ambisonics order.
pub fn channel_count(order: usize) -> usize {
    (order + 1) * (order + 1)
}

/// Ambisonics (spherical-harmonic domain) signal, ACN channel order, SN3D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiSignal {
    pub order: usize,
    pub fs: f64,
    pub channels: Vec<Vec<f64>>,
}

impl AmbiSignal {
    pub fn new(order: usize, fs: f64, channels: Vec<Vec<f64>>) -> Result<Self> {
        if channels.len() != channel_count(order) {
            return Err(invalid(format!(
                "order {order} needs {} channels, got {}",
                channel_count(order),
                channels.len()
            )));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(invalid("ambisonics channels differ in length"));
        }
        Ok(Self {
            order,
            fs,
            channels,
        })
    }

    pub fn zeros(order: usize, fs: f64, len: usize) -> Self {
        Self {
            order,
            fs,
            channels: vec![vec![0.0; len]; channel_count(order)],
        }
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn energy(&self) -> f64 {
        self.channels.iter().map(|c| dsp::energy(c)).sum()
    }

    /// Convolves every channel with the same mono signal.
    pub fn convolve_mono(&self, x: &[f64]) -> AmbiSignal {
        AmbiSignal {
            order: self.order,
            fs: self.fs,
            channels: dsp::convolve_each(&self.channels, x),
        }
    }

    pub fn scaled(&self, g: f64) -> AmbiSignal {
        AmbiSignal {
            order: self.order,
            fs: self.fs,
            channels: self
                .channels
                .iter()
                .map(|c| c.iter().map(|v| v * g).collect())
                .collect(),
        }
    }

    /// Truncates or zero-pads every channel to `len` samples.
    pub fn with_len(mut self, len: usize) -> AmbiSignal {
        for c in &mut self.channels {
            c.resize(len, 0.0);
        }
        self
    }

    /// Sample-wise sum; shorter operand is zero-extended.
    pub fn add(&self, other: &AmbiSignal) -> Result<AmbiSignal> {
        if self.order != other.order || self.fs != other.fs {
            return Err(Error::Mismatch(format!(
                "cannot add order {} @ {} Hz to order {} @ {} Hz",
                self.order, self.fs, other.order, other.fs
            )));
        }
        let len = self.len().max(other.len());
        let channels = self
            .channels
            .iter()
            .zip(&other.channels)
            .map(|(a, b)| {
                let mut c = a.clone();
                c.resize(len, 0.0);
                dsp::accumulate(&mut c, b);
                c
            })
            .collect();
        Ok(AmbiSignal {
            order: self.order,
            fs: self.fs,
            channels,
        })
    }
}

/// Two-channel (left, right) ear signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinauralSignal {
    pub fs: f64,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl BinauralSignal {
    pub fn new(fs: f64, left: Vec<f64>, right: Vec<f64>) -> Result<Self> {
        if left.len() != right.len() {
            return Err(invalid("binaural channels differ in length"));
        }
        Ok(Self { fs, left, right })
    }

    pub fn zeros(fs: f64, len: usize) -> Self {
        Self {
            fs,
            left: vec![0.0; len],
            right: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    pub fn energy(&self) -> f64 {
        dsp::energy(&self.left) + dsp::energy(&self.right)
    }

    pub fn ear(&self, ear: Ear) -> &[f64] {
        match ear {
            Ear::Left => &self.left,
            Ear::Right => &self.right,
        }
    }

    pub fn scaled(&self, g: f64) -> BinauralSignal {
        BinauralSignal {
            fs: self.fs,
            left: self.left.iter().map(|v| v * g).collect(),
            right: self.right.iter().map(|v| v * g).collect(),
        }
    }

    pub fn with_len(mut self, len: usize) -> BinauralSignal {
        self.left.resize(len, 0.0);
        self.right.resize(len, 0.0);
        self
    }

    pub fn add(&self, other: &BinauralSignal) -> Result<BinauralSignal> {
        if self.fs != other.fs {
            return Err(Error::Mismatch(format!(
                "sample rates {} and {} differ",
                self.fs, other.fs
            )));
        }
        let mut left = self.left.clone();
        let mut right = self.right.clone();
        let len = left.len().max(other.len());
        left.resize(len, 0.0);
        right.resize(len, 0.0);
        dsp::accumulate(&mut left, &other.left);
        dsp::accumulate(&mut right, &other.right);
        Ok(BinauralSignal {
            fs: self.fs,
            left,
            right,
        })
    }

    pub fn sub(&self, other: &BinauralSignal) -> Result<BinauralSignal> {
        self.add(&other.scaled(-1.0))
    }

    /// Ear-averaged mono signal.
    pub fn mid(&self) -> Vec<f64> {
        self.left
            .iter()
            .zip(&self.right)
            .map(|(l, r)| 0.5 * (l + r))
            .collect()
    }

    pub fn map_ears(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> BinauralSignal {
        BinauralSignal {
            fs: self.fs,
            left: f(&self.left),
            right: f(&self.right),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ear {
    Left,
    Right,
}

/// Plain multichannel signal (e.g. loudspeaker feeds).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSignal {
    pub fs: f64,
    pub channels: Vec<Vec<f64>>,
}

impl MultiSignal {
    pub fn energy(&self) -> f64 {
        self.channels.iter().map(|c| dsp::energy(c)).sum()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
