//! Loudspeaker layouts and the in-phase Ambisonics decoder.
//!
//! Layout text format: one speaker per line as `name azimuth_deg elevation_deg`;
//! `#` starts a comment, blank lines are ignored.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sh::{eval_real_sh, SphericalDirection};
use crate::signal::{channel_count, AmbiSignal, MultiSignal};

/// Total sum of squares that [`normalize_feeds`] targets by default.
pub const DEFAULT_FEED_ENERGY: f64 = 1.0;
const DUPLICATE_TOLERANCE: f64 = 1e-6;
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Speaker {
    pub name: String,
    pub direction: SphericalDirection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoudspeakerLayout {
    pub name: String,
    pub speakers: Vec<Speaker>,
}

impl LoudspeakerLayout {
    pub fn new(name: impl Into<String>, speakers: Vec<Speaker>) -> Result<Self> {
        if speakers.is_empty() {
            return Err(Error::Config("loudspeaker layout is empty".into()));
        }
        for (i, a) in speakers.iter().enumerate() {
            for b in &speakers[..i] {
                if a.name == b.name {
                    return Err(Error::Config(format!("duplicate speaker name {}", a.name)));
                }
                let gap = a
                    .direction
                    .unit_vector()
                    .metric_distance(&b.direction.unit_vector());
                if gap < DUPLICATE_TOLERANCE {
                    return Err(Error::Config(format!(
                        "speakers {} and {} share a direction",
                        b.name, a.name
                    )));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            speakers,
        })
    }

    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut speakers = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Config(format!("layout line {}: expected `name azimuth elevation`", lineno + 1));
            if fields.len() != 3 {
                return Err(bad());
            }
            let az: f64 = fields[1].parse().map_err(|_| bad())?;
            let el: f64 = fields[2].parse().map_err(|_| bad())?;
            if !az.is_finite() || !(-90.0..=90.0).contains(&el) {
                return Err(bad());
            }
            speakers.push(Speaker {
                name: fields[0].to_string(),
                direction: SphericalDirection::from_degrees(az, el),
            });
        }
        Self::new(name, speakers)
    }

    /// Reads a layout file; the layout is named after the file stem.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(name, &text)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# {}\n", self.name);
        for s in &self.speakers {
            out.push_str(&format!(
                "{} {} {}\n",
                s.name,
                s.direction.azimuth_deg(),
                s.direction.elevation_deg()
            ));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.speakers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speakers.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LsMethod {
    /// Pseudo-inverse of the speaker re-encoding matrix.
    #[default]
    PseudoInverse,
    /// Scaled transpose, for (near) uniform layouts.
    Sampling,
}

/// Speakers x channels gain matrix with the in-phase weights already applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsDecoder {
    pub order: usize,
    pub gains: Vec<Vec<f64>>,
    pub in_phase: Vec<f64>,
}

impl LsDecoder {
    /// Speaker gains for a unit plane wave from `dir`.
    pub fn speaker_gains(&self, dir: &SphericalDirection) -> Vec<f64> {
        let y = eval_real_sh(self.order, dir).coeffs;
        self.gains
            .iter()
            .map(|row| row.iter().zip(&y).map(|(g, v)| g * v).sum())
            .collect()
    }

    pub fn decode(&self, sig: &AmbiSignal) -> Result<MultiSignal> {
        if sig.order != self.order {
            return Err(Error::Mismatch(format!(
                "signal order {} differs from loudspeaker decoder order {}",
                sig.order, self.order
            )));
        }
        let len = sig.len();
        let channels = self
            .gains
            .iter()
            .map(|row| {
                let mut out = vec![0.0; len];
                for (g, ch) in row.iter().zip(&sig.channels) {
                    if *g != 0.0 {
                        for (o, v) in out.iter_mut().zip(ch) {
                            *o += g * v;
                        }
                    }
                }
                out
            })
            .collect();
        Ok(MultiSignal { fs: sig.fs, channels })
    }
}

/// In-phase weights `g_n = N! (N+1)! / ((N+n+1)! (N-n)!)` for `n = 0..=N`,
/// so that `g_0 = 1`.
pub fn inphase_weights(order: usize) -> Vec<f64> {
    let n_big = order as f64;
    (0..=order)
        .map(|n| {
            // Product form of the factorial ratio, stable for large orders.
            let mut g = 1.0;
            for k in 0..n {
                g *= (n_big - k as f64) / (n_big + 2.0 + k as f64);
            }
            g
        })
        .collect()
}

pub fn fit_inphase_decoder(layout: &LoudspeakerLayout, order: usize) -> Result<LsDecoder> {
    fit_inphase_decoder_with(layout, order, LsMethod::PseudoInverse)
}

pub fn fit_inphase_decoder_with(layout: &LoudspeakerLayout, order: usize, method: LsMethod) -> Result<LsDecoder> {
    let s = layout.len();
    if s == 0 {
        return Err(Error::Config("loudspeaker layout is empty".into()));
    }
    let c = channel_count(order);
    if s < c {
        log::warn!(
            "layout {} has {s} speakers, fewer than the {c} recommended for order {order}",
            layout.name
        );
    }
    // Rows: speakers, columns: ACN channels.
    let mut y = DMatrix::<f64>::zeros(s, c);
    for (i, sp) in layout.speakers.iter().enumerate() {
        let v = eval_real_sh(order, &sp.direction).coeffs;
        for ch in 0..c {
            y[(i, ch)] = v[ch];
        }
    }
    let svd = y.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|v| **v > RANK_TOLERANCE * smax)
        .count();
    if rank < s.min(c) {
        return Err(Error::Config(format!(
            "layout {} is degenerate at order {order}: rank {rank} < {}",
            layout.name,
            s.min(c)
        )));
    }
    let degree = |ch: usize| crate::sh::acn_degree(ch);
    let base: DMatrix<f64> = match method {
        LsMethod::PseudoInverse => y
            .transpose()
            .pseudo_inverse(RANK_TOLERANCE * smax)
            .map_err(|e| Error::Numeric(format!("pseudo-inverse failed: {e}")))?,
        LsMethod::Sampling => {
            let mut d = y;
            for ch in 0..c {
                let w = (2 * degree(ch) + 1) as f64 / s as f64;
                let mut col = d.column_mut(ch);
                col *= w;
            }
            d
        }
    };
    let in_phase = inphase_weights(order);
    let gains: Vec<Vec<f64>> = (0..s)
        .map(|i| (0..c).map(|ch| base[(i, ch)] * in_phase[degree(ch)]).collect())
        .collect();
    if gains.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("loudspeaker decoder gains are not finite".into()));
    }
    Ok(LsDecoder {
        order,
        gains,
        in_phase,
    })
}

/// Zero-pads `sig` to `target_order`; existing channels are copied unchanged.
pub fn pad_ambisonics_order(sig: &AmbiSignal, target_order: usize) -> Result<AmbiSignal> {
    if target_order < sig.order {
        return Err(Error::InvalidArgument(format!(
            "cannot pad order {} down to {target_order}",
            sig.order
        )));
    }
    let mut channels = sig.channels.clone();
    channels.resize(channel_count(target_order), vec![0.0; sig.len()]);
    Ok(AmbiSignal {
        order: target_order,
        fs: sig.fs,
        channels,
    })
}

/// Scales all feeds by one common gain so their total sum of squares is
/// `reference`.
pub fn normalize_feeds(feeds: &MultiSignal, reference: f64) -> Result<MultiSignal> {
    let e = feeds.energy();
    if e <= 0.0 || !e.is_finite() {
        return Err(Error::Silent("loudspeaker feeds"));
    }
    let g = (reference / e).sqrt();
    Ok(MultiSignal {
        fs: feeds.fs,
        channels: feeds
            .channels
            .iter()
            .map(|c| c.iter().map(|v| v * g).collect())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use proptest::prelude::*;

    fn layout_from(name: &str, dirs: &[[f64; 3]]) -> LoudspeakerLayout {
        let speakers = dirs
            .iter()
            .enumerate()
            .map(|(i, v)| Speaker {
                name: format!("s{i}"),
                direction: SphericalDirection::from_vector(nalgebra::Vector3::new(v[0], v[1], v[2])),
            })
            .collect();
        LoudspeakerLayout::new(name, speakers).unwrap()
    }

    fn tetrahedron() -> LoudspeakerLayout {
        layout_from(
            "tetrahedron",
            &[[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]],
        )
    }

    fn octahedron() -> LoudspeakerLayout {
        layout_from(
            "octahedron",
            &[
                [1.0, 0.0, 0.0],
                [-1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, -1.0, 0.0],
                [0.0, 0.0, 1.0],
                [0.0, 0.0, -1.0],
            ],
        )
    }

    fn icosahedron() -> LoudspeakerLayout {
        let p = (1.0 + 5f64.sqrt()) / 2.0;
        let mut v = Vec::new();
        for a in [-1.0, 1.0] {
            for b in [-p, p] {
                v.push([0.0, a, b]);
                v.push([a, b, 0.0]);
                v.push([b, 0.0, a]);
            }
        }
        layout_from("icosahedron", &v)
    }

    fn random_dir(rng: &mut StreamRng) -> SphericalDirection {
        let z = rng.uniform(-1.0, 1.0);
        SphericalDirection::new(rng.uniform(-std::f64::consts::PI, std::f64::consts::PI), z.asin())
    }

    #[test]
    fn first_order_weight_is_one_third() {
        let g = inphase_weights(1);
        assert_eq!(g[0], 1.0);
        assert!((g[1] - 1.0 / 3.0).abs() < 1e-15);
        let g5 = inphase_weights(5);
        // 5! 6! / (11! 0!)
        assert!((g5[5] - 120.0 * 720.0 / 39_916_800.0).abs() < 1e-15);
    }

    #[test]
    fn weights_are_monotone() {
        for order in 1..=12 {
            let g = inphase_weights(order);
            assert!(g.windows(2).all(|w| w[1] <= w[0] && w[1] > 0.0));
        }
    }

    #[test]
    fn t_designs_give_non_negative_gains() {
        let mut rng = StreamRng::new(7, 0);
        for (layout, order) in [(tetrahedron(), 1), (octahedron(), 1), (icosahedron(), 1), (icosahedron(), 2)] {
            for method in [LsMethod::PseudoInverse, LsMethod::Sampling] {
                let dec = fit_inphase_decoder_with(&layout, order, method).unwrap();
                for _ in 0..500 {
                    let g = dec.speaker_gains(&random_dir(&mut rng));
                    assert!(g.iter().all(|v| *v >= -1e-12), "{} order {order}", layout.name);
                }
            }
        }
    }

    #[test]
    fn pinv_and_sampling_agree_on_a_design() {
        let a = fit_inphase_decoder_with(&icosahedron(), 2, LsMethod::PseudoInverse).unwrap();
        let b = fit_inphase_decoder_with(&icosahedron(), 2, LsMethod::Sampling).unwrap();
        for (x, y) in a.gains.iter().flatten().zip(b.gains.iter().flatten()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_degenerate_and_duplicate_layouts() {
        let ring: Vec<[f64; 3]> = (0..8)
            .map(|i| {
                let a = i as f64 * std::f64::consts::PI / 4.0;
                [a.cos(), a.sin(), 0.0]
            })
            .collect();
        let err = fit_inphase_decoder(&layout_from("ring", &ring), 1).unwrap_err();
        assert_eq!(err.kind(), crate::error::ErrorKind::Config);
        assert!(LoudspeakerLayout::parse("x", "a 0 0\nb 360 0\n").is_err());
        assert!(LoudspeakerLayout::parse("x", "a 0 0\na 90 0\n").is_err());
        assert!(LoudspeakerLayout::parse("x", "").is_err());
    }

    #[test]
    fn layout_text_roundtrip() {
        let text = "# demo\nfront 0 0   # ahead\n\nleft 90 0\nup 0 90\nback 180 -30\n";
        let l = LoudspeakerLayout::parse("demo", text).unwrap();
        assert_eq!(l.len(), 4);
        assert_eq!(l.speakers[1].name, "left");
        let back = LoudspeakerLayout::parse("demo", &l.to_text()).unwrap();
        for (a, b) in l.speakers.iter().zip(&back.speakers) {
            assert!(a.direction.unit_vector().metric_distance(&b.direction.unit_vector()) < 1e-12);
        }
    }

    #[test]
    fn padding_adds_exact_zeros() {
        let sig = AmbiSignal::new(1, 16_000.0, (0..4).map(|c| vec![c as f64 + 0.5; 10]).collect()).unwrap();
        let p = pad_ambisonics_order(&sig, 10).unwrap();
        assert_eq!(p.channels.len(), 121);
        assert_eq!(&p.channels[..4], &sig.channels[..]);
        assert!(p.channels[4..].iter().flatten().all(|v| v.to_bits() == 0));
        assert_eq!(p.energy(), sig.energy());
        assert_eq!(pad_ambisonics_order(&sig, 1).unwrap(), sig);
        assert!(pad_ambisonics_order(&p, 3).is_err());
    }

    #[test]
    fn normalization_rejects_silence() {
        let z = MultiSignal {
            fs: 16_000.0,
            channels: vec![vec![0.0; 4]; 3],
        };
        assert!(normalize_feeds(&z, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn normalization_hits_the_reference(
            data in prop::collection::vec(-1.0f64..1.0, 6..60),
            reference in 0.01f64..10.0,
        ) {
            prop_assume!(data.iter().any(|v| v.abs() > 1e-3));
            let n = data.len() / 3;
            let feeds = MultiSignal {
                fs: 48_000.0,
                channels: data.chunks(n).take(3).map(|c| c.to_vec()).collect(),
            };
            let out = normalize_feeds(&feeds, reference).unwrap();
            prop_assert!((out.energy() - reference).abs() <= 1e-9 * reference);
            let scaled = MultiSignal {
                fs: feeds.fs,
                channels: feeds.channels.iter().map(|c| c.iter().map(|v| v * 7.0).collect()).collect(),
            };
            let out7 = normalize_feeds(&scaled, reference).unwrap();
            for (a, b) in out.channels.iter().flatten().zip(out7.channels.iter().flatten()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
