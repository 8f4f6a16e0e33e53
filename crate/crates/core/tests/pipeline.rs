use std::path::{Path, PathBuf};

use ambiscene::audio::write_binaural;
use ambiscene::error::Error;
use ambiscene::pipeline::demo::{add_orthogonal_noise, make_demo_data, synthetic_speech};
use ambiscene::pipeline::{self, PipelineConfig};
use ambiscene::rng::StreamRng;
use ambiscene::signal::BinauralSignal;

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn demo(dir: &Path, seed: u64) -> PipelineConfig {
    let path = make_demo_data(dir, seed).unwrap();
    PipelineConfig::load(&path).unwrap()
}

#[test]
fn resumed_synthesis_matches_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let a = demo(&tmp.path().join("a"), 3);
    pipeline::fit_decoder(&a).unwrap();
    let full = pipeline::synth(&a, false).unwrap();
    assert!(full.failures.is_empty());
    assert_eq!(full.manifest.records.len(), 8);

    let b = demo(&tmp.path().join("b"), 3);
    pipeline::fit_decoder(&b).unwrap();
    pipeline::synth(&b, false).unwrap();
    let corpus = b.corpus_dir();
    // Simulate an interruption: some records never finished, one left a
    // partial output, and the manifest was not written.
    std::fs::remove_file(corpus.join("records/tr_000001.json")).unwrap();
    std::fs::remove_file(corpus.join("tr/tr_000001_input.wav")).unwrap();
    std::fs::remove_file(corpus.join("records/tt_000000.json")).unwrap();
    std::fs::write(corpus.join("cv/cv_000001_target.wav"), b"truncated").unwrap();
    std::fs::remove_file(corpus.join("records/cv_000001.json")).unwrap();
    std::fs::remove_file(corpus.join("manifest.jsonl")).unwrap();
    let resumed = pipeline::synth(&b, true).unwrap();
    assert!(resumed.failures.is_empty());

    let (ta, tb) = (tree(&a.corpus_dir()), tree(&corpus));
    let names = |t: &[(PathBuf, Vec<u8>)]| t.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>();
    assert_eq!(names(&ta), names(&tb));
    let differing: Vec<_> = ta.iter().zip(&tb).filter(|(x, y)| x.1 != y.1).map(|(x, _)| x.0.clone()).collect();
    assert!(differing.is_empty(), "{differing:?}");
}

#[test]
fn contaminated_splits_are_refused_before_rendering() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = demo(tmp.path(), 1);
    pipeline::fit_decoder(&cfg).unwrap();
    let src = tmp.path().join("speech/tr/spk01_00.wav");
    std::fs::copy(&src, tmp.path().join("speech/cv/spk01_99.wav")).unwrap();
    let err = pipeline::synth(&cfg, false).unwrap_err();
    assert!(matches!(err, Error::Contamination(_)), "{err}");
    assert!(!cfg.corpus_dir().join("manifest.jsonl").exists());
    let rendered = cfg.corpus_dir().join("tr");
    assert!(!rendered.exists() || std::fs::read_dir(&rendered).unwrap().next().is_none());
}

#[test]
fn synthesis_requires_a_fitted_decoder() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = demo(tmp.path(), 1);
    assert!(pipeline::synth(&cfg, false).is_err());
}

/// Writes references for two bundles and recordings for the given devices
/// and conditions; returns a config pointing at them.
fn evaluation_fixture(root: &Path, devices: &[&str], conditions: &[(&str, f64)], baseline: &str) -> PipelineConfig {
    let fs = 16_000.0;
    let mut rng = StreamRng::new(9, 0);
    for (bundle, f0) in [("party_0deg", 140.0), ("office_30deg_right", 190.0)] {
        let speech = synthetic_speech(&mut rng, fs, 2.0, f0);
        let right: Vec<f64> = speech.iter().map(|v| 0.6 * v).collect();
        let reference = BinauralSignal::new(fs, speech, right).unwrap();
        write_binaural(&root.join(format!("out/eval/{bundle}/reference.wav")), &reference).unwrap();
        for device in devices {
            for (condition, snr) in conditions {
                let est = BinauralSignal::new(
                    fs,
                    add_orthogonal_noise(&reference.left, &mut rng, *snr),
                    add_orthogonal_noise(&reference.right, &mut rng, *snr),
                )
                .unwrap();
                let path = root.join(format!("out/recordings/{device}/{condition}/{bundle}.wav"));
                write_binaural(&path, &est).unwrap();
            }
        }
    }
    let text = format!("output_dir = \"out\"\n[evaluate]\nbaseline = \"{baseline}\"\n");
    let path = root.join("config.toml");
    std::fs::write(&path, text).unwrap();
    PipelineConfig::load(&path).unwrap()
}

#[test]
fn evaluation_reports_benefit_over_baseline_per_device() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = evaluation_fixture(
        tmp.path(),
        &["hearing_aid_x", "hearing_aid_y"],
        &[("bypass", 0.0), ("processed", 12.0)],
        "bypass",
    );
    let report = pipeline::evaluate(&cfg).unwrap();
    assert_eq!(report.items.len(), 8);
    for it in &report.items {
        assert!(it.error.is_none(), "{:?}", it.error);
        let s = it.sisdr_db.unwrap();
        let d = it.delta_sisdr_db.unwrap();
        match it.condition.as_str() {
            "bypass" => {
                assert!((s - 0.0).abs() < 0.5, "{s}");
                assert_eq!(d, 0.0);
            }
            _ => {
                assert!((s - 12.0).abs() < 0.5, "{s}");
                assert!((d - 12.0).abs() < 1.0, "{d}");
            }
        }
    }
    for f in ["report.jsonl", "summary.json", "summary.txt"] {
        assert!(cfg.report_dir().join(f).is_file(), "{f}");
    }
}

#[test]
fn evaluation_without_baseline_omits_benefit() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = evaluation_fixture(tmp.path(), &["dev"], &[("processed", 8.0)], "bypass");
    let report = pipeline::evaluate(&cfg).unwrap();
    assert_eq!(report.items.len(), 2);
    assert!(report.items.iter().all(|it| it.sisdr_db.is_some() && it.delta_sisdr_db.is_none()));
    assert!(report.summary.iter().all(|r| r.mean_delta_sisdr_db.is_none()));
}

#[test]
fn example_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.toml");
    let cfg = PipelineConfig::load(&path).unwrap();
    assert_eq!(cfg.decoder.as_ref().unwrap().order, 10);
    assert_eq!(cfg.corpus.as_ref().unwrap().counts.tr, 20_000);
    assert_eq!(cfg.eval.as_ref().unwrap().rt60.len(), 3);
    assert!(cfg.eval.as_ref().unwrap().layout.is_file());
}
