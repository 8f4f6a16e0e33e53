//! Evaluation of recorded or simulated device outputs against scene
//! references, with per-item records, aggregate means and external metric
//! adapters.
//!
//! Recordings live at `<root>/<device>/<condition>/<scene>.wav`.
//!
//! An external metric is an executable called as
//! `command... <reference.wav> <estimate.wav> <audiogram>` that prints one
//! number on its last line of standard output.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{read_binaural, write_binaural, write_wav};
use crate::error::{Error, Result};
use crate::signal::{BinauralSignal, Ear};

use super::{align_xcorr, normalize_level, sisdr_best_ear};

/// Hearing thresholds (frequency in Hz : dB HL) of a flat normal-hearing audiogram.
pub const FLAT_AUDIOGRAM: &str = "250:0,500:0,1000:0,2000:0,3000:0,4000:0,6000:0,8000:0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalMetric {
    pub name: String,
    /// Program followed by fixed arguments.
    pub command: Vec<String>,
    /// Evaluate each ear on mono files and keep the better value.
    #[serde(default)]
    pub best_ear: bool,
}

impl ExternalMetric {
    fn run(&self, reference: &Path, estimate: &Path, audiogram: &str) -> Result<f64> {
        let (prog, args) = self
            .command
            .split_first()
            .ok_or_else(|| Error::Config(format!("metric {} has an empty command", self.name)))?;
        let out = Command::new(prog)
            .args(args)
            .arg(reference)
            .arg(estimate)
            .arg(audiogram)
            .output()
            .map_err(|e| Error::io(prog, e))?;
        if !out.status.success() {
            return Err(Error::Data(format!(
                "metric {} exited with {}: {}",
                self.name,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let stdout = String::from_utf8_lossy(&out.stdout);
        let line = stdout.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
        line.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Data(format!("metric {} printed {line:?}, not a number", self.name)))
    }

    /// Writes the pair under `work_dir` with the `tag` prefix, runs the
    /// metric and removes the files.
    pub fn evaluate(
        &self,
        reference: &BinauralSignal,
        estimate: &BinauralSignal,
        audiogram: &str,
        work_dir: &Path,
        tag: &str,
    ) -> Result<f64> {
        let path = |what: &str| work_dir.join(format!("{tag}_{}_{what}.wav", self.name));
        let mut written = Vec::new();
        let result = (|| {
            if self.best_ear {
                let mut best = f64::NEG_INFINITY;
                for ear in [Ear::Left, Ear::Right] {
                    let (r, e) = (path(&format!("ref_{ear:?}")), path(&format!("est_{ear:?}")));
                    write_wav(&r, reference.fs, &[reference.ear(ear).to_vec()])?;
                    write_wav(&e, estimate.fs, &[estimate.ear(ear).to_vec()])?;
                    written.extend([r.clone(), e.clone()]);
                    best = best.max(self.run(&r, &e, audiogram)?);
                }
                Ok(best)
            } else {
                let (r, e) = (path("ref"), path("est"));
                write_binaural(&r, reference)?;
                write_binaural(&e, estimate)?;
                written.extend([r.clone(), e.clone()]);
                self.run(&r, &e, audiogram)
            }
        })();
        for p in written {
            let _ = std::fs::remove_file(p);
        }
        result
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EvalItem {
    pub device: String,
    pub scene: String,
    pub condition: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSpec {
    /// Condition that the benefit of every other condition is measured against.
    pub baseline: String,
    pub max_lag_s: f64,
    pub level_dbfs: f64,
    pub audiogram: String,
    pub external: Vec<ExternalMetric>,
    /// Scratch directory for external metric inputs.
    pub work_dir: PathBuf,
}

impl Default for EvaluationSpec {
    fn default() -> Self {
        Self {
            baseline: "bypass".into(),
            max_lag_s: super::DEFAULT_MAX_LAG_S,
            level_dbfs: super::DEFAULT_LEVEL_DBFS,
            audiogram: FLAT_AUDIOGRAM.into(),
            external: Vec::new(),
            work_dir: std::env::temp_dir(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemReport {
    pub device: String,
    pub scene: String,
    pub condition: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lag: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ear: Option<Ear>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sisdr_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_sisdr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub external: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub delta_external: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    /// Device name, or `*` for the mean over all devices.
    pub device: String,
    pub condition: String,
    pub items: usize,
    pub mean_sisdr_db: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_delta_sisdr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub external: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub delta_external: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub items: Vec<ItemReport>,
    pub summary: Vec<SummaryRow>,
}

/// Lists `<root>/<device>/<condition>/<scene>.wav`, sorted.
pub fn discover_recordings(root: &Path) -> Result<Vec<EvalItem>> {
    let subdirs = |dir: &Path| -> Result<Vec<PathBuf>> {
        let mut v = Vec::new();
        for e in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let p = e.map_err(|e| Error::io(dir, e))?.path();
            v.push(p);
        }
        v.sort();
        Ok(v)
    };
    let name = |p: &Path| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut items = Vec::new();
    for device in subdirs(root)?.into_iter().filter(|p| p.is_dir()) {
        for cond in subdirs(&device)?.into_iter().filter(|p| p.is_dir()) {
            for file in subdirs(&cond)? {
                if file.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
                    items.push(EvalItem {
                        device: name(&device),
                        condition: name(&cond),
                        scene: file
                            .file_stem()
                            .map(|s| s.to_string_lossy().into_owned())
                            .unwrap_or_default(),
                        path: file,
                    });
                }
            }
        }
    }
    Ok(items)
}

struct Scored {
    lag: i64,
    ear: Ear,
    sisdr: f64,
    external: BTreeMap<String, f64>,
}

fn score(item: &EvalItem, reference: &BinauralSignal, spec: &EvaluationSpec) -> Result<Scored> {
    let est = read_binaural(&item.path)?;
    let aligned = align_xcorr(reference, &est, spec.max_lag_s)?;
    let r = normalize_level(&aligned.reference, spec.level_dbfs)?;
    let e = normalize_level(&aligned.estimate, spec.level_dbfs)?;
    let (sisdr, ear) = sisdr_best_ear(&e, &r)?;
    let tag = format!("{}_{}_{}", item.device, item.condition, item.scene);
    let mut external = BTreeMap::new();
    for m in &spec.external {
        external.insert(m.name.clone(), m.evaluate(&r, &e, &spec.audiogram, &spec.work_dir, &tag)?);
    }
    Ok(Scored {
        lag: aligned.lag,
        ear,
        sisdr,
        external,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn summarize(items: &[ItemReport]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String), Vec<&ItemReport>> = BTreeMap::new();
    for it in items.iter().filter(|i| i.sisdr_db.is_some()) {
        groups
            .entry((it.device.clone(), it.condition.clone()))
            .or_default()
            .push(it);
        groups
            .entry(("*".into(), it.condition.clone()))
            .or_default()
            .push(it);
    }
    groups
        .into_iter()
        .map(|((device, condition), rows)| {
            let s: Vec<f64> = rows.iter().filter_map(|r| r.sisdr_db).collect();
            let d: Vec<f64> = rows.iter().filter_map(|r| r.delta_sisdr_db).collect();
            let names: BTreeSet<&String> = rows.iter().flat_map(|r| r.external.keys()).collect();
            let mut external = BTreeMap::new();
            let mut delta_external = BTreeMap::new();
            for n in names {
                let v: Vec<f64> = rows.iter().filter_map(|r| r.external.get(n).copied()).collect();
                external.insert(n.clone(), mean(&v));
                let dv: Vec<f64> = rows.iter().filter_map(|r| r.delta_external.get(n).copied()).collect();
                if !dv.is_empty() {
                    delta_external.insert(n.clone(), mean(&dv));
                }
            }
            SummaryRow {
                device,
                condition,
                items: s.len(),
                mean_sisdr_db: mean(&s),
                mean_delta_sisdr_db: (!d.is_empty()).then(|| mean(&d)),
                external,
                delta_external,
            }
        })
        .collect()
}

/// Scores every item against the reference of its scene. Items are
/// processed in sorted order, so the report does not depend on the order
/// of `items`. Benefits are computed against the baseline condition of the
/// same device and scene; when that is missing they are left out.
pub fn evaluate_set(
    references: &BTreeMap<String, BinauralSignal>,
    items: &[EvalItem],
    spec: &EvaluationSpec,
) -> Result<MetricReport> {
    if !spec.external.is_empty() {
        std::fs::create_dir_all(&spec.work_dir).map_err(|e| Error::io(&spec.work_dir, e))?;
    }
    let mut items = items.to_vec();
    items.sort();
    let scored: Vec<Result<Scored>> = items
        .par_iter()
        .map(|it| match references.get(&it.scene) {
            Some(r) => score(it, r, spec),
            None => Err(Error::Data(format!("no reference for scene {}", it.scene))),
        })
        .collect();
    let mut out: Vec<ItemReport> = items
        .iter()
        .zip(scored)
        .map(|(it, s)| {
            let mut rep = ItemReport {
                device: it.device.clone(),
                scene: it.scene.clone(),
                condition: it.condition.clone(),
                lag: None,
                ear: None,
                sisdr_db: None,
                delta_sisdr_db: None,
                external: BTreeMap::new(),
                delta_external: BTreeMap::new(),
                error: None,
            };
            match s {
                Ok(s) => {
                    rep.lag = Some(s.lag);
                    rep.ear = Some(s.ear);
                    rep.sisdr_db = Some(s.sisdr);
                    rep.external = s.external;
                }
                Err(e) => {
                    log::warn!("{}/{}/{}: {e}", it.device, it.condition, it.scene);
                    rep.error = Some(e.to_string());
                }
            }
            rep
        })
        .collect();

    let baselines: BTreeMap<(String, String), (f64, BTreeMap<String, f64>)> = out
        .iter()
        .filter(|r| r.condition == spec.baseline)
        .filter_map(|r| r.sisdr_db.map(|v| ((r.device.clone(), r.scene.clone()), (v, r.external.clone()))))
        .collect();
    if baselines.is_empty() {
        log::warn!("no {} recordings found; benefits are omitted", spec.baseline);
    }
    for r in &mut out {
        if let (Some(v), Some((b, bext))) = (r.sisdr_db, baselines.get(&(r.device.clone(), r.scene.clone()))) {
            r.delta_sisdr_db = Some(v - b);
            for (k, x) in &r.external {
                if let Some(bx) = bext.get(k) {
                    r.delta_external.insert(k.clone(), x - bx);
                }
            }
        }
    }
    let summary = summarize(&out);
    Ok(MetricReport { items: out, summary })
}

/// Replaces device names by `device-A`, `device-B`, ... in sorted order of
/// the original names.
pub fn anonymize(report: &MetricReport) -> MetricReport {
    let names: BTreeSet<&String> = report.items.iter().map(|i| &i.device).collect();
    let label = |i: usize| {
        let mut s = String::new();
        let mut n = i;
        loop {
            s.insert(0, (b'A' + (n % 26) as u8) as char);
            if n < 26 {
                break;
            }
            n = n / 26 - 1;
        }
        format!("device-{s}")
    };
    let map: BTreeMap<String, String> = names
        .into_iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), label(i)))
        .collect();
    let mut items = report.items.clone();
    for it in &mut items {
        it.device = map[&it.device].clone();
    }
    items.sort_by(|a, b| (&a.device, &a.scene, &a.condition).cmp(&(&b.device, &b.scene, &b.condition)));
    let summary = summarize(&items);
    MetricReport { items, summary }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
}

/// Writes `report.jsonl` (one item per line), `summary.json` and a plain
/// text `summary.txt` table.
pub fn write_report(report: &MetricReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut lines = String::new();
    for it in &report.items {
        lines += &serde_json::to_string(it)?;
        lines.push('\n');
    }
    let p = dir.join("report.jsonl");
    std::fs::write(&p, lines).map_err(|e| Error::io(&p, e))?;
    let p = dir.join("summary.json");
    std::fs::write(&p, serde_json::to_string_pretty(&report.summary)? + "\n").map_err(|e| Error::io(&p, e))?;

    let names: BTreeSet<&String> = report.summary.iter().flat_map(|r| r.external.keys()).collect();
    let mut table = format!("{:<16} {:<12} {:>5} {:>9} {:>9}", "device", "condition", "n", "SISDR", "dSISDR");
    for n in &names {
        table += &format!(" {:>9} {:>9}", n, format!("d{n}"));
    }
    table.push('\n');
    for r in &report.summary {
        table += &format!(
            "{:<16} {:<12} {:>5} {:>9} {:>9}",
            r.device,
            r.condition,
            r.items,
            fmt_opt(Some(r.mean_sisdr_db)),
            fmt_opt(r.mean_delta_sisdr_db)
        );
        for n in &names {
            table += &format!(
                " {:>9} {:>9}",
                fmt_opt(r.external.get(*n).copied()),
                fmt_opt(r.delta_external.get(*n).copied())
            );
        }
        table.push('\n');
    }
    let p = dir.join("summary.txt");
    std::fs::write(&p, table).map_err(|e| Error::io(&p, e))
}
