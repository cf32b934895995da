//! Output directories: manifest, resolved config, CSVs and cover dumps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use super::config::{ExperimentConfig, Needs};
use crate::attractor::{AttractorApprox, ConvergenceTrace};
use crate::boxset::BoxCover;
use crate::continuity::{ParamGrid, SweepFailure, SweepResult};
use crate::flow::ParamPoint;

pub const MANIFEST: &str = "manifest";
pub const CONFIG: &str = "config.json";
pub const ERRORS: &str = "errors.csv";

const OWNED_FILES: &[&str] = &[
    MANIFEST, CONFIG, ERRORS, "attractor.cover", "trace.csv", "sweep.csv", "dist.csv",
    "defects.csv", "equi.csv", "equi_lambda.csv", "absorb.csv", "dini.csv", "scan.csv",
];
const OWNED_DIRS: &[&str] = &["covers", "traces"];

/// An output directory being filled by one command.
pub struct OutDir {
    root: PathBuf,
    manifest: Vec<(String, String)>,
}

impl OutDir {
    /// Creates `root` and removes artifacts left there by an earlier run.
    pub fn prepare(root: &Path, command: &str, config: &ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        for f in OWNED_FILES {
            let p = root.join(f);
            if p.is_file() {
                fs::remove_file(&p)?;
            }
        }
        for d in OWNED_DIRS {
            let p = root.join(d);
            if p.is_dir() {
                fs::remove_dir_all(&p)?;
            }
        }
        let mut manifest = vec![
            ("artifact".to_string(), env!("CARGO_PKG_NAME").to_string()),
            ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("command".to_string(), command.to_string()),
        ];
        manifest.extend(config.manifest_lines());
        let out = OutDir {
            root: root.to_path_buf(),
            manifest,
        };
        out.write(CONFIG, &config.to_json())?;
        Ok(out)
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn record(&mut self, key: &str, value: impl ToString) {
        self.manifest.push((key.to_string(), value.to_string()));
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<()> {
        let p = self.root.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))
    }

    pub fn write_errors(&self, rows: &[(Option<f64>, String, String)]) -> Result<()> {
        let mut out = String::from("lambda,kind,message\n");
        for (lambda, kind, message) in rows {
            let lambda = lambda.map(|l| l.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{lambda},{kind},{}", csv_quote(message));
        }
        self.write(ERRORS, &out)
    }

    /// Writes the manifest with a final `status` line.
    pub fn finish(mut self, status: &str) -> Result<()> {
        self.record("status", status);
        let mut text = String::new();
        for (k, v) in &self.manifest {
            let _ = writeln!(text, "{k}={v}");
        }
        self.write(MANIFEST, &text)
    }
}

fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

pub fn failure_rows(failures: &[SweepFailure]) -> Vec<(Option<f64>, String, String)> {
    failures
        .iter()
        .map(|f| (Some(f.lambda), f.kind.clone(), f.message.clone()))
        .collect()
}

/// Writes everything needed to reload a sweep later.
pub fn write_sweep(out: &OutDir, sr: &SweepResult) -> Result<()> {
    out.write("sweep.csv", &sr.sweep_csv())?;
    out.write("dist.csv", &sr.dist_csv())?;
    let mut defects = String::from("lambda,invariance_defect\n");
    for (i, a) in sr.approxs.iter().enumerate() {
        if let Some(a) = a {
            out.write(&format!("covers/{i}.cover"), &a.cover.to_dump())?;
            out.write(&format!("traces/{i}.csv"), &a.trace.to_csv())?;
            let _ = writeln!(defects, "{},{}", sr.lambda(i), a.invariance_defect);
        }
    }
    out.write("defects.csv", &defects)
}

pub fn read_manifest(dir: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(dir.join(MANIFEST))
        .with_context(|| format!("reading {}", dir.join(MANIFEST).display()))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect())
}

pub fn read_config(dir: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(dir.join(CONFIG))
        .with_context(|| format!("reading {}", dir.join(CONFIG).display()))?;
    ExperimentConfig::from_json(&text).map_err(anyhow::Error::msg)
}

/// Rebuilds a sweep written by [`write_sweep`] under a (possibly different)
/// distance window.
pub fn load_sweep(dir: &Path, config: &ExperimentConfig, window: usize) -> Result<SweepResult> {
    let resolved = config
        .resolve(Needs::Sweep)
        .map_err(|e| anyhow::anyhow!("stored config is invalid: {}", e.join("; ")))?;
    let grid: ParamGrid = resolved.grid.clone().expect("sweep config has a grid");
    let sweep_csv = fs::read_to_string(dir.join("sweep.csv")).context("reading sweep.csv")?;
    let converged: Vec<bool> = sweep_csv
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next() == Some("true"))
        .collect();
    if converged.len() != grid.len() {
        bail!("sweep.csv has {} rows but the grid has {} points", converged.len(), grid.len());
    }
    let defects: Vec<f64> = fs::read_to_string(dir.join("defects.csv"))
        .context("reading defects.csv")?
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap_or("").parse::<f64>())
        .collect::<Result<_, _>>()
        .context("parsing defects.csv")?;
    let mut defects = defects.into_iter();
    let mut approxs = Vec::with_capacity(grid.len());
    for (i, ok) in converged.into_iter().enumerate() {
        if !ok {
            approxs.push(None);
            continue;
        }
        let dump = fs::read_to_string(dir.join(format!("covers/{i}.cover")))
            .with_context(|| format!("reading covers/{i}.cover"))?;
        let cover = BoxCover::from_dump(&dump)?;
        if **cover.grid() != *resolved.space {
            bail!("covers/{i}.cover does not match the configured grid");
        }
        let trace_text = fs::read_to_string(dir.join(format!("traces/{i}.csv")))
            .with_context(|| format!("reading traces/{i}.csv"))?;
        let trace = ConvergenceTrace::from_csv(&trace_text).map_err(anyhow::Error::msg)?;
        approxs.push(Some(AttractorApprox {
            param: ParamPoint::scalar(grid.points()[i]),
            cover,
            t_total: trace.entries.last().map_or(0.0, |e| e.t),
            trace,
            settings: resolved.settings.clone(),
            invariance_defect: defects.next().context("defects.csv is short")?,
        }));
    }
    Ok(SweepResult::from_parts(grid, approxs, window, Vec::new())?)
}
