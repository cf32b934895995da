//! Batch front end: every command resolves one [`ExperimentConfig`], runs the
//! analysis and writes a self-describing output directory.

pub mod config;
pub mod output;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::attractor::{approximate_attractor, AttractorError};
use crate::boxset::BoxCover;
use crate::continuity::{
    dini_check, discontinuity_scan, equi_attraction_curve, select_t, sweep, ContinuityError,
    SweepResult,
};
use config::{parse_times, ExperimentConfig, LambdaGrid, Needs, Resolved};
use output::{failure_rows, load_sweep, read_config, read_manifest, write_sweep, OutDir};

#[derive(Debug, Parser)]
#[command(name = "attractor-lab", version, about = "Box-cover experiments on parametrized ODE attractors")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Approximate the attractor at a single λ.
    Attractor(RunArgs),
    /// Approximate attractors over a λ grid and tabulate neighbor distances.
    Sweep(RunArgs),
    /// Sweep, then the equi-attraction curve e(t).
    Equi(RunArgs),
    /// Sweep, common absorbing time, then the monotone convergence check.
    Dini(RunArgs),
    /// Oscillation scan over a sweep (loaded with --from or computed).
    Scan {
        #[command(flatten)]
        run: RunArgs,
        /// Directory written by an earlier `sweep`.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Summarize an output directory.
    Report { dir: PathBuf },
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// JSON config file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// λ grid: MIN MAX M.
    #[arg(long, num_args = 3, value_names = ["MIN", "MAX", "M"], allow_negative_numbers = true)]
    pub grid: Option<Vec<f64>>,
    /// State domain as LO HI pairs, one per axis.
    #[arg(long, num_args = 2.., allow_negative_numbers = true)]
    pub domain: Option<Vec<f64>>,
    /// Cells per axis (one value is broadcast).
    #[arg(long, num_args = 1..)]
    pub cells: Option<Vec<usize>>,
    #[arg(long, allow_negative_numbers = true)]
    pub dt: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub tstep: Option<f64>,
    /// Stopping tolerance in cell widths.
    #[arg(long, allow_negative_numbers = true)]
    pub tol_cells: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Consecutive sub-tolerance steps before stopping.
    #[arg(long)]
    pub consec: Option<usize>,
    /// Sample points per axis per cell.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
    /// Times as numbers or inclusive START:STOP:STEP ranges.
    #[arg(long, num_args = 1..)]
    pub times: Option<Vec<String>>,
    #[arg(long, allow_negative_numbers = true)]
    pub t_unit: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Seed box D as LO HI pairs (default: the whole domain).
    #[arg(long, num_args = 2.., allow_negative_numbers = true)]
    pub seed_box: Option<Vec<f64>>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("computation failed: {0}")]
    Compute(String),
    #[error(transparent)]
    Io(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Compute(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl RunArgs {
    fn overrides(&self, errs: &mut Vec<String>) -> ExperimentConfig {
        let grid = self.grid.as_ref().and_then(|g| {
            let m = g[2];
            if m.fract() != 0.0 || m < 1.0 {
                errs.push(format!("grid: M must be a positive integer, got {m}"));
                None
            } else {
                Some(LambdaGrid {
                    min: g[0],
                    max: g[1],
                    m: m as usize,
                })
            }
        });
        let times = self.times.as_ref().and_then(|t| match parse_times(t) {
            Ok(v) => Some(v),
            Err(e) => {
                errs.push(e);
                None
            }
        });
        ExperimentConfig {
            family: self.family.clone(),
            lambda: self.lambda,
            grid,
            domain: self.domain.clone(),
            cells_per_axis: self.cells.clone(),
            dt: self.dt,
            t_step: self.tstep,
            tol_cells: self.tol_cells,
            max_iter: self.max_iter,
            consecutive: self.consec,
            samples_per_axis: self.samples,
            delta: self.delta,
            window: self.window,
            times,
            t_unit: self.t_unit,
            max_steps: self.max_steps,
            iterations: self.iterations,
            seed_box: self.seed_box.clone(),
        }
    }

    /// File config overlaid with flags.
    fn experiment(&self) -> Result<ExperimentConfig, CliError> {
        let mut errs = Vec::new();
        let base = match &self.config {
            Some(path) => match fs::read_to_string(path) {
                Ok(text) => ExperimentConfig::from_json(&text).unwrap_or_else(|e| {
                    errs.push(e);
                    ExperimentConfig::default()
                }),
                Err(e) => {
                    errs.push(format!("config: cannot read {}: {e}", path.display()));
                    ExperimentConfig::default()
                }
            },
            None => ExperimentConfig::default(),
        };
        let over = self.overrides(&mut errs);
        if errs.is_empty() {
            Ok(base.merge(over))
        } else {
            Err(CliError::Validation(errs))
        }
    }

    fn resolve(&self, needs: Needs) -> Result<Resolved, CliError> {
        self.experiment()?.resolve(needs).map_err(CliError::Validation)
    }
}

/// Runs the parsed command line; the returned text goes to stdout.
pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.threads {
        Some(0) => Err(CliError::Validation(vec!["threads: must be at least 1".into()])),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(anyhow::Error::from)?;
            pool.install(|| dispatch(cli.command))
        }
        None => dispatch(cli.command),
    }
}

fn dispatch(command: Command) -> Result<String, CliError> {
    match command {
        Command::Attractor(args) => cmd_attractor(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Equi(args) => cmd_equi(&args),
        Command::Dini(args) => cmd_dini(&args),
        Command::Scan { run, from } => cmd_scan(&run, from.as_deref()),
        Command::Report { dir } => cmd_report(&dir),
    }
}

fn attractor_failure(out: OutDir, err: &AttractorError, lambda: f64) -> Result<String, CliError> {
    if let AttractorError::NonConvergence { trace, .. } = err {
        out.write("trace.csv", &trace.to_csv())?;
    }
    out.write_errors(&[(Some(lambda), err.kind().to_string(), err.to_string())])?;
    out.finish("failed")?;
    Err(CliError::Compute(err.to_string()))
}

/// Lower and upper corners of the cells spanned by `cover`.
fn hull(cover: &BoxCover) -> (Vec<f64>, Vec<f64>) {
    let g = cover.grid();
    let d = g.dim();
    let mut lo = vec![usize::MAX; d];
    let mut hi = vec![0; d];
    for idx in cover.indices() {
        for i in 0..d {
            lo[i] = lo[i].min(idx[i]);
            hi[i] = hi[i].max(idx[i]);
        }
    }
    let w = g.widths();
    (
        (0..d).map(|i| g.lower()[i] + lo[i] as f64 * w[i]).collect(),
        (0..d).map(|i| g.lower()[i] + (hi[i] + 1) as f64 * w[i]).collect(),
    )
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

pub fn cmd_attractor(args: &RunArgs) -> Result<String, CliError> {
    let r = args.resolve(Needs::Attractor)?;
    let lambda = r.lambda.clone().expect("resolved");
    let mut out = OutDir::prepare(&args.out, "attractor", &r.config)?;
    let approx = match approximate_attractor(&r.family, &lambda, &r.seed, &r.settings) {
        Ok(a) => a,
        Err(e) => return attractor_failure(out, &e, lambda.value()),
    };
    out.write("attractor.cover", &approx.cover.to_dump())?;
    out.write("trace.csv", &approx.trace.to_csv())?;
    let (lo, hi) = hull(&approx.cover);
    out.record("cells", approx.cover.count());
    out.record("iterations", approx.trace.entries.len());
    out.record("t_total", approx.t_total);
    out.record("invariance_defect", approx.invariance_defect);
    out.record("hull_lower", join(&lo));
    out.record("hull_upper", join(&hi));
    let summary = format!(
        "λ={}: {} cells after t={} ({} iterations), hull [{}] .. [{}]\n",
        lambda,
        approx.cover.count(),
        approx.t_total,
        approx.trace.entries.len(),
        join(&lo),
        join(&hi)
    );
    out.finish("ok")?;
    Ok(summary)
}

/// Runs the sweep for `r` and writes its artifacts; sweep-level failure is
/// reported through `errors.csv`.
fn run_sweep(out: &mut OutDir, r: &Resolved) -> Result<Result<SweepResult, ContinuityError>, CliError> {
    let grid = r.grid.as_ref().expect("resolved");
    match sweep(&r.family, grid, &r.seed, &r.settings, r.window) {
        Ok(sr) => {
            write_sweep(out, &sr)?;
            out.record("converged", sr.approxs.iter().flatten().count());
            out.record("failed", sr.failures.len());
            Ok(Ok(sr))
        }
        Err(e) => Ok(Err(e)),
    }
}

fn continuity_failure(out: OutDir, err: ContinuityError) -> Result<String, CliError> {
    match &err {
        ContinuityError::InvalidArgument(msg) => return Err(CliError::Validation(vec![msg.clone()])),
        ContinuityError::AllFailed(failures) => out.write_errors(&failure_rows(failures))?,
        other => out.write_errors(&[(other.lambda(), other.kind().to_string(), other.to_string())])?,
    }
    out.finish("failed")?;
    Err(CliError::Compute(err.to_string()))
}

/// Partial failures still produce every artifact but end with exit code 3.
fn finish_with(out: OutDir, rows: Vec<(Option<f64>, String, String)>, summary: String) -> Result<String, CliError> {
    if rows.is_empty() {
        out.finish("ok")?;
        Ok(summary)
    } else {
        out.write_errors(&rows)?;
        out.finish("partial")?;
        Err(CliError::Compute(format!("{} grid point(s) failed; see errors.csv\n{summary}", rows.len())))
    }
}

fn sweep_summary(sr: &SweepResult) -> String {
    let max = sr.distances.iter().map(|d| d.dh).fold(0.0, f64::max);
    format!(
        "{} of {} grid points converged; largest neighbor d_H = {}\n",
        sr.approxs.iter().flatten().count(),
        sr.grid.len(),
        max
    )
}

pub fn cmd_sweep(args: &RunArgs) -> Result<String, CliError> {
    let r = args.resolve(Needs::Sweep)?;
    let mut out = OutDir::prepare(&args.out, "sweep", &r.config)?;
    let sr = match run_sweep(&mut out, &r)? {
        Ok(sr) => sr,
        Err(e) => return continuity_failure(out, e),
    };
    let summary = sweep_summary(&sr);
    finish_with(out, failure_rows(&sr.failures), summary)
}

pub fn cmd_equi(args: &RunArgs) -> Result<String, CliError> {
    let r = args.resolve(Needs::Equi)?;
    let mut out = OutDir::prepare(&args.out, "equi", &r.config)?;
    let sr = match run_sweep(&mut out, &r)? {
        Ok(sr) => sr,
        Err(e) => return continuity_failure(out, e),
    };
    let curve = match equi_attraction_curve(&r.family, &sr, &r.seed, &r.times, &r.settings.image) {
        Ok(c) => c,
        Err(e) => return continuity_failure(out, e),
    };
    out.write("equi.csv", &curve.to_csv())?;
    let mut per = String::from("lambda,t,rho\n");
    for (i, row) in curve.per_lambda.iter().enumerate() {
        for (t, v) in curve.times.iter().zip(row.iter().flatten()) {
            let _ = writeln!(per, "{},{},{}", curve.lambdas[i], t, v);
        }
    }
    out.write("equi_lambda.csv", &per)?;
    out.record("coverage", curve.coverage());
    out.record("e_last", curve.values.last().expect("nonempty times"));
    let mut rows = failure_rows(&sr.failures);
    rows.extend(failure_rows(&curve.failures));
    let summary = format!(
        "{}e(t) over {} λ: first {} at t={}, last {} at t={}\n",
        sweep_summary(&sr),
        curve.coverage(),
        curve.values[0],
        curve.times[0],
        curve.values.last().unwrap(),
        curve.times.last().unwrap()
    );
    finish_with(out, rows, summary)
}

pub fn cmd_dini(args: &RunArgs) -> Result<String, CliError> {
    let r = args.resolve(Needs::Dini)?;
    let mut out = OutDir::prepare(&args.out, "dini", &r.config)?;
    let grid = r.grid.clone().expect("resolved");
    let common = match select_t(&r.family, &grid, &r.seed, r.t_unit, r.max_steps, &r.settings.image) {
        Ok(c) => c,
        Err(e) => return continuity_failure(out, e),
    };
    let mut absorb = String::from("lambda,steps\n");
    for (l, n) in grid.points().iter().zip(&common.steps) {
        let _ = writeln!(absorb, "{l},{n}");
    }
    out.write("absorb.csv", &absorb)?;
    out.record("T", common.t);
    let sr = match run_sweep(&mut out, &r)? {
        Ok(sr) => sr,
        Err(e) => return continuity_failure(out, e),
    };
    let report = match dini_check(&r.family, &sr, &r.seed, common.t, r.iterations, &r.settings.image) {
        Ok(rep) => rep,
        Err(e) => return continuity_failure(out, e),
    };
    out.write("dini.csv", &report.to_csv())?;
    out.record("nested", report.nested);
    out.record("max_violation", report.max_violation);
    out.record("dini_passed", report.passed());
    let summary = format!(
        "T={}: nested={} max increase={} ({} cell widths) passed={}\n",
        common.t,
        report.nested,
        report.max_violation,
        report.max_violation / report.cell_width,
        report.passed()
    );
    finish_with(out, failure_rows(&sr.failures), summary)
}

pub fn cmd_scan(args: &RunArgs, from: Option<&Path>) -> Result<String, CliError> {
    let (r, mut out, sr) = match from {
        Some(dir) => {
            let flags = args.experiment()?;
            let changed: Vec<String> = flags
                .manifest_lines()
                .into_iter()
                .map(|(k, _)| k)
                .filter(|k| k != "delta" && k != "window")
                .collect();
            if !changed.is_empty() || args.config.is_some() {
                return Err(CliError::Validation(vec![format!(
                    "from: only delta and window may be given with --from (got {})",
                    if changed.is_empty() { "config".to_string() } else { changed.join(", ") }
                )]));
            }
            let stored = read_config(dir)?;
            let merged = stored.clone().merge(ExperimentConfig {
                delta: flags.delta,
                window: flags.window,
                ..Default::default()
            });
            let r = merged.resolve(Needs::Scan).map_err(CliError::Validation)?;
            let sr = load_sweep(dir, &stored, r.window)?;
            let mut out = OutDir::prepare(&args.out, "scan", &r.config)?;
            out.record("source", dir.display());
            (r, out, sr)
        }
        None => {
            let r = args.resolve(Needs::Scan)?;
            let mut out = OutDir::prepare(&args.out, "scan", &r.config)?;
            let sr = match run_sweep(&mut out, &r)? {
                Ok(sr) => sr,
                Err(e) => return continuity_failure(out, e),
            };
            (r, out, sr)
        }
    };
    let delta = r.delta.expect("resolved");
    let report = match discontinuity_scan(&sr, delta, r.window) {
        Ok(rep) => rep,
        Err(e) => return continuity_failure(out, e),
    };
    out.write("scan.csv", &report.to_csv())?;
    let flagged: Vec<f64> = report.flagged().map(|row| row.lambda).collect();
    out.record("flagged", join(&flagged));
    out.record("flagged_fraction", report.flagged_fraction());
    let summary = format!(
        "{}flagged {} of {} points at δ={}: [{}]\n",
        sweep_summary(&sr),
        flagged.len(),
        report.rows.len(),
        delta,
        join(&flagged)
    );
    finish_with(out, failure_rows(&sr.failures), summary)
}

pub fn cmd_report(dir: &Path) -> Result<String, CliError> {
    let manifest = read_manifest(dir)?;
    let mut text = String::new();
    let width = manifest.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in &manifest {
        let _ = writeln!(text, "{k:width$}  {v}");
    }
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(anyhow::Error::from)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    for name in names {
        let body = fs::read_to_string(dir.join(&name))?;
        let rows = body.lines().count().saturating_sub(1);
        let _ = writeln!(text, "{name}: {rows} rows");
        if name == "errors.csv" {
            for line in body.lines().skip(1) {
                let _ = writeln!(text, "  {line}");
            }
        }
    }
    Ok(text)
}
