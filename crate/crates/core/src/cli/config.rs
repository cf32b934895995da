//! Experiment configuration: JSON file merged with command-line flags, then
//! resolved against module preconditions in one pass.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::attractor::{AttractorSettings, ImageSettings};
use crate::boxset::{BoxCover, GridSpec, MAX_GRID_CELLS};
use crate::continuity::ParamGrid;
use crate::flow::{IntegratorConfig, ParamPoint, SystemFamily};

pub const DEFAULT_FAMILY: &str = "pitchfork";
pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_T_STEP: f64 = 1.0;
pub const DEFAULT_TOL_CELLS: f64 = 2.0;
pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_CONSECUTIVE: usize = 3;
pub const DEFAULT_WINDOW: usize = 1;
pub const DEFAULT_MAX_STEPS: usize = 50;
pub const DEFAULT_ITERATIONS: usize = 10;
pub const DEFAULT_TIMES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub min: f64,
    pub max: f64,
    pub m: usize,
}

/// Every field is optional so that file and flags can be layered.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<LambdaGrid>,
    /// Flattened `lo hi` pairs, one per axis.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells_per_axis: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_cells: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consecutive: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples_per_axis: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_unit: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    /// Flattened `lo hi` pairs of the seed box `D`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_box: Option<Vec<f64>>,
}

macro_rules! overlay {
    ($base:ident, $over:ident; $($f:ident),*) => {
        $( if $over.$f.is_some() { $base.$f = $over.$f; } )*
    };
}

impl ExperimentConfig {
    /// Fields set in `over` replace those of `self`.
    pub fn merge(mut self, over: ExperimentConfig) -> Self {
        overlay!(self, over; family, lambda, grid, domain, cells_per_axis, dt, t_step,
            tol_cells, max_iter, consecutive, samples_per_axis, delta, window, times,
            t_unit, max_steps, iterations, seed_box);
        self
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("config: {e}"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// `key=value` lines for every set field, in declaration order.
    pub fn manifest_lines(&self) -> Vec<(String, String)> {
        let value = serde_json::to_value(self).expect("config serializes");
        let order = [
            "family", "lambda", "grid", "domain", "cells_per_axis", "dt", "t_step",
            "tol_cells", "max_iter", "consecutive", "samples_per_axis", "delta", "window",
            "times", "t_unit", "max_steps", "iterations", "seed_box",
        ];
        order
            .iter()
            .filter_map(|k| {
                let v = value.get(*k)?;
                let text = match v {
                    serde_json::Value::String(s) => s.clone(),
                    serde_json::Value::Array(items) => items
                        .iter()
                        .map(|x| x.to_string())
                        .collect::<Vec<_>>()
                        .join(" "),
                    serde_json::Value::Object(_) => {
                        let g = self.grid.expect("only grid is an object");
                        format!("{} {} {}", g.min, g.max, g.m)
                    }
                    other => other.to_string(),
                };
                Some((k.to_string(), text))
            })
            .collect()
    }
}

/// Parses `--times` tokens: plain numbers or inclusive `start:stop:step` ranges.
pub fn parse_times(tokens: &[String]) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for tok in tokens {
        let parts: Vec<&str> = tok.split(':').collect();
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| format!("times: cannot parse `{tok}`"))
        };
        match parts.as_slice() {
            [v] => out.push(num(v)?),
            [a, b, h] => {
                let (a, b, h) = (num(a)?, num(b)?, num(h)?);
                if !(h > 0.0 && b >= a) {
                    return Err(format!("times: range `{tok}` needs step > 0 and stop ≥ start"));
                }
                let n = ((b - a) / h + 1e-9).floor() as usize;
                out.extend((0..=n).map(|i| a + i as f64 * h));
            }
            _ => return Err(format!("times: cannot parse `{tok}`")),
        }
    }
    Ok(out)
}

/// What a command needs beyond the shared settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Needs {
    Attractor,
    Sweep,
    Scan,
    Equi,
    Dini,
}

/// A validated configuration with all defaults filled in.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub family: SystemFamily,
    pub space: Arc<GridSpec>,
    pub seed: BoxCover,
    pub lambda: Option<ParamPoint>,
    pub grid: Option<ParamGrid>,
    pub settings: AttractorSettings,
    pub delta: Option<f64>,
    pub window: usize,
    pub times: Vec<f64>,
    pub t_unit: f64,
    pub max_steps: usize,
    pub iterations: usize,
}

fn check_pairs(name: &str, v: &[f64], d: usize, errs: &mut Vec<String>) -> bool {
    if v.len() != 2 * d {
        errs.push(format!("{name}: expected {} values (lo hi per axis), got {}", 2 * d, v.len()));
        return false;
    }
    for (axis, p) in v.chunks(2).enumerate() {
        if !(p[0].is_finite() && p[1].is_finite() && p[0] < p[1]) {
            errs.push(format!("{name}: axis {axis} needs finite lo < hi, got [{}, {}]", p[0], p[1]));
            return false;
        }
    }
    true
}

fn in_range(name: &str, v: f64, family: &SystemFamily, errs: &mut Vec<String>) {
    if let Err(e) = family.param(&[v]) {
        errs.push(format!("{name}: {e}"));
    }
}

impl ExperimentConfig {
    /// Checks every precondition the command relies on and reports all
    /// violations at once.
    pub fn resolve(&self, needs: Needs) -> Result<Resolved, Vec<String>> {
        let mut errs = Vec::new();
        let family = match SystemFamily::builtin(self.family.as_deref().unwrap_or(DEFAULT_FAMILY)) {
            Ok(f) => Some(f),
            Err(e) => {
                errs.push(format!("family: {e}"));
                None
            }
        };
        let mut cfg = self.clone();

        let positive = |name: &str, v: Option<f64>, default: f64, errs: &mut Vec<String>| {
            let v = v.unwrap_or(default);
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("{name}: must be positive, got {v}"));
            }
            v
        };
        let at_least = |name: &str, v: Option<usize>, default: usize, min: usize, errs: &mut Vec<String>| {
            let v = v.unwrap_or(default);
            if v < min {
                errs.push(format!("{name}: must be at least {min}, got {v}"));
            }
            v
        };

        let dt = positive("dt", cfg.dt, DEFAULT_DT, &mut errs);
        let t_step = positive("t_step", cfg.t_step, DEFAULT_T_STEP, &mut errs);
        let tol_cells = cfg.tol_cells.unwrap_or(DEFAULT_TOL_CELLS);
        if !(tol_cells.is_finite() && tol_cells >= 1.0) {
            errs.push(format!("tol_cells: must be at least 1, got {tol_cells}"));
        }
        let max_iter = at_least("max_iter", cfg.max_iter, DEFAULT_MAX_ITER, 1, &mut errs);
        let consecutive = at_least("consecutive", cfg.consecutive, DEFAULT_CONSECUTIVE, 1, &mut errs);
        let window = at_least("window", cfg.window, DEFAULT_WINDOW, 1, &mut errs);
        let t_unit = positive("t_unit", cfg.t_unit, t_step, &mut errs);
        let max_steps = at_least("max_steps", cfg.max_steps, DEFAULT_MAX_STEPS, 1, &mut errs);
        let iterations = at_least("iterations", cfg.iterations, DEFAULT_ITERATIONS, 1, &mut errs);
        let times = cfg
            .times
            .clone()
            .unwrap_or_else(|| (1..=DEFAULT_TIMES).map(|n| n as f64 * t_step).collect());
        if times.is_empty()
            || times.iter().any(|t| !(t.is_finite() && *t > 0.0))
            || times.windows(2).any(|w| w[1] <= w[0])
        {
            errs.push("times: must be positive and strictly increasing".into());
        }
        cfg.dt = Some(dt);
        cfg.t_step = Some(t_step);
        cfg.tol_cells = Some(tol_cells);
        cfg.max_iter = Some(max_iter);
        cfg.consecutive = Some(consecutive);
        if needs != Needs::Attractor {
            cfg.window = Some(window);
        }

        match needs {
            Needs::Attractor => {
                if cfg.lambda.is_none() {
                    errs.push("lambda: required for `attractor`".into());
                }
            }
            _ => {
                if cfg.grid.is_none() {
                    errs.push("grid: required (min max m)".into());
                }
            }
        }
        if needs == Needs::Scan && cfg.delta.is_none() {
            errs.push("delta: required for `scan`".into());
        }
        if let Some(delta) = cfg.delta {
            if !(delta.is_finite() && delta > 0.0) {
                errs.push(format!("delta: must be positive, got {delta}"));
            }
        }
        if needs == Needs::Equi {
            cfg.times = Some(times.clone());
        }
        if needs == Needs::Dini {
            cfg.t_unit = Some(t_unit);
            cfg.max_steps = Some(max_steps);
            cfg.iterations = Some(iterations);
        }

        let Some(family) = family else {
            return Err(errs);
        };
        let d = family.state_dim();
        if let Some(max_dt) = family.max_dt().filter(|m| dt > *m) {
            errs.push(format!("dt: {dt} exceeds the stability bound {max_dt} for `{}`", family.name()));
        }

        let default_domain = family.default_domain();
        let domain = cfg.domain.clone().unwrap_or_else(|| {
            default_domain
                .lower
                .iter()
                .zip(&default_domain.upper)
                .flat_map(|(l, u)| [*l, *u])
                .collect()
        });
        let domain_ok = check_pairs("domain", &domain, d, &mut errs);
        let default_cells = match d {
            1 => 1024,
            2 => 256,
            _ => 64,
        };
        let mut cells = cfg.cells_per_axis.clone().unwrap_or_else(|| vec![default_cells; d]);
        if cells.len() == 1 && d > 1 {
            cells = vec![cells[0]; d];
        }
        let mut cells_ok = true;
        if cells.len() != d {
            errs.push(format!("cells_per_axis: expected 1 or {d} values, got {}", cells.len()));
            cells_ok = false;
        } else if cells.contains(&0) {
            errs.push(format!("cells_per_axis: entries must be positive, got {cells:?}"));
            cells_ok = false;
        } else if cells.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c)).is_none_or(|n| n > MAX_GRID_CELLS) {
            errs.push(format!("cells_per_axis: total cell count exceeds {MAX_GRID_CELLS}"));
            cells_ok = false;
        }
        let samples = at_least(
            "samples_per_axis",
            cfg.samples_per_axis,
            ImageSettings::default_for_dim(d, IntegratorConfig::default()).samples_per_axis,
            2,
            &mut errs,
        );
        cfg.family = Some(family.name().to_string());
        cfg.domain = Some(domain.clone());
        cfg.cells_per_axis = Some(cells.clone());
        cfg.samples_per_axis = Some(samples);

        let lambda = match cfg.lambda {
            Some(l) if needs == Needs::Attractor => {
                in_range("lambda", l, &family, &mut errs);
                family.param(&[l]).ok()
            }
            _ => None,
        };
        if needs != Needs::Attractor {
            cfg.lambda = None;
        }
        let grid = match cfg.grid {
            Some(g) if needs != Needs::Attractor => {
                let built = if g.m == 1 && g.min == g.max {
                    ParamGrid::from_points(vec![g.min])
                } else {
                    ParamGrid::uniform(g.min, g.max, g.m)
                };
                match built {
                    Ok(pg) => {
                        in_range("grid", g.min, &family, &mut errs);
                        in_range("grid", g.max, &family, &mut errs);
                        Some(pg)
                    }
                    Err(e) => {
                        errs.push(format!("grid: {e}"));
                        None
                    }
                }
            }
            _ => None,
        };
        if needs == Needs::Attractor {
            cfg.grid = None;
        }

        let space = if domain_ok && cells_ok {
            let (lo, hi): (Vec<f64>, Vec<f64>) = domain.chunks(2).map(|p| (p[0], p[1])).unzip();
            match GridSpec::new(lo, hi, cells) {
                Ok(g) => Some(Arc::new(g)),
                Err(e) => {
                    errs.push(format!("cells_per_axis: {e}"));
                    None
                }
            }
        } else {
            None
        };

        let Some(space) = space else {
            return Err(errs);
        };
        let w = space.cell_width();
        if let (Some(delta), Needs::Scan) = (cfg.delta, needs) {
            if delta < 2.0 * w * (1.0 - 1e-9) {
                errs.push(format!("delta: {delta} is below two cell widths ({})", 2.0 * w));
            }
        }
        if needs != Needs::Scan {
            cfg.delta = None;
        }
        let seed_box = cfg.seed_box.clone().unwrap_or_else(|| domain.clone());
        let seed = if check_pairs("seed_box", &seed_box, d, &mut errs) {
            let (lo, hi): (Vec<f64>, Vec<f64>) = seed_box.chunks(2).map(|p| (p[0], p[1])).unzip();
            match BoxCover::from_rect(space.clone(), &lo, &hi) {
                Ok(c) if !c.is_empty() => Some(c),
                Ok(_) => {
                    errs.push("seed_box: does not meet the domain".into());
                    None
                }
                Err(e) => {
                    errs.push(format!("seed_box: {e}"));
                    None
                }
            }
        } else {
            None
        };
        cfg.seed_box = Some(seed_box);

        if !errs.is_empty() {
            return Err(errs);
        }
        let settings = AttractorSettings {
            t_step,
            tol: tol_cells * w,
            max_iter,
            consecutive,
            image: ImageSettings {
                samples_per_axis: samples,
                integrator: IntegratorConfig::with_dt(dt),
            },
        };
        Ok(Resolved {
            config: cfg,
            family,
            space,
            seed: seed.expect("validated"),
            lambda,
            grid,
            settings,
            delta: self.delta,
            window,
            times,
            t_unit,
            max_steps,
            iterations,
        })
    }
}
