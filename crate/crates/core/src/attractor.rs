//! Forward images of box covers and their iteration to an attractor cover.
//!
//! Images are point-sampled: each active cell contributes a `k^d` lattice of
//! sample points (corners included), every endpoint activates its cell, and
//! the result is dilated by one cell. This is a heuristic covering, not a
//! rigorous enclosure.

use std::fmt::Write as _;
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use thiserror::Error;

use crate::boxset::{hausdorff, BoxCover, BoxError, GridSpec};
use crate::flow::{evolve_in_place, FlowError, IntegratorConfig, ParamPoint, SystemFamily};

/// Relative slack on the one-cell tolerance floor.
const TOL_FLOOR_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttractorError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Box(#[from] BoxError),
    #[error(
        "sample {sample:?} of cell {cell:?} escaped at λ={lambda} (t={time}, state {state:?})"
    )]
    DomainEscape {
        lambda: ParamPoint,
        cell: Vec<usize>,
        sample: Vec<f64>,
        time: f64,
        state: Vec<f64>,
    },
    #[error("internal error: image of a nonempty cover is empty")]
    EmptyImage,
    #[error("no convergence after {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        trace: ConvergenceTrace,
    },
    #[error("target not absorbed within {max_steps} steps")]
    NotAbsorbed { max_steps: usize },
    #[error("invariance defect {defect} exceeds {bound}")]
    InvarianceDefect { defect: f64, bound: f64 },
}

impl AttractorError {
    /// Short machine-readable tag for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            AttractorError::InvalidArgument(_) => "InvalidArgument",
            AttractorError::Flow(FlowError::DomainEscape { .. }) => "DomainEscape",
            AttractorError::Flow(_) => "FlowError",
            AttractorError::Box(_) => "BoxError",
            AttractorError::DomainEscape { .. } => "DomainEscape",
            AttractorError::EmptyImage => "InternalError",
            AttractorError::NonConvergence { .. } => "NonConvergence",
            AttractorError::NotAbsorbed { .. } => "NotAbsorbed",
            AttractorError::InvarianceDefect { .. } => "InvarianceDefect",
        }
    }
}

/// Sampling and integration settings shared by all image computations.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSettings {
    pub samples_per_axis: usize,
    pub integrator: IntegratorConfig,
}

impl ImageSettings {
    /// `k = 3` in one and two dimensions, `k = 2` above.
    pub fn default_for_dim(dim: usize, integrator: IntegratorConfig) -> Self {
        ImageSettings {
            samples_per_axis: if dim <= 2 { 3 } else { 2 },
            integrator,
        }
    }
}

/// Result of one image computation.
#[derive(Clone, Debug)]
pub struct ImageOutcome {
    pub cover: BoxCover,
    /// Endpoints that left the grid domain but stayed inside the escape box.
    pub discarded: usize,
    pub samples: usize,
}

fn check_family_grid(family: &SystemFamily, grid: &GridSpec) -> Result<(), AttractorError> {
    if grid.dim() != family.state_dim() {
        return Err(AttractorError::InvalidArgument(format!(
            "grid has dimension {} but `{}` has state dimension {}",
            grid.dim(),
            family.name(),
            family.state_dim()
        )));
    }
    Ok(())
}

/// Sampled forward image of `cover` under `S_λ(t)`, dilated by one cell.
pub fn image_detailed(
    cover: &BoxCover,
    family: &SystemFamily,
    param: &ParamPoint,
    t: f64,
    settings: &ImageSettings,
) -> Result<ImageOutcome, AttractorError> {
    let grid = cover.grid().clone();
    check_family_grid(family, &grid)?;
    if !(t.is_finite() && t > 0.0) {
        return Err(AttractorError::InvalidArgument(format!(
            "image time must be positive, got {t}"
        )));
    }
    let k = settings.samples_per_axis;
    if k < 2 {
        return Err(AttractorError::InvalidArgument(format!(
            "samples_per_axis must be at least 2, got {k}"
        )));
    }
    if cover.is_empty() {
        return Err(AttractorError::InvalidArgument("image of an empty cover".into()));
    }
    settings.integrator.validate(family)?;
    let escape = settings.integrator.escape.clone().unwrap_or_else(|| {
        crate::flow::Rect::new(grid.lower().to_vec(), grid.upper().to_vec()).fattened(0.5)
    });

    // Shared sample lattice: per axis n·(k−1)+1 points, so neighboring cells
    // reuse their common face samples.
    let d = grid.dim();
    let sub = k - 1;
    let lattice_dims: Vec<usize> = grid.cells_per_axis().iter().map(|n| n * sub + 1).collect();
    let mut lattice_strides = vec![1usize; d];
    for i in (0..d - 1).rev() {
        lattice_strides[i] = lattice_strides[i + 1] * lattice_dims[i + 1];
    }
    let lattice_len: usize = lattice_dims.iter().product();
    let offsets: Vec<usize> = (0..k.pow(d as u32))
        .map(|mut code| {
            let mut off = 0;
            for i in (0..d).rev() {
                off += (code % k) * lattice_strides[i];
                code /= k;
            }
            off
        })
        .collect();
    let mut lattice = FixedBitSet::with_capacity(lattice_len);
    for idx in cover.indices() {
        let base: usize = (0..d).map(|i| idx[i] * sub * lattice_strides[i]).sum();
        for off in &offsets {
            lattice.insert(base + off);
        }
    }
    let points: Vec<usize> = lattice.ones().collect();
    let widths = grid.widths().to_vec();
    let lower = grid.lower().to_vec();
    let lattice_coords = |mut lin: usize| -> Vec<usize> {
        let mut m = vec![0; d];
        for i in 0..d {
            m[i] = lin / lattice_strides[i];
            lin %= lattice_strides[i];
        }
        m
    };
    let position = |m: &[usize]| -> Vec<f64> {
        (0..d)
            .map(|i| lower[i] + (m[i] as f64 / sub as f64) * widths[i])
            .collect()
    };

    let endpoints: Vec<Result<Option<usize>, AttractorError>> = points
        .par_iter()
        .with_min_len(32)
        .map(|&lin| {
            let m = lattice_coords(lin);
            let mut x = position(&m);
            match evolve_in_place(family, param, &mut x, t, settings.integrator.dt, &escape) {
                Ok(()) => Ok(grid.containing_linear(&x)),
                Err(FlowError::DomainEscape { time, state }) => {
                    let cell = m
                        .iter()
                        .zip(grid.cells_per_axis())
                        .map(|(mi, n)| (mi / sub).min(n - 1))
                        .collect();
                    Err(AttractorError::DomainEscape {
                        lambda: param.clone(),
                        cell,
                        sample: position(&m),
                        time,
                        state,
                    })
                }
                Err(e) => Err(e.into()),
            }
        })
        .collect();

    let mut hit = Vec::with_capacity(endpoints.len());
    let mut discarded = 0;
    for e in endpoints {
        match e? {
            Some(c) => hit.push(c),
            None => discarded += 1,
        }
    }
    if discarded > 0 {
        log::warn!(
            "{discarded} of {} samples left the grid domain at λ={param}",
            points.len()
        );
    }
    let raw = BoxCover::from_linear(grid.clone(), hit)?;
    if raw.is_empty() {
        return Err(AttractorError::EmptyImage);
    }
    Ok(ImageOutcome {
        cover: raw.dilate(&vec![1; d]),
        discarded,
        samples: points.len(),
    })
}

/// Sampled forward image `S_λ(t) C`, see [`image_detailed`].
pub fn image(
    cover: &BoxCover,
    family: &SystemFamily,
    param: &ParamPoint,
    t: f64,
    settings: &ImageSettings,
) -> Result<BoxCover, AttractorError> {
    image_detailed(cover, family, param, t, settings).map(|o| o.cover)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub n: usize,
    pub t: f64,
    pub step_dist: f64,
    pub cells: usize,
}

/// The sequence `(n, t_n, d_H(C_n, C_{n−1}), |C_n|)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub entries: Vec<TraceEntry>,
}

impl ConvergenceTrace {
    pub const CSV_HEADER: &'static str = "n,t,step_dist,cells";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{},{}", e.n, e.t, e.step_dist, e.cells);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(format!("line {}: expected 4 fields", i + 1));
            }
            let err = |e: &dyn std::fmt::Display| format!("line {}: {e}", i + 1);
            entries.push(TraceEntry {
                n: f[0].parse().map_err(|e| err(&e))?,
                t: f[1].parse().map_err(|e| err(&e))?,
                step_dist: f[2].parse().map_err(|e| err(&e))?,
                cells: f[3].parse().map_err(|e| err(&e))?,
            });
        }
        Ok(ConvergenceTrace { entries })
    }
}

/// Stopping rule and image settings for [`approximate_attractor`].
#[derive(Clone, Debug, PartialEq)]
pub struct AttractorSettings {
    pub t_step: f64,
    /// Absolute stopping tolerance; at least one cell width.
    pub tol: f64,
    pub max_iter: usize,
    /// Number of consecutive sub-tolerance steps required.
    pub consecutive: usize,
    pub image: ImageSettings,
}

impl AttractorSettings {
    pub fn validate(&self, family: &SystemFamily, grid: &GridSpec) -> Result<(), AttractorError> {
        check_family_grid(family, grid)?;
        let mut problems = Vec::new();
        if !(self.t_step.is_finite() && self.t_step > 0.0) {
            problems.push(format!("t_step must be positive, got {}", self.t_step));
        }
        let w = grid.cell_width();
        if !(self.tol >= w * (1.0 - TOL_FLOOR_SLACK)) {
            problems.push(format!("tol {} is below one cell width {w}", self.tol));
        }
        if self.max_iter == 0 {
            problems.push("max_iter must be positive".into());
        }
        if self.consecutive == 0 {
            problems.push("consecutive must be positive".into());
        }
        if self.image.samples_per_axis < 2 {
            problems.push("samples_per_axis must be at least 2".into());
        }
        if let Err(e) = self.image.integrator.validate(family) {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(AttractorError::InvalidArgument(problems.join("; ")))
        }
    }
}

/// A converged cover approximating `A_λ`.
#[derive(Clone, Debug)]
pub struct AttractorApprox {
    pub param: ParamPoint,
    pub cover: BoxCover,
    pub trace: ConvergenceTrace,
    pub t_total: f64,
    pub settings: AttractorSettings,
    /// `d_H(image(cover, t_step), cover)` measured after stopping.
    pub invariance_defect: f64,
}

/// Iterates `C_{n+1} = image(C_n, t_step)` from `seed` until `consecutive`
/// successive steps move at most `tol` in Hausdorff distance.
pub fn approximate_attractor(
    family: &SystemFamily,
    param: &ParamPoint,
    seed: &BoxCover,
    settings: &AttractorSettings,
) -> Result<AttractorApprox, AttractorError> {
    settings.validate(family, seed.grid())?;
    if seed.is_empty() {
        return Err(AttractorError::InvalidArgument("seed cover is empty".into()));
    }
    let mut current = seed.clone();
    let mut trace = ConvergenceTrace::default();
    let mut calm = 0;
    for n in 1..=settings.max_iter {
        let next = image(&current, family, param, settings.t_step, &settings.image)?;
        let step_dist = hausdorff(&next, &current)?;
        trace.entries.push(TraceEntry {
            n,
            t: n as f64 * settings.t_step,
            step_dist,
            cells: next.count(),
        });
        current = next;
        calm = if step_dist <= settings.tol { calm + 1 } else { 0 };
        if calm >= settings.consecutive {
            let after = image(&current, family, param, settings.t_step, &settings.image)?;
            let defect = hausdorff(&after, &current)?;
            let bound = settings.tol + 2.0 * current.grid().cell_width();
            if defect > bound {
                return Err(AttractorError::InvarianceDefect { defect, bound });
            }
            return Ok(AttractorApprox {
                param: param.clone(),
                cover: current,
                t_total: n as f64 * settings.t_step,
                trace,
                settings: settings.clone(),
                invariance_defect: defect,
            });
        }
    }
    Err(AttractorError::NonConvergence {
        iterations: settings.max_iter,
        trace,
    })
}

/// Smallest `n ≤ max_steps` such that both `image(source, n·t_unit)` and
/// `image(source, (n+1)·t_unit)` lie inside `target`.
pub fn absorbing_time(
    family: &SystemFamily,
    param: &ParamPoint,
    source: &BoxCover,
    target: &BoxCover,
    t_unit: f64,
    max_steps: usize,
    settings: &ImageSettings,
) -> Result<usize, AttractorError> {
    if target.is_empty() {
        return Err(BoxError::EmptyTarget.into());
    }
    if source.grid() != target.grid() && **source.grid() != **target.grid() {
        return Err(BoxError::GridMismatch.into());
    }
    if !(t_unit.is_finite() && t_unit > 0.0) {
        return Err(AttractorError::InvalidArgument(format!(
            "t_unit must be positive, got {t_unit}"
        )));
    }
    let inside = |n: usize| -> Result<bool, AttractorError> {
        let img = image(source, family, param, n as f64 * t_unit, settings)?;
        Ok(img.is_subset(target)?)
    };
    let mut prev = match max_steps {
        0 => return Err(AttractorError::NotAbsorbed { max_steps }),
        _ => inside(1)?,
    };
    for n in 1..=max_steps {
        let next = inside(n + 1)?;
        if prev && next {
            return Ok(n);
        }
        prev = next;
    }
    Err(AttractorError::NotAbsorbed { max_steps })
}

/// `d_H(image(A, t), A)`.
pub fn check_invariance(
    approx: &AttractorApprox,
    family: &SystemFamily,
    t: f64,
    settings: &ImageSettings,
) -> Result<f64, AttractorError> {
    let img = image(&approx.cover, family, &approx.param, t, settings)?;
    Ok(hausdorff(&img, &approx.cover)?)
}

/// Convenience: the full grid over `family`'s default domain.
pub fn default_grid(family: &SystemFamily, cells: Vec<usize>) -> Result<Arc<GridSpec>, BoxError> {
    let dom = family.default_domain();
    Ok(Arc::new(GridSpec::new(dom.lower.clone(), dom.upper.clone(), cells)?))
}
