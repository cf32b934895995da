//! Parameter sweeps over one-dimensional `λ` grids and the continuity
//! diagnostics built on them: semicontinuity moduli, the oscillation scan,
//! equi-attraction curves and the monotone (Dini) convergence check.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::attractor::{
    absorbing_time, approximate_attractor, image, AttractorApprox, AttractorError,
    AttractorSettings, ImageSettings,
};
use crate::boxset::{hausdorff, semi_distance, BoxCover, BoxError, TargetIndex};
use crate::flow::{ParamPoint, SystemFamily};

/// Radius of the neighborhood `D_1 = {x : ρ(x, D) < 1}` used for absorption.
pub const ABSORBING_RADIUS: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContinuityError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("every grid point failed ({} failures)", .0.len())]
    AllFailed(Vec<SweepFailure>),
    #[error("D1 is not absorbed at λ={lambda}: image(D1, T) ⊄ D1")]
    Unabsorbed { lambda: f64 },
    #[error("no absorbing time within {max_steps} steps at λ={lambda}")]
    NotAbsorbed { lambda: f64, max_steps: usize },
    #[error("λ={lambda}: {source}")]
    AtLambda {
        lambda: f64,
        #[source]
        source: AttractorError,
    },
    #[error(transparent)]
    Attractor(#[from] AttractorError),
    #[error(transparent)]
    Box(#[from] BoxError),
}

impl ContinuityError {
    pub fn kind(&self) -> &'static str {
        match self {
            ContinuityError::InvalidArgument(_) => "InvalidArgument",
            ContinuityError::AllFailed(_) => "AllFailed",
            ContinuityError::Unabsorbed { .. } => "Unabsorbed",
            ContinuityError::NotAbsorbed { .. } => "NotAbsorbed",
            ContinuityError::AtLambda { source, .. } => source.kind(),
            ContinuityError::Attractor(e) => e.kind(),
            ContinuityError::Box(_) => "BoxError",
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match self {
            ContinuityError::Unabsorbed { lambda }
            | ContinuityError::NotAbsorbed { lambda, .. }
            | ContinuityError::AtLambda { lambda, .. } => Some(*lambda),
            _ => None,
        }
    }
}

/// Finite sample of the parameter interval.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrid {
    points: Vec<f64>,
}

impl ParamGrid {
    /// `m ≥ 2` equally spaced points from `min` to `max` inclusive.
    pub fn uniform(min: f64, max: f64, m: usize) -> Result<Self, ContinuityError> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(ContinuityError::InvalidArgument(format!(
                "λ grid needs finite min < max, got [{min}, {max}]"
            )));
        }
        if m < 2 {
            return Err(ContinuityError::InvalidArgument(format!(
                "λ grid needs at least 2 points, got {m}"
            )));
        }
        let n = (m - 1) as f64;
        let (mid, half) = (0.5 * (min + max), 0.5 * (max - min));
        let mut points: Vec<f64> = (0..m)
            .map(|i| mid + half * ((2.0 * i as f64 - n) / n))
            .collect();
        points[0] = min;
        points[m - 1] = max;
        Ok(ParamGrid { points })
    }

    /// Explicit non-decreasing list; repeated values are allowed.
    pub fn from_points(points: Vec<f64>) -> Result<Self, ContinuityError> {
        if points.is_empty() {
            return Err(ContinuityError::InvalidArgument("empty λ grid".into()));
        }
        if points.iter().any(|p| !p.is_finite()) || points.windows(2).any(|w| w[1] < w[0]) {
            return Err(ContinuityError::InvalidArgument(
                "λ grid must be finite and non-decreasing".into(),
            ));
        }
        Ok(ParamGrid { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn params(&self, family: &SystemFamily) -> Result<Vec<ParamPoint>, ContinuityError> {
        self.points
            .iter()
            .map(|&l| {
                family
                    .param(&[l])
                    .map_err(|e| ContinuityError::InvalidArgument(e.to_string()))
            })
            .collect()
    }
}

/// A grid point whose computation failed.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepFailure {
    pub index: usize,
    pub lambda: f64,
    pub kind: String,
    pub message: String,
}

impl SweepFailure {
    fn new(index: usize, lambda: f64, err: &AttractorError) -> Self {
        SweepFailure {
            index,
            lambda,
            kind: err.kind().to_string(),
            message: err.to_string(),
        }
    }
}

/// Distances between the covers at grid indices `i < j`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairDistance {
    pub i: usize,
    pub j: usize,
    pub dh: f64,
    /// `ρ(A_i, A_j)`.
    pub rho_ij: f64,
    /// `ρ(A_j, A_i)`.
    pub rho_ji: f64,
}

fn pair_distance(i: usize, j: usize, a: &BoxCover, b: &BoxCover) -> Result<PairDistance, BoxError> {
    let rho_ij = semi_distance(a, b)?;
    let rho_ji = semi_distance(b, a)?;
    Ok(PairDistance {
        i,
        j,
        dh: rho_ij.max(rho_ji),
        rho_ij,
        rho_ji,
    })
}

/// Attractor covers over a parameter grid plus banded pairwise distances.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub grid: ParamGrid,
    pub approxs: Vec<Option<AttractorApprox>>,
    /// Distances were filled for `0 < j − i ≤ window`.
    pub window: usize,
    pub distances: Vec<PairDistance>,
    pub failures: Vec<SweepFailure>,
}

impl SweepResult {
    /// Assembles a sweep from already computed covers and fills the distance band.
    pub fn from_parts(
        grid: ParamGrid,
        approxs: Vec<Option<AttractorApprox>>,
        window: usize,
        failures: Vec<SweepFailure>,
    ) -> Result<Self, ContinuityError> {
        if approxs.len() != grid.len() {
            return Err(ContinuityError::InvalidArgument(
                "one approximation slot per grid point required".into(),
            ));
        }
        let m = grid.len();
        let pairs: Vec<(usize, usize)> = (0..m)
            .flat_map(|i| (i + 1..=(i + window).min(m.saturating_sub(1))).map(move |j| (i, j)))
            .filter(|&(i, j)| approxs[i].is_some() && approxs[j].is_some())
            .collect();
        let distances = pairs
            .par_iter()
            .map(|&(i, j)| {
                let (a, b) = (approxs[i].as_ref().unwrap(), approxs[j].as_ref().unwrap());
                pair_distance(i, j, &a.cover, &b.cover)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SweepResult {
            grid,
            approxs,
            window,
            distances,
            failures,
        })
    }

    pub fn lambda(&self, i: usize) -> f64 {
        self.grid.points[i]
    }

    /// `(ρ(A_i, A_j), ρ(A_j, A_i))`, `None` when either cover is missing.
    pub fn deviations(&self, i: usize, j: usize) -> Option<(f64, f64)> {
        let (lo, hi) = (i.min(j), i.max(j));
        let (a, b) = (self.approxs.get(lo)?.as_ref()?, self.approxs.get(hi)?.as_ref()?);
        if i == j {
            return Some((0.0, 0.0));
        }
        let stored = self.distances.iter().find(|d| d.i == lo && d.j == hi).cloned();
        let d = match stored {
            Some(d) => d,
            None => pair_distance(lo, hi, &a.cover, &b.cover).ok()?,
        };
        Some(if i < j { (d.rho_ij, d.rho_ji) } else { (d.rho_ji, d.rho_ij) })
    }

    /// Grid of the covers (from the first available approximation).
    pub fn cell_width(&self) -> Option<f64> {
        self.approxs
            .iter()
            .flatten()
            .next()
            .map(|a| a.cover.grid().cell_width())
    }

    pub fn sweep_csv(&self) -> String {
        let mut out = String::from("lambda,cells,t_total,converged\n");
        for (i, a) in self.approxs.iter().enumerate() {
            match a {
                Some(a) => {
                    let _ = writeln!(out, "{},{},{},true", self.lambda(i), a.cover.count(), a.t_total);
                }
                None => {
                    let _ = writeln!(out, "{},0,0,false", self.lambda(i));
                }
            }
        }
        out
    }

    pub fn dist_csv(&self) -> String {
        let mut out = String::from("i,j,dH,rho_ij,rho_ji\n");
        for d in &self.distances {
            let _ = writeln!(out, "{},{},{},{},{}", d.i, d.j, d.dh, d.rho_ij, d.rho_ji);
        }
        out
    }
}

/// Approximates `A_λ` at every grid point; per-point failures are recorded.
pub fn sweep(
    family: &SystemFamily,
    grid: &ParamGrid,
    seed: &BoxCover,
    settings: &AttractorSettings,
    window: usize,
) -> Result<SweepResult, ContinuityError> {
    settings.validate(family, seed.grid())?;
    let params = grid.params(family)?;
    let results: Vec<Result<AttractorApprox, AttractorError>> = params
        .par_iter()
        .map(|p| approximate_attractor(family, p, seed, settings))
        .collect();
    let mut approxs = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(a) => approxs.push(Some(a)),
            Err(e) => {
                failures.push(SweepFailure::new(i, grid.points[i], &e));
                approxs.push(None);
            }
        }
    }
    if approxs.iter().all(Option::is_none) {
        return Err(ContinuityError::AllFailed(failures));
    }
    SweepResult::from_parts(grid.clone(), approxs, window, failures)
}

/// Deviations between `A_i` and one neighbor `A_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborDeviation {
    pub j: usize,
    pub lambda: f64,
    /// `ρ(A_j, A_i)`: vanishes as `λ_j → λ_i` under upper semicontinuity.
    pub upper: Option<f64>,
    /// `ρ(A_i, A_j)`: vanishes as `λ_j → λ_i` under lower semicontinuity.
    pub lower: Option<f64>,
}

/// Upper and lower deviations from `A_i` to every `j` with `|i − j| ≤ window`
/// (including `j = i`). Missing covers leave `None` gaps.
pub fn continuity_moduli(
    sr: &SweepResult,
    i: usize,
) -> Result<Vec<NeighborDeviation>, ContinuityError> {
    neighbor_deviations(sr, i, sr.window, true)
}

fn neighbor_deviations(
    sr: &SweepResult,
    i: usize,
    window: usize,
    include_self: bool,
) -> Result<Vec<NeighborDeviation>, ContinuityError> {
    let m = sr.grid.len();
    if i >= m {
        return Err(ContinuityError::InvalidArgument(format!(
            "grid index {i} out of range (m = {m})"
        )));
    }
    Ok((i.saturating_sub(window)..=(i + window).min(m - 1))
        .filter(|&j| include_self || j != i)
        .map(|j| {
            let dev = sr.deviations(i, j);
            NeighborDeviation {
                j,
                lambda: sr.lambda(j),
                upper: dev.map(|d| d.1),
                lower: dev.map(|d| d.0),
            }
        })
        .collect())
}

/// Per-point outcome of [`discontinuity_scan`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScanRow {
    pub index: usize,
    pub lambda: f64,
    pub neighbors: Vec<NeighborDeviation>,
    /// Largest windowed `d_H`; `None` when `A_i` itself is missing.
    pub osc: Option<f64>,
    pub flagged: bool,
    /// Neighbors skipped because their cover is missing.
    pub gaps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuityReport {
    pub delta: f64,
    pub window: usize,
    pub rows: Vec<ScanRow>,
}

impl ContinuityReport {
    pub fn flagged(&self) -> impl Iterator<Item = &ScanRow> {
        self.rows.iter().filter(|r| r.flagged)
    }

    /// Flagged points over all grid points.
    pub fn flagged_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.flagged().count() as f64 / self.rows.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,osc,flagged\n");
        for r in &self.rows {
            let osc = r.osc.map(|o| o.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{}", r.lambda, osc, r.flagged);
        }
        out
    }
}

/// Flags grid point `i` iff `max_{0<|j−i|≤w} d_H(A_i, A_j) ≥ 3δ`.
pub fn discontinuity_scan(
    sr: &SweepResult,
    delta: f64,
    window: usize,
) -> Result<ContinuityReport, ContinuityError> {
    let w = sr.cell_width().unwrap_or(0.0);
    if !(delta.is_finite() && delta >= 2.0 * w * (1.0 - 1e-9)) {
        return Err(ContinuityError::InvalidArgument(format!(
            "δ = {delta} is below two cell widths ({})",
            2.0 * w
        )));
    }
    let rows = (0..sr.grid.len())
        .into_par_iter()
        .map(|i| {
            let neighbors = neighbor_deviations(sr, i, window, false)?;
            let own = sr.approxs[i].is_some();
            let gaps = neighbors.iter().filter(|n| n.upper.is_none()).count();
            let osc = own.then(|| {
                neighbors
                    .iter()
                    .filter_map(|n| Some(n.upper?.max(n.lower?)))
                    .fold(0.0, f64::max)
            });
            Ok(ScanRow {
                index: i,
                lambda: sr.lambda(i),
                flagged: osc.is_some_and(|o| o >= 3.0 * delta),
                neighbors,
                osc,
                gaps,
            })
        })
        .collect::<Result<Vec<_>, ContinuityError>>()?;
    Ok(ContinuityReport {
        delta,
        window,
        rows,
    })
}

/// `e(t_n) = max_i ρ(image(D, t_n, λ_i), A_{λ_i})` over the surviving grid points.
#[derive(Clone, Debug, PartialEq)]
pub struct EquiAttractionCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Grid index attaining the maximum (smallest index on ties).
    pub argmax: Vec<usize>,
    pub lambdas: Vec<f64>,
    /// `ρ(image(D, t_n, λ_i), A_{λ_i})` per grid point; `None` if skipped.
    pub per_lambda: Vec<Option<Vec<f64>>>,
    pub failures: Vec<SweepFailure>,
}

impl EquiAttractionCurve {
    /// Number of grid points contributing to the curve.
    pub fn coverage(&self) -> usize {
        self.per_lambda.iter().filter(|p| p.is_some()).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,e,argmax_lambda\n");
        for n in 0..self.times.len() {
            let _ = writeln!(
                out,
                "{},{},{}",
                self.times[n], self.values[n], self.lambdas[self.argmax[n]]
            );
        }
        out
    }
}

fn check_times(times: &[f64]) -> Result<(), ContinuityError> {
    if times.is_empty()
        || times.iter().any(|t| !(t.is_finite() && *t > 0.0))
        || times.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(ContinuityError::InvalidArgument(
            "times must be positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Builds the equi-attraction curve against the attractors of `sr`. Images are
/// advanced incrementally: the cover at `t_{n+1}` is the image of the cover at
/// `t_n` over `t_{n+1} − t_n`.
pub fn equi_attraction_curve(
    family: &SystemFamily,
    sr: &SweepResult,
    seed: &BoxCover,
    times: &[f64],
    settings: &ImageSettings,
) -> Result<EquiAttractionCurve, ContinuityError> {
    check_times(times)?;
    let params = sr.grid.params(family)?;
    let rows: Vec<Result<Option<Vec<f64>>, SweepFailure>> = (0..sr.grid.len())
        .into_par_iter()
        .map(|i| {
            let Some(approx) = &sr.approxs[i] else {
                return Ok(None);
            };
            let fail = |e: AttractorError| SweepFailure::new(i, sr.lambda(i), &e);
            let target = TargetIndex::new(&approx.cover).map_err(|e| fail(e.into()))?;
            let mut cover = seed.clone();
            let mut now = 0.0;
            let mut row = Vec::with_capacity(times.len());
            for &t in times {
                cover = image(&cover, family, &params[i], t - now, settings).map_err(fail)?;
                now = t;
                row.push(target.semi_distance_from(&cover).map_err(|e| fail(e.into()))?);
            }
            Ok(Some(row))
        })
        .collect();
    let mut per_lambda = Vec::with_capacity(rows.len());
    let mut failures = Vec::new();
    for r in rows {
        match r {
            Ok(row) => per_lambda.push(row),
            Err(f) => {
                failures.push(f);
                per_lambda.push(None);
            }
        }
    }
    if per_lambda.iter().all(Option::is_none) {
        return Err(ContinuityError::AllFailed(failures));
    }
    let mut values = Vec::with_capacity(times.len());
    let mut argmax = Vec::with_capacity(times.len());
    for n in 0..times.len() {
        let (best, val) = per_lambda
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().map(|r| (i, r[n])))
            .fold((usize::MAX, f64::NEG_INFINITY), |acc, (i, v)| {
                if v > acc.1 {
                    (i, v)
                } else {
                    acc
                }
            });
        values.push(val);
        argmax.push(best);
    }
    Ok(EquiAttractionCurve {
        times: times.to_vec(),
        values,
        argmax,
        lambdas: sr.grid.points.clone(),
        per_lambda,
        failures,
    })
}

/// The common absorbing time and how it was obtained.
#[derive(Clone, Debug, PartialEq)]
pub struct CommonTime {
    pub t: f64,
    /// Absorbing step count `n(λ_i)` per grid point.
    pub steps: Vec<usize>,
    pub t_unit: f64,
}

/// `T = t_unit · max_i n(λ_i)` where `n(λ)` is the absorbing time of `D_1`
/// into itself; absorption `image(D_1, T) ⊆ D_1` is then re-verified at every
/// grid point with the common `T`.
pub fn select_t(
    family: &SystemFamily,
    grid: &ParamGrid,
    seed: &BoxCover,
    t_unit: f64,
    max_steps: usize,
    settings: &ImageSettings,
) -> Result<CommonTime, ContinuityError> {
    let params = grid.params(family)?;
    let d1 = seed.fatten(ABSORBING_RADIUS);
    let steps = params
        .par_iter()
        .map(|p| {
            absorbing_time(family, p, &d1, &d1, t_unit, max_steps, settings).map_err(|e| match e {
                AttractorError::NotAbsorbed { max_steps } => ContinuityError::NotAbsorbed {
                    lambda: p.value(),
                    max_steps,
                },
                other => ContinuityError::AtLambda {
                    lambda: p.value(),
                    source: other,
                },
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let t = t_unit * *steps.iter().max().expect("nonempty grid") as f64;
    verify_absorption(family, &params, &d1, t, settings)?;
    Ok(CommonTime { t, steps, t_unit })
}

/// Checks `image(D_1, t) ⊆ D_1` at every parameter; reports the first failure.
fn verify_absorption(
    family: &SystemFamily,
    params: &[ParamPoint],
    d1: &BoxCover,
    t: f64,
    settings: &ImageSettings,
) -> Result<Vec<BoxCover>, ContinuityError> {
    let images = params
        .par_iter()
        .map(|p| {
            image(d1, family, p, t, settings).map_err(|e| ContinuityError::AtLambda {
                lambda: p.value(),
                source: e,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    for (p, img) in params.iter().zip(&images) {
        if !img.is_subset(d1)? {
            return Err(ContinuityError::Unabsorbed { lambda: p.value() });
        }
    }
    Ok(images)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiniRow {
    pub lambda: f64,
    pub n: usize,
    /// `d_H(image(D_1, nT), A_λ)`.
    pub dh_to_final: f64,
    /// `image(D_1, nT) ⊆ image(D_1, (n−1)T)`.
    pub subset_ok: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiniReport {
    pub t: f64,
    pub iterations: usize,
    pub rows: Vec<DiniRow>,
    /// Largest increase `d_H(n) − d_H(n−1)` over all grid points (0 if none).
    pub max_violation: f64,
    pub nested: bool,
    pub cell_width: f64,
    pub skipped: Vec<usize>,
}

impl DiniReport {
    /// Nested chain everywhere and no increase beyond one cell width.
    pub fn passed(&self) -> bool {
        self.nested && self.max_violation <= self.cell_width
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,n,dH_to_final,subset_ok\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.lambda, r.n, r.dh_to_final, r.subset_ok);
        }
        out
    }
}

/// Checks that `image(D_1, nT)` decreases in the subset order and approaches
/// `A_λ` monotonically (within one cell width) for `n = 1..=iterations`.
/// Stops with [`ContinuityError::Unabsorbed`] if `image(D_1, T) ⊄ D_1` at any
/// grid point.
pub fn dini_check(
    family: &SystemFamily,
    sr: &SweepResult,
    seed: &BoxCover,
    t: f64,
    iterations: usize,
    settings: &ImageSettings,
) -> Result<DiniReport, ContinuityError> {
    if iterations == 0 {
        return Err(ContinuityError::InvalidArgument("iterations must be positive".into()));
    }
    let params = sr.grid.params(family)?;
    let d1 = seed.fatten(ABSORBING_RADIUS);
    let first = verify_absorption(family, &params, &d1, t, settings)?;
    let per_lambda: Vec<Option<(Vec<DiniRow>, f64, bool)>> = (0..params.len())
        .into_par_iter()
        .zip(first.into_par_iter())
        .map(|(i, c1)| {
            let Some(approx) = &sr.approxs[i] else {
                return Ok(None);
            };
            let lambda = sr.lambda(i);
            let attractor = &approx.cover;
            let mut rows = Vec::with_capacity(iterations);
            let mut prev = d1.clone();
            let mut current = c1;
            let mut violation: f64 = 0.0;
            let mut nested = true;
            for n in 1..=iterations {
                if n > 1 {
                    current = image(&prev, family, &params[i], t, settings).map_err(|e| {
                        ContinuityError::AtLambda {
                            lambda,
                            source: e,
                        }
                    })?;
                }
                let subset_ok = current.is_subset(&prev)?;
                let dh = hausdorff(&current, attractor)?;
                if let Some(last) = rows.last().map(|r: &DiniRow| r.dh_to_final) {
                    violation = violation.max(dh - last);
                }
                nested &= subset_ok;
                rows.push(DiniRow {
                    lambda,
                    n,
                    dh_to_final: dh,
                    subset_ok,
                });
                prev = std::mem::replace(&mut current, d1.clone());
            }
            Ok(Some((rows, violation, nested)))
        })
        .collect::<Result<Vec<_>, ContinuityError>>()?;
    let mut report = DiniReport {
        t,
        iterations,
        rows: Vec::new(),
        max_violation: 0.0,
        nested: true,
        cell_width: seed.grid().cell_width(),
        skipped: Vec::new(),
    };
    for (i, entry) in per_lambda.into_iter().enumerate() {
        match entry {
            Some((rows, violation, nested)) => {
                report.rows.extend(rows);
                report.max_violation = report.max_violation.max(violation);
                report.nested &= nested;
            }
            None => report.skipped.push(i),
        }
    }
    Ok(report)
}
