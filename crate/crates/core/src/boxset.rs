//! Finite unions of grid cells over a rectangular domain.
//!
//! A [`BoxCover`] stands in for a closed bounded subset of `R^d`. Distances
//! are measured between cell centers in the sup metric, so they differ from
//! the true set distances by at most one cell diameter.

use std::fmt::Write as _;
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use thiserror::Error;

/// Upper bound on the number of cells in a grid (membership is a dense bit set).
pub const MAX_GRID_CELLS: usize = 1 << 28;

/// Slack used when converting a radius into a whole number of cells.
const CELL_COUNT_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoxError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("covers live on different grids")]
    GridMismatch,
    #[error("target cover is empty")]
    EmptyTarget,
    #[error("point {0:?} lies outside the grid domain")]
    OutOfDomain(Vec<f64>),
    #[error("cell index {0:?} out of range")]
    IndexOutOfRange(Vec<usize>),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed cover dump at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Uniform rectangular grid. Two covers are comparable only on identical grids.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    lower: Vec<f64>,
    upper: Vec<f64>,
    cells: Vec<usize>,
    widths: Vec<f64>,
    strides: Vec<usize>,
    total: usize,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, cells: Vec<usize>) -> Result<Self, BoxError> {
        let d = lower.len();
        if d == 0 {
            return Err(BoxError::InvalidGrid("zero-dimensional grid".into()));
        }
        if upper.len() != d || cells.len() != d {
            return Err(BoxError::InvalidGrid(format!(
                "lower/upper/cells_per_axis lengths differ ({}, {}, {})",
                d,
                upper.len(),
                cells.len()
            )));
        }
        for i in 0..d {
            if !(lower[i].is_finite() && upper[i].is_finite() && lower[i] < upper[i]) {
                return Err(BoxError::InvalidGrid(format!(
                    "axis {i}: need finite lower < upper, got [{}, {}]",
                    lower[i], upper[i]
                )));
            }
            if cells[i] == 0 {
                return Err(BoxError::InvalidGrid(format!(
                    "axis {i}: cells_per_axis must be positive"
                )));
            }
        }
        let total = cells
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .filter(|&t| t <= MAX_GRID_CELLS)
            .ok_or_else(|| {
                BoxError::InvalidGrid(format!("more than {MAX_GRID_CELLS} cells"))
            })?;
        let widths: Vec<f64> = (0..d)
            .map(|i| (upper[i] - lower[i]) / cells[i] as f64)
            .collect();
        if widths.iter().any(|w| !(*w > 0.0)) {
            return Err(BoxError::InvalidGrid("degenerate cell width".into()));
        }
        let mut strides = vec![1usize; d];
        for i in (0..d - 1).rev() {
            strides[i] = strides[i + 1] * cells[i + 1];
        }
        Ok(GridSpec {
            lower,
            upper,
            cells,
            widths,
            strides,
            total,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    /// The largest cell width; the unit for all cell-width tolerances.
    pub fn cell_width(&self) -> f64 {
        self.widths.iter().copied().fold(0.0, f64::max)
    }

    pub fn total_cells(&self) -> usize {
        self.total
    }

    pub fn linear(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn multi(&self, mut linear: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for (o, s) in out.iter_mut().zip(&self.strides) {
            *o = linear / s;
            linear %= s;
        }
        out
    }

    fn check_index(&self, idx: &[usize]) -> Result<(), BoxError> {
        if idx.len() != self.dim() {
            return Err(BoxError::DimensionMismatch {
                expected: self.dim(),
                got: idx.len(),
            });
        }
        if idx.iter().zip(&self.cells).any(|(i, n)| i >= n) {
            return Err(BoxError::IndexOutOfRange(idx.to_vec()));
        }
        Ok(())
    }

    /// `lower + (idx + 0.5)·w`.
    pub fn cell_center(&self, idx: &[usize]) -> Result<Vec<f64>, BoxError> {
        self.check_index(idx)?;
        Ok(self.center_unchecked(idx))
    }

    pub(crate) fn center_unchecked(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(i, &k)| self.lower[i] + (k as f64 + 0.5) * self.widths[i])
            .collect()
    }

    pub fn center_of_linear(&self, linear: usize) -> Vec<f64> {
        self.center_unchecked(&self.multi(linear))
    }

    /// Fractional cell coordinate of `x` along `axis`, in `[0, n]` inside the domain.
    fn cell_coord(&self, axis: usize, x: f64) -> f64 {
        (x - self.lower[axis]) * self.cells[axis] as f64 / (self.upper[axis] - self.lower[axis])
    }

    fn axis_cell(&self, axis: usize, x: f64) -> Option<usize> {
        if !(x >= self.lower[axis] && x <= self.upper[axis]) {
            return None;
        }
        let c = self.cell_coord(axis, x);
        let f = c.floor();
        // Points on an interior face belong to the lower cell.
        let k = if f == c && f > 0.0 { f - 1.0 } else { f };
        Some((k as usize).min(self.cells[axis] - 1))
    }

    /// The cell containing `point`; ties on faces go to the lower index.
    pub fn containing_cell(&self, point: &[f64]) -> Result<Vec<usize>, BoxError> {
        if point.len() != self.dim() {
            return Err(BoxError::DimensionMismatch {
                expected: self.dim(),
                got: point.len(),
            });
        }
        point
            .iter()
            .enumerate()
            .map(|(i, &x)| self.axis_cell(i, x))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| BoxError::OutOfDomain(point.to_vec()))
    }

    /// Linear index of the containing cell, `None` outside the domain.
    pub(crate) fn containing_linear(&self, point: &[f64]) -> Option<usize> {
        let mut lin = 0;
        for (i, &x) in point.iter().enumerate() {
            lin += self.axis_cell(i, x)? * self.strides[i];
        }
        Some(lin)
    }
}

/// Axis-aligned block of cell indices, iterated in lexicographic order.
#[derive(Clone, Debug)]
struct IndexBlock {
    lo: Vec<usize>,
    dims: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl IndexBlock {
    fn new(lo: Vec<usize>, hi: &[usize]) -> Self {
        let dims: Vec<usize> = lo.iter().zip(hi).map(|(l, h)| h - l + 1).collect();
        let d = dims.len();
        let mut strides = vec![1usize; d];
        for i in (0..d.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        let len = dims.iter().product();
        IndexBlock {
            lo,
            dims,
            strides,
            len,
        }
    }

    fn local(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.lo)
            .zip(&self.strides)
            .map(|((i, l), s)| (i - l) * s)
            .sum()
    }

    fn global(&self, grid: &GridSpec, mut local: usize) -> usize {
        let mut lin = 0;
        for i in 0..self.dims.len() {
            let k = local / self.strides[i];
            local %= self.strides[i];
            lin += (k + self.lo[i]) * grid.strides[i];
        }
        lin
    }
}

/// A finite set of closed grid cells.
#[derive(Clone, Debug)]
pub struct BoxCover {
    grid: Arc<GridSpec>,
    cells: Vec<usize>,
    members: FixedBitSet,
}

impl PartialEq for BoxCover {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.cells == other.cells
    }
}

impl BoxCover {
    pub fn empty(grid: Arc<GridSpec>) -> Self {
        let members = FixedBitSet::with_capacity(grid.total_cells());
        BoxCover {
            grid,
            cells: Vec::new(),
            members,
        }
    }

    pub fn full(grid: Arc<GridSpec>) -> Self {
        let n = grid.total_cells();
        let mut members = FixedBitSet::with_capacity(n);
        members.insert_range(..);
        BoxCover {
            grid,
            cells: (0..n).collect(),
            members,
        }
    }

    fn from_bitset(grid: Arc<GridSpec>, members: FixedBitSet) -> Self {
        let cells = members.ones().collect();
        BoxCover {
            grid,
            cells,
            members,
        }
    }

    /// Builds a cover from linear cell indices (any order, duplicates allowed).
    pub fn from_linear<I: IntoIterator<Item = usize>>(
        grid: Arc<GridSpec>,
        cells: I,
    ) -> Result<Self, BoxError> {
        let mut members = FixedBitSet::with_capacity(grid.total_cells());
        for c in cells {
            if c >= grid.total_cells() {
                return Err(BoxError::IndexOutOfRange(vec![c]));
            }
            members.insert(c);
        }
        Ok(Self::from_bitset(grid, members))
    }

    pub fn from_indices<'a, I: IntoIterator<Item = &'a [usize]>>(
        grid: Arc<GridSpec>,
        indices: I,
    ) -> Result<Self, BoxError> {
        let mut members = FixedBitSet::with_capacity(grid.total_cells());
        for idx in indices {
            grid.check_index(idx)?;
            members.insert(grid.linear(idx));
        }
        Ok(Self::from_bitset(grid, members))
    }

    /// All cells whose closed box meets the closed rectangle `[lower, upper]`.
    pub fn from_rect(grid: Arc<GridSpec>, lower: &[f64], upper: &[f64]) -> Result<Self, BoxError> {
        let d = grid.dim();
        if lower.len() != d || upper.len() != d {
            return Err(BoxError::DimensionMismatch {
                expected: d,
                got: lower.len().min(upper.len()),
            });
        }
        let mut lo = Vec::with_capacity(d);
        let mut hi = Vec::with_capacity(d);
        for i in 0..d {
            if lower[i] > upper[i] || upper[i] < grid.lower[i] || lower[i] > grid.upper[i] {
                return Ok(Self::empty(grid));
            }
            let n = grid.cells[i] as f64;
            let a = (grid.cell_coord(i, lower[i]) - 1.0).ceil().max(0.0);
            let b = grid.cell_coord(i, upper[i]).floor().min(n - 1.0);
            lo.push(a as usize);
            hi.push(b as usize);
        }
        let block = IndexBlock::new(lo, &hi);
        let mut members = FixedBitSet::with_capacity(grid.total_cells());
        for local in 0..block.len {
            members.insert(block.global(&grid, local));
        }
        Ok(Self::from_bitset(grid, members))
    }

    /// Cells containing the given points.
    pub fn from_points<'a, I: IntoIterator<Item = &'a [f64]>>(
        grid: Arc<GridSpec>,
        points: I,
    ) -> Result<Self, BoxError> {
        let mut members = FixedBitSet::with_capacity(grid.total_cells());
        for p in points {
            let idx = grid.containing_cell(p)?;
            members.insert(grid.linear(&idx));
        }
        Ok(Self::from_bitset(grid, members))
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    /// Sorted linear indices of the active cells.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn count(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, linear: usize) -> bool {
        self.members.contains(linear)
    }

    pub fn contains_index(&self, idx: &[usize]) -> bool {
        self.grid.check_index(idx).is_ok() && self.members.contains(self.grid.linear(idx))
    }

    /// Active cells as multi-indices, lexicographically sorted.
    pub fn indices(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        self.cells.iter().map(|&c| self.grid.multi(c))
    }

    pub fn centers(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        self.cells.iter().map(|&c| self.grid.center_of_linear(c))
    }

    fn same_grid(&self, other: &BoxCover) -> Result<(), BoxError> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(BoxError::GridMismatch)
        }
    }

    pub fn is_subset(&self, other: &BoxCover) -> Result<bool, BoxError> {
        self.same_grid(other)?;
        Ok(self.members.is_subset(&other.members))
    }

    pub fn union(&self, other: &BoxCover) -> Result<BoxCover, BoxError> {
        self.same_grid(other)?;
        let mut members = self.members.clone();
        members.union_with(&other.members);
        Ok(Self::from_bitset(self.grid.clone(), members))
    }

    /// Inclusive multi-index bounding box, `None` when empty.
    fn bounding_block(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        let first = *self.cells.first()?;
        let mut lo = self.grid.multi(first);
        let mut hi = lo.clone();
        for &c in &self.cells[1..] {
            for (i, k) in self.grid.multi(c).into_iter().enumerate() {
                lo[i] = lo[i].min(k);
                hi[i] = hi[i].max(k);
            }
        }
        Some((lo, hi))
    }

    /// Dilation by `radius[i]` whole cells along each axis, clipped to the grid.
    pub fn dilate(&self, radius: &[usize]) -> BoxCover {
        let grid = &self.grid;
        let Some((lo, hi)) = self.bounding_block() else {
            return self.clone();
        };
        if radius.iter().all(|&r| r == 0) {
            return self.clone();
        }
        let lo: Vec<usize> = lo.iter().zip(radius).map(|(l, r)| l.saturating_sub(*r)).collect();
        let hi: Vec<usize> = hi
            .iter()
            .zip(radius)
            .zip(&grid.cells)
            .map(|((h, r), n)| (h + r).min(n - 1))
            .collect();
        let block = IndexBlock::new(lo, &hi);
        let mut dense = vec![false; block.len];
        for &c in &self.cells {
            dense[block.local(&grid.multi(c))] = true;
        }
        let mut line_in = Vec::new();
        for axis in 0..grid.dim() {
            let r = radius[axis];
            if r == 0 {
                continue;
            }
            let m = block.dims[axis];
            let stride = block.strides[axis];
            for base in 0..block.len {
                if (base / stride) % m != 0 {
                    continue;
                }
                line_in.clear();
                line_in.extend((0..m).map(|j| dense[base + j * stride]));
                // Running count of active cells in the window [j - r, j + r].
                let mut active = line_in[..r.min(m)].iter().filter(|&&b| b).count();
                for j in 0..m {
                    if j + r < m && line_in[j + r] {
                        active += 1;
                    }
                    if j > r && line_in[j - r - 1] {
                        active -= 1;
                    }
                    dense[base + j * stride] = active > 0;
                }
            }
        }
        let mut members = FixedBitSet::with_capacity(grid.total_cells());
        for (local, &on) in dense.iter().enumerate() {
            if on {
                members.insert(block.global(grid, local));
            }
        }
        Self::from_bitset(self.grid.clone(), members)
    }

    /// Adds every cell whose center is within `r + w_i/2` of an active center
    /// along each axis `i`; `fatten(0)` is the identity.
    pub fn fatten(&self, r: f64) -> BoxCover {
        let radius: Vec<usize> = self
            .grid
            .widths
            .iter()
            .map(|w| (r.max(0.0) / w + 0.5 + CELL_COUNT_SLACK).floor() as usize)
            .collect();
        self.dilate(&radius)
    }

    /// Text dump: header `dim lower... upper... cells...`, then one multi-index per line.
    pub fn to_dump(&self) -> String {
        let g = &self.grid;
        let mut out = String::new();
        let mut header: Vec<String> = vec![g.dim().to_string()];
        header.extend(g.lower.iter().map(|v| v.to_string()));
        header.extend(g.upper.iter().map(|v| v.to_string()));
        header.extend(g.cells.iter().map(|v| v.to_string()));
        out.push_str(&header.join(" "));
        out.push('\n');
        for idx in self.indices() {
            let parts: Vec<String> = idx.iter().map(|k| k.to_string()).collect();
            let _ = writeln!(out, "{}", parts.join(" "));
        }
        out
    }

    pub fn from_dump(text: &str) -> Result<BoxCover, BoxError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(BoxError::Parse {
            line: 1,
            reason: "missing header".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let bad = |line: usize, reason: String| BoxError::Parse { line, reason };
        let d: usize = fields
            .first()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(1, "bad dimension".into()))?;
        if d == 0 || fields.len() != 1 + 3 * d {
            return Err(bad(1, format!("expected {} header fields", 1 + 3 * d)));
        }
        let float = |s: &str| s.parse::<f64>().map_err(|e| bad(1, e.to_string()));
        let lower = fields[1..=d].iter().map(|s| float(s)).collect::<Result<Vec<_>, _>>()?;
        let upper = fields[d + 1..=2 * d]
            .iter()
            .map(|s| float(s))
            .collect::<Result<Vec<_>, _>>()?;
        let cells = fields[2 * d + 1..]
            .iter()
            .map(|s| s.parse::<usize>().map_err(|e| bad(1, e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let grid = Arc::new(GridSpec::new(lower, upper, cells)?);
        let mut members = FixedBitSet::with_capacity(grid.total_cells());
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let idx = line
                .split_whitespace()
                .map(|s| s.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(n + 1, e.to_string()))?;
            grid.check_index(&idx).map_err(|e| bad(n + 1, e.to_string()))?;
            members.insert(grid.linear(&idx));
        }
        Ok(Self::from_bitset(grid, members))
    }
}

/// Precomputed nearest-cell queries against a fixed nonempty target cover.
///
/// Holds a summed-area table over the target's bounding block; the distance
/// from a center to the target is the smallest candidate sup-distance
/// `w_i · k` whose search box contains a target cell.
pub struct TargetIndex<'a> {
    target: &'a BoxCover,
    lo: Vec<usize>,
    hi: Vec<usize>,
    // Prefix sums with one leading zero slab per axis.
    prefix: Vec<u32>,
    pstrides: Vec<usize>,
    radii: Vec<f64>,
}

impl<'a> TargetIndex<'a> {
    pub fn new(target: &'a BoxCover) -> Result<Self, BoxError> {
        let (lo, hi) = target.bounding_block().ok_or(BoxError::EmptyTarget)?;
        let grid = &target.grid;
        let d = grid.dim();
        let pdims: Vec<usize> = lo.iter().zip(&hi).map(|(l, h)| h - l + 2).collect();
        let mut pstrides = vec![1usize; d];
        for i in (0..d - 1).rev() {
            pstrides[i] = pstrides[i + 1] * pdims[i + 1];
        }
        let len: usize = pdims.iter().product();
        let mut prefix = vec![0u32; len];
        for &c in target.cells() {
            let idx = grid.multi(c);
            let p: usize = (0..d).map(|i| (idx[i] - lo[i] + 1) * pstrides[i]).sum();
            prefix[p] = 1;
        }
        for axis in 0..d {
            let stride = pstrides[axis];
            let m = pdims[axis];
            for f in 0..len {
                let k = (f / stride) % m;
                if k > 0 {
                    prefix[f] += prefix[f - stride];
                }
            }
        }
        let mut radii: Vec<f64> = grid
            .widths
            .iter()
            .zip(&grid.cells)
            .flat_map(|(&w, &n)| (0..n).map(move |k| w * k as f64))
            .collect();
        radii.sort_by(f64::total_cmp);
        radii.dedup();
        Ok(TargetIndex {
            target,
            lo,
            hi,
            prefix,
            pstrides,
            radii,
        })
    }

    pub fn target(&self) -> &BoxCover {
        self.target
    }

    /// Number of target cells with `|k_i - center_i| <= reach_i` on every axis.
    fn count_within(&self, center: &[usize], reach: &[usize]) -> u32 {
        let d = center.len();
        let mut a = [0usize; 8];
        let mut b = [0usize; 8];
        let (mut av, mut bv);
        let (a_s, b_s): (&mut [usize], &mut [usize]) = if d <= 8 {
            (&mut a[..d], &mut b[..d])
        } else {
            av = vec![0; d];
            bv = vec![0; d];
            (&mut av[..], &mut bv[..])
        };
        for i in 0..d {
            let from = center[i].saturating_sub(reach[i]).max(self.lo[i]);
            let to = center[i].saturating_add(reach[i]).min(self.hi[i]);
            if from > to {
                return 0;
            }
            // Half-open prefix coordinates.
            a_s[i] = from - self.lo[i];
            b_s[i] = to - self.lo[i] + 1;
        }
        let mut total: i64 = 0;
        for mask in 0..(1usize << d) {
            let mut off = 0;
            let mut sign = 1i64;
            for i in 0..d {
                if mask & (1 << i) != 0 {
                    off += a_s[i] * self.pstrides[i];
                    sign = -sign;
                } else {
                    off += b_s[i] * self.pstrides[i];
                }
            }
            total += sign * self.prefix[off] as i64;
        }
        total as u32
    }

    /// Sup-distance from the center of cell `linear` to the nearest target center.
    pub fn distance_from(&self, linear: usize) -> f64 {
        if self.target.contains(linear) {
            return 0.0;
        }
        let grid = &self.target.grid;
        let center = grid.multi(linear);
        let reach_for = |r: f64| -> Vec<usize> {
            grid.widths
                .iter()
                .map(|w| (r / w + CELL_COUNT_SLACK).floor() as usize)
                .collect()
        };
        // radii[0] == 0 is excluded by the membership test above.
        let (mut lo, mut hi) = (0usize, self.radii.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.count_within(&center, &reach_for(self.radii[mid])) > 0 {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        self.radii[lo]
    }

    /// `ρ(source, target)`; zero for an empty source.
    pub fn semi_distance_from(&self, source: &BoxCover) -> Result<f64, BoxError> {
        source.same_grid(self.target)?;
        Ok(source
            .cells()
            .par_iter()
            .map(|&c| self.distance_from(c))
            .reduce(|| 0.0, f64::max))
    }
}

/// `ρ(A, B) = max_{a ∈ A} min_{b ∈ B} d_∞(a, b)` over cell centers.
/// Empty `A` gives 0; empty `B` is an error.
pub fn semi_distance(a: &BoxCover, b: &BoxCover) -> Result<f64, BoxError> {
    a.same_grid(b)?;
    if b.is_empty() {
        return Err(BoxError::EmptyTarget);
    }
    if a.is_empty() || a.is_subset(b)? {
        return Ok(0.0);
    }
    TargetIndex::new(b)?.semi_distance_from(a)
}

/// Symmetric Hausdorff distance `max(ρ(A,B), ρ(B,A))`.
pub fn hausdorff(a: &BoxCover, b: &BoxCover) -> Result<f64, BoxError> {
    a.same_grid(b)?;
    if a.is_empty() || b.is_empty() {
        return Err(BoxError::EmptyTarget);
    }
    Ok(semi_distance(a, b)?.max(semi_distance(b, a)?))
}
