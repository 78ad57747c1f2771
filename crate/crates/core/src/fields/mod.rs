//! Discrete differential forms on a periodic six-torus grid and on a masked
//! `B³ × T³` grid, with an exact discrete exterior derivative.
//!
//! Components are collocated at grid points. Each axis carries a
//! second-order difference operator (centered, periodic or with one-sided
//! rows at the two faces of a bounded axis); operators on distinct axes
//! commute, so `d ∘ d = 0` holds exactly in exact arithmetic and bit-exactly
//! for dyadic data (see [`quantize`]).

mod dump;
mod ops;
pub mod pointwise;

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exterior::{basis_mask, mask_position, n_components, wedge_sign, KVector, DIM};

pub use dump::{read_dump, write_dump, DumpHeader};
pub use ops::{
    decompose_d, djd_apply, hitchin_volume, p_field, torsion_residual, type_component_field, DecomposedD,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("{op} is not defined on grade {grade}")]
    GradeOutOfRange { op: &'static str, grade: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("not stable at point {point} (coordinates {coords:?}): lambda = {lambda:e}")]
    NotStable { point: usize, coords: [f64; DIM], lambda: f64 },
    #[error("input is not of pure type at point {point} (relative deviation {relative:e})")]
    NotPureType { point: usize, relative: f64 },
    #[error("unsupported cycle: {0}")]
    UnsupportedCycle(String),
    #[error("field dump: {0}")]
    Dump(String),
}

/// Points per parallel work item.
pub(crate) const BLOCK: usize = 1024;

/// `Σ_{i<n} f(i)` with per-block partial sums added in block order, so the
/// result does not depend on the thread count.
pub(crate) fn ordered_sum(n: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    let parts: Vec<f64> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| (b * BLOCK..((b + 1) * BLOCK).min(n)).map(&f).sum())
        .collect();
    parts.iter().sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridKind {
    Torus,
    BallTorus { nx: usize, nt: usize },
}

/// Status of a spatial cell of the ball grid; every torus cell is `Free`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CellStatus {
    Inactive,
    /// Active with at least one inactive neighbour along an x-axis.
    Boundary,
    /// Active with all six x-neighbours active.
    Free,
}

impl CellStatus {
    pub fn is_active(self) -> bool {
        self != CellStatus::Inactive
    }
}

/// Regular product grid. Axis `a` has `dims[a]` points `origin[a] + i·spacing[a]`;
/// an axis with a single point is translation invariant (derivative zero).
#[derive(Clone, Debug)]
pub struct Grid {
    kind: GridKind,
    dims: [usize; DIM],
    spacing: [f64; DIM],
    origin: [f64; DIM],
    periodic: [bool; DIM],
    strides: [usize; DIM],
    npoints: usize,
    /// Per spatial cell (the first three axes).
    status: Vec<CellStatus>,
    /// Fraction of the cell inside the unit ball (all ones on the torus).
    fraction: Vec<f64>,
}

fn check_count(n: usize, what: &str) -> Result<(), FieldError> {
    if n == 1 || (n >= 4 && n % 2 == 0) {
        Ok(())
    } else {
        Err(FieldError::InvalidGrid(format!("{what} must be 1 or an even number ≥ 4, got {n}")))
    }
}

impl Grid {
    fn build(kind: GridKind, dims: [usize; DIM], spacing: [f64; DIM], origin: [f64; DIM], periodic: [bool; DIM]) -> Self {
        let mut strides = [1usize; DIM];
        for a in (0..DIM - 1).rev() {
            strides[a] = strides[a + 1] * dims[a + 1];
        }
        let npoints = dims.iter().product();
        let ncells = dims[0] * dims[1] * dims[2];
        Grid {
            kind,
            dims,
            spacing,
            origin,
            periodic,
            strides,
            npoints,
            status: vec![CellStatus::Free; ncells],
            fraction: vec![1.0; ncells],
        }
    }

    /// The unit torus `(ℝ/ℤ)⁶` with `n` points per axis.
    pub fn torus(n: usize) -> Result<Arc<Self>, FieldError> {
        if n == 1 {
            return Err(FieldError::InvalidGrid("torus needs n ≥ 4".into()));
        }
        Self::torus_with_dims([n; DIM])
    }

    /// Unit torus with per-axis point counts; a count of 1 makes the axis
    /// translation invariant.
    pub fn torus_with_dims(dims: [usize; DIM]) -> Result<Arc<Self>, FieldError> {
        for (a, &n) in dims.iter().enumerate() {
            check_count(n, &format!("axis {a} count"))?;
        }
        let spacing = dims.map(|n| 1.0 / n as f64);
        Ok(Arc::new(Self::build(GridKind::Torus, dims, spacing, [0.0; DIM], [true; DIM])))
    }

    /// `B³ × T³`: `nx` cells across `[−1, 1]` per spatial axis plus one
    /// inactive margin cell on each side, `nt` points per torus axis.
    pub fn ball_torus(nx: usize, nt: usize) -> Result<Arc<Self>, FieldError> {
        if nx < 4 || nx % 2 != 0 {
            return Err(FieldError::InvalidGrid(format!("nx must be an even number ≥ 4, got {nx}")));
        }
        check_count(nt, "nt")?;
        let h = 2.0 / nx as f64;
        let m = nx + 2;
        let dims = [m, m, m, nt, nt, nt];
        let spacing = [h, h, h, 1.0 / nt as f64, 1.0 / nt as f64, 1.0 / nt as f64];
        let origin = [-1.0 - h / 2.0, -1.0 - h / 2.0, -1.0 - h / 2.0, 0.0, 0.0, 0.0];
        let mut g = Self::build(GridKind::BallTorus { nx, nt }, dims, spacing, origin, [false, false, false, true, true, true]);
        let center = |i: usize| -1.0 - h / 2.0 + i as f64 * h;
        let active = |i: usize, j: usize, k: usize| {
            let (x, y, z) = (center(i), center(j), center(k));
            x * x + y * y + z * z <= 1.0
        };
        const SUB: usize = 8;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let c = (i * m + j) * m + k;
                    if !active(i, j, k) {
                        g.status[c] = CellStatus::Inactive;
                    } else {
                        let nb = [(i - 1, j, k), (i + 1, j, k), (i, j - 1, k), (i, j + 1, k), (i, j, k - 1), (i, j, k + 1)];
                        let all = nb.iter().all(|&(a, b, cc)| active(a, b, cc));
                        g.status[c] = if all { CellStatus::Free } else { CellStatus::Boundary };
                    }
                    // midpoint subsampling of the cell
                    let mut inside = 0usize;
                    for a in 0..SUB {
                        for b in 0..SUB {
                            for cc in 0..SUB {
                                let off = |t: usize| (t as f64 + 0.5) / SUB as f64 - 0.5;
                                let x = center(i) + off(a) * h;
                                let y = center(j) + off(b) * h;
                                let z = center(k) + off(cc) * h;
                                if x * x + y * y + z * z <= 1.0 {
                                    inside += 1;
                                }
                            }
                        }
                    }
                    g.fraction[c] = inside as f64 / (SUB * SUB * SUB) as f64;
                }
            }
        }
        Ok(Arc::new(g))
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn dims(&self) -> [usize; DIM] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; DIM] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; DIM] {
        self.origin
    }

    pub fn periodic(&self) -> [bool; DIM] {
        self.periodic
    }

    pub fn npoints(&self) -> usize {
        self.npoints
    }

    /// Points per spatial cell (the size of the torus factor).
    pub fn fiber_len(&self) -> usize {
        self.strides[2]
    }

    pub fn index(&self, p: usize) -> [usize; DIM] {
        std::array::from_fn(|a| (p / self.strides[a]) % self.dims[a])
    }

    /// Steps a multi-index to the next point in storage order.
    #[inline]
    pub fn advance(&self, idx: &mut [usize; DIM]) {
        for a in (0..DIM).rev() {
            idx[a] += 1;
            if idx[a] < self.dims[a] {
                return;
            }
            idx[a] = 0;
        }
    }

    pub fn point(&self, idx: &[usize; DIM]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn coords(&self, p: usize) -> [f64; DIM] {
        let idx = self.index(p);
        std::array::from_fn(|a| self.origin[a] + idx[a] as f64 * self.spacing[a])
    }

    pub fn cell(&self, p: usize) -> usize {
        p / self.strides[2]
    }

    pub fn status(&self, p: usize) -> CellStatus {
        self.status[self.cell(p)]
    }

    pub fn cell_statuses(&self) -> &[CellStatus] {
        &self.status
    }

    /// Coordinate volume of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Quadrature weight of a point: the cell volume times the fraction of
    /// the cell inside the domain.
    pub fn weight(&self, p: usize) -> f64 {
        self.fraction[self.cell(p)] * self.cell_volume()
    }

    /// Active points (every point of the torus).
    pub fn is_active(&self, p: usize) -> bool {
        self.status(p).is_active()
    }

    pub fn is_free(&self, p: usize) -> bool {
        self.status(p) == CellStatus::Free
    }

    /// Stencil of the derivative along `axis` at index `i`, as integer
    /// coefficients over index offsets; the result is scaled by `1/(2h)`.
    fn stencil(&self, axis: usize, i: usize) -> Stencil {
        let n = self.dims[axis];
        if n == 1 {
            return Stencil::default();
        }
        let mut s = Stencil::default();
        if self.periodic[axis] || (i > 0 && i + 1 < n) {
            s.push(1, 1.0);
            s.push(-1, -1.0);
        } else if i == 0 {
            // −3f₀ + 4f₁ − f₂, written on differences so constants give exact zeros
            s.relative = true;
            s.push(1, 4.0);
            s.push(2, -1.0);
        } else {
            s.relative = true;
            s.push(-1, -4.0);
            s.push(-2, 1.0);
        }
        s
    }

    /// Stencil of the transpose of the axis derivative at index `j`.
    fn stencil_transpose(&self, axis: usize, j: usize) -> Stencil {
        let n = self.dims[axis];
        if n == 1 {
            return Stencil::default();
        }
        let mut s = Stencil::default();
        if self.periodic[axis] {
            s.push(-1, 1.0);
            s.push(1, -1.0);
            return s;
        }
        // column j of the derivative matrix
        let centered = |r: isize| r >= 1 && r + 1 < n as isize;
        let jj = j as isize;
        if centered(jj - 1) {
            s.push(-1, 1.0);
        }
        if centered(jj + 1) {
            s.push(1, -1.0);
        }
        if j <= 2 {
            s.push(-jj, [-3.0, 4.0, -1.0][j]);
        }
        let from_end = n - 1 - j;
        if from_end <= 2 {
            s.push(from_end as isize, [3.0, -4.0, 1.0][from_end]);
        }
        s
    }

    fn inv_2h(&self, axis: usize) -> f64 {
        0.5 / self.spacing[axis]
    }

    /// Index of the neighbour at `offset` along `axis`, wrapping on periodic axes.
    fn shifted(&self, p: usize, idx: usize, axis: usize, offset: isize) -> usize {
        let n = self.dims[axis] as isize;
        let mut j = idx as isize + offset;
        if j < 0 {
            j += n;
        } else if j >= n {
            j -= n;
        }
        let j = if (0..n).contains(&j) { j as usize } else { j.rem_euclid(n) as usize };
        p - idx * self.strides[axis] + j * self.strides[axis]
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other)
            || (self.kind == other.kind && self.dims == other.dims && self.spacing == other.spacing && self.origin == other.origin)
    }
}

#[derive(Default, Clone, Copy)]
struct Stencil {
    len: usize,
    /// Coefficients act on `f[off] − f[0]`.
    relative: bool,
    off: [isize; 4],
    coef: [f64; 4],
}

impl Stencil {
    fn apply<T: FieldValue>(&self, value: impl Fn(isize) -> T) -> T {
        let mut acc = T::default();
        if self.relative {
            let f0 = value(0);
            for t in 0..self.len {
                acc = acc + (value(self.off[t]) - f0) * self.coef[t];
            }
        } else {
            for t in 0..self.len {
                acc = acc + value(self.off[t]) * self.coef[t];
            }
        }
        acc
    }

    fn push(&mut self, off: isize, coef: f64) {
        self.off[self.len] = off;
        self.coef[self.len] = coef;
        self.len += 1;
    }
}

/// Scalars that can be stored in a field.
pub trait FieldValue:
    Copy + Send + Sync + Default + PartialEq + std::fmt::Debug + Add<Output = Self> + Sub<Output = Self> + Neg<Output = Self> + Mul<f64, Output = Self>
{
    fn abs_sq(self) -> f64;
}

impl FieldValue for f64 {
    fn abs_sq(self) -> f64 {
        self * self
    }
}

impl FieldValue for Complex64 {
    fn abs_sq(self) -> f64 {
        self.norm_sqr()
    }
}

/// A k-form sampled at every grid point, stored point-major:
/// `data[p · C(6,k) + c]`.
#[derive(Clone, Debug)]
pub struct FormField<T> {
    grid: Arc<Grid>,
    grade: usize,
    data: Vec<T>,
}

impl<T: FieldValue> FormField<T> {
    pub fn zeros(grid: &Arc<Grid>, grade: usize) -> Self {
        assert!(grade <= DIM);
        FormField { grid: grid.clone(), grade, data: vec![T::default(); grid.npoints * n_components(grade)] }
    }

    pub fn from_data(grid: &Arc<Grid>, grade: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), grid.npoints * n_components(grade), "data length does not match the grid");
        FormField { grid: grid.clone(), grade, data }
    }

    /// Samples `f` at every point.
    pub fn from_fn(grid: &Arc<Grid>, grade: usize, f: impl Fn(&[f64; DIM]) -> Vec<T> + Sync) -> Self {
        let nc = n_components(grade);
        let mut out = Self::zeros(grid, grade);
        out.data.par_chunks_mut(nc * BLOCK).enumerate().for_each(|(b, chunk)| {
            for (q, vals) in chunk.chunks_mut(nc).enumerate() {
                let v = f(&grid.coords(b * BLOCK + q));
                assert_eq!(v.len(), nc);
                vals.copy_from_slice(&v);
            }
        });
        out
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn grade(&self) -> usize {
        self.grade
    }

    pub fn ncomp(&self) -> usize {
        n_components(self.grade)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn at(&self, p: usize) -> &[T] {
        let nc = self.ncomp();
        &self.data[p * nc..(p + 1) * nc]
    }

    pub fn at_mut(&mut self, p: usize) -> &mut [T] {
        let nc = self.ncomp();
        &mut self.data[p * nc..(p + 1) * nc]
    }

    fn check_same(&self, other: &Self) -> Result<(), FieldError> {
        if !self.grid.same_as(&other.grid) {
            return Err(FieldError::GridMismatch);
        }
        if self.grade != other.grade {
            return Err(FieldError::GradeOutOfRange { op: "field arithmetic", grade: other.grade });
        }
        Ok(())
    }

    /// `self + s · other`.
    pub fn axpy(&mut self, s: f64, other: &Self) -> Result<(), FieldError> {
        self.check_same(other)?;
        self.data.par_iter_mut().zip(other.data.par_iter()).for_each(|(a, &b)| *a = *a + b * s);
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, FieldError> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, FieldError> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        FormField { grid: self.grid.clone(), grade: self.grade, data: self.data.par_iter().map(|&x| x * s).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.par_iter().map(|x| x.abs_sq().sqrt()).reduce(|| 0.0, f64::max)
    }

    /// Root-mean-square of the pointwise coefficient norm over all points.
    pub fn rms(&self) -> f64 {
        (ordered_sum(self.data.len(), |i| self.data[i].abs_sq()) / self.grid.npoints as f64).sqrt()
    }

    /// Euclidean norm of the coefficient vector restricted to points where
    /// `keep` holds.
    pub fn norm_where(&self, keep: impl Fn(usize) -> bool + Sync) -> f64 {
        ordered_sum(self.grid.npoints, |p| if keep(p) { self.at(p).iter().map(|x| x.abs_sq()).sum() } else { 0.0 })
            .sqrt()
    }

    /// Sets every component to zero at points where `keep` fails.
    pub fn mask(&mut self, keep: impl Fn(usize) -> bool + Sync) {
        let nc = self.ncomp();
        self.data.par_chunks_mut(nc).enumerate().for_each(|(p, v)| {
            if !keep(p) {
                v.fill(T::default());
            }
        });
    }

    /// Pointwise map producing a field of grade `grade`.
    pub fn map_points<U: FieldValue>(&self, grade: usize, f: impl Fn(usize, &[T], &mut [U]) + Sync) -> FormField<U> {
        let nc = self.ncomp();
        let no = n_components(grade);
        let mut out = FormField::<U>::zeros(&self.grid, grade);
        out.data.par_chunks_mut(no * BLOCK).enumerate().for_each(|(b, chunk)| {
            for (q, o) in chunk.chunks_mut(no).enumerate() {
                let p = b * BLOCK + q;
                f(p, &self.data[p * nc..(p + 1) * nc], o);
            }
        });
        out
    }
}

impl FormField<f64> {
    /// The constant field with value `a`.
    pub fn constant(grid: &Arc<Grid>, a: &KVector<f64>) -> Self {
        let nc = n_components(a.grade());
        let mut data = Vec::with_capacity(grid.npoints * nc);
        for _ in 0..grid.npoints {
            data.extend_from_slice(a.coeffs());
        }
        FormField { grid: grid.clone(), grade: a.grade(), data }
    }

    pub fn form_at(&self, p: usize) -> KVector<f64> {
        KVector::from_coeffs(self.grade, self.at(p).to_vec())
    }

    pub fn to_complex(&self) -> FormField<Complex64> {
        FormField {
            grid: self.grid.clone(),
            grade: self.grade,
            data: self.data.par_iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        }
    }

    pub fn dot(&self, other: &Self) -> Result<f64, FieldError> {
        self.check_same(other)?;
        Ok(ordered_sum(self.data.len(), |i| self.data[i] * other.data[i]))
    }
}

impl FormField<Complex64> {
    pub fn re(&self) -> FormField<f64> {
        FormField { grid: self.grid.clone(), grade: self.grade, data: self.data.par_iter().map(|x| x.re).collect() }
    }

    pub fn im(&self) -> FormField<f64> {
        FormField { grid: self.grid.clone(), grade: self.grade, data: self.data.par_iter().map(|x| x.im).collect() }
    }
}

/// `(axis, input component, output component, sign)` for `d` on grade k.
fn d_terms(k: usize) -> Vec<(usize, usize, usize, f64)> {
    let mut out = Vec::new();
    for c in 0..n_components(k) {
        let m = basis_mask(k, c);
        for a in 0..DIM {
            if m & (1 << a) != 0 {
                continue;
            }
            let sign = wedge_sign(1 << a, m) as f64;
            out.push((a, c, mask_position(m | (1 << a)), sign));
        }
    }
    out
}

/// Reusable kernel for `d` and its transpose at single points.
pub(crate) struct PointD {
    k: usize,
    nin: usize,
    terms: Vec<(usize, usize, usize, f64)>,
    axes: Vec<usize>,
    deriv: Vec<f64>,
}

impl PointD {
    /// Kernel for `d` on grade `k` (transpose: from grade `k + 1` to `k`).
    pub(crate) fn new(grid: &Grid, k: usize) -> Self {
        PointD {
            k,
            nin: n_components(k),
            terms: d_terms(k),
            axes: (0..DIM).filter(|&ax| grid.dims[ax] > 1).collect(),
            deriv: vec![0.0; DIM * n_components(k).max(n_components(k + 1))],
        }
    }

    /// `(d a)(p)` written to `out` (length C(6, k+1)); `a` holds grade-k
    /// data and `idx` is the multi-index of `p`.
    pub(crate) fn d_at_index(&mut self, grid: &Grid, a: &[f64], p: usize, idx: &[usize; DIM], out: &mut [f64]) {
        d_point(grid, &self.terms, &self.axes, self.nin, a, p, idx, &mut self.deriv, out);
    }

    /// `(dᵀ v)(p)` written to `out` (length C(6, k)); `v` holds grade-(k+1) data.
    pub(crate) fn d_transpose_at(&mut self, grid: &Grid, v: &[f64], p: usize, out: &mut [f64]) {
        self.d_transpose_at_index(grid, v, p, &grid.index(p), out);
    }

    pub(crate) fn d_transpose_at_index(&mut self, grid: &Grid, v: &[f64], p: usize, idx: &[usize; DIM], out: &mut [f64]) {
        d_transpose_point(grid, &self.terms, &self.axes, n_components(self.k + 1), v, p, idx, &mut self.deriv, out);
    }
}

/// Neighbour offsets (in units of components) and coefficients of the
/// stencil along `ax` at point `p`.
#[inline]
fn neighbours(grid: &Grid, st: &Stencil, p: usize, i: usize, ax: usize, nc: usize) -> ([usize; 4], usize) {
    let mut nb = [0usize; 4];
    for t in 0..st.len {
        nb[t] = grid.shifted(p, i, ax, st.off[t]) * nc;
    }
    (nb, p * nc)
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn d_point<T: FieldValue>(
    grid: &Grid,
    terms: &[(usize, usize, usize, f64)],
    axes: &[usize],
    nin: usize,
    a: &[T],
    p: usize,
    idx: &[usize; DIM],
    deriv: &mut [T],
    o: &mut [T],
) {
    o.fill(T::default());
    for &ax in axes {
        let st = grid.stencil(ax, idx[ax]);
        let s = grid.inv_2h(ax);
        let (nb, p0) = neighbours(grid, &st, p, idx[ax], ax, nin);
        let d = &mut deriv[ax * nin..(ax + 1) * nin];
        if st.relative {
            for (c, dc) in d.iter_mut().enumerate() {
                let f0 = a[p0 + c];
                let mut acc = T::default();
                for t in 0..st.len {
                    acc = acc + (a[nb[t] + c] - f0) * st.coef[t];
                }
                *dc = acc * s;
            }
        } else {
            for (c, dc) in d.iter_mut().enumerate() {
                let mut acc = T::default();
                for t in 0..st.len {
                    acc = acc + a[nb[t] + c] * st.coef[t];
                }
                *dc = acc * s;
            }
        }
    }
    for &(ax, c, oc, sign) in terms {
        if grid.dims[ax] > 1 {
            let v = deriv[ax * nin + c];
            o[oc] = if sign > 0.0 { o[oc] + v } else { o[oc] - v };
        }
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn d_transpose_point<T: FieldValue>(
    grid: &Grid,
    terms: &[(usize, usize, usize, f64)],
    axes: &[usize],
    nin: usize,
    v: &[T],
    p: usize,
    idx: &[usize; DIM],
    deriv: &mut [T],
    o: &mut [T],
) {
    o.fill(T::default());
    for &ax in axes {
        let st = grid.stencil_transpose(ax, idx[ax]);
        let s = grid.inv_2h(ax);
        let (nb, _) = neighbours(grid, &st, p, idx[ax], ax, nin);
        for (c, dc) in deriv[ax * nin..(ax + 1) * nin].iter_mut().enumerate() {
            let mut acc = T::default();
            for t in 0..st.len {
                acc = acc + v[nb[t] + c] * st.coef[t];
            }
            *dc = acc * s;
        }
    }
    for &(ax, c, oc, sign) in terms {
        if grid.dims[ax] > 1 {
            let val = deriv[ax * nin + oc];
            o[c] = if sign > 0.0 { o[c] + val } else { o[c] - val };
        }
    }
}

/// Discrete exterior derivative.
pub fn d_field<T: FieldValue>(a: &FormField<T>) -> Result<FormField<T>, FieldError> {
    let k = a.grade;
    if k >= DIM {
        return Err(FieldError::GradeOutOfRange { op: "d", grade: k });
    }
    let grid = &a.grid;
    let nin = n_components(k);
    let nout = n_components(k + 1);
    let terms = d_terms(k);
    let axes: Vec<usize> = (0..DIM).filter(|&ax| grid.dims[ax] > 1).collect();
    let mut out = FormField::<T>::zeros(grid, k + 1);
    out.data.par_chunks_mut(nout * BLOCK).enumerate().for_each(|(b, chunk)| {
        let mut deriv = vec![T::default(); DIM * nin];
        let mut idx = grid.index(b * BLOCK);
        for (q, o) in chunk.chunks_mut(nout).enumerate() {
            d_point(grid, &terms, &axes, nin, &a.data, b * BLOCK + q, &idx, &mut deriv, o);
            grid.advance(&mut idx);
        }
    });
    Ok(out)
}

/// Componentwise difference quotient along one axis (the building block of
/// [`d_field`]).
pub fn axis_derivative<T: FieldValue>(a: &FormField<T>, axis: usize) -> FormField<T> {
    assert!(axis < DIM);
    let grid = &a.grid;
    let nc = a.ncomp();
    let mut out = FormField::<T>::zeros(grid, a.grade);
    if grid.dims[axis] == 1 {
        return out;
    }
    let s = grid.inv_2h(axis);
    out.data.par_chunks_mut(nc * BLOCK).enumerate().for_each(|(b, chunk)| {
        for (q, o) in chunk.chunks_mut(nc).enumerate() {
            let p = b * BLOCK + q;
            let i = grid.index(p)[axis];
            let st = grid.stencil(axis, i);
            for (c, oc) in o.iter_mut().enumerate() {
                *oc = st.apply(|off| a.data[grid.shifted(p, i, axis, off) * nc + c]) * s;
            }
        }
    });
    out
}

/// Transpose of [`d_field`] for the coefficient inner product `Σ_p Σ_c`.
pub fn d_transpose<T: FieldValue>(v: &FormField<T>) -> Result<FormField<T>, FieldError> {
    let k1 = v.grade;
    if k1 == 0 {
        return Err(FieldError::GradeOutOfRange { op: "d transpose", grade: 0 });
    }
    let k = k1 - 1;
    let grid = &v.grid;
    let nin = n_components(k1);
    let nout = n_components(k);
    let terms = d_terms(k);
    let axes: Vec<usize> = (0..DIM).filter(|&ax| grid.dims[ax] > 1).collect();
    let mut out = FormField::<T>::zeros(grid, k);
    out.data.par_chunks_mut(nout * BLOCK).enumerate().for_each(|(b, chunk)| {
        let mut deriv = vec![T::default(); DIM * nin];
        let mut idx = grid.index(b * BLOCK);
        for (q, o) in chunk.chunks_mut(nout).enumerate() {
            d_transpose_point(grid, &terms, &axes, nin, &v.data, b * BLOCK + q, &idx, &mut deriv, o);
            grid.advance(&mut idx);
        }
    });
    Ok(out)
}

/// Pointwise wedge product.
pub fn wedge_field(a: &FormField<f64>, b: &FormField<f64>) -> Result<FormField<f64>, FieldError> {
    if !a.grid.same_as(&b.grid) {
        return Err(FieldError::GridMismatch);
    }
    if a.grade + b.grade > DIM {
        return Err(FieldError::GradeOutOfRange { op: "wedge", grade: a.grade + b.grade });
    }
    let kb = b.grade;
    Ok(a.map_points(a.grade + kb, |p, va, out| {
        let w = KVector::from_coeffs(a.grade, va.to_vec()).wedge(&KVector::from_coeffs(kb, b.at(p).to_vec()));
        out.copy_from_slice(w.coeffs());
    }))
}

/// Rounds every value to a multiple of `2^-bits`. Sums and stencil
/// combinations of such values are exact in f64 while magnitudes stay
/// moderate, which makes `d ∘ d` and discrete periods bit-exact.
pub fn quantize(a: &mut FormField<f64>, bits: i32) {
    let s = 2f64.powi(bits);
    a.data.par_iter_mut().for_each(|x| *x = (*x * s).round() / s);
}

/// Integral of a top-degree field with the quadrature weights of the grid.
pub fn integrate_top(a: &FormField<f64>) -> Result<f64, FieldError> {
    if a.grade != DIM {
        return Err(FieldError::GradeOutOfRange { op: "integrate_top", grade: a.grade });
    }
    let g = &a.grid;
    Ok(ordered_sum(a.data.len(), |p| a.data[p] * g.weight(p)))
}

/// Axis-aligned 3-cycles supported by [`integrate_cycle`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Cycle {
    /// The torus spanned by three axes through the grid point `base`
    /// (torus grids; on the ball grid only the fiber axes 3, 4, 5).
    CoordinateTorus { axes: [usize; 3], base: [usize; DIM] },
    /// `B³ × {y}` at torus index `y` (ball grids).
    BallSlice { y: [usize; 3] },
}

impl Cycle {
    /// `{x} × T³` through the spatial cell index `x`.
    pub fn fiber(x: [usize; 3]) -> Cycle {
        Cycle::CoordinateTorus { axes: [3, 4, 5], base: [x[0], x[1], x[2], 0, 0, 0] }
    }
}

/// Points and component summed by [`integrate_cycle`], in summation order,
/// with the volume factor applied to the sum.
#[derive(Clone, Debug)]
pub struct CycleSupport {
    pub points: Vec<usize>,
    pub component: usize,
    pub volume_factor: f64,
}

impl CycleSupport {
    /// Integral of a 3-form given pointwise by `value(p)[component]`.
    pub fn integrate(&self, mut value: impl FnMut(usize) -> f64) -> f64 {
        let mut sum = 0.0;
        for &p in &self.points {
            sum += value(p);
        }
        sum * self.volume_factor
    }
}

pub fn cycle_support(g: &Grid, cycle: &Cycle) -> Result<CycleSupport, FieldError> {
    match (cycle, g.kind) {
        (Cycle::CoordinateTorus { axes, base }, kind) => {
            let mut ax = *axes;
            ax.sort_unstable();
            if ax[0] == ax[1] || ax[1] == ax[2] || ax[2] >= DIM {
                return Err(FieldError::UnsupportedCycle(format!("axes {axes:?}")));
            }
            if matches!(kind, GridKind::BallTorus { .. }) && ax != [3, 4, 5] {
                return Err(FieldError::UnsupportedCycle("coordinate tori on the ball grid must be torus fibers".into()));
            }
            if base.iter().zip(&g.dims).any(|(i, n)| i >= n) {
                return Err(FieldError::UnsupportedCycle(format!("base point {base:?} outside the grid")));
            }
            let mut points = Vec::new();
            for i in 0..g.dims[ax[0]] {
                for j in 0..g.dims[ax[1]] {
                    for k in 0..g.dims[ax[2]] {
                        let mut idx = *base;
                        idx[ax[0]] = i;
                        idx[ax[1]] = j;
                        idx[ax[2]] = k;
                        points.push(g.point(&idx));
                    }
                }
            }
            Ok(CycleSupport {
                points,
                component: mask_position((1 << ax[0]) | (1 << ax[1]) | (1 << ax[2])),
                volume_factor: g.spacing[ax[0]] * g.spacing[ax[1]] * g.spacing[ax[2]],
            })
        }
        (Cycle::BallSlice { y }, GridKind::BallTorus { .. }) => {
            if y.iter().zip(&g.dims[3..]).any(|(i, n)| i >= n) {
                return Err(FieldError::UnsupportedCycle(format!("torus index {y:?} outside the grid")));
            }
            let m = g.dims[0];
            let mut points = Vec::new();
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        let p = g.point(&[i, j, k, y[0], y[1], y[2]]);
                        if g.is_active(p) {
                            points.push(p);
                        }
                    }
                }
            }
            Ok(CycleSupport {
                points,
                component: mask_position(0b000111),
                volume_factor: g.spacing[0] * g.spacing[1] * g.spacing[2],
            })
        }
        (Cycle::BallSlice { .. }, GridKind::Torus) => {
            Err(FieldError::UnsupportedCycle("ball slices need a ball grid".into()))
        }
    }
}

/// Midpoint quadrature of a 3-form over an axis-aligned cycle. Ball slices
/// sum over active cells with unit weights, so that differentials of fields
/// vanishing off the free cells integrate to zero exactly.
pub fn integrate_cycle(a: &FormField<f64>, cycle: &Cycle) -> Result<f64, FieldError> {
    if a.grade != 3 {
        return Err(FieldError::GradeOutOfRange { op: "integrate_cycle", grade: a.grade });
    }
    let support = cycle_support(&a.grid, cycle)?;
    Ok(support.integrate(|p| a.at(p)[support.component]))
}

/// Standard set of cycles used for period checks: the three-torus fibers
/// (torus: all 20 coordinate tori through the origin; ball: the fiber through
/// the central cell) and, on the ball, the slice through the origin of `T³`.
pub fn standard_cycles(grid: &Grid) -> Vec<Cycle> {
    match grid.kind {
        GridKind::Torus => (0..n_components(3))
            .map(|c| {
                let ix = crate::exterior::mask_indices(basis_mask(3, c));
                Cycle::CoordinateTorus { axes: [ix[0], ix[1], ix[2]], base: [0; DIM] }
            })
            .collect(),
        GridKind::BallTorus { nx, .. } => {
            let mid = nx / 2;
            vec![Cycle::fiber([mid, mid, mid]), Cycle::BallSlice { y: [0, 0, 0] }]
        }
    }
}
