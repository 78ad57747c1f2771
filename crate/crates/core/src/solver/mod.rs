//! Least-squares search for a torsion-free stable 3-form in a fixed class.
//!
//! With `Ψ(α) = Ψ₀ + b + dα` the objective is
//! `f(α) = ½ Σ_p w_p |dP(Ψ(α))_p|² · vol(cell)` with `w` the active-cell
//! mask, minimised by L-BFGS with a backtracking line search that stays
//! inside the stability domain. The iterate α is kept on a dyadic lattice,
//! so `dΨ = 0` and the periods of Ψ hold bit-exactly along the run.

mod fourier;

use std::collections::VecDeque;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::TrigForm;
use crate::exterior::{n_components, DIM};
use crate::fields::pointwise::PointStructure;
use fourier::FourierPreconditioner;
use crate::fields::{
    cycle_support, d_field, quantize, standard_cycles, CellStatus, Cycle, CycleSupport, FieldError, FormField, Grid,
    GridKind, PointD, BLOCK,
};

/// Which entries of α the optimiser may move.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constraint {
    /// Every entry (torus grids).
    Periodic,
    /// Entries on free cells only; boundary-layer and inactive entries stay 0.
    BoundaryZero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Stop once the residual is below `rtol` times the initial residual.
    pub rtol: f64,
    pub max_iterations: usize,
    /// Number of correction pairs kept by L-BFGS.
    pub memory: usize,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Trial points with `min(−λ)` below this fraction of the initial
    /// minimum are rejected.
    pub stability_floor: f64,
    /// Consecutive accepted steps without residual decrease before giving up.
    pub stall_limit: usize,
    /// Lattice `2^-bits` for α; `None` keeps full precision.
    pub quantize_bits: Option<i32>,
    /// On torus grids, start each L-BFGS update from the Fourier-diagonal
    /// Hessian of the linearised problem instead of a multiple of the identity.
    pub precondition: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            rtol: 1e-3,
            max_iterations: 2000,
            memory: 5,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
            stability_floor: 0.1,
            stall_limit: 50,
            quantize_bits: Some(36),
            precondition: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(
        "line search could not keep the iterate stable at iteration {iteration} \
         (last step {step:e}, stability ratio {ratio:e}, failing point {point:?})"
    )]
    StabilityBreakdown { iteration: usize, step: f64, ratio: f64, point: Option<usize> },
    #[error("residual did not decrease for {steps} accepted steps (iteration {iteration}, residual {residual:e})")]
    Stalled { iteration: usize, steps: usize, residual: f64 },
}

#[derive(Clone, Debug)]
pub struct SolveProblem {
    pub base: FormField<f64>,
    pub class_offset: FormField<f64>,
    pub constraint: Constraint,
    pub options: SolveOptions,
}

impl SolveProblem {
    /// Checks grades, grids and exact closedness of both forms.
    pub fn new(base: FormField<f64>, class_offset: FormField<f64>, constraint: Constraint) -> Result<Self, SolveError> {
        if base.grade() != 3 || class_offset.grade() != 3 {
            return Err(SolveError::InvalidProblem("base and class offset must be 3-forms".into()));
        }
        if !base.grid().same_as(class_offset.grid()) {
            return Err(FieldError::GridMismatch.into());
        }
        if constraint == Constraint::Periodic && base.grid().kind() != GridKind::Torus {
            return Err(SolveError::InvalidProblem("the periodic constraint needs a torus grid".into()));
        }
        for (name, f) in [("base", &base), ("class offset", &class_offset)] {
            if d_field(f)?.data().iter().any(|&x| x != 0.0) {
                return Err(SolveError::InvalidProblem(format!("{name} is not closed")));
            }
        }
        Ok(SolveProblem { base, class_offset, constraint, options: SolveOptions::default() })
    }

    pub fn with_options(mut self, options: SolveOptions) -> Self {
        self.options = options;
        self
    }

    /// Points whose α entries are optimisation variables.
    fn variable_points(&self) -> Vec<usize> {
        let g = self.base.grid();
        match self.constraint {
            Constraint::Periodic => (0..g.npoints()).collect(),
            Constraint::BoundaryZero => (0..g.npoints()).filter(|&p| g.status(p) == CellStatus::Free).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    IterationCap,
    /// No step satisfying the sufficient-decrease test was found; usually the
    /// roundoff floor of the objective.
    LineSearchExhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub cycle: Cycle,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    /// `‖dP(Ψ)‖₂` at the start and after every accepted step.
    pub residual_history: Vec<f64>,
    pub volume_history: Vec<f64>,
    pub final_psi: FormField<f64>,
    pub final_alpha: FormField<f64>,
    /// Periods of the final iterate.
    pub periods: Vec<PeriodRecord>,
    /// Largest deviation of any period over all accepted iterates from its
    /// value at `Ψ₀ + b`.
    pub max_period_drift: f64,
    pub converged: bool,
    pub termination: Termination,
    pub iterations: usize,
    pub evaluations: usize,
    /// Smallest `min(−λ)` over accepted iterates relative to the initial one.
    pub min_stability_ratio: f64,
}

impl SolveReport {
    pub fn residual_reduction(&self) -> f64 {
        let first = self.residual_history[0];
        let last = *self.residual_history.last().expect("history is never empty");
        if last == 0.0 {
            f64::INFINITY
        } else {
            first / last
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Value {
    f: f64,
    volume: f64,
    min_neg_lambda: f64,
}

/// Objective and gradient evaluation with preallocated full-grid buffers.
struct Evaluator {
    grid: Arc<Grid>,
    /// `Ψ₀ + b`.
    psib: Vec<f64>,
    /// Full α (grade 2); only variable entries are ever nonzero in a solve.
    alpha: Vec<f64>,
    /// `P(Ψ)`, later reused for `Jᵀ dᵀ r`.
    work3: Vec<f64>,
    /// Masked residual `w · dP(Ψ)`.
    res4: Vec<f64>,
    vars: Vec<usize>,
    /// Per spatial cell: P is needed there (active, next to an active cell,
    /// or of positive quadrature weight).
    needed: Vec<bool>,
    evaluations: usize,
}

fn needed_cells(grid: &Grid) -> Vec<bool> {
    let d = grid.dims();
    let (m0, m1, m2) = (d[0], d[1], d[2]);
    let fiber = grid.fiber_len();
    let cell_point = |i: usize, j: usize, k: usize| ((i * m1 + j) * m2 + k) * fiber;
    let mut out = vec![false; m0 * m1 * m2];
    for i in 0..m0 {
        for j in 0..m1 {
            for k in 0..m2 {
                let p = cell_point(i, j, k);
                let mut need = grid.is_active(p) || grid.weight(p) > 0.0;
                for (di, dj, dk) in [(1, 0, 0), (0, 1, 0), (0, 0, 1)] {
                    for s in [-1isize, 1] {
                        let (a, b, c) = (i as isize + s * di, j as isize + s * dj, k as isize + s * dk);
                        let inside = |v: isize, n: usize| v >= 0 && (v as usize) < n;
                        if inside(a, m0) && inside(b, m1) && inside(c, m2) {
                            need |= grid.is_active(cell_point(a as usize, b as usize, c as usize));
                        }
                    }
                }
                out[(i * m1 + j) * m2 + k] = need;
            }
        }
    }
    out
}

impl Evaluator {
    fn new(problem: &SolveProblem, vars: Vec<usize>) -> Result<Self, FieldError> {
        let grid = problem.base.grid().clone();
        let n = grid.npoints();
        let psib = problem.base.add(&problem.class_offset)?.into_data();
        let needed = match grid.kind() {
            GridKind::Torus => vec![true; grid.dims()[..3].iter().product()],
            GridKind::BallTorus { .. } => needed_cells(&grid),
        };
        Ok(Evaluator {
            needed,
            psib,
            alpha: vec![0.0; n * 15],
            work3: vec![0.0; n * 20],
            res4: vec![0.0; n * 15],
            vars,
            evaluations: 0,
            grid,
        })
    }

    fn nvars(&self) -> usize {
        self.vars.len() * 15
    }

    fn scatter(&mut self, x: &[f64]) {
        let vars = &self.vars;
        let alpha = &mut self.alpha;
        for (q, &p) in vars.iter().enumerate() {
            alpha[p * 15..(p + 1) * 15].copy_from_slice(&x[q * 15..(q + 1) * 15]);
        }
    }

    /// `Ψ(p) = (Ψ₀ + b)(p) + (dα)(p)`.
    fn psi_at(grid: &Grid, psib: &[f64], alpha: &[f64], kernel: &mut PointD, p: usize, idx: &[usize; DIM], out: &mut [f64]) {
        kernel.d_at_index(grid, alpha, p, idx, out);
        for (o, b) in out.iter_mut().zip(&psib[p * 20..(p + 1) * 20]) {
            *o += b;
        }
    }

    /// Objective at the current α; fills `res4`.
    fn value(&mut self) -> Result<Value, FieldError> {
        self.evaluations += 1;
        let grid = &*self.grid;
        let n = grid.npoints();
        let (psib, alpha, needed) = (&self.psib, &self.alpha, &self.needed);
        // P(Ψ), the volume and min(−λ), block by block
        let blocks: Vec<Result<(f64, f64), FieldError>> = self
            .work3
            .par_chunks_mut(20 * BLOCK)
            .enumerate()
            .map(|(b, chunk)| {
                let mut kernel = PointD::new(grid, 2);
                let mut psi = [0.0; 20];
                let mut vol = 0.0;
                let mut min_nl = f64::INFINITY;
                let mut idx = grid.index(b * BLOCK);
                for (q, out) in chunk.chunks_mut(20).enumerate() {
                    let p = b * BLOCK + q;
                    if q > 0 {
                        grid.advance(&mut idx);
                    }
                    if !needed[grid.cell(p)] {
                        out.fill(0.0);
                        continue;
                    }
                    Self::psi_at(grid, psib, alpha, &mut kernel, p, &idx, &mut psi);
                    let s = PointStructure::new(&psi)
                        .map_err(|lambda| FieldError::NotStable { point: p, coords: grid.coords(p), lambda })?;
                    s.p_form(&psi, out);
                    vol += grid.weight(p) * s.vol_density();
                    min_nl = min_nl.min(-s.lambda);
                }
                Ok((vol, min_nl))
            })
            .collect();
        let mut volume = 0.0;
        let mut min_neg_lambda = f64::INFINITY;
        for r in blocks {
            let (v, m) = r?;
            volume += v;
            min_neg_lambda = min_neg_lambda.min(m);
        }
        // masked residual dP
        let work3 = &self.work3;
        let sums: Vec<f64> = self
            .res4
            .par_chunks_mut(15 * BLOCK)
            .enumerate()
            .map(|(b, chunk)| {
                let mut kernel = PointD::new(grid, 3);
                let mut sum = 0.0;
                let mut idx = grid.index(b * BLOCK);
                for (q, out) in chunk.chunks_mut(15).enumerate() {
                    let p = b * BLOCK + q;
                    if q > 0 {
                        grid.advance(&mut idx);
                    }
                    if grid.is_active(p) {
                        kernel.d_at_index(grid, work3, p, &idx, out);
                        sum += out.iter().map(|x| x * x).sum::<f64>();
                    } else {
                        out.fill(0.0);
                    }
                }
                sum
            })
            .collect();
        debug_assert_eq!(sums.len(), n.div_ceil(BLOCK));
        let f = 0.5 * grid.cell_volume() * sums.iter().sum::<f64>();
        Ok(Value { f, volume, min_neg_lambda })
    }

    /// Gradient at the α of the last [`value`] call, at the points `at`
    /// (15 entries each).
    fn gradient(&mut self, at: &[usize]) -> Vec<f64> {
        let grid = &*self.grid;
        let (psib, alpha, res4, needed) = (&self.psib, &self.alpha, &self.res4, &self.needed);
        // u = Jᵀ dᵀ (w r)
        self.work3.par_chunks_mut(20 * BLOCK).enumerate().for_each(|(b, chunk)| {
            let mut kd = PointD::new(grid, 2);
            let mut kt = PointD::new(grid, 3);
            let mut t = [0.0; 20];
            let mut psi = [0.0; 20];
            let mut idx = grid.index(b * BLOCK);
            for (q, out) in chunk.chunks_mut(20).enumerate() {
                let p = b * BLOCK + q;
                if q > 0 {
                    grid.advance(&mut idx);
                }
                // dᵀ of the masked residual vanishes away from active cells
                if !needed[grid.cell(p)] {
                    out.fill(0.0);
                    continue;
                }
                kt.d_transpose_at_index(grid, res4, p, &idx, &mut t);
                if t.iter().all(|&x| x == 0.0) {
                    out.fill(0.0);
                    continue;
                }
                Self::psi_at(grid, psib, alpha, &mut kd, p, &idx, &mut psi);
                let s = PointStructure::new(&psi).expect("stability was checked by the preceding evaluation");
                s.j_transpose(&t, out);
            }
        });
        let scale = grid.cell_volume();
        let work3 = &self.work3;
        let mut g = vec![0.0; at.len() * 15];
        g.par_chunks_mut(15 * BLOCK).enumerate().for_each(|(b, chunk)| {
            let mut kernel = PointD::new(grid, 2);
            for (q, out) in chunk.chunks_mut(15).enumerate() {
                kernel.d_transpose_at(grid, work3, at[b * BLOCK + q], out);
                for x in out.iter_mut() {
                    *x *= scale;
                }
            }
        });
        g
    }

    fn periods(&self, supports: &[(Cycle, CycleSupport)]) -> Vec<f64> {
        let grid = &*self.grid;
        let mut kernel = PointD::new(grid, 2);
        let mut psi = [0.0; 20];
        supports
            .iter()
            .map(|(_, s)| {
                s.integrate(|p| {
                    Self::psi_at(grid, &self.psib, &self.alpha, &mut kernel, p, &grid.index(p), &mut psi);
                    psi[s.component]
                })
            })
            .collect()
    }
}

/// `f(α)` and its gradient with respect to every entry of α (frozen
/// entries included), for α given on the whole grid.
pub fn objective_and_gradient(problem: &SolveProblem, alpha: &FormField<f64>) -> Result<(f64, FormField<f64>), SolveError> {
    let grid = problem.base.grid();
    if alpha.grade() != 2 || !alpha.grid().same_as(grid) {
        return Err(SolveError::InvalidProblem("α must be a 2-form on the problem grid".into()));
    }
    let all: Vec<usize> = (0..grid.npoints()).collect();
    let mut ev = Evaluator::new(problem, Vec::new())?;
    ev.alpha.copy_from_slice(alpha.data());
    let v = ev.value()?;
    let g = ev.gradient(&all);
    Ok((v.f, FormField::from_data(grid, 2, g)))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let parts: Vec<f64> =
        a.par_chunks(15 * BLOCK).zip(b.par_chunks(15 * BLOCK)).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum()).collect();
    parts.iter().sum()
}

fn quantize_value(v: f64, scale: Option<f64>) -> f64 {
    match scale {
        Some(s) => (v * s).round() / s,
        None => v,
    }
}

/// L-BFGS two-loop recursion: `−H g`.
fn lbfgs_direction(
    g: &[f64],
    pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    precond: Option<&FourierPreconditioner>,
) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        q.par_iter_mut().zip(y.par_iter()).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some(m) = precond {
        q = m.apply(&q);
    } else if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.par_iter_mut().for_each(|x| *x *= gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.par_iter_mut().zip(s.par_iter()).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.par_iter_mut().for_each(|x| *x = -*x);
    q
}

/// Runs L-BFGS from α = 0.
pub fn solve(problem: &SolveProblem) -> Result<SolveReport, SolveError> {
    let opts = &problem.options;
    let grid = problem.base.grid().clone();
    let mut ev = Evaluator::new(problem, problem.variable_points())?;
    let qscale = opts.quantize_bits.map(|b| 2f64.powi(b));
    let supports: Vec<(Cycle, CycleSupport)> = standard_cycles(&grid)
        .into_iter()
        .map(|c| cycle_support(&grid, &c).map(|s| (c, s)))
        .collect::<Result<_, _>>()?;

    let precond = if opts.precondition && grid.kind() == GridKind::Torus && ev.vars.len() == grid.npoints() {
        let n = grid.npoints() as f64;
        let mean: Vec<f64> = (0..20).map(|c| ev.psib.iter().skip(c).step_by(20).sum::<f64>() / n).collect();
        FourierPreconditioner::new(&grid, &mean, grid.cell_volume())
    } else {
        None
    };
    let nv = ev.nvars();
    let mut x = vec![0.0; nv];
    let v0 = ev.value()?;
    let mut g = ev.gradient(&ev.vars.clone());
    let periods0 = ev.periods(&supports);
    let mut cur = v0;
    let mut residual_history = vec![(2.0 * v0.f).sqrt()];
    let mut volume_history = vec![v0.volume];
    let mut max_period_drift = 0.0f64;
    let mut min_ratio = 1.0f64;
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut stalled_steps = 0;
    let mut iterations = 0;
    let target = opts.rtol * residual_history[0];

    let termination = loop {
        let r = *residual_history.last().expect("nonempty");
        if r <= target {
            break Termination::Converged;
        }
        if iterations >= opts.max_iterations {
            break Termination::IterationCap;
        }
        let mut dir = lbfgs_direction(&g, &pairs, precond.as_ref());
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            pairs.clear();
            dir = g.iter().map(|x| -x).collect();
            slope = dot(&g, &dir);
        }
        let mut t = if pairs.is_empty() && precond.is_none() { cur.f / dot(&g, &g) } else { 1.0 };
        let mut accepted = None;
        let mut only_stability_failures = true;
        let mut last_bad = (0.0, None);
        for _ in 0..opts.max_backtracks {
            let trial: Vec<f64> = x.par_iter().zip(dir.par_iter()).map(|(a, d)| quantize_value(a + t * d, qscale)).collect();
            if trial == x {
                only_stability_failures = false;
                break;
            }
            ev.scatter(&trial);
            match ev.value() {
                Ok(v) if v.min_neg_lambda >= opts.stability_floor * v0.min_neg_lambda => {
                    if v.f <= cur.f + opts.armijo * t * slope {
                        accepted = Some((trial, v));
                        break;
                    }
                    only_stability_failures = false;
                }
                Ok(v) => last_bad = (v.min_neg_lambda / v0.min_neg_lambda, None),
                Err(FieldError::NotStable { point, .. }) => last_bad = (0.0, Some(point)),
                Err(e) => return Err(e.into()),
            }
            t *= opts.backtrack;
        }
        let Some((x_new, v)) = accepted else {
            ev.scatter(&x);
            if only_stability_failures {
                return Err(SolveError::StabilityBreakdown { iteration: iterations, step: t, ratio: last_bad.0, point: last_bad.1 });
            }
            break Termination::LineSearchExhausted;
        };
        let g_new = ev.gradient(&ev.vars.clone());
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        x = x_new;
        g = g_new;
        cur = v;
        iterations += 1;
        min_ratio = min_ratio.min(v.min_neg_lambda / v0.min_neg_lambda);
        for (a, b) in ev.periods(&supports).iter().zip(&periods0) {
            max_period_drift = max_period_drift.max((a - b).abs());
        }
        let r_new = (2.0 * v.f).sqrt();
        stalled_steps = if r_new >= r { stalled_steps + 1 } else { 0 };
        residual_history.push(r_new);
        volume_history.push(v.volume);
        if stalled_steps >= opts.stall_limit {
            return Err(SolveError::Stalled { iteration: iterations, steps: stalled_steps, residual: r_new });
        }
    };

    ev.scatter(&x);
    let periods = ev.periods(&supports).into_iter().zip(&supports).map(|(value, (c, _))| PeriodRecord { cycle: c.clone(), value }).collect();
    let evaluations = ev.evaluations;
    let Evaluator { psib, alpha, work3, res4, .. } = ev;
    drop((work3, res4));
    let final_alpha = FormField::from_data(&grid, 2, alpha);
    let mut final_psi = d_field(&final_alpha)?;
    final_psi.data_mut().par_iter_mut().zip(psib.par_iter()).for_each(|(a, b)| *a += b);
    Ok(SolveReport {
        residual_history,
        volume_history,
        final_psi,
        final_alpha,
        periods,
        max_period_drift,
        converged: termination == Termination::Converged,
        termination,
        iterations,
        evaluations,
        min_stability_ratio: min_ratio,
    })
}

/// A smooth exact perturbation `b = dμ` with `‖b‖ = relative · ‖Ψ₀‖` (norms
/// over active points). μ is a random low-mode trigonometric 2-form on the
/// lattice `2^-bits`; with `support_radius` it is multiplied by the bump
/// `(1 − |x|²/R²)³` so that `b` vanishes near the boundary of the ball.
pub fn exact_perturbation(
    base: &FormField<f64>,
    relative: f64,
    seed: u64,
    support_radius: Option<f64>,
    bits: i32,
) -> Result<(FormField<f64>, FormField<f64>), FieldError> {
    let grid = base.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let active_axes = grid.dims().map(|n| n > 1);
    let t = TrigForm::random(&mut rng, 2, 1, 1.0, &active_axes);
    let bump = |x: &[f64; DIM]| match support_radius {
        None => 1.0,
        Some(r) => {
            let q = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / (r * r);
            if q < 1.0 {
                (1.0 - q).powi(3)
            } else {
                0.0
            }
        }
    };
    let mu0 = FormField::from_fn(grid, 2, |x| {
        let w = bump(x);
        t.eval(x).coeffs().iter().map(|c| c * w).collect()
    });
    let active = |p: usize| grid.is_active(p);
    let b0 = d_field(&mu0)?.norm_where(active);
    let target = relative * base.norm_where(active);
    let mut mu = if b0 > 0.0 { mu0.scale(target / b0) } else { mu0 };
    quantize(&mut mu, bits);
    let b = d_field(&mu)?;
    debug_assert_eq!(b.ncomp(), n_components(3));
    Ok((mu, b))
}
