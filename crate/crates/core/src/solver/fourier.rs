//! Fourier-diagonal model of the objective Hessian on a periodic grid, used
//! as the initial inverse Hessian of L-BFGS.
//!
//! Around a constant structure the residual map is `α ↦ d J₀ dα`. Under the
//! discrete Fourier transform each centered difference becomes
//! multiplication by `i σ_a(k) = i sin(2πk/n_a)/h_a`, so the Hessian splits
//! into 15×15 blocks `c AᵀA` with `A = −σ∧ J₀ σ∧`. The preconditioner inverts
//! these blocks. Their kernel holds the gauge directions, which the gradient
//! never touches, and modes the linear model cannot see (σ = 0 along an axis,
//! e.g. the checkerboard) but the nonlinear residual can; the kernel gets a
//! finite weight so those modes still move.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::exterior::{n_components, KVector, DIM};
use crate::fields::pointwise::PointStructure;
use crate::fields::Grid;

const NC: usize = 15;
/// Complex values gathered per FFT batch.
const LINE_BUFFER: usize = 1 << 20;

/// Curvature assigned to kernel modes, relative to the smallest positive
/// block eigenvalue. Tuned on periodic solves of 4⁶ to 8⁶ points.
const KERNEL_CURVATURE: f64 = 0.3;

pub(crate) struct FourierPreconditioner {
    dims: [usize; DIM],
    strides: [usize; DIM],
    npoints: usize,
    forward: Vec<Option<Arc<dyn Fft<f64>>>>,
    inverse: Vec<Option<Arc<dyn Fft<f64>>>>,
    /// Block index of every wave vector (point-major like the grid).
    block_of: Vec<u32>,
    blocks: Vec<[f64; NC * NC]>,
}

/// Matrix of `v ↦ σ ∧ v` from grade k to grade k + 1.
fn wedge_matrix(sigma: &[f64; DIM], k: usize) -> DMatrix<f64> {
    let s = KVector::from_coeffs(1, sigma.to_vec());
    let (nin, nout) = (n_components(k), n_components(k + 1));
    let mut m = DMatrix::zeros(nout, nin);
    for c in 0..nin {
        let mut e = vec![0.0; nin];
        e[c] = 1.0;
        let w = s.wedge(&KVector::from_coeffs(k, e));
        for (r, v) in w.coeffs().iter().enumerate() {
            m[(r, c)] = *v;
        }
    }
    m
}

impl FourierPreconditioner {
    /// `reference` is the constant 3-form whose `J` models the Hessian;
    /// `scale` is the objective's cell-volume factor.
    pub(crate) fn new(grid: &Grid, reference: &[f64], scale: f64) -> Option<Self> {
        let s = PointStructure::new(reference).ok()?;
        let mut j0 = DMatrix::zeros(20, 20);
        let mut col = [0.0; 20];
        for c in 0..20 {
            let mut e = [0.0; 20];
            e[c] = 1.0;
            s.j_apply(&e, &mut col);
            for r in 0..20 {
                j0[(r, c)] = col[r];
            }
        }
        let dims = grid.dims();
        let spacing = grid.spacing();
        let sigma_axis: Vec<Vec<f64>> = (0..DIM)
            .map(|a| {
                let n = dims[a];
                (0..n)
                    .map(|k| if n == 1 { 0.0 } else { (TAU * k as f64 / n as f64).sin() / spacing[a] })
                    .collect()
            })
            .collect();
        // canonical keys so that equal symbols share a block
        let key_of = |v: f64| (v * 1e9).round() as i64;
        let mut strides = [1usize; DIM];
        for a in (0..DIM - 1).rev() {
            strides[a] = strides[a + 1] * dims[a + 1];
        }
        let npoints = grid.npoints();
        let mut index: HashMap<[i64; DIM], u32> = HashMap::new();
        let mut blocks = Vec::new();
        let mut block_of = Vec::with_capacity(npoints);
        for p in 0..npoints {
            let mut sigma = [0.0; DIM];
            let mut key = [0i64; DIM];
            for a in 0..DIM {
                let k = (p / strides[a]) % dims[a];
                sigma[a] = sigma_axis[a][k];
                key[a] = key_of(sigma[a]);
            }
            let id = *index.entry(key).or_insert_with(|| {
                let w2 = wedge_matrix(&sigma, 2);
                let w3 = wedge_matrix(&sigma, 3);
                let a = -(&w3 * &j0 * &w2);
                blocks.push(a.transpose() * a * scale);
                (blocks.len() - 1) as u32
            });
            block_of.push(id);
        }
        let top = blocks.iter().map(|h| h.diagonal().max()).fold(0.0, f64::max);
        let cutoff = 1e-9 * top;
        let eigs: Vec<SymmetricEigen<f64, nalgebra::Dyn>> = blocks.into_iter().map(SymmetricEigen::new).collect();
        let smallest = eigs
            .iter()
            .flat_map(|e| e.eigenvalues.iter().copied())
            .filter(|&l| l > cutoff)
            .fold(f64::INFINITY, f64::min);
        let kernel_weight = if smallest.is_finite() { 1.0 / (KERNEL_CURVATURE * smallest) } else { 0.0 };
        let blocks: Vec<[f64; NC * NC]> = eigs
            .into_iter()
            .map(|eig| {
                let mut m = [0.0; NC * NC];
                for (i, &lam) in eig.eigenvalues.iter().enumerate() {
                    let w = if lam > cutoff { 1.0 / lam } else { kernel_weight };
                    let v = eig.eigenvectors.column(i);
                    for r in 0..NC {
                        for c in 0..NC {
                            m[r * NC + c] += v[r] * v[c] * w;
                        }
                    }
                }
                m
            })
            .collect();
        let mut planner = FftPlanner::new();
        let forward = dims.iter().map(|&n| (n > 1).then(|| planner.plan_fft_forward(n))).collect();
        let inverse = dims.iter().map(|&n| (n > 1).then(|| planner.plan_fft_inverse(n))).collect();
        Some(FourierPreconditioner { dims, strides, npoints, forward, inverse, block_of, blocks })
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Option<Arc<dyn Fft<f64>>>]) {
        for (a, plan) in plans.iter().enumerate() {
            let Some(plan) = plan else { continue };
            let n = self.dims[a];
            let stride = self.strides[a];
            // lines along axis a, all components, in batches of bounded size
            let starts: Vec<usize> = (0..self.npoints).filter(|p| (p / stride) % n == 0).collect();
            let per_batch = (LINE_BUFFER / (NC * n)).max(1);
            let mut line = Vec::with_capacity(per_batch.min(starts.len()) * NC * n);
            for batch in starts.chunks(per_batch) {
                line.clear();
                line.resize(batch.len() * NC * n, Complex64::new(0.0, 0.0));
                for (l, &p0) in batch.iter().enumerate() {
                    for c in 0..NC {
                        let dst = &mut line[(l * NC + c) * n..(l * NC + c + 1) * n];
                        for (i, d) in dst.iter_mut().enumerate() {
                            *d = data[(p0 + i * stride) * NC + c];
                        }
                    }
                }
                plan.process(&mut line);
                for (l, &p0) in batch.iter().enumerate() {
                    for c in 0..NC {
                        let src = &line[(l * NC + c) * n..(l * NC + c + 1) * n];
                        for (i, s) in src.iter().enumerate() {
                            data[(p0 + i * stride) * NC + c] = *s;
                        }
                    }
                }
            }
        }
    }

    /// `M g` for a full-grid 2-form coefficient vector.
    pub(crate) fn apply(&self, g: &[f64]) -> Vec<f64> {
        let mut data: Vec<Complex64> = g.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        let mut tmp = [Complex64::new(0.0, 0.0); NC];
        for (p, v) in data.chunks_mut(NC).enumerate() {
            let m = &self.blocks[self.block_of[p] as usize];
            for (r, t) in tmp.iter_mut().enumerate() {
                *t = (0..NC).map(|c| v[c] * m[r * NC + c]).sum();
            }
            v.copy_from_slice(&tmp);
        }
        self.transform(&mut data, &self.inverse);
        let norm = 1.0 / self.npoints as f64;
        data.iter().map(|z| z.re * norm).collect()
    }
}
