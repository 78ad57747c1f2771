//! Table-driven f64 kernels for the pointwise Hitchin maps, used inside
//! grid loops where building a full [`StableAnalysis`](crate::hitchin::StableAnalysis)
//! per point would dominate the cost.

use num_complex::Complex64;
use once_cell::sync::Lazy;

use crate::exterior::{basis_mask, mask_indices, n_components, wedge_sign, KVector, DIM};

/// `K[ij] += coef · Ψ_a Ψ_b` with `ij = 6i + j`.
struct KTerm {
    ij: usize,
    a: usize,
    b: usize,
    coef: f64,
}

static K_TABLE: Lazy<Vec<KTerm>> = Lazy::new(|| {
    let mut out = Vec::new();
    let n3 = n_components(3);
    for j in 0..DIM {
        for a in 0..n3 {
            let ma = basis_mask(3, a);
            if ma & (1 << j) == 0 {
                continue;
            }
            // ι_{e_j} e^A = (−1)^{position of j in A} e^{A∖j}
            let pos = (ma & ((1 << j) - 1)).count_ones();
            let s_int = if pos % 2 == 0 { 1 } else { -1 };
            let rest = ma & !(1 << j);
            for b in 0..n3 {
                let mb = basis_mask(3, b);
                if mb & rest != 0 {
                    continue;
                }
                let five = rest | mb;
                let i = (0..DIM).find(|&i| five & (1 << i) == 0).expect("5-form misses one index");
                let s_i = if i % 2 == 0 { 1 } else { -1 };
                out.push(KTerm { ij: i * DIM + j, a, b, coef: (s_int * s_i * wedge_sign(rest, mb)) as f64 });
            }
        }
    }
    assert!(out.iter().all(|t| t.ij < DIM * DIM && t.a < n3 && t.b < n3));
    out
});

/// `out[row] += sign · I[rc] · v[col]` for the derivation on grade-k
/// coefficients, `rc = 6r + c`.
#[derive(Clone, Copy)]
struct DTerm {
    row: usize,
    col: usize,
    rc: usize,
    sign: f64,
}

static D_TABLES: Lazy<Vec<Vec<DTerm>>> = Lazy::new(|| {
    (0..=DIM)
        .map(|k| {
            let n = n_components(k);
            let mut out = Vec::new();
            for col in 0..n {
                let idx = mask_indices(basis_mask(k, col));
                for p in 0..k {
                    for j in 0..DIM {
                        let mut replaced = idx.clone();
                        replaced[p] = j;
                        let mut image = KVector::<f64>::zero(k);
                        image.add_term(&replaced, 1.0);
                        for (row, v) in image.coeffs().iter().enumerate() {
                            if *v != 0.0 {
                                out.push(DTerm { row, col, rc: idx[p] * DIM + j, sign: *v });
                            }
                        }
                    }
                }
            }
            assert!(out.iter().all(|t| t.row < n && t.col < n && t.rc < DIM * DIM));
            out
        })
        .collect()
});

pub type Mat = [[f64; DIM]; DIM];

/// Densitised endomorphism `K` of a 3-form (top form `e^{123456}`).
pub fn k_matrix(psi: &[f64]) -> Mat {
    let psi: &[f64; 20] = psi[..20].try_into().expect("3-form coefficients");
    let mut k = [0.0; DIM * DIM];
    for t in K_TABLE.iter() {
        // SAFETY: every index was checked against these lengths when the table was built.
        unsafe {
            *k.get_unchecked_mut(t.ij) += t.coef * psi.get_unchecked(t.a) * psi.get_unchecked(t.b);
        }
    }
    let mut out = [[0.0; DIM]; DIM];
    for (i, row) in out.iter_mut().enumerate() {
        row.copy_from_slice(&k[i * DIM..(i + 1) * DIM]);
    }
    out
}

/// Dense row-major matrix of the derivation induced by the covector map
/// `e^r ↦ Σ_c m[r][c] e^c` on grade-k coefficients.
pub fn derivation_dense(m: &Mat, k: usize) -> Vec<f64> {
    let n = n_components(k);
    let mut out = vec![0.0; n * n];
    for t in &D_TABLES[k] {
        out[t.row * n + t.col] += t.sign * m[t.rc / DIM][t.rc % DIM];
    }
    out
}

/// `D v` (or `Dᵀ v`) on 3-forms straight from the table.
fn apply_derivation3(flat: &[f64; DIM * DIM], v: &[f64; 20], out: &mut [f64; 20], transpose: bool) {
    *out = [0.0; 20];
    let table = &D_TABLES[3];
    // SAFETY: row, col < 20 and rc < 36 were checked when the table was built.
    unsafe {
        if transpose {
            for t in table {
                *out.get_unchecked_mut(t.col) += t.sign * flat.get_unchecked(t.rc) * v.get_unchecked(t.row);
            }
        } else {
            for t in table {
                *out.get_unchecked_mut(t.row) += t.sign * flat.get_unchecked(t.rc) * v.get_unchecked(t.col);
            }
        }
    }
}

/// Pointwise data of a stable 3-form needed by the field operators.
#[derive(Clone, Debug)]
pub struct PointStructure {
    pub lambda: f64,
    pub i: Mat,
    flat: [f64; DIM * DIM],
}

impl PointStructure {
    /// `Err(λ)` unless the form is stable of complex type, with the same
    /// threshold as [`analyze`](crate::hitchin::analyze).
    pub fn new(psi: &[f64]) -> Result<Self, f64> {
        let k = k_matrix(psi);
        let mut tr = 0.0;
        for a in 0..DIM {
            for b in 0..DIM {
                tr += k[a][b] * k[b][a];
            }
        }
        let lambda = tr / 6.0;
        let n2: f64 = psi.iter().map(|x| x * x).sum();
        if !(lambda < -1e-12 * n2 * n2) || !lambda.is_finite() {
            return Err(lambda);
        }
        let s = (-lambda).sqrt();
        let i = k.map(|row| row.map(|x| x / s));
        let mut flat = [0.0; DIM * DIM];
        for (r, row) in i.iter().enumerate() {
            flat[r * DIM..(r + 1) * DIM].copy_from_slice(row);
        }
        Ok(PointStructure { lambda, i, flat })
    }

    pub fn vol_density(&self) -> f64 {
        (-self.lambda).sqrt()
    }

    /// `P(Ψ) = −DΨ/3`.
    pub fn p_form(&self, psi: &[f64], out: &mut [f64]) {
        let mut d = [0.0; 20];
        apply_derivation3(&self.flat, psi[..20].try_into().expect("3-form"), &mut d, false);
        for (o, x) in out[..20].iter_mut().zip(d) {
            *o = x * (-1.0 / 3.0);
        }
    }

    fn j_impl(&self, rho: &[f64], out: &mut [f64], transpose: bool) {
        let mut d1 = [0.0; 20];
        let mut d2 = [0.0; 20];
        let mut d3 = [0.0; 20];
        apply_derivation3(&self.flat, rho[..20].try_into().expect("3-form"), &mut d1, transpose);
        apply_derivation3(&self.flat, &d1, &mut d2, transpose);
        apply_derivation3(&self.flat, &d2, &mut d3, transpose);
        for r in 0..20 {
            out[r] = -(13.0 * d1[r] + d3[r]) / 12.0;
        }
    }

    /// `J ρ = −(13Dρ + D³ρ)/12`.
    pub fn j_apply(&self, rho: &[f64], out: &mut [f64]) {
        self.j_impl(rho, out, false);
    }

    /// `Jᵀ v` for the coefficient inner product.
    pub fn j_transpose(&self, v: &[f64], out: &mut [f64]) {
        self.j_impl(v, out, true);
    }

    /// Derivation on grade-k coefficients, dense row-major.
    pub fn derivation(&self, k: usize) -> Vec<f64> {
        derivation_dense(&self.i, k)
    }
}

/// Type `(p, k−p)` component of a complex k-form, as a polynomial in the
/// derivation `d` (eigenvalue `i(2p − k)` on that type).
pub fn type_component(d: &[f64], a: &[Complex64], k: usize, p: usize) -> Vec<Complex64> {
    let n = n_components(k);
    let ev = |q: usize| Complex64::new(0.0, (2 * q) as f64 - k as f64);
    let mut out = a.to_vec();
    let mut next = vec![Complex64::new(0.0, 0.0); n];
    for q in 0..=k {
        if q == p {
            continue;
        }
        let w = Complex64::new(1.0, 0.0) / (ev(p) - ev(q));
        for r in 0..n {
            let dr: Complex64 = (0..n).map(|c| out[c] * d[r * n + c]).sum();
            next[r] = (dr - out[r] * ev(q)) * w;
        }
        std::mem::swap(&mut out, &mut next);
    }
    out
}
