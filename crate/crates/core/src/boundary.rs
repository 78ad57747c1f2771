//! SU(2) structure induced by a stable 3-form on a real hypersurface: contact
//! form, Reeb field, the triple (ω, α, β) on the contact distribution, the
//! Levi coefficient and the self-dual / anti-self-dual split.

use nalgebra::{Matrix5, SVector};
use num_rational::BigRational;
use serde::Serialize;
use thiserror::Error;

use crate::exterior::{
    poly_d, restrict_poly, sphere_tangent_frame, ExteriorError, KVector, Mat6, PolyForm, SpherePoint, DIM,
};
use crate::hitchin::StableAnalysis;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundaryError {
    #[error("degenerate contact data: {0}")]
    DegenerateContact(String),
    #[error("frame is not pseudoconvex (levi lambda = {0})")]
    NotPseudoconvexFrame(f64),
    #[error("2-form is not anti-self-dual (relative self-dual part {0:e})")]
    NotAntiSelfDual(f64),
    #[error(transparent)]
    Exterior(#[from] ExteriorError),
}

fn covector_dot(a: &[f64; DIM], b: &[f64; DIM]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormal basis of the Euclidean orthogonal complement of `span(vs)`.
fn complement(vs: &[[f64; DIM]]) -> Vec<[f64; DIM]> {
    let mut basis: Vec<[f64; DIM]> = Vec::new();
    let push = |v: [f64; DIM], basis: &mut Vec<[f64; DIM]>| -> bool {
        let mut w = v;
        for _ in 0..2 {
            for b in basis.iter() {
                let c = covector_dot(&w, b);
                for i in 0..DIM {
                    w[i] -= c * b[i];
                }
            }
        }
        let n = covector_dot(&w, &w).sqrt();
        if n > 1e-8 {
            basis.push(w.map(|x| x / n));
            true
        } else {
            false
        }
    };
    for v in vs {
        push(*v, &mut basis);
    }
    let fixed = basis.len();
    // remaining standard vectors, largest residual first for conditioning
    let mut remaining: Vec<usize> = (0..DIM).collect();
    while basis.len() < DIM && !remaining.is_empty() {
        let (pos, _) = remaining
            .iter()
            .enumerate()
            .map(|(p, &i)| {
                let res: f64 = 1.0 - basis.iter().map(|b| b[i] * b[i]).sum::<f64>();
                (p, res)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        let i = remaining.remove(pos);
        let mut e = [0.0; DIM];
        e[i] = 1.0;
        push(e, &mut basis);
    }
    basis.split_off(fixed)
}

fn frame_matrix(frame: &[[f64; DIM]]) -> Mat6<f64> {
    std::array::from_fn(|a| std::array::from_fn(|i| if a < frame.len() { frame[a][i] } else { 0.0 }))
}

/// Pullback of `a` to the span of `frame`, in the dual basis of the frame.
pub fn restrict_to(a: &KVector<f64>, frame: &[[f64; DIM]]) -> KVector<f64> {
    a.transform(&frame_matrix(frame))
}

fn shift_indices(a: &KVector<f64>, by: usize) -> KVector<f64> {
    let m: Mat6<f64> = std::array::from_fn(|r| std::array::from_fn(|c| if r == c + by { 1.0 } else { 0.0 }));
    a.transform(&m)
}

/// Contact and SU(2) data at one boundary point. Forms on `H` are expressed
/// in the dual basis of `h`.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryFrame {
    pub dr_dir: [f64; DIM],
    pub theta: [f64; DIM],
    pub reeb: [f64; DIM],
    pub h: [[f64; DIM]; 4],
    pub omega: KVector<f64>,
    pub alpha: KVector<f64>,
    pub beta: KVector<f64>,
    pub levi_lambda: f64,
    pub omega_tilde: Option<KVector<f64>>,
    pub vol_h: f64,
    pub residuals: FrameResiduals,
}

/// Reconstruction residuals of the triple relations, relative to `vol_h`
/// (or to `‖Ψ‖` for the decomposition of the 3-forms).
#[derive(Clone, Debug, Default, Serialize)]
pub struct FrameResiduals {
    pub psi_decomposition: f64,
    pub dual_decomposition: f64,
    pub squares_alpha_beta: f64,
    pub squares_omega_alpha: f64,
    pub omega_alpha: f64,
    pub alpha_beta: f64,
    pub omega_beta_levi: f64,
}

impl FrameResiduals {
    /// Largest residual among the ones that hold for every closed structure.
    pub fn structural_max(&self) -> f64 {
        [self.psi_decomposition, self.dual_decomposition, self.squares_alpha_beta, self.omega_alpha, self.alpha_beta, self.omega_beta_levi]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

fn top4(a: &KVector<f64>) -> f64 {
    *a.get(&[0, 1, 2, 3])
}

/// Builds the boundary frame from the analysis at the point, the conormal
/// `dr` and the 2-form `ω = dθ` (supplied by the caller).
pub fn boundary_frame(
    an: &StableAnalysis,
    dr: &KVector<f64>,
    omega: &KVector<f64>,
) -> Result<BoundaryFrame, BoundaryError> {
    assert_eq!(dr.grade(), 1);
    assert_eq!(omega.grade(), 2);
    let drv: [f64; DIM] = std::array::from_fn(|i| dr.coeffs()[i]);
    let drn = covector_dot(&drv, &drv).sqrt();
    if drn == 0.0 {
        return Err(BoundaryError::DegenerateContact("dr vanishes".into()));
    }
    // θ = −dr ∘ I
    let theta: [f64; DIM] = std::array::from_fn(|c| -(0..DIM).map(|r| drv[r] * an.i[r][c]).sum::<f64>());
    let tm = complement(&[drv]);
    let mut h_vec = complement(&[drv, theta]);
    if h_vec.len() != 4 || tm.len() != 5 {
        return Err(BoundaryError::DegenerateContact("θ is parallel to dr".into()));
    }
    // Reeb: kernel of ω restricted to TM, normalised by θ(v) = 1
    let om_tm = restrict_to(omega, &tm);
    let a = Matrix5::from_fn(|r, c| if r == c { 0.0 } else {
        let (lo, hi) = (r.min(c), r.max(c));
        let v = *om_tm.get(&[lo, hi]);
        if r < c { v } else { -v }
    });
    let eig = (a.transpose() * a).symmetric_eigen();
    let (kmin, _) = eig.eigenvalues.iter().enumerate().min_by(|x, y| x.1.total_cmp(y.1)).expect("5 eigenvalues");
    let kv: SVector<f64, 5> = eig.eigenvectors.column(kmin).into();
    let mut reeb = [0.0; DIM];
    for (t, c) in tm.iter().zip(kv.iter()) {
        for i in 0..DIM {
            reeb[i] += c * t[i];
        }
    }
    let th_v = covector_dot(&theta, &reeb);
    if th_v.abs() < 1e-10 {
        return Err(BoundaryError::DegenerateContact("θ vanishes on the kernel of ω".into()));
    }
    reeb = reeb.map(|x| x / th_v);

    let psi = an.psi();
    let pf = an.p_form();
    let mut alpha = restrict_to(&psi.interior(&reeb), &h_vec);
    if top4(&alpha.wedge(&alpha)) < 0.0 {
        h_vec[3] = h_vec[3].map(|x| -x);
        alpha = restrict_to(&psi.interior(&reeb), &h_vec);
    }
    let h: [[f64; DIM]; 4] = [h_vec[0], h_vec[1], h_vec[2], h_vec[3]];
    let beta = restrict_to(&pf.interior(&reeb), &h);
    let om_h = restrict_to(omega, &h);

    let a2 = top4(&alpha.wedge(&alpha));
    let b2 = top4(&beta.wedge(&beta));
    if a2.abs() < 1e-14 {
        return Err(BoundaryError::DegenerateContact("α² vanishes".into()));
    }
    let levi = top4(&om_h.wedge(&beta)) / b2;
    let omega_tilde = if levi.abs() < 1.0 {
        Some((om_h.clone() - beta.scale(&levi)).scale(&(1.0 / (1.0 - levi * levi).sqrt())))
    } else {
        None
    };

    // ψ|_M − θ∧α in the frame (v, h1..h4)
    let five = [reeb, h[0], h[1], h[2], h[3]];
    let e0 = KVector::<f64>::basis(&[0]);
    let psi_res = (restrict_to(&psi, &five) - e0.wedge(&shift_indices(&alpha, 1))).norm() / psi.norm();
    let p_res = (restrict_to(&pf, &five) - e0.wedge(&shift_indices(&beta, 1))).norm() / pf.norm();
    let o2 = top4(&om_h.wedge(&om_h));
    let residuals = FrameResiduals {
        psi_decomposition: psi_res,
        dual_decomposition: p_res,
        squares_alpha_beta: (a2 - b2).abs() / a2.abs(),
        squares_omega_alpha: (o2 - a2).abs() / a2.abs(),
        omega_alpha: top4(&om_h.wedge(&alpha)).abs() / a2.abs(),
        alpha_beta: top4(&alpha.wedge(&beta)).abs() / a2.abs(),
        omega_beta_levi: (top4(&om_h.wedge(&beta)) - levi * b2).abs() / a2.abs(),
    };
    Ok(BoundaryFrame {
        dr_dir: drv.map(|x| x / drn),
        theta,
        reeb,
        h,
        omega: om_h,
        alpha,
        beta,
        levi_lambda: levi,
        omega_tilde,
        vol_h: a2,
        residuals,
    })
}

/// Self-dual and anti-self-dual parts of a 2-form on `H`.
#[derive(Clone, Debug)]
pub struct SelfDualSplit {
    pub plus: KVector<f64>,
    pub minus: KVector<f64>,
}

impl BoundaryFrame {
    /// Pullback of an ambient form to `H`.
    pub fn restrict_to_h(&self, a: &KVector<f64>) -> KVector<f64> {
        restrict_to(a, &self.h)
    }

    fn self_dual_basis(&self) -> Result<[&KVector<f64>; 3], BoundaryError> {
        match &self.omega_tilde {
            Some(w) => Ok([w, &self.alpha, &self.beta]),
            None => Err(BoundaryError::NotPseudoconvexFrame(self.levi_lambda)),
        }
    }

    /// Wedge pairing `σ ∧ τ / vol_H`.
    pub fn pairing(&self, s: &KVector<f64>, t: &KVector<f64>) -> f64 {
        top4(&s.wedge(t)) / self.vol_h
    }
}

/// Projection onto `span{ω̃, α, β}` along `Λ⁻_H`, using that the triple is
/// orthonormal for the wedge pairing.
pub fn sd_asd_split(frame: &BoundaryFrame, sigma: &KVector<f64>) -> Result<SelfDualSplit, BoundaryError> {
    assert_eq!(sigma.grade(), 2);
    let basis = frame.self_dual_basis()?;
    let mut plus = KVector::zero(2);
    for t in basis {
        let c = frame.pairing(sigma, t) / frame.pairing(t, t);
        plus = plus + t.scale(&c);
    }
    let minus = sigma.clone() - plus.clone();
    Ok(SelfDualSplit { plus, minus })
}

/// Component of `σ|_H` in `ℝω̃ ⊕ Λ⁻_H` for an ambient 2-form σ at the point.
pub fn project_partial4(frame: &BoundaryFrame, sigma: &KVector<f64>) -> Result<KVector<f64>, BoundaryError> {
    let s_h = frame.restrict_to_h(sigma);
    let split = sd_asd_split(frame, &s_h)?;
    let wt = frame.omega_tilde.as_ref().expect("checked by sd_asd_split");
    let c = frame.pairing(&s_h, wt) / frame.pairing(wt, wt);
    Ok(wt.scale(&c) + split.minus)
}

/// A boundary sample: an exact point of `S² × T³` and its frame.
#[derive(Clone, Debug)]
pub struct BoundarySample {
    pub point: SpherePoint<BigRational>,
    pub frame: BoundaryFrame,
}

/// Residual of the closedness of `γ ∧ θ` on `M`, the defining condition of
/// `ℋ_M` in the form `d(γ∧θ) = 0`. Evaluated exactly at each sample point;
/// returns the largest absolute coefficient of the restriction.
///
/// Each sample first checks that `γ|_H` is anti-self-dual.
pub fn hm_membership_residual(
    samples: &[BoundarySample],
    gamma: &PolyForm,
    theta: &PolyForm,
) -> Result<f64, BoundaryError> {
    let closed = poly_d(&gamma.wedge(theta));
    let mut worst = 0.0f64;
    for s in samples {
        let x = s.point.coords().map(|c| num_traits::ToPrimitive::to_f64(&c).unwrap_or(f64::NAN));
        let g_h = s.frame.restrict_to_h(&gamma.eval_f64(&x));
        let split = sd_asd_split(&s.frame, &g_h)?;
        let rel = split.plus.norm() / g_h.norm().max(f64::MIN_POSITIVE);
        if rel > 1e-9 {
            return Err(BoundaryError::NotAntiSelfDual(rel));
        }
        let tf = sphere_tangent_frame(&s.point.x);
        let r = restrict_poly(&closed, &s.point, &tf)?.to_f64();
        worst = worst.max(r.max_abs());
    }
    Ok(worst)
}
