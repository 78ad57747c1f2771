//! Command-line arguments and their validation.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::RunError;

/// Experiments on stable 3-forms in six dimensions.
#[derive(Debug, Parser)]
#[command(name = "hitchin", version)]
pub struct Cli {
    /// Write the JSON report here (CSV sidecars go next to it) instead of
    /// printing it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

/// The resolved parameters of a run; embedded verbatim in its report.
#[derive(Clone, Debug, Serialize, Subcommand)]
#[serde(rename_all = "kebab-case", tag = "subcommand")]
pub enum Command {
    /// Invariant, complex structure and dual form of one 3-form.
    Analyze(AnalyzeArgs),
    /// Boundary checks of the flat structure on the ball times a 3-torus.
    #[command(name = "example-t3b3")]
    ExampleT3b3(ExampleArgs),
    /// Kernel dimensions of the per-mode boundary Laplacians on S² × T³.
    Spectrum(SpectrumArgs),
    /// Closed-case solve on the 6-torus from an exact perturbation.
    #[command(name = "torelli-t6")]
    TorelliT6(TorelliArgs),
    /// Boundary-case solve on the ball times a 3-torus.
    BoundarySolve(BoundaryArgs),
    /// Quick run of the invariant suites.
    Selftest(SelftestArgs),
}

#[derive(Clone, Debug, Serialize, Args)]
pub struct AnalyzeArgs {
    /// JSON form literal `{"grade": 3, "coeffs": {"1 2 3": 1, ...}}`.
    pub input: PathBuf,
    /// Reference volume form `eps · dx₁dx₂dx₃dy₁dy₂dy₃`.
    #[arg(long, default_value_t = 1.0)]
    pub eps: f64,
}

#[derive(Clone, Debug, Serialize, Args)]
pub struct ExampleArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Random boundary points for the floating-point restriction checks.
    #[arg(long, default_value_t = 100)]
    pub random_points: usize,
    /// Random boundary points for the Levi coefficient and the triple.
    #[arg(long, default_value_t = 500)]
    pub levi_points: usize,
    /// Ball resolution for the period over B³ × pt.
    #[arg(long, default_value_t = 32)]
    pub nx: usize,
    /// Torus resolution for the period over pt × T³.
    #[arg(long, default_value_t = 8)]
    pub nt: usize,
    /// Tolerance of the pointwise floating-point checks.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// Relative tolerance of the B³ period against 4π/3.
    #[arg(long, default_value_t = 0.02)]
    pub ball_rtol: f64,
    /// Absolute tolerance of the T³ period against 1.
    #[arg(long, default_value_t = 1e-10)]
    pub torus_tol: f64,
}

#[derive(Clone, Debug, Serialize, Args)]
pub struct SpectrumArgs {
    /// Harmonic level of the target spaces.
    #[arg(long, default_value_t = 6)]
    pub degree: usize,
    /// Sweep all modes with `|m|∞ ≤ mmax`.
    #[arg(long, default_value_t = 1)]
    pub mmax: i32,
    /// Extra levels in the trial spaces.
    #[arg(long, default_value_t = 1)]
    pub trial_offset: usize,
    /// Eigenvalues below this fraction of the largest count as kernel.
    #[arg(long, default_value_t = 1e-9)]
    pub kernel_tol: f64,
    /// Smallest relative gap accepted above the kernel.
    #[arg(long, default_value_t = 1e-3)]
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize, Args)]
pub struct TorelliArgs {
    /// Points per axis.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    /// Size of the exact perturbation relative to the flat form.
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    #[arg(long, default_value_t = 11)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub rtol: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iterations: usize,
    /// Relative tolerance of the final volume against the flat value.
    #[arg(long, default_value_t = 1e-6)]
    pub volume_rtol: f64,
    #[arg(long)]
    #[serde(skip)]
    pub dump: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Args)]
pub struct BoundaryArgs {
    /// Cells per ball axis.
    #[arg(long, default_value_t = 16)]
    pub nx: usize,
    /// Points per torus axis.
    #[arg(long, default_value_t = 8)]
    pub nt: usize,
    #[arg(long, default_value_t = 0.02)]
    pub eps: f64,
    #[arg(long, default_value_t = 12)]
    pub seed: u64,
    /// Radius of the bump confining the perturbation to the interior.
    #[arg(long, default_value_t = 0.6)]
    pub radius: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub rtol: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iterations: usize,
    #[arg(long)]
    #[serde(skip)]
    pub dump: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Args)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Random stable forms in the algebra suite.
    #[arg(long, default_value_t = 200)]
    pub forms: usize,
    /// Coarsest grid of the operator suite; refinement doubles it twice.
    #[arg(long, default_value_t = 16)]
    pub grid: usize,
}

fn invalid(msg: String) -> RunError {
    RunError::Invalid(msg)
}

fn check_range<T: PartialOrd + std::fmt::Display>(name: &str, v: T, lo: T, hi: T) -> Result<(), RunError> {
    if v < lo || v > hi {
        return Err(invalid(format!("--{name} must lie in [{lo}, {hi}], got {v}")));
    }
    Ok(())
}

fn check_grid(name: &str, n: usize) -> Result<(), RunError> {
    check_range(name, n, 4, 64)?;
    if n % 2 == 1 {
        return Err(invalid(format!("--{name} must be even, got {n}")));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<(), RunError> {
    if !(v.is_finite() && v > 0.0) {
        return Err(invalid(format!("--{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

fn check_fraction(name: &str, v: f64) -> Result<(), RunError> {
    if !(v.is_finite() && (0.0..1.0).contains(&v)) {
        return Err(invalid(format!("--{name} must lie in [0, 1), got {v}")));
    }
    Ok(())
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Analyze(_) => "analyze",
            Command::ExampleT3b3(_) => "example-t3b3",
            Command::Spectrum(_) => "spectrum",
            Command::TorelliT6(_) => "torelli-t6",
            Command::BoundarySolve(_) => "boundary-solve",
            Command::Selftest(_) => "selftest",
        }
    }

    /// Range checks beyond what the argument parser enforces.
    pub fn validate(&self) -> Result<(), RunError> {
        match self {
            Command::Analyze(a) => check_positive("eps", a.eps),
            Command::ExampleT3b3(a) => {
                check_grid("nx", a.nx)?;
                check_grid("nt", a.nt)?;
                check_range("random-points", a.random_points, 1, 100_000)?;
                check_range("levi-points", a.levi_points, 1, 100_000)?;
                check_positive("tol", a.tol)?;
                check_positive("ball-rtol", a.ball_rtol)?;
                check_positive("torus-tol", a.torus_tol)
            }
            Command::Spectrum(a) => {
                check_range("degree", a.degree, 2, 10)?;
                check_range("mmax", a.mmax, 0, 4)?;
                check_range("trial-offset", a.trial_offset, 0, 3)?;
                check_fraction("kernel-tol", a.kernel_tol)?;
                check_positive("kernel-tol", a.kernel_tol)?;
                check_positive("gap", a.gap)
            }
            Command::TorelliT6(a) => {
                check_grid("n", a.n)?;
                check_fraction("eps", a.eps)?;
                check_fraction("rtol", a.rtol)?;
                check_positive("volume-rtol", a.volume_rtol)?;
                check_range("max-iterations", a.max_iterations, 0, 1_000_000)
            }
            Command::BoundarySolve(a) => {
                check_grid("nx", a.nx)?;
                if a.nt != 1 {
                    check_grid("nt", a.nt)?;
                }
                check_fraction("eps", a.eps)?;
                check_fraction("rtol", a.rtol)?;
                if !(a.radius > 0.0 && a.radius <= 1.0) {
                    return Err(invalid(format!("--radius must lie in (0, 1], got {}", a.radius)));
                }
                check_range("max-iterations", a.max_iterations, 0, 1_000_000)
            }
            Command::Selftest(a) => {
                check_range("forms", a.forms, 1, 100_000)?;
                check_grid("grid", a.grid)?;
                check_range("grid", a.grid, 4, 16)
            }
        }
    }
}
