use serde_json::json;

use stableforms::spheremodes::{
    assemble_mode, kernel_dim, spectrum, GalerkinBasis, KernelPolicy, ModeReport, SpectrumError,
};

use crate::config::SpectrumArgs;
use crate::report::CommandOutput;
use crate::RunError;

fn spectrum_error(e: SpectrumError) -> RunError {
    match &e {
        SpectrumError::GapNotResolved { m, below_tolerance, at_largest_gap, eigenvalues } => RunError::numerical(
            "GapNotResolved",
            &e,
            json!({
                "m": m,
                "below_tolerance": below_tolerance,
                "at_largest_gap": at_largest_gap,
                "eigenvalues": eigenvalues,
            }),
        ),
        _ => RunError::numerical("Spectrum", &e, json!({})),
    }
}

fn csv(modes: &[ModeReport]) -> String {
    let mut s = String::from("m1,m2,m3,kernel_dim,relative_gap,diagonality_residual");
    for i in 0..10 {
        s.push_str(&format!(",lambda_{i}"));
    }
    s.push('\n');
    for r in modes {
        s.push_str(&format!(
            "{},{},{},{},{:e},{:e}",
            r.m[0], r.m[1], r.m[2], r.kernel_dim, r.relative_gap, r.diagonality_residual
        ));
        for i in 0..10 {
            match r.eigenvalues.get(i) {
                Some(v) => s.push_str(&format!(",{v:e}")),
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

pub fn run(args: &SpectrumArgs) -> Result<CommandOutput, RunError> {
    let basis = GalerkinBasis::new(args.degree, args.trial_offset).map_err(spectrum_error)?;
    let policy = KernelPolicy { absolute: args.kernel_tol, gap: args.gap };
    let modes = spectrum(&basis, args.mmax, &policy).map_err(spectrum_error)?;
    let zero = kernel_dim(&assemble_mode(&basis, [0, 0, 0]), &policy).map_err(spectrum_error)?;
    let overlap = zero.overlap(&basis.area_form_mode());
    let nonzero_max = modes.iter().filter(|r| r.m != [0, 0, 0]).map(|r| r.kernel_dim).max().unwrap_or(0);
    let result = json!({
        "target_dim": basis.target_dim(),
        "trial_dim": basis.trial_dim(),
        "quadrature_points": basis.quadrature.len(),
        "modes": modes,
        "summary": {
            "kernel_dim_zero_mode": zero.dim,
            "area_form_overlap": overlap,
            "max_kernel_dim_nonzero_modes": nonzero_max,
            "total_kernel_dim": modes.iter().map(|r| r.kernel_dim).sum::<usize>(),
            "min_relative_gap": modes.iter().map(|r| r.relative_gap).fold(f64::INFINITY, f64::min),
            "max_diagonality_residual": modes.iter().map(|r| r.diagonality_residual).fold(0.0, f64::max),
        },
    });
    let mut out = CommandOutput::new(result, true);
    out.csv = Some(csv(&modes));
    Ok(out)
}
