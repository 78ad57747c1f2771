use serde_json::{json, Value};

use stableforms::exterior::{form_from_literal, form_to_literal};
use stableforms::hitchin::{analyze, analyze_exact, hitchin_invariant, HitchinError};

use crate::config::AnalyzeArgs;
use crate::report::CommandOutput;
use crate::RunError;

fn exact_literal(a: &stableforms::exterior::KVector<num_rational::BigRational>) -> Value {
    let mut coeffs = serde_json::Map::new();
    for (m, c) in a.iter() {
        if !num_traits::Zero::is_zero(c) {
            let key = stableforms::exterior::mask_indices(m).iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>();
            coeffs.insert(key.join(" "), Value::from(c.to_string()));
        }
    }
    json!({ "grade": a.grade(), "coeffs": coeffs })
}

pub fn run(args: &AnalyzeArgs) -> Result<CommandOutput, RunError> {
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| RunError::Invalid(format!("cannot read {}: {e}", args.input.display())))?;
    let literal: Value =
        serde_json::from_str(&text).map_err(|e| RunError::Invalid(format!("{}: {e}", args.input.display())))?;
    let exact = form_from_literal(&literal).map_err(|e| RunError::Invalid(e.to_string()))?;
    if exact.grade() != 3 {
        return Err(RunError::Invalid(format!("expected a 3-form, got grade {}", exact.grade())));
    }
    let psi = exact.to_f64();
    match analyze(&psi, args.eps) {
        Ok(an) => {
            // the exact dual form exists when −λ is a rational square
            let exact_part = if args.eps == 1.0 {
                match analyze_exact(&exact) {
                    Ok(s) => json!({
                        "lambda": s.hitchin_lambda.to_string(),
                        "P_coeffs": exact_literal(&s.p_form(&exact)),
                    }),
                    Err(_) => Value::Null,
                }
            } else {
                Value::Null
            };
            let result = json!({
                "lambda": an.hitchin_lambda,
                "stable": true,
                "vol_density": an.vol_density,
                "P_coeffs": form_to_literal(&an.p_form()),
                "I_matrix": an.i,
                "exact": exact_part,
            });
            Ok(CommandOutput::new(result, true))
        }
        Err(HitchinError::NotStable { lambda }) => {
            let (_, k) = hitchin_invariant(&psi, &args.eps);
            Err(RunError::numerical(
                "NotStable",
                format!("form is not stable of complex type (lambda = {lambda:e})"),
                json!({ "lambda": lambda, "stable": false, "K_matrix": k }),
            ))
        }
        Err(e) => Err(RunError::numerical("NotStable", e, json!({ "stable": false }))),
    }
}
