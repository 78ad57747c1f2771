use serde_json::json;

use crate::config::SelftestArgs;
use crate::report::CommandOutput;
use crate::{all_passed, suites, Check, RunError};

pub fn run(args: &SelftestArgs) -> Result<CommandOutput, RunError> {
    let suites: Vec<(&str, Vec<Check>)> = vec![
        ("exterior", suites::exterior(args.seed)),
        ("hitchin_algebra", suites::hitchin_algebra(args.forms, args.seed, 1e-8)),
        ("variational", suites::variational(args.seed, 0.1)),
        ("operators", suites::operators(args.grid, args.seed, 1e-12, 0.3)),
        ("spectral", suites::spectral(4, 1)),
    ];
    let passed = suites.iter().all(|(_, c)| all_passed(c));
    let result = json!({
        "suites": suites
            .iter()
            .map(|(name, checks)| json!({ "name": name, "passed": all_passed(checks), "checks": checks }))
            .collect::<Vec<_>>(),
        "passed": passed,
    });
    Ok(CommandOutput::new(result, passed))
}
