//! One module per subcommand.

mod analyze;
mod example;
mod selftest;
mod solve;
mod spectrum;

use crate::report::CommandOutput;
use crate::{Command, RunError};

pub use example::rational_sphere_points;

pub fn dispatch(command: &Command) -> Result<CommandOutput, RunError> {
    match command {
        Command::Analyze(a) => analyze::run(a),
        Command::ExampleT3b3(a) => example::run(a),
        Command::Spectrum(a) => spectrum::run(a),
        Command::TorelliT6(a) => solve::torelli(a),
        Command::BoundarySolve(a) => solve::boundary(a),
        Command::Selftest(a) => selftest::run(a),
    }
}
