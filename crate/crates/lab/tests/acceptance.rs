//! Runs every acceptance criterion in order and prints one line each.
//! Exits nonzero when any criterion fails or errors.

use std::process::ExitCode;

use otbound_lab::accept::{run_criterion, AcceptOptions, CRITERIA};

fn main() -> ExitCode {
    let opts = AcceptOptions::default();
    let mut failed = Vec::new();
    for (id, name) in CRITERIA {
        match run_criterion(id, &opts) {
            Ok(outcome) => {
                for m in outcome.measurements.iter().filter(|m| !m.passed) {
                    println!("    failing check: {} = {:.5e} ({})", m.label, m.value, m.bound);
                }
                println!("{}", outcome.line());
                if !outcome.passed {
                    failed.push(id);
                }
            }
            Err(e) => {
                println!("criterion {id:>2} [FAIL] {name}: error {e}");
                failed.push(id);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", CRITERIA.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
