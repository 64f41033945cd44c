//! Runs the full acceptance battery and prints one line per criterion.
//!
//! Exits nonzero if any check fails other than those listed in `KNOWN`.

use std::process::ExitCode;

use hodge_core::suite::{Battery, Level, Perturbation};

/// Checks that fail by design: the diagonal datum is semisimple, so it has a
/// harmonic map and the solver converges instead of diverging.
const KNOWN: &[(usize, &str)] = &[(9, "diagonal datum trips the divergence flag")];

fn main() -> ExitCode {
    let level = match std::env::var("HODGE_SUITE_LEVEL").as_deref() {
        Ok("smoke") => Level::Smoke,
        _ => Level::Full,
    };
    println!("acceptance battery, level {level:?}");
    let mut unexpected = Vec::new();
    let report = Battery::new(level).run_with(|c| {
        println!("{}", c.summary());
        for check in c.failed_checks() {
            let known = KNOWN.iter().any(|&(id, name)| id == c.id && name == check.name);
            println!("      {}{check}", if known { "known " } else { "" });
            if !known {
                unexpected.push(format!("criterion {}: {}", c.id, check.name));
            }
        }
        if let Some(e) = &c.error {
            println!("      error {e}");
            unexpected.push(format!("criterion {}: {e}", c.id));
        }
        if !c.within_budget() {
            unexpected.push(format!("criterion {}: over budget", c.id));
        }
    });
    let total: f64 = report.criteria.iter().map(|c| c.seconds).sum();
    println!("total {total:.1} s");

    let mutated = Battery::new(Level::Smoke).with_perturbation(Perturbation::WrongW4Constant).run(4);
    let detected = mutated.as_ref().is_ok_and(|r| !r.passed());
    println!("mutation, wrong w4 constant          {}", if detected { "DETECTED" } else { "MISSED" });
    if !detected {
        unexpected.push("wrong w4 constant not detected".into());
    }

    if unexpected.is_empty() {
        println!("acceptance: all checks pass apart from {} known failure(s)", KNOWN.len());
        ExitCode::SUCCESS
    } else {
        for u in &unexpected {
            println!("unexpected failure: {u}");
        }
        ExitCode::FAILURE
    }
}
