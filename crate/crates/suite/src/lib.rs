//! Acceptance checks for the whole benchmark, run as `cargo test -p
//! kbench-suite --test acceptance`. Each check prints one PASS/FAIL line.

use std::time::{Duration, Instant};

#[path = "../../core/tests/common/oracles.rs"]
pub mod oracles;

/// Outcome of one check: a verdict plus a one-line account of what was
/// measured.
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Runs checks in order and tallies failures. A check that errors or panics
/// fails; one that overruns its time budget fails too.
#[derive(Default)]
pub struct Suite {
    failed: Vec<String>,
    total: usize,
}

impl Suite {
    pub fn check<E: std::fmt::Display>(
        &mut self,
        name: &str,
        budget: Option<Duration>,
        f: impl FnOnce() -> Result<Verdict, E>,
    ) {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f));
        let elapsed = start.elapsed();
        let (mut pass, mut detail) = match outcome {
            Ok(Ok(v)) => (v.pass, v.detail),
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(p) => {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if let Some(b) = budget {
            if elapsed > b {
                pass = false;
                detail = format!("{detail}; over the {:.0} s budget", b.as_secs_f64());
            }
        }
        println!(
            "[{}] {name} ({:.2} s): {detail}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        self.total += 1;
        if !pass {
            self.failed.push(name.to_string());
        }
    }

    /// Prints the tally; the process exit code to use.
    pub fn finish(self) -> i32 {
        println!("{} of {} checks passed", self.total - self.failed.len(), self.total);
        if self.failed.is_empty() {
            0
        } else {
            println!("failed: {}", self.failed.join(", "));
            1
        }
    }
}
