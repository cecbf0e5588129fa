//! Ancilla mass of the revealing transform near each eigenfrequency of
//! Haar-random unitaries.
//!
//! `cargo run --release --example verify_rev`

use qrecog::rng::Streams;
use qrecog::runner::{verify_rev, RevCheckConfig};

fn main() -> qrecog::Result<()> {
    let cfg = RevCheckConfig::default();
    let r = verify_rev(&cfg, &Streams::new(2))?;
    println!("{} eigenvectors, min mass {:.4} (need {:.4}): {}", r.cases, r.min_mass, r.required, if r.passed { "pass" } else { "fail" });
    Ok(())
}
