//! Difference test on each pair class.
//!
//! `cargo run --release --example distinguish`

use qrecog::distinguish::{difference, DistinguishConfig};
use qrecog::fixtures::{pair_fixture, PairClass};
use qrecog::rng::Streams;

fn main() -> qrecog::Result<()> {
    let cfg = DistinguishConfig::default();
    for (i, class) in PairClass::ALL.iter().enumerate() {
        let fx = pair_fixture(*class, 8, cfg.d, 11 + i as u64)?;
        let case = fx.case(&cfg)?;
        let r = difference(&case, &cfg, &Streams::new(i as u64))?;
        println!("{:<10} {:?} via {:?}", class.name(), r.verdict, r.branch);
    }
    Ok(())
}
