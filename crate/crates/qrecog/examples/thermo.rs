//! Partition function, mean energy and entropy of a small Hamiltonian,
//! next to the exact values.
//!
//! `cargo run --release --example thermo`

use qrecog::fixtures::thermo_fixtures;
use qrecog::rng::Streams;
use qrecog::thermo::{exact_thermo, thermo_pipeline, ThermoConfig};

fn main() -> qrecog::Result<()> {
    let fx = thermo_fixtures()?.remove(0);
    let cfg = ThermoConfig { m: fx.m, ..ThermoConfig::default() };
    let kbts = [0.25, 0.5, 1.0, 2.0];
    let r = thermo_pipeline(&fx.hamiltonian, &kbts, &cfg, &Streams::new(3))?;
    for lv in &r.levels {
        println!("level E={:.4} g={} bracket {:?}", lv.energy, lv.degeneracy, lv.bracket);
    }
    for est in &r.results {
        let ex = exact_thermo(&fx.hamiltonian, est.kbt, cfg.cutoff)?;
        println!(
            "kBT={:.2}  Q {:.4} ({:.4})  <E> {:.4} ({:.4})  S {:.4} ({:.4})",
            est.kbt, est.partition, ex.partition, est.mean_energy, ex.mean_energy, est.entropy, ex.entropy
        );
    }
    Ok(())
}
