//! Print the built-in fixtures as JSON.
//!
//! `cargo run --release --example fixtures`

use qrecog::distinguish::DistinguishConfig;
use qrecog::fixtures::{involutive_family, promise_matrix, sparse_spectrum, thermo_fixtures};

fn main() -> qrecog::Result<()> {
    let fx = sparse_spectrum(8, 8, 1)?;
    println!("{}", serde_json::to_string(&fx.spectrum)?);
    for t in thermo_fixtures()? {
        println!("{}: {} levels", t.name, t.hamiltonian.exact_levels(1e-9).len());
    }
    let (fam, names) = involutive_family()?;
    let ok = promise_matrix(&fam, &DistinguishConfig::default())?.iter().flatten().all(|x| *x);
    println!("{names:?} promise holds: {ok}");
    Ok(())
}
