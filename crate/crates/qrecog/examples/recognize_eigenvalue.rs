//! Recognize eigenvalues of a sparse-spectrum unitary on the coarse grid.
//!
//! `cargo run --release --example recognize_eigenvalue`

use qrecog::fixtures::sparse_spectrum;
use qrecog::recognize::{recognize_eigenvalue, Device, EigenQuery};
use qrecog::rng::Streams;
use qrecog::statevec::DenseUnitary;

fn main() -> qrecog::Result<()> {
    let m = 8;
    let fx = sparse_spectrum(16, m, 7)?;
    let dev = Device::new(DenseUnitary::new(fx.unitary.to_matrix()?)?)?;
    let streams = Streams::new(1);
    for l in 0..m {
        let q = EigenQuery::coarse(l, m);
        let r = recognize_eigenvalue(&dev, &q, &streams.child("candidate", l as u64))?;
        println!("{l}/{m}: accepted {} fraction {:.3}", r.accepted, r.fraction);
    }
    Ok(())
}
