//! Identify a black box among eight involutive circuits with equal spectra.
//!
//! `cargo run --release --example recognize_device [index]`

use qrecog::circuit::MatrixDevice;
use qrecog::distinguish::{recognize_device, BlackBox, DistinguishConfig};
use qrecog::fixtures::involutive_family;
use qrecog::rng::Streams;

fn main() -> qrecog::Result<()> {
    let idx: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let (fam, names) = involutive_family()?;
    let secret = fam.space.build_unitary(fam.codes[idx % fam.codes.len()])?;
    let bb = BlackBox::new(MatrixDevice::new(secret));
    let r = recognize_device(&bb, &fam, &DistinguishConfig::default(), &Streams::new(9))?;
    let got = r.code.and_then(|c| fam.codes.iter().position(|x| *x == c));
    println!("hidden {}  recognized {}", names[idx % names.len()], got.map_or("none", |i| names[i].as_str()));
    Ok(())
}
