//! Search a circuit family for a member with a prescribed spectrum.
//!
//! `cargo run --release --example find_structure`

use qrecog::fixtures::{structure_family, structure_target};
use qrecog::rng::Streams;
use qrecog::structure::{find_structure, Marking, StructureConfig};

fn main() -> qrecog::Result<()> {
    let fam = structure_family(16)?;
    let spec = structure_target()?;
    let r = find_structure(&fam, &spec, &StructureConfig::default(), Marking::Recognition, &Streams::new(5))?;
    println!("marked {:?} of {}", r.marked, r.family_size);
    match r.code {
        Some(code) => println!("found code {code}: {:?}", fam.space.decode(code)?),
        None => println!("not found"),
    }
    Ok(())
}
