//! Query-count scaling sweeps with log-log slopes.
//!
//! `cargo run --release --example scaling_sweep [eigenvalue|structure|difference]`

use qrecog::runner::{sweep, write_csv, SweepConfig, SweepKind};

fn main() -> qrecog::Result<()> {
    let arg = std::env::args().nth(1);
    let kinds = match arg.as_deref() {
        Some("eigenvalue") => vec![SweepKind::Eigenvalue],
        Some("structure") => vec![SweepKind::Structure],
        Some("difference") => vec![SweepKind::Difference],
        _ => vec![SweepKind::Eigenvalue, SweepKind::Structure, SweepKind::Difference],
    };
    for kind in kinds {
        let r = sweep(&SweepConfig::default_for(kind))?;
        println!("{kind:?}: slope {:.3}", r.slope);
        write_csv(&r, std::io::stdout())?;
    }
    Ok(())
}
