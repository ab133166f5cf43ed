//! Run a JSON-configured experiment and read its artifacts back.
//!
//! `cargo run --release --example run_experiment -- configs/vehicle_online.json out/vehicle`

use hybrid_sysid::experiment::{self, read_meta, ExperimentConfig, Table};
use std::path::PathBuf;

fn main() -> hybrid_sysid::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = PathBuf::from(args.next().unwrap_or_else(|| "configs/linear_gaussian_offline.json".into()));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/example".into()));
    let cfg = ExperimentConfig::load(&config)?;
    let report = experiment::validate(&cfg);
    if !report.is_ok() {
        eprint!("{report}");
        std::process::exit(2);
    }
    experiment::run(&cfg, &out)?;

    let meta = read_meta(&out.join("run_meta.json"))?;
    for (k, v) in &meta.metrics {
        println!("{k:<28} {v:.5}");
    }
    let errors = Table::read(&out.join("errors.csv"))?;
    println!("error curve columns: {}", errors.headers.join(", "));
    Ok(())
}
