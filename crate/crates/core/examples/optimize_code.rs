//! Searches for a gain matrix meeting the successive-decoding equalities.
//!
//! cargo run --release --example optimize_code -- <rate> <layers> <blocks> [seed]

use rateless::capacity::CodeSpec;
use rateless::formats::{shortfall_csv, View};
use rateless::optimizer::{optimize_gain_matrix, OptimizerConfig};
use rateless::Error;

fn main() -> rateless::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.to_string());
    let rate: f64 = arg(0, "5").parse().expect("rate");
    let layers: usize = arg(1, "3").parse().expect("layers");
    let blocks: usize = arg(2, "10").parse().expect("blocks");
    let seed: u64 = arg(3, "24301").parse().expect("seed");

    let spec = CodeSpec::natural(rate, layers, blocks)?;
    let config = OptimizerConfig {
        seed,
        ..OptimizerConfig::default()
    };
    let best = match optimize_gain_matrix(&spec, &config) {
        Ok(best) => best,
        Err(Error::NonConvergence(best)) => {
            eprintln!("warning: target not reached");
            *best
        }
        Err(e) => return Err(e),
    };

    println!(
        "{blocks} blocks x {layers} layers, R = {rate}: max shortfall {:.4}% (restart {}, {} iterations)",
        best.report.max_shortfall_pct, best.restart, best.iterations
    );
    print!("{}", shortfall_csv(&best.report, View::Rounded));
    println!("\n{}", best.matrix.to_json());
    Ok(())
}
