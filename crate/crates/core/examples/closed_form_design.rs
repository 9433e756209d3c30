//! Builds the 2 x 2 and 3 x 3 perfect codes and checks every
//! successive-decoding equality at the ideal thresholds.
//!
//! cargo run --example closed_form_design -- 6

use rateless::capacity::CodeSpec;
use rateless::closed_form::{design_2x2, design_3x3, max_rate_3x3, natural_power, validate_perfect};
use rateless::GainMatrix;

fn show(g: &GainMatrix) {
    for row in &g.entries {
        let cells: Vec<String> = row
            .iter()
            .map(|e| format!("{:7.4} @ {:+.4} rad", e.mag, e.phase_rad))
            .collect();
        println!("  {}", cells.join("   "));
    }
}

fn main() -> rateless::Result<()> {
    let rate: f64 = std::env::args().nth(1).map_or(6.0, |s| s.parse().expect("rate in b/s/Hz"));
    let power = natural_power(rate);

    for (n, g) in [(2, design_2x2(rate, power)?), (3, design_3x3(rate, power)?)] {
        let spec = CodeSpec::new(rate, n, n, power, 1.0)?;
        let check = validate_perfect(&g, &spec, 1e-9)?;
        println!("{n}x{n} code, R = {rate}, P = {power}:");
        show(&g);
        println!(
            "  worst |relative shortfall| {:.2e}, unitarity residual {:.2e}, perfect: {}\n",
            check.report.max_abs_relative,
            check.report.unitarity_residual.unwrap_or(0.0),
            check.passed
        );
    }

    let limit = max_rate_3x3();
    println!("3x3 codes exist up to R = {limit:.6}");
    match design_3x3(limit + 0.01, 1.0) {
        Err(e) => println!("just past it: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
