//! Threshold loss from restricting a rateless code to L layers, and the
//! limit it approaches as the number of blocks grows.

use rateless::capacity::{asymptotic_layering_loss, kappa_rate_schedule, linear_to_db};
use rateless::formats::{loss_csv, View};
use rateless::tables::loss_table;

fn main() -> rateless::Result<()> {
    let rate = 5.0;
    print!("{}", loss_csv(&loss_table(rate, 9, 10)?, View::Rounded));

    println!("\nloss as m grows without bound, R = {rate}:");
    for layers in 1..=9 {
        let db = linear_to_db(asymptotic_layering_loss(rate, layers as f64));
        println!("  L={layers}: {db:.2} dB");
    }

    // a ceiling of kappa R keeps the first kappa blocks' thresholds lower
    println!("\ndecodable rates with kappa = 2, R = 6, M = 6: {:?}", kappa_rate_schedule(6.0, 2.0, 6)?);
    Ok(())
}
