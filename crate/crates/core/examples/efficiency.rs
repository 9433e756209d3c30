//! Efficiency of the conservative repetition design against base-code rate.

use rateless::power_alloc::{conservative_rate, efficiency_lower_bound};

fn main() {
    println!("base rate   mid bound   linear bound");
    for k in 1..=8 {
        let b = k as f64 / 4.0;
        let e = efficiency_lower_bound(b);
        println!("{b:9.2}   {:9.4}   {:12.4}", e.mid, e.linear);
    }

    let (rate, layers) = (5.0, 15.0);
    let r2 = conservative_rate(rate, layers);
    println!("\nR = {rate}, L = {layers}: design rate {r2:.4}, efficiency {:.4}", r2 / rate);
}
