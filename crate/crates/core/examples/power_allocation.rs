//! Per-layer powers that make dithered repetition decodable at every
//! ideal threshold, and how far the recursion can be extended.

use rateless::formats::{allocation_csv, View};
use rateless::power_alloc::{allocate_per_layer, verify_allocation};

fn main() -> rateless::Result<()> {
    let mut alloc = allocate_per_layer(2.0, 4, 5, 255.0, 1.0)?;
    print!("{}", allocation_csv(&alloc, View::Rounded));

    println!("\nshortfall each block made up, bits:");
    for (m, row) in alloc.shortfalls.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|d| format!("{d:.4}")).collect();
        println!("  m={}: {}", m + 1, cells.join("  "));
    }

    // later blocks reuse the earlier columns untouched
    alloc.extend_to(20)?;
    let worst = verify_allocation(&alloc).iter().flatten().fold(0.0f64, |w, r| w.max(r.abs()));
    println!("\nextended to 20 blocks; worst accumulated-rate residual {worst:.1e} bits");
    println!("block 20 powers: {:.2?}", alloc.powers[19]);
    Ok(())
}
