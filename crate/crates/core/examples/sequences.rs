//! Low-discrepancy building blocks: radical inverses, Sobol and Halton
//! points, and the concentric square-to-disk map.
//!
//! cargo run --release --example sequences

use fidray::sampling::{concentric_disk_map, halton_point, radical_inverse, HaltonConfig, SobolTable};

fn main() -> fidray::Result<()> {
    let sobol = SobolTable::new(4)?;
    println!("Sobol (4D), first 8 points");
    for i in 0..8 {
        let p: Vec<String> = (0..4).map(|d| format!("{:.4}", sobol.sample(i, d))).collect();
        println!("  {i}: {}", p.join(" "));
    }

    let plain = HaltonConfig::new(6);
    let faure = HaltonConfig::faure(6);
    println!("Halton (6D), plain vs Faure-permuted");
    for i in 0..6 {
        let fmt = |v: Vec<f64>| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
        println!("  {i}: {}  |  {}", fmt(halton_point(i, &plain)), fmt(halton_point(i, &faure)));
    }
    println!("radical_inverse(6, 2) = {}", radical_inverse(6, 2, None));

    // the map preserves area: a quarter of the points land within half the radius
    let n = 100_000u32;
    let inside = (0..n)
        .filter(|&i| {
            let (x, y) = concentric_disk_map(sobol.sample(i, 0), sobol.sample(i, 1));
            x.hypot(y) < 0.5
        })
        .count();
    println!("disk points within r < 1/2: {:.4} (area ratio 0.25)", inside as f64 / n as f64);
    Ok(())
}
