//! Land-cover fractions inside a 200 m buffer, by Monte-Carlo point sampling
//! on a small categorical grid. Compares the estimate with the exact area
//! split for a center on a vertical class boundary.
//!
//! cargo run --release --example extract_buffer_fractions

use std::collections::BTreeMap;

use playa::raster::{buffer_class_fractions, BufferConfig, ClassKey, RasterGrid};

fn main() -> playa::Result<()> {
    // 30 m cells; columns left of x = 600 are cropland (1), the rest grassland (2).
    let (w, h, cell) = (40, 40, 30.0);
    let values = (0..w * h)
        .map(|i| if ((i % w) as f64) * cell < 600.0 { 1 } else { 2 })
        .collect();
    let classes = BTreeMap::from([(1, "cropland".to_string()), (2, "grassland".to_string())]);
    let grid = RasterGrid::new(w, h, 0.0, h as f64 * cell, cell, -9999, values)?.with_classes(classes.clone());

    for offset in [0.0, 50.0, 100.0, 250.0] {
        let center = (600.0 - offset, 600.0);
        let cfg = BufferConfig { radius: 200.0, n_points: 5000, base_seed: 1 };
        let f = buffer_class_fractions(&grid, center, &cfg, "demo");
        let exact = segment_fraction(offset.min(200.0), 200.0);
        println!(
            "center {offset:>5} m inside cropland: cropland {:.4} (exact {:.4}), grassland {:.4}, nodata {:.4}",
            f.fraction(ClassKey::Class(1)),
            exact,
            f.fraction(ClassKey::Class(2)),
            f.fraction(ClassKey::NoData),
        );
    }

    // Named fractions, as they land in lulc.csv.
    let cfg = BufferConfig::default();
    let f = buffer_class_fractions(&grid, (590.0, 600.0), &cfg, "42");
    println!("{:?}", f.by_name(&classes));
    Ok(())
}

/// Share of a disk of radius `r` lying on the center's side of a chord at
/// distance `d`.
fn segment_fraction(d: f64, r: f64) -> f64 {
    let cap = r * r * (d / r).acos() - d * (r * r - d * d).sqrt();
    1.0 - cap / (std::f64::consts::PI * r * r)
}
