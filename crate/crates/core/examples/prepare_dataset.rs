//! Write a synthetic region to CSV, read it back through the validating
//! ingestion path, and fit the train-only standardizer.
//!
//! cargo run --example prepare_dataset

use playa::data::{fit_standardizer, ingest_dataset, synth_tables, Split, SynthConfig, TablePaths};

fn main() -> playa::Result<()> {
    let dir = std::env::temp_dir().join("playa_prepare_example");
    std::fs::create_dir_all(&dir)?;
    let cfg = SynthConfig::new(20, 10, 3);
    let raw = synth_tables(&cfg)?;
    let paths = TablePaths::in_dir(&dir);
    raw.write(&paths)?;

    let mut ds = ingest_dataset(&paths, &raw.schema, &cfg.split_spec())?;
    println!(
        "{} playas, {} months from {} to {}, {} features",
        ds.samples.len(),
        ds.vocab.timeline_len(),
        ds.vocab.first_month,
        ds.vocab.last_month,
        ds.schema.width()
    );
    for s in ds.split_summary() {
        println!(
            "{:<10} {}-{}: {} playa-months, prevalence {:.3}",
            s.split.to_string(),
            s.years.0,
            s.years.1,
            s.playa_months,
            s.prevalence
        );
    }
    println!("never inundated: {:.1}%", 100.0 * ds.never_inundated_fraction());

    let stats = fit_standardizer(&ds)?;
    ds.standardize(&stats)?;
    let s = &ds.samples[0];
    let train_rows: Vec<usize> = (0..s.len()).filter(|&t| s.split_mask[t] == Split::Train).collect();
    println!(
        "{}: mean {:.3}, std {:.3} (raw); first train value after scaling {:.3}",
        stats.names[1], stats.mean[1], stats.std[1], s.features[(train_rows[0], 1)]
    );
    println!("tables in {}", dir.display());
    Ok(())
}
