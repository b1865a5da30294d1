//! Compare analytic BPTT gradients with central finite differences on a
//! tiny random model. Every parameter, embedding rows included, is checked.
//!
//! cargo run --release --example gradient_check

use playa::data::{Split, YearMonth};
use playa::model::{
    batch_loss_and_gradients, init_parameters, EmbedDims, ModelConfig, SequenceSample, VocabSizes,
    Window,
};
use playa::numeric::{finite_diff_check, Matrix};
use rand::Rng;

fn main() -> playa::Result<()> {
    let config = ModelConfig {
        hidden_size: 4,
        numeric_feature_count: 5,
        embed_dims: EmbedDims { playa_id: 3, huc8: 2, author: 2 },
        vocab_sizes: VocabSizes { playa_id: 3, huc8: 2, author: 2 },
    };
    let mut rng = playa::rng::stream(42, 0);
    let t = 8;
    let samples: Vec<SequenceSample> = (0..3)
        .map(|i| SequenceSample {
            playa_id: format!("p{i}"),
            playa_index: i,
            huc8_index: i % 2,
            author_index: (i + 1) % 2,
            features: Matrix::from_fn(t, 5, |_, _| rng.random_range(-2.0..2.0)),
            labels: (0..t).map(|_| u8::from(rng.random_bool(0.4))).collect(),
            split_mask: vec![Split::Train; t],
            months: (1..=t as u32).map(|m| YearMonth::new(2000, m).unwrap()).collect(),
        })
        .collect();
    let refs: Vec<&SequenceSample> = samples.iter().collect();
    let params = init_parameters(&config, 42)?;

    let started = std::time::Instant::now();
    let (loss, grads) = batch_loss_and_gradients(&refs, &params, &config, Split::Train, Window::Full)?;
    let loss_at = |flat: &[f64]| {
        let mut p = params.clone();
        p.assign_flat(flat).expect("same length");
        batch_loss_and_gradients(&refs, &p, &config, Split::Train, Window::Full)
            .expect("valid fixture")
            .0
    };
    let report = finite_diff_check(loss_at, &params.flatten(), &grads.flatten(), 1e-5)?;

    println!("loss {loss:.6}, {} parameters", params.len());
    println!(
        "max relative error {:.3e} at index {} (analytic {:.6e}, numeric {:.6e})",
        report.max_rel_error, report.worst_index, report.analytic, report.numeric
    );
    println!("elapsed {:.2?}", started.elapsed());
    Ok(())
}
