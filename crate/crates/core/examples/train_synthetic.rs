//! Train the LSTM on a small synthetic region and score the test years.
//!
//! cargo run --release --example train_synthetic -- [n_playas] [n_years] [seed]

use playa::data::{fit_standardizer, synth_generate, Split};
use playa::eval::{metrics_report, pooled};
use playa::model::{evaluate_loss, sequence_forward, ModelConfig};
use playa::optim::{fit_with, TrainConfig};

fn main() -> playa::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let n_playas = args.first().copied().unwrap_or(50) as usize;
    let n_years = args.get(1).copied().unwrap_or(10) as usize;
    let seed = args.get(2).copied().unwrap_or(7);
    let batch_size = std::env::var("BATCH").ok().and_then(|b| b.parse().ok()).unwrap_or(8);

    let mut ds = synth_generate(n_playas, n_years, seed)?;
    let stats = fit_standardizer(&ds)?;
    ds.standardize(&stats)?;

    let mut model = ModelConfig::with_defaults(ds.schema.width(), ds.vocab.sizes());
    model.hidden_size = 16;
    let train = TrainConfig {
        batch_size,
        seed,
        ..TrainConfig::default()
    };

    let (params, history) = fit_with(&ds.samples, &model, &train, |e| {
        if e.epoch % 10 == 0 || e.is_best {
            println!(
                "epoch {:>3}  lr {:.5}  train {:.4}  val {:.4}{}",
                e.epoch,
                e.lr,
                e.train_loss,
                e.val_loss,
                if e.is_best { "  *" } else { "" }
            );
        }
    })?;
    println!(
        "best epoch {:?}, halted after {:?}",
        history.best_epoch, history.halted_at
    );

    let (train_bce, _) = evaluate_loss(&ds.samples, &params, &model, Split::Train)?;
    println!("train BCE at best epoch: {train_bce:.4}");

    let logits: Vec<Vec<f64>> = ds
        .samples
        .iter()
        .map(|s| sequence_forward(s, &params, &model).map(|c| c.logits))
        .collect::<playa::Result<_>>()?;
    for split in Split::ALL {
        let (l, y) = pooled(&ds.samples, &logits, split);
        let r = metrics_report(split, &l, &y, 0.3)?;
        println!(
            "{:<10} auc {:.4}  f1 {:?}  bce {:.4}  accuracy {:.4}",
            split.to_string(),
            r.auc,
            r.f1,
            r.bce_loss,
            r.accuracy
        );
    }
    Ok(())
}
