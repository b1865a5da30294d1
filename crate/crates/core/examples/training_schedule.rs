//! The optimizer pieces on their own: the step-decay learning rate, a few
//! Adam steps on a scalar, and early stopping on a validation-loss trace.
//!
//! cargo run --example training_schedule

use playa::optim::{adam_step_slice, early_stop_trace, lr_at_epoch, AdamState, TrainConfig};

fn main() -> playa::Result<()> {
    let cfg = TrainConfig::default();
    for epoch in [0, 4, 5, 10, 35, 100] {
        println!("epoch {epoch:>3}: lr {}", lr_at_epoch(epoch, &cfg));
    }

    // Minimize (x - 3)^2 from x = 0.
    let mut x = [0.0];
    let mut state = AdamState::for_len(1);
    for step in 1..=500 {
        let g = [2.0 * (x[0] - 3.0)];
        adam_step_slice(&mut x, &g, &mut state, 0.05, &cfg)?;
        if step % 100 == 0 {
            println!("adam step {step}: x = {:.6}", x[0]);
        }
    }

    // Improves until epoch 35, then flat: stops 16 epochs later.
    let trace: Vec<f64> = (0..100).map(|e| if e <= 35 { 1.0 - 0.01 * e as f64 } else { 0.65 }).collect();
    if let Some((halt, best)) = early_stop_trace(&trace, cfg.patience) {
        println!("early stopping: halted after epoch {halt}, restored epoch {best}");
    }
    Ok(())
}
