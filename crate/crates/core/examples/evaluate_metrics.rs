//! The evaluation toolkit on hand-made scores: confusion counts at the 0.3
//! cutoff, precision/recall/F1, ROC/AUC with tied scores, cutoff selection
//! and the regional inundation fraction.
//!
//! cargo run --example evaluate_metrics

use playa::eval::{
    confusion_at_cutoff, precision_recall_f1, regional_fraction, roc_auc, roc_curve, select_cutoff,
};

fn main() -> playa::Result<()> {
    let probs = [0.92, 0.35, 0.31, 0.64, 0.12, 0.35, 0.05, 0.28, 0.77, 0.02];
    let labels = [1, 1, 0, 1, 0, 0, 0, 1, 1, 0];

    let counts = confusion_at_cutoff(&probs, &labels, 0.3)?;
    let m = precision_recall_f1(&counts);
    println!("{counts:?}");
    println!("precision {:?} recall {:?} f1 {:?}", m.precision, m.recall, m.f1);

    for p in roc_curve(&probs, &labels)? {
        println!("threshold {:>5}  fpr {:.2}  tpr {:.2}", p.threshold, p.fpr, p.tpr);
    }
    println!("AUC {:.4}", roc_auc(&probs, &labels)?);
    println!("F1-optimal cutoff {}", select_cutoff(&probs, &labels, 0.01)?);

    // Three playas over four months.
    let predicted = vec![vec![0.9, 0.1, 0.4, 0.2], vec![0.2, 0.3, 0.8, 0.1], vec![0.6, 0.05, 0.1, 0.0]];
    println!("regional predicted fraction {:?}", regional_fraction(&predicted, 0.3)?);

    // An undefined metric stays undefined rather than turning into 0.
    let dry = confusion_at_cutoff(&[0.01, 0.02], &[0, 0], 0.3)?;
    println!("never-wet playa: f1 {:?}", precision_recall_f1(&dry).f1);
    Ok(())
}
