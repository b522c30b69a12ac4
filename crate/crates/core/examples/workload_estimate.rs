//! Predicts annotation effort for a split from detector precision and
//! recall, and compares it with annotating everything by hand.

use twofold::workload::{estimate, savings_vs_manual, TimingModel};

fn main() -> twofold::error::Result<()> {
    let timing = TimingModel::default();
    // 460 boxes drawn by hand in fold 1; fold 2 holds 4135 objects and the
    // detector proposes 4020 boxes there.
    let (initial, fold2_objects, fold2_detections) = (460, 4135, 4020.0);
    for (precision, recall) in [(0.95, 0.92), (0.8, 0.7), (0.5, 0.4)] {
        let est = estimate(initial, fold2_objects, fold2_detections, precision, recall, &timing)?;
        let saved = savings_vs_manual(&est, initial + fold2_objects, &timing)?;
        println!(
            "p {precision:.2} r {recall:.2}: +{:.0} -{:.0}  {:.0} ops  {:.1} h  saves {:.1}%",
            est.additions,
            est.removals,
            est.total_operations,
            est.total_time_s / 3600.0,
            saved * 100.0
        );
    }
    Ok(())
}
