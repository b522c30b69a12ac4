//! Sweeps the fold-1 fraction over the standard schedule with a modeled
//! detector that improves as it sees more data, then picks the fraction
//! that minimizes total annotation time.

use twofold::split::{optimum, schedule, sweep, split_set, Objective, Plan, QualityCurve};
use twofold::synthetic::{generate_dataset, DatasetSpec};
use twofold::workload::TimingModel;

fn main() -> twofold::error::Result<()> {
    let dataset = generate_dataset(&DatasetSpec::tut_indoor(3))?;
    let quality = QualityCurve::saturating(0.03, &schedule())?;
    let timing = TimingModel::default();

    let curve = sweep(&dataset, &quality, &timing)?;
    println!("{:>8} {:>8} {:>10} {:>10}", "fraction", "initial", "operations", "hours");
    for p in &curve.points {
        let initial = p.estimate.map_or(0, |e| e.initial);
        let hours = p.total_time_s.unwrap_or(f64::NAN) / 3600.0;
        println!("{:>8.2} {:>8} {:>10.0} {:>10.2}", p.fraction, initial, p.total_operations, hours);
    }

    let best = optimum(&curve, Objective::Time)?;
    let split = split_set(&dataset, best)?;
    println!(
        "best fraction {best}: {} images in fold 1, {} in fold 2",
        split.fold1_image_ids.len(),
        split.fold2_image_ids.len()
    );
    let plan = Plan::new(curve, Objective::Time)?;
    println!("plan.json is {} bytes", plan.to_json().len());
    Ok(())
}
