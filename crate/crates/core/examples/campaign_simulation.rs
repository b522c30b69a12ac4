//! Runs a whole two-fold campaign with a simulated annotator and compares
//! the workload predicted from detector quality with the one counted from
//! the event log.

use twofold::campaign::simulate_campaign;
use twofold::metrics::MatchConfig;
use twofold::synthetic::{generate_dataset, perturb, DatasetSpec, ProposalNoise};
use twofold::workload::{savings_vs_manual, TimingModel};

fn main() -> twofold::error::Result<()> {
    let gt = generate_dataset(&DatasetSpec::tut_indoor(21))?;
    let proposals = perturb(&gt, &ProposalNoise::targeting(0.9, 0.85)?, 22)?;
    let timing = TimingModel::default();

    let out = simulate_campaign(&gt, &proposals, 0.1, &MatchConfig::default(), &timing)?;
    println!(
        "fold-2 detector: precision {:.3} recall {:.3}",
        out.report.precision, out.report.recall
    );
    for (name, w) in [("predicted", out.predicted), ("simulated", out.simulated)] {
        println!(
            "{name:>9}: initial {} +{:.0} -{:.0}  {:.2} h",
            w.initial,
            w.additions,
            w.removals,
            w.total_time_s / 3600.0
        );
    }
    let saved = savings_vs_manual(&out.simulated, gt.instance_count() as u64, &timing)?;
    println!("log holds {} events; time saved {:.1}%", out.state.log().len(), saved * 100.0);
    assert_eq!(out.final_set.instance_count(), gt.instance_count());
    Ok(())
}
