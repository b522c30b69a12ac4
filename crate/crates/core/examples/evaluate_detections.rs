//! Scores a noisy detector against synthetic ground truth: per-image
//! greedy matching, aggregate precision / recall and per-category AP.

use twofold::metrics::{evaluate, match_sets, report, MatchConfig};
use twofold::synthetic::{generate_dataset, perturb, DatasetSpec, ProposalNoise};

fn main() -> twofold::error::Result<()> {
    let gt = generate_dataset(&DatasetSpec::tut_indoor(7))?;
    let det = perturb(&gt, &ProposalNoise::default(), 11)?;
    let cfg = MatchConfig::default();

    let results = match_sets(&gt, &det, &cfg)?;
    let counts = report(results.iter().map(|(_, r)| r));
    println!(
        "tp {} fp {} fn {}  precision {:.3} recall {:.3}",
        counts.tp, counts.fp, counts.fn_, counts.precision, counts.recall
    );

    let eval = evaluate(&gt, &det, &cfg)?;
    for (cat, ap) in &eval.per_category_ap {
        println!("{:>18}  AP {:.3}", gt.categories[cat], ap);
    }
    println!("mAP {:.3}", eval.map_value);
    Ok(())
}
