//! Drives a campaign by hand: fold-1 boxes, imported proposals, a few
//! corrections. Then serializes the log as JSONL, replays it onto the
//! initial state and fits the timing constants from the timestamps.

use twofold::campaign::{
    accept_events, init_campaign, simulate_annotator, simulate_fold1, CampaignState, Fold1Labels, SimClock, Stage,
};
use twofold::events::{parse_jsonl, to_jsonl, StageTag};
use twofold::metrics::MatchConfig;
use twofold::synthetic::{generate_dataset, perturb, DatasetSpec, ProposalNoise};
use twofold::workload::{fit_timing, TimingModel};

fn main() -> twofold::error::Result<()> {
    let spec = DatasetSpec {
        sequences: vec![("corridor".into(), 40), ("office".into(), 30)],
        categories: vec![("chair".into(), 90), ("screen".into(), 40)],
        width: 640,
        height: 480,
        max_boxes_per_image: 0,
        seed: 1,
    };
    let gt = generate_dataset(&spec)?;
    let cfg = MatchConfig::default();
    let mut state = init_campaign(gt.images.clone(), gt.categories.clone(), 0.2, Fold1Labels::Manual, &cfg)?;
    let base = state.clone();

    // A slower annotator than the default model.
    let timing = TimingModel { t1: 12.0, t2: 4.0, ..TimingModel::default() };
    let mut clock = SimClock::new("alice", 1_700_000_000_000, timing);

    let fold1 = state.split().fold1_image_ids.clone();
    state.apply_operations(&simulate_fold1(&gt, &fold1, &mut clock))?;
    if state.stage() == Stage::Fold1Annotation {
        state.apply_operations(&accept_events(&fold1, StageTag::Fold1, &mut clock))?;
    }

    let fold2 = gt.subset(&state.split().fold2_image_ids);
    let proposals = perturb(&fold2, &ProposalNoise::targeting(0.85, 0.8)?, 2)?;
    state.import_proposals(&proposals, &cfg)?;

    let corrections = simulate_annotator(&gt, state.working(), &cfg, &mut clock)?;
    state.apply_operations(&corrections)?;
    let fold2_ids = state.split().fold2_image_ids.clone();
    state.apply_operations(&accept_events(&fold2_ids, StageTag::Fold2, &mut clock))?;
    let annotations = state.finalize()?;
    println!("stage {}, {} boxes", state.stage(), annotations.instance_count());

    let jsonl = to_jsonl(state.log());
    println!("log: {} events, {} bytes of JSONL", state.log().len(), jsonl.len());
    println!("first line: {}", jsonl.lines().next().unwrap_or(""));

    // Proposals are not part of the log, so replay runs in two phases
    // around the import.
    let events = parse_jsonl(&jsonl)?;
    let (f1, f2): (Vec<_>, Vec<_>) = events.iter().cloned().partition(|e| e.stage_tag == StageTag::Fold1);
    let mut replayed = CampaignState::replay(&base, &f1)?;
    replayed.import_proposals(&proposals, &cfg)?;
    let mut replayed = CampaignState::replay(&replayed, &f2)?;
    assert_eq!(replayed.finalize()?, annotations);
    println!("replay reproduces the final annotations");

    let fit = fit_timing(&events, &TimingModel::default())?;
    println!(
        "fitted t1 {:.2}s from {} samples, t2 {:.2}s from {} samples",
        fit.model.t1, fit.t1_samples, fit.model.t2, fit.t2_samples
    );
    Ok(())
}
