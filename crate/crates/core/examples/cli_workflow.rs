//! The command-line workflow driven in-process: create a campaign from a
//! COCO file, simulate fold 1, import proposals, simulate the corrections,
//! report the workload and export the result.

use std::fs;

use twofold::dataset::{write_coco_detections, write_coco_ground_truth};
use twofold::synthetic::{generate_dataset, perturb, DatasetSpec, ProposalNoise};

fn step(args: &[&str]) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("twofold").chain(args.iter().copied());
    let code = twofold::cli::run(argv, &mut out, &mut err);
    println!("$ twofold {}", args.join(" "));
    print!("{}", String::from_utf8_lossy(&out));
    assert_eq!(code, 0, "{}", String::from_utf8_lossy(&err));
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join(format!("twofold-cli-{}", std::process::id()));
    fs::create_dir_all(&root)?;
    let gt = generate_dataset(&DatasetSpec {
        sequences: vec![("atrium".into(), 60), ("exit".into(), 40)],
        categories: vec![("chair".into(), 120), ("clock".into(), 35)],
        width: 640,
        height: 480,
        max_boxes_per_image: 0,
        seed: 17,
    })?;
    let det = perturb(&gt, &ProposalNoise::targeting(0.9, 0.8)?, 18)?;
    let gt_path = root.join("gt.json");
    let det_path = root.join("det.json");
    fs::write(&gt_path, write_coco_ground_truth(&gt))?;
    fs::write(&det_path, write_coco_detections(&det, Some(&gt)))?;

    let p = |name: &str| root.join(name).to_string_lossy().into_owned();
    let (gt_s, det_s, camp) = (p("gt.json"), p("det.json"), p("campaign"));
    step(&["summarize", "--dataset", &gt_s]);
    step(&["evaluate", "--gt", &gt_s, "--det", &det_s]);
    step(&["init", "--out", &camp, "--dataset", &gt_s, "--fraction", "0.1"]);
    step(&["simulate", "--campaign", &camp, "--gt", &gt_s]);
    step(&["import-detections", "--campaign", &camp, "--detections", &det_s, "--drop-fold1"]);
    step(&["simulate", "--campaign", &camp, "--gt", &gt_s]);
    step(&["export", "--campaign", &camp, "--format", "coco", "--out", &p("final.json")]);
    println!("exported {} bytes", fs::metadata(root.join("final.json"))?.len());
    fs::remove_dir_all(&root)?;
    Ok(())
}
