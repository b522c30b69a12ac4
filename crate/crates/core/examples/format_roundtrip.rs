//! Writes ground truth as COCO and as a directory of Pascal VOC files,
//! reads both back and checks they agree.

use twofold::dataset::{
    parse_coco_ground_truth, parse_voc_directory, summarize, write_coco_ground_truth, write_voc_directory,
};
use twofold::synthetic::{generate_dataset, DatasetSpec};

fn main() -> twofold::error::Result<()> {
    let spec = DatasetSpec {
        sequences: vec![("lobby".into(), 12), ("stairs".into(), 8)],
        categories: vec![("chair".into(), 30), ("clock".into(), 9)],
        width: 320,
        height: 240,
        max_boxes_per_image: 0,
        seed: 5,
    };
    let gt = generate_dataset(&spec)?;

    let coco = write_coco_ground_truth(&gt);
    let from_coco = parse_coco_ground_truth(&coco)?;

    let dir = std::env::temp_dir().join(format!("twofold-voc-{}", std::process::id()));
    let files = write_voc_directory(&gt, &dir)?;
    let from_voc = parse_voc_directory(&dir)?;
    std::fs::remove_dir_all(&dir).ok();

    let s = summarize(&from_voc);
    println!("COCO document: {} bytes; VOC files: {}", coco.len(), files.len());
    println!(
        "{} images, {} boxes, {} categories",
        s.image_count, s.instance_count, s.category_count
    );
    let per_file = |set: &twofold::dataset::AnnotationSet| {
        let mut v: Vec<(String, usize)> =
            set.images.iter().map(|im| (im.file_name.clone(), set.boxes_for(im.id).len())).collect();
        v.sort();
        v
    };
    assert_eq!(per_file(&from_coco), per_file(&from_voc));
    assert_eq!(summarize(&from_coco).per_category_counts.values().sum::<usize>(), s.instance_count);
    println!("both round trips agree");
    Ok(())
}
