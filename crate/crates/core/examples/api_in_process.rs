//! Exercises the HTTP API without a socket: `Service::handle` takes the
//! same requests the server routes to it.

use serde_json::json;
use twofold::api::{ApiRequest, FixedClock, Service};
use twofold::campaign::{init_campaign, Fold1Labels};
use twofold::metrics::MatchConfig;
use twofold::split::split_set;
use twofold::synthetic::{generate_dataset, perturb, DatasetSpec, ProposalNoise};
use twofold::workload::TimingModel;

fn main() -> twofold::error::Result<()> {
    let spec = DatasetSpec {
        sequences: vec![("hall".into(), 20)],
        categories: vec![("chair".into(), 30)],
        width: 640,
        height: 480,
        max_boxes_per_image: 0,
        seed: 9,
    };
    let gt = generate_dataset(&spec)?;
    let cfg = MatchConfig::default();
    // Fold 1 arrives already labeled, so the campaign opens at the
    // proposal import.
    let fold1 = gt.subset(&split_set(&gt, 0.2)?.fold1_image_ids);
    let mut state = init_campaign(gt.images.clone(), gt.categories.clone(), 0.2, Fold1Labels::Prelabeled(fold1), &cfg)?;
    let fold2 = gt.subset(&state.split().fold2_image_ids);
    state.import_proposals(&perturb(&fold2, &ProposalNoise::default(), 4)?, &cfg)?;

    let svc = Service::new(state, TimingModel::default()).with_clock(FixedClock(1_700_000_000_000));
    let show = |label: &str, req: ApiRequest| {
        let resp = svc.handle(&req);
        let text = resp.json_body().to_string();
        let cut = text.char_indices().nth(150).map_or(text.len(), |(i, _)| i);
        println!("{label}: {} {}", resp.status, &text[..cut]);
        resp.json_body()
    };

    show("campaign", ApiRequest::get("/api/campaign"));
    let list = show("pending", ApiRequest::get("/api/images?status=pending&per_page=3"));
    let id = list["data"]["items"][0]["id"].as_u64().expect("a pending image");

    let view = show("image", ApiRequest::get(format!("/api/images/{id}")));
    let mut events = vec![json!({"kind": "add", "box": [10, 10, 40, 30], "category_id": 1})];
    if let Some(first) = view["data"]["boxes"][0]["ref"].as_u64() {
        events.push(json!({"kind": "remove", "target_ref": first}));
    }
    let body = json!({"request_id": "r-1", "events": events});
    show("operations", ApiRequest::post(format!("/api/images/{id}/operations"), &body));
    show("retry", ApiRequest::post(format!("/api/images/{id}/operations"), &body));
    show("accept", ApiRequest::post(format!("/api/images/{id}/accept"), &json!({"request_id": "r-2"})));
    let late = json!({"request_id": "r-3", "events": [{"kind": "remove", "target_ref": 1}]});
    show("edit after accept", ApiRequest::post(format!("/api/images/{id}/operations"), &late));
    show("workload", ApiRequest::get("/api/workload"));
    Ok(())
}
