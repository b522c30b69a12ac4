//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code.
//!
//! Settings resolve as flags, then the manifest, then built-in defaults.
//! Relative paths inside a manifest are relative to the manifest file.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::api::{serve, Service};
use crate::campaign::{
    accept_events, init_campaign, simulate_annotator, simulate_campaign, simulate_fold1, CampaignStore, Fold1Labels,
    ImageStatus, SimClock, Stage,
};
use crate::dataset::{
    parse_coco_detections_for, parse_voc_directory, read_coco_ground_truth, summarize, write_coco_ground_truth,
    write_voc_directory, AnnotationSet, Manifest,
};
use crate::error::{Error, Result};
use crate::events::StageTag;
use crate::metrics::evaluate;
use crate::split::{schedule, split_set, sweep_fractions, Objective, Plan, QualityCurve, WorkloadCurve};
use crate::workload::{estimate, savings_vs_manual};

#[derive(Debug, Parser)]
#[command(name = "twofold", version, about = "Two-stage bounding-box annotation campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a campaign directory from a dataset of images.
    Init(InitArgs),
    /// Print the fold assignment for a split fraction.
    Split(SplitArgs),
    /// Print image, instance and per-category counts.
    Summarize(SummarizeArgs),
    /// Load fold-2 detector proposals into a campaign.
    ImportDetections(ImportArgs),
    /// Score detections against ground truth (AP at one IoU threshold).
    Evaluate(EvaluateArgs),
    /// Predict annotation operations and time for one split.
    Estimate(EstimateArgs),
    /// Workload curve over split fractions and its optimum.
    Sweep(SweepArgs),
    /// Run a simulated annotator, on a campaign or end to end.
    Simulate(SimulateArgs),
    /// Serve the campaign API and UI over HTTP.
    Serve(ServeArgs),
    /// Write campaign results or a workload curve.
    Export(ExportArgs),
}

#[derive(Debug, Args, Default)]
struct Settings {
    /// Campaign manifest (JSON).
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long)]
    t2: Option<f64>,
    #[arg(long)]
    iou_threshold: Option<f64>,
    #[arg(long)]
    score_threshold: Option<f64>,
    /// Match boxes regardless of category.
    #[arg(long)]
    class_agnostic: bool,
}

impl Settings {
    fn resolve(&self) -> Result<(Manifest, PathBuf)> {
        let (mut m, base) = match &self.manifest {
            Some(p) => (
                Manifest::read(p)?,
                p.parent().map(Path::to_path_buf).unwrap_or_default(),
            ),
            None => (Manifest::default(), PathBuf::new()),
        };
        for p in [&mut m.dataset, &mut m.fold1_labels, &mut m.detections].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(v) = self.t1 {
            m.timing.t1 = v;
        }
        if let Some(v) = self.t2 {
            m.timing.t2 = v;
        }
        if let Some(v) = self.iou_threshold {
            m.matching.iou_threshold = v;
        }
        if let Some(v) = self.score_threshold {
            m.matching.score_threshold = v;
        }
        if self.class_agnostic {
            m.matching.class_aware = false;
        }
        m.timing.validate()?;
        m.matching.validate()?;
        Ok((m, base))
    }
}

#[derive(Debug, Args)]
struct InitArgs {
    /// Campaign directory to create.
    #[arg(long)]
    out: PathBuf,
    /// COCO document listing the images.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Existing fold-1 labels (COCO); skips manual fold-1 annotation.
    #[arg(long)]
    fold1_labels: Option<PathBuf>,
    #[arg(long)]
    fraction: Option<f64>,
    /// Replace an existing campaign in `out`.
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DatasetFormat {
    Coco,
    Voc,
}

#[derive(Debug, Args)]
struct SummarizeArgs {
    /// COCO file or directory of VOC XML files.
    #[arg(long)]
    dataset: PathBuf,
    /// Defaults to voc for directories and coco otherwise.
    #[arg(long, value_enum)]
    format: Option<DatasetFormat>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ImportArgs {
    #[arg(long)]
    campaign: PathBuf,
    /// COCO results array.
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    score_threshold: Option<f64>,
    /// Ignore proposals for fold-1 images instead of rejecting the file.
    #[arg(long)]
    drop_fold1: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    det: PathBuf,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-category AP as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TableFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Boxes drawn from scratch in fold 1.
    #[arg(long)]
    initial: u64,
    #[arg(long, default_value_t = 0)]
    fold2_objects: u64,
    #[arg(long, default_value_t = 0.0)]
    fold2_detections: f64,
    /// Required unless fold 2 is empty.
    #[arg(long)]
    precision: Option<f64>,
    /// Required unless fold 2 is empty.
    #[arg(long)]
    recall: Option<f64>,
    #[arg(long, value_enum, default_value_t = TableFormat::Json)]
    format: TableFormat,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Operations,
    Time,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Operations => Objective::Operations,
            ObjectiveArg::Time => Objective::Time,
        }
    }
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Ground truth whose fold sizes drive the sweep.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Quality curve (JSON or CSV with fraction,precision,recall[,detections][,map]).
    #[arg(long, conflicts_with_all = ["kappa", "totals"])]
    quality: Option<PathBuf>,
    /// Synthetic quality p(f) = r(f) = 1 - exp(-f/kappa).
    #[arg(long, conflicts_with = "totals")]
    kappa: Option<f64>,
    /// Published totals (CSV: fraction,total_operations[,total_time_s]).
    #[arg(long)]
    totals: Option<PathBuf>,
    /// Comma-separated fractions; defaults to the standard schedule.
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Time)]
    objective: ObjectiveArg,
    /// Write the plan JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the curve as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Store the plan in a campaign directory for the service.
    #[arg(long)]
    campaign: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Ground truth the simulated annotator works towards.
    #[arg(long)]
    gt: PathBuf,
    /// Advance this campaign's open stage.
    #[arg(long, conflicts_with_all = ["det", "fraction"])]
    campaign: Option<PathBuf>,
    /// Proposals for an end-to-end run without a campaign directory.
    #[arg(long)]
    det: Option<PathBuf>,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long, default_value = "simulated")]
    session: String,
    /// Leave images pending instead of accepting them.
    #[arg(long)]
    no_accept: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    campaign: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Directory with the built UI bundle.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExportFormat {
    Coco,
    Voc,
    CsvCurve,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long, value_enum)]
    format: ExportFormat,
    /// File for coco and csv-curve, directory for voc.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    campaign: Option<PathBuf>,
    /// Plan JSON for csv-curve; defaults to the campaign's plan.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Export current working labels even if images are still pending.
    #[arg(long)]
    partial: bool,
}

/// Runs the CLI. Usage errors return 2, failures 1.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let sink: &mut dyn Write = if code == 0 { out } else { err };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Init(a) => cmd_init(a, out),
        Command::Split(a) => cmd_split(a, out),
        Command::Summarize(a) => {
            let format = a.format.unwrap_or(if a.dataset.is_dir() { DatasetFormat::Voc } else { DatasetFormat::Coco });
            let set = load_dataset(&a.dataset, format)?;
            emit(out, a.out.as_deref(), &pretty(&summarize(&set)))
        }
        Command::ImportDetections(a) => cmd_import(a, out),
        Command::Evaluate(a) => cmd_evaluate(a, out),
        Command::Estimate(a) => cmd_estimate(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Serve(a) => cmd_serve(a, out),
        Command::Export(a) => cmd_export(a, out),
    }
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("output serializes");
    b.push(b'\n');
    b
}

fn emit(out: &mut dyn Write, path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => write_file(p, bytes),
        None => out.write_all(bytes).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn load_dataset(path: &Path, format: DatasetFormat) -> Result<AnnotationSet> {
    match format {
        DatasetFormat::Coco => read_coco_ground_truth(path),
        DatasetFormat::Voc => parse_voc_directory(path),
    }
}

fn required(flag: Option<PathBuf>, manifest: Option<PathBuf>, what: &'static str) -> Result<PathBuf> {
    flag.or(manifest).ok_or(Error::Missing {
        op: what,
        needed: "--dataset or a manifest naming one",
    })
}

fn cmd_init(a: InitArgs, out: &mut dyn Write) -> Result<()> {
    let (mut m, _) = a.settings.resolve()?;
    if let Some(p) = a.dataset {
        m.dataset = Some(p);
    }
    if let Some(p) = a.fold1_labels {
        m.fold1_labels = Some(p);
    }
    if let Some(f) = a.fraction {
        m.split_fraction = f;
    }
    let dataset = required(None, m.dataset.clone(), "init")?;
    let store = CampaignStore::new(&a.out);
    if store.exists() && !a.force {
        return Err(Error::Validation(format!(
            "{} already holds a campaign (use --force to replace it)",
            a.out.display()
        )));
    }
    let set = read_coco_ground_truth(&dataset)?;
    let fold1 = match &m.fold1_labels {
        Some(p) => Fold1Labels::Prelabeled(read_coco_ground_truth(p)?),
        None => Fold1Labels::Manual,
    };
    let state = init_campaign(set.images.clone(), set.categories.clone(), m.split_fraction, fold1, &m.matching)?;
    if store.log_path().exists() {
        fs::remove_file(store.log_path()).map_err(|e| Error::io(store.log_path(), e))?;
    }
    store.save(&m, &state)?;
    emit(
        out,
        None,
        &pretty(&serde_json::json!({
            "campaign": a.out,
            "stage": state.stage(),
            "fold1_images": state.split().fold1_image_ids.len(),
            "fold2_images": state.split().fold2_image_ids.len(),
        })),
    )
}

fn cmd_split(a: SplitArgs, out: &mut dyn Write) -> Result<()> {
    let (m, _) = a.settings.resolve()?;
    let dataset = required(a.dataset, m.dataset, "split")?;
    let set = read_coco_ground_truth(&dataset)?;
    let sp = split_set(&set, a.fraction.unwrap_or(m.split_fraction))?;
    emit(out, a.out.as_deref(), &pretty(&sp))
}

fn cmd_import(a: ImportArgs, out: &mut dyn Write) -> Result<()> {
    let store = CampaignStore::new(&a.campaign);
    let (mut m, mut state) = store.load()?;
    if let Some(s) = a.score_threshold {
        m.matching.score_threshold = s;
        m.matching.validate()?;
    }
    let doc = read_file(&a.detections)?;
    let mut det = parse_coco_detections_for(&doc, &state.current_annotations())?;
    if a.drop_fold1 {
        let before = det.len();
        det.boxes.retain(|&id, _| state.fold_of(id) != Some(StageTag::Fold1));
        let dropped = before - det.len();
        if dropped > 0 {
            log::warn!("dropped {dropped} proposals on fold-1 images");
        }
    }
    state.import_proposals(&det, &m.matching)?;
    m.detections = Some(a.detections);
    store.save(&m, &state)?;
    let retained: usize = state
        .split()
        .fold2_image_ids
        .iter()
        .filter_map(|&id| state.working_set(id))
        .map(|w| w.live().count())
        .sum();
    emit(
        out,
        None,
        &pretty(&serde_json::json!({
            "stage": state.stage(),
            "proposals": det.len(),
            "retained": retained,
            "score_threshold": m.matching.score_threshold,
        })),
    )
}

fn cmd_evaluate(a: EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let (m, _) = a.settings.resolve()?;
    let gt = read_coco_ground_truth(&a.gt)?;
    let det = parse_coco_detections_for(&read_file(&a.det)?, &gt)?;
    let report = evaluate(&gt, &det, &m.matching)?;
    if let Some(p) = &a.csv {
        write_file(p, &report.to_csv())?;
    }
    emit(out, a.out.as_deref(), &report.to_json())
}

fn cmd_estimate(a: EstimateArgs, out: &mut dyn Write) -> Result<()> {
    let (m, _) = a.settings.resolve()?;
    let empty = a.fold2_objects == 0 && a.fold2_detections == 0.0;
    let need = |v: Option<f64>, name: &'static str| {
        v.or(empty.then_some(1.0)).ok_or(Error::Missing {
            op: "estimate",
            needed: name,
        })
    };
    let precision = need(a.precision, "--precision for a non-empty fold 2")?;
    let recall = need(a.recall, "--recall for a non-empty fold 2")?;
    let est = estimate(a.initial, a.fold2_objects, a.fold2_detections, precision, recall, &m.timing)?;
    let bytes = match a.format {
        TableFormat::Json => est.to_json(),
        TableFormat::Csv => est.to_csv(),
    };
    emit(out, a.out.as_deref(), &bytes)
}

fn cmd_sweep(a: SweepArgs, out: &mut dyn Write) -> Result<()> {
    let (m, _) = a.settings.resolve()?;
    let fractions = a.fractions.clone().unwrap_or_else(schedule);
    let curve = if let Some(totals) = &a.totals {
        WorkloadCurve::from_totals_csv(&read_file(totals)?)?
    } else {
        let dataset = required(a.dataset.clone(), m.dataset.clone(), "sweep")?;
        let set = read_coco_ground_truth(&dataset)?;
        let quality = match (&a.quality, a.kappa) {
            (Some(p), _) => {
                let bytes = read_file(p)?;
                if p.extension().is_some_and(|e| e == "csv") {
                    QualityCurve::from_csv(&bytes)?
                } else {
                    QualityCurve::from_json(&bytes)?
                }
            }
            (None, Some(k)) => QualityCurve::saturating(k, &fractions)?,
            (None, None) => {
                return Err(Error::Missing {
                    op: "sweep",
                    needed: "--quality, --kappa or --totals",
                })
            }
        };
        sweep_fractions(&set, &quality, &m.timing, &fractions)?
    };
    let plan = Plan::new(curve, a.objective.into())?;
    if let Some(p) = &a.csv {
        write_file(p, &plan.curve.to_csv())?;
    }
    if let Some(dir) = &a.campaign {
        write_file(&dir.join("plan.json"), &plan.to_json())?;
    }
    emit(out, a.out.as_deref(), &plan.to_json())
}

#[derive(Serialize)]
struct StageRun {
    stage: Stage,
    events: usize,
    additions: usize,
    removals: usize,
    accepted: usize,
}

fn cmd_simulate(a: SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let (m, _) = a.settings.resolve()?;
    let gt = read_coco_ground_truth(&a.gt)?;
    if let Some(dir) = &a.campaign {
        let store = CampaignStore::new(dir);
        let (manifest, mut state) = store.load()?;
        let start = state.log().iter().map(|e| e.ts_ms).max().unwrap_or(0);
        let mut clock = SimClock::new(a.session.clone(), start, manifest.timing);
        let stage = state.stage();
        let pending: Vec<u64> = state.pending_images();
        let (mut events, tag) = match stage {
            Stage::Fold1Annotation => (simulate_fold1(&gt, &pending, &mut clock), StageTag::Fold1),
            Stage::Fold2Correction => {
                let working = state
                    .working()
                    .iter()
                    .filter(|(id, _)| state.status(**id) == Some(ImageStatus::Pending))
                    .map(|(id, w)| (*id, w.clone()))
                    .collect();
                let gt2 = gt.subset(&pending);
                (simulate_annotator(&gt2, &working, &manifest.matching, &mut clock)?, StageTag::Fold2)
            }
            _ => {
                return Err(Error::WrongStage {
                    stage: stage.to_string(),
                    detail: "nothing to annotate; import proposals or export results".into(),
                })
            }
        };
        let count = |k| events.iter().filter(|e| e.kind() == k).count();
        let additions = count(crate::events::OperationKind::Add);
        let removals = count(crate::events::OperationKind::Remove);
        if !a.no_accept {
            events.extend(accept_events(&pending, tag, &mut clock));
        }
        state.apply_operations(&events)?;
        store.append(&events)?;
        store.save(&manifest, &state)?;
        let summary = StageRun {
            stage: state.stage(),
            events: events.len(),
            additions,
            removals,
            accepted: if a.no_accept { 0 } else { pending.len() },
        };
        return emit(out, a.out.as_deref(), &pretty(&summary));
    }
    let det_path = a.det.ok_or(Error::Missing {
        op: "simulate",
        needed: "--campaign or --det",
    })?;
    let det = parse_coco_detections_for(&read_file(&det_path)?, &gt)?;
    let fraction = a.fraction.unwrap_or(m.split_fraction);
    let outcome = simulate_campaign(&gt, &det, fraction, &m.matching, &m.timing)?;
    let total = gt.instance_count() as u64;
    let savings = if total > 0 {
        Some(savings_vs_manual(&outcome.simulated, total, &m.timing)?)
    } else {
        None
    };
    let summary = serde_json::json!({
        "fraction": fraction,
        "fold1_images": outcome.state.split().fold1_image_ids.len(),
        "fold2_images": outcome.state.split().fold2_image_ids.len(),
        "fold2_match": outcome.report,
        "predicted": outcome.predicted,
        "simulated": outcome.simulated,
        "manual_time_s": m.timing.manual_time(total),
        "savings_vs_manual": savings,
    });
    emit(out, a.out.as_deref(), &pretty(&summary))
}

fn cmd_serve(a: ServeArgs, out: &mut dyn Write) -> Result<()> {
    let mut svc = Service::open(CampaignStore::new(&a.campaign))?;
    if let Some(ui) = a.ui_dir {
        svc = svc.with_ui_dir(ui);
    }
    let svc = Arc::new(svc);
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("<tokio runtime>", e))?;
    rt.block_on(serve(svc, a.addr, |b| {
        let _ = writeln!(out, "serving on http://{}", b.addr);
        let _ = out.flush();
    }))
}

fn cmd_export(a: ExportArgs, out: &mut dyn Write) -> Result<()> {
    match a.format {
        ExportFormat::CsvCurve => {
            let plan_path = match (&a.plan, &a.campaign) {
                (Some(p), _) => p.clone(),
                (None, Some(dir)) => dir.join("plan.json"),
                (None, None) => {
                    return Err(Error::Missing {
                        op: "export csv-curve",
                        needed: "--plan or --campaign",
                    })
                }
            };
            let plan = Plan::from_json(&read_file(&plan_path)?)?;
            write_file(&a.out, &plan.curve.to_csv())
        }
        ExportFormat::Coco | ExportFormat::Voc => {
            let dir = a.campaign.ok_or(Error::Missing {
                op: "export",
                needed: "--campaign",
            })?;
            let store = CampaignStore::new(&dir);
            let (m, mut state) = store.load()?;
            let set = if a.partial {
                state.current_annotations()
            } else {
                let set = state.finalize()?;
                store.save(&m, &state)?;
                set
            };
            match a.format {
                ExportFormat::Coco => write_file(&a.out, &write_coco_ground_truth(&set))?,
                _ => {
                    let files = write_voc_directory(&set, &a.out)?;
                    writeln!(out, "wrote {} files to {}", files.len(), a.out.display())
                        .map_err(|e| Error::io("<stdout>", e))?;
                }
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(args.iter().copied(), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn estimate_manual_baseline() {
        let (code, out, _) = run_str(&["twofold", "estimate", "--initial", "4595", "--fold2-objects", "0", "--fold2-detections", "0"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["total_time_s"].as_f64(), Some(46639.25));
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let (code, _, err) = run_str(&["twofold", "estimate", "--initial", "1", "--bogus"]);
        assert_eq!(code, 2);
        assert!(err.contains("--bogus"));
    }

    #[test]
    fn estimate_needs_rates_for_fold2() {
        let (code, _, err) = run_str(&["twofold", "estimate", "--initial", "1", "--fold2-objects", "5"]);
        assert_eq!(code, 1);
        assert!(err.contains("--precision"));
    }

    #[test]
    fn flags_override_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mp = dir.path().join("m.json");
        fs::write(&mp, br#"{"timing":{"t1":20.0,"t2":3.0}}"#).unwrap();
        let mp = mp.to_str().unwrap();
        let (_, out, _) = run_str(&["twofold", "estimate", "--initial", "2", "--manifest", mp]);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["total_time_s"].as_f64(), Some(40.0));
        let (_, out, _) = run_str(&["twofold", "estimate", "--initial", "2", "--manifest", mp, "--t1", "1.5"]);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["total_time_s"].as_f64(), Some(3.0));
    }
}
