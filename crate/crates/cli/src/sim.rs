use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::Args;
use serde_json::json;
use stepnav_core::clock::{Clock, SystemClock};
use stepnav_core::model::parse_document;
use stepnav_core::nav::{export_log, IndexedDocument, LogicalTime, DEFAULT_ARM_WINDOW_MS};
use stepnav_core::recognizer::{
    interactive_show, parse_script, plan_submissions, DetectionSink, RecognizerConfig, SinkError, SubmissionReport,
    DEFAULT_MAX_RANGE_CM, DEFAULT_REPEAT_HZ,
};
use stepnav_core::relay::SubmitOutcome;
use stepnav_core::sim::batch::{parse_batch, parse_profile, run_batch};
use stepnav_core::sim::{
    classify_jumps, metrics_csv, simulate, ConfusionMatrix, Metrics, SimConfig, SimError, SimOutcome, SimStatus,
    StrategyKind, StrategyProfile,
};
use stepnav_server::HttpRelaySink;

use crate::error::{read, write, CliError};

#[derive(Debug, Args)]
pub struct RecognizerArgs {
    /// Relay to submit to, as host:port or URL.
    #[arg(long, env = "STEPNAV_RELAY_ADDR")]
    relay_addr: Option<String>,
    /// Show script: at_ms, tag_id, distance_cm, angle_ok per tab-separated line.
    #[arg(long, conflicts_with = "interactive")]
    script: Option<PathBuf>,
    /// Read one tag id per stdin line and submit it immediately.
    #[arg(long)]
    interactive: bool,
    /// Print the planned detections without contacting a relay.
    #[arg(long, requires = "script")]
    dry_run: bool,
    #[arg(long, env = "STEPNAV_DEVICE_ID", default_value = "recognizer-1")]
    device_id: String,
    #[arg(long, env = "STEPNAV_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_RANGE_CM)]
    max_range_cm: f64,
    #[arg(long, default_value_t = 0.0)]
    miss_probability: f64,
    #[arg(long, default_value_t = DEFAULT_REPEAT_HZ)]
    repeat_hz: f64,
    /// Added to script times; defaults to the current wall-clock time so
    /// detections line up with live sessions.
    #[arg(long)]
    base_ms: Option<LogicalTime>,
    /// Wait until each detection is due instead of sending the script at once.
    #[arg(long)]
    realtime: bool,
}

/// Offsets script time onto the relay's timebase.
struct Shifted<S> {
    inner: S,
    base: LogicalTime,
}

impl<S: DetectionSink> DetectionSink for Shifted<S> {
    fn submit(&mut self, device_id: &str, tag_id: &str, at: LogicalTime) -> Result<SubmitOutcome, SinkError> {
        self.inner.submit(device_id, tag_id, self.base + at)
    }
}

pub fn recognizer(args: RecognizerArgs) -> Result<(), CliError> {
    let config = RecognizerConfig {
        device_id: args.device_id.clone(),
        max_range_cm: args.max_range_cm,
        miss_probability: args.miss_probability,
        repeat_hz: args.repeat_hz,
        seed: args.seed,
        ..RecognizerConfig::default()
    };
    config.check().map_err(|e| CliError::Usage(e.to_string()))?;
    if args.interactive {
        let addr = args.relay_addr.as_deref().ok_or_else(|| CliError::Usage("--interactive needs --relay-addr".into()))?;
        return interactive(&config, HttpRelaySink::new(addr));
    }
    let script_path = args
        .script
        .as_ref()
        .ok_or_else(|| CliError::Usage("either --script or --interactive is required".into()))?;
    let script = parse_script(&read(script_path)?).map_err(CliError::domain)?;
    let (plan, mut report) = plan_submissions(&script, &config).map_err(CliError::domain)?;
    if args.dry_run {
        println!("detected_at\ttag_id");
        for p in &plan {
            println!("{}\t{}", p.detected_at, p.tag_id);
        }
        print_report(&report);
        return Ok(());
    }
    let addr = args.relay_addr.as_deref().ok_or_else(|| CliError::Usage("--relay-addr is required".into()))?;
    let base = args.base_ms.unwrap_or_else(|| SystemClock.now_ms());
    let mut sink = Shifted { inner: HttpRelaySink::new(addr), base };
    let started = Instant::now();
    let first = plan.first().map_or(0, |p| p.detected_at);
    println!("detected_at\ttag_id\toutcome");
    for p in &plan {
        if args.realtime {
            let due = Duration::from_millis(p.detected_at - first);
            std::thread::sleep(due.saturating_sub(started.elapsed()));
        }
        let outcome = sink.submit(&config.device_id, &p.tag_id, p.detected_at).map_err(CliError::domain)?;
        match outcome {
            SubmitOutcome::Stored { .. } => report.stored += 1,
            SubmitOutcome::Deduplicated { .. } => report.deduplicated += 1,
        }
        println!("{}\t{}\t{}", base + p.detected_at, p.tag_id, serde_json::to_string(&outcome).expect("serializes"));
    }
    print_report(&report);
    Ok(())
}

fn print_report(report: &SubmissionReport) {
    eprintln!("{}", serde_json::to_string(report).expect("report serializes"));
}

fn interactive(config: &RecognizerConfig, mut sink: HttpRelaySink) -> Result<(), CliError> {
    eprintln!("type a tag id per line; end with EOF");
    let stdin = std::io::stdin();
    for line in stdin.lock().lines() {
        let line = line.map_err(CliError::domain)?;
        let tag = line.trim();
        if tag.is_empty() {
            continue;
        }
        let at = SystemClock.now_ms();
        match interactive_show(tag, config, &mut sink, at) {
            Ok(outcome) => println!("{at}\t{tag}\t{}", serde_json::to_string(&outcome).expect("serializes")),
            Err(e) => eprintln!("error: {e}"),
        }
        let _ = std::io::stdout().flush();
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct AssemblerArgs {
    #[arg(long, env = "STEPNAV_DOC", required_unless_present = "batch")]
    doc: Option<PathBuf>,
    /// Strategy name (linear_baseline, selective_skipping, debugging,
    /// block_scanning, mixed) or a TOML profile file.
    #[arg(long, env = "STEPNAV_PROFILE", default_value = "linear_baseline")]
    profile: String,
    #[arg(long, env = "STEPNAV_SEED")]
    seed: Option<u64>,
    /// Command budget; defaults to ten times the step count.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, env = "STEPNAV_ARM_WINDOW_MS", default_value_t = DEFAULT_ARM_WINDOW_MS)]
    arm_window_ms: u64,
    /// Write the session log here.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Also label the jumps and compare against the simulator's ground truth.
    #[arg(long)]
    classify: bool,
    /// TOML file listing runs; replaces --doc/--profile/--seed.
    #[arg(long, conflicts_with_all = ["doc", "log"])]
    batch: Option<PathBuf>,
    /// Where batch runs write their logs and metrics.csv.
    #[arg(long, requires = "batch")]
    out_dir: Option<PathBuf>,
}

fn load_profile(name: &str, seed: Option<u64>) -> Result<StrategyProfile, CliError> {
    let mut profile = match name.parse::<StrategyKind>() {
        Ok(kind) => StrategyProfile::new(kind, 0),
        Err(_) if Path::new(name).is_file() => {
            let text = read(Path::new(name))?;
            parse_profile(&text).map_err(CliError::domain)?
        }
        Err(e) => return Err(CliError::Usage(e)),
    };
    if let Some(seed) = seed {
        profile.seed = seed;
    }
    profile.check().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(profile)
}

pub fn assembler(args: AssemblerArgs) -> Result<(), CliError> {
    let config = SimConfig { budget: args.budget, arm_window_ms: args.arm_window_ms, ..SimConfig::default() };
    if let Some(batch) = &args.batch {
        return run_batch_file(batch, args.out_dir.as_deref(), &config, args.classify);
    }
    let profile = load_profile(&args.profile, args.seed)?;
    let doc_path = args.doc.as_ref().expect("clap requires --doc without --batch");
    let doc = parse_document(&read(doc_path)?)
        .and_then(IndexedDocument::new)
        .map_err(CliError::domain)?;
    let doc = Arc::new(doc);
    let outcome = match simulate(doc.clone(), &profile, &config) {
        Ok(o) => o,
        Err(SimError::BudgetExhausted { budget, partial }) => {
            eprintln!("warning: command budget of {budget} exhausted before completion");
            *partial
        }
        Err(e) => return Err(CliError::domain(e)),
    };
    if let Some(path) = &args.log {
        write(path, &export_log(&outcome.log))?;
    }
    print!("{}", metrics_csv(&[outcome.metrics]));
    if args.classify {
        print_classification(&[(&outcome, doc.as_ref())])?;
    }
    Ok(())
}

fn print_classification(runs: &[(&SimOutcome, &IndexedDocument)]) -> Result<(), CliError> {
    let mut matrix = ConfusionMatrix::default();
    println!();
    println!("seq\tfrom\tto\ttruth\tpredicted");
    for (outcome, doc) in runs {
        let predicted = classify_jumps(&outcome.log, doc.doc()).map_err(CliError::domain)?;
        for t in &outcome.ground_truth {
            let p = predicted.iter().find(|p| p.seq == t.seq).map_or("-".to_string(), |p| p.label.to_string());
            println!("{}\t{}\t{}\t{}\t{p}", t.seq, t.from_step, t.to_step, t.label);
        }
        matrix.merge(&ConfusionMatrix::build(&outcome.ground_truth, &predicted));
    }
    println!();
    print!("{}", matrix.to_table());
    println!("accuracy\t{}/{}", matrix.correct(), matrix.total());
    Ok(())
}

fn run_batch_file(path: &Path, out_dir: Option<&Path>, config: &SimConfig, classify: bool) -> Result<(), CliError> {
    let batch = parse_batch(&read(path)?).map_err(CliError::domain)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let results = run_batch(&batch, base, config).map_err(CliError::domain)?;
    let mut table = String::from("run,document,profile,seed,status,");
    table.push_str(Metrics::CSV_HEADER);
    table.push('\n');
    for (i, r) in results.iter().enumerate() {
        let status = match r.outcome.status {
            SimStatus::Completed => "completed",
            SimStatus::BudgetExhausted => "budget_exhausted",
        };
        let row = metrics_csv(&[r.metrics()]);
        let values = row.lines().nth(1).unwrap_or_default();
        table.push_str(&format!(
            "{i},{},{},{},{status},{values}\n",
            r.document.display(),
            r.profile.kind,
            r.profile.seed
        ));
    }
    print!("{table}");
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
        for (i, r) in results.iter().enumerate() {
            let name = format!("run-{i:03}-{}-{}.jsonl", r.profile.kind, r.profile.seed);
            write(&dir.join(name), &export_log(&r.outcome.log))?;
        }
        write(&dir.join("metrics.csv"), &table)?;
        let summary = json!({ "runs": results.len(), "out_dir": dir.display().to_string() });
        eprintln!("{summary}");
    }
    if classify {
        let mut docs = Vec::new();
        for r in &results {
            let text = read(&base.join(&r.document))?;
            docs.push(parse_document(&text).and_then(IndexedDocument::new).map_err(CliError::domain)?);
        }
        let runs: Vec<(&SimOutcome, &IndexedDocument)> = results.iter().map(|r| &r.outcome).zip(docs.iter()).collect();
        print_classification(&runs)?;
    }
    Ok(())
}
