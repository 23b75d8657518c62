use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, ValueEnum};
use stepnav_core::model::parse_document;
use stepnav_core::nav::{parse_log, replay as rebuild, IndexedDocument, SessionLogEntry};
use stepnav_core::sim::{classify_jumps, compute_metrics, metrics_csv};

use crate::error::{read, CliError};

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long, env = "STEPNAV_DOC")]
    doc: PathBuf,
    #[arg(long, env = "STEPNAV_LOG")]
    log: PathBuf,
}

fn load_log(path: &PathBuf) -> Result<Vec<SessionLogEntry>, CliError> {
    parse_log(&read(path)?).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn load_doc(path: &PathBuf) -> Result<IndexedDocument, CliError> {
    parse_document(&read(path)?)
        .and_then(IndexedDocument::new)
        .map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

pub fn replay(args: ReplayArgs) -> Result<(), CliError> {
    let doc = Arc::new(load_doc(&args.doc)?);
    let log = load_log(&args.log)?;
    let state = rebuild(doc, &log).map_err(CliError::domain)?;
    println!("entries\t{}", log.len());
    println!("current_step\t{}", state.current_step());
    println!("return_anchor\t{}", state.return_anchor().map_or("-".into(), |a| a.to_string()));
    let visited: Vec<String> = state.visited().iter().map(u32::to_string).collect();
    println!("visited\t{}", visited.join(","));
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(value_name = "LOG", conflicts_with = "log")]
    path: Option<PathBuf>,
    #[arg(long, env = "STEPNAV_LOG", value_name = "LOG")]
    log: Option<PathBuf>,
    /// Needed to decide completion and to label jumps.
    #[arg(long, env = "STEPNAV_DOC")]
    doc: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// List each jump with its strategy label.
    #[arg(long, requires = "doc")]
    classify: bool,
}

pub fn metrics(args: MetricsArgs) -> Result<(), CliError> {
    let path = args
        .path
        .as_ref()
        .or(args.log.as_ref())
        .ok_or_else(|| CliError::Usage("a log is required (LOG or --log)".into()))?;
    let log = load_log(path)?;
    let doc = args.doc.as_ref().map(load_doc).transpose()?;
    let m = compute_metrics(&log, doc.as_ref().map(|d| d.doc())).map_err(CliError::domain)?;
    match args.format {
        Format::Csv => print!("{}", metrics_csv(&[m])),
        Format::Json => println!("{}", serde_json::to_string_pretty(&m).expect("metrics serialize")),
        Format::Table => {
            let value = serde_json::to_value(m).expect("metrics serialize");
            let csv = metrics_csv(&[m]);
            let header = csv.lines().next().unwrap_or_default();
            for name in header.split(',') {
                println!("{name}\t{}", value[name]);
            }
        }
    }
    if args.classify {
        let doc = doc.expect("clap requires --doc with --classify");
        println!();
        println!("seq\tfrom\tto\tlabel");
        for j in classify_jumps(&log, doc.doc()).map_err(CliError::domain)? {
            println!("{}\t{}\t{}\t{}", j.seq, j.from_step, j.to_step, j.label);
        }
    }
    Ok(())
}
