use clap::Args;
use stepnav_core::index::{build_block_index, complexity_metrics, ComplexityReport};
use stepnav_core::model::{parse_document, parse_unchecked};
use stepnav_core::validate::{validate as lint, Severity};

use crate::error::{read, CliError};
use crate::DocArg;

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    doc: DocArg,
    /// Print the report as JSON instead of TSV.
    #[arg(long)]
    json: bool,
}

pub fn validate(args: ValidateArgs) -> Result<(), CliError> {
    let text = read(args.doc.get()?)?;
    let doc = parse_unchecked(&text).map_err(CliError::domain)?;
    let report = lint(&doc);
    let errors = report.violations.iter().filter(|v| v.severity == Severity::Error).count();
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        match report.len() {
            0 => println!("0 violations"),
            n => println!("{n} violations ({errors} errors, {} warnings)", n - errors),
        }
        print!("{}", report.to_tsv());
    }
    if report.has_errors() {
        return Err(CliError::Domain(format!("document has {errors} errors")));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[command(flatten)]
    doc: DocArg,
    /// Only report complexity for this sub-part.
    #[arg(long)]
    subpart: Option<String>,
}

pub fn index(args: IndexArgs) -> Result<(), CliError> {
    let doc = parse_document(&read(args.doc.get()?)?).map_err(CliError::domain)?;
    let index = build_block_index(&doc);
    println!("tag\tsteps");
    for (tag, steps) in index.iter() {
        let steps: Vec<String> = steps.iter().map(u32::to_string).collect();
        println!("{tag}\t{}", steps.join(","));
    }
    println!();
    println!("occurrences\ttags");
    for (len, count) in index.length_histogram() {
        println!("{len}\t{count}");
    }
    println!();
    println!("scope\tblocks\tsteps\tasymmetric");
    let row = |scope: &str, r: ComplexityReport| {
        println!("{scope}\t{}\t{}\t{}", r.block_count, r.step_count, r.asymmetric_count)
    };
    match &args.subpart {
        Some(id) => row(id, complexity_metrics(&doc, Some(id)).map_err(CliError::domain)?),
        None => {
            row("document", complexity_metrics(&doc, None).expect("whole document is a valid scope"));
            for sp in &doc.subparts {
                row(&sp.id, complexity_metrics(&doc, Some(&sp.id)).expect("declared sub-part"));
            }
        }
    }
    Ok(())
}
