use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::InstructionDocument;
use crate::nav::{Classification, Command, SessionLogEntry};

/// Command counts for one session. Counts only include entries that did
/// something: a `Next` at the last step is a noop, not a `next_count`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub next_count: u32,
    pub previous_count: u32,
    /// Jumps triggered by showing a block.
    pub this_one_count: u32,
    pub going_back_count: u32,
    pub overview_count: u32,
    pub noop_count: u32,
    pub total_linear: u32,
    pub total_nonlinear: u32,
    pub steps_visited: u32,
    pub completed: bool,
}

impl Metrics {
    pub const CSV_HEADER: &'static str = "next_count,previous_count,this_one_count,going_back_count,overview_count,noop_count,total_linear,total_nonlinear,steps_visited,completed";
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed log at seq {seq}: {reason}")]
pub struct MalformedLog {
    pub seq: u64,
    pub reason: String,
}

fn malformed(seq: u64, reason: impl Into<String>) -> MalformedLog {
    MalformedLog {
        seq,
        reason: reason.into(),
    }
}

fn check_entry(entry: &SessionLogEntry, expected_seq: u64, prev_to: Option<u32>) -> Result<(), MalformedLog> {
    let seq = entry.seq;
    if seq != expected_seq {
        return Err(malformed(seq, format!("expected seq {expected_seq}")));
    }
    if entry.from_step == 0 || entry.to_step == 0 {
        return Err(malformed(seq, "step indices start at 1"));
    }
    if let Some(prev) = prev_to {
        if entry.from_step != prev {
            return Err(malformed(seq, format!("from_step {} does not continue from step {prev}", entry.from_step)));
        }
    }
    let moved = entry.from_step != entry.to_step;
    let ok = match entry.classification {
        Classification::Linear => moved && matches!(entry.command, Command::Next | Command::Previous),
        Classification::Nonlinear => {
            moved && matches!(entry.command, Command::TagDetected { .. } | Command::GoingBack)
        }
        Classification::Meta => {
            !moved && matches!(entry.command, Command::Start { .. } | Command::ThisOne | Command::Overview)
        }
        Classification::Noop => !moved,
    };
    if !ok {
        return Err(malformed(
            seq,
            format!("{} cannot be classified {}", entry.command.name(), entry.classification),
        ));
    }
    Ok(())
}

/// Count commands over a log. `completed` needs the document (every
/// assembly step visited); without one it is `false`.
pub fn compute_metrics(
    log: &[SessionLogEntry],
    doc: Option<&InstructionDocument>,
) -> Result<Metrics, MalformedLog> {
    let mut m = Metrics::default();
    let mut visited = BTreeSet::new();
    let mut prev_to = None;
    for (i, entry) in log.iter().enumerate() {
        check_entry(entry, i as u64 + 1, prev_to)?;
        if i == 0 {
            visited.insert(entry.from_step);
        }
        visited.insert(entry.to_step);
        prev_to = Some(entry.to_step);
        match (entry.classification, &entry.command) {
            (Classification::Linear, Command::Next) => m.next_count += 1,
            (Classification::Linear, Command::Previous) => m.previous_count += 1,
            (Classification::Nonlinear, Command::TagDetected { .. }) => m.this_one_count += 1,
            (Classification::Nonlinear, Command::GoingBack) => m.going_back_count += 1,
            (Classification::Meta, Command::Overview) => m.overview_count += 1,
            (Classification::Noop, _) => m.noop_count += 1,
            _ => {}
        }
    }
    if let Some(doc) = doc {
        if let Some(&max) = visited.iter().next_back() {
            if max > doc.total_steps() {
                return Err(malformed(0, format!("step {max} beyond document end {}", doc.total_steps())));
            }
        }
        m.completed = !log.is_empty() && doc.assembly_steps().all(|s| visited.contains(&s.index));
    }
    m.total_linear = m.next_count + m.previous_count;
    m.total_nonlinear = m.this_one_count + m.going_back_count;
    m.steps_visited = visited.len() as u32;
    Ok(m)
}

/// Comma-separated table, one row per run, columns named after the
/// [`Metrics`] fields.
pub fn metrics_csv(rows: &[Metrics]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(Metrics::CSV_HEADER.split(',')).expect("in-memory write");
    }
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nav::TriggerMode;

    fn entry(seq: u64, command: Command, from: u32, to: u32, class: Classification, note: Option<&str>) -> SessionLogEntry {
        SessionLogEntry {
            seq,
            at: seq * 10,
            command,
            from_step: from,
            to_step: to,
            classification: class,
            note: note.map(str::to_string),
        }
    }

    fn start() -> SessionLogEntry {
        entry(
            1,
            Command::Start { trigger_mode: TriggerMode::VoiceArmed, arm_window_ms: 5000 },
            1,
            1,
            Classification::Meta,
            Some("session_start"),
        )
    }

    #[test]
    fn empty_log_is_all_zero() {
        assert_eq!(compute_metrics(&[], None).unwrap(), Metrics::default());
    }

    #[test]
    fn boundary_noops_only_count_as_noops() {
        let log = vec![
            start(),
            entry(2, Command::Previous, 1, 1, Classification::Noop, Some("boundary")),
            entry(3, Command::Next, 1, 2, Classification::Linear, None),
        ];
        let m = compute_metrics(&log, None).unwrap();
        assert_eq!((m.noop_count, m.previous_count, m.next_count), (1, 0, 1));
        assert_eq!(m.steps_visited, 2);
    }

    #[test]
    fn malformed_logs() {
        let mut bad = vec![start(), entry(3, Command::Next, 1, 2, Classification::Linear, None)];
        assert_eq!(compute_metrics(&bad, None).unwrap_err().seq, 3);
        bad[1].seq = 2;
        bad[1].classification = Classification::Meta;
        assert!(compute_metrics(&bad, None).is_err());
        bad[1].classification = Classification::Linear;
        bad[1].from_step = 4;
        assert!(compute_metrics(&bad, None).is_err());
    }

    #[test]
    fn csv_header_matches_field_names() {
        let text = metrics_csv(&[Metrics::default()]);
        assert_eq!(text.lines().next().unwrap(), Metrics::CSV_HEADER);
        assert_eq!(text.lines().nth(1).unwrap(), "0,0,0,0,0,0,0,0,0,false");
        assert_eq!(metrics_csv(&[]).trim_end(), Metrics::CSV_HEADER);
    }
}
