use std::sync::Arc;

use thiserror::Error;

use super::{Command, IndexedDocument, NavConfig, NavState, SessionLogEntry};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("log does not match document at seq {seq}: {reason}")]
    LogDocMismatch { seq: u64, reason: String },
}

fn mismatch(seq: u64, reason: impl Into<String>) -> ReplayError {
    ReplayError::LogDocMismatch {
        seq,
        reason: reason.into(),
    }
}

/// Rebuild a session by re-applying every logged command and checking that
/// each re-derived entry equals the recorded one.
pub fn replay(doc: Arc<IndexedDocument>, log: &[SessionLogEntry]) -> Result<NavState, ReplayError> {
    let Some((first, rest)) = log.split_first() else {
        return NavState::create("replay", doc, NavConfig::default(), None, 0)
            .map_err(|e| mismatch(0, e.to_string()));
    };
    let Command::Start {
        trigger_mode,
        arm_window_ms,
    } = first.command
    else {
        return Err(mismatch(first.seq, "log must begin with a start entry"));
    };
    let config = NavConfig {
        trigger_mode,
        arm_window_ms,
    };
    let mut state = NavState::create("replay", doc, config, None, first.at)
        .map_err(|e| mismatch(first.seq, e.to_string()))?;
    if state.last_entry() != first {
        return Err(mismatch(first.seq, "start entry differs"));
    }
    for recorded in rest {
        let expected_seq = state.log().len() as u64 + 1;
        if recorded.seq != expected_seq {
            return Err(mismatch(
                recorded.seq,
                format!("expected seq {expected_seq}"),
            ));
        }
        let derived = state
            .apply(&recorded.command, recorded.at)
            .map_err(|e| mismatch(recorded.seq, e.to_string()))?;
        if derived != recorded {
            return Err(mismatch(
                recorded.seq,
                format!(
                    "{} from step {} gives step {} ({}, note {:?}), log says step {} ({}, note {:?})",
                    recorded.command.name(),
                    derived.from_step,
                    derived.to_step,
                    derived.classification,
                    derived.note,
                    recorded.to_step,
                    recorded.classification,
                    recorded.note,
                ),
            ));
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::TagDetection;
    use crate::model::TagMode;
    use crate::nav::tests::linear_doc;
    use crate::nav::{Direction, TriggerMode};

    #[test]
    fn empty_log_gives_fresh_state() {
        let s = replay(linear_doc(4, TagMode::Strict, &[]), &[]).unwrap();
        assert_eq!(s.current_step(), 1);
        assert_eq!(s.log().len(), 1);
    }

    #[test]
    fn live_and_replayed_states_agree() {
        let doc = linear_doc(20, TagMode::Strict, &[]);
        let mut live = NavState::create(
            "live",
            doc.clone(),
            NavConfig {
                trigger_mode: TriggerMode::VoiceArmed,
                arm_window_ms: 300,
            },
            Some(7),
            5,
        )
        .unwrap();
        live.apply_linear(Direction::Forward, 10);
        live.arm_this_one(20).unwrap();
        live.on_detection(&TagDetection::local("d", "B15", 100), 110);
        live.arm_this_one(200).unwrap();
        live.on_detection(&TagDetection::local("d", "B3", 900), 900);
        live.apply_linear(Direction::Backward, 1000);
        live.overview(1100);
        let replayed = replay(doc, live.log()).unwrap();
        assert_eq!(replayed.current_step(), live.current_step());
        assert_eq!(replayed.return_anchor(), live.return_anchor());
        assert_eq!(replayed.visited(), live.visited());
        assert_eq!(replayed.log(), live.log());
    }

    #[test]
    fn tampered_log_is_rejected() {
        let doc = linear_doc(5, TagMode::Strict, &[]);
        let mut live = NavState::create("x", doc.clone(), NavConfig::default(), None, 0).unwrap();
        live.apply_linear(Direction::Forward, 1);
        live.apply_linear(Direction::Forward, 2);
        let mut log = live.log().to_vec();
        log[2].to_step = 5;
        assert_eq!(
            replay(doc.clone(), &log).unwrap_err(),
            ReplayError::LogDocMismatch {
                seq: 3,
                reason: "next from step 2 gives step 3 (linear, note None), log says step 5 (linear, note None)".into()
            }
        );
        let mut log = live.log().to_vec();
        log.remove(1);
        assert!(matches!(
            replay(doc.clone(), &log),
            Err(ReplayError::LogDocMismatch { seq: 3, .. })
        ));
        assert!(replay(doc, &live.log()[1..]).is_err());
    }
}
