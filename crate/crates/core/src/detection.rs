use serde::{Deserialize, Serialize};

use crate::nav::LogicalTime;

/// One sensed block-tag event. `seq` is assigned by the relay on arrival;
/// detections that never went through a relay carry `seq = 0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TagDetection {
    pub device_id: String,
    pub tag_id: String,
    pub detected_at: LogicalTime,
    pub seq: u64,
}

impl TagDetection {
    pub fn local(device_id: &str, tag_id: &str, detected_at: LogicalTime) -> Self {
        TagDetection {
            device_id: device_id.to_string(),
            tag_id: tag_id.to_string(),
            detected_at,
            seq: 0,
        }
    }
}
