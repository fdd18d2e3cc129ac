//! Newline-delimited JSON messages exchanged with live clients.
//!
//! Client to server: `{"type":"join","biker":1}`, `{"type":"leave","biker":1}`,
//! `{"type":"pedal","biker":1}`. Server to client: `state` snapshots at
//! 20 Hz and `error` replies to malformed or rejected messages.

use serde::{Deserialize, Serialize};

use super::telemetry::TelemetryRecord;
use crate::scheduler::LEAF_COUNT;
use crate::sync::CadenceEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClientMessage {
    Join { biker: u32 },
    Leave { biker: u32 },
    Pedal { biker: u32 },
}

impl ClientMessage {
    pub fn parse(line: &str) -> Result<Self, String> {
        serde_json::from_str(line).map_err(|e| format!("malformed message: {e}"))
    }

    pub fn biker(&self) -> u32 {
        match *self {
            ClientMessage::Join { biker }
            | ClientMessage::Leave { biker }
            | ClientMessage::Pedal { biker } => biker,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncSnapshot {
    pub status: String,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSnapshot {
    pub supply: f64,
    pub demand: f64,
    pub scale: f64,
    pub reservoir: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BikerSnapshot {
    pub id: u32,
    pub rpm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub mode: String,
    pub overlay: Option<String>,
    pub leaves: [f64; LEAF_COUNT],
    pub kinds: [String; LEAF_COUNT],
    pub sync: SyncSnapshot,
    pub power: PowerSnapshot,
    pub bikers: Vec<BikerSnapshot>,
}

impl Snapshot {
    pub fn new(record: &TelemetryRecord, cadences: &[CadenceEstimate]) -> Self {
        Self {
            t: record.time_s,
            mode: record.mode.to_string(),
            overlay: record.overlay.map(|o| o.as_str().to_owned()),
            leaves: record.deflection,
            kinds: record.kinds.map(|k| k.to_string()),
            sync: SyncSnapshot {
                status: record.sync_status.to_string(),
                spread: record.spread_frac,
            },
            power: PowerSnapshot {
                supply: record.supply_w,
                demand: record.demand_w,
                scale: record.brownout_scale,
                reservoir: record.reservoir_wh,
            },
            bikers: cadences
                .iter()
                .map(|c| BikerSnapshot {
                    id: c.biker_id.0,
                    rpm: c.rpm,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    State(Snapshot),
    Error { message: String },
}

impl ServerMessage {
    /// One JSON line, newline included.
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("server messages always serialize");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::GestureKind;
    use crate::harness::telemetry::OverlayKind;
    use crate::scheduler::Mode;
    use crate::sync::{BikerId, SyncStatus};

    #[test]
    fn client_messages_parse() {
        assert_eq!(
            ClientMessage::parse(r#"{"type":"join","biker":2}"#).unwrap(),
            ClientMessage::Join { biker: 2 }
        );
        assert_eq!(
            ClientMessage::parse(r#"{"biker":7,"type":"pedal"}"#).unwrap(),
            ClientMessage::Pedal { biker: 7 }
        );
        assert_eq!(
            ClientMessage::parse(r#"{"type":"leave","biker":0}"#).unwrap(),
            ClientMessage::Leave { biker: 0 }
        );
    }

    #[test]
    fn malformed_client_messages_rejected() {
        for bad in [
            "",
            "pedal",
            r#"{"type":"pedal"}"#,
            r#"{"type":"jump","biker":1}"#,
            r#"{"type":"pedal","biker":-1}"#,
            r#"{"type":"pedal","biker":"one"}"#,
            r#"{"type":"pedal","biker":1,"extra":true}"#,
        ] {
            assert!(ClientMessage::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn state_snapshot_wire_format() {
        let record = TelemetryRecord {
            tick: 5,
            time_s: 0.1,
            mode: Mode::Multi,
            overlay: Some(OverlayKind::Interrupt),
            deflection: [0.5, 0.25, 0.0],
            kinds: [GestureKind::SocialInterrupt; 3],
            commanded_duty: [1.0, 1.0, 1.0],
            supply_w: 100.0,
            demand_w: 22.5,
            brownout_scale: 1.0,
            reservoir_wh: 2.5,
            sync_status: SyncStatus::OutOfSync,
            spread_frac: 0.2,
            active_bikers: 2,
        };
        let cadences = [
            CadenceEstimate {
                biker_id: BikerId(1),
                rpm: 60.0,
                sample_count: 4,
                valid: true,
            },
            CadenceEstimate {
                biker_id: BikerId(2),
                rpm: 90.0,
                sample_count: 6,
                valid: true,
            },
        ];
        let line = ServerMessage::State(Snapshot::new(&record, &cadences)).to_line();
        assert_eq!(
            line,
            concat!(
                r#"{"type":"state","t":0.1,"mode":"Multi","overlay":"Interrupt","#,
                r#""leaves":[0.5,0.25,0.0],"#,
                r#""kinds":["SocialInterrupt","SocialInterrupt","SocialInterrupt"],"#,
                r#""sync":{"status":"OutOfSync","spread":0.2},"#,
                r#""power":{"supply":100.0,"demand":22.5,"scale":1.0,"reservoir":2.5},"#,
                r#""bikers":[{"id":1,"rpm":60.0},{"id":2,"rpm":90.0}]}"#,
                "\n"
            )
        );
        let mut idle = record.clone();
        idle.overlay = None;
        let v: serde_json::Value =
            serde_json::from_str(&ServerMessage::State(Snapshot::new(&idle, &[])).to_line()).unwrap();
        assert!(v["overlay"].is_null());
        assert_eq!(v["bikers"], serde_json::json!([]));
    }

    #[test]
    fn error_reply_format() {
        let line = ServerMessage::Error {
            message: "nope".into(),
        }
        .to_line();
        assert_eq!(line, "{\"type\":\"error\",\"message\":\"nope\"}\n");
    }
}
