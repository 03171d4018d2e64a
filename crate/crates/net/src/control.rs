//! Newline-delimited JSON control messages.

use l2r_core::sim::EpisodeConfig;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const COMMANDS: [&str; 8] = [
    "reset",
    "set_track",
    "set_pose",
    "set_mode",
    "get_state",
    "step",
    "get_log",
    "shutdown",
];

/// Reason reported by `get_state` before the first reset.
pub const NOT_INITIALIZED: &str = "none-initialized";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Reset {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config: Option<EpisodeConfig>,
    },
    SetTrack {
        name: String,
    },
    SetPose {
        s: f64,
        d: f64,
    },
    SetMode {
        vision_only: bool,
    },
    GetState,
    /// Lockstep only: advance one step once the action datagram `seq` (or
    /// a later one) has arrived.
    Step {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u32>,
    },
    GetLog,
    Shutdown,
}

impl Request {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("requests serialize");
        s.push('\n');
        s
    }
}

/// Parses one request line; on failure returns the error reply to send.
pub fn parse_request(line: &str) -> Result<Request, Value> {
    let value: Value = serde_json::from_str(line).map_err(|e| error_reply("malformed", e.to_string()))?;
    let Some(cmd) = value.get("cmd").and_then(Value::as_str) else {
        return Err(error_reply("malformed", "missing \"cmd\""));
    };
    if !COMMANDS.contains(&cmd) {
        return Err(error_reply("unknown_cmd", cmd));
    }
    serde_json::from_value(value).map_err(|e| error_reply("malformed", e.to_string()))
}

pub fn error_reply(reason: &str, detail: impl std::fmt::Display) -> Value {
    json!({"status": "error", "reason": reason, "detail": detail.to_string()})
}

/// `{"status":"ok"}` merged with the fields of `extra`.
pub fn ok_reply(extra: Value) -> Value {
    let mut v = json!({"status": "ok"});
    if let (Value::Object(dst), Value::Object(src)) = (&mut v, extra) {
        dst.extend(src);
    }
    v
}

pub fn is_ok(reply: &Value) -> bool {
    reply.get("status").and_then(Value::as_str) == Some("ok")
}
