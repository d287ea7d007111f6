//! Line protocol for out-of-process model workers.
//!
//! Newline-delimited JSON over the worker's stdin/stdout, one record per
//! line:
//!
//! ```text
//! -> {"id":0,"cap":"ping"}
//! <- {"id":0,"result":"pong"}
//! -> {"id":1,"cap":"fill","tokens":["<PER>","Ann","</PER>","<mask>"]}
//! <- {"id":1,"result":["<PER>","Ann","</PER>","smiled"]}
//! -> {"id":2,"cap":"score","tokens":["Ann","smiled"]}
//! <- {"id":2,"error":"model failure"}
//! ```
//!
//! Results: `fill` a token list, `score` a number, `embed` a vector,
//! `attention` a square matrix of rows.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Capability {
    Ping,
    Attention,
    Embed,
    Fill,
    Score,
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Capability::Ping => "ping",
            Capability::Attention => "attention",
            Capability::Embed => "embed",
            Capability::Fill => "fill",
            Capability::Score => "score",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub id: u64,
    pub cap: Capability,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
}

impl BackendRequest {
    pub fn ping() -> Self {
        BackendRequest {
            id: 0,
            cap: Capability::Ping,
            tokens: None,
        }
    }

    pub fn new(id: u64, cap: Capability, tokens: Vec<String>) -> Self {
        BackendRequest {
            id,
            cap,
            tokens: Some(tokens),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("requests serialize")
    }
}

/// Exactly one of a result or an error, tagged with the request id.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendResponse {
    pub id: u64,
    pub outcome: Result<Value, String>,
}

impl BackendResponse {
    pub fn result(id: u64, value: Value) -> Self {
        BackendResponse { id, outcome: Ok(value) }
    }

    pub fn error(id: u64, message: impl Into<String>) -> Self {
        BackendResponse {
            id,
            outcome: Err(message.into()),
        }
    }

    pub fn parse_line(line: &str) -> Result<Self, String> {
        let value: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let obj = value.as_object().ok_or("record is not an object")?;
        let id = obj
            .get("id")
            .and_then(Value::as_u64)
            .ok_or("missing or non-integer id")?;
        match (obj.get("result"), obj.get("error")) {
            (Some(r), None) => Ok(BackendResponse::result(id, r.clone())),
            (None, Some(Value::String(e))) => Ok(BackendResponse::error(id, e.clone())),
            (None, Some(_)) => Err("error must be a string".into()),
            (Some(_), Some(_)) => Err("both result and error present".into()),
            (None, None) => Err("neither result nor error present".into()),
        }
    }

    pub fn to_line(&self) -> String {
        let value = match &self.outcome {
            Ok(r) => serde_json::json!({"id": self.id, "result": r}),
            Err(e) => serde_json::json!({"id": self.id, "error": e}),
        };
        value.to_string()
    }
}
