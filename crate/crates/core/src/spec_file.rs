//! JSON protocol documents:
//! `{"n", "L", "window_order", "nm_mode": "table"|"builtin:<name>", "seed", "inputs": [hex]}`.

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::protocol::{Builtin, NextMessage, ProtocolSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WindowOrder {
    Named(String),
    Explicit(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecDocument {
    pub n: usize,
    #[serde(rename = "L")]
    pub len: usize,
    #[serde(default = "default_order")]
    pub window_order: WindowOrder,
    pub nm_mode: String,
    #[serde(default)]
    pub seed: u64,
    pub inputs: Vec<String>,
}

fn default_order() -> WindowOrder {
    WindowOrder::Named("round-robin".into())
}

impl SpecDocument {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_spec(&self) -> Result<ProtocolSpec> {
        match &self.window_order {
            WindowOrder::Named(s) if s == "round-robin" || s == "round_robin" => {}
            WindowOrder::Explicit(v) if v.iter().copied().eq(0..self.n) => {}
            other => {
                return Err(Error::MalformedSpec(format!(
                    "only the fixed round-robin window order is supported, got {other:?}"
                )))
            }
        }
        let next_message = if self.nm_mode == "table" {
            NextMessage::Table { seed: self.seed }
        } else if let Some(name) = self.nm_mode.strip_prefix("builtin:") {
            let b = Builtin::parse(name)
                .ok_or_else(|| Error::MalformedSpec(format!("unknown builtin {name:?}")))?;
            NextMessage::Builtin(b)
        } else {
            return Err(Error::MalformedSpec(format!("unknown nm_mode {:?}", self.nm_mode)));
        };
        let inputs = self
            .inputs
            .iter()
            .map(|h| parse_hex(h))
            .collect::<Result<Vec<_>>>()?;
        ProtocolSpec::new(self.n, self.len, inputs, next_message)
    }
}

fn parse_hex(s: &str) -> Result<BitString> {
    let s = s.strip_prefix("0x").unwrap_or(s);
    s.chars()
        .map(|c| {
            c.to_digit(16)
                .map(|d| (0..4).rev().map(move |i| (d >> i) & 1 == 1))
                .ok_or_else(|| Error::MalformedSpec(format!("bad hex digit {c:?}")))
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().flatten().collect())
}
