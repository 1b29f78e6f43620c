//! One-line operation records for divergence reports.
//!
//! The format is `t=<thread> op=<a|r|c> k=<key> ok=<0|1> ts=<n>`, stable
//! enough to grep and to parse back in tooling.

use std::fmt;
use std::str::FromStr;

use crate::cell::Key;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Add,
    Remove,
    Contains,
}

impl OpKind {
    fn code(self) -> char {
        match self {
            OpKind::Add => 'a',
            OpKind::Remove => 'r',
            OpKind::Contains => 'c',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OpTrace {
    pub thread: usize,
    pub kind: OpKind,
    pub key: Key,
    pub ok: bool,
    /// Per-thread sequence number.
    pub ts: u64,
}

impl fmt::Display for OpTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t={} op={} k={} ok={} ts={}",
            self.thread,
            self.kind.code(),
            self.key,
            self.ok as u8,
            self.ts,
        )
    }
}

impl FromStr for OpTrace {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut fields = s.split_whitespace();
        let mut take = |name: &str| -> Result<&str, String> {
            let part = fields.next().ok_or_else(|| format!("missing field {name}"))?;
            part.strip_prefix(name)
                .and_then(|p| p.strip_prefix('='))
                .ok_or_else(|| format!("expected {name}=..., got {part:?}"))
        };
        let thread = take("t")?.parse().map_err(|e| format!("thread: {e}"))?;
        let kind = match take("op")? {
            "a" => OpKind::Add,
            "r" => OpKind::Remove,
            "c" => OpKind::Contains,
            other => return Err(format!("unknown op {other:?}")),
        };
        let key = take("k")?.parse().map_err(|e| format!("key: {e}"))?;
        let ok = match take("ok")? {
            "0" => false,
            "1" => true,
            other => return Err(format!("ok must be 0 or 1, got {other:?}")),
        };
        let ts = take("ts")?.parse().map_err(|e| format!("ts: {e}"))?;
        Ok(OpTrace { thread, kind, key, ok, ts })
    }
}
