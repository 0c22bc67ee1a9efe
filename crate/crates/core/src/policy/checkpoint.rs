//! Line-based checkpoint format:
//!
//! ```text
//! policy <role> <version> <arity>
//! key <encoded-key> <logit> <logit> ...
//! ```
//!
//! Logits are written with the shortest representation that parses back to
//! the same `f64`, so a save/load cycle is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use super::{PolicyParams, Role, RowKey};
use crate::{Error, Result};

impl PolicyParams {
    pub fn to_checkpoint(&self) -> String {
        let mut out = format!("policy {} {} {}\n", self.role.as_str(), self.version, self.arity);
        for (key, row) in &self.rows {
            let _ = write!(out, "key {key}");
            for v in row {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<PolicyParams> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty checkpoint"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 || h[0] != "policy" {
            return Err(Error::parse(1, "expected `policy <role> <version> <arity>`"));
        }
        let role: Role = h[1].parse().map_err(|_| Error::parse(1, format!("unknown role `{}`", h[1])))?;
        let version = h[2]
            .parse()
            .map_err(|_| Error::parse(1, format!("invalid version `{}`", h[2])))?;
        let arity: usize = h[3]
            .parse()
            .map_err(|_| Error::parse(1, format!("invalid arity `{}`", h[3])))?;
        let mut params = PolicyParams::new(role, arity);
        params.version = version;
        for (idx, line) in lines {
            let lineno = idx + 1;
            let mut f = line.split_whitespace();
            if f.next() != Some("key") {
                return Err(Error::parse(lineno, "expected `key <encoded-key> <logits...>`"));
            }
            let key: RowKey = f
                .next()
                .ok_or_else(|| Error::parse(lineno, "missing key"))?
                .parse()
                .map_err(|e: Error| Error::parse(lineno, e.to_string()))?;
            let row = f
                .map(|v| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| Error::parse(lineno, format!("invalid logit `{v}`")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != arity {
                return Err(Error::parse(
                    lineno,
                    format!("row has {} logits, header declares {arity}", row.len()),
                ));
            }
            if params.rows.insert(key, row).is_some() {
                return Err(Error::parse(lineno, format!("duplicate key {key}")));
            }
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<PolicyParams> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PolicyParams::from_checkpoint(&text)
    }
}
