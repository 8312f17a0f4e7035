//! `# key=value,...` metadata comment lines carried by the CSV formats.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub(crate) fn format_meta(pairs: &[(&str, String)]) -> String {
    let body: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("# {}", body.join(","))
}

/// Parses a metadata comment into a map; returns `None` for other lines.
pub(crate) fn parse_meta(line: &str) -> Option<HashMap<String, String>> {
    let body = line.trim().strip_prefix('#')?.trim();
    let mut out = HashMap::new();
    for kv in body.split(',') {
        let (k, v) = kv.split_once('=')?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Some(out)
}

pub(crate) fn meta_get<T: std::str::FromStr>(meta: &HashMap<String, String>, key: &str) -> Result<T> {
    meta.get(key)
        .ok_or_else(|| Error::Format(format!("missing metadata key {key}")))?
        .parse()
        .map_err(|_| Error::Format(format!("bad metadata value for {key}")))
}
