//! Plain-text summaries of report documents.

use serde_json::Value;

use super::Report;
use crate::error::{Error, Result};

pub fn parse_report(text: &str) -> Result<Report> {
    serde_json::from_str(text).map_err(|e| Error::Data(format!("not a report document: {e}")))
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, out);
            }
        }
        Value::Number(n) => out.push((prefix.to_string(), n.to_string())),
        Value::Bool(b) => out.push((prefix.to_string(), b.to_string())),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Null => out.push((prefix.to_string(), "null".into())),
    }
}

/// One section per report: the command, the per-object entry count, then every
/// aggregate leaf as `key = value`.
pub fn summarize(reports: &[Report]) -> String {
    let mut s = String::new();
    for r in reports {
        s.push_str(&format!(
            "[{}] {} v{} seed {} entries {}\n",
            r.meta.command,
            r.meta.tool,
            r.meta.version,
            r.meta.config.seed,
            r.objects.len()
        ));
        let mut leaves = Vec::new();
        flatten("", &r.aggregate, &mut leaves);
        for (k, v) in leaves {
            s.push_str(&format!("  {k} = {v}\n"));
        }
    }
    s
}
