use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Sequence;

/// One source sentence, optionally with its reference translation.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub id: String,
    pub source: Sequence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Sequence>,
}

/// Reads one JSON object per line. Blank lines are skipped.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<Instance>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, path)
}

pub fn parse_dataset(text: &str, origin: &Path) -> Result<Vec<Instance>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let instance: Instance = serde_json::from_str(line).map_err(|e| Error::Dataset {
            path: origin.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(instance.id.clone()) {
            return Err(Error::DuplicateId(instance.id));
        }
        out.push(instance);
    }
    Ok(out)
}
