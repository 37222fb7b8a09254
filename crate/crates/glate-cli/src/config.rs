//! Optional key=value configuration file; command-line flags override it.

use std::collections::BTreeMap;
use std::path::Path;

use crate::errors::{CliError, CliResult};

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("config {}: {e}", path.display())))?;
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::validation(format!(
                    "config {} line {}: expected key=value",
                    path.display(),
                    lineno + 1
                )));
            };
            // Normalize so `min-cases` and `min_cases` address the same key.
            let key = key.trim().replace('-', "_");
            values.insert(key, value.trim().to_string());
        }
        Ok(Self { values })
    }

    /// Fill `slot` from the config when the flag was not given.
    pub fn fill<T: std::str::FromStr>(&self, slot: &mut Option<T>, key: &str) -> CliResult<()> {
        if slot.is_none() {
            if let Some(raw) = self.values.get(key) {
                let parsed = raw.parse().map_err(|_| {
                    CliError::validation(format!("config key {key}: cannot parse {raw:?}"))
                })?;
                *slot = Some(parsed);
            }
        }
        Ok(())
    }
}
