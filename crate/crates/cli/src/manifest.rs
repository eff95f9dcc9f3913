//! Plain-text run manifests written beside every result file.

use std::fs;
use std::path::{Path, PathBuf};

use crate::{CliError, CliResult};

/// Ordered `key=value` record of a run. Contains no timestamps, so identical
/// runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunManifest {
    entries: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            entries: vec![
                ("command".into(), command.into()),
                ("toolkit_version".into(), env!("CARGO_PKG_VERSION").into()),
            ],
        }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.entries.push((format!("param.{key}"), value.to_string()));
        self
    }

    pub fn input(mut self, key: &str, path: &Path) -> Self {
        self.entries.push((format!("input.{key}"), path.display().to_string()));
        self
    }

    pub fn output(mut self, key: &str, path: &Path) -> Self {
        self.entries.push((format!("output.{key}"), path.display().to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_text(path, &self.to_text())
    }
}

/// `<file>.manifest` for a result file.
pub fn manifest_path(result: &Path) -> PathBuf {
    let mut name = result.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest");
    result.with_file_name(name)
}

pub(crate) fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
