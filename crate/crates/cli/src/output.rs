//! Output files are staged in memory and moved into place only once every
//! file of a command is ready.

use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Default)]
pub struct Staged {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Staged {
    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    /// Writes every file to a temporary sibling, then renames them all.
    /// On failure the temporaries are removed and no target is touched.
    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut temps = Vec::with_capacity(self.files.len());
        let result = (|| {
            for (path, bytes) in &self.files {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
                }
                let tmp = temp_name(path);
                fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
                temps.push((tmp, path.clone()));
            }
            Ok(())
        })();
        if let Err(e) = result {
            for (tmp, _) in &temps {
                let _ = fs::remove_file(tmp);
            }
            return Err(e);
        }
        let mut done = Vec::with_capacity(temps.len());
        for (tmp, path) in temps {
            fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))?;
            done.push(path);
        }
        Ok(done)
    }
}

fn temp_name(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp-{}", std::process::id()));
    path.with_file_name(name)
}

/// First line of every CSV report.
pub fn header_line(command: &str, seed: u64, extra: &[(&str, String)]) -> String {
    let mut line = format!("# gcorrect {command} seed={seed}");
    for (k, v) in extra {
        line.push_str(&format!(" {k}={v}"));
    }
    line.push('\n');
    line
}
