use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use levy_dp::AuditReport;

/// Writes result files into one directory, each starting with a comment line
/// that names the tool version and the config hash.
pub struct Output {
    dir: PathBuf,
    header: String,
}

impl Output {
    pub fn new(dir: &Path, config_hash: &str) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        let header = format!(
            "# levy-dp {} config-sha256={config_hash}\n",
            env!("CARGO_PKG_VERSION")
        );
        Ok(Self {
            dir: dir.to_path_buf(),
            header,
        })
    }

    pub fn write(&self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let mut text = String::with_capacity(self.header.len() + body.len());
        text.push_str(&self.header);
        text.push_str(body);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn audits_csv<'a>(reports: impl IntoIterator<Item = &'a AuditReport>) -> String {
    let mut s = String::from(AuditReport::CSV_HEADER);
    s.push('\n');
    for r in reports {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

pub fn columns(prefix: &str, d: usize) -> String {
    (0..d)
        .map(|i| format!("{prefix}_{i}"))
        .collect::<Vec<_>>()
        .join(",")
}
