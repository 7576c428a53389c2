//! Output files. Every file starts with a `# config-hash:` comment line so a
//! result can be traced back to the exact configuration that produced it.

use std::fs;
use std::path::{Path, PathBuf};

use jofc::io::format_sig;

use crate::error::CliError;

pub struct Output {
    dir: PathBuf,
    hash: String,
}

pub fn num(x: f64) -> String {
    format_sig(x)
}

impl Output {
    pub fn create(dir: &Path, hash: String) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
        Ok(Self { dir: dir.to_path_buf(), hash })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Output rooted at a subdirectory, sharing the hash.
    pub fn subdir(&self, name: &str) -> Result<Self, CliError> {
        Self::create(&self.dir.join(name), self.hash.clone())
    }

    fn write(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        let text = format!("# config-hash: {}\n{body}", self.hash);
        fs::write(&path, text).map_err(|source| CliError::Io { path: path.clone(), source })?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    pub fn csv<I>(&self, name: &str, header: &[&str], rows: I) -> Result<PathBuf, CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut body = header.join(",");
        body.push('\n');
        for row in rows {
            body.push_str(&row.join(","));
            body.push('\n');
        }
        self.write(name, &body)
    }

    /// Plain text; the hash line is a `#` comment here too.
    pub fn text(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        self.write(name, body)
    }
}
