use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use iconify::Error;

/// Exit status: 1 for failed checks and runtime errors, 2 for bad usage or
/// configuration.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub type CmdResult<T = ()> = Result<T, Failure>;

pub const EXIT_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

impl Failure {
    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_USAGE,
            error: error.into(),
        }
    }

    pub fn failed(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_FAILED,
            error: error.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::InvalidArgument(_) => EXIT_USAGE,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_USAGE,
            _ => EXIT_FAILED,
        };
        Self { code, error: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self::failed(error)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

/// Fails with a usage error unless every path exists.
pub fn require_exists<'a>(paths: impl IntoIterator<Item = &'a Path>) -> CmdResult {
    for p in paths {
        if !p.exists() {
            return Err(Failure::usage(anyhow::anyhow!(
                "no such file or directory: {}",
                p.display()
            )));
        }
    }
    Ok(())
}

/// An output directory that is deleted again on drop unless kept. Only a
/// directory this guard created is ever removed.
pub struct OutputDir {
    path: PathBuf,
    created: bool,
    keep: bool,
}

impl OutputDir {
    pub fn create(path: &Path) -> CmdResult<Self> {
        let created = !path.exists();
        fs::create_dir_all(path).map_err(|e| Failure::failed(anyhow::anyhow!("creating {}: {e}", path.display())))?;
        Ok(Self {
            path: path.to_owned(),
            created,
            keep: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn keep(mut self) {
        self.keep = true;
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if self.created && !self.keep {
            let _ = fs::remove_dir_all(&self.path);
        }
    }
}
