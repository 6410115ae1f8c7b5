use std::io::Write;
use std::path::{Path, PathBuf};

use ingnn::{Error, Result};
use serde::Serialize;

/// Where a command writes its artifacts.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn new(root: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn resolve(&self, name: &Path) -> PathBuf {
        if name.is_absolute() {
            name.to_path_buf()
        } else {
            self.root.join(name)
        }
    }

    /// Writes `contents` through a temporary file in the target directory, then renames it into place.
    pub fn write(&self, name: impl AsRef<Path>, contents: &str) -> Result<PathBuf> {
        let path = self.resolve(name.as_ref());
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(contents.as_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| Error::Io(e.error))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: impl AsRef<Path>, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: ErrorBody<'a>,
}

pub fn error_json(kind: &str, message: impl Into<String>) -> String {
    serde_json::to_string(&ErrorReport { error: ErrorBody { kind, message: message.into() } })
        .expect("plain strings serialize")
}
