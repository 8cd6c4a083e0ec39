//! Content-addressed run directories with write-then-rename commits.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Marker written last; a directory without it is never treated as complete.
pub const COMPLETE: &str = "manifest.json";

pub fn run_id(kind: &str, canonical: &Value) -> String {
    let text = serde_json::to_string(&serde_json::json!({ "command": kind, "config": canonical }))
        .expect("value serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn run_dir(out: &Path, kind: &str, id: &str) -> PathBuf {
    out.join(format!("{kind}-{}", &id[..16]))
}

pub fn is_complete(dir: &Path) -> bool {
    dir.join(COMPLETE).is_file()
}

/// Staging directory for one run; `commit` moves it into place atomically.
pub struct Staging {
    pub tmp: PathBuf,
    pub dest: PathBuf,
}

impl Staging {
    pub fn new(dest: PathBuf) -> Result<Staging> {
        let parent = dest.parent().context("run directory has no parent")?;
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
        let name = dest.file_name().context("run directory has no name")?.to_string_lossy().to_string();
        let tmp = parent.join(format!(".tmp-{name}-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).with_context(|| format!("cannot clear {}", tmp.display()))?;
        }
        fs::create_dir_all(&tmp).with_context(|| format!("cannot create {}", tmp.display()))?;
        Ok(Staging { tmp, dest })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.tmp.join(name)
    }

    pub fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&p, bytes).with_context(|| format!("cannot write {}", p.display()))
    }

    pub fn write_json(&self, name: &str, value: &impl serde::Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    /// Writes the completion marker and renames into place. If another
    /// process committed the same run first, its result is kept.
    pub fn commit(self, manifest: &impl serde::Serialize) -> Result<PathBuf> {
        self.write_json(COMPLETE, manifest)?;
        let dest = self.dest.clone();
        if is_complete(&dest) {
            return Ok(dest);
        }
        if dest.exists() {
            fs::remove_dir_all(&dest).with_context(|| format!("cannot replace {}", dest.display()))?;
        }
        match fs::rename(&self.tmp, &dest) {
            Ok(()) => Ok(dest),
            Err(_) if is_complete(&dest) => Ok(dest),
            Err(e) => Err(e).with_context(|| format!("cannot commit {}", dest.display())),
        }
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if self.tmp.exists() {
            fs::remove_dir_all(&self.tmp).ok();
        }
    }
}

/// Writes a file through a sibling temporary and a rename.
pub fn write_atomic(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
    fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("cannot rename onto {}", path.display()))
}
