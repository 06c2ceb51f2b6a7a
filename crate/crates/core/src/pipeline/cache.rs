//! Content-addressed stage cache and the advisory lock on a cache directory.

use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const LOCK_FILE: &str = ".lock";

/// Incremental builder for a stage key.
pub struct KeyBuilder(Sha256);

impl KeyBuilder {
    pub fn new(stage: &str) -> Self {
        let mut h = Sha256::new();
        h.update(b"aidtopics-stage\0");
        h.update(stage.as_bytes());
        h.update([0]);
        Self(h)
    }

    pub fn upstream(mut self, key: &str) -> Self {
        self.0.update(b"upstream\0");
        self.0.update(key.as_bytes());
        self.0.update([0]);
        self
    }

    pub fn params<P: Serialize>(mut self, params: &P) -> Self {
        let json = serde_json::to_vec(params).expect("parameters serialize to JSON");
        self.0.update(b"params\0");
        self.0.update((json.len() as u64).to_le_bytes());
        self.0.update(&json);
        self
    }

    pub fn file(mut self, path: &Path) -> io::Result<Self> {
        self.0.update(b"file\0");
        let digest = file_sha256(path)?;
        self.0.update(digest.as_bytes());
        Ok(self)
    }

    pub fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}

pub fn file_sha256(path: &Path) -> io::Result<String> {
    let mut f = fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Held for the duration of a run; removes the lock file on drop.
#[derive(Debug)]
pub struct CacheLock {
    path: PathBuf,
}

impl CacheLock {
    /// Fails with `AlreadyExists` when another run holds the lock.
    pub fn acquire(cache_dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(cache_dir)?;
        let path = cache_dir.join(LOCK_FILE);
        let mut f = fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)?;
        io::Write::write_all(&mut f, format!("{}\n", std::process::id()).as_bytes())?;
        Ok(Self { path })
    }
}

impl Drop for CacheLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Final directory of a stage artifact.
pub fn artifact_dir(cache_dir: &Path, stage: &str, key: &str) -> PathBuf {
    cache_dir.join(stage).join(key)
}

/// Runs `build` in a scratch directory and moves it into place on success;
/// the scratch directory is deleted on failure.
pub fn build_artifact<T, E: From<io::Error>>(
    cache_dir: &Path,
    stage: &str,
    key: &str,
    build: impl FnOnce(&Path) -> Result<T, E>,
) -> Result<(PathBuf, T), E> {
    let final_dir = artifact_dir(cache_dir, stage, key);
    let tmp = cache_dir
        .join(stage)
        .join(format!(".tmp-{key}-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    match build(&tmp) {
        Ok(value) => {
            if final_dir.exists() {
                fs::remove_dir_all(&final_dir)?;
            }
            fs::rename(&tmp, &final_dir)?;
            Ok((final_dir, value))
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&tmp);
            Err(e)
        }
    }
}

/// `(file name, sha256, size)` for every file in `dir`, sorted by name.
pub fn list_files(dir: &Path) -> io::Result<Vec<(String, String, u64)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            let path = entry.path();
            out.push((
                entry.file_name().to_string_lossy().into_owned(),
                file_sha256(&path)?,
                entry.metadata()?.len(),
            ));
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_depend_on_every_part() {
        let a = KeyBuilder::new("s").upstream("u").params(&1).finish();
        assert_eq!(a, KeyBuilder::new("s").upstream("u").params(&1).finish());
        assert_ne!(a, KeyBuilder::new("s").upstream("u").params(&2).finish());
        assert_ne!(a, KeyBuilder::new("t").upstream("u").params(&1).finish());
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let lock = CacheLock::acquire(dir.path()).unwrap();
        assert!(CacheLock::acquire(dir.path()).is_err());
        drop(lock);
        assert!(CacheLock::acquire(dir.path()).is_ok());
    }

    #[test]
    fn failed_builds_leave_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let r: Result<(PathBuf, ()), io::Error> = build_artifact(dir.path(), "x", "k", |d| {
            fs::write(d.join("partial"), b"1")?;
            Err(io::Error::other("boom"))
        });
        assert!(r.is_err());
        assert_eq!(fs::read_dir(dir.path().join("x")).unwrap().count(), 0);
        let (path, _) =
            build_artifact::<_, io::Error>(dir.path(), "x", "k", |d| fs::write(d.join("f"), b"1"))
                .unwrap();
        assert!(path.join("f").exists());
    }
}
