//! Staged, all-or-nothing result writing.
//!
//! Files are written into a hidden temporary directory inside the output
//! directory and moved into place only by [`Staging::commit`]. Dropping a
//! `Staging` without committing deletes everything written so far.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

use seqclt::Result;

use crate::config::hex;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    /// SHA-256 of every result file.
    pub files: BTreeMap<String, String>,
}

pub struct Staging {
    dir: TempDir,
    out: PathBuf,
    files: Vec<String>,
}

impl Staging {
    pub fn new(out: &Path) -> Result<Self> {
        fs::create_dir_all(out)?;
        let dir = tempfile::Builder::new().prefix(".seqclt-staging-").tempdir_in(out)?;
        Ok(Self { dir, out: out.to_path_buf(), files: Vec::new() })
    }

    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let mut w = BufWriter::new(File::create(self.dir.path().join(name))?);
        f(&mut w)?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::from)?;
            writeln!(w)?;
            Ok(())
        })
    }

    /// Writes `manifest.json` and moves all files into the output directory.
    /// If a move fails, files already moved are removed again.
    pub fn commit(mut self, command: &str, seed: u64, config_hash: String) -> Result<Vec<PathBuf>> {
        let mut files = BTreeMap::new();
        for name in &self.files {
            files.insert(name.clone(), hex(&Sha256::digest(fs::read(self.dir.path().join(name))?)));
        }
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_hash,
            files,
        };
        self.write_json("manifest.json", &manifest)?;
        let mut moved = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let target = self.out.join(name);
            if let Err(e) = fs::rename(self.dir.path().join(name), &target) {
                for p in &moved {
                    let _ = fs::remove_file(p);
                }
                return Err(e.into());
            }
            moved.push(target);
        }
        Ok(moved)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nothing_survives_without_commit() {
        let root = tempfile::tempdir().unwrap();
        let out = root.path().join("res");
        {
            let mut s = Staging::new(&out).unwrap();
            s.write_json("a.json", &[1, 2]).unwrap();
        }
        assert_eq!(fs::read_dir(&out).unwrap().count(), 0);
    }

    #[test]
    fn commit_moves_files_and_records_hashes() {
        let root = tempfile::tempdir().unwrap();
        let mut s = Staging::new(root.path()).unwrap();
        s.write_with("x.csv", |w| Ok(writeln!(w, "a,b")?)).unwrap();
        let moved = s.commit("test", 5, "h".into()).unwrap();
        assert_eq!(moved.len(), 2);
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(root.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["seed"], 5);
        assert_eq!(manifest["files"]["x.csv"].as_str().unwrap().len(), 64);
        let leftovers: Vec<_> = fs::read_dir(root.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with(".seqclt"))
            .collect();
        assert!(leftovers.is_empty());
    }
}
