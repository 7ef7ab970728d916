//! Content-addressed image storage shared by the gateway and workers.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::inference::digest_hex;

#[derive(Debug, Clone)]
pub struct BlobStore {
    root: PathBuf,
}

fn check_digest(digest: &str) -> Result<()> {
    if digest.len() == 64 && digest.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
        Ok(())
    } else {
        Err(Error::invalid(format!("malformed digest {digest:?}")))
    }
}

impl BlobStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        std::fs::create_dir_all(root.as_ref())?;
        Ok(Self { root: root.as_ref().to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, digest: &str) -> Result<PathBuf> {
        check_digest(digest)?;
        Ok(self.root.join(&digest[..2]).join(digest))
    }

    /// Stores `bytes` under their SHA-256 and returns the digest. Existing
    /// blobs are not rewritten.
    pub fn put(&self, bytes: &[u8]) -> Result<String> {
        let digest = digest_hex(bytes);
        let path = self.path_for(&digest)?;
        if path.exists() {
            return Ok(digest);
        }
        let dir = path.parent().expect("blob path has a parent");
        std::fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(".{digest}.{}.tmp", std::process::id()));
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, &path)?;
        Ok(digest)
    }

    pub fn get(&self, digest: &str) -> Result<Vec<u8>> {
        let path = self.path_for(digest)?;
        std::fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::not_found(format!("blob {digest}")),
            _ => Error::Io(e),
        })
    }

    pub fn contains(&self, digest: &str) -> bool {
        self.path_for(digest).is_ok_and(|p| p.exists())
    }

    pub fn count(&self) -> Result<usize> {
        let mut n = 0;
        for shard in std::fs::read_dir(&self.root)? {
            let shard = shard?;
            if shard.file_type()?.is_dir() {
                n += std::fs::read_dir(shard.path())?
                    .filter_map(|e| e.ok())
                    .filter(|e| !e.file_name().to_string_lossy().starts_with('.'))
                    .count();
            }
        }
        Ok(n)
    }
}
