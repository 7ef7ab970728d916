//! Persistence boundary. The file-backed store keeps an append-only log of
//! JSON lines and rebuilds its in-memory index from it on open.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::{Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use super::model::{Job, OutbreakReport, StoredResult, UploadRecord, UserAccount};
use crate::error::{Error, Result};

pub trait Repository: Send + Sync {
    /// Fails with `Conflict` when the username is taken.
    fn insert_user(&self, user: UserAccount) -> Result<()>;
    fn user_by_name(&self, username: &str) -> Result<Option<UserAccount>>;
    fn insert_upload(&self, upload: UploadRecord) -> Result<()>;
    fn upload(&self, upload_id: &str) -> Result<Option<UploadRecord>>;
    fn insert_job(&self, job: Job) -> Result<()>;
    fn update_job(&self, job: Job) -> Result<()>;
    fn job(&self, job_id: &str) -> Result<Option<Job>>;
    /// Returns false, storing nothing, when a result for the job exists.
    fn insert_result(&self, result: StoredResult) -> Result<bool>;
    fn result(&self, job_id: &str) -> Result<Option<StoredResult>>;
    fn insert_outbreak(&self, report: OutbreakReport) -> Result<()>;
    fn outbreaks(&self) -> Result<Vec<OutbreakReport>>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogRecord {
    User(UserAccount),
    Upload(UploadRecord),
    Job(Job),
    Result(StoredResult),
    Outbreak(OutbreakReport),
}

#[derive(Debug, Default)]
struct Index {
    users: HashMap<String, UserAccount>,
    uploads: HashMap<String, UploadRecord>,
    jobs: HashMap<String, Job>,
    results: HashMap<String, StoredResult>,
    outbreaks: Vec<OutbreakReport>,
}

impl Index {
    fn apply(&mut self, record: LogRecord) {
        match record {
            LogRecord::User(u) => {
                self.users.insert(u.username.clone(), u);
            }
            LogRecord::Upload(u) => {
                self.uploads.insert(u.upload_id.clone(), u);
            }
            LogRecord::Job(j) => {
                self.jobs.insert(j.job_id.clone(), j);
            }
            LogRecord::Result(r) => {
                self.results.insert(r.job_id.clone(), r);
            }
            LogRecord::Outbreak(o) => self.outbreaks.push(o),
        }
    }
}

struct Inner {
    index: Index,
    log: Option<File>,
}

/// Repository over an optional log file. Without a file it is purely in
/// memory, which suits tests.
pub struct FileRepository {
    inner: Mutex<Inner>,
}

impl FileRepository {
    pub fn in_memory() -> Self {
        Self { inner: Mutex::new(Inner { index: Index::default(), log: None }) }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut index = Index::default();
        let bytes = if path.exists() { std::fs::read(path)? } else { Vec::new() };
        // a torn final line from a crash is dropped so later appends stay intact
        let intact = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        for (n, line) in bytes[..intact].split(|&b| b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let record: LogRecord = serde_json::from_slice(line).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: n + 1,
                column: e.column(),
                message: e.to_string(),
            })?;
            index.apply(record);
        }
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let log = OpenOptions::new().create(true).append(true).open(path)?;
        if intact < bytes.len() {
            log.set_len(intact as u64)?;
        }
        Ok(Self { inner: Mutex::new(Inner { index, log: Some(log) }) })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn write(inner: &mut Inner, record: LogRecord) -> Result<()> {
        if let Some(log) = inner.log.as_mut() {
            let mut line = serde_json::to_vec(&record)?;
            line.push(b'\n');
            log.write_all(&line)?;
            log.flush()?;
        }
        inner.index.apply(record);
        Ok(())
    }
}

impl Repository for FileRepository {
    fn insert_user(&self, user: UserAccount) -> Result<()> {
        let mut inner = self.lock();
        if inner.index.users.contains_key(&user.username) {
            return Err(Error::Conflict(format!("username {} is taken", user.username)));
        }
        Self::write(&mut inner, LogRecord::User(user))
    }

    fn user_by_name(&self, username: &str) -> Result<Option<UserAccount>> {
        Ok(self.lock().index.users.get(username).cloned())
    }

    fn insert_upload(&self, upload: UploadRecord) -> Result<()> {
        Self::write(&mut self.lock(), LogRecord::Upload(upload))
    }

    fn upload(&self, upload_id: &str) -> Result<Option<UploadRecord>> {
        Ok(self.lock().index.uploads.get(upload_id).cloned())
    }

    fn insert_job(&self, job: Job) -> Result<()> {
        let mut inner = self.lock();
        if inner.index.jobs.contains_key(&job.job_id) {
            return Err(Error::Conflict(format!("job {} exists", job.job_id)));
        }
        Self::write(&mut inner, LogRecord::Job(job))
    }

    fn update_job(&self, job: Job) -> Result<()> {
        let mut inner = self.lock();
        if !inner.index.jobs.contains_key(&job.job_id) {
            return Err(Error::not_found(format!("job {}", job.job_id)));
        }
        Self::write(&mut inner, LogRecord::Job(job))
    }

    fn job(&self, job_id: &str) -> Result<Option<Job>> {
        Ok(self.lock().index.jobs.get(job_id).cloned())
    }

    fn insert_result(&self, result: StoredResult) -> Result<bool> {
        let mut inner = self.lock();
        if inner.index.results.contains_key(&result.job_id) {
            return Ok(false);
        }
        Self::write(&mut inner, LogRecord::Result(result))?;
        Ok(true)
    }

    fn result(&self, job_id: &str) -> Result<Option<StoredResult>> {
        Ok(self.lock().index.results.get(job_id).cloned())
    }

    fn insert_outbreak(&self, report: OutbreakReport) -> Result<()> {
        Self::write(&mut self.lock(), LogRecord::Outbreak(report))
    }

    fn outbreaks(&self) -> Result<Vec<OutbreakReport>> {
        Ok(self.lock().index.outbreaks.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn user(name: &str) -> UserAccount {
        UserAccount { user_id: format!("u-{name}"), username: name.into(), credential_hash: "h".into(), created_at_ms: 1 }
    }

    #[test]
    fn reopen_restores_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("repo.log");
        {
            let repo = FileRepository::open(&path).unwrap();
            repo.insert_user(user("alice")).unwrap();
            assert!(matches!(repo.insert_user(user("alice")), Err(Error::Conflict(_))));
        }
        let mut raw = std::fs::read(&path).unwrap();
        raw.extend_from_slice(b"{\"kind\":\"us");
        std::fs::write(&path, raw).unwrap();
        let repo = FileRepository::open(&path).unwrap();
        repo.insert_user(user("carol")).unwrap();
        drop(repo);
        let repo = FileRepository::open(&path).unwrap();
        assert!(repo.user_by_name("carol").unwrap().is_some());
        assert_eq!(repo.user_by_name("alice").unwrap().unwrap().user_id, "u-alice");
        assert!(repo.user_by_name("bob").unwrap().is_none());
    }
}
