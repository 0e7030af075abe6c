//! Content-addressed store for generator responses.
//!
//! Layout: `<dir>/<first two hex>/<digest>` holds one response. The file's first
//! line is the SHA-256 of the remaining bytes (the compact JSON response), so any
//! corruption is detected on read. Frame files are kept as `<dir>/blobs/<sha>.vtrf`.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use log::warn;
use tempfile::NamedTempFile;

use super::protocol::Backend;
use super::{AugOp, AugmentationRequest, AugmentationResponse, Status};
use crate::corpus::{write_frames, Video};
use crate::hashing::sha256_hex;
use crate::{Error, Result};

pub struct Cache {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Cache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        for sub in ["blobs", "tmp"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        // Probe writability up front.
        NamedTempFile::new_in(dir.join("tmp")).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            dir,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entry_path(&self, digest: &str) -> PathBuf {
        self.dir.join(&digest[..2]).join(digest)
    }

    /// Absolute path of a cache-relative output path.
    pub fn resolve_path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn key_lock(&self, digest: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap();
        Arc::clone(locks.entry(digest.to_string()).or_default())
    }

    fn write_atomic(&self, target: &Path, bytes: &[u8]) -> Result<()> {
        let mut tmp =
            NamedTempFile::new_in(self.dir.join("tmp")).map_err(|e| Error::io(&self.dir, e))?;
        tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
        tmp.persist(target)
            .map_err(|e| Error::io(target, e.error))?;
        Ok(())
    }

    /// Stores `video` as a content-addressed frame file; returns (sha256, path).
    pub fn store_frames(&self, video: &Video) -> Result<(String, PathBuf)> {
        let tmp =
            NamedTempFile::new_in(self.dir.join("tmp")).map_err(|e| Error::io(&self.dir, e))?;
        write_frames(tmp.path(), video)?;
        let rel = self.store_blob(tmp.path())?;
        let sha = rel
            .trim_start_matches("blobs/")
            .trim_end_matches(".vtrf")
            .to_string();
        Ok((sha, self.resolve_path(&rel)))
    }

    /// Copies a frame file into the blob store; returns its cache-relative path.
    fn store_blob(&self, src: &Path) -> Result<String> {
        let bytes = fs::read(src).map_err(|e| Error::io(src, e))?;
        let sha = sha256_hex(&bytes);
        let rel = format!("blobs/{sha}.vtrf");
        let target = self.resolve_path(&rel);
        if !self.blob_ok(&rel) {
            self.write_atomic(&target, &bytes)?;
        }
        Ok(rel)
    }

    fn blob_ok(&self, rel: &str) -> bool {
        let Some(sha) = rel
            .strip_prefix("blobs/")
            .and_then(|s| s.strip_suffix(".vtrf"))
        else {
            return false;
        };
        fs::read(self.resolve_path(rel)).is_ok_and(|b| sha256_hex(&b) == sha)
    }

    /// Raw stored entry, verified. `None` on a miss or a corrupted entry.
    pub fn get(&self, digest: &str) -> Option<AugmentationResponse> {
        let path = self.entry_path(digest);
        let bytes = fs::read(&path).ok()?;
        match self.verify(digest, &bytes) {
            Ok(resp) => Some(resp),
            Err(why) => {
                warn!(
                    "cache entry {} is corrupt ({why}); regenerating",
                    path.display()
                );
                None
            }
        }
    }

    fn verify(
        &self,
        digest: &str,
        bytes: &[u8],
    ) -> std::result::Result<AugmentationResponse, String> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or("missing checksum line")?;
        let (sum, body) = (&bytes[..nl], &bytes[nl + 1..]);
        if sum != sha256_hex(body).as_bytes() {
            return Err("checksum mismatch".into());
        }
        let resp: AugmentationResponse =
            serde_json::from_slice(body).map_err(|e| format!("unparsable body: {e}"))?;
        if resp.request_digest != digest {
            return Err(format!("entry answers {}", resp.request_digest));
        }
        if let Some(bad) = resp
            .outputs
            .iter()
            .find(|o| o.starts_with("blobs/") && !self.blob_ok(o))
        {
            return Err(format!("frame blob {bad} missing or altered"));
        }
        Ok(resp)
    }

    pub fn put(&self, resp: &AugmentationResponse) -> Result<()> {
        let body = serde_json::to_vec(resp).expect("response serializes");
        let mut bytes = sha256_hex(&body).into_bytes();
        bytes.push(b'\n');
        bytes.extend_from_slice(&body);
        let path = self.entry_path(&resp.request_digest);
        let parent = path.parent().expect("entry has a parent");
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        self.write_atomic(&path, &bytes)
    }

    /// Cached response for `req`, invoking `backend` only on a miss.
    pub fn resolve_or_invoke(
        &self,
        backend: &dyn Backend,
        req: &AugmentationRequest,
    ) -> Result<AugmentationResponse> {
        req.validate()?;
        let digest = req.digest();
        let lock = self.key_lock(&digest);
        let _guard = lock.lock().unwrap();
        if let Some(hit) = self.get(&digest) {
            return Ok(hit);
        }

        let reply = backend.invoke(&req.to_wire(&digest)?)?;
        if reply.id != digest {
            return Err(Error::backend(
                &digest,
                format!("reply carries id {}", reply.id),
            ));
        }
        if reply.status == Status::Error {
            return Err(Error::backend(
                &digest,
                reply
                    .message
                    .unwrap_or_else(|| "unspecified backend error".into()),
            ));
        }
        let outputs = match req.op {
            AugOp::Paraphrase => reply.texts.unwrap_or_default(),
            AugOp::Stylize => match reply.frames_out {
                Some(p) => vec![self.store_blob(Path::new(&p))?],
                None => vec![],
            },
        };
        if outputs.is_empty() {
            return Err(Error::backend(&digest, "empty generation"));
        }
        let resp = AugmentationResponse {
            request_digest: digest.clone(),
            status: Status::Ok,
            outputs,
            backend_meta: backend.id().to_string(),
        };
        // Another process may have written the entry meanwhile; its copy wins.
        if let Some(winner) = self.get(&digest) {
            return Ok(winner);
        }
        self.put(&resp)?;
        Ok(resp)
    }
}
