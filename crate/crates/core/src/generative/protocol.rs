//! Newline-delimited JSON protocol spoken with external generator executables.
//!
//! The harness writes one [`WireRequest`] per line to the child's stdin and reads
//! one [`WireReply`] per line from its stdout. Replies may come back in any order
//! and are matched by `id`; unknown fields are ignored.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{AugMode, AugOp, Status};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRequest {
    pub id: String,
    pub op: AugOp,
    pub mode: AugMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames_in: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<String>,
    #[serde(default)]
    pub guess_mode: bool,
    pub k: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireReply {
    pub id: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texts: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames_out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl WireReply {
    pub fn ok_texts(id: &str, texts: Vec<String>) -> Self {
        Self {
            id: id.into(),
            status: Status::Ok,
            texts: Some(texts),
            frames_out: None,
            message: None,
        }
    }

    pub fn ok_frames(id: &str, path: String) -> Self {
        Self {
            id: id.into(),
            status: Status::Ok,
            texts: None,
            frames_out: Some(path),
            message: None,
        }
    }

    pub fn error(id: &str, message: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            status: Status::Error,
            texts: None,
            frames_out: None,
            message: Some(message.into()),
        }
    }
}

/// A generator that answers wire requests.
pub trait Backend: Send + Sync {
    /// Stable identifier; part of every cache key.
    fn id(&self) -> &str;

    fn invoke(&self, req: &WireRequest) -> Result<WireReply>;

    /// Several requests at once; replies are returned in request order.
    fn invoke_many(&self, reqs: &[WireRequest]) -> Result<Vec<WireReply>> {
        reqs.iter().map(|r| self.invoke(r)).collect()
    }
}

#[derive(Default)]
struct Inbox {
    replies: HashMap<String, WireReply>,
    failure: Option<String>,
    closed: bool,
}

/// A backend running as a child process.
pub struct SubprocessBackend {
    id: String,
    child: Mutex<Child>,
    stdin: Mutex<ChildStdin>,
    inbox: Arc<(Mutex<Inbox>, Condvar)>,
    timeout: Duration,
}

impl SubprocessBackend {
    /// Spawns `argv[0]` with the remaining arguments. The backend id defaults to
    /// the space-joined command line.
    pub fn spawn(argv: &[String], timeout: Duration) -> Result<Self> {
        let (prog, args) = argv
            .split_first()
            .ok_or_else(|| Error::Config("empty backend command".into()))?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::io(prog, e))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");

        let inbox: Arc<(Mutex<Inbox>, Condvar)> = Arc::default();
        let reader_inbox = Arc::clone(&inbox);
        thread::spawn(move || {
            let (lock, cv) = &*reader_inbox;
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if line.trim().is_empty() {
                    continue;
                }
                let mut inbox = lock.lock().unwrap();
                match serde_json::from_str::<WireReply>(&line) {
                    Ok(reply) => {
                        inbox.replies.insert(reply.id.clone(), reply);
                    }
                    Err(e) => {
                        inbox.failure = Some(format!("malformed reply {line:?}: {e}"));
                    }
                }
                cv.notify_all();
            }
            lock.lock().unwrap().closed = true;
            cv.notify_all();
        });

        Ok(Self {
            id: argv.join(" "),
            child: Mutex::new(child),
            stdin: Mutex::new(stdin),
            inbox,
            timeout,
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    fn send(&self, reqs: &[WireRequest]) -> Result<()> {
        let mut stdin = self.stdin.lock().unwrap();
        for r in reqs {
            let mut line = serde_json::to_string(r).expect("request serializes");
            line.push('\n');
            stdin
                .write_all(line.as_bytes())
                .map_err(|e| Error::backend(&r.id, format!("write failed: {e}")))?;
        }
        stdin
            .flush()
            .map_err(|e| Error::backend("-", format!("flush failed: {e}")))
    }

    fn wait_for(&self, id: &str, deadline: Instant) -> Result<WireReply> {
        let (lock, cv) = &*self.inbox;
        let mut inbox = lock.lock().unwrap();
        loop {
            if let Some(reply) = inbox.replies.remove(id) {
                return Ok(reply);
            }
            if let Some(f) = &inbox.failure {
                return Err(Error::backend(id, f.clone()));
            }
            if inbox.closed {
                return Err(Error::backend(id, "backend exited before replying"));
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(Error::backend(
                    id,
                    format!("timed out after {:?}", self.timeout),
                ));
            }
            inbox = cv.wait_timeout(inbox, deadline - now).unwrap().0;
        }
    }
}

impl Backend for SubprocessBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn invoke(&self, req: &WireRequest) -> Result<WireReply> {
        self.send(std::slice::from_ref(req))?;
        self.wait_for(&req.id, Instant::now() + self.timeout)
    }

    fn invoke_many(&self, reqs: &[WireRequest]) -> Result<Vec<WireReply>> {
        self.send(reqs)?;
        let deadline = Instant::now() + self.timeout;
        reqs.iter()
            .map(|r| self.wait_for(&r.id, deadline))
            .collect()
    }
}

impl Drop for SubprocessBackend {
    fn drop(&mut self) {
        if let Ok(child) = self.child.get_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
