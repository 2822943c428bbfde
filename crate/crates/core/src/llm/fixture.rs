use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::{ChatBackend, ChatReply, ChatRequest, LlmError};

/// Stable key of a request: hash over the template id and the prompt hash.
pub fn fixture_key(template_id: &str, prompt: &str) -> String {
    let prompt_hash = Sha256::digest(prompt.as_bytes());
    let mut h = Sha256::new();
    h.update(template_id.as_bytes());
    h.update([0u8]);
    h.update(prompt_hash);
    hex::encode(h.finalize())
}

/// Directory of recorded exchanges, one file per key.
///
/// File layout: two blocks, each a decimal byte length, a newline, the UTF-8
/// bytes and a newline. The first block is `template_id\nprompt`, the second
/// the reply text.
#[derive(Debug)]
pub struct FixtureStore {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl FixtureStore {
    pub fn open(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            write_lock: Mutex::new(()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.fx"))
    }

    pub fn lookup(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let key = fixture_key(&req.template_id, &req.rendered_prompt);
        let miss = || LlmError::FixtureMiss {
            key: key.clone(),
            template_id: req.template_id.clone(),
        };
        let bytes = fs::read(self.path(&key)).map_err(|_| miss())?;
        let (request, reply) = decode(&bytes).ok_or_else(|| {
            LlmError::MalformedReply(format!("fixture {key} is not two length-prefixed blocks"))
        })?;
        if request != format!("{}\n{}", req.template_id, req.rendered_prompt) {
            return Err(miss());
        }
        Ok(reply)
    }

    pub fn record(&self, req: &ChatRequest, reply: &str) -> io::Result<()> {
        let _guard = self.write_lock.lock().unwrap();
        fs::create_dir_all(&self.dir)?;
        let key = fixture_key(&req.template_id, &req.rendered_prompt);
        let request = format!("{}\n{}", req.template_id, req.rendered_prompt);
        let tmp = self.dir.join(format!("{key}.tmp"));
        fs::write(&tmp, encode(&request, reply))?;
        fs::rename(tmp, self.path(&key))
    }
}

fn encode(request: &str, reply: &str) -> Vec<u8> {
    let mut out = Vec::new();
    for block in [request, reply] {
        out.extend_from_slice(format!("{}\n", block.len()).as_bytes());
        out.extend_from_slice(block.as_bytes());
        out.push(b'\n');
    }
    out
}

fn decode(bytes: &[u8]) -> Option<(String, String)> {
    let mut rest = bytes;
    let mut blocks = Vec::with_capacity(2);
    for _ in 0..2 {
        let nl = rest.iter().position(|b| *b == b'\n')?;
        let len: usize = std::str::from_utf8(&rest[..nl]).ok()?.parse().ok()?;
        let body = rest.get(nl + 1..nl + 1 + len)?;
        blocks.push(String::from_utf8(body.to_vec()).ok()?);
        rest = rest.get(nl + 1 + len + 1..)?;
    }
    let reply = blocks.pop()?;
    let request = blocks.pop()?;
    Some((request, reply))
}

/// Answers only from the fixture store; a miss is an error.
pub struct ReplayBackend {
    store: FixtureStore,
}

impl ReplayBackend {
    pub fn new(store: FixtureStore) -> Self {
        Self { store }
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatReply, LlmError> {
        Ok(ChatReply {
            text: self.store.lookup(req)?,
            backend_id: "replay".into(),
            latency_ms: 0,
        })
    }
}

/// Forwards to an inner backend and stores every exchange.
pub struct RecordingBackend<B> {
    inner: B,
    store: FixtureStore,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B, store: FixtureStore) -> Self {
        Self { inner, store }
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatReply, LlmError> {
        let reply = self.inner.complete(req)?;
        self.store
            .record(req, &reply.text)
            .map_err(|e| LlmError::BackendUnavailable(format!("cannot record fixture: {e}")))?;
        Ok(reply)
    }
}
