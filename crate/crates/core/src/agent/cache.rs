use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use log::warn;
use serde::{Deserialize, Serialize};

use super::Agent;
use crate::error::{Error, Result};
use crate::model::{AgentResponse, Coalition, ResponseSource, ToolCatalog};
use crate::util::sha256_hex;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey {
    pub agent: String,
    pub prompt_sha256: String,
    pub coalition: String,
}

impl CacheKey {
    pub fn new(
        agent: &dyn Agent,
        prompt: &str,
        coalition: &Coalition,
        catalog: &ToolCatalog,
    ) -> Result<Self> {
        Ok(CacheKey {
            agent: agent.id().to_string(),
            prompt_sha256: sha256_hex(prompt.as_bytes()),
            coalition: coalition.key(catalog)?,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Line {
    key: CacheKey,
    response: AgentResponse,
}

struct Inner {
    entries: HashMap<CacheKey, AgentResponse>,
    file: Option<File>,
    path: Option<PathBuf>,
    errors: Vec<String>,
}

/// Agent responses keyed by (agent, prompt, coalition), optionally backed
/// by an append-only JSON-lines file.
pub struct ResponseCache {
    inner: Mutex<Inner>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache {
            inner: Mutex::new(Inner {
                entries: HashMap::new(),
                file: None,
                path: None,
                errors: Vec::new(),
            }),
        }
    }

    /// Loads `path` if it exists and appends new entries to it. Persistence
    /// failures are logged and recorded; the cache then stays in memory.
    pub fn open(path: impl AsRef<Path>) -> Self {
        let path = path.as_ref().to_path_buf();
        let mut inner = Inner {
            entries: HashMap::new(),
            file: None,
            path: Some(path.clone()),
            errors: Vec::new(),
        };
        match load_lines::<Line>(&path) {
            Ok((lines, dropped)) => {
                for l in lines {
                    inner.entries.insert(l.key, l.response);
                }
                if dropped > 0 {
                    let mut snapshot: Vec<_> = inner.entries.iter().collect();
                    snapshot.sort_by(|a, b| a.0.cmp(b.0));
                    let rewritten = snapshot.into_iter().map(|(k, r)| Line {
                        key: k.clone(),
                        response: r.clone(),
                    });
                    if let Err(e) = rewrite_lines(&path, rewritten) {
                        inner.fail(e);
                    }
                }
            }
            Err(e) => inner.fail(e),
        }
        if inner.errors.is_empty() {
            match open_append(&path) {
                Ok(f) => inner.file = Some(f),
                Err(e) => inner.fail(e),
            }
        }
        ResponseCache {
            inner: Mutex::new(inner),
        }
    }

    pub fn path(&self) -> Option<PathBuf> {
        self.inner.lock().unwrap().path.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Persistence failures seen so far.
    pub fn errors(&self) -> Vec<String> {
        self.inner.lock().unwrap().errors.clone()
    }

    pub fn snapshot(&self) -> BTreeMap<CacheKey, AgentResponse> {
        let inner = self.inner.lock().unwrap();
        inner
            .entries
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    pub fn get(&self, key: &CacheKey) -> Option<AgentResponse> {
        let inner = self.inner.lock().unwrap();
        inner.entries.get(key).map(|r| AgentResponse {
            source: ResponseSource::Cache,
            ..r.clone()
        })
    }

    pub fn insert(&self, key: CacheKey, response: AgentResponse) {
        let mut inner = self.inner.lock().unwrap();
        if let Some(file) = inner.file.as_mut() {
            let line = Line {
                key: key.clone(),
                response: response.clone(),
            };
            let mut buf = serde_json::to_vec(&line).expect("cache line serializes");
            buf.push(b'\n');
            if let Err(e) = file.write_all(&buf) {
                inner.file = None;
                inner.fail(Error::Io(e));
            }
        }
        inner.entries.insert(key, response);
    }

    /// Returns the cached response for this (agent, prompt, coalition) or
    /// asks the agent and remembers the answer.
    pub fn cached_respond(
        &self,
        agent: &dyn Agent,
        prompt: &str,
        coalition: &Coalition,
        catalog: &ToolCatalog,
    ) -> Result<AgentResponse> {
        let key = CacheKey::new(agent, prompt, coalition, catalog)?;
        if let Some(hit) = self.get(&key) {
            return Ok(hit);
        }
        let response = agent.respond(prompt, coalition, catalog)?;
        self.insert(key, response.clone());
        Ok(response)
    }
}

impl Inner {
    fn fail(&mut self, e: Error) {
        let msg = match &self.path {
            Some(p) => format!("{}: {e}", p.display()),
            None => e.to_string(),
        };
        warn!("response cache: {msg}; continuing in memory");
        self.errors.push(Error::CacheIo(msg).to_string());
    }
}

/// Reads a JSON-lines file, skipping (and counting) lines that fail to
/// parse. A missing file reads as empty.
pub(crate) fn load_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<(Vec<T>, usize)> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((vec![], 0)),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    let mut dropped = 0;
    let total = text.lines().count();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(e) => {
                dropped += 1;
                if i + 1 == total {
                    warn!("{}: dropping corrupt trailing line: {e}", path.display());
                } else {
                    warn!("{}: dropping corrupt line {}: {e}", path.display(), i + 1);
                }
            }
        }
    }
    Ok((out, dropped))
}

pub(crate) fn rewrite_lines<T: Serialize>(
    path: &Path,
    lines: impl IntoIterator<Item = T>,
) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    {
        let mut w = BufWriter::new(tmp.as_file());
        for l in lines {
            serde_json::to_writer(&mut w, &l)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub(crate) fn open_append(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(OpenOptions::new().create(true).append(true).open(path)?)
}
