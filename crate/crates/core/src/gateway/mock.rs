use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Backend, CompletionRequest, GatewayError};

/// One scripted reply. A bare JSON string is a text reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reply {
    Text(String),
    Fail { error: String },
    RateLimited { rate_limited: bool },
}

impl Reply {
    pub fn text(s: impl Into<String>) -> Self {
        Reply::Text(s.into())
    }

    pub fn fail(s: impl Into<String>) -> Self {
        Reply::Fail { error: s.into() }
    }
}

/// Replies for one backend, keyed by call ordinal.
///
/// Requests carrying a session key with a scripted queue of its own consume
/// that queue; everything else consumes the default queue. Per-session queues
/// keep parallel pipelines reproducible.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub default: Vec<Reply>,
    #[serde(default)]
    pub sessions: BTreeMap<String, Vec<Reply>>,
}

impl MockScript {
    pub fn queue<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        MockScript {
            default: replies.into_iter().map(|s| Reply::Text(s.into())).collect(),
            sessions: BTreeMap::new(),
        }
    }

    pub fn push_session(&mut self, session: impl Into<String>, replies: impl IntoIterator<Item = Reply>) {
        self.sessions.entry(session.into()).or_default().extend(replies);
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum OnDisk {
            Queue(Vec<Reply>),
            Keyed(MockScript),
        }
        let text =
            std::fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        let parsed: OnDisk =
            serde_json::from_str(&text).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Ok(match parsed {
            OnDisk::Queue(default) => MockScript {
                default,
                sessions: BTreeMap::new(),
            },
            OnDisk::Keyed(script) => script,
        })
    }
}

/// Deterministic scripted backend.
#[derive(Debug)]
pub struct MockBackend {
    id: String,
    script: MockScript,
    cursors: Mutex<HashMap<Option<String>, usize>>,
}

impl MockBackend {
    pub fn new(id: impl Into<String>, script: MockScript) -> Self {
        MockBackend {
            id: id.into(),
            script,
            cursors: Mutex::new(HashMap::new()),
        }
    }
}

impl Backend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let key = request
            .session
            .as_ref()
            .filter(|s| self.script.sessions.contains_key(*s))
            .cloned();
        let queue = match &key {
            Some(s) => &self.script.sessions[s],
            None => &self.script.default,
        };
        let ordinal = {
            let mut cursors = self.cursors.lock().unwrap();
            let cursor = cursors.entry(key.clone()).or_insert(0);
            let ordinal = *cursor;
            *cursor += 1;
            ordinal
        };
        match queue.get(ordinal) {
            Some(Reply::Text(text)) => Ok(text.clone()),
            Some(Reply::Fail { error }) => Err(GatewayError::Backend {
                backend: self.id.clone(),
                message: error.clone(),
            }),
            Some(Reply::RateLimited { .. }) => Err(GatewayError::RateLimited {
                backend: self.id.clone(),
                attempts: 1,
            }),
            None => Err(GatewayError::ScriptExhausted {
                backend: self.id.clone(),
                session: key,
                ordinal,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> CompletionRequest {
        CompletionRequest::new("m", "prompt")
    }

    #[test]
    fn replies_then_exhausts() {
        let backend = MockBackend::new("m", MockScript::queue(["hello"]));
        assert_eq!(backend.complete(&req()).unwrap(), "hello");
        assert!(matches!(
            backend.complete(&req()),
            Err(GatewayError::ScriptExhausted { ordinal: 1, .. })
        ));
    }

    #[test]
    fn sessions_have_independent_ordinals() {
        let mut script = MockScript::queue(["d0"]);
        script.push_session("s1", [Reply::text("a0"), Reply::text("a1")]);
        script.push_session("s2", [Reply::text("b0")]);
        let backend = MockBackend::new("m", script);
        let s = |k: &str| req().with_session(k);
        assert_eq!(backend.complete(&s("s2")).unwrap(), "b0");
        assert_eq!(backend.complete(&s("s1")).unwrap(), "a0");
        assert_eq!(backend.complete(&s("unknown")).unwrap(), "d0");
        assert_eq!(backend.complete(&s("s1")).unwrap(), "a1");
    }

    #[test]
    fn scripted_failures() {
        let script = MockScript {
            default: vec![Reply::fail("boom"), Reply::RateLimited { rate_limited: true }],
            ..Default::default()
        };
        let backend = MockBackend::new("m", script);
        assert!(matches!(backend.complete(&req()), Err(GatewayError::Backend { .. })));
        assert!(matches!(
            backend.complete(&req()),
            Err(GatewayError::RateLimited { .. })
        ));
    }

    #[test]
    fn script_file_forms() {
        let dir = tempfile::tempdir().unwrap();
        let flat = dir.path().join("flat.json");
        std::fs::write(&flat, r#"["a", {"error": "x"}]"#).unwrap();
        let s = MockScript::load(&flat).unwrap();
        assert_eq!(s.default, vec![Reply::text("a"), Reply::fail("x")]);
        let keyed = dir.path().join("keyed.json");
        std::fs::write(&keyed, r#"{"sessions": {"s1": ["b"]}}"#).unwrap();
        let s = MockScript::load(&keyed).unwrap();
        assert_eq!(s.sessions["s1"], vec![Reply::text("b")]);
    }
}
