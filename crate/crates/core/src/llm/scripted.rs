use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CompletionRequest, CompletionResult, Provider, ProviderError, RequestTag};

/// One line of a script file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRecord {
    pub tag: RequestTag,
    pub text: String,
}

/// Replays canned responses. Each request receives the next unused record
/// with the same tag, in file order. `narrate` requests without a matching
/// record echo the user prompt back.
pub struct ScriptedProvider {
    queues: Mutex<HashMap<RequestTag, VecDeque<String>>>,
}

impl ScriptedProvider {
    pub fn new(records: impl IntoIterator<Item = ScriptRecord>) -> Self {
        let mut queues: HashMap<RequestTag, VecDeque<String>> = HashMap::new();
        for r in records {
            queues.entry(r.tag).or_default().push_back(r.text);
        }
        Self {
            queues: Mutex::new(queues),
        }
    }

    /// Parses a JSON-lines script; blank lines are skipped.
    pub fn from_jsonl(text: &str) -> Result<Self, ProviderError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ScriptRecord = serde_json::from_str(line)
                .map_err(|e| ProviderError::Config(format!("script line {}: {e}", i + 1)))?;
            records.push(rec);
        }
        Ok(Self::new(records))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }

    pub fn remaining(&self, tag: RequestTag) -> usize {
        self.queues
            .lock()
            .expect("script lock poisoned")
            .get(&tag)
            .map_or(0, VecDeque::len)
    }
}

impl Provider for ScriptedProvider {
    fn id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, ProviderError> {
        request.validate()?;
        let next = self
            .queues
            .lock()
            .expect("script lock poisoned")
            .get_mut(&request.tag)
            .and_then(VecDeque::pop_front);
        let text = match (next, request.tag) {
            (Some(text), _) => text,
            (None, RequestTag::Narrate) => request.user_prompt.clone(),
            (None, tag) => return Err(ProviderError::Exhausted(tag)),
        };
        Ok(CompletionResult {
            text,
            provider_id: "scripted".into(),
            latency_ms: 0,
            attempt: 1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(tag: RequestTag) -> CompletionRequest {
        CompletionRequest::new(tag, "system", "user")
    }

    #[test]
    fn replays_by_tag_in_order() {
        let p = ScriptedProvider::from_jsonl(
            r#"{"tag":"init","text":"a"}
{"tag":"reflection","text":"r1"}

{"tag":"init","text":"b"}"#,
        )
        .unwrap();
        assert_eq!(p.complete(&req(RequestTag::Reflection)).unwrap().text, "r1");
        assert_eq!(p.complete(&req(RequestTag::Init)).unwrap().text, "a");
        assert_eq!(p.complete(&req(RequestTag::Init)).unwrap().text, "b");
        assert_eq!(p.remaining(RequestTag::Init), 0);
    }

    #[test]
    fn exhaustion_names_the_tag() {
        let p = ScriptedProvider::new([ScriptRecord {
            tag: RequestTag::Init,
            text: "x".into(),
        }]);
        let err = p.complete(&req(RequestTag::Crossover)).unwrap_err();
        assert!(matches!(err, ProviderError::Exhausted(RequestTag::Crossover)));
        assert!(err.to_string().contains("crossover"));
        // init records are not served to other tags
        assert_eq!(p.remaining(RequestTag::Init), 1);
    }

    #[test]
    fn narrate_echoes_when_unscripted() {
        let p = ScriptedProvider::new([]);
        assert_eq!(p.complete(&req(RequestTag::Narrate)).unwrap().text, "user");
    }

    #[test]
    fn malformed_script_line() {
        let err = ScriptedProvider::from_jsonl("{\"tag\":\"init\"}\n").err().unwrap();
        assert!(err.to_string().contains("line 1"));
        assert!(ScriptedProvider::from_jsonl("{\"tag\":\"bogus\",\"text\":\"\"}").is_err());
    }
}
