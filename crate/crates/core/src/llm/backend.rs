use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{ChatBackend, ChatReply, ChatRequest, LlmError};

/// OpenAI-compatible chat-completions client.
pub struct HttpBackend {
    url: String,
    api_key: Option<String>,
    model: String,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, model: impl Into<String>) -> Self {
        let mut url: String = endpoint.into();
        if !url.ends_with("/chat/completions") {
            url = format!("{}/chat/completions", url.trim_end_matches('/'));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .expect("http client builds");
        Self {
            url,
            api_key,
            model: model.into(),
            client,
        }
    }
}

fn reply_text(body: &Value) -> Option<String> {
    body.get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}

impl ChatBackend for HttpBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatReply, LlmError> {
        let started = Instant::now();
        tracing::info!(template_id = %req.template_id, "http chat call");
        let mut builder = self.client.post(&self.url).json(&json!({
            "model": self.model,
            "temperature": req.temperature,
            "messages": [{"role": "user", "content": req.rendered_prompt}],
        }));
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder
            .send()
            .map_err(|e| LlmError::BackendUnavailable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(LlmError::BackendUnavailable(format!("HTTP {status}")));
        }
        let body: Value = resp
            .json()
            .map_err(|e| LlmError::MalformedReply(e.to_string()))?;
        let text = reply_text(&body)
            .ok_or_else(|| LlmError::MalformedReply("missing choices[0].message.content".into()))?;
        Ok(ChatReply {
            text,
            backend_id: format!("http:{}", self.model),
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}

/// One scripted reply: fires when the template matches and the prompt
/// contains every needle.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StubRule {
    pub template_id: String,
    #[serde(default)]
    pub needles: Vec<String>,
    pub reply: String,
}

impl StubRule {
    pub fn new(template_id: &str, needle: &str, reply: &str) -> Self {
        Self {
            template_id: template_id.to_string(),
            needles: if needle.is_empty() { vec![] } else { vec![needle.to_string()] },
            reply: reply.to_string(),
        }
    }

    pub fn and(mut self, needle: &str) -> Self {
        self.needles.push(needle.to_string());
        self
    }

    fn matches(&self, req: &ChatRequest) -> bool {
        self.template_id == req.template_id
            && self.needles.iter().all(|n| req.rendered_prompt.contains(n.as_str()))
    }
}

/// Deterministic scripted backend; the first matching rule wins.
#[derive(Debug, Clone, Default)]
pub struct StubBackend {
    rules: Vec<StubRule>,
}

impl StubBackend {
    pub fn new(rules: Vec<StubRule>) -> Self {
        Self { rules }
    }

    pub fn push(&mut self, rule: StubRule) {
        self.rules.push(rule);
    }
}

impl ChatBackend for StubBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatReply, LlmError> {
        self.rules
            .iter()
            .find(|r| r.matches(req))
            .map(|r| ChatReply {
                text: r.reply.clone(),
                backend_id: "stub".into(),
                latency_ms: 0,
            })
            .ok_or_else(|| {
                LlmError::BackendUnavailable(format!("stub has no reply for template {}", req.template_id))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_matching_rule_wins() {
        let stub = StubBackend::new(vec![
            StubRule::new("apply_rule", "GROUP_CONCAT", "A").and("ORA-00904"),
            StubRule::new("apply_rule", "GROUP_CONCAT", "B"),
            StubRule::new("apply_rule", "", "C"),
        ]);
        let ask = |p: &str| stub.complete(&ChatRequest::new("apply_rule", p)).unwrap().text;
        assert_eq!(ask("GROUP_CONCAT ORA-00904"), "A");
        assert_eq!(ask("GROUP_CONCAT"), "B");
        assert_eq!(ask("other"), "C");
        assert!(stub.complete(&ChatRequest::new("plan", "x")).is_err());
    }

    #[test]
    fn endpoint_gets_completion_path() {
        let b = HttpBackend::new("http://localhost:1/v1/", None, "m");
        assert_eq!(b.url, "http://localhost:1/v1/chat/completions");
    }

    #[test]
    fn reply_text_reads_first_choice() {
        let body = json!({"choices":[{"message":{"content":"SELECT 1"}}]});
        assert_eq!(reply_text(&body).as_deref(), Some("SELECT 1"));
        assert_eq!(reply_text(&json!({})), None);
    }
}
