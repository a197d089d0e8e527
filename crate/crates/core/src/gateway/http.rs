use std::time::Duration;

use rand::Rng;
use serde_json::{json, Value};

use super::{Backend, CompletionRequest, GatewayError, RetryPolicy};

/// Chat-completion client for an OpenAI-shaped endpoint.
pub struct HttpBackend {
    id: String,
    endpoint: String,
    model_name: String,
    auth_env_var: Option<String>,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

enum Attempt {
    Done(String),
    Retry(GatewayError),
    Fatal(GatewayError),
}

impl HttpBackend {
    pub fn new(
        id: impl Into<String>,
        endpoint: impl Into<String>,
        model_name: impl Into<String>,
        auth_env_var: Option<String>,
        retry: RetryPolicy,
    ) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        HttpBackend {
            id: id.into(),
            endpoint: endpoint.into(),
            model_name: model_name.into(),
            auth_env_var,
            retry,
            agent,
        }
    }

    pub fn request_body(&self, request: &CompletionRequest) -> Value {
        let mut body = json!({
            "model": self.model_name,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    fn attempt(&self, body: &Value, token: Option<&str>, attempt: u32) -> Attempt {
        let mut call = self.agent.post(&self.endpoint);
        if let Some(token) = token {
            call = call.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = match call.send_json(body) {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry(GatewayError::Transport {
                    backend: self.id.clone(),
                    message: e.to_string(),
                    attempts: attempt,
                })
            }
        };
        let status = response.status().as_u16();
        if status == 429 {
            return Attempt::Retry(GatewayError::RateLimited {
                backend: self.id.clone(),
                attempts: attempt,
            });
        }
        if !(200..300).contains(&status) {
            let err = GatewayError::Http {
                backend: self.id.clone(),
                status,
                attempts: attempt,
            };
            return if status >= 500 {
                Attempt::Retry(err)
            } else {
                Attempt::Fatal(err)
            };
        }
        let decoded: Result<Value, _> = response.body_mut().read_json();
        let text = decoded
            .ok()
            .and_then(|v| v["choices"][0]["message"]["content"].as_str().map(str::to_string));
        match text {
            Some(text) => Attempt::Done(text),
            None => Attempt::Fatal(GatewayError::Decode {
                backend: self.id.clone(),
                message: "response lacks choices[0].message.content".into(),
            }),
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        // Full jitter: uniform in [0, base * 2^(attempt-1)].
        let cap = self.retry.backoff_base_ms.saturating_mul(1u64 << (attempt - 1).min(16));
        Duration::from_millis(rand::rng().random_range(0..=cap))
    }
}

impl Backend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let token = match &self.auth_env_var {
            Some(var) => Some(std::env::var(var).map_err(|_| GatewayError::MissingCredential(var.clone()))?),
            None => None,
        };
        let body = self.request_body(request);
        let max_attempts = self.retry.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match self.attempt(&body, token.as_deref(), attempt) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(err) => return Err(err),
                Attempt::Retry(err) if attempt >= max_attempts => return Err(err),
                Attempt::Retry(err) => {
                    log::warn!("{err}; retrying");
                    std::thread::sleep(self.backoff(attempt));
                    attempt += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    /// Serves one canned (status, body) per connection, capturing request bodies.
    fn serve(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let captured = seen.clone();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                let mut headers = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    headers.push_str(&line);
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                captured
                    .lock()
                    .unwrap()
                    .push(format!("{headers}\n{}", String::from_utf8(buf).unwrap()));
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (url, seen)
    }

    fn ok_body(text: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
    }

    fn backend(url: &str, max_attempts: u32) -> HttpBackend {
        HttpBackend::new(
            "h",
            url,
            "test-model",
            None,
            RetryPolicy {
                max_attempts,
                backoff_base_ms: 1,
            },
        )
    }

    #[test]
    fn retries_rate_limit_then_succeeds() {
        let (url, seen) = serve(vec![(429, "{}".into()), (200, ok_body("hi"))]);
        let req = CompletionRequest::new("h", "hello").with_temperature(1.2);
        assert_eq!(backend(&url, 2).complete(&req).unwrap(), "hi");
        let seen = seen.lock().unwrap();
        assert_eq!(seen.len(), 2);
        let body: Value = serde_json::from_str(seen[1].split("\n\n").last().unwrap().trim()).unwrap();
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["messages"][0]["content"], "hello");
        assert_eq!(body["temperature"], 1.2);
    }

    #[test]
    fn rate_limit_is_distinct_after_budget() {
        let (url, _) = serve(vec![(429, "{}".into()), (429, "{}".into())]);
        let err = backend(&url, 2)
            .complete(&CompletionRequest::new("h", "x"))
            .unwrap_err();
        assert!(matches!(err, GatewayError::RateLimited { attempts: 2, .. }), "{err}");
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, seen) = serve(vec![(400, "{}".into()), (200, ok_body("late"))]);
        let err = backend(&url, 3)
            .complete(&CompletionRequest::new("h", "x"))
            .unwrap_err();
        assert!(matches!(
            err,
            GatewayError::Http {
                status: 400,
                attempts: 1,
                ..
            }
        ));
        assert_eq!(seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn server_errors_are_retried() {
        let (url, _) = serve(vec![(503, "{}".into()), (200, ok_body("ok"))]);
        assert_eq!(
            backend(&url, 2).complete(&CompletionRequest::new("h", "x")).unwrap(),
            "ok"
        );
    }

    #[test]
    fn bearer_token_from_env() {
        let (url, seen) = serve(vec![(200, ok_body("ok"))]);
        std::env::set_var("FORGE_TEST_TOKEN_A", "sekrit");
        let b = HttpBackend::new("h", url, "m", Some("FORGE_TEST_TOKEN_A".into()), RetryPolicy::default());
        b.complete(&CompletionRequest::new("h", "x")).unwrap();
        assert!(seen.lock().unwrap()[0]
            .to_ascii_lowercase()
            .contains("authorization: bearer sekrit"));
    }

    #[test]
    fn missing_credential() {
        let b = HttpBackend::new(
            "h",
            "http://127.0.0.1:9",
            "m",
            Some("FORGE_TEST_UNSET_VAR".into()),
            RetryPolicy::default(),
        );
        assert!(matches!(
            b.complete(&CompletionRequest::new("h", "x")),
            Err(GatewayError::MissingCredential(_))
        ));
    }
}
