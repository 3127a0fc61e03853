//! Transports for the external classifier wire protocol.
//!
//! Request: `{"prompt_text": "...", "labels": ["false", "half", "true"]}`
//! Response: `{"probabilities": [0.1, 0.7, 0.2]}`
//!
//! The HTTP transport POSTs one request per call. The stdio transport keeps a
//! child process and exchanges one JSON object per line.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;
use std::time::Duration;

use gdefense_core::inference::{AdapterError, ClassifierAdapter};
use serde::{Deserialize, Serialize};

use crate::gateway::RetryPolicy;

#[derive(Debug, Serialize)]
pub struct AdapterRequest<'a> {
    pub prompt_text: &'a str,
    pub labels: &'a [&'a str],
}

#[derive(Debug, Deserialize)]
struct AdapterResponse {
    probabilities: Vec<f64>,
}

fn decode(text: &str) -> Result<Vec<f64>, AdapterError> {
    serde_json::from_str::<AdapterResponse>(text)
        .map(|r| r.probabilities)
        .map_err(|e| AdapterError::Contract(format!("malformed response: {e}")))
}

pub struct HttpAdapter {
    agent: ureq::Agent,
    endpoint: String,
    retry: RetryPolicy,
}

impl HttpAdapter {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpAdapter { agent, endpoint: endpoint.into(), retry: RetryPolicy::default() }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn call(&self, request: &AdapterRequest) -> Result<Vec<f64>, AdapterError> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(request)
            .map_err(|e| AdapterError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(AdapterError::Transport(format!("HTTP {status}")));
        }
        let body = resp.body_mut().read_to_string().map_err(|e| AdapterError::Transport(e.to_string()))?;
        if status >= 400 {
            return Err(AdapterError::Contract(format!("HTTP {status}: {body}")));
        }
        decode(&body)
    }
}

impl ClassifierAdapter for HttpAdapter {
    fn classify(&self, prompt_text: &str, labels: &[&str]) -> Result<Vec<f64>, AdapterError> {
        let request = AdapterRequest { prompt_text, labels };
        self.retry.run(|| self.call(&request), |e| matches!(e, AdapterError::Transport(_)))
    }
}

struct Pipe {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Talks to a long-running child process over stdin/stdout. A transport
/// failure restarts the process before the next attempt.
pub struct StdioAdapter {
    program: String,
    args: Vec<String>,
    pipe: Mutex<Option<Pipe>>,
    retry: RetryPolicy,
}

impl StdioAdapter {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        StdioAdapter { program: program.into(), args, pipe: Mutex::new(None), retry: RetryPolicy::default() }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn spawn(&self) -> Result<Pipe, AdapterError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| AdapterError::Transport(format!("cannot start {}: {e}", self.program)))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        Ok(Pipe { child, stdin, stdout })
    }

    fn call(&self, line: &str) -> Result<Vec<f64>, AdapterError> {
        let mut guard = self.pipe.lock().unwrap();
        if guard.is_none() {
            *guard = Some(self.spawn()?);
        }
        let pipe = guard.as_mut().expect("pipe just set");
        let exchange = |pipe: &mut Pipe| -> std::io::Result<String> {
            writeln!(pipe.stdin, "{line}")?;
            pipe.stdin.flush()?;
            let mut reply = String::new();
            if pipe.stdout.read_line(&mut reply)? == 0 {
                return Err(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "adapter closed its output"));
            }
            Ok(reply)
        };
        match exchange(pipe) {
            Ok(reply) => decode(reply.trim()),
            Err(e) => {
                if let Some(mut p) = guard.take() {
                    let _ = p.child.kill();
                    let _ = p.child.wait();
                }
                Err(AdapterError::Transport(e.to_string()))
            }
        }
    }
}

impl ClassifierAdapter for StdioAdapter {
    fn classify(&self, prompt_text: &str, labels: &[&str]) -> Result<Vec<f64>, AdapterError> {
        let line = serde_json::to_string(&AdapterRequest { prompt_text, labels }).expect("request serializes");
        self.retry.run(|| self.call(&line), |e| matches!(e, AdapterError::Transport(_)))
    }
}

impl Drop for StdioAdapter {
    fn drop(&mut self) {
        if let Some(mut p) = self.pipe.get_mut().unwrap().take() {
            drop(p.stdin);
            let _ = p.child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> RetryPolicy {
        RetryPolicy { attempts: 2, base_delay: Duration::from_millis(1) }
    }

    #[test]
    fn request_shape() {
        let labels = ["false", "true"];
        let s = serde_json::to_string(&AdapterRequest { prompt_text: "p", labels: &labels }).unwrap();
        assert_eq!(s, r#"{"prompt_text":"p","labels":["false","true"]}"#);
    }

    #[test]
    fn stdio_round_trip() {
        let script = r#"while read -r line; do echo '{"probabilities":[0.2,0.8]}'; done"#;
        let a = StdioAdapter::new("sh", vec!["-c".into(), script.into()]).with_retry(quick());
        assert_eq!(a.classify("p", &["a", "b"]).unwrap(), vec![0.2, 0.8]);
        assert_eq!(a.classify("q", &["a", "b"]).unwrap(), vec![0.2, 0.8]);
    }

    #[test]
    fn stdio_malformed_and_dead() {
        let a = StdioAdapter::new("sh", vec!["-c".into(), "read -r l; echo '[1]'".into()]).with_retry(quick());
        assert!(matches!(a.classify("p", &["a"]), Err(AdapterError::Contract(_))));
        let a = StdioAdapter::new("sh", vec!["-c".into(), "exit 0".into()]).with_retry(quick());
        assert!(matches!(a.classify("p", &["a"]), Err(AdapterError::Transport(_))));
    }
}
