//! Text-generation backends: an HTTP chat-completions client plus offline
//! generators for tests and dry runs.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::tasks::TaskKind;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LlmError {
    /// Transport failures or server errors that outlived every retry.
    #[error("endpoint error: {0}")]
    Endpoint(String),
    /// The request itself is wrong; retrying cannot help.
    #[error("endpoint configuration error: {0}")]
    Config(String),
}

/// Anything that turns a prompt into a reply. `call` numbers the requests
/// of one run so offline generators stay deterministic under concurrency.
pub trait TextGenerator: Send + Sync {
    fn generate(&self, prompt: &str, call: u64) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmEndpoint {
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Environment variable holding the bearer token, if any.
    pub api_key_env: Option<String>,
    pub request_timeout_secs: f64,
    pub max_retries: u32,
    /// First retry delay; later delays double.
    pub backoff_ms: u64,
}

impl Default for LlmEndpoint {
    fn default() -> Self {
        Self {
            base_url: String::new(),
            model_name: String::new(),
            temperature: 1.0,
            max_tokens: 1024,
            api_key_env: None,
            request_timeout_secs: 120.0,
            max_retries: 3,
            backoff_ms: 500,
        }
    }
}

impl LlmEndpoint {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.base_url.trim().is_empty() {
            return Err(LlmError::Config("base_url is empty".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if !(self.request_timeout_secs > 0.0 && self.request_timeout_secs.is_finite()) {
            return Err(LlmError::Config("request_timeout_secs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

/// Blocking client for `POST {base_url}/chat/completions`.
#[derive(Debug)]
pub struct ChatClient {
    endpoint: LlmEndpoint,
    url: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

enum Attempt {
    Retry(String),
    Fatal(LlmError),
}

impl ChatClient {
    pub fn new(endpoint: LlmEndpoint) -> Result<Self, LlmError> {
        endpoint.validate()?;
        let api_key = match &endpoint.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                LlmError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(endpoint.request_timeout_secs))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        let url = format!("{}/chat/completions", endpoint.base_url.trim_end_matches('/'));
        Ok(Self {
            endpoint,
            url,
            api_key,
            http,
        })
    }

    fn attempt(&self, prompt: &str) -> Result<String, Attempt> {
        let body = ChatRequest {
            model: &self.endpoint.model_name,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: self.endpoint.temperature,
            max_tokens: self.endpoint.max_tokens,
        };
        let mut req = self.http.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(Attempt::Retry(format!("server returned {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(Attempt::Fatal(LlmError::Config(format!(
                "server returned {status}: {}",
                text.chars().take(200).collect::<String>()
            ))));
        }
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| Attempt::Retry(format!("unreadable response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Attempt::Retry("response has no choices[0].message.content".into()))
    }
}

impl TextGenerator for ChatClient {
    fn generate(&self, prompt: &str, _call: u64) -> Result<String, LlmError> {
        let mut delay = Duration::from_millis(self.endpoint.backoff_ms);
        let mut last = String::new();
        for attempt in 0..=self.endpoint.max_retries {
            if attempt > 0 {
                log::warn!("retrying endpoint after: {last}");
                std::thread::sleep(delay);
                delay = delay.saturating_mul(2);
            }
            match self.attempt(prompt) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => last = msg,
            }
        }
        Err(LlmError::Endpoint(format!(
            "{} attempts failed, last: {last}",
            self.endpoint.max_retries + 1
        )))
    }
}

/// Replays fixed replies by call number. Running past the end is an
/// endpoint error unless the script cycles.
#[derive(Debug, Clone)]
pub struct ScriptedGenerator {
    replies: Vec<String>,
    cycle: bool,
}

impl ScriptedGenerator {
    pub fn new(replies: Vec<String>) -> Self {
        Self {
            replies,
            cycle: false,
        }
    }

    pub fn cycling(replies: Vec<String>) -> Self {
        Self {
            replies,
            cycle: true,
        }
    }
}

impl TextGenerator for ScriptedGenerator {
    fn generate(&self, _prompt: &str, call: u64) -> Result<String, LlmError> {
        let i = call as usize;
        let reply = if self.cycle && !self.replies.is_empty() {
            self.replies.get(i % self.replies.len())
        } else {
            self.replies.get(i)
        };
        reply
            .cloned()
            .ok_or_else(|| LlmError::Endpoint(format!("script has no reply for call {call}")))
    }
}

/// Offline stand-in for a model: returns parameterized variants of a few
/// hand-written heuristics, occasionally wrapped in prose, sometimes
/// broken. Replies depend only on the seed, the call number and the prompt.
#[derive(Debug, Clone)]
pub struct StubGenerator {
    kind: TaskKind,
    seed: u64,
}

impl StubGenerator {
    pub fn new(kind: TaskKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    fn rng(&self, prompt: &str, call: u64) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(call.to_le_bytes());
        h.update(prompt.as_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }
}

fn coef<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> String {
    format!("{:.2}", rng.random_range(lo..hi))
}

fn asp_body<R: Rng>(rng: &mut R) -> String {
    let (a, b, c) = (coef(rng, -1.0, 1.0), coef(rng, -1.0, 1.0), coef(rng, -1.0, 1.0));
    format!(
        "import numpy as np\n\n\
         def priority(el: tuple[int, ...], n: int, w: int) -> float:\n    \
             v = np.array(el)\n    \
             ones = float(np.sum(v == 1))\n    \
             twos = float(np.sum(v == 2))\n    \
             lead = float(np.sum(v[: n // 2] > 0))\n    \
             return {a} * ones + {b} * twos + {c} * lead\n"
    )
}

fn tsp_body<R: Rng>(rng: &mut R) -> String {
    let (a, b) = (coef(rng, 0.5, 3.0), coef(rng, -1.0, 1.0));
    if rng.random_bool(0.5) {
        format!(
            "import numpy as np\n\n\
             def select_next_node(current_node: int, destination_node: int, unvisited_nodes: np.ndarray, distance_matrix: np.ndarray) -> int:\n    \
                 d_cur = distance_matrix[current_node][unvisited_nodes]\n    \
                 d_dst = distance_matrix[destination_node][unvisited_nodes]\n    \
                 score = d_cur ** {a} + {b} * d_dst\n    \
                 return unvisited_nodes[int(np.argmin(score))]\n"
        )
    } else {
        format!(
            "import numpy as np\n\n\
             def select_next_node(current_node: int, destination_node: int, unvisited_nodes: np.ndarray, distance_matrix: np.ndarray) -> int:\n    \
                 d_cur = distance_matrix[current_node][unvisited_nodes]\n    \
                 spread = distance_matrix[np.ix_(unvisited_nodes, unvisited_nodes)].mean(axis=1)\n    \
                 score = d_cur ** {a} - {b} * spread\n    \
                 return unvisited_nodes[int(np.argmin(score))]\n"
        )
    }
}

fn cvrp_body<R: Rng>(rng: &mut R) -> String {
    let (a, b, c) = (coef(rng, 0.5, 2.5), coef(rng, 0.0, 1.0), coef(rng, -1.0, 1.0));
    format!(
        "import numpy as np\n\n\
         def select_next_node(current_node: int, depot: int, unvisited_nodes: np.ndarray, rest_capacity: np.ndarray, demands: np.ndarray, distance_matrix: np.ndarray) -> int:\n    \
             best_node, best_score = -1, None\n    \
             for node in unvisited_nodes:\n        \
                 if demands[node] > rest_capacity:\n            \
                     continue\n        \
                 d = distance_matrix[current_node][node]\n        \
                 score = d ** {a} - {b} * demands[node] / 9.0 + {c} * distance_matrix[node][depot]\n        \
                 if best_score is None or score < best_score:\n            \
                     best_node, best_score = node, score\n    \
             return best_node\n"
    )
}

fn crasher(kind: TaskKind) -> String {
    match kind {
        TaskKind::Asp => "def priority(el: tuple[int, ...], n: int, w: int) -> float:\n    \
                          return el[n]\n"
            .to_string(),
        TaskKind::Tsp => "def select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):\n    \
                          return unvisited_nodes[len(unvisited_nodes)]\n"
            .to_string(),
        TaskKind::Cvrp => "def select_next_node(current_node, depot, unvisited_nodes, rest_capacity, demands, distance_matrix):\n    \
                           return unvisited_nodes[len(unvisited_nodes)]\n"
            .to_string(),
    }
}

impl TextGenerator for StubGenerator {
    fn generate(&self, prompt: &str, call: u64) -> Result<String, LlmError> {
        let mut rng = self.rng(prompt, call);
        let roll: f64 = rng.random();
        if roll < 0.05 {
            return Ok("I am not sure how to improve this further.".to_string());
        }
        let code = if roll < 0.10 {
            crasher(self.kind)
        } else {
            match self.kind {
                TaskKind::Asp => asp_body(&mut rng),
                TaskKind::Tsp => tsp_body(&mut rng),
                TaskKind::Cvrp => cvrp_body(&mut rng),
            }
        };
        Ok(if rng.random_bool(0.2) {
            code
        } else {
            format!("Here is a new heuristic.\n\n```python\n{code}```\n\nIt balances the terms above.")
        })
    }
}
