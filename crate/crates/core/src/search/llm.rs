//! Language-model generator: builds a prompt from the template and
//! exemplars, sends it through a [`Transport`] and extracts the first fenced
//! code block of the reply.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Candidate, GenerationRequest, Generator, GeneratorError, Lineage, Proposal, Template};

/// Chat-completions endpoint used when none is configured.
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_MODEL: &str = "gpt-4o-mini";
/// Environment variable holding the API key.
pub const API_KEY_VAR: &str = "OPENAI_API_KEY";

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct TransportError(pub String);

/// Sends one prompt and returns the model's reply text.
pub trait Transport {
    fn complete(&mut self, prompt: &str) -> Result<String, TransportError>;
}

/// Builds the prompt for one proposal.
pub fn build_prompt(template: &Template, exemplars: &[Candidate]) -> String {
    let mut p = String::new();
    p.push_str(&template.task);
    p.push_str("\n\nInputs available to the program:\n");
    p.push_str(&template.features_doc);
    p.push_str("\nShape of the answer: ");
    p.push_str(&template.signature);
    p.push_str("\n\nLanguage rules: ");
    p.push_str(&template.constraints);
    p.push_str("\n\n");
    if exemplars.is_empty() {
        p.push_str("Starting points:\n");
        for s in &template.seeds {
            p.push_str(&format!("```\n{}\n```\n", s.trim_end()));
        }
    } else {
        p.push_str("Best programs evaluated so far, strongest first:\n");
        for (i, c) in exemplars.iter().enumerate() {
            let score = c.objective.map_or("n/a".to_string(), |o| format!("{o:.6}"));
            p.push_str(&format!(
                "Program {} (objective {score}):\n```\n{}\n```\n",
                i + 1,
                c.source.trim_end()
            ));
        }
    }
    p.push_str(
        "\nPropose one new program that you expect to beat these. You may recombine or alter their ideas. \
         Put the complete program in a single fenced code block.\n",
    );
    p
}

/// Contents of the first fenced code block, without the language tag.
pub fn extract_code_block(reply: &str) -> Option<String> {
    let start = reply.find("```")?;
    let after = &reply[start + 3..];
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let end = body.find("```")?;
    let code = body[..end].trim();
    (!code.is_empty()).then(|| code.to_string())
}

/// OpenAI-compatible chat-completions client with retry on rate limits,
/// server errors and network failures.
pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: String,
    temperature: f64,
    max_retries: u32,
    backoff: Duration,
}

impl HttpTransport {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: impl Into<String>,
    ) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport {
            agent,
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: api_key.into(),
            temperature: 1.0,
            max_retries: 4,
            backoff: Duration::from_secs(1),
        }
    }

    /// Reads the API key from [`API_KEY_VAR`].
    pub fn from_env(
        endpoint: impl Into<String>,
        model: impl Into<String>,
    ) -> Result<Self, TransportError> {
        let key = std::env::var(API_KEY_VAR)
            .map_err(|_| TransportError(format!("{API_KEY_VAR} is not set")))?;
        Ok(Self::new(endpoint, model, key))
    }

    pub fn with_retries(mut self, max_retries: u32, backoff: Duration) -> Self {
        self.max_retries = max_retries;
        self.backoff = backoff;
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    fn attempt(&self, prompt: &str) -> Result<String, (bool, String)> {
        let body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| (true, e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err((true, format!("HTTP {status}: {text}")));
        }
        if status != 200 {
            return Err((false, format!("HTTP {status}: {text}")));
        }
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| (false, format!("bad response JSON: {e}")))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                (
                    false,
                    "response has no choices[0].message.content".to_string(),
                )
            })
    }
}

impl Transport for HttpTransport {
    fn complete(&mut self, prompt: &str) -> Result<String, TransportError> {
        let mut delay = self.backoff;
        let mut attempt = 0;
        loop {
            match self.attempt(prompt) {
                Ok(reply) => return Ok(reply),
                Err((true, _)) if attempt < self.max_retries => {
                    attempt += 1;
                    thread::sleep(delay);
                    delay *= 2;
                }
                Err((_, msg)) => return Err(TransportError(msg)),
            }
        }
    }
}

/// One recorded prompt/reply exchange.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub prompt: String,
    pub response: String,
}

/// Plays back recorded replies in order; fails once they run out.
pub struct ReplayTransport {
    replies: std::vec::IntoIter<String>,
}

impl ReplayTransport {
    pub fn new(replies: Vec<String>) -> Self {
        ReplayTransport {
            replies: replies.into_iter(),
        }
    }

    /// Loads a JSONL file of [`Exchange`] rows.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TransportError> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| TransportError(format!("{}: {e}", path.display())))?;
        let mut replies = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| TransportError(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let ex: Exchange = serde_json::from_str(&line)
                .map_err(|e| TransportError(format!("{} line {}: {e}", path.display(), i + 1)))?;
            replies.push(ex.response);
        }
        Ok(Self::new(replies))
    }
}

impl Transport for ReplayTransport {
    fn complete(&mut self, _prompt: &str) -> Result<String, TransportError> {
        self.replies
            .next()
            .ok_or_else(|| TransportError("replay exhausted".into()))
    }
}

/// Wraps another transport and appends every exchange to a JSONL file.
pub struct RecordingTransport<T> {
    inner: T,
    out: BufWriter<File>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn create(inner: T, path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(RecordingTransport {
            inner,
            out: BufWriter::new(File::create(path)?),
        })
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn complete(&mut self, prompt: &str) -> Result<String, TransportError> {
        let response = self.inner.complete(prompt)?;
        let row = Exchange {
            prompt: prompt.to_string(),
            response: response.clone(),
        };
        let write = serde_json::to_writer(&mut self.out, &row)
            .map_err(std::io::Error::from)
            .and_then(|_| self.out.write_all(b"\n"))
            .and_then(|_| self.out.flush());
        write.map_err(|e| TransportError(format!("recording exchange: {e}")))?;
        Ok(response)
    }
}

/// Asks a language model for one program per proposal.
pub struct LlmGenerator {
    transport: Box<dyn Transport>,
}

impl LlmGenerator {
    pub fn new(transport: Box<dyn Transport>) -> Self {
        LlmGenerator { transport }
    }
}

impl Generator for LlmGenerator {
    fn name(&self) -> &str {
        "llm"
    }

    fn propose(&mut self, req: &GenerationRequest<'_>) -> Result<Vec<Proposal>, GeneratorError> {
        let prompt = build_prompt(req.template, req.exemplars);
        let parents: Vec<u64> = req.exemplars.iter().map(|c| c.id).collect();
        let mut out = Vec::with_capacity(req.count);
        for _ in 0..req.count {
            let reply = self
                .transport
                .complete(&prompt)
                .map_err(|e| GeneratorError(e.0))?;
            let proposal = match extract_code_block(&reply) {
                Some(source) => Proposal {
                    source,
                    lineage: Lineage::Llm,
                    parents: parents.clone(),
                    failure: None,
                },
                None => Proposal {
                    source: reply,
                    lineage: Lineage::Llm,
                    parents: parents.clone(),
                    failure: Some("reply contains no fenced code block".into()),
                },
            };
            out.push(proposal);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::Status;

    #[test]
    fn extracts_first_block() {
        assert_eq!(
            extract_code_block("Try:\n```dsl\nobj.count * 2\n```\nand ```\nvtime\n```").unwrap(),
            "obj.count * 2"
        );
        assert_eq!(extract_code_block("```\n  vtime\n```").unwrap(), "vtime");
        assert!(extract_code_block("just vtime").is_none());
        assert!(extract_code_block("```\nunterminated").is_none());
        assert!(extract_code_block("```\n\n```").is_none());
    }

    #[test]
    fn prompt_lists_exemplars_best_first() {
        let t = Template::rank_default();
        let mk = |id, source: &str, objective| Candidate {
            id,
            round: 0,
            index: 0,
            lineage: Lineage::Seed,
            parents: vec![],
            source: source.into(),
            status: Status::Ok,
            objective: Some(objective),
            error: None,
            results: vec![],
        };
        let p = build_prompt(&t, &[mk(4, "obj.count", 0.4), mk(1, "vtime", 0.3)]);
        let a = p.find("obj.count\n```").unwrap();
        let b = p.find("vtime\n```").unwrap();
        assert!(a < b);
        assert!(p.contains("0.400000"));
        assert!(p.contains("percentile"));
        assert!(build_prompt(&t, &[]).contains("```\nvtime\n```"));
    }

    #[test]
    fn recording_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.jsonl");
        {
            let inner = ReplayTransport::new(vec!["```\nvtime\n```".into(), "no code".into()]);
            let mut rec = RecordingTransport::create(inner, &path).unwrap();
            rec.complete("p1").unwrap();
            rec.complete("p2").unwrap();
            assert!(rec.complete("p3").is_err());
        }
        let mut replay = ReplayTransport::load(&path).unwrap();
        assert_eq!(replay.complete("x").unwrap(), "```\nvtime\n```");
        assert_eq!(replay.complete("x").unwrap(), "no code");
        assert!(replay.complete("x").is_err());
    }
}
