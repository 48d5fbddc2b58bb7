use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbedError, RawEncoding, Side, SubwordEncoder};

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
    side: Side,
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    items: Vec<EmbedItem>,
}

#[derive(Deserialize)]
struct EmbedItem {
    cls: Vec<f32>,
    tokens: Vec<String>,
    vectors: Vec<Vec<f32>>,
}

/// HTTP client for the `POST /embed` service.
#[derive(Debug, Clone)]
pub struct ServiceEncoder {
    endpoint: String,
    agent: ureq::Agent,
}

impl ServiceEncoder {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        ServiceEncoder {
            endpoint: format!("{}/embed", base_url.trim_end_matches('/')),
            agent,
        }
    }
}

fn unavailable(msg: impl Into<String>) -> EmbedError {
    EmbedError::ProviderUnavailable(msg.into())
}

impl SubwordEncoder for ServiceEncoder {
    fn encode_raw(&self, texts: &[&str], side: Side) -> Result<Vec<RawEncoding>, EmbedError> {
        let resp = self
            .agent
            .post(&self.endpoint)
            .send_json(EmbedRequest { texts, side })
            .map_err(|e| match e {
                ureq::Error::Status(code, _) => unavailable(format!("HTTP {code}")),
                other => unavailable(other.to_string()),
            })?;
        if resp.status() != 200 {
            return Err(unavailable(format!("HTTP {}", resp.status())));
        }
        let body: EmbedResponse = resp
            .into_json()
            .map_err(|e| unavailable(format!("schema mismatch: {e}")))?;
        if body.items.len() != texts.len() {
            return Err(unavailable(format!(
                "schema mismatch: {} items for {} texts",
                body.items.len(),
                texts.len()
            )));
        }
        body.items
            .into_iter()
            .map(|item| {
                if item.cls.len() != body.dim
                    || item.tokens.len() != item.vectors.len()
                    || item.vectors.iter().any(|v| v.len() != body.dim)
                {
                    return Err(unavailable("schema mismatch: inconsistent dimensions"));
                }
                Ok(RawEncoding {
                    cls: item.cls.into_iter().map(f64::from).collect(),
                    tokens: item.tokens,
                    vectors: item
                        .vectors
                        .into_iter()
                        .map(|v| v.into_iter().map(f64::from).collect())
                        .collect(),
                })
            })
            .collect()
    }
}
