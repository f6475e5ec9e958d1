//! HTTP backends. Each operation is a JSON `POST` to its own endpoint under
//! a base URL; request and response bodies mirror the operation
//! signatures. See the README for the schemas.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::prompts::render;
use super::{
    CommunitySummary, Embedder, EmbeddingVector, HiddenRelation, KeywordCandidates, LanguageModel, PromptTemplates,
    ProviderError, QueryContext, TypeWeightTable,
};
use crate::kg_store::Entity;

pub const ENV_LLM_URL: &str = "CEGOCD_LLM_URL";
pub const ENV_LLM_TOKEN: &str = "CEGOCD_LLM_TOKEN";
pub const ENV_EMBED_URL: &str = "CEGOCD_EMBED_URL";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub llm_url: String,
    /// Falls back to `llm_url` when unset.
    pub embed_url: Option<String>,
    pub token: Option<String>,
    pub max_in_flight: usize,
    pub timeout: Duration,
    /// Used when a `/type_weights` response carries no default.
    pub default_type_weight: f64,
    pub prompts: PromptTemplates,
}

impl RemoteConfig {
    pub fn new(llm_url: impl Into<String>) -> Self {
        Self {
            llm_url: llm_url.into(),
            embed_url: None,
            token: None,
            max_in_flight: 4,
            timeout: Duration::from_secs(120),
            default_type_weight: 0.5,
            prompts: PromptTemplates::default(),
        }
    }

    /// Reads `CEGOCD_LLM_URL`, `CEGOCD_LLM_TOKEN` and `CEGOCD_EMBED_URL`.
    /// Returns `None` when no LLM URL is configured.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(ENV_LLM_URL).ok().filter(|s| !s.is_empty())?;
        let mut cfg = Self::new(url);
        cfg.token = std::env::var(ENV_LLM_TOKEN).ok().filter(|s| !s.is_empty());
        cfg.embed_url = std::env::var(ENV_EMBED_URL).ok().filter(|s| !s.is_empty());
        Some(cfg)
    }
}

/// Counting semaphore bounding concurrent requests.
struct Gate {
    slots: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn new(slots: usize) -> Self {
        Self { slots: Mutex::new(slots.max(1)), freed: Condvar::new() }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut free = self.slots.lock().unwrap_or_else(|p| p.into_inner());
        while *free == 0 {
            free = self.freed.wait(free).unwrap_or_else(|p| p.into_inner());
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.slots.lock().unwrap_or_else(|p| p.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

struct HttpClient {
    agent: ureq::Agent,
    base_url: String,
    token: Option<String>,
    gate: Gate,
}

impl HttpClient {
    fn new(base_url: &str, token: Option<String>, max_in_flight: usize, timeout: Duration) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(true).build().into();
        Self { agent, base_url: base_url.trim_end_matches('/').to_owned(), token, gate: Gate::new(max_in_flight) }
    }

    /// Posts `body` to `endpoint`, retrying once on transport failures and
    /// 5xx statuses.
    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, endpoint: &str, body: &Req) -> Result<Resp, ProviderError> {
        let _slot = self.gate.acquire();
        let url = format!("{}{}", self.base_url, endpoint);
        match self.post_once(&url, body) {
            Err(Attempt::Retryable(first)) => {
                log::warn!("{url}: {first}; retrying once");
                self.post_once(&url, body).map_err(Attempt::into_error)
            }
            other => other.map_err(Attempt::into_error),
        }
    }

    fn post_once<Req: Serialize, Resp: DeserializeOwned>(&self, url: &str, body: &Req) -> Result<Resp, Attempt> {
        let mut request = self.agent.post(url);
        if let Some(token) = &self.token {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = request.send_json(body).map_err(Attempt::classify)?;
        response
            .body_mut()
            .read_json::<Resp>()
            .map_err(|e| Attempt::Fatal(ProviderError::Protocol(format!("{url}: undecodable response: {e}"))))
    }
}

enum Attempt {
    Retryable(String),
    Fatal(ProviderError),
}

impl Attempt {
    fn classify(err: ureq::Error) -> Self {
        match err {
            ureq::Error::StatusCode(code) if code >= 500 => Attempt::Retryable(format!("HTTP {code}")),
            ureq::Error::StatusCode(code) => Attempt::Fatal(ProviderError::Transport(format!("HTTP {code}"))),
            ureq::Error::Json(e) => Attempt::Fatal(ProviderError::Protocol(e.to_string())),
            other => Attempt::Retryable(other.to_string()),
        }
    }

    fn into_error(self) -> ProviderError {
        match self {
            Attempt::Retryable(msg) => ProviderError::Transport(msg),
            Attempt::Fatal(e) => e,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ExtractRequest<'a> {
    query: &'a str,
    prompt: String,
}

#[derive(Debug, Deserialize)]
struct ExtractResponse {
    keywords: Vec<String>,
    #[serde(default)]
    target_types: Vec<String>,
}

#[derive(Debug, Serialize)]
struct WireCandidate<'a> {
    id: &'a str,
    name: &'a str,
    #[serde(rename = "type")]
    entity_type: &'a str,
    score: f64,
}

#[derive(Debug, Serialize)]
struct WireGroup<'a> {
    keyword: &'a str,
    candidates: Vec<WireCandidate<'a>>,
}

#[derive(Debug, Serialize)]
struct FilterEntitiesRequest<'a> {
    context: &'a QueryContext,
    groups: Vec<WireGroup<'a>>,
    prompt: String,
}

#[derive(Debug, Deserialize)]
struct FilterEntitiesResponse {
    kept: Vec<Vec<String>>,
}

#[derive(Debug, Serialize)]
struct FilterRelationsRequest<'a> {
    context: &'a QueryContext,
    candidate_types: &'a BTreeSet<String>,
    prompt: String,
}

#[derive(Debug, Deserialize)]
struct FilterRelationsResponse {
    kept: BTreeSet<String>,
}

#[derive(Debug, Serialize)]
struct TypeWeightsRequest<'a> {
    types: &'a BTreeSet<String>,
    prompt: String,
}

#[derive(Debug, Deserialize)]
struct TypeWeightsResponse {
    weights: BTreeMap<String, f64>,
    #[serde(default)]
    default_weight: Option<f64>,
}

#[derive(Debug, Serialize)]
struct WireEntity<'a> {
    id: &'a str,
    name: &'a str,
    #[serde(rename = "type")]
    entity_type: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    description: Option<&'a str>,
}

impl<'a> From<&'a Entity> for WireEntity<'a> {
    fn from(e: &'a Entity) -> Self {
        Self { id: &e.id, name: &e.name, entity_type: &e.entity_type, description: e.description.as_deref() }
    }
}

#[derive(Debug, Serialize)]
struct JudgePairRequest<'a> {
    context: &'a QueryContext,
    left: WireEntity<'a>,
    right: WireEntity<'a>,
    prompt: String,
}

#[derive(Debug, Deserialize)]
struct JudgePairResponse {
    #[serde(default)]
    relation: Option<HiddenRelation>,
}

#[derive(Debug, Serialize)]
struct SummarizeRequest<'a> {
    context: &'a QueryContext,
    verbalization: &'a str,
    prompt: String,
}

#[derive(Debug, Serialize)]
struct SynthesizeRequest<'a> {
    context: &'a QueryContext,
    communities: &'a [CommunitySummary],
    prompt: String,
}

#[derive(Debug, Deserialize)]
struct SynthesizeResponse {
    answer: String,
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

pub struct RemoteLanguageModel {
    http: HttpClient,
    prompts: PromptTemplates,
    default_type_weight: f64,
}

impl RemoteLanguageModel {
    pub fn new(config: &RemoteConfig) -> Self {
        Self {
            http: HttpClient::new(&config.llm_url, config.token.clone(), config.max_in_flight, config.timeout),
            prompts: config.prompts.clone(),
            default_type_weight: config.default_type_weight,
        }
    }
}

fn context_vars(ctx: &QueryContext) -> (String, String) {
    (ctx.keywords.join(", "), ctx.target_types.join(", "))
}

impl LanguageModel for RemoteLanguageModel {
    fn name(&self) -> &str {
        "remote"
    }

    fn extract_context(&self, query: &str) -> Result<QueryContext, ProviderError> {
        let prompt = render(&self.prompts.extract, &[("query", query)]);
        let resp: ExtractResponse = self.http.post("/extract", &ExtractRequest { query, prompt })?;
        Ok(QueryContext { query: query.to_owned(), keywords: resp.keywords, target_types: resp.target_types })
    }

    fn filter_entities(
        &self,
        ctx: &QueryContext,
        groups: &[KeywordCandidates],
    ) -> Result<Vec<Vec<String>>, ProviderError> {
        let (keywords, _) = context_vars(ctx);
        let listing: String = groups
            .iter()
            .map(|g| {
                let names: Vec<String> =
                    g.candidates.iter().map(|c| format!("{} ({})", c.entity.name, c.entity.id)).collect();
                format!("{}: {}", g.keyword, names.join("; "))
            })
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = render(
            &self.prompts.filter_entities,
            &[("query", &ctx.query), ("keywords", &keywords), ("candidates", &listing)],
        );
        let wire_groups = groups
            .iter()
            .map(|g| WireGroup {
                keyword: &g.keyword,
                candidates: g
                    .candidates
                    .iter()
                    .map(|c| WireCandidate {
                        id: &c.entity.id,
                        name: &c.entity.name,
                        entity_type: &c.entity.entity_type,
                        score: c.score,
                    })
                    .collect(),
            })
            .collect();
        let resp: FilterEntitiesResponse =
            self.http.post("/filter_entities", &FilterEntitiesRequest { context: ctx, groups: wire_groups, prompt })?;
        Ok(resp.kept)
    }

    fn filter_relations(
        &self,
        ctx: &QueryContext,
        candidate_types: &BTreeSet<String>,
    ) -> Result<BTreeSet<String>, ProviderError> {
        let types = candidate_types.iter().cloned().collect::<Vec<_>>().join(", ");
        let prompt = render(&self.prompts.filter_relations, &[("query", &ctx.query), ("types", &types)]);
        let resp: FilterRelationsResponse =
            self.http.post("/filter_relations", &FilterRelationsRequest { context: ctx, candidate_types, prompt })?;
        Ok(resp.kept)
    }

    fn assign_type_weights(&self, types: &BTreeSet<String>) -> Result<TypeWeightTable, ProviderError> {
        let listing = types.iter().cloned().collect::<Vec<_>>().join(", ");
        let prompt = render(&self.prompts.type_weights, &[("types", &listing)]);
        let resp: TypeWeightsResponse = self.http.post("/type_weights", &TypeWeightsRequest { types, prompt })?;
        Ok(TypeWeightTable {
            weights: resp.weights,
            default_weight: resp.default_weight.unwrap_or(self.default_type_weight),
        })
    }

    fn judge_hidden_relation(
        &self,
        pair: (&Entity, &Entity),
        ctx: &QueryContext,
    ) -> Result<Option<HiddenRelation>, ProviderError> {
        let left = format!("{} [{}]", pair.0.name, pair.0.entity_type);
        let right = format!("{} [{}]", pair.1.name, pair.1.entity_type);
        let prompt = render(&self.prompts.judge_pair, &[("query", &ctx.query), ("left", &left), ("right", &right)]);
        let resp: JudgePairResponse = self.http.post(
            "/judge_pair",
            &JudgePairRequest { context: ctx, left: pair.0.into(), right: pair.1.into(), prompt },
        )?;
        Ok(resp.relation)
    }

    fn summarize_community(&self, verbalization: &str, ctx: &QueryContext) -> Result<CommunitySummary, ProviderError> {
        let prompt = render(&self.prompts.summarize, &[("query", &ctx.query), ("verbalization", verbalization)]);
        self.http.post("/summarize", &SummarizeRequest { context: ctx, verbalization, prompt })
    }

    fn synthesize_final(&self, answers: &[CommunitySummary], ctx: &QueryContext) -> Result<String, ProviderError> {
        let listing = answers.iter().map(|a| format!("{}: {}", a.theme, a.answer)).collect::<Vec<_>>().join("\n");
        let prompt = render(&self.prompts.synthesize, &[("query", &ctx.query), ("answers", &listing)]);
        let resp: SynthesizeResponse =
            self.http.post("/synthesize", &SynthesizeRequest { context: ctx, communities: answers, prompt })?;
        Ok(resp.answer)
    }
}

pub struct RemoteEmbedder {
    http: HttpClient,
    dim: OnceLock<usize>,
}

impl RemoteEmbedder {
    pub fn new(config: &RemoteConfig) -> Self {
        let url = config.embed_url.as_deref().unwrap_or(&config.llm_url);
        Self {
            http: HttpClient::new(url, config.token.clone(), config.max_in_flight, config.timeout),
            dim: OnceLock::new(),
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn name(&self) -> &str {
        "remote"
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        let resp: EmbedResponse = self.http.post("/embed", &EmbedRequest { texts })?;
        let vectors: Vec<EmbeddingVector> = resp.vectors.into_iter().map(|values| EmbeddingVector { values }).collect();
        if let Some(first) = vectors.first() {
            let expected = *self.dim.get_or_init(|| first.dim());
            if let Some(bad) = vectors.iter().find(|v| v.dim() != expected) {
                return Err(ProviderError::DimensionDrift { expected, got: bad.dim() });
            }
        }
        Ok(vectors)
    }
}
