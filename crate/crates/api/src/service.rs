//! The session and its request dispatcher.
//!
//! One analyst session per process. Reads take the session read lock; every
//! mutating request first takes the mutation lock, computes from a snapshot
//! of the session and then swaps the result in under a short write lock, so
//! reads are never blocked by a long computation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use cohortloop::cohort::{apply_filter, channel_summary, CohortFilter, CohortSelection};
use cohortloop::ehr::{corpus_summary, parse_corpus, Corpus, CorpusSummary};
use cohortloop::logstore::{LogStore, RoundSummary};
use cohortloop::model::ForestConfig;
use cohortloop::pipeline::{failed_round, replay, run_round, RoundArtifacts, TrainRequest};
use cohortloop::projection::{build_feature_matrix, build_glyph, run_projection, FeatureSchema, GlyphSpec, Layout, ProjectionConfig};
use cohortloop::sampling::{
    balance_report, extract_positives, sample_negatives, BalanceReport, SampleSet, SamplingRequest, SamplingStrategy, ScoredNegative,
};
use cohortloop::synth::{generate_corpus, RiskSpec};
use cohortloop::timeline::{build_timeline, expand_event, LaneKind};

use crate::clock::Clock;
use crate::config::ServiceConfig;
use crate::error::ApiError;
use crate::lasso;

/// Rounds whose artifacts are kept in memory for the view and shap routes;
/// older ones are replayed from the log on demand.
const ROUND_CACHE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub status: u16,
    pub body: Value,
}

impl Response {
    fn ok(body: Value) -> Self {
        Response { status: 200, body }
    }
}

impl From<ApiError> for Response {
    fn from(e: ApiError) -> Self {
        Response { status: e.status, body: e.body() }
    }
}

type Result<T> = std::result::Result<T, ApiError>;

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionState {
    pub features: Vec<String>,
    pub layout: Layout,
    pub glyphs: Vec<GlyphSpec>,
}

#[derive(Clone)]
struct Loaded {
    corpus: Arc<Corpus>,
    summary: Arc<CorpusSummary>,
    selection: Arc<CohortSelection>,
    projection: Option<Arc<ProjectionState>>,
    /// Positives and negatives curated so far. Feature names are filled in
    /// from the feature list when the draft is used.
    draft: Arc<SampleSet>,
}

#[derive(Clone, Default)]
struct Session {
    version: u64,
    /// Ordered by insertion.
    features: Vec<String>,
    loaded: Option<Loaded>,
}

pub struct Service {
    config: ServiceConfig,
    clock: Arc<dyn Clock>,
    schema: FeatureSchema,
    store: LogStore,
    session: RwLock<Session>,
    mutation: Mutex<()>,
    rounds: Mutex<BTreeMap<u64, Arc<RoundArtifacts>>>,
}

fn empty_draft() -> SampleSet {
    SampleSet::manual(Vec::new(), Vec::new(), Vec::new())
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("response types serialize")
}

/// Parses a request body, inserting `defaults` for absent top-level keys.
/// An empty body is read as `{}`.
fn parse_body<T: DeserializeOwned>(body: &[u8], defaults: &[(&str, Value)]) -> Result<T> {
    let mut value: Value = if body.iter().all(u8::is_ascii_whitespace) {
        Value::Object(Map::new())
    } else {
        serde_json::from_slice(body).map_err(|e| ApiError::bad_body(String::new(), format!("malformed JSON: {e}")))?
    };
    if let Value::Object(map) = &mut value {
        for (k, v) in defaults {
            map.entry(k.to_string()).or_insert_with(|| v.clone());
        }
    }
    serde_path_to_error::deserialize(value).map_err(|e| ApiError::bad_body(e.path().to_string(), e.inner().to_string()))
}

fn parse_id<T: std::str::FromStr>(segment: &str, what: &str) -> Result<T> {
    segment.parse().map_err(|_| ApiError::not_found(format!("no {what} {segment:?}")))
}

fn lane_kind(segment: &str) -> Result<LaneKind> {
    serde_json::from_value(Value::String(segment.to_string())).map_err(|_| ApiError::not_found(format!("no lane {segment:?}")))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadBody {
    #[serde(default)]
    path: Option<PathBuf>,
    #[serde(default)]
    corpus: Option<Value>,
    #[serde(default)]
    synthetic: Option<RiskSpec>,
}

#[derive(Debug, Deserialize)]
struct ProjectionBody {
    #[serde(flatten)]
    config: ProjectionConfig,
    #[serde(default)]
    features: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LassoBody {
    polygon: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum FeatureAction {
    Add,
    Remove,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureBody {
    action: FeatureAction,
    feature: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SamplingBody {
    strategy: SamplingStrategy,
    #[serde(default)]
    k: Option<usize>,
    rng_seed: u64,
    /// Covariates of the balance report; defaults to the feature list.
    #[serde(default)]
    covariates: Option<Vec<String>>,
}

#[derive(Debug, Serialize)]
struct SamplingResponse<'a> {
    version: u64,
    sample_set: &'a SampleSet,
    #[serde(skip_serializing_if = "Option::is_none")]
    negative_scores: Option<&'a Vec<ScoredNegative>>,
    balance: Option<&'a BalanceReport>,
}

impl Service {
    pub fn new(config: ServiceConfig, clock: Arc<dyn Clock>) -> std::result::Result<Self, cohortloop::logstore::LogError> {
        let store = LogStore::open(&config.log_dir)?;
        Ok(Service {
            config,
            clock,
            schema: FeatureSchema::standard(),
            store,
            session: RwLock::new(Session::default()),
            mutation: Mutex::new(()),
            rounds: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn version(&self) -> u64 {
        self.snapshot().version
    }

    fn snapshot(&self) -> Session {
        self.session.read().expect("session lock").clone()
    }

    fn loaded(&self) -> Result<(Session, Loaded)> {
        let s = self.snapshot();
        let l = s.loaded.clone().ok_or_else(|| ApiError::new(409, "CorpusNotLoaded", "no corpus is loaded"))?;
        Ok((s, l))
    }

    /// Applies `f` to the session under the write lock and bumps the version.
    fn commit(&self, f: impl FnOnce(&mut Session)) -> u64 {
        let mut s = self.session.write().expect("session lock");
        f(&mut s);
        s.version += 1;
        s.version
    }

    fn seed(&self) -> Value {
        json!(self.config.default_seed)
    }

    /// Routes one request. `path` may carry a query string, which is ignored.
    pub fn dispatch(&self, method: &str, path: &str, body: &[u8]) -> Response {
        match self.route(method, path, body) {
            Ok(v) => Response::ok(v),
            Err(e) => e.into(),
        }
    }

    fn route(&self, method: &str, path: &str, body: &[u8]) -> Result<Value> {
        let path = path.split('?').next().unwrap_or("");
        let segs: Vec<&str> = path.split('/').filter(|s| !s.is_empty()).collect();
        let get = method.eq_ignore_ascii_case("GET");
        let post = method.eq_ignore_ascii_case("POST");
        match segs.as_slice() {
            ["health"] if get => Ok(self.health()),
            ["schema"] if get => Ok(crate::api_schema()),
            ["session"] if get => self.session_view(),
            ["corpus", "load"] if post => self.load(body),
            ["summary"] if get => Ok(to_value(&*self.loaded()?.1.summary)),
            ["cohort", "filter"] if post => self.filter(body),
            ["cohort"] | ["cohort", "channels"] if get => {
                let (_, l) = self.loaded()?;
                Ok(to_value(&channel_summary(&l.corpus, &l.selection)))
            }
            ["projection"] if post => self.project(body),
            ["projection"] if get => {
                let (_, l) = self.loaded()?;
                let p = l.projection.ok_or_else(no_layout)?;
                Ok(to_value(&*p))
            }
            ["patient", id, "timeline"] if get => {
                let (_, l) = self.loaded()?;
                let record = l.corpus.get(id).ok_or_else(|| ApiError::not_found(format!("no patient {id:?}")))?;
                Ok(to_value(&build_timeline(record)?))
            }
            ["patient", id, "timeline", lane, index] if get => {
                let (_, l) = self.loaded()?;
                let record = l.corpus.get(id).ok_or_else(|| ApiError::not_found(format!("no patient {id:?}")))?;
                let doc = build_timeline(record)?;
                Ok(to_value(&expand_event(&doc, record, lane_kind(lane)?, parse_id(index, "event")?)?))
            }
            ["select", "lasso"] if post => self.lasso(body),
            ["select", "clear"] if post => {
                let _m = self.mutation.lock().expect("mutation lock");
                self.loaded()?;
                let version = self.commit(|s| {
                    if let Some(l) = &mut s.loaded {
                        l.draft = Arc::new(empty_draft());
                    }
                });
                Ok(json!({ "version": version, "draft": empty_draft() }))
            }
            ["features"] if get => {
                let s = self.snapshot();
                Ok(json!({ "features": s.features, "available": self.schema.names }))
            }
            ["features"] if post => self.update_features(body),
            ["sampling"] if post => self.sampling(body),
            ["model", "train"] if post => self.train(body),
            ["model", round, "status"] if get => {
                let round = self.store.get_round(parse_id(round, "round")?)?;
                Ok(json!({ "round_id": round.round_id, "status": round.status }))
            }
            ["model", round, "view"] if get => Ok(to_value(&self.artifacts(parse_id(round, "round")?)?.view())),
            ["model", round, "shap"] if get => Ok(to_value(&self.artifacts(parse_id(round, "round")?)?.shap)),
            ["logs"] if get => Ok(json!({ "rounds": self.store.list_rounds() })),
            ["logs", id] if get => Ok(to_value(&self.store.get_round(parse_id(id, "round")?)?)),
            other if is_known(other) => Err(ApiError::new(405, "MethodNotAllowed", format!("{method} not allowed on {path}"))),
            _ => Err(ApiError::not_found(format!("no route {method} {path}"))),
        }
    }

    fn health(&self) -> Value {
        let s = self.snapshot();
        match &s.loaded {
            None => json!({ "status": "empty", "version": s.version }),
            Some(l) => json!({
                "status": "ready",
                "version": s.version,
                "patients": l.corpus.patients.len(),
                "rounds": self.store.len(),
            }),
        }
    }

    fn draft_with_features(draft: &SampleSet, features: &[String]) -> SampleSet {
        SampleSet { feature_names: features.to_vec(), ..draft.clone() }
    }

    fn session_view(&self) -> Result<Value> {
        let s = self.snapshot();
        Ok(match &s.loaded {
            None => json!({ "version": s.version, "loaded": false, "features": s.features }),
            Some(l) => json!({
                "version": s.version,
                "loaded": true,
                "features": s.features,
                "selection": { "filter": l.selection.filter, "size": l.selection.len() },
                "has_layout": l.projection.is_some(),
                "draft": Self::draft_with_features(&l.draft, &s.features),
            }),
        })
    }

    fn load(&self, body: &[u8]) -> Result<Value> {
        let b: LoadBody = parse_body(body, &[])?;
        let _m = self.mutation.lock().expect("mutation lock");
        let given = [b.path.is_some(), b.corpus.is_some(), b.synthetic.is_some()].iter().filter(|&&x| x).count();
        if given > 1 {
            return Err(ApiError::bad_body(String::new(), "give at most one of path, corpus, synthetic"));
        }
        let corpus = if let Some(value) = b.corpus {
            parse_corpus(&serde_json::to_vec(&value).expect("value serializes"))?
        } else if let Some(spec) = b.synthetic {
            generate_corpus(&spec)?.0
        } else {
            let path = b
                .path
                .or_else(|| self.config.corpus_path.clone())
                .ok_or_else(|| ApiError::bad_body(String::new(), "one of path, corpus, synthetic is required"))?;
            let bytes = std::fs::read(&path)
                .map_err(|e| ApiError::unprocessable("StorageError", format!("cannot read {}: {e}", path.display())))?;
            parse_corpus(&bytes)?
        };
        let summary = corpus_summary(&corpus);
        let selection = CohortSelection::all(&corpus, self.clock.now());
        let loaded = Loaded {
            corpus: Arc::new(corpus),
            summary: Arc::new(summary.clone()),
            selection: Arc::new(selection),
            projection: None,
            draft: Arc::new(empty_draft()),
        };
        self.rounds.lock().expect("round cache").clear();
        let version = self.commit(|s| s.loaded = Some(loaded));
        Ok(json!({ "version": version, "summary": summary }))
    }

    fn filter(&self, body: &[u8]) -> Result<Value> {
        self.loaded()?;
        let filter: CohortFilter = parse_body(body, &[])?;
        let _m = self.mutation.lock().expect("mutation lock");
        let (_, l) = self.loaded()?;
        let selection = apply_filter(&l.corpus, &filter, self.clock.now())?;
        let out = json!({ "size": selection.len(), "filter": selection.filter, "patient_ids": selection.patient_ids, "created_at": selection.created_at });
        let version = self.commit(|s| {
            if let Some(l) = &mut s.loaded {
                l.selection = Arc::new(selection);
                // a layout of the previous selection would let the lasso reach
                // patients outside the new one
                l.projection = None;
            }
        });
        Ok(json!({ "version": version, "selection": out }))
    }

    fn project(&self, body: &[u8]) -> Result<Value> {
        self.loaded()?;
        let b: ProjectionBody = parse_body(body, &[("rng_seed", self.seed())])?;
        let _m = self.mutation.lock().expect("mutation lock");
        let (_, l) = self.loaded()?;
        let features = b.features.unwrap_or_else(|| self.schema.names.clone());
        let matrix = build_feature_matrix(&l.corpus, &l.selection.patient_ids, &self.schema)?.select_columns(&features)?;
        let layout = run_projection(&matrix, &b.config)?;
        let glyphs = layout.ids.iter().filter_map(|id| l.corpus.get(id)).map(build_glyph).collect();
        let state = Arc::new(ProjectionState { features, layout, glyphs });
        let version = self.commit(|s| {
            if let Some(l) = &mut s.loaded {
                l.projection = Some(state.clone());
            }
        });
        let mut out = to_value(&*state);
        out["version"] = json!(version);
        Ok(out)
    }

    fn lasso(&self, body: &[u8]) -> Result<Value> {
        self.loaded()?;
        let b: LassoBody = parse_body(body, &[])?;
        let _m = self.mutation.lock().expect("mutation lock");
        let (s, l) = self.loaded()?;
        let projection = l.projection.ok_or_else(no_layout)?;
        lasso::check_polygon(&b.polygon)?;
        let layout = &projection.layout;
        let selected: Vec<String> = layout
            .ids
            .iter()
            .zip(&layout.coords)
            .filter(|(_, &c)| lasso::contains(&b.polygon, c))
            .map(|(id, _)| id.clone())
            .collect();

        let mut positives: BTreeSet<String> = l.draft.positives.iter().cloned().collect();
        let mut negatives: BTreeSet<String> = l.draft.negatives.iter().cloned().collect();
        let mut changed = false;
        for id in &selected {
            let sequela = l.corpus.get(id).is_some_and(|r| r.outcome.has_sequela);
            changed |= if sequela { positives.insert(id.clone()) } else { negatives.insert(id.clone()) };
        }
        let draft = if changed { Arc::new(SampleSet::manual(positives, negatives, Vec::new())) } else { l.draft.clone() };
        let version = self.commit(|s| {
            if let Some(l) = &mut s.loaded {
                l.draft = draft.clone();
            }
        });
        Ok(json!({ "version": version, "selected": selected, "draft": Self::draft_with_features(&draft, &s.features) }))
    }

    fn update_features(&self, body: &[u8]) -> Result<Value> {
        let b: FeatureBody = parse_body(body, &[])?;
        let _m = self.mutation.lock().expect("mutation lock");
        let mut features = self.snapshot().features;
        let unknown = || ApiError::unprocessable("UnknownFeature", format!("unknown feature {:?}", b.feature));
        match b.action {
            FeatureAction::Add => {
                if !self.schema.contains(&b.feature) {
                    return Err(unknown());
                }
                if !features.contains(&b.feature) {
                    features.push(b.feature.clone());
                }
            }
            FeatureAction::Remove => {
                let at = features.iter().position(|f| *f == b.feature).ok_or_else(unknown)?;
                features.remove(at);
            }
        }
        let version = self.commit(|s| s.features = features.clone());
        Ok(json!({ "version": version, "features": features }))
    }

    fn sampling(&self, body: &[u8]) -> Result<Value> {
        self.loaded()?;
        let b: SamplingBody = parse_body(body, &[("rng_seed", self.seed())])?;
        let _m = self.mutation.lock().expect("mutation lock");
        let (s, l) = self.loaded()?;
        // lasso-curated positives take precedence over the extracted ones
        let positives = if l.draft.strategy == SamplingStrategy::Manual && !l.draft.positives.is_empty() {
            l.draft.positives.clone()
        } else {
            extract_positives(&l.corpus, &l.selection)
        };
        let request = SamplingRequest { strategy: b.strategy, k: b.k, rng_seed: b.rng_seed, feature_names: s.features.clone() };
        let outcome = sample_negatives(&l.corpus, &self.schema, &l.selection, &positives, &request)?;
        let covariates = b.covariates.unwrap_or_else(|| s.features.clone());
        let balance = balance_report(&l.corpus, &self.schema, &l.selection, &outcome.sample_set, &covariates).ok();
        let draft = Arc::new(outcome.sample_set.clone());
        let version = self.commit(|s| {
            if let Some(l) = &mut s.loaded {
                l.draft = draft;
            }
        });
        Ok(to_value(&SamplingResponse {
            version,
            sample_set: &outcome.sample_set,
            negative_scores: outcome.negative_scores.as_ref(),
            balance: balance.as_ref(),
        }))
    }

    fn train(&self, body: &[u8]) -> Result<Value> {
        self.loaded()?;
        let mut request: TrainRequest = parse_body(body, &[("split_seed", self.seed()), ("forest", json!({}))])?;
        if !body_has_forest_seed(body) {
            request.forest = ForestConfig { rng_seed: self.config.default_seed, ..request.forest };
        }
        let _m = self.mutation.lock().expect("mutation lock");
        let (s, l) = self.loaded()?;
        let sample_set = Self::draft_with_features(&l.draft, &s.features);
        let created_at = self.clock.now();
        match run_round(&l.corpus, &self.schema, &sample_set, &request, created_at) {
            Ok(mut artifacts) => {
                let round_id = self.store.record_round(artifacts.round.clone())?;
                artifacts.round.round_id = round_id;
                let status = artifacts.round.status.clone();
                let eval = artifacts.round.eval.clone();
                self.cache(Arc::new(artifacts));
                let version = self.commit(|_| {});
                Ok(json!({ "version": version, "round_id": round_id, "status": status, "eval": eval }))
            }
            Err(err) => {
                let round_id = self.store.record_round(failed_round(&sample_set, &request, created_at, &err))?;
                Err(ApiError::from(err).with_details(json!({ "round_id": round_id })))
            }
        }
    }

    fn cache(&self, artifacts: Arc<RoundArtifacts>) {
        let mut cache = self.rounds.lock().expect("round cache");
        cache.insert(artifacts.round.round_id, artifacts);
        while cache.len() > ROUND_CACHE {
            let oldest = *cache.keys().next().expect("non-empty");
            cache.remove(&oldest);
        }
    }

    /// Artifacts of a stored round, replayed against the loaded corpus when
    /// not cached.
    fn artifacts(&self, round_id: u64) -> Result<Arc<RoundArtifacts>> {
        if let Some(a) = self.rounds.lock().expect("round cache").get(&round_id) {
            return Ok(a.clone());
        }
        let round = self.store.get_round(round_id)?;
        let (_, l) = self.loaded()?;
        let artifacts = Arc::new(replay(&l.corpus, &self.schema, &round)?);
        self.cache(artifacts.clone());
        Ok(artifacts)
    }

    pub fn list_rounds(&self) -> Vec<RoundSummary> {
        self.store.list_rounds()
    }
}

fn no_layout() -> ApiError {
    ApiError::new(409, "NoActiveLayout", "no projection has been computed for the current selection")
}

fn body_has_forest_seed(body: &[u8]) -> bool {
    serde_json::from_slice::<Value>(body).ok().and_then(|v| v.get("forest")?.get("rng_seed").cloned()).is_some()
}

/// Paths that exist under some method, for 405 responses.
fn is_known(segs: &[&str]) -> bool {
    matches!(
        segs,
        ["health"]
            | ["schema"]
            | ["session"]
            | ["corpus", "load"]
            | ["summary"]
            | ["cohort"]
            | ["cohort", "filter" | "channels"]
            | ["projection"]
            | ["patient", _, "timeline"]
            | ["patient", _, "timeline", _, _]
            | ["select", "lasso" | "clear"]
            | ["features"]
            | ["sampling"]
            | ["model", "train"]
            | ["model", _, "status" | "view" | "shap"]
            | ["logs"]
            | ["logs", _]
    )
}
