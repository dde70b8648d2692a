#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use cohortloop::Timestamp;
use cohortloop_api::{api_schema, FixedClock, Response, Service, ServiceConfig};
use serde_json::{json, Value};

pub const CLOCK_SECS: i64 = 1_700_000_000;

pub fn service(log_dir: &Path) -> Service {
    let config = ServiceConfig { log_dir: log_dir.to_path_buf(), default_seed: 11, ..ServiceConfig::default() };
    Service::new(config, Arc::new(FixedClock(Timestamp::from_secs(CLOCK_SECS)))).unwrap()
}

pub fn call(svc: &Service, method: &str, path: &str, body: Value) -> Response {
    let bytes = if body.is_null() { Vec::new() } else { serde_json::to_vec(&body).unwrap() };
    svc.dispatch(method, path, &bytes)
}

pub fn synthetic_spec(seed: u64, n: usize) -> Value {
    json!({
        "rng_seed": seed,
        "n_patients": n,
        "target_prevalence": 0.25,
        "coefficients": { "cum_dose_long": 3.0, "age": 1.5 }
    })
}

/// Validators for every definition in the published schema.
pub struct Schemas {
    validators: BTreeMap<String, jsonschema::Validator>,
}

impl Schemas {
    pub fn load() -> Self {
        let schema = api_schema();
        let defs = schema["$defs"].as_object().expect("$defs").clone();
        let validators = defs
            .keys()
            .map(|name| {
                let doc = json!({
                    "$schema": "https://json-schema.org/draft/2020-12/schema",
                    "$defs": defs,
                    "$ref": format!("#/$defs/{name}"),
                });
                (name.clone(), jsonschema::validator_for(&doc).unwrap_or_else(|e| panic!("schema {name}: {e}")))
            })
            .collect();
        Schemas { validators }
    }

    pub fn check(&self, def: &str, body: &Value) -> Result<(), String> {
        let v = self.validators.get(def).ok_or_else(|| format!("no schema definition {def}"))?;
        let errors: Vec<String> = v.iter_errors(body).take(3).map(|e| format!("{} at {}", e, e.instance_path())).collect();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(format!("{def}: {}", errors.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub method: &'static str,
    pub path: String,
    /// Schema definition the response must satisfy.
    pub def: &'static str,
    pub mutating: bool,
    pub status: u16,
    pub body: Value,
}

const FEATURES: [&str; 6] = ["age", "cum_dose_short", "cum_dose_medium", "cum_dose_long", "lab_crp_mean", "exam_abnormal_frac"];

/// load → filter → project → lasso → features → sample → train → logs on a
/// fresh service logging under `log_dir`.
pub fn walkthrough(log_dir: &Path) -> Vec<Step> {
    let svc = service(log_dir);
    let mut steps = Vec::new();
    let mut run = |method: &'static str, path: String, def: &'static str, body: Value| -> Value {
        let r = call(&svc, method, &path, body);
        steps.push(Step { method, path, def, mutating: method == "POST", status: r.status, body: r.body.clone() });
        r.body
    };

    run("GET", "/health".into(), "Health", Value::Null);
    run("POST", "/corpus/load".into(), "LoadResponse", json!({ "synthetic": synthetic_spec(21, 300) }));
    run("GET", "/summary".into(), "CorpusSummary", Value::Null);
    run("POST", "/cohort/filter".into(), "FilterResponse", json!({ "age_range": [20, 80] }));
    run("GET", "/cohort/channels".into(), "ChannelSummary", Value::Null);
    let projection = run("POST", "/projection".into(), "ProjectionResponse", json!({ "method": "pca", "rng_seed": 3 }));

    let ids = projection["layout"]["ids"].as_array().cloned().unwrap_or_default();
    let first = ids.first().and_then(Value::as_str).unwrap_or("none").to_string();
    run("GET", format!("/patient/{first}/timeline"), "TimelineDoc", Value::Null);
    run("GET", format!("/patient/{first}/timeline/medication_orders/0"), "EventDetail", Value::Null);

    // lasso the left half of the layout
    let coords: Vec<[f64; 2]> = serde_json::from_value(projection["layout"]["coords"].clone()).unwrap_or_default();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for c in &coords {
        for k in 0..2 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    let mid = (lo[0] + hi[0]) / 2.0;
    let polygon = json!([[lo[0] - 1.0, lo[1] - 1.0], [mid, lo[1] - 1.0], [mid, hi[1] + 1.0], [lo[0] - 1.0, hi[1] + 1.0]]);
    run("POST", "/select/lasso".into(), "LassoResponse", json!({ "polygon": polygon }));

    for f in FEATURES {
        run("POST", "/features".into(), "FeaturesResponse", json!({ "action": "add", "feature": f }));
    }
    run("GET", "/features".into(), "FeatureList", Value::Null);
    run("POST", "/sampling".into(), "SamplingResponse", json!({ "strategy": "hard_negative", "rng_seed": 5 }));
    let trained = run(
        "POST",
        "/model/train".into(),
        "TrainResponse",
        json!({ "forest": { "n_trees": 40, "rng_seed": 2 }, "split_seed": 4 }),
    );
    let round = trained["round_id"].as_u64().unwrap_or(0);
    run("GET", format!("/model/{round}/status"), "RoundStatusResponse", Value::Null);
    run("GET", format!("/model/{round}/view"), "ModelingView", Value::Null);
    run("GET", format!("/model/{round}/shap"), "ShapMatrix", Value::Null);
    run("GET", "/logs".into(), "LogsResponse", Value::Null);
    run("GET", format!("/logs/{round}"), "ModelRound", Value::Null);
    run("GET", "/session".into(), "Session", Value::Null);
    steps
}
