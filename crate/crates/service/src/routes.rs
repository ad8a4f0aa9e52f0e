use axum::extract::{FromRequest, FromRequestParts, Path, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post, put};
use axum::{Json, Router};
use fee_core::dataset::{histogram, query_view, Filter, Label, SortKey, Target};
use fee_core::elicitation::{
    assign_teams, borda, threshold_stats, to_csv, top1_category_counts, top1_metric_counts,
    weighted_rank_scores, ElicitationError, PreferenceRecord, TeamSession,
};
use fee_core::metrics::{
    consistency, counterfactual_fairness, explanation_buckets, group_metric, subgroup_metric,
    verdict, Category, MetricError, MetricId, MetricResult, ThresholdConfig, Verdict,
    DEFAULT_NEIGHBORS,
};
use fee_core::report::round1;
use fee_core::whatif::{hypothetical_performance, recompute, WhatIfQuery};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{metric_error_code, ApiError, ErrorBody};
use crate::state::{unknown_session, AppState, Session};
use crate::store::DiskStore;

#[derive(FromRequest)]
#[from_request(via(axum::Json), rejection(ApiError))]
struct Body<T>(T);

#[derive(FromRequestParts)]
#[from_request(via(axum::extract::Query), rejection(ApiError))]
struct Query<T>(T);

type ApiResult<T = Json<Value>> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/dataset/schema", get(schema))
        .route("/api/instances", get(instances))
        .route("/api/instances/histogram", get(instance_histogram))
        .route("/api/model/summary", get(model_summary))
        .route("/api/model/weights", get(model_weights))
        .route("/api/metrics/group", get(group_metrics))
        .route("/api/metrics/subgroup", get(subgroup_metrics))
        .route("/api/metrics/individual", get(individual_metrics))
        .route("/api/metrics/explain", get(explain))
        .route(
            "/api/whatif/edits",
            get(list_edits).post(add_edit).delete(delete_edits),
        )
        .route("/api/whatif/recompute", post(whatif_recompute))
        .route("/api/session", get(get_session).post(create_session))
        .route("/api/session/thresholds", put(put_thresholds))
        .route("/api/preferences", get(list_preferences).post(add_preference))
        .route("/api/preferences/aggregate", get(aggregate))
        .route("/api/preferences/export", get(export_preferences))
        .route("/api/preferences/{participant_id}", get(participant_history))
        .route("/api/teams/assign", post(teams_assign))
        .route("/api/consensus", get(list_consensus).post(add_consensus))
        .fallback(|| async { ApiError::not_found("not_found", "no such endpoint") })
        .with_state(state)
}

/// Rounds every float to one decimal, leaving per-instance scores, which
/// are fractions rather than percentages, untouched.
pub fn round_percentages(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => json!(round1(n.as_f64().expect("f64 number"))),
        Value::Array(items) => Value::Array(items.into_iter().map(round_percentages).collect()),
        Value::Object(map) => Value::Object(
            map.into_iter()
                .map(|(k, v)| {
                    let v = if k == "per_instance" { v } else { round_percentages(v) };
                    (k, v)
                })
                .collect(),
        ),
        other => other,
    }
}

fn split_list(s: Option<&str>) -> Vec<String> {
    s.map(|s| {
        s.split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(String::from)
            .collect()
    })
    .unwrap_or_default()
}

#[derive(Debug, Serialize)]
struct MetricEntry {
    metric_id: MetricId,
    scope: Category,
    #[serde(skip_serializing_if = "Option::is_none")]
    value_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    verdict: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ErrorBody>,
}

fn entry(
    metric_id: MetricId,
    scope: Category,
    result: Result<MetricResult, MetricError>,
    thresholds: &ThresholdConfig,
) -> MetricEntry {
    match result {
        Ok(r) => MetricEntry {
            metric_id,
            scope,
            value_pct: Some(round1(r.value())),
            verdict: Some(verdict(scope, r.value(), thresholds)),
            result: Some(round_percentages(serde_json::to_value(&r).expect("serializable"))),
            error: None,
        },
        Err(e) => MetricEntry {
            metric_id,
            scope,
            value_pct: None,
            verdict: None,
            result: None,
            error: Some(ErrorBody {
                code: metric_error_code(&e).1.to_string(),
                message: e.to_string(),
            }),
        },
    }
}

fn group_family() -> impl Iterator<Item = MetricId> {
    MetricId::ALL.into_iter().filter(|m| !m.is_individual())
}

#[derive(Deserialize)]
struct SessionQuery {
    session: Option<String>,
}

async fn schema(State(s): State<AppState>) -> Json<Value> {
    let ds = s.dataset();
    Json(json!({
        "features": ds.schema,
        "protected": ds.protected_specs,
        "legitimate": ds.legitimate_specs,
        "instance_count": ds.len(),
        "held_out_count": s.base().len(),
        "fingerprint": s.model().dataset_fingerprint,
    }))
}

#[derive(Deserialize)]
struct InstancesQuery {
    filter: Option<String>,
    sort: Option<String>,
    offset: Option<usize>,
    limit: Option<usize>,
    session: Option<String>,
}

const DEFAULT_PAGE: usize = 50;

async fn instances(State(s): State<AppState>, Query(q): Query<InstancesQuery>) -> ApiResult {
    let (table, _) = s.view(q.session.as_deref())?;
    let filters = split_list(q.filter.as_deref())
        .iter()
        .map(|f| f.parse::<Filter>())
        .collect::<Result<Vec<_>, _>>()?;
    let sort = q.sort.as_deref().map(str::parse::<SortKey>).transpose()?;
    let rows = query_view(s.dataset(), &table.rows, &filters, sort.as_ref())?;
    let offset = q.offset.unwrap_or(0);
    let limit = q.limit.unwrap_or(DEFAULT_PAGE);
    let page: Vec<Value> = rows
        .iter()
        .skip(offset)
        .take(limit)
        .map(|o| {
            let values = s.dataset().instance(o.id).map(|i| &i.values);
            json!({
                "id": o.id,
                "values": values,
                "ground_truth": o.ground_truth,
                "predicted": o.predicted,
                "probability_good": o.probability_good,
                "overridden": o.overridden,
                "groups": o.groups,
                "strata": o.strata,
            })
        })
        .collect();
    Ok(Json(json!({
        "total": rows.len(),
        "offset": offset,
        "limit": limit,
        "rows": page,
    })))
}

#[derive(Deserialize)]
struct HistogramQuery {
    feature: String,
    target: Option<String>,
    bins: Option<String>,
    session: Option<String>,
}

async fn instance_histogram(
    State(s): State<AppState>,
    Query(q): Query<HistogramQuery>,
) -> ApiResult {
    let (table, _) = s.view(q.session.as_deref())?;
    let target = match q.target.as_deref() {
        None => Target::GroundTruth,
        Some(t) => t
            .parse::<Target>()
            .map_err(|e| ApiError::bad_request("invalid_target", e))?,
    };
    let edges = split_list(q.bins.as_deref())
        .iter()
        .map(|e| {
            e.parse::<f64>()
                .map_err(|_| ApiError::bad_request("invalid_bins", format!("`{e}` is not a number")))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let bins = (!edges.is_empty()).then_some(edges.as_slice());
    let h = histogram(s.dataset(), &table.rows, &q.feature, target, bins)?;
    Ok(Json(json!(h)))
}

async fn model_summary(State(s): State<AppState>, Query(q): Query<SessionQuery>) -> ApiResult {
    let model = s.model();
    let performance = s.base().performance();
    let hypothetical = match q.session.as_deref() {
        Some(id) => {
            let session = s.session(id).ok_or_else(|| unknown_session(id))?;
            (!session.overlay.is_empty())
                .then(|| hypothetical_performance(s.base(), &session.overlay))
        }
        None => None,
    };
    Ok(Json(json!({
        "config": model.config,
        "dataset_fingerprint": model.dataset_fingerprint,
        "active_fold": model.active_fold,
        "train_size": s.dataset().len() - performance.test_size,
        "test_size": performance.test_size,
        "performance": performance,
        "hypothetical_performance": hypothetical,
        "warnings": model.warnings,
    })))
}

async fn model_weights(State(s): State<AppState>) -> Json<Value> {
    Json(json!({
        "bias": s.model().bias,
        "weights": s.model().feature_weights(),
    }))
}

/// Legitimate feature for conditional statistical parity: the requested
/// one, or the first declared.
fn condition_of(s: &AppState, condition: Option<&str>) -> Result<Option<String>, ApiError> {
    match condition {
        Some(c) => Ok(Some(s.base().legitimate_spec(c)?.feature.clone())),
        None => Ok(s.base().legitimate_specs.first().map(|l| l.feature.clone())),
    }
}

#[derive(Deserialize)]
struct GroupQuery {
    feature: String,
    condition: Option<String>,
    session: Option<String>,
}

async fn group_metrics(State(s): State<AppState>, Query(q): Query<GroupQuery>) -> ApiResult {
    s.base().group_spec(&q.feature)?;
    let condition = condition_of(&s, q.condition.as_deref())?;
    let (table, thresholds) = s.view(q.session.as_deref())?;
    let results: Vec<MetricEntry> = group_family()
        .map(|m| {
            let r = group_metric(&table, m, &q.feature, condition.as_deref());
            entry(m, Category::Group, r.map(MetricResult::Group), &thresholds)
        })
        .collect();
    Ok(Json(json!({
        "feature": q.feature,
        "condition": condition,
        "thresholds": thresholds,
        "results": results,
    })))
}

#[derive(Deserialize)]
struct SubgroupQuery {
    features: String,
    condition: Option<String>,
    session: Option<String>,
}

async fn subgroup_metrics(State(s): State<AppState>, Query(q): Query<SubgroupQuery>) -> ApiResult {
    let features = split_list(Some(&q.features));
    if !(2..=3).contains(&features.len()) {
        return Err(MetricError::InvalidFeatureSet(features).into());
    }
    for f in &features {
        s.base().group_spec(f)?;
    }
    let names: Vec<&str> = features.iter().map(String::as_str).collect();
    let condition = condition_of(&s, q.condition.as_deref())?;
    let (table, thresholds) = s.view(q.session.as_deref())?;
    let results: Vec<MetricEntry> = group_family()
        .map(|m| {
            let r = subgroup_metric(&table, m, &names, condition.as_deref());
            entry(m, Category::Subgroup, r.map(MetricResult::Subgroup), &thresholds)
        })
        .collect();
    Ok(Json(json!({
        "features": features,
        "condition": condition,
        "thresholds": thresholds,
        "results": results,
    })))
}

#[derive(Deserialize)]
struct IndividualQuery {
    features: Option<String>,
    k: Option<usize>,
    session: Option<String>,
}

async fn individual_metrics(
    State(s): State<AppState>,
    Query(q): Query<IndividualQuery>,
) -> ApiResult {
    let mut features = split_list(q.features.as_deref());
    if features.is_empty() {
        features = s.base().group_specs.iter().map(|g| g.feature.clone()).collect();
    }
    for f in &features {
        s.base().group_spec(f)?;
    }
    let (_, thresholds) = s.view(q.session.as_deref())?;
    let k = q.k.unwrap_or(DEFAULT_NEIGHBORS);
    let mut results: Vec<MetricEntry> = features
        .iter()
        .map(|f| {
            let r = counterfactual_fairness(s.model(), s.dataset(), f);
            entry(
                MetricId::CounterfactualFairness,
                Category::Individual,
                r.map(MetricResult::Counterfactual),
                &thresholds,
            )
        })
        .collect();
    let c = consistency(s.model(), s.dataset(), k);
    results.push(entry(
        MetricId::Consistency,
        Category::Individual,
        c.map(MetricResult::Consistency),
        &thresholds,
    ));
    Ok(Json(json!({
        "features": features,
        "neighbors": k,
        "thresholds": thresholds,
        "results": results,
    })))
}

#[derive(Deserialize)]
struct ExplainQuery {
    metric: String,
    feature: String,
    condition: Option<String>,
    stratum: Option<String>,
    session: Option<String>,
}

async fn explain(State(s): State<AppState>, Query(q): Query<ExplainQuery>) -> ApiResult {
    let metric: MetricId = q
        .metric
        .parse()
        .map_err(|e: String| ApiError::bad_request("unknown_metric", e))?;
    let condition = match (metric, q.condition.as_deref()) {
        (MetricId::ConditionalStatisticalParity, c) => condition_of(&s, c)?,
        (_, Some(c)) => Some(c.to_string()),
        (_, None) => None,
    };
    let (table, _) = s.view(q.session.as_deref())?;
    let b = explanation_buckets(
        &table,
        metric,
        &q.feature,
        condition.as_deref(),
        q.stratum.as_deref(),
    )?;
    Ok(Json(json!(b)))
}

fn overlay_view(s: &AppState, session: &Session) -> Value {
    json!({
        "session_id": session.session_id,
        "edits": session.overlay.list(),
        "edit_count": session.overlay.len(),
        "performance": hypothetical_performance(s.base(), &session.overlay),
    })
}

#[derive(Deserialize)]
struct EditRequest {
    session_id: Option<String>,
    instance_id: u32,
    target: Target,
    new_value: Label,
}

async fn add_edit(State(s): State<AppState>, Body(req): Body<EditRequest>) -> ApiResult {
    let base = s.base().clone();
    let (session, _) = s.update_session(req.session_id.as_deref(), true, |sess| {
        sess.overlay
            .apply_edit(&base, req.instance_id, req.target, req.new_value)
            .map_err(ApiError::from)
    })?;
    Ok(Json(overlay_view(&s, &session)))
}

async fn list_edits(State(s): State<AppState>, Query(q): Query<SessionQuery>) -> ApiResult {
    let id = q
        .session
        .ok_or_else(|| ApiError::bad_request("missing_session", "a session id is required"))?;
    let session = s.session(&id).ok_or_else(|| unknown_session(&id))?;
    Ok(Json(overlay_view(&s, &session)))
}

#[derive(Deserialize)]
struct DeleteEditQuery {
    session: String,
    instance_id: Option<u32>,
    target: Option<Target>,
}

/// Reverts one edit, or every edit of the session when no instance is named.
async fn delete_edits(State(s): State<AppState>, Query(q): Query<DeleteEditQuery>) -> ApiResult {
    let (session, _) = s.update_session(Some(&q.session), false, |sess| {
        match (q.instance_id, q.target) {
            (None, None) => sess.overlay.clear(),
            (Some(id), Some(t)) => {
                sess.overlay.remove_edit(id, t);
            }
            (Some(id), None) => {
                sess.overlay.remove_edit(id, Target::GroundTruth);
                sess.overlay.remove_edit(id, Target::Prediction);
            }
            (None, Some(_)) => {
                return Err(ApiError::bad_request(
                    "missing_instance",
                    "target given without instance_id",
                ))
            }
        }
        Ok(())
    })?;
    Ok(Json(overlay_view(&s, &session)))
}

#[derive(Deserialize)]
struct RecomputeRequest {
    session_id: String,
    query: WhatIfQuery,
}

async fn whatif_recompute(
    State(s): State<AppState>,
    Body(req): Body<RecomputeRequest>,
) -> ApiResult {
    let session = s
        .session(&req.session_id)
        .ok_or_else(|| unknown_session(&req.session_id))?;
    let scope = match req.query {
        WhatIfQuery::Group { .. } => Category::Group,
        WhatIfQuery::Subgroup { .. } => Category::Subgroup,
    };
    let metrics = match &req.query {
        WhatIfQuery::Group { metrics, .. } | WhatIfQuery::Subgroup { metrics, .. } => {
            metrics.clone()
        }
    };
    let out = recompute(s.base(), &session.overlay, &req.query)?;
    let results: Vec<MetricEntry> = metrics
        .into_iter()
        .zip(out)
        .map(|(m, r)| entry(m, scope, r, &session.threshold_config))
        .collect();
    Ok(Json(json!({
        "session_id": session.session_id,
        "edit_count": session.overlay.len(),
        "results": results,
    })))
}

fn session_view(session: &Session) -> Value {
    json!({
        "session_id": session.session_id,
        "participant_id": session.participant_id,
        "thresholds": session.threshold_config,
        "edit_count": session.overlay.len(),
        "created_at": session.created_at,
    })
}

#[derive(Deserialize)]
struct CreateSession {
    session_id: Option<String>,
    participant_id: Option<String>,
}

async fn create_session(State(s): State<AppState>, Body(req): Body<CreateSession>) -> ApiResult {
    let (session, _) = s.update_session(req.session_id.as_deref(), true, |sess| {
        if req.participant_id.is_some() {
            sess.participant_id = req.participant_id;
        }
        Ok(())
    })?;
    Ok(Json(session_view(&session)))
}

async fn get_session(State(s): State<AppState>, Query(q): Query<SessionQuery>) -> ApiResult {
    let id = q
        .session
        .ok_or_else(|| ApiError::bad_request("missing_session", "a session id is required"))?;
    let session = s.session(&id).ok_or_else(|| unknown_session(&id))?;
    Ok(Json(session_view(&session)))
}

#[derive(Deserialize)]
struct ThresholdRequest {
    session_id: Option<String>,
    #[serde(flatten)]
    thresholds: ThresholdConfig,
}

async fn put_thresholds(
    State(s): State<AppState>,
    Body(req): Body<ThresholdRequest>,
) -> ApiResult {
    req.thresholds
        .validate()
        .map_err(|e| ApiError::bad_request("threshold_out_of_range", e))?;
    let (session, _) = s.update_session(req.session_id.as_deref(), true, |sess| {
        sess.threshold_config = req.thresholds;
        Ok(())
    })?;
    Ok(Json(session_view(&session)))
}

async fn add_preference(
    State(s): State<AppState>,
    Body(record): Body<PreferenceRecord>,
) -> ApiResult<impl IntoResponse> {
    let stored = s.update_elicitation(
        |store| store.record_preference(record).map_err(ApiError::from),
        DiskStore::write_preferences,
    )?;
    Ok((StatusCode::CREATED, Json(json!(stored))))
}

async fn list_preferences(State(s): State<AppState>) -> Json<Value> {
    Json(json!(s.elicitation().preferences))
}

async fn participant_history(
    State(s): State<AppState>,
    Path(participant_id): Path<String>,
) -> ApiResult {
    let store = s.elicitation();
    let history = store.history(&participant_id).ok_or_else(|| {
        ApiError::not_found(
            "unknown_participant",
            format!("unknown participant `{participant_id}`"),
        )
    })?;
    Ok(Json(json!({
        "participant_id": participant_id,
        "versions": history,
    })))
}

#[derive(Deserialize)]
struct ParticipantsQuery {
    participants: Option<String>,
}

fn selected_records(
    s: &AppState,
    participants: Option<&str>,
) -> Result<Vec<PreferenceRecord>, ApiError> {
    let store = s.elicitation();
    let wanted = split_list(participants);
    if wanted.is_empty() {
        return Ok(store.records());
    }
    wanted
        .iter()
        .map(|p| {
            store
                .preference(p)
                .map(|sp| sp.record.clone())
                .ok_or_else(|| ElicitationError::UnknownParticipant(p.clone()).into())
        })
        .collect()
}

async fn aggregate(State(s): State<AppState>, Query(q): Query<ParticipantsQuery>) -> ApiResult {
    let records = selected_records(&s, q.participants.as_deref())?;
    let weighted = weighted_rank_scores(&records)?;
    let ranked: Vec<Value> = weighted
        .ranked()
        .into_iter()
        .map(|(m, score)| json!({"metric_id": m, "score": score}))
        .collect();
    Ok(Json(json!({
        "participants": records.len(),
        "weighted": {
            "weights": weighted.weights,
            "scores": weighted.scores,
            "ranked": ranked,
        },
        "borda": borda(&records)?,
        "thresholds": threshold_stats(&records)?,
        "top1_categories": top1_category_counts(&records)?,
        "top1_metrics": top1_metric_counts(&records),
    })))
}

async fn export_preferences(
    State(s): State<AppState>,
    Query(q): Query<ParticipantsQuery>,
) -> ApiResult<impl IntoResponse> {
    let records = selected_records(&s, q.participants.as_deref())?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], to_csv(&records)))
}

#[derive(Deserialize)]
struct AssignRequest {
    team_count: usize,
    participants: Option<Vec<String>>,
}

async fn teams_assign(State(s): State<AppState>, Body(req): Body<AssignRequest>) -> ApiResult {
    let list = req.participants.map(|p| p.join(","));
    let records = selected_records(&s, list.as_deref())?;
    let assignment = assign_teams(&records, req.team_count)?;
    Ok(Json(json!({
        "clusters": assignment.clusters,
        "teams": assignment.teams,
        "by_participant": assignment.by_participant(),
    })))
}

async fn add_consensus(
    State(s): State<AppState>,
    Body(team): Body<TeamSession>,
) -> ApiResult<impl IntoResponse> {
    let stored = s.update_elicitation(
        |store| {
            store
                .record_consensus(team)
                .cloned()
                .map_err(ApiError::from)
        },
        DiskStore::write_consensus,
    )?;
    Ok((StatusCode::CREATED, Json(json!(stored))))
}

#[derive(Deserialize)]
struct TeamQuery {
    team: Option<String>,
}

async fn list_consensus(State(s): State<AppState>, Query(q): Query<TeamQuery>) -> ApiResult {
    let store = s.elicitation();
    match q.team {
        Some(t) => store
            .team(&t)
            .map(|team| Json(json!(team)))
            .ok_or_else(|| ElicitationError::UnknownTeam(t).into()),
        None => Ok(Json(json!(store.teams))),
    }
}
