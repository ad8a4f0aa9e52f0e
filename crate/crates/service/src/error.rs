use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use fee_core::dataset::DatasetError;
use fee_core::elicitation::ElicitationError;
use fee_core::metrics::MetricError;
use fee_core::whatif::WhatIfError;
use serde::{Deserialize, Serialize};

/// Machine-readable error payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
            },
        }
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request("invalid_body", r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::bad_request("invalid_query", r.body_text())
    }
}

pub fn metric_error_code(e: &MetricError) -> (StatusCode, &'static str) {
    use MetricError::*;
    let unprocessable = StatusCode::UNPROCESSABLE_ENTITY;
    match e {
        EmptyDenominator { .. } => (unprocessable, "empty_denominator"),
        UnknownGroup(_) => (StatusCode::BAD_REQUEST, "unknown_feature"),
        UnknownLegitimate(_) => (StatusCode::BAD_REQUEST, "unknown_condition"),
        UndeclaredStratum { .. } => (StatusCode::BAD_REQUEST, "unknown_stratum"),
        MissingCondition => (StatusCode::BAD_REQUEST, "missing_condition"),
        NoValidStratum { .. } => (unprocessable, "no_valid_stratum"),
        TooFewSubgroups { .. } => (unprocessable, "too_few_subgroups"),
        InvalidFeatureSet(_) => (StatusCode::BAD_REQUEST, "invalid_feature_set"),
        NotGroupMetric(_) => (StatusCode::BAD_REQUEST, "not_group_metric"),
        UnsupportedCounterfactual(_) => (StatusCode::BAD_REQUEST, "unsupported_counterfactual"),
        TooFewInstances { .. } => (unprocessable, "too_few_instances"),
        UnknownInstance(_) => (StatusCode::NOT_FOUND, "unknown_instance"),
        Model(_) => (StatusCode::INTERNAL_SERVER_ERROR, "model"),
        InvalidThresholds(_) => (StatusCode::BAD_REQUEST, "threshold_out_of_range"),
    }
}

impl From<MetricError> for ApiError {
    fn from(e: MetricError) -> Self {
        let (status, code) = metric_error_code(&e);
        ApiError::new(status, code, e.to_string())
    }
}

impl From<ElicitationError> for ApiError {
    fn from(e: ElicitationError) -> Self {
        use ElicitationError::*;
        let (status, code) = match &e {
            DuplicateMetric(_) => (StatusCode::BAD_REQUEST, "duplicate_metric"),
            EmptyTopRank => (StatusCode::BAD_REQUEST, "empty_top_rank"),
            RankGap => (StatusCode::BAD_REQUEST, "rank_gap"),
            EmptyParticipant => (StatusCode::BAD_REQUEST, "empty_participant"),
            Threshold(_) => (StatusCode::BAD_REQUEST, "threshold_out_of_range"),
            TooFewRecords { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "too_few_records"),
            TeamCount(_) => (StatusCode::BAD_REQUEST, "invalid_team_count"),
            UnknownParticipant(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_participant"),
            EmptyTeam => (StatusCode::BAD_REQUEST, "empty_team"),
            NoMembers(_) => (StatusCode::BAD_REQUEST, "no_members"),
            EmptyConsensus => (StatusCode::BAD_REQUEST, "empty_consensus"),
            ScopeMismatch { .. } => (StatusCode::BAD_REQUEST, "scope_mismatch"),
            DuplicateConsensus(_) => (StatusCode::BAD_REQUEST, "duplicate_consensus"),
            Finalized(_) => (StatusCode::CONFLICT, "finalized"),
            UnknownTeam(_) => (StatusCode::NOT_FOUND, "unknown_team"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<WhatIfError> for ApiError {
    fn from(e: WhatIfError) -> Self {
        let code = match e {
            WhatIfError::NotInActiveFold(_) => "not_in_active_fold",
            WhatIfError::IndividualMetric(_) => "not_group_metric",
        };
        ApiError::bad_request(code, e.to_string())
    }
}

impl From<DatasetError> for ApiError {
    fn from(e: DatasetError) -> Self {
        let code = match e {
            DatasetError::UnknownFeature(_) => "unknown_feature",
            DatasetError::InvalidFilter(_) => "invalid_filter",
            DatasetError::InvalidBins(_) => "invalid_bins",
            _ => "invalid_request",
        };
        ApiError::bad_request(code, e.to_string())
    }
}
