use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use heatlab_core::Error;
use serde::Serialize;

/// Every failure code the API can return, with its HTTP status.
pub const ERROR_CATALOG: &[(&str, u16, &str)] = &[
    ("bad_request", 400, "malformed query or body"),
    ("city_not_found", 404, "no workspace with this city id"),
    (
        "scene_not_found",
        404,
        "no scene with this id in the workspace",
    ),
    ("layer_not_found", 404, "unknown layer name"),
    ("variant_not_found", 404, "unknown predictor variant"),
    (
        "scenario_not_found",
        404,
        "no scenario for this rcp and year",
    ),
    (
        "intervention_not_found",
        404,
        "no stored intervention with this id",
    ),
    (
        "analysis_pending",
        409,
        "the requested analysis has not been run yet",
    ),
    (
        "invalid_polygon",
        422,
        "polygon is degenerate or self-intersecting",
    ),
    ("mask_not_built", 422, "polygon covers no built-up pixel"),
    (
        "insufficient_donors",
        422,
        "too few pixels of the target land-cover class",
    ),
    (
        "predictor_unavailable",
        422,
        "the predictor cannot serve this request",
    ),
    (
        "grid_too_large",
        413,
        "grid exceeds the synchronous size guard",
    ),
    (
        "data_error",
        422,
        "workspace data is invalid or inconsistent",
    ),
    ("internal_error", 500, "internal invariant violated"),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl ApiError {
    /// Panics on a code missing from the catalog.
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        assert!(
            ERROR_CATALOG.iter().any(|(c, _, _)| *c == code),
            "uncatalogued error code {code}"
        );
        ApiError {
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    pub fn status(&self) -> StatusCode {
        let code = ERROR_CATALOG
            .iter()
            .find(|(c, _, _)| *c == self.code)
            .map_or(500, |(_, s, _)| *s);
        StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR)
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new("bad_request", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::SceneNotFound(_) => "scene_not_found",
            Error::InvalidPolygon(_) => "invalid_polygon",
            Error::MaskNotBuilt => "mask_not_built",
            Error::InsufficientDonors { .. } => "insufficient_donors",
            Error::Scenario(_) => "scenario_not_found",
            Error::Predictor { .. } => "predictor_unavailable",
            Error::InvalidParameter(_) => "bad_request",
            Error::Invariant(_) => "internal_error",
            _ => "data_error",
        };
        ApiError::new(code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
