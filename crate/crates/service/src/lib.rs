//! JSON API for the three-tier review queue.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/api/items?tier=&status=&page=&page_size=` | paged queue |
//! | GET | `/api/items/{id}` | item with the checklist |
//! | POST | `/api/items/{id}/review` | apply a decision, 409 on a stale version |
//! | GET | `/api/checklist` | review criteria |
//! | GET | `/api/stats` | dataset and review progress |
//!
//! Every error body is `{"code": ..., "message": ...}`.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use forge_core::foundry::{
    checklist, compute_stats, ChecklistCriterion, FoundryStats, Page, ReviewDecision, ReviewError, ReviewStore,
    DEFAULT_PAGE_SIZE,
};
use forge_core::model::{FoundryItem, ReviewStatus};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
            },
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let (status, code) = match &e {
            ReviewError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ReviewError::Conflict { .. } => (StatusCode::CONFLICT, "version_conflict"),
            ReviewError::InvalidTransition(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_transition"),
            ReviewError::InvalidDecision(_) => (StatusCode::BAD_REQUEST, "invalid_decision"),
            ReviewError::Forbidden(_) => (StatusCode::FORBIDDEN, "forbidden"),
            ReviewError::Persist(_) => (StatusCode::INTERNAL_SERVER_ERROR, "persist_failed"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct ListQuery {
    pub tier: Option<u8>,
    pub status: Option<ReviewStatus>,
    pub page: Option<usize>,
    pub page_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemView {
    pub item: FoundryItem,
    pub checklist: Vec<ChecklistCriterion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewProgress {
    /// Pending items keyed by tier.
    pub pending: BTreeMap<u8, usize>,
    pub rejected: usize,
    #[serde(rename = "final")]
    pub finalized: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsView {
    pub dataset: FoundryStats,
    pub review: ReviewProgress,
}

type Shared = Arc<ReviewStore>;

pub fn router(store: Shared) -> Router {
    Router::new()
        .route("/api/items", get(list_items))
        .route("/api/items/{id}", get(get_item))
        .route("/api/items/{id}/review", post(review_item))
        .route("/api/checklist", get(get_checklist))
        .route("/api/stats", get(get_stats))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .with_state(store)
}

async fn list_items(
    State(store): State<Shared>,
    query: Result<Query<ListQuery>, QueryRejection>,
) -> Result<Json<Page>, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    if let Some(t) = q.tier {
        if !(1..=3).contains(&t) {
            return Err(ApiError::bad_request(format!("tier {t} outside 1..=3")));
        }
    }
    let page = q.page.unwrap_or(1);
    if page == 0 {
        return Err(ApiError::bad_request("page starts at 1"));
    }
    let page_size = q.page_size.unwrap_or(DEFAULT_PAGE_SIZE);
    if page_size == 0 {
        return Err(ApiError::bad_request("page_size must be positive"));
    }
    Ok(Json(store.list(q.tier, q.status, page, page_size)))
}

async fn get_item(State(store): State<Shared>, Path(id): Path<String>) -> Result<Json<ItemView>, ApiError> {
    let item = store.get(&id).ok_or(ReviewError::NotFound(id))?;
    Ok(Json(ItemView {
        item,
        checklist: checklist(),
    }))
}

async fn review_item(
    State(store): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<ReviewDecision>, JsonRejection>,
) -> Result<Json<FoundryItem>, ApiError> {
    let Json(mut decision) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    if decision.item_id.is_empty() {
        decision.item_id = id;
    } else if decision.item_id != id {
        return Err(ApiError::bad_request(format!(
            "body item_id `{}` differs from path `{id}`",
            decision.item_id
        )));
    }
    let item = tokio::task::spawn_blocking(move || store.decide(&decision))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(item))
}

async fn get_checklist() -> Json<Vec<ChecklistCriterion>> {
    Json(checklist())
}

async fn get_stats(State(store): State<Shared>) -> Json<StatsView> {
    let items = store.all();
    let mut review = ReviewProgress {
        pending: (1..=3).map(|t| (t, 0)).collect(),
        rejected: 0,
        finalized: 0,
    };
    for item in &items {
        match item.review.status {
            ReviewStatus::Pending | ReviewStatus::Approved => *review.pending.entry(item.review.tier).or_default() += 1,
            ReviewStatus::Rejected => review.rejected += 1,
            ReviewStatus::Final => review.finalized += 1,
        }
    }
    Json(StatsView {
        dataset: compute_stats(&items),
        review,
    })
}

/// Binds and serves until the process is stopped.
pub async fn serve(store: ReviewStore, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(store))).await
}
