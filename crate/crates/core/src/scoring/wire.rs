//! JSON bodies of the scoring service.
//!
//! `POST <endpoint>/score` takes `{"pairs":[{"source":..,"hypothesis":..},..]}`
//! and answers `{"scores":[..]}` with one number per pair, in order.

use serde::{Deserialize, Serialize};

use super::ScoreRequest;

pub const SCORE_PATH: &str = "/score";
pub const HEALTH_PATH: &str = "/health";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBatchRequest {
    pub pairs: Vec<ScoreRequest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBatchResponse {
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
}
