//! Posture scoring, remediation projection, drift detection, coverage
//! forecasting and cohort benchmarking.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::new_id;
use crate::mapping::{coverage_matrix, Catalog};
use crate::model::*;
use crate::store::{Store, StoreError};

const DEFAULT_CONFIG: &str = include_str!("../data/posture_config.json");

#[derive(Debug, Error)]
pub enum IntelligenceError {
    #[error("workspace `{0}` has no evidence yet")]
    NoEvidence(String),
    #[error("need at least two coverage observations to forecast")]
    InsufficientHistory,
    #[error("cannot read posture config: {0}")]
    ConfigIo(#[from] std::io::Error),
    #[error("posture config does not parse: {0}")]
    ConfigParse(#[from] serde_json::Error),
    #[error("invalid posture config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub critical: u32,
    pub high: u32,
    pub medium: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bands {
    pub compliant_min: u8,
    pub substantially_compliant_min: u8,
    pub partially_compliant_min: u8,
}

/// Scoring weights and classification bands.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostureConfig {
    /// Identifies the calibration in snapshots and reports.
    pub scoring_model: String,
    /// Penalty per finding, in quarter points.
    pub weights_quarter_points: Weights,
    pub bands: Bands,
    pub cohort_min_size: usize,
}

impl Default for PostureConfig {
    fn default() -> Self {
        Self::from_json(DEFAULT_CONFIG).expect("shipped posture config is valid")
    }
}

impl PostureConfig {
    pub fn from_json(text: &str) -> Result<Self, IntelligenceError> {
        let c: PostureConfig = serde_json::from_str(text)?;
        let w = c.weights_quarter_points;
        if !(w.critical >= w.high && w.high >= w.medium) {
            return Err(IntelligenceError::ConfigInvalid(
                "weights must be ordered critical >= high >= medium".into(),
            ));
        }
        let b = c.bands;
        if !(b.compliant_min > b.substantially_compliant_min
            && b.substantially_compliant_min > b.partially_compliant_min
            && b.compliant_min <= 100)
        {
            return Err(IntelligenceError::ConfigInvalid("bands must be strictly decreasing".into()));
        }
        if c.cohort_min_size == 0 {
            return Err(IntelligenceError::ConfigInvalid("cohort_min_size must be positive".into()));
        }
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IntelligenceError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn penalty_quarter_points(&self, c: SeverityCounts) -> u64 {
        let w = self.weights_quarter_points;
        w.critical as u64 * c.critical as u64 + w.high as u64 * c.high as u64 + w.medium as u64 * c.medium as u64
    }

    /// `100 - penalty/4`, rounded half up and floored at 0.
    pub fn score(&self, c: SeverityCounts) -> u8 {
        let p = self.penalty_quarter_points(c);
        if p >= 402 {
            return 0;
        }
        ((402 - p) / 4).min(100) as u8
    }

    pub fn classify(&self, score: u8) -> Classification {
        let b = self.bands;
        if score >= b.compliant_min {
            Classification::Compliant
        } else if score >= b.substantially_compliant_min {
            Classification::SubstantiallyCompliant
        } else if score >= b.partially_compliant_min {
            Classification::PartiallyCompliant
        } else {
            Classification::NonCompliant
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Assumption {
    RemediateCriticals,
    RemediateAll,
}

impl Assumption {
    pub fn apply(self, c: SeverityCounts) -> SeverityCounts {
        match self {
            Assumption::RemediateCriticals => SeverityCounts { critical: 0, ..c },
            Assumption::RemediateAll => SeverityCounts::default(),
        }
    }
}

fn current_evidence(store: &Store, ws: &WorkspaceId) -> Result<Vec<ControlAssertion>, IntelligenceError> {
    let latest = store.latest_assertions(ws)?;
    if latest.is_empty() {
        return Err(IntelligenceError::NoEvidence(ws.to_string()));
    }
    Ok(latest)
}

/// Severity totals over the latest assertion per (control, integration).
pub fn current_counts(latest: &[ControlAssertion]) -> SeverityCounts {
    let mut c = SeverityCounts::default();
    for a in latest {
        c += a.counts();
    }
    c
}

/// Builds a snapshot from a set of current assertions without persisting it.
pub fn snapshot_of(
    config: &PostureConfig,
    ws: &WorkspaceId,
    latest: &[ControlAssertion],
    at: DateTime<Utc>,
) -> PostureSnapshot {
    let counts = current_counts(latest);
    let score = config.score(counts);
    let integrations: BTreeSet<ProviderKind> = latest.iter().map(|a| a.integration).collect();
    PostureSnapshot {
        snapshot_id: new_id("ps"),
        workspace_id: ws.clone(),
        at,
        score,
        classification: config.classify(score),
        counts,
        projected_score: config.score(Assumption::RemediateCriticals.apply(counts)),
        integrations_scanned: integrations.len() as u32,
        scoring_model: config.scoring_model.clone(),
    }
}

/// Current posture of a workspace. Read-only.
pub fn compute_posture(
    store: &Store,
    config: &PostureConfig,
    ws: &WorkspaceId,
    at: DateTime<Utc>,
) -> Result<PostureSnapshot, IntelligenceError> {
    let latest = current_evidence(store, ws)?;
    Ok(snapshot_of(config, ws, &latest, at))
}

/// Computes the posture and appends it to the snapshot history.
pub fn record_posture(
    store: &Store,
    config: &PostureConfig,
    ws: &WorkspaceId,
    at: DateTime<Utc>,
) -> Result<PostureSnapshot, IntelligenceError> {
    let snap = compute_posture(store, config, ws, at)?;
    store.insert(snap.clone())?;
    Ok(snap)
}

/// Score after removing the findings covered by `assumption`.
pub fn project_posture(
    store: &Store,
    config: &PostureConfig,
    ws: &WorkspaceId,
    assumption: Assumption,
) -> Result<u8, IntelligenceError> {
    let latest = current_evidence(store, ws)?;
    Ok(config.score(assumption.apply(current_counts(&latest))))
}

/// Emits a drift event for every (control, integration) whose latest
/// assertion is failing while the one before it passed. A given pair of
/// assertions yields at most one event; only new events are returned.
pub fn detect_drift(store: &Store, ws: &WorkspaceId, at: DateTime<Utc>) -> Result<Vec<DriftEvent>, IntelligenceError> {
    let rows: Vec<ControlAssertion> = store.all(ws)?;
    let mut by_key: HashMap<(String, ProviderKind), Vec<ControlAssertion>> = HashMap::new();
    let mut order = Vec::new();
    for a in rows {
        let key = (a.control_id.clone(), a.integration);
        if !by_key.contains_key(&key) {
            order.push(key.clone());
        }
        by_key.entry(key).or_default().push(a);
    }
    let existing: BTreeSet<(String, String)> = store
        .all::<DriftEvent>(ws)?
        .into_iter()
        .map(|d| (d.from_assertion, d.to_assertion))
        .collect();

    let mut out = Vec::new();
    for key in order {
        let mut gens = by_key.remove(&key).unwrap_or_default();
        // Stable sort keeps append order among equal timestamps.
        gens.sort_by_key(|a| a.executed_at);
        let [.., prev, last] = gens.as_slice() else {
            continue;
        };
        if prev.status != AssertionStatus::Pass || !last.status.is_failing() {
            continue;
        }
        if existing.contains(&(prev.assertion_id.clone(), last.assertion_id.clone())) {
            continue;
        }
        let event = DriftEvent {
            drift_id: new_id("drift"),
            workspace_id: ws.clone(),
            control_id: last.control_id.clone(),
            integration: last.integration,
            from_assertion: prev.assertion_id.clone(),
            to_assertion: last.assertion_id.clone(),
            from_status: prev.status,
            to_status: last.status,
            detected_at: at,
        };
        store.insert(event.clone())?;
        store.record_event(
            ws,
            "intelligence",
            "drift.detected",
            EntityRef::new(EntityKind::DriftEvent, &event.drift_id),
            at,
        )?;
        tracing::info!(workspace = %ws, control = %event.control_id, to = %event.to_status, "drift detected");
        out.push(event);
    }
    Ok(out)
}

/// Appends one coverage observation per active framework.
pub fn record_coverage(
    store: &Store,
    catalog: &Catalog,
    ws: &WorkspaceId,
    at: DateTime<Utc>,
) -> Result<Vec<CoverageObservation>, IntelligenceError> {
    let matrix = coverage_matrix(store, catalog, ws)?;
    let mut out = Vec::new();
    for (fw, cov) in matrix.frameworks {
        let obs = CoverageObservation {
            observation_id: new_id("cov"),
            workspace_id: ws.clone(),
            framework: fw,
            at,
            met_pct: cov.met_pct(),
        };
        store.insert(obs.clone())?;
        out.push(obs);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Forecast {
    /// Date at which the fitted line reaches the target.
    Projected { date: DateTime<Utc> },
    /// The fitted slope is not positive.
    Unreachable,
}

/// Least-squares line through `(week, pct)` points. Returns the date the
/// line crosses `target_pct`; if the latest observation already meets the
/// target, that observation's date.
pub fn forecast_from(points: &[(DateTime<Utc>, f64)], target_pct: f64) -> Result<Forecast, IntelligenceError> {
    if points.len() < 2 {
        return Err(IntelligenceError::InsufficientHistory);
    }
    let mut pts = points.to_vec();
    pts.sort_by_key(|p| p.0);
    let t0 = pts[0].0;
    let week = 7.0 * 86_400.0;
    let xs: Vec<f64> = pts.iter().map(|(t, _)| (*t - t0).num_seconds() as f64 / week).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, y)| *y).collect();
    let (last_at, last_y) = *pts.last().expect("len >= 2");
    if last_y >= target_pct {
        return Ok(Forecast::Projected { date: last_at });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(IntelligenceError::InsufficientHistory);
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    if slope <= 1e-12 {
        return Ok(Forecast::Unreachable);
    }
    let intercept = my - slope * mx;
    let x = (target_pct - intercept) / slope;
    let secs = (x * week).round() as i64;
    Ok(Forecast::Projected {
        date: t0 + Duration::seconds(secs),
    })
}

pub fn forecast_coverage(
    store: &Store,
    ws: &WorkspaceId,
    framework: Framework,
    target_pct: f64,
) -> Result<Forecast, IntelligenceError> {
    let obs: Vec<CoverageObservation> = store.scoped_query(ws, |o: &CoverageObservation| o.framework == framework)?;
    let points: Vec<(DateTime<Utc>, f64)> = obs.iter().map(|o| (o.at, o.met_pct)).collect();
    forecast_from(&points, target_pct)
}

/// Anonymous cohort statistics. Holds scores only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortAggregate {
    pub cohort_key: String,
    pub n: usize,
    pub median_score: f64,
    /// First quartile, median, third quartile (linear interpolation).
    pub quartiles: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BenchmarkResult {
    Ranked {
        percentile: u8,
        aggregate: CohortAggregate,
    },
    Refused {
        reason: String,
        n: usize,
        threshold: usize,
    },
}

/// `floor(100 * strictly_below / n)`.
pub fn percentile(scores: &[u8], requester: u8) -> u8 {
    if scores.is_empty() {
        return 0;
    }
    let below = scores.iter().filter(|s| **s < requester).count();
    (100 * below / scores.len()) as u8
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn aggregate(cohort_key: &str, scores: &[u8]) -> CohortAggregate {
    let mut sorted: Vec<f64> = scores.iter().map(|s| *s as f64).collect();
    sorted.sort_by(f64::total_cmp);
    let q = if sorted.is_empty() {
        [0.0; 3]
    } else {
        [quantile(&sorted, 0.25), quantile(&sorted, 0.5), quantile(&sorted, 0.75)]
    };
    CohortAggregate {
        cohort_key: cohort_key.to_string(),
        n: scores.len(),
        median_score: q[1],
        quartiles: q,
    }
}

/// Ranks `requester` in a cohort of scores, refusing below the threshold.
pub fn benchmark_scores(cohort_key: &str, scores: &[u8], requester: u8, threshold: usize) -> BenchmarkResult {
    if scores.len() < threshold {
        return BenchmarkResult::Refused {
            reason: "threshold_not_met".into(),
            n: scores.len(),
            threshold,
        };
    }
    BenchmarkResult::Ranked {
        percentile: percentile(scores, requester),
        aggregate: aggregate(cohort_key, scores),
    }
}

/// Benchmarks a workspace's latest snapshot against the latest snapshot of
/// every workspace in the cohort. The requester counts as a member.
pub fn benchmark(
    store: &Store,
    config: &PostureConfig,
    ws: &WorkspaceId,
    cohort_key: &str,
) -> Result<BenchmarkResult, IntelligenceError> {
    let workspace = store.workspace(ws)?;
    let snaps: Vec<PostureSnapshot> = store.all(ws)?;
    let mine = snaps
        .iter()
        .max_by_key(|s| s.at)
        .ok_or_else(|| IntelligenceError::NoEvidence(ws.to_string()))?
        .score;
    let mut scores = store.cohort_scores(cohort_key);
    if workspace.cohort_key.as_deref() != Some(cohort_key) {
        scores.push(mine);
    }
    Ok(benchmark_scores(cohort_key, &scores, mine, config.cohort_min_size))
}
