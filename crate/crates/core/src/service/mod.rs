//! HTTP job service: register a pipeline, characterize its frontier in the
//! background, serve schedule lookups and react to straggler notifications.
//!
//! Job state lives in flat files under the working directory: `<id>.json`
//! for the record, plus `<id>.frontier.csv` and `<id>.frontier.json` once
//! ready. Lookups read an immutable frontier and never wait on
//! characterization.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock, RwLock};
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::costmodel::ProfileSet;
use crate::dag::{parse_dag_spec, NodeDag};
use crate::error::{Error, Result};
use crate::frontier::{all_max_schedule, discover_frontier, frontier_csv, EnergySchedule, Frontier, ScheduleDocument};
use crate::units::{secs_to_quanta, Quanta, DEFAULT_TAU_US};
use crate::workload::Workload;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Pending,
    Characterizing,
    Ready,
    Failed,
}

/// `dag` is a builtin spec string (`1f1b:4x8`) or an inline DAG document.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DagInput {
    Spec(String),
    Inline(NodeDag),
}

#[derive(Debug, Clone, Deserialize)]
pub struct JobRequest {
    pub dag: DagInput,
    /// Profile document, same format as the `--profiles` file.
    pub profiles: serde_json::Value,
    #[serde(default)]
    pub tau_us: Option<u64>,
}

/// Persisted job record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub dag: NodeDag,
    pub profiles: serde_json::Value,
    pub tau_us: u64,
    pub state: JobState,
    #[serde(default)]
    pub error: Option<String>,
    /// Schedule the non-straggler pipelines should run.
    pub deployed_schedule_id: Option<usize>,
    /// Last announced straggler degree (1 = none).
    pub straggler_degree: f64,
    /// Bumped by every straggler notification; a delayed switch only applies
    /// if no newer notification arrived in the meantime.
    pub generation: u64,
    pub t_min_us: Option<i64>,
    pub t_star_us: Option<i64>,
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StragglerNotice {
    pub delay_s: f64,
    pub degree: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleResponse {
    pub job_id: String,
    pub state: JobState,
    #[serde(flatten)]
    pub schedule: ScheduleDocument,
}

struct Job {
    record: Mutex<JobRecord>,
    workload: Workload,
    all_max: EnergySchedule,
    frontier: OnceLock<Arc<Frontier>>,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub workdir: PathBuf,
    pub workers: usize,
    pub quantum_us: u32,
    pub p_blocking_watts: Option<f64>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

struct Inner {
    config: ServiceConfig,
    jobs: RwLock<HashMap<String, Arc<Job>>>,
    workers: Arc<Semaphore>,
}

impl AppState {
    /// Opens the working directory and reloads persisted jobs. Jobs that were
    /// not ready are characterized again once a runtime picks them up via
    /// [`AppState::resume`].
    pub fn open(config: ServiceConfig) -> Result<Self> {
        if config.workers == 0 {
            return Err(Error::InvalidInput("need at least one worker".into()));
        }
        std::fs::create_dir_all(&config.workdir)?;
        let state = AppState(Arc::new(Inner {
            workers: Arc::new(Semaphore::new(config.workers)),
            jobs: RwLock::new(HashMap::new()),
            config,
        }));
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&state.0.config.workdir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                name.ends_with(".json") && !name.ends_with(".frontier.json")
            })
            .collect();
        entries.sort();
        for path in entries {
            let record: JobRecord = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
            let job = state.build_job(record)?;
            if job.record.lock().unwrap().state == JobState::Ready {
                let frontier_path = state.frontier_json_path(&job.record.lock().unwrap().job_id);
                let frontier: Frontier = serde_json::from_str(&std::fs::read_to_string(frontier_path)?)?;
                let _ = job.frontier.set(Arc::new(frontier));
            }
            let id = job.record.lock().unwrap().job_id.clone();
            state.0.jobs.write().unwrap().insert(id, job);
        }
        Ok(state)
    }

    /// Queues characterization for every job that is not ready or failed.
    pub fn resume(&self) {
        let pending: Vec<String> = self
            .0
            .jobs
            .read()
            .unwrap()
            .iter()
            .filter(|(_, j)| matches!(j.record.lock().unwrap().state, JobState::Pending | JobState::Characterizing))
            .map(|(id, _)| id.clone())
            .collect();
        for id in pending {
            self.spawn_characterization(id);
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.0.config
    }

    fn record_path(&self, id: &str) -> PathBuf {
        self.0.config.workdir.join(format!("{id}.json"))
    }

    fn frontier_json_path(&self, id: &str) -> PathBuf {
        self.0.config.workdir.join(format!("{id}.frontier.json"))
    }

    fn build_job(&self, record: JobRecord) -> Result<Arc<Job>> {
        let profiles = ProfileSet::from_json_str(
            &record.profiles.to_string(),
            self.0.config.quantum_us,
            self.0.config.p_blocking_watts,
        )?;
        let workload = Workload::new(record.dag.clone(), profiles)?;
        let all_max = all_max_schedule(&workload);
        Ok(Arc::new(Job { record: Mutex::new(record), workload, all_max, frontier: OnceLock::new() }))
    }

    fn job(&self, id: &str) -> Option<Arc<Job>> {
        self.0.jobs.read().unwrap().get(id).cloned()
    }

    fn persist(&self, record: &JobRecord) -> Result<()> {
        write_atomic(&self.record_path(&record.job_id), &serde_json::to_string_pretty(record)?)
    }

    /// Validates and registers a job, then queues its characterization.
    pub fn submit(&self, request: JobRequest) -> Result<JobRecord> {
        let dag = match request.dag {
            DagInput::Spec(spec) => parse_dag_spec(&spec)?,
            DagInput::Inline(dag) => dag,
        };
        let tau_us = request.tau_us.unwrap_or(DEFAULT_TAU_US);
        if tau_us == 0 {
            return Err(Error::InvalidInput("tau_us must be positive".into()));
        }
        let record = JobRecord {
            job_id: uuid::Uuid::new_v4().simple().to_string(),
            dag,
            profiles: request.profiles,
            tau_us,
            state: JobState::Pending,
            error: None,
            deployed_schedule_id: None,
            straggler_degree: 1.0,
            generation: 0,
            t_min_us: None,
            t_star_us: None,
            steps: None,
        };
        let job = self.build_job(record.clone())?;
        self.persist(&record)?;
        self.0.jobs.write().unwrap().insert(record.job_id.clone(), job);
        self.spawn_characterization(record.job_id.clone());
        Ok(record)
    }

    fn spawn_characterization(&self, id: String) {
        let state = self.clone();
        tokio::spawn(async move {
            let Some(job) = state.job(&id) else { return };
            let _permit = state.0.workers.clone().acquire_owned().await.expect("semaphore open");
            let tau = {
                let mut r = job.record.lock().unwrap();
                r.state = JobState::Characterizing;
                let _ = state.persist(&r);
                secs_to_quanta(r.tau_us as f64 * 1e-6, state.0.config.quantum_us).max(1)
            };
            let worker_job = job.clone();
            let outcome = tokio::task::spawn_blocking(move || discover_frontier(&worker_job.workload, tau)).await;
            let outcome = match outcome {
                Ok(r) => r,
                Err(e) => Err(Error::InvalidInput(format!("characterization panicked: {e}"))),
            };
            state.finish(&job, outcome);
        });
    }

    fn finish(&self, job: &Job, outcome: Result<Frontier>) {
        let mut r = job.record.lock().unwrap();
        match outcome {
            Ok(frontier) => {
                let q = self.0.config.quantum_us;
                let persisted = serde_json::to_string(&frontier)
                    .map_err(Error::from)
                    .and_then(|json| write_atomic(&self.frontier_json_path(&r.job_id), &json))
                    .and_then(|_| {
                        let csv = self.0.config.workdir.join(format!("{}.frontier.csv", r.job_id));
                        write_atomic(&csv, &frontier_csv(&frontier, q))
                    });
                if let Err(e) = persisted {
                    r.state = JobState::Failed;
                    r.error = Some(e.to_string());
                } else {
                    r.t_min_us = Some(frontier.t_min * q as i64);
                    r.t_star_us = Some(frontier.t_star * q as i64);
                    r.steps = Some(frontier.steps());
                    let target = straggler_target(frontier.t_min, r.straggler_degree);
                    r.deployed_schedule_id = Some(frontier.lookup(target).id);
                    let _ = job.frontier.set(Arc::new(frontier));
                    r.state = JobState::Ready;
                }
            }
            Err(e) => {
                r.state = JobState::Failed;
                r.error = Some(e.to_string());
            }
        }
        let _ = self.persist(&r);
    }

    pub fn record(&self, id: &str) -> Option<JobRecord> {
        self.job(id).map(|j| j.record.lock().unwrap().clone())
    }

    /// Schedule for straggler time `straggler_time_us`, or the deployed one.
    /// Before the frontier is ready this is the all-max schedule.
    pub fn schedule(&self, id: &str, straggler_time_us: Option<i64>) -> Option<ScheduleResponse> {
        let job = self.job(id)?;
        let q = self.0.config.quantum_us;
        let (state, deployed) = {
            let r = job.record.lock().unwrap();
            (r.state, r.deployed_schedule_id)
        };
        let schedule = match (job.frontier.get(), straggler_time_us) {
            (Some(f), Some(us)) => f.lookup(us.div_euclid(q as i64)),
            (Some(f), None) => deployed.and_then(|d| f.schedules().iter().find(|s| s.id == d)).unwrap_or(f.fastest()),
            (None, _) => &job.all_max,
        };
        Some(ScheduleResponse { job_id: id.to_string(), state, schedule: ScheduleDocument::from_schedule(schedule, q) })
    }

    /// Records a straggler notice; after `delay_s` the deployed schedule
    /// switches to `lookup(degree * T_min)` unless a newer notice arrived.
    pub fn notify_straggler(&self, id: &str, notice: StragglerNotice) -> Option<Result<JobRecord>> {
        let job = self.job(id)?;
        if !(notice.degree.is_finite() && notice.degree >= 1.0) {
            return Some(Err(Error::InvalidInput(format!("degree must be >= 1, got {}", notice.degree))));
        }
        if !(notice.delay_s.is_finite() && notice.delay_s >= 0.0) {
            return Some(Err(Error::InvalidInput(format!("delay_s must be >= 0, got {}", notice.delay_s))));
        }
        let generation = {
            let mut r = job.record.lock().unwrap();
            r.generation += 1;
            let _ = self.persist(&r);
            r.generation
        };
        let state = self.clone();
        let delayed = job.clone();
        tokio::spawn(async move {
            tokio::time::sleep(Duration::from_secs_f64(notice.delay_s)).await;
            let mut r = delayed.record.lock().unwrap();
            if r.generation != generation {
                return;
            }
            r.straggler_degree = notice.degree;
            if let Some(f) = delayed.frontier.get() {
                r.deployed_schedule_id = Some(f.lookup(straggler_target(f.t_min, notice.degree)).id);
            }
            let _ = state.persist(&r);
        });
        let record = job.record.lock().unwrap().clone();
        Some(Ok(record))
    }
}

fn straggler_target(t_min: Quanta, degree: f64) -> Quanta {
    (t_min as f64 * degree).round() as Quanta
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: msg.into() })).into_response()
}

fn not_found(id: &str) -> Response {
    error(StatusCode::NOT_FOUND, format!("unknown job {id}"))
}

async fn create_job(State(state): State<AppState>, body: std::result::Result<Json<JobRequest>, JsonRejection>) -> Response {
    let Json(request) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()),
    };
    match state.submit(request) {
        Ok(r) => (StatusCode::CREATED, Json(serde_json::json!({"job_id": r.job_id, "state": r.state}))).into_response(),
        Err(Error::Io(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    }
}

async fn get_job(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    match state.record(&id) {
        Some(r) => {
            let mut v = serde_json::to_value(&r).expect("record serializes");
            // the DAG and profiles are inputs; keep status responses small
            if let Some(o) = v.as_object_mut() {
                o.remove("dag");
                o.remove("profiles");
            }
            Json(v).into_response()
        }
        None => not_found(&id),
    }
}

#[derive(Debug, Deserialize)]
struct ScheduleQuery {
    straggler_time_us: Option<i64>,
}

async fn get_schedule(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    query: std::result::Result<Query<ScheduleQuery>, axum::extract::rejection::QueryRejection>,
) -> Response {
    let Ok(Query(query)) = query else {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "straggler_time_us must be an integer");
    };
    match state.schedule(&id, query.straggler_time_us) {
        Some(s) => Json(s).into_response(),
        None => not_found(&id),
    }
}

async fn post_straggler(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: std::result::Result<Json<StragglerNotice>, JsonRejection>,
) -> Response {
    let Json(notice) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()),
    };
    match state.notify_straggler(&id, notice) {
        None => not_found(&id),
        Some(Err(e)) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        Some(Ok(r)) => (
            StatusCode::ACCEPTED,
            Json(serde_json::json!({"job_id": r.job_id, "accepted": true, "generation": r.generation, "delay_s": notice.delay_s, "degree": notice.degree})),
        )
            .into_response(),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/jobs", post(create_job))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/schedule", get(get_schedule))
        .route("/jobs/{id}/straggler", post(post_straggler))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: std::net::SocketAddr, state: AppState) -> Result<()> {
    state.resume();
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await?;
    Ok(())
}
