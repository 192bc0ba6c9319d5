use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tablelift_core::pipeline::{RunConfig, RunResult, Stage};
use tablelift_core::tablecore::TaskKind;

/// Lifecycle of a job. States only move forward in declaration order; a job
/// may fail from any active state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Searching,
    Selecting,
    Aligning,
    Evaluating,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

impl From<Stage> for JobState {
    fn from(stage: Stage) -> Self {
        match stage {
            Stage::Search => JobState::Searching,
            Stage::Select => JobState::Selecting,
            Stage::Align => JobState::Aligning,
            Stage::Eval => JobState::Evaluating,
        }
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub state: JobState,
    pub config: RunConfig,
    pub key: String,
    pub task: String,
    pub task_kind: TaskKind,
    pub submitted_ms: u64,
    pub started_ms: Option<u64>,
    pub finished_ms: Option<u64>,
    pub error: Option<String>,
    pub result: Option<RunResult>,
}

impl Job {
    pub fn queued(
        id: String,
        config: RunConfig,
        key: String,
        task: String,
        task_kind: TaskKind,
    ) -> Self {
        Self {
            id,
            state: JobState::Queued,
            config,
            key,
            task,
            task_kind,
            submitted_ms: now_ms(),
            started_ms: None,
            finished_ms: None,
            error: None,
            result: None,
        }
    }

    /// A finished job rebuilt from a bare run record, e.g. one written by the CLI.
    pub fn from_run(id: String, result: RunResult) -> Self {
        let base = &result.enriched.base;
        Self {
            id,
            state: JobState::Done,
            config: result.config.clone(),
            key: base.key_name().to_string(),
            task: base.task_name().to_string(),
            task_kind: base.task_kind,
            submitted_ms: 0,
            started_ms: None,
            finished_ms: None,
            error: None,
            result: Some(result),
        }
    }

    /// Moves to `next` if that is forward progress; returns whether it moved.
    pub fn advance(&mut self, next: JobState) -> bool {
        if self.state.is_terminal() || next <= self.state {
            return false;
        }
        if self.started_ms.is_none() {
            self.started_ms = Some(now_ms());
        }
        self.state = next;
        true
    }

    pub fn finish(&mut self, outcome: Result<RunResult, String>) {
        self.finished_ms = Some(now_ms());
        match outcome {
            Ok(result) => {
                self.state = JobState::Done;
                self.result = Some(result);
            }
            Err(message) => {
                self.state = JobState::Failed;
                self.error = Some(message);
            }
        }
    }
}
