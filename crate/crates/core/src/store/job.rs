use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Lifecycle of an import. States only move forward:
/// `staged → awaiting_labels → finalizing → complete`, with `failed`
/// reachable from any non-terminal state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JobState {
    Staged,
    AwaitingLabels,
    Finalizing,
    Complete,
    Failed { reason: String },
}

impl JobState {
    fn rank(&self) -> u8 {
        match self {
            JobState::Staged => 0,
            JobState::AwaitingLabels => 1,
            JobState::Finalizing => 2,
            JobState::Complete | JobState::Failed { .. } => 3,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.rank() == 3
    }

    pub fn name(&self) -> &'static str {
        match self {
            JobState::Staged => "staged",
            JobState::AwaitingLabels => "awaiting_labels",
            JobState::Finalizing => "finalizing",
            JobState::Complete => "complete",
            JobState::Failed { .. } => "failed",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobCounts {
    pub discovered: usize,
    pub parsed: usize,
    pub aligned: usize,
    pub stored: usize,
}

/// A file that did not make it through the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileError {
    pub path: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportJob {
    pub job_id: String,
    pub driver_id: String,
    pub dataset_id: String,
    pub root_path: String,
    pub strip_gravity: bool,
    #[serde(flatten)]
    pub state: JobState,
    pub counts: JobCounts,
    pub file_errors: Vec<FileError>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl ImportJob {
    pub fn new(job_id: String, driver_id: &str, dataset_id: &str, root_path: &str, strip_gravity: bool) -> Self {
        let now = Utc::now();
        Self {
            job_id,
            driver_id: driver_id.to_string(),
            dataset_id: dataset_id.to_string(),
            root_path: root_path.to_string(),
            strip_gravity,
            state: JobState::Staged,
            counts: JobCounts::default(),
            file_errors: Vec::new(),
            created_at: now,
            updated_at: now,
        }
    }

    /// Moves to `next`. Backward or out-of-terminal moves are ignored and
    /// reported as `false`.
    pub fn advance(&mut self, next: JobState) -> bool {
        if self.state.is_terminal() || next.rank() < self.state.rank() {
            return false;
        }
        self.state = next;
        self.updated_at = Utc::now();
        true
    }
}
