//! In-memory table of asynchronous task runs.

use std::collections::HashMap;
use std::sync::Mutex;

use hygieia_core::TaskKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    /// Allowed moves: Queued to Running, Running to Done or Failed.
    pub fn can_become(self, next: JobState) -> bool {
        matches!(
            (self, next),
            (JobState::Queued, JobState::Running) | (JobState::Running, JobState::Done) | (JobState::Running, JobState::Failed)
        )
    }
}

/// Where a finished job's outcome can be read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultRef {
    pub case_id: String,
    pub outcome_index: usize,
    pub trace_ref: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: String,
    pub case_id: String,
    pub task: TaskKind,
    pub state: JobState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result_ref: Option<ResultRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Default)]
pub struct Jobs {
    inner: Mutex<JobsInner>,
}

#[derive(Debug, Default)]
struct JobsInner {
    next: u64,
    jobs: HashMap<String, JobStatus>,
}

impl Jobs {
    pub fn submit(&self, case_id: &str, task: TaskKind) -> JobStatus {
        let mut inner = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        inner.next += 1;
        let status = JobStatus {
            job_id: format!("job-{:06}", inner.next),
            case_id: case_id.to_string(),
            task,
            state: JobState::Queued,
            result_ref: None,
            error: None,
        };
        inner.jobs.insert(status.job_id.clone(), status.clone());
        status
    }

    pub fn get(&self, job_id: &str) -> Option<JobStatus> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).jobs.get(job_id).cloned()
    }

    /// Moves a job forward. Returns false, leaving the job untouched, for
    /// unknown jobs and disallowed transitions.
    pub fn advance(&self, job_id: &str, next: JobState, result_ref: Option<ResultRef>, error: Option<String>) -> bool {
        let mut inner = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        match inner.jobs.get_mut(job_id) {
            Some(job) if job.state.can_become(next) => {
                job.state = next;
                job.result_ref = result_ref.or(job.result_ref.take());
                job.error = error.or(job.error.take());
                true
            }
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transitions_only_move_forward() {
        let jobs = Jobs::default();
        let j = jobs.submit("a", TaskKind::Diagnose);
        assert_eq!(j.job_id, "job-000001");
        assert!(!jobs.advance(&j.job_id, JobState::Done, None, None));
        assert!(jobs.advance(&j.job_id, JobState::Running, None, None));
        assert!(!jobs.advance(&j.job_id, JobState::Queued, None, None));
        assert!(jobs.advance(&j.job_id, JobState::Failed, None, Some("boom".into())));
        assert!(!jobs.advance(&j.job_id, JobState::Done, None, None));
        let j = jobs.get(&j.job_id).unwrap();
        assert_eq!((j.state, j.error.as_deref()), (JobState::Failed, Some("boom")));
        assert!(!jobs.advance("missing", JobState::Running, None, None));
    }

    #[test]
    fn state_machine_is_exhaustive() {
        use JobState::*;
        let all = [Queued, Running, Done, Failed];
        let allowed: Vec<_> = all
            .iter()
            .flat_map(|a| all.iter().map(move |b| (*a, *b)))
            .filter(|(a, b)| a.can_become(*b))
            .collect();
        assert_eq!(allowed, [(Queued, Running), (Running, Done), (Running, Failed)]);
    }
}
