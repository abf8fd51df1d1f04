//! Bounded pool for analysis jobs.
//!
//! Jobs run on a dedicated rayon pool, so the analyses' own data parallelism stays
//! inside it. At most `capacity` jobs may be queued or running; further submissions
//! are refused rather than queued without bound.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::error::{ApiError, ApiResult};

#[derive(Debug, Clone, Serialize, PartialEq)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done { result: serde_json::Value },
    Failed { error: ApiError },
}

impl JobState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, JobState::Done { .. } | JobState::Failed { .. })
    }
}

pub struct JobPool {
    pool: rayon::ThreadPool,
    jobs: Mutex<BTreeMap<u64, JobState>>,
    next: AtomicU64,
    capacity: usize,
}

impl JobPool {
    pub fn new(workers: usize, capacity: usize) -> ApiResult<Arc<Self>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .thread_name(|i| format!("botdyn-job-{i}"))
            .build()
            .map_err(|e| ApiError::new(500, "internal", e.to_string()))?;
        Ok(Arc::new(JobPool { pool, jobs: Mutex::new(BTreeMap::new()), next: AtomicU64::new(1), capacity: capacity.max(1) }))
    }

    fn set(&self, id: u64, state: JobState) {
        self.jobs.lock().expect("job table poisoned").insert(id, state);
    }

    pub fn submit<F>(self: &Arc<Self>, f: F) -> ApiResult<u64>
    where
        F: FnOnce() -> ApiResult<serde_json::Value> + Send + 'static,
    {
        let id = {
            let mut jobs = self.jobs.lock().expect("job table poisoned");
            let pending = jobs.values().filter(|s| !s.is_terminal()).count();
            if pending >= self.capacity {
                return Err(ApiError::busy(format!("{pending} jobs pending (capacity {})", self.capacity)));
            }
            let id = self.next.fetch_add(1, Ordering::SeqCst);
            jobs.insert(id, JobState::Queued);
            id
        };
        let me = Arc::clone(self);
        self.pool.spawn(move || {
            me.set(id, JobState::Running);
            let state = match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
                Ok(Ok(result)) => JobState::Done { result },
                Ok(Err(error)) => JobState::Failed { error },
                Err(_) => JobState::Failed { error: ApiError::new(500, "internal", "job panicked") },
            };
            me.set(id, state);
        });
        Ok(id)
    }

    pub fn get(&self, id: u64) -> ApiResult<JobState> {
        self.jobs
            .lock()
            .expect("job table poisoned")
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no job {id}")))
    }

    /// Blocks until job `id` finishes. For tests and the CLI.
    pub fn wait(&self, id: u64) -> ApiResult<JobState> {
        loop {
            let s = self.get(id)?;
            if s.is_terminal() {
                return Ok(s);
            }
            std::thread::sleep(std::time::Duration::from_millis(2));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::mpsc;

    #[test]
    fn capacity_is_enforced_and_results_kept() {
        let pool = JobPool::new(1, 1).unwrap();
        let (tx, rx) = mpsc::channel::<()>();
        let blocked = pool
            .submit(move || {
                rx.recv().ok();
                Ok(serde_json::json!(1))
            })
            .unwrap();
        assert_eq!(pool.submit(|| Ok(serde_json::json!(2))).unwrap_err().code, "busy");
        tx.send(()).unwrap();
        assert_eq!(pool.wait(blocked).unwrap(), JobState::Done { result: serde_json::json!(1) });
        let failed = pool.submit(|| Err(ApiError::bad_request("nope"))).unwrap();
        assert!(matches!(pool.wait(failed).unwrap(), JobState::Failed { error } if error.code == "invalid_argument"));
        assert_eq!(pool.get(999).unwrap_err().status, 404);
    }

    #[test]
    fn job_state_serializes_with_status_tag() {
        let v = serde_json::to_value(JobState::Done { result: serde_json::json!({"x": 1}) }).unwrap();
        assert_eq!(v, serde_json::json!({"status": "done", "result": {"x": 1}}));
        assert_eq!(serde_json::to_value(JobState::Queued).unwrap(), serde_json::json!({"status": "queued"}));
    }
}
