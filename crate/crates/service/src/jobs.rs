//! Bounded generation queue. Work runs on the blocking pool, one job per
//! worker at a time; submissions beyond the queue bound are refused.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, watch};

use crate::error::ApiError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done { result: serde_json::Value },
    Failed { status: u16, error: String },
}

impl JobStatus {
    pub fn is_finished(&self) -> bool {
        matches!(self, Self::Done { .. } | Self::Failed { .. })
    }
}

type Work = Box<dyn FnOnce() -> Result<serde_json::Value, ApiError> + Send>;

struct Job {
    id: String,
    work: Work,
}

#[derive(Clone)]
pub struct JobQueue {
    tx: mpsc::Sender<Job>,
    jobs: Arc<Mutex<HashMap<String, watch::Sender<JobStatus>>>>,
}

impl JobQueue {
    /// Must be called inside a tokio runtime.
    pub fn start(capacity: usize, workers: usize) -> Self {
        let (tx, rx) = mpsc::channel::<Job>(capacity.max(1));
        let rx = Arc::new(tokio::sync::Mutex::new(rx));
        let jobs: Arc<Mutex<HashMap<String, watch::Sender<JobStatus>>>> = Arc::default();
        for _ in 0..workers.max(1) {
            let rx = rx.clone();
            let jobs = jobs.clone();
            tokio::spawn(async move {
                loop {
                    let Some(job) = rx.lock().await.recv().await else {
                        break;
                    };
                    let set = |s: JobStatus| {
                        if let Some(tx) = jobs.lock().expect("jobs lock").get(&job.id) {
                            tx.send_replace(s);
                        }
                    };
                    set(JobStatus::Running);
                    let outcome = tokio::task::spawn_blocking(job.work).await;
                    set(match outcome {
                        Ok(Ok(result)) => JobStatus::Done { result },
                        Ok(Err(e)) => JobStatus::Failed {
                            status: e.status().as_u16(),
                            error: e.to_string(),
                        },
                        Err(join) => JobStatus::Failed {
                            status: 500,
                            error: format!("job panicked: {join}"),
                        },
                    });
                }
            });
        }
        Self { tx, jobs }
    }

    pub fn submit(
        &self,
        work: impl FnOnce() -> Result<serde_json::Value, ApiError> + Send + 'static,
    ) -> Result<(String, watch::Receiver<JobStatus>), ApiError> {
        let id = crate::store::new_id();
        let (status_tx, status_rx) = watch::channel(JobStatus::Queued);
        self.jobs
            .lock()
            .expect("jobs lock")
            .insert(id.clone(), status_tx);
        let job = Job {
            id: id.clone(),
            work: Box::new(work),
        };
        if self.tx.try_send(job).is_err() {
            self.jobs.lock().expect("jobs lock").remove(&id);
            return Err(ApiError::QueueFull);
        }
        Ok((id, status_rx))
    }

    pub fn status(&self, id: &str) -> Option<JobStatus> {
        self.jobs
            .lock()
            .expect("jobs lock")
            .get(id)
            .map(|tx| tx.borrow().clone())
    }
}
