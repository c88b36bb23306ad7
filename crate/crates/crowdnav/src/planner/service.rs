//! Asynchronous planning service: a background worker replans from the
//! latest robot position and publishes whole paths; readers never wait on
//! planning.

use crate::geom::Vec2;
use crate::planner::{plan, GlobalPath, PlanRequest, PlannerConfig};
use crate::seeds;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

struct Shared {
    position: Mutex<Vec2>,
    latest: Mutex<Option<Arc<GlobalPath>>>,
    degraded: AtomicBool,
    stop: AtomicBool,
}

/// Handle to the background planner. Communication is by latest-value
/// snapshot exchange: `update_position` overwrites the input slot,
/// `latest_path` clones out the most recent complete publication.
pub struct PlannerService {
    shared: Arc<Shared>,
    worker: Option<JoinHandle<()>>,
}

impl PlannerService {
    pub fn spawn(request: PlanRequest, cfg: PlannerConfig) -> PlannerService {
        let shared = Arc::new(Shared {
            position: Mutex::new(request.start),
            latest: Mutex::new(None),
            degraded: AtomicBool::new(false),
            stop: AtomicBool::new(false),
        });
        let worker_shared = Arc::clone(&shared);
        let worker = std::thread::spawn(move || {
            let mut attempt: u64 = 0;
            let mut stamp: u64 = 0;
            while !worker_shared.stop.load(Ordering::Acquire) {
                let start = *worker_shared.position.lock().expect("position lock");
                let mut req = request.clone();
                req.start = start;
                req.seed = seeds::derive(request.seed, "service-cycle", attempt);
                attempt += 1;
                match plan(&req, &cfg, cfg.cycle_budget.max(cfg.initial_budget.min(20000))) {
                    Ok(mut path) => {
                        stamp += 1;
                        path.stamp = stamp;
                        *worker_shared.latest.lock().expect("latest lock") = Some(Arc::new(path));
                        worker_shared.degraded.store(false, Ordering::Release);
                    }
                    Err(_) => {
                        let has_path =
                            worker_shared.latest.lock().expect("latest lock").is_some();
                        worker_shared.degraded.store(has_path, Ordering::Release);
                    }
                }
                std::thread::sleep(Duration::from_millis(1));
            }
        });
        PlannerService { shared, worker: Some(worker) }
    }

    /// Latest-value write of the robot position; never blocks on planning.
    pub fn update_position(&self, pos: Vec2) {
        *self.shared.position.lock().expect("position lock") = pos;
    }

    /// The most recently published complete path, if any. Publication is
    /// atomic: readers see either the previous or the new path, never a
    /// partial one.
    pub fn latest_path(&self) -> Option<Arc<GlobalPath>> {
        self.shared.latest.lock().expect("latest lock").clone()
    }

    /// True when the last attempt failed but an earlier path is being
    /// served.
    pub fn degraded(&self) -> bool {
        self.shared.degraded.load(Ordering::Acquire)
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.shared.stop.store(true, Ordering::Release);
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

impl Drop for PlannerService {
    fn drop(&mut self) {
        self.shutdown();
    }
}
