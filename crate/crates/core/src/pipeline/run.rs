use std::sync::mpsc::sync_channel;
use std::time::{Duration, Instant};

use super::tracking::{run_tracking, TrackingEvent, TrackingOutput};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::mapping::Mapper;
use crate::oracle::Oracle;

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub tracking: TrackingOutput,
    /// `None` when mapping is disabled.
    pub mapper: Option<Mapper>,
    pub elapsed: Duration,
}

/// Runs tracking on the calling thread and mapping on a second thread,
/// connected by a bounded queue of keyframes and pose corrections.
pub fn run_pipeline(oracle: &Oracle, cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let start = Instant::now();
    if cfg.disable_mapping {
        let tracking = run_tracking(oracle, &cfg.tracking, |_| Ok(()))?;
        return Ok(RunOutput {
            tracking,
            mapper: None,
            elapsed: start.elapsed(),
        });
    }
    let (tx, rx) = sync_channel::<TrackingEvent>(cfg.queue_capacity);
    let mut mapper = Mapper::new(cfg.mapping, cfg.render, oracle.scene.intrinsics);
    let (tracking, mapped) = std::thread::scope(|scope| {
        let worker = scope.spawn(move || -> Result<Mapper> {
            for event in rx {
                match event {
                    TrackingEvent::Keyframe(p) => {
                        let rgb = oracle.view(p.frame_id).rgb.clone();
                        mapper.integrate(p.frame_id as u32, p.submap_id, p.pose, &p.prediction, rgb)?;
                    }
                    TrackingEvent::Correction(updates) => mapper.apply_correction(&updates)?,
                }
            }
            Ok(mapper)
        });
        let tracking = run_tracking(oracle, &cfg.tracking, |event| {
            tx.send(event)
                .map_err(|_| Error::Config("mapping stage stopped early".into()))
        });
        drop(tx);
        let mapped = worker.join().unwrap_or_else(|_| Err(Error::Config("mapping stage panicked".into())));
        (tracking, mapped)
    });
    // A mapping failure closes the queue, so report it before the tracking error it causes.
    let mapper = mapped?;
    Ok(RunOutput {
        tracking: tracking?,
        mapper: Some(mapper),
        elapsed: start.elapsed(),
    })
}
