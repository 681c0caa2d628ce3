use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};

use cipherobs_core::encobs::{EncObserver, EncSetup, EncryptorSession};
use cipherobs_core::lwe::LweRng;
use cipherobs_core::pipeline::Design;
use cipherobs_core::quantobs::quantize_input;

pub struct BenchRow {
    pub lwe_dim: usize,
    pub threads: usize,
    pub per_step_ms: f64,
}

/// Mean wall time of one encrypted observer update, encryption excluded.
pub fn run(design: &Design, sizes: &[usize], steps: usize, seed: u64) -> Result<Vec<BenchRow>> {
    let max_threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mut thread_counts = vec![1];
    if max_threads > 1 {
        thread_counts.push(max_threads);
    }
    let traj = design.simulate(steps);
    let mut rows = Vec::new();
    for &n in sizes {
        let mut qobs = design.qobs.clone();
        qobs.params.lwe_dim = n;
        let setup = Arc::new(EncSetup::new(qobs)?);
        let mut session = EncryptorSession::new(setup.clone(), LweRng::insecure_test(seed));
        let zbar = setup.qobs.initial_state(&design.zhat_ini).zbar;
        let init = session.enc_initial(&zbar)?;
        let inputs = traj
            .iter()
            .map(|s| Ok(session.enc_input(&quantize_input(&s.u, &s.y, &setup.qobs.params))?.modified))
            .collect::<Result<Vec<_>>>()?;
        let observer = EncObserver::new(setup.clone());
        for &threads in &thread_counts {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().context("thread pool")?;
            let elapsed = pool.install(|| -> Result<f64> {
                let mut state = observer.init(&init.modified)?;
                let start = Instant::now();
                for cts in &inputs {
                    state = observer.step(&state, cts)?;
                }
                Ok(start.elapsed().as_secs_f64())
            })?;
            rows.push(BenchRow {
                lwe_dim: n,
                threads,
                per_step_ms: 1e3 * elapsed / steps.max(1) as f64,
            });
        }
    }
    Ok(rows)
}
