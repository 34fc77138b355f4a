//! Configuration, pipeline and report writing behind the `hypercd` binary.

pub mod config;
pub mod pipeline;

use hypercd::selftest::{run_all, SuiteResult};

/// Runs the invariant suites, optionally appending a suite that always fails.
pub fn selftest_suites(seed: u64, force_fail: bool) -> Vec<SuiteResult> {
    let mut suites = run_all(seed);
    if force_fail {
        suites.push(SuiteResult {
            name: "forced failure".into(),
            passed: 0,
            total: 1,
            notes: vec!["failure requested with --force-fail".into()],
        });
    }
    suites
}

/// Caps the global thread pool from `HYPERCD_THREADS` when it is set.
pub fn init_threads() -> Result<Option<usize>, String> {
    let Ok(text) = std::env::var("HYPERCD_THREADS") else {
        return Ok(None);
    };
    let n: usize = text
        .trim()
        .parse()
        .map_err(|_| format!("HYPERCD_THREADS must be a positive integer, got {text:?}"))?;
    if n == 0 {
        return Err("HYPERCD_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())?;
    Ok(Some(n))
}
