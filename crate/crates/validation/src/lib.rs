//! Shared helpers for the acceptance checks.

use std::io::Write;
use std::path::PathBuf;

use ltm_core::config::NetworkConfig;

/// Path of a shipped scenario file.
pub fn scenario_path(name: &str) -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", &format!("{name}.cfg")].iter().collect()
}

pub fn scenario(name: &str) -> NetworkConfig {
    let p = scenario_path(name);
    NetworkConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// Collected failure messages of one criterion.
#[derive(Debug, Default)]
pub struct Verdict(pub Vec<String>);

impl Verdict {
    pub fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.0.push(what());
        }
    }

    pub fn fail(&mut self, what: String) {
        self.0.push(what);
    }

    /// Print one PASS or FAIL line past the test harness capture, then panic on failure.
    pub fn report(self, n: usize, title: &str) {
        let line = if self.0.is_empty() {
            format!("PASS criterion {n}: {title}\n")
        } else {
            format!("FAIL criterion {n}: {title}: {}\n", self.0.join("; "))
        };
        let mut out = std::io::stdout().lock();
        let _ = out.write_all(line.as_bytes());
        let _ = out.flush();
        assert!(self.0.is_empty(), "{line}");
    }
}
