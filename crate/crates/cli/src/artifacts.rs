use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;

pub const MANIFEST: &str = "manifest.json";

/// Artifact directory; every file goes through here so the manifest can list it.
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
    started: Instant,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    version: &'static str,
    core_version: &'static str,
    wall_time_s: f64,
    status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    artifacts: &'a [String],
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            started: Instant::now(),
        })
    }

    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, &s)
    }

    pub fn csv<R>(&mut self, name: &str, header: &[&str], rows: R) -> Result<()>
    where
        R: IntoIterator<Item = Vec<String>>,
    {
        let mut s = header.join(",");
        s.push('\n');
        for row in rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        self.write(name, &s)
    }

    pub fn finish(self, config: &ExperimentConfig, error: Option<String>) -> Result<()> {
        let m = Manifest {
            config,
            version: env!("CARGO_PKG_VERSION"),
            core_version: nlkpp::VERSION,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            status: if error.is_some() { "failed" } else { "ok" },
            error,
            artifacts: &self.written,
        };
        let path = self.dir.join(MANIFEST);
        let mut s = serde_json::to_string_pretty(&m)?;
        s.push('\n');
        fs::write(&path, s).with_context(|| format!("writing {}", path.display()))
    }
}

/// Numeric CSV cells.
pub fn row(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| num(*v)).collect()
}

/// Shortest round-trip form, in exponent notation outside `[1e−4, 1e15)`.
pub fn num(v: f64) -> String {
    let mut s = String::new();
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        let _ = write!(s, "{v}");
    } else {
        let _ = write!(s, "{v:e}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::num;

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, 2.5, -1e-18, 4.346071502632029e-18, 123456.789, 3e20, 1e-4] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(1e-7), "1e-7");
        assert_eq!(num(0.25), "0.25");
    }
}
