//! Result persistence: CSV tables with fixed headers, the key-value run
//! manifest, and the verify report. All floats carry 17 significant digits;
//! reruns with an identical config are byte-identical (timestamps honor
//! SOURCE_DATE_EPOCH).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// FNV-1a over the canonical run inputs; stable across runs and platforms.
pub fn run_id(config_text: &str, command: &str, seed_override: Option<u64>) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut feed = |bytes: &[u8]| {
        for b in bytes {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    feed(command.as_bytes());
    feed(config_text.as_bytes());
    if let Some(s) = seed_override {
        feed(&s.to_le_bytes());
    }
    format!("{h:016x}")
}

pub struct CsvWriter {
    buf: String,
}

impl CsvWriter {
    pub fn new(run_id: &str, header: &[&str]) -> Self {
        let mut buf = String::new();
        let _ = writeln!(buf, "# run_id = {run_id}");
        let _ = writeln!(buf, "{}", header.join(","));
        CsvWriter { buf }
    }

    pub fn row(&mut self, fields: &[String]) {
        let _ = writeln!(self.buf, "{}", fields.join(","));
    }

    pub fn write(self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.buf)
    }
}

#[derive(Debug, Clone)]
pub struct CheckRecord {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckRecord {
    /// measured <= threshold passes; a non-finite threshold marks a
    /// recorded-only diagnostic that always passes.
    pub fn le(name: &str, measured: f64, threshold: f64) -> Self {
        CheckRecord {
            name: name.to_string(),
            measured,
            threshold,
            pass: !threshold.is_finite() || measured <= threshold,
        }
    }

    /// Explicit outcome with a recorded value.
    pub fn with(name: &str, measured: f64, threshold: f64, pass: bool) -> Self {
        CheckRecord {
            name: name.to_string(),
            measured,
            threshold,
            pass,
        }
    }
}

pub fn write_verify_report(
    path: &Path,
    run_id: &str,
    records: &[CheckRecord],
) -> std::io::Result<()> {
    let mut buf = String::new();
    let _ = writeln!(buf, "run_id = {run_id}");
    for r in records {
        let threshold = if r.threshold.is_finite() {
            fmt_f64(r.threshold)
        } else {
            "recorded".to_string()
        };
        let _ = writeln!(
            buf,
            "{} = {} | {} | {}",
            r.name,
            fmt_f64(r.measured),
            threshold,
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    let passed = records.iter().filter(|r| r.pass).count();
    let _ = writeln!(buf, "summary = {passed}/{} passed", records.len());
    std::fs::write(path, buf)
}

pub struct Manifest {
    lines: Vec<(String, String)>,
    files: Vec<String>,
}

impl Manifest {
    pub fn new(run_id: &str, command: &str) -> Self {
        let timestamp = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|s| s.parse::<u64>().ok())
            .unwrap_or_else(|| {
                std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0)
            });
        let mut m = Manifest {
            lines: Vec::new(),
            files: Vec::new(),
        };
        m.set("run_id", run_id);
        m.set("command", command);
        m.set("artifact_version", env!("CARGO_PKG_VERSION"));
        m.set("timestamp_unix", &timestamp.to_string());
        m
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn set_f64(&mut self, key: &str, value: f64) {
        self.set(key, &fmt_f64(value));
    }

    /// Inventory by file name, relative to the manifest's own directory, so
    /// reruns into different locations stay byte-identical.
    pub fn add_file(&mut self, path: &Path) {
        self.files.push(
            path.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
        );
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let mut buf = String::new();
        for (k, v) in &self.lines {
            let _ = writeln!(buf, "{k} = {v}");
        }
        for f in &self.files {
            let _ = writeln!(buf, "output_file = {f}");
        }
        let path = dir.join("manifest.txt");
        std::fs::write(&path, buf)?;
        Ok(path)
    }
}
