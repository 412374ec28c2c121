use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use plaquette_sim::report::ExperimentReport;
use plaquette_sim::Error;
use serde_json::json;

pub const PASS: u8 = 0;
pub const THRESHOLD_FAILURE: u8 = 1;
pub const USAGE_ERROR: u8 = 2;
pub const NUMERICAL_ERROR: u8 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Text => "text",
            Format::Json => "json",
        }
    }
}

/// An error reported as a machine-readable block on stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
    pub position: Option<(usize, usize)>,
    pub path: Option<PathBuf>,
}

impl Failure {
    pub fn new(code: u8, kind: &'static str, message: impl Into<String>) -> Self {
        Failure {
            code,
            kind,
            message: message.into(),
            position: None,
            path: None,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Failure::new(USAGE_ERROR, "usage", message)
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Failure {
            path: Some(path.to_path_buf()),
            ..Failure::new(USAGE_ERROR, "io", err.to_string())
        }
    }

    pub fn at(mut self, path: &Path) -> Self {
        self.path = Some(path.to_path_buf());
        self
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let mut body = json!({
                    "code": self.code,
                    "kind": self.kind,
                    "message": self.message,
                });
                if let Some((line, column)) = self.position {
                    body["line"] = json!(line);
                    body["column"] = json!(column);
                }
                if let Some(p) = &self.path {
                    body["path"] = json!(p.display().to_string());
                }
                format!("{}\n", json!({ "error": body }))
            }
            Format::Text => {
                let mut out = String::from("error\n");
                let _ = writeln!(out, "  code {}", self.code);
                let _ = writeln!(out, "  kind {}", self.kind);
                if let Some(p) = &self.path {
                    let _ = writeln!(out, "  path {}", p.display());
                }
                if let Some((line, column)) = self.position {
                    let _ = writeln!(out, "  line {line}");
                    let _ = writeln!(out, "  column {column}");
                }
                let _ = writeln!(out, "  message {}", self.message);
                out
            }
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::new(USAGE_ERROR, "config", m),
            Error::Domain(m) => Failure::new(USAGE_ERROR, "domain", m),
            Error::SchemeMismatch(m) => Failure::new(USAGE_ERROR, "scheme_mismatch", m),
            Error::Parse {
                line,
                column,
                message,
            } => Failure {
                position: Some((line, column)),
                ..Failure::new(USAGE_ERROR, "parse", message)
            },
            Error::Json(e) => Failure {
                position: Some((e.line(), e.column())),
                ..Failure::new(USAGE_ERROR, "json", e.to_string())
            },
            Error::Numerical(m) => Failure::new(NUMERICAL_ERROR, "numerical", m),
        }
    }
}

/// Where results go: files under `--out`, or stdout.
pub struct Sink {
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl Sink {
    fn path(&self, dir: &Path, name: &str) -> Result<PathBuf, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        Ok(dir.join(name))
    }

    /// Writes an auxiliary file when `--out` is set; returns its path.
    pub fn file(&self, name: &str, contents: &str) -> Result<Option<PathBuf>, Failure> {
        let Some(dir) = &self.out else {
            return Ok(None);
        };
        let path = self.path(dir, name)?;
        fs::write(&path, contents).map_err(|e| Failure::io(&path, e))?;
        Ok(Some(path))
    }

    pub fn report(
        &self,
        report: &ExperimentReport,
        threshold: f64,
        passed: bool,
    ) -> Result<(), Failure> {
        let body = match self.format {
            Format::Text => report.to_text(),
            Format::Json => report.to_json()? + "\n",
        };
        let ext = match self.format {
            Format::Text => "txt",
            Format::Json => "json",
        };
        match self.file(&format!("{}.report.{ext}", report.protocol), &body)? {
            Some(path) => {
                let status = if passed { "pass" } else { "fail" };
                match self.format {
                    Format::Text => println!(
                        "{} fidelity={:.16e} threshold={threshold:.16e} {status} report={}",
                        report.protocol,
                        report.fidelity,
                        path.display()
                    ),
                    Format::Json => println!(
                        "{}",
                        json!({
                            "protocol": report.protocol,
                            "fidelity": report.fidelity,
                            "threshold": threshold,
                            "passed": passed,
                            "report": path.display().to_string(),
                        })
                    ),
                }
            }
            None => print!("{body}"),
        }
        Ok(())
    }
}
