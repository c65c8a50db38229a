use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde_json::{json, Map, Value};

/// Anything that ends a run with exit code 1.
#[derive(Debug)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn verification(message: impl Into<String>) -> Self {
        Self::new("verification_failed", message)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl From<pcgan_core::Error> for Failure {
    fn from(e: pcgan_core::Error) -> Self {
        use pcgan_core::Error as E;
        let kind = match &e {
            E::InvalidArgument(_) | E::InvalidContext { .. } => "invalid_argument",
            E::DimensionMismatch { .. } => "dimension_mismatch",
            E::NonFinite(_) => "non_finite",
            E::Asymmetric(_) | E::NotPsd { .. } | E::NegativeDistance(_) => "numerical",
            E::ClassifierRange(_) => "classifier_range",
            E::NonMonotonePlant { .. } => "non_monotone_plant",
            E::Format { .. } => "malformed_file",
            E::Io(_) => "io",
        };
        Failure::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new("io", e.to_string())
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;

pub struct Session {
    pub argv: Vec<String>,
    pub force: bool,
    pub timing: bool,
    started: Instant,
}

impl Session {
    pub fn new(argv: Vec<String>, force: bool, timing: bool) -> Self {
        Self {
            argv,
            force,
            timing,
            started: Instant::now(),
        }
    }

    /// Wraps a result object with the run metadata.
    pub fn envelope(&self, seed: Option<u64>, body: Value) -> Value {
        let mut map = Map::new();
        map.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        map.insert("argv".into(), json!(self.argv));
        map.insert("seed".into(), json!(seed));
        let wall = self
            .timing
            .then(|| self.started.elapsed().as_millis() as u64);
        map.insert("wall_time_ms".into(), json!(wall));
        if let Value::Object(fields) = body {
            map.extend(fields);
        }
        Value::Object(map)
    }

    pub fn error_json(&self, failure: &Failure) -> Value {
        let mut v = self.envelope(None, json!({}));
        v["error"] = json!({ "kind": failure.kind, "message": failure.message });
        v
    }

    /// Fails early if `path` exists and `--force` was not given.
    pub fn check_writable(&self, path: Option<&Path>) -> Outcome {
        match path {
            Some(p) if p.exists() && !self.force => Err(Failure::new(
                "output_exists",
                format!("{} exists; pass --force to overwrite", p.display()),
            )),
            _ => Ok(()),
        }
    }

    pub fn write(&self, path: Option<&Path>, contents: &str) -> Outcome {
        self.check_writable(path)?;
        match path {
            Some(p) => std::fs::write(p, contents)?,
            None => std::io::stdout().write_all(contents.as_bytes())?,
        }
        Ok(())
    }

    pub fn write_json(&self, path: Option<&Path>, seed: Option<u64>, body: Value) -> Outcome {
        let mut text = serde_json::to_string_pretty(&self.envelope(seed, body))
            .map_err(|e| Failure::new("internal", e.to_string()))?;
        text.push('\n');
        self.write(path, &text)
    }
}
