use std::fmt;
use std::path::Path;

use serde::Serialize;

/// Failure of a command, reported on stderr as one JSON record.
#[derive(Debug)]
pub enum CliError {
    Config { path: String, message: String },
    Io { path: String, source: std::io::Error },
    Core(moe_routing::Error),
}

impl CliError {
    pub fn config(path: &str, message: impl Into<String>) -> Self {
        CliError::Config { path: path.to_string(), message: message.into() }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    pub fn kind(&self) -> &'static str {
        use moe_routing::Error as E;
        match self {
            CliError::Config { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::Core(e) => match e {
                E::Config(_) => "config",
                E::Validation(_) => "validation",
                E::Dimension(_) => "dimension",
                E::SearchSpace { .. } => "search_space",
                E::Parse { .. } => "parse",
                E::EmptyTrace => "empty_trace",
                E::Io(_) => "io",
            },
        }
    }

    /// Config key or file the error refers to, if known.
    pub fn path(&self) -> Option<&str> {
        match self {
            CliError::Config { path, .. } | CliError::Io { path, .. } if !path.is_empty() => Some(path),
            _ => None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            error: Body<'a>,
        }
        #[derive(Serialize)]
        struct Body<'a> {
            kind: &'a str,
            #[serde(skip_serializing_if = "Option::is_none")]
            path: Option<&'a str>,
            message: String,
        }
        let message = match self {
            CliError::Config { message, .. } => message.clone(),
            CliError::Io { source, .. } => source.to_string(),
            CliError::Core(e) => e.to_string(),
        };
        serde_json::to_string(&Record { error: Body { kind: self.kind(), path: self.path(), message } })
            .expect("plain record")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { path, message } if path.is_empty() => write!(f, "config: {message}"),
            CliError::Config { path, message } => write!(f, "config `{path}`: {message}"),
            CliError::Io { path, source } => write!(f, "{path}: {source}"),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for CliError {}

impl From<moe_routing::Error> for CliError {
    fn from(e: moe_routing::Error) -> Self {
        CliError::Core(e)
    }
}
