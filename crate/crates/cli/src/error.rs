use std::fmt;
use std::process::ExitCode;

/// A failed run: the message plus the exit status it maps to.
#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub error: anyhow::Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad flags or flag combinations.
    Usage,
    /// Unreadable, unparsable or inconsistent input data.
    Data,
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self.kind {
            Kind::Usage => ExitCode::from(1),
            Kind::Data => ExitCode::from(2),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // many core errors already embed their source in their own message
        let mut msg = self.error.to_string();
        for cause in self.error.chain().skip(1) {
            let text = cause.to_string();
            if !msg.contains(&text) {
                msg.push_str(": ");
                msg.push_str(&text);
            }
        }
        f.write_str(&msg)
    }
}

pub fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError {
        kind: Kind::Usage,
        error: e.into(),
    }
}

pub fn data(e: impl Into<anyhow::Error>) -> CliError {
    CliError {
        kind: Kind::Data,
        error: e.into(),
    }
}

pub type CliResult<T> = Result<T, CliError>;
