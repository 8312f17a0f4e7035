//! Single-line, machine-parseable failures: `E_<KIND>: message`.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Missing, unparsable or invalid configuration.
    Config(String),
    /// Bad command-line usage.
    Usage(String),
    /// A required artifact from an earlier step is missing or malformed.
    Input(String),
    /// The pipeline itself failed.
    Run(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "E_CONFIG",
            CliError::Usage(_) => "E_USAGE",
            CliError::Input(_) => "E_INPUT",
            CliError::Run(_) => "E_RUN",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Input(_) => 3,
            CliError::Run(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (CliError::Config(m) | CliError::Usage(m) | CliError::Input(m) | CliError::Run(m)) = self;
        let flat: Vec<&str> = m.split_whitespace().collect();
        write!(f, "{}: {}", self.code(), flat.join(" "))
    }
}

impl From<canopy::Error> for CliError {
    fn from(e: canopy::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.to_string())
    }
}
