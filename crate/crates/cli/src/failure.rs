use std::fmt::Display;

/// A failed run, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or option values; exit 1.
    Usage(anyhow::Error),
    /// Unreadable or invalid input data; exit 2.
    Data(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
        }
    }

    pub fn usage(message: impl Display) -> Self {
        Failure::Usage(anyhow::anyhow!("{message}"))
    }

    pub fn data(message: impl Display) -> Self {
        Failure::Data(anyhow::anyhow!("{message}"))
    }
}

impl Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(e) | Failure::Data(e) => write!(f, "{e:#}"),
        }
    }
}

pub trait Classify<T> {
    fn usage_err(self) -> Result<T, Failure>;
    fn data_err(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage_err(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn data_err(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(e.into()))
    }
}
