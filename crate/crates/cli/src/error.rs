use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or parameters; exit status 2.
    #[error("{0}")]
    Usage(String),
    /// A numerical routine failed; exit status 1.
    #[error("{module}: {source}")]
    Numeric {
        module: &'static str,
        #[source]
        source: wishart_outage::Error,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub trait Context<T> {
    fn ctx(self, module: &'static str) -> Result<T, CliError>;
}

impl<T> Context<T> for wishart_outage::Result<T> {
    fn ctx(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|source| match source {
            wishart_outage::Error::InvalidParameter(msg) => CliError::Usage(format!("{module}: {msg}")),
            source => CliError::Numeric { module, source },
        })
    }
}
