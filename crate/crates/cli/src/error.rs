use circdir::data::DataError;
use circdir::nn::NnError;
use circdir::train_eval::EvalError;
use circdir::tta::TtaError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            NnError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Diverged { .. } => CliError::Numeric(e.to_string()),
            EvalError::Nn(n) => n.into(),
            EvalError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TtaError> for CliError {
    fn from(e: TtaError) -> Self {
        match e {
            TtaError::AllDegenerate => CliError::Numeric(e.to_string()),
            TtaError::ZeroCopies => CliError::Usage(e.to_string()),
            TtaError::Nn(n) => n.into(),
            TtaError::Eval(v) => v.into(),
            TtaError::Size { .. } => CliError::Data(e.to_string()),
        }
    }
}
