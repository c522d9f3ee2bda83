use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] memlab_core::Error),
    #[error("{0}")]
    Mismatch(String),
}

impl CliError {
    pub const USAGE: u8 = 1;
    pub const VALIDATION: u8 = 2;
    pub const MISMATCH: u8 = 3;

    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => Self::USAGE,
            CliError::Core(_) => Self::VALIDATION,
            CliError::Mismatch(_) => Self::MISMATCH,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_follow_the_error_kind() {
        assert_eq!(CliError::Usage("x".into()).code(), 1);
        assert_eq!(CliError::Core(memlab_core::Error::UnknownPreset("x".into())).code(), 2);
        assert_eq!(CliError::Mismatch("x".into()).code(), 3);
    }
}
