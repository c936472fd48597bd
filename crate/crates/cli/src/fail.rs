use std::fmt;

use okaem::Error;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_MISMATCH: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

/// An error message with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }

    pub fn context(self, what: impl fmt::Display) -> Self {
        Self {
            code: self.code,
            message: format!("{what}: {}", self.message),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn code_of(e: &Error) -> u8 {
    match e {
        _ if e.is_mismatch() => EXIT_MISMATCH,
        Error::NonFinite(_) | Error::Evaluation { .. } => EXIT_NUMERIC,
        Error::Generation { source, .. } | Error::SourceTask { source, .. } => code_of(source),
        _ => EXIT_USAGE,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::new(code_of(&e), e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_to_exit_codes() {
        assert_eq!(Failure::from(Error::Usage("x".into())).code, EXIT_USAGE);
        assert_eq!(
            Failure::from(Error::Parameter("x".into())).code,
            EXIT_MISMATCH
        );
        assert_eq!(Failure::from(Error::NonFinite("loss")).code, EXIT_NUMERIC);
        let nested = Error::Generation {
            generation: 3,
            source: Box::new(Error::Evaluation {
                row: 0,
                value: f64::NAN,
            }),
        };
        assert_eq!(Failure::from(nested).code, EXIT_NUMERIC);
    }
}
