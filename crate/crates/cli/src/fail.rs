//! Failure categories and their exit codes.

use std::fmt;

use histoxai_core::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Internal,
    Usage,
    Config,
    MissingInput,
    Io,
    Data,
    Numeric,
}

impl Kind {
    pub fn code(self) -> i32 {
        match self {
            Kind::Internal => 1,
            Kind::Usage => 2,
            Kind::Config => 3,
            Kind::MissingInput => 4,
            Kind::Io => 5,
            Kind::Data => 6,
            Kind::Numeric => 7,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Internal => "internal",
            Kind::Usage => "usage",
            Kind::Config => "config",
            Kind::MissingInput => "missing-input",
            Kind::Io => "io",
            Kind::Data => "data",
            Kind::Numeric => "numeric",
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub message: String,
}

impl Failure {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Failure {
            kind,
            message: message.into(),
        }
    }

    /// One line: `error category=<kind> code=<n> message="<escaped>"`.
    pub fn line(&self) -> String {
        let msg: String = self
            .message
            .chars()
            .flat_map(|c| match c {
                '"' => vec!['\\', '"'],
                '\\' => vec!['\\', '\\'],
                '\n' => vec!['\\', 'n'],
                '\r' => vec![],
                c => vec![c],
            })
            .collect();
        format!("error category={} code={} message=\"{msg}\"", self.kind.as_str(), self.kind.code())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.line())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::InvalidArgument(_) => Kind::Usage,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => Kind::MissingInput,
            Error::Io { .. } => Kind::Io,
            Error::Diverged { .. } | Error::NonFinite(_) => Kind::Numeric,
            Error::Shape { .. }
            | Error::BatchNormUninitialized { .. }
            | Error::ZeroVariance(_)
            | Error::NotConvolutional(_)
            | Error::MissingCache(_)
            | Error::EmptyClassDir(_)
            | Error::Data(_)
            | Error::Parse { .. }
            | Error::Checkpoint(_)
            | Error::Image { .. } => Kind::Data,
        };
        Failure::new(kind, e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_distinct() {
        let kinds = [Kind::Internal, Kind::Usage, Kind::Config, Kind::MissingInput, Kind::Io, Kind::Data, Kind::Numeric];
        let mut codes: Vec<i32> = kinds.iter().map(|k| k.code()).collect();
        codes.dedup();
        assert_eq!(codes.len(), kinds.len());
    }

    #[test]
    fn line_is_single_and_escaped() {
        let f = Failure::new(Kind::Data, "bad \"x\"\nnext");
        assert_eq!(f.line(), "error category=data code=6 message=\"bad \\\"x\\\"\\nnext\"");
    }
}
