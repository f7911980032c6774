use std::fmt;

/// Process exit codes. Stable: scripts depend on them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Config = 2,
    Io = 3,
    Generation = 4,
    Endpoint = 5,
    AllFailed = 6,
}

#[derive(Debug)]
pub struct Failure {
    pub exit: Exit,
    pub error: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CliResult<T> = Result<T, Failure>;

pub trait OrExit<T> {
    fn or_exit(self, exit: Exit) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_exit(self, exit: Exit) -> CliResult<T> {
        self.map_err(|e| Failure { exit, error: e.into() })
    }
}

/// Default classification of library errors.
pub fn classify(e: &tsqa::Error) -> Exit {
    use tsqa::Error as E;
    match e {
        E::Io(_) | E::Parse { .. } | E::Json(_) => Exit::Io,
        E::Argument(_) => Exit::Config,
        E::Generator(_) | E::Model(_) => Exit::Endpoint,
        E::Validation(_) | E::Evolution { .. } => Exit::Generation,
    }
}

pub trait Classify<T> {
    fn classified(self) -> CliResult<T>;
}

impl<T> Classify<T> for tsqa::Result<T> {
    fn classified(self) -> CliResult<T> {
        self.map_err(|e| Failure {
            exit: classify(&e),
            error: e.into(),
        })
    }
}
