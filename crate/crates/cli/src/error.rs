use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    Validation(Vec<String>),
    Engine(hostcap::error::Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Validation(_) => 1,
            CliError::Engine(_) => 2,
            CliError::Io(_) => 3,
        })
    }

    pub fn report(&self) -> String {
        match self {
            CliError::Validation(errs) => {
                let mut s = format!("configuration rejected ({} problem{}):", errs.len(), if errs.len() == 1 { "" } else { "s" });
                for e in errs {
                    s.push_str("\n  ");
                    s.push_str(e);
                }
                s
            }
            CliError::Engine(e) => format!("engine: {e}"),
            CliError::Io(e) => format!("i/o: {e}"),
        }
    }
}

impl From<hostcap::error::Error> for CliError {
    fn from(e: hostcap::error::Error) -> Self {
        CliError::Engine(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
