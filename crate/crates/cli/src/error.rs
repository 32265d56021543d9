//! CLI-level error with a process exit code.
//!
//! Every failure is sorted into one of three buckets so scripts can react
//! without parsing messages: usage (the invocation or config is wrong),
//! data (inputs are missing or malformed), numeric (the math blew up).

use std::fmt;
use std::path::Path;

use harfeat_core::{
    data::DataError, model::ModelError, numkit::NumError, rewards::RewardError,
    ClassifierError, EvalError, PpoError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub msg: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError { kind: Kind::Usage, msg: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError { kind: Kind::Data, msg: msg.into() }
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        CliError { kind: Kind::Numeric, msg: msg.into() }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::data(format!("{}: {err}", path.display()))
    }

    /// 0 is success; these are the three failure codes.
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            Kind::Usage => 1,
            Kind::Data => 2,
            Kind::Numeric => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl std::error::Error for CliError {}

impl From<NumError> for CliError {
    fn from(e: NumError) -> Self {
        CliError::numeric(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            // Bad specs come from the config, not the data on disk.
            DataError::BadSynthSpec(_)
            | DataError::BadGroups(_)
            | DataError::BadWindowSpec(_) => CliError::usage(e.to_string()),
            DataError::Num(n) => n.into(),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) => CliError::usage(e.to_string()),
            ModelError::Num(n) => n.into(),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<RewardError> for CliError {
    fn from(e: RewardError) -> Self {
        match e {
            RewardError::NegativeWeight { .. } => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<PpoError> for CliError {
    fn from(e: PpoError) -> Self {
        match e {
            PpoError::Config(_) => CliError::usage(e.to_string()),
            PpoError::NonFinite { .. } => CliError::numeric(e.to_string()),
            PpoError::Num(n) => n.into(),
            PpoError::Model(m) => m.into(),
            PpoError::Reward(r) => r.into(),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<ClassifierError> for CliError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::BadLambda(_) => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Num(n) => n.into(),
            EvalError::Model(m) => m.into(),
            EvalError::Ppo(p) => p.into(),
            EvalError::Classifier(c) => c.into(),
            _ => CliError::data(e.to_string()),
        }
    }
}
