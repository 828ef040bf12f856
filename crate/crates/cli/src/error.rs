use std::fmt;
use std::process::ExitCode;

use cvsslens::model::ModelError;
use cvsslens::nvd::IngestError;
use cvsslens::pipeline::PipelineError;
use cvsslens::saliency::SaliencyError;
use cvsslens::textprep::TextError;
use cvsslens::train::{EvalError, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Usage,
    Data,
    Model,
    Io,
}

impl Category {
    pub fn exit_code(self) -> ExitCode {
        ExitCode::from(match self {
            Category::Usage => 2,
            Category::Data => 3,
            Category::Model => 4,
            Category::Io => 5,
        })
    }

    fn label(self) -> &'static str {
        match self {
            Category::Usage => "usage error",
            Category::Data => "data error",
            Category::Model => "model error",
            Category::Io => "I/O error",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> CliError {
        CliError {
            category: Category::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> CliError {
        CliError {
            category: Category::Data,
            message: message.into(),
        }
    }

    fn new(category: Category, e: &dyn fmt::Display) -> CliError {
        CliError {
            category,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.category.label(), self.message)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(Category::Io, &e)
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        let c = match &e {
            IngestError::UnreadableSource { .. } | IngestError::Io(_) => Category::Io,
            IngestError::InvalidFraction(_) => Category::Usage,
            _ => Category::Data,
        };
        CliError::new(c, &e)
    }
}

impl From<TextError> for CliError {
    fn from(e: TextError) -> Self {
        let c = match &e {
            TextError::Io(_) => Category::Io,
            TextError::VocabTooSmall(_) | TextError::SeqLenTooShort(_) => Category::Usage,
            _ => Category::Data,
        };
        CliError::new(c, &e)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let c = match &e {
            ModelError::Io(_) => Category::Io,
            ModelError::InvalidConfig(_) => Category::Usage,
            _ => Category::Model,
        };
        CliError::new(c, &e)
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::new(Category::Data, &e)
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(m) => m.into(),
            TrainError::Text(t) => t.into(),
            TrainError::InvalidConfig(_) => CliError::new(Category::Usage, &e),
            _ => CliError::new(Category::Data, &e),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Model(m) => m.into(),
            PipelineError::Text(t) => t.into(),
            PipelineError::Eval(v) => v.into(),
            PipelineError::Io(io) => io.into(),
            PipelineError::Config(_) => CliError::new(Category::Usage, &e),
            _ => CliError::new(Category::Model, &e),
        }
    }
}

impl From<SaliencyError> for CliError {
    fn from(e: SaliencyError) -> Self {
        match e {
            SaliencyError::Model(m) => m.into(),
            SaliencyError::Text(t) => t.into(),
            SaliencyError::InvalidK => CliError::new(Category::Usage, &e),
        }
    }
}
