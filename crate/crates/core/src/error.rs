use std::path::PathBuf;

/// Errors produced anywhere in the crate.
///
/// Structural errors (shape mismatches, invalid configurations) are separated
/// from data errors (file formats) so the CLI can map them onto exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("joint {joint} angle {value} rad outside [{lo}, {hi}]")]
    OutOfLimits {
        joint: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("no parametric bias for trial {0}")]
    MissingBias(u32),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("degenerate {0}")]
    Degenerate(&'static str),

    #[error("training diverged at epoch {epoch} (non-finite loss); try a smaller learning rate than {rate}")]
    Diverged { epoch: usize, rate: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: truncated file ({msg})")]
    Truncated { path: PathBuf, msg: String },

    #[error("{path}: unsupported format version `{found}` (expected {expected})")]
    Version {
        path: PathBuf,
        found: String,
        expected: u32,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            what: what.to_owned(),
            expected,
            got,
        });
    }
    Ok(())
}

pub(crate) fn check_finite(what: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_owned()))
    }
}
