//! Error type shared across the volume, NIfTI, morphology, and
//! postprocessing modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Paired volumes disagree on dimensions.
    #[error("dims mismatch: {0}")]
    DimsMismatch(String),

    /// Spacing components must be strictly positive finite reals.
    #[error("invalid spacing: ({0}, {1}, {2})")]
    InvalidSpacing(f64, f64, f64),

    /// Data buffer length does not match the declared dimensions.
    #[error("data length {got} does not match dims ({nx}, {ny}, {nz}) = {expected} voxels")]
    DataLength {
        nx: usize,
        ny: usize,
        nz: usize,
        expected: usize,
        got: usize,
    },

    /// A voxel value is outside the supported label set {0..=4}.
    #[error("label value {0} outside the supported set {{0..=4}}")]
    InvalidLabel(u8),

    /// A voxel value is NaN or infinite where a finite scalar is required.
    #[error("non-finite voxel value at linear index {0}")]
    NonFinite(usize),

    /// Not a NIfTI-1 single-file stream ("n+1\0" magic required).
    #[error("bad magic: not a NIfTI-1 single-file (.nii) stream")]
    BadMagic,

    /// NIfTI datatype code outside the supported set {2, 4, 8, 16, 64}.
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),

    /// Payload shorter than the header promises.
    #[error("truncated payload: header promises {expected} bytes, stream has {got}")]
    TruncatedPayload { expected: usize, got: usize },

    /// Malformed NIfTI header.
    #[error("bad header: {0}")]
    BadHeader(String),

    /// A ratio-statistics class has no in-band voxels.
    #[error("empty class: no in-band ratio voxels for label {0}")]
    EmptyClass(u8),

    /// ROC construction needs at least one sample of each class.
    #[error("single class: ROC needs at least one positive and one negative sample")]
    SingleClass,

    /// Malformed configuration file or value.
    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
