//! JSON encodings for channels and states.
//!
//! A matrix is an array of rows, each entry a two-element `[re, im]` array.
//! Channel files carry `d_in`, `d_out` and `kraus` (an array of matrices);
//! state files carry the matrix under `rho`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channels::{DensityOperator, KrausChannel};
use crate::linalg::{c, ComplexMatrix};

pub type MatrixRows = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid contents: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] crate::Error),
}

pub fn matrix_to_rows(m: &ComplexMatrix) -> MatrixRows {
    m.row_iter()
        .map(|row| row.iter().map(|z| [z.re, z.im]).collect())
        .collect()
}

pub fn matrix_from_rows(rows: &MatrixRows) -> Result<ComplexMatrix, FormatError> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    if n_rows == 0 || n_cols == 0 {
        return Err(FormatError::Invalid("matrix must be non-empty".into()));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != n_cols) {
        return Err(FormatError::Invalid(format!(
            "row {bad} has {} entries, expected {n_cols}",
            rows[bad].len()
        )));
    }
    let flat: Vec<_> = rows.iter().flatten().map(|&[re, im]| c(re, im)).collect();
    if flat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(FormatError::Invalid("matrix has non-finite entries".into()));
    }
    Ok(ComplexMatrix::from_row_slice(n_rows, n_cols, &flat))
}

/// `#[serde(with = "...")]` adapter for matrices in the row encoding.
pub mod matrix_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &ComplexMatrix, s: S) -> Result<S::Ok, S::Error> {
        matrix_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ComplexMatrix, D::Error> {
        let rows = MatrixRows::deserialize(d)?;
        matrix_from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelFile {
    pub d_in: usize,
    pub d_out: usize,
    pub kraus: Vec<MatrixRows>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateFile {
    pub rho: MatrixRows,
}

impl From<&KrausChannel> for ChannelFile {
    fn from(ch: &KrausChannel) -> Self {
        Self {
            d_in: ch.d_in(),
            d_out: ch.d_out(),
            kraus: ch.operators().iter().map(matrix_to_rows).collect(),
        }
    }
}

impl TryFrom<&ChannelFile> for KrausChannel {
    type Error = FormatError;

    fn try_from(file: &ChannelFile) -> Result<Self, FormatError> {
        let ops = file
            .kraus
            .iter()
            .map(matrix_from_rows)
            .collect::<Result<Vec<_>, _>>()?;
        for (k, op) in ops.iter().enumerate() {
            if op.shape() != (file.d_out, file.d_in) {
                return Err(FormatError::Invalid(format!(
                    "Kraus operator {k} is {}x{}, header says d_out={} d_in={}",
                    op.nrows(),
                    op.ncols(),
                    file.d_out,
                    file.d_in
                )));
            }
        }
        Ok(KrausChannel::new(ops)?)
    }
}

pub fn channel_to_json(ch: &KrausChannel) -> String {
    serde_json::to_string_pretty(&ChannelFile::from(ch)).expect("channel encoding cannot fail")
}

pub fn channel_from_json(text: &str) -> Result<KrausChannel, FormatError> {
    let file: ChannelFile = serde_json::from_str(text)?;
    KrausChannel::try_from(&file)
}

pub fn state_to_json(rho: &DensityOperator) -> String {
    let file = StateFile {
        rho: matrix_to_rows(rho.matrix()),
    };
    serde_json::to_string_pretty(&file).expect("state encoding cannot fail")
}

pub fn state_from_json(text: &str) -> Result<DensityOperator, FormatError> {
    let file: StateFile = serde_json::from_str(text)?;
    Ok(DensityOperator::new(matrix_from_rows(&file.rho)?)?)
}

fn read(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_channel(path: impl AsRef<Path>) -> Result<KrausChannel, FormatError> {
    channel_from_json(&read(path.as_ref())?)
}

pub fn read_state(path: impl AsRef<Path>) -> Result<DensityOperator, FormatError> {
    state_from_json(&read(path.as_ref())?)
}
