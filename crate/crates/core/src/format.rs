//! Scheme files: JSON with exact rational mask values.
//!
//! ```json
//! {"dimension": 1,
//!  "operators": [{"label": "1", "dilation": [[2]], "digits": [[0], [1]],
//!                 "mask": [{"point": [0], "value": "1/2"},
//!                          {"point": [1], "value": 1}]}]}
//! ```
//!
//! `value` is a string (`"p/q"`, integer or decimal) or a JSON number;
//! numbers are read from their literal text, so `0.1` is exactly `1/10`.
//! `digits` and `label` are optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{IntMatrix, LatticeSet, Point};
use crate::scalar::{format_rational, parse_rational};
use crate::scheme::{Mask, SchemeSet, SubdivisionOp};
use crate::{ExactScheme, Rational};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeFile {
    pub dimension: usize,
    pub operators: Vec<OperatorFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub dilation: Vec<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digits: Option<Vec<Vec<i64>>>,
    pub mask: Vec<MaskEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskEntry {
    pub point: Vec<i64>,
    pub value: MaskValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskValue {
    Text(String),
    Number(serde_json::Number),
}

impl MaskValue {
    fn parse(&self) -> Result<Rational> {
        match self {
            MaskValue::Text(s) => parse_rational(s),
            MaskValue::Number(n) => parse_rational(&n.to_string()),
        }
    }
}

fn at(path: String) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Parse { message, .. } => Error::Parse {
            path: path.clone(),
            message,
        },
        other => Error::Parse {
            path: path.clone(),
            message: other.to_string(),
        },
    }
}

fn point(dim: usize, coords: &[i64], path: String) -> Result<Point> {
    if coords.len() != dim {
        return Err(Error::Parse {
            path,
            message: format!("expected {dim} coordinates, found {}", coords.len()),
        });
    }
    Ok(Point::new(coords.iter().copied()))
}

impl SchemeFile {
    pub fn to_scheme(&self) -> Result<ExactScheme> {
        let s = self.dimension;
        if s == 0 {
            return Err(Error::Parse {
                path: "dimension".into(),
                message: "dimension must be positive".into(),
            });
        }
        if self.operators.is_empty() {
            return Err(Error::Parse {
                path: "operators".into(),
                message: "at least one operator is required".into(),
            });
        }
        let ops = self
            .operators
            .iter()
            .enumerate()
            .map(|(j, op)| {
                let base = format!("operators[{j}]");
                if op.dilation.len() != s || op.dilation.iter().any(|r| r.len() != s) {
                    return Err(Error::Parse {
                        path: format!("{base}.dilation"),
                        message: format!("expected a {s}x{s} integer matrix"),
                    });
                }
                let dilation = IntMatrix::new(op.dilation.clone()).map_err(at(format!("{base}.dilation")))?;
                let digits = op
                    .digits
                    .as_ref()
                    .map(|ds| {
                        let pts = ds
                            .iter()
                            .enumerate()
                            .map(|(k, d)| point(s, d, format!("{base}.digits[{k}]")))
                            .collect::<Result<Vec<_>>>()?;
                        LatticeSet::new(s, pts).map_err(at(format!("{base}.digits")))
                    })
                    .transpose()?;
                let entries = op
                    .mask
                    .iter()
                    .enumerate()
                    .map(|(k, e)| {
                        let p = point(s, &e.point, format!("{base}.mask[{k}].point"))?;
                        let v = e.value.parse().map_err(at(format!("{base}.mask[{k}].value")))?;
                        Ok((p, v))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mask = Mask::new(s, entries).map_err(at(format!("{base}.mask")))?;
                let label = op.label.clone().unwrap_or_else(|| (j + 1).to_string());
                SubdivisionOp::new(label, mask, dilation, digits).map_err(at(base))
            })
            .collect::<Result<Vec<_>>>()?;
        SchemeSet::new(ops)
    }

    pub fn from_scheme(s: &ExactScheme) -> Self {
        SchemeFile {
            dimension: s.dim(),
            operators: s
                .ops()
                .iter()
                .map(|op| OperatorFile {
                    label: Some(op.label.clone()),
                    dilation: op.dilation.rows(),
                    digits: Some(op.digits.iter().map(|d| d.coords().to_vec()).collect()),
                    mask: op
                        .mask
                        .iter()
                        .map(|(p, v)| MaskEntry {
                            point: p.coords().to_vec(),
                            value: MaskValue::Text(format_rational(v)),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Parses scheme JSON; schema errors carry the JSON path of the offending
/// field.
pub fn parse_scheme(text: &str) -> Result<ExactScheme> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: SchemeFile = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    file.to_scheme()
}

pub fn read_scheme(path: impl AsRef<Path>) -> Result<ExactScheme> {
    parse_scheme(&std::fs::read_to_string(path)?)
}

/// Pretty JSON with every value written as an exact rational string.
pub fn serialize_scheme(s: &ExactScheme) -> String {
    serde_json::to_string_pretty(&SchemeFile::from_scheme(s)).expect("plain data")
}
