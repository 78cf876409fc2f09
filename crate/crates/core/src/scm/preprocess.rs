use serde::{Deserialize, Serialize};

use super::graph::NodeKind;
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Standardization or one-hot encoding of one input column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnTransform {
    Standardize { mean: f64, std: f64 },
    OneHot { classes: usize },
}

impl ColumnTransform {
    pub fn fit(name: &str, kind: NodeKind, values: &[f64]) -> Result<Self> {
        match kind {
            NodeKind::Continuous => {
                let (mean, std) = mean_std(values);
                if !(std > 0.0) {
                    return Err(Error::DegenerateColumn(name.to_string()));
                }
                Ok(ColumnTransform::Standardize { mean, std })
            }
            NodeKind::Categorical => Ok(ColumnTransform::OneHot {
                classes: class_count(values),
            }),
        }
    }

    pub fn width(&self) -> usize {
        match self {
            ColumnTransform::Standardize { .. } => 1,
            ColumnTransform::OneHot { classes } => *classes,
        }
    }
}

/// Target-side transform of a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TargetTransform {
    Standardize {
        mean: f64,
        std: f64,
    },
    /// Label codes kept as they are; outputs are rounded and clipped.
    Codes {
        classes: usize,
    },
}

/// Fitted input and target transforms of one mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePreprocessor {
    pub target: TargetTransform,
    pub parents: Vec<ColumnTransform>,
}

impl NodePreprocessor {
    /// Fits transforms on training columns.
    pub fn fit(
        target_name: &str,
        target_kind: NodeKind,
        target: &[f64],
        parents: &[(&str, NodeKind, &[f64])],
    ) -> Result<Self> {
        let target = match target_kind {
            NodeKind::Continuous => {
                let (mean, std) = mean_std(target);
                if !(std > 0.0) {
                    return Err(Error::DegenerateColumn(target_name.to_string()));
                }
                TargetTransform::Standardize { mean, std }
            }
            NodeKind::Categorical => TargetTransform::Codes {
                classes: class_count(target).max(2),
            },
        };
        let parents = parents
            .iter()
            .map(|(n, k, v)| ColumnTransform::fit(n, *k, v))
            .collect::<Result<Vec<_>>>()?;
        Ok(NodePreprocessor { target, parents })
    }

    pub fn condition_dim(&self) -> usize {
        self.parents.iter().map(ColumnTransform::width).sum()
    }

    /// Conditioning matrix, one row per unit. Categorical values outside the
    /// fitted class range are an error.
    pub fn conditions(&self, parent_columns: &[&[f64]]) -> Result<Matrix<f64>> {
        if parent_columns.len() != self.parents.len() {
            return Err(Error::dim(
                "parent columns",
                self.parents.len(),
                parent_columns.len(),
            ));
        }
        let n = parent_columns.first().map_or(0, |c| c.len());
        self.conditions_n(n, parent_columns)
    }

    pub(crate) fn conditions_n(&self, n: usize, parent_columns: &[&[f64]]) -> Result<Matrix<f64>> {
        let mut m = Matrix::zeros(n, self.condition_dim());
        let mut offset = 0;
        for (tr, col) in self.parents.iter().zip(parent_columns) {
            if col.len() != n {
                return Err(Error::dim("parent column rows", n, col.len()));
            }
            match *tr {
                ColumnTransform::Standardize { mean, std } => {
                    for (i, &v) in col.iter().enumerate() {
                        m.set(i, offset, (v - mean) / std);
                    }
                }
                ColumnTransform::OneHot { classes } => {
                    for (i, &v) in col.iter().enumerate() {
                        let code = v as usize;
                        if v < 0.0 || v.fract() != 0.0 || code >= classes {
                            return Err(Error::Data(format!(
                                "categorical parent value {v} outside 0..{classes}"
                            )));
                        }
                        m.set(i, offset + code, 1.0);
                    }
                }
            }
            offset += tr.width();
        }
        Ok(m)
    }

    pub fn normalize_target(&self, v: &[f64]) -> Vec<f64> {
        match self.target {
            TargetTransform::Standardize { mean, std } => {
                v.iter().map(|x| (x - mean) / std).collect()
            }
            TargetTransform::Codes { .. } => v.to_vec(),
        }
    }

    /// Inverse transform; categorical values are rounded and clipped to a valid code.
    pub fn denormalize_target(&self, v: &[f64]) -> Vec<f64> {
        match self.target {
            TargetTransform::Standardize { mean, std } => {
                v.iter().map(|x| x * std + mean).collect()
            }
            TargetTransform::Codes { classes } => {
                v.iter().map(|&x| clip_code(x, classes)).collect()
            }
        }
    }

    /// Inverse transform without rounding.
    pub fn denormalize_raw(&self, v: &[f64]) -> Vec<f64> {
        match self.target {
            TargetTransform::Standardize { mean, std } => {
                v.iter().map(|x| x * std + mean).collect()
            }
            TargetTransform::Codes { .. } => v.to_vec(),
        }
    }

    pub fn target_scale(&self) -> f64 {
        match self.target {
            TargetTransform::Standardize { std, .. } => std,
            TargetTransform::Codes { .. } => 1.0,
        }
    }
}

pub fn clip_code(x: f64, classes: usize) -> f64 {
    if !x.is_finite() {
        return 0.0;
    }
    x.round().clamp(0.0, (classes - 1) as f64)
}

/// Number of classes implied by a code column (max code + 1).
pub fn class_count(values: &[f64]) -> usize {
    values.iter().fold(0.0f64, |m, &v| m.max(v)) as usize + 1
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
