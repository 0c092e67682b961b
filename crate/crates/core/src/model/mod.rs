//! Multi-affine biochemical systems: vector field, threshold partition and
//! initial rectangles.

mod builtin;
mod parse;

pub use builtin::{builtin, BuiltinModel, ECOLI_CONSTANTS};
pub use parse::{parse_model, parse_model_with, print_model};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::RectIndex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("term repeats variable `{var}`; fields must be multi-affine")]
    NotMultiAffine { var: String },
    #[error("thresholds of `{var}`: {message}")]
    Thresholds { var: String, message: String },
    #[error("initial set: {0}")]
    Initial(String),
    #[error("unknown builtin model `{0}` (expected oscillatory, enzyme or ecoli)")]
    UnknownBuiltin(String),
    #[error("missing constants for builtin `{model}`: {missing:?}")]
    MissingConstants { model: String, missing: Vec<String> },
}

/// One monomial `coefficient * x_i * x_j * ...`, each variable at most once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiAffineTerm {
    pub coefficient: f64,
    vars: Vec<usize>,
}

impl MultiAffineTerm {
    /// Variables are stored sorted; a repeated index is rejected.
    pub fn new(coefficient: f64, mut vars: Vec<usize>) -> Result<Self, usize> {
        vars.sort_unstable();
        if let Some(w) = vars.windows(2).find(|w| w[0] == w[1]) {
            return Err(w[0]);
        }
        Ok(Self { coefficient, vars })
    }

    pub fn constant(coefficient: f64) -> Self {
        Self {
            coefficient,
            vars: Vec::new(),
        }
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.vars
            .iter()
            .fold(self.coefficient, |acc, &j| acc * x[j])
    }
}

/// The right-hand side `f` of `dx/dt = f(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiAffineField {
    dim: usize,
    equations: Vec<Vec<MultiAffineTerm>>,
}

impl MultiAffineField {
    pub fn new(equations: Vec<Vec<MultiAffineTerm>>) -> Result<Self, ModelError> {
        let dim = equations.len();
        if dim == 0 {
            return Err(ModelError::Dimension("system has no variables".into()));
        }
        for (i, eq) in equations.iter().enumerate() {
            for term in eq {
                if let Some(&j) = term.vars.iter().find(|&&j| j >= dim) {
                    return Err(ModelError::Dimension(format!(
                        "equation {i} references variable index {j} but n = {dim}"
                    )));
                }
                if !term.coefficient.is_finite() {
                    return Err(ModelError::Dimension(format!(
                        "equation {i} has a non-finite coefficient"
                    )));
                }
            }
        }
        Ok(Self { dim, equations })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn equations(&self) -> &[Vec<MultiAffineTerm>] {
        &self.equations
    }

    /// Writes `f(x)` into `out` without allocating.
    #[inline]
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        for (o, eq) in out.iter_mut().zip(&self.equations) {
            *o = eq.iter().map(|t| t.eval(x)).sum();
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out);
        out
    }

    /// Single component `f_i(x)`.
    #[inline]
    pub fn component(&self, i: usize, x: &[f64]) -> f64 {
        self.equations[i].iter().map(|t| t.eval(x)).sum()
    }

    /// The field of the time-reversed system `dx/dt = -f(x)`.
    pub fn negated(&self) -> Self {
        Self {
            dim: self.dim,
            equations: self
                .equations
                .iter()
                .map(|eq| {
                    eq.iter()
                        .map(|t| MultiAffineTerm {
                            coefficient: -t.coefficient,
                            vars: t.vars.clone(),
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

/// Per-variable threshold lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    thresholds: Vec<Vec<f64>>,
}

impl Partition {
    pub fn new(thresholds: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        for (i, t) in thresholds.iter().enumerate() {
            check_thresholds(t).map_err(|message| ModelError::Thresholds {
                var: format!("#{i}"),
                message,
            })?;
        }
        Ok(Self { thresholds })
    }

    pub fn dim(&self) -> usize {
        self.thresholds.len()
    }

    pub fn thresholds(&self, axis: usize) -> &[f64] {
        &self.thresholds[axis]
    }

    /// Number of intervals along `axis`.
    pub fn cells(&self, axis: usize) -> usize {
        self.thresholds[axis].len() - 1
    }

    pub fn rect_count(&self) -> usize {
        (0..self.dim()).map(|i| self.cells(i)).product()
    }

    pub fn contains_rect(&self, rect: &RectIndex) -> bool {
        rect.len() == self.dim() && rect.iter().enumerate().all(|(i, &k)| k < self.cells(i))
    }

    /// All rectangles in lexicographic order.
    pub fn rects(&self) -> impl Iterator<Item = RectIndex> + '_ {
        let total = self.rect_count();
        (0..total).map(move |mut lin| {
            let mut idx = vec![0; self.dim()];
            for i in (0..self.dim()).rev() {
                idx[i] = lin % self.cells(i);
                lin /= self.cells(i);
            }
            RectIndex::new(idx)
        })
    }
}

pub(crate) fn check_thresholds(t: &[f64]) -> Result<(), String> {
    if t.len() < 2 {
        return Err("need at least two thresholds".into());
    }
    if t.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err("thresholds must be finite and nonnegative".into());
    }
    if t.windows(2).any(|w| w[0] >= w[1]) {
        return Err("thresholds must be strictly increasing".into());
    }
    Ok(())
}

/// A model: named variables, field, partition and initial rectangles.
#[derive(Debug, Clone, PartialEq)]
pub struct BiochemicalSystem {
    pub name: String,
    names: Vec<String>,
    field: MultiAffineField,
    partition: Partition,
    initial: Vec<RectIndex>,
}

impl BiochemicalSystem {
    pub fn new(
        name: impl Into<String>,
        names: Vec<String>,
        field: MultiAffineField,
        partition: Partition,
        mut initial: Vec<RectIndex>,
    ) -> Result<Self, ModelError> {
        let n = field.dim();
        if names.len() != n || partition.dim() != n {
            return Err(ModelError::Dimension(format!(
                "{} names, {} equations, {} threshold lists",
                names.len(),
                n,
                partition.dim()
            )));
        }
        if initial.is_empty() {
            return Err(ModelError::Initial("initial set is empty".into()));
        }
        if let Some(bad) = initial.iter().find(|r| !partition.contains_rect(r)) {
            return Err(ModelError::Initial(format!(
                "rectangle {bad} is outside the partition"
            )));
        }
        initial.sort();
        initial.dedup();
        Ok(Self {
            name: name.into(),
            names,
            field,
            partition,
            initial,
        })
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn field(&self) -> &MultiAffineField {
        &self.field
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn initial(&self) -> &[RectIndex] {
        &self.initial
    }

    /// SHA-256 of the canonical text form, hex encoded.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(print_model(self).as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Named numeric constants folded into coefficients while parsing.
pub type Constants = BTreeMap<String, f64>;
