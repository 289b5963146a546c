use ndarray::{Array1, Array2};

use crate::error::{GicError, Result};

/// Ambient shape of a parameter: a length-`p` vector or a `p1 x p2` matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamShape {
    Vector(usize),
    Matrix(usize, usize),
}

impl ParamShape {
    /// Total number of scalar entries.
    pub fn len(&self) -> usize {
        match *self {
            ParamShape::Vector(p) => p,
            ParamShape::Matrix(p1, p2) => p1 * p2,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A point in parameter space: either a coefficient vector or a coefficient
/// matrix. All entries are finite by construction.
#[derive(Clone, Debug, PartialEq)]
pub enum ParamPoint {
    Vector(Array1<f64>),
    Matrix(Array2<f64>),
}

impl ParamPoint {
    pub fn vector(v: Array1<f64>) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(GicError::InvalidArgument(
                "parameter vector contains a non-finite entry".into(),
            ));
        }
        Ok(ParamPoint::Vector(v))
    }

    pub fn matrix(m: Array2<f64>) -> Result<Self> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(GicError::InvalidArgument(
                "parameter matrix contains a non-finite entry".into(),
            ));
        }
        Ok(ParamPoint::Matrix(m))
    }

    pub fn zeros(shape: ParamShape) -> Self {
        match shape {
            ParamShape::Vector(p) => ParamPoint::Vector(Array1::zeros(p)),
            ParamShape::Matrix(p1, p2) => ParamPoint::Matrix(Array2::zeros((p1, p2))),
        }
    }

    pub fn shape(&self) -> ParamShape {
        match self {
            ParamPoint::Vector(v) => ParamShape::Vector(v.len()),
            ParamPoint::Matrix(m) => {
                let (p1, p2) = m.dim();
                ParamShape::Matrix(p1, p2)
            }
        }
    }

    pub fn as_vector(&self) -> Result<&Array1<f64>> {
        match self {
            ParamPoint::Vector(v) => Ok(v),
            ParamPoint::Matrix(_) => Err(GicError::InvalidShape(
                "expected a vector parameter, found a matrix".into(),
            )),
        }
    }

    pub fn as_matrix(&self) -> Result<&Array2<f64>> {
        match self {
            ParamPoint::Matrix(m) => Ok(m),
            ParamPoint::Vector(_) => Err(GicError::InvalidShape(
                "expected a matrix parameter, found a vector".into(),
            )),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            ParamPoint::Vector(v) => v.iter().all(|x| x.is_finite()),
            ParamPoint::Matrix(m) => m.iter().all(|x| x.is_finite()),
        }
    }

    /// Euclidean (vector) / Frobenius (matrix) inner product.
    pub fn inner(&self, other: &ParamPoint) -> f64 {
        match (self, other) {
            (ParamPoint::Vector(a), ParamPoint::Vector(b)) => a.dot(b),
            (ParamPoint::Matrix(a), ParamPoint::Matrix(b)) => {
                a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
            }
            _ => panic!("inner product of mismatched parameter kinds"),
        }
    }

    /// Euclidean / Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// `self + c * other`, allocating a new point.
    pub fn add_scaled(&self, c: f64, other: &ParamPoint) -> ParamPoint {
        match (self, other) {
            (ParamPoint::Vector(a), ParamPoint::Vector(b)) => ParamPoint::Vector(a + &(c * b)),
            (ParamPoint::Matrix(a), ParamPoint::Matrix(b)) => ParamPoint::Matrix(a + &(c * b)),
            _ => panic!("sum of mismatched parameter kinds"),
        }
    }

    pub fn sub(&self, other: &ParamPoint) -> ParamPoint {
        self.add_scaled(-1.0, other)
    }

    pub fn scaled(&self, c: f64) -> ParamPoint {
        match self {
            ParamPoint::Vector(v) => ParamPoint::Vector(v * c),
            ParamPoint::Matrix(m) => ParamPoint::Matrix(m * c),
        }
    }
}
