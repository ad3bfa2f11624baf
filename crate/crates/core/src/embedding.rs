//! Labelled unit-norm embeddings and class proxies.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix};
use crate::scalar::Scalar;
use crate::ClassId;

/// Tolerance on `|‖row‖ − 1|` for embeddings and proxies.
pub const UNIT_NORM_TOL: f64 = 1e-9;

fn check_unit_rows<T: Scalar>(m: &Matrix<T>, tol: f64) -> Result<()> {
    for i in 0..m.rows() {
        let norm = m.row_norm(i);
        if (norm - T::one()).abs() > T::lit(tol) {
            return Err(Error::NotNormalized { row: i, norm: norm.as_f64() });
        }
    }
    Ok(())
}

/// Scales every row to unit L2 norm in place.
pub fn normalize_rows<T: Scalar>(m: &mut Matrix<T>) -> Result<()> {
    for i in 0..m.rows() {
        normalize_row(m.row_mut(i)).ok_or(Error::DegenerateInput("cannot normalize a zero row"))?;
    }
    Ok(())
}

/// Scales a vector to unit norm; `None` for the zero vector.
pub fn normalize_row<T: Scalar>(row: &mut [T]) -> Option<()> {
    let norm = dot(row, row).sqrt();
    if norm <= T::zero() || !norm.is_finite() {
        return None;
    }
    for v in row.iter_mut() {
        *v /= norm;
    }
    Some(())
}

/// n×d features on the unit sphere with one class label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingBatch<T> {
    features: Matrix<T>,
    labels: Vec<ClassId>,
}

impl<T: Scalar> EmbeddingBatch<T> {
    pub fn new(features: Matrix<T>, labels: Vec<ClassId>) -> Result<Self> {
        check_unit_rows(&features, UNIT_NORM_TOL)?;
        Self::new_unchecked(features, labels)
    }

    /// Skips the unit-norm check, keeping only the shape check. Used for
    /// finite-difference probes that step slightly off the sphere.
    pub fn new_unchecked(features: Matrix<T>, labels: Vec<ClassId>) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::LengthMismatch { left: features.rows(), right: labels.len() });
        }
        Ok(Self { features, labels })
    }

    /// Projects every row onto the unit sphere before building the batch.
    pub fn normalized(mut features: Matrix<T>, labels: Vec<ClassId>) -> Result<Self> {
        normalize_rows(&mut features)?;
        Self::new_unchecked(features, labels)
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn features_mut(&mut self) -> &mut Matrix<T> {
        &mut self.features
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Distinct labels in ascending order.
    pub fn classes(&self) -> Vec<ClassId> {
        self.labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Row indices of each class, keyed by class id.
    pub fn class_rows(&self) -> BTreeMap<ClassId, Vec<usize>> {
        let mut map: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            map.entry(l).or_default().push(i);
        }
        map
    }

    /// Sub-batch made of the given rows, in order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self { features: self.features.select_rows(rows), labels: rows.iter().map(|&r| self.labels[r]).collect() }
    }

    pub fn into_parts(self) -> (Matrix<T>, Vec<ClassId>) {
        (self.features, self.labels)
    }
}

/// One unit-norm proxy vector per class.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxySet<T> {
    proxies: Matrix<T>,
    class_ids: Vec<ClassId>,
    index: BTreeMap<ClassId, usize>,
}

impl<T: Scalar> ProxySet<T> {
    pub fn new(proxies: Matrix<T>, class_ids: Vec<ClassId>) -> Result<Self> {
        check_unit_rows(&proxies, UNIT_NORM_TOL)?;
        Self::new_unchecked(proxies, class_ids)
    }

    /// Skips the unit-norm check; class ids must still be distinct.
    pub fn new_unchecked(proxies: Matrix<T>, class_ids: Vec<ClassId>) -> Result<Self> {
        if class_ids.len() != proxies.rows() {
            return Err(Error::LengthMismatch { left: proxies.rows(), right: class_ids.len() });
        }
        let mut index = BTreeMap::new();
        for (row, &c) in class_ids.iter().enumerate() {
            if index.insert(c, row).is_some() {
                return Err(Error::DuplicateProxy { class: c });
            }
        }
        Ok(Self { proxies, class_ids, index })
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.proxies
    }

    pub fn matrix_mut(&mut self) -> &mut Matrix<T> {
        &mut self.proxies
    }

    pub fn class_ids(&self) -> &[ClassId] {
        &self.class_ids
    }

    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.proxies.cols()
    }

    /// Row holding the proxy of `class`.
    pub fn row_of(&self, class: ClassId) -> Option<usize> {
        self.index.get(&class).copied()
    }

    /// Copy with a different proxy matrix of the same shape.
    pub fn with_matrix_unchecked(&self, proxies: Matrix<T>) -> Self {
        assert_eq!(proxies.shape(), self.proxies.shape());
        Self { proxies, class_ids: self.class_ids.clone(), index: self.index.clone() }
    }
}
