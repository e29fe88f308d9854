use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use nalgebra::Vector3;

/// A per-vertex vector field on a fixed connectivity (a tangent vector to the
/// space of immersions of that connectivity).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeformationField(Vec<Vector3<f64>>);

impl DeformationField {
    pub fn new(values: Vec<Vector3<f64>>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![Vector3::zeros(); len])
    }

    /// From a flat `[x0, y0, z0, x1, ...]` slice. Panics if the length is not a multiple of 3.
    pub fn from_flat(flat: &[f64]) -> Self {
        assert!(flat.len() % 3 == 0, "flat field length must be a multiple of 3");
        Self(
            flat.chunks_exact(3)
                .map(|c| Vector3::new(c[0], c[1], c[2]))
                .collect(),
        )
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.0.iter().flat_map(|v| [v.x, v.y, v.z]).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vector3<f64>> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Vector3<f64>] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Vector3<f64>> {
        self.0
    }

    /// Flat (unweighted) inner product over all 3V coordinates.
    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a.dot(b)).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|v| v.amax()).fold(0.0, f64::max)
    }

    /// `self += scale * other`
    pub fn axpy(&mut self, scale: f64, other: &Self) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b * scale;
        }
    }
}

impl From<Vec<Vector3<f64>>> for DeformationField {
    fn from(values: Vec<Vector3<f64>>) -> Self {
        Self(values)
    }
}

impl Index<usize> for DeformationField {
    type Output = Vector3<f64>;
    fn index(&self, i: usize) -> &Vector3<f64> {
        &self.0[i]
    }
}

impl IndexMut<usize> for DeformationField {
    fn index_mut(&mut self, i: usize) -> &mut Vector3<f64> {
        &mut self.0[i]
    }
}

impl<'a> IntoIterator for &'a DeformationField {
    type Item = &'a Vector3<f64>;
    type IntoIter = std::slice::Iter<'a, Vector3<f64>>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl AddAssign<&DeformationField> for DeformationField {
    fn add_assign(&mut self, rhs: &DeformationField) {
        assert_eq!(self.len(), rhs.len(), "field length mismatch");
        for (a, b) in self.0.iter_mut().zip(&rhs.0) {
            *a += b;
        }
    }
}

impl SubAssign<&DeformationField> for DeformationField {
    fn sub_assign(&mut self, rhs: &DeformationField) {
        assert_eq!(self.len(), rhs.len(), "field length mismatch");
        for (a, b) in self.0.iter_mut().zip(&rhs.0) {
            *a -= b;
        }
    }
}

impl Add for &DeformationField {
    type Output = DeformationField;
    fn add(self, rhs: &DeformationField) -> DeformationField {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for &DeformationField {
    type Output = DeformationField;
    fn sub(self, rhs: &DeformationField) -> DeformationField {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl Mul<f64> for &DeformationField {
    type Output = DeformationField;
    fn mul(self, rhs: f64) -> DeformationField {
        DeformationField(self.0.iter().map(|v| v * rhs).collect())
    }
}

impl Neg for &DeformationField {
    type Output = DeformationField;
    fn neg(self) -> DeformationField {
        DeformationField(self.0.iter().map(|v| -v).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_round_trip() {
        let flat = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let field = DeformationField::from_flat(&flat);
        assert_eq!(field.len(), 2);
        assert_eq!(field[1], Vector3::new(4.0, 5.0, 6.0));
        assert_eq!(field.to_flat(), flat);
    }

    #[test]
    fn vector_space_ops() {
        let a = DeformationField::from_flat(&[1.0, 0.0, 0.0]);
        let b = DeformationField::from_flat(&[0.0, 2.0, 0.0]);
        let c = &(&a * 2.0) + &b;
        assert_eq!(c.to_flat(), vec![2.0, 2.0, 0.0]);
        assert_eq!((&c - &c).norm(), 0.0);
        assert_eq!(a.dot(&b), 0.0);
    }
}
