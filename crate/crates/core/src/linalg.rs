//! Dense vector helpers, the labeled dataset container, and the two geometric
//! primitives everything else is built on: unit directions and orthogonal
//! projectors `P_v = I - v̂ v̂ᵀ`.
//!
//! Vectors are plain `&[f64]` slices; the dimensions involved here are small
//! (a handful to a few hundred) so no BLAS is used.

use crate::error::{Error, Result};

/// Tolerance for "unit norm" checks throughout the crate.
pub const UNIT_TOL: f64 = 1e-12;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scaled(alpha: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| alpha * v).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn basis(d: usize, k: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[k] = 1.0;
    e
}

/// `v / ||v||`; a zero vector is a domain error rather than a NaN.
pub fn unit_direction(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::domain(format!(
            "unit direction of a vector with norm {n}"
        )));
    }
    Ok(scaled(1.0 / n, v))
}

/// `P_v w = w - (v̂·w) v̂`.
pub fn project_orthogonal(v: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    if v.len() != w.len() {
        return Err(Error::domain(format!(
            "dimension mismatch: {} vs {}",
            v.len(),
            w.len()
        )));
    }
    let vh = unit_direction(v)?;
    let c = dot(&vh, w);
    Ok(w.iter().zip(&vh).map(|(wi, vi)| wi - c * vi).collect())
}

/// Angle in `[0, π]` between two nonzero vectors.
pub fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let c = dot(a, b) / (norm(a) * norm(b));
    c.clamp(-1.0, 1.0).acos()
}

/// Row-major dense square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| dot(&self.data[i * self.n..(i + 1) * self.n], x))
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Points `x_i ∈ R^d` with `||x_i|| ≤ 1` and labels `y_i ∈ {-1, +1}`.
///
/// Points are stored row-major in one buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    points: Vec<f64>,
    labels: Vec<f64>,
}

/// Slack allowed on the `||x|| ≤ 1` bound, for points produced by rotations.
pub const NORM_BOUND_SLACK: f64 = 1e-12;

impl LabeledDataset {
    pub fn new(dim: usize, points: Vec<Vec<f64>>, labels: Vec<i8>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("dataset dimension must be at least 1"));
        }
        if points.is_empty() {
            return Err(Error::domain("dataset must contain at least one point"));
        }
        if points.len() != labels.len() {
            return Err(Error::domain(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        let mut flat = Vec::with_capacity(points.len() * dim);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::domain(format!(
                    "point {i} has dimension {}, expected {dim}",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("point {i} has a non-finite entry")));
            }
            if norm(p) > 1.0 + NORM_BOUND_SLACK {
                return Err(Error::domain(format!(
                    "point {i} has norm {} > 1",
                    norm(p)
                )));
            }
            flat.extend_from_slice(p);
        }
        let mut ys = Vec::with_capacity(labels.len());
        for (i, &y) in labels.iter().enumerate() {
            match y {
                1 => ys.push(1.0),
                -1 => ys.push(-1.0),
                other => {
                    return Err(Error::domain(format!(
                        "label {other} at index {i} is not ±1"
                    )))
                }
            }
        }
        Ok(LabeledDataset {
            dim,
            points: flat,
            labels: ys,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Label as `±1.0`.
    #[inline]
    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn label_i8(&self, i: usize) -> i8 {
        if self.labels[i] > 0.0 {
            1
        } else {
            -1
        }
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Same points with labels negated.
    pub fn with_flipped_labels(&self) -> Self {
        LabeledDataset {
            dim: self.dim,
            points: self.points.clone(),
            labels: self.labels.iter().map(|y| -y).collect(),
        }
    }

    /// Raw bytes of points and labels, for content hashing.
    pub(crate) fn digest_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * (self.points.len() + self.labels.len()) + 8);
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        for v in self.points.iter().chain(&self.labels) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_direction_examples() {
        let u = unit_direction(&[3.0, 4.0]).unwrap();
        assert!((u[0] - 0.6).abs() < 1e-15 && (u[1] - 0.8).abs() < 1e-15);
        assert_eq!(unit_direction(&[1.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(matches!(unit_direction(&[0.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn projector_examples() {
        let e1 = [1.0, 0.0];
        let e2 = [0.0, 1.0];
        assert_eq!(project_orthogonal(&e1, &e1).unwrap(), vec![0.0, 0.0]);
        assert_eq!(project_orthogonal(&e1, &e2).unwrap(), vec![0.0, 1.0]);
        // I - v̂v̂ᵀ with v̂ = (1,1)/√2 is [[1/2, -1/2], [-1/2, 1/2]].
        let p = project_orthogonal(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] + 0.5).abs() < 1e-15);
        assert!(project_orthogonal(&[0.0, 0.0], &e1).is_err());
        assert!(project_orthogonal(&[1.0, 0.0, 0.0], &e1).is_err());
    }

    #[test]
    fn dataset_rejects_bad_input() {
        assert!(LabeledDataset::new(2, vec![vec![1.0, 0.5]], vec![1]).is_err());
        assert!(LabeledDataset::new(2, vec![vec![0.5, 0.5]], vec![0]).is_err());
        assert!(LabeledDataset::new(2, vec![vec![0.5]], vec![1]).is_err());
        assert!(LabeledDataset::new(2, vec![], vec![]).is_err());
        let d = LabeledDataset::new(2, vec![vec![0.6, 0.8], vec![0.0, -1.0]], vec![1, -1]).unwrap();
        assert_eq!(d.point(1), &[0.0, -1.0]);
        assert_eq!(d.label(1), -1.0);
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 3)
    }

    proptest! {
        #[test]
        fn projector_is_idempotent_and_orthogonal(v in vec3(), w in vec3()) {
            prop_assume!(norm(&v) > 1e-3);
            let pw = project_orthogonal(&v, &w).unwrap();
            let ppw = project_orthogonal(&v, &pw).unwrap();
            let scale = 1.0 + norm(&w);
            for (a, b) in pw.iter().zip(&ppw) {
                prop_assert!((a - b).abs() <= 1e-12 * scale);
            }
            prop_assert!(dot(&unit_direction(&v).unwrap(), &pw).abs() <= 1e-12 * scale);
        }

        #[test]
        fn pythagoras(v in vec3(), w in vec3()) {
            prop_assume!(norm(&v) > 1e-3);
            let pw = project_orthogonal(&v, &w).unwrap();
            let c = dot(&unit_direction(&v).unwrap(), &w);
            let lhs = dot(&pw, &pw) + c * c;
            prop_assert!((lhs - dot(&w, &w)).abs() <= 1e-12 * (1.0 + dot(&w, &w)));
        }

        #[test]
        fn unit_direction_has_unit_norm(v in vec3()) {
            prop_assume!(norm(&v) > 1e-9);
            prop_assert!((norm(&unit_direction(&v).unwrap()) - 1.0).abs() <= UNIT_TOL);
        }
    }
}
