//! Small fixed-size vector and tensor algebra for dimensions 2 and 3.
//!
//! Vectors carry their dimension at runtime so that one scenario can pick
//! `n = 2` or `n = 3` without monomorphising the whole pipeline. Parameter
//! points of graph functions live in `n - 1` dimensions, so [`Vector`] also
//! accepts dimension 1.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// Number of independent entries of a symmetric `dim × dim` matrix.
pub const fn sym_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Returns an error unless `dim` is a supported ambient dimension.
pub fn check_space_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(dim))
    }
}

#[derive(Clone, Copy, PartialEq)]
pub struct Vector {
    dim: usize,
    c: [f64; MAX_DIM],
}

impl Vector {
    pub fn new(components: &[f64]) -> Result<Self> {
        let dim = components.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::UnsupportedDimension(dim));
        }
        let mut c = [0.0; MAX_DIM];
        c[..dim].copy_from_slice(components);
        Ok(Self { dim, c })
    }

    /// Panics on an unsupported length; for literals in internal code.
    pub fn from_slice(components: &[f64]) -> Self {
        Self::new(components).expect("vector length must be 1..=3")
    }

    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "vector dimension {dim}");
        Self { dim, c: [0.0; MAX_DIM] }
    }

    /// The `i`-th canonical basis vector (0-based).
    pub fn unit(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.c[i] = 1.0;
        v
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.c[..self.dim]
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.c[..self.dim]
    }

    #[inline]
    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.as_slice().iter().zip(other.as_slice()).map(|(a, b)| a * b).sum()
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn normalized(&self) -> Result<Vector> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroVector);
        }
        Ok(*self * (1.0 / n))
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() < 1e-12
    }

    pub fn max_abs(&self) -> f64 {
        self.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }

    /// Drops the last component: the `x′` part of `(x′, x_n)`.
    pub fn head(&self) -> Vector {
        debug_assert!(self.dim >= 2);
        let mut v = *self;
        v.dim -= 1;
        v.c[v.dim] = 0.0;
        v
    }

    #[inline]
    pub fn last(&self) -> f64 {
        self.c[self.dim - 1]
    }

    /// Appends a component: builds `(x′, x_n)` from `x′`.
    pub fn extend(&self, last: f64) -> Vector {
        assert!(self.dim < MAX_DIM);
        let mut v = *self;
        v.c[v.dim] = last;
        v.dim += 1;
        v
    }

    fn check_same_dim(&self, other: &Vector) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        Ok(())
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        debug_assert!(i < self.dim);
        &self.c[i]
    }
}

impl IndexMut<usize> for Vector {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        debug_assert!(i < self.dim);
        &mut self.c[i]
    }
}

impl Add for Vector {
    type Output = Vector;
    #[inline]
    fn add(mut self, rhs: Vector) -> Vector {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..self.dim {
            self.c[i] += rhs.c[i];
        }
        self
    }
}

impl AddAssign for Vector {
    #[inline]
    fn add_assign(&mut self, rhs: Vector) {
        *self = *self + rhs;
    }
}

impl Sub for Vector {
    type Output = Vector;
    #[inline]
    fn sub(mut self, rhs: Vector) -> Vector {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..self.dim {
            self.c[i] -= rhs.c[i];
        }
        self
    }
}

impl SubAssign for Vector {
    #[inline]
    fn sub_assign(&mut self, rhs: Vector) {
        *self = *self - rhs;
    }
}

impl Mul<f64> for Vector {
    type Output = Vector;
    #[inline]
    fn mul(mut self, s: f64) -> Vector {
        for i in 0..self.dim {
            self.c[i] *= s;
        }
        self
    }
}

impl Mul<Vector> for f64 {
    type Output = Vector;
    #[inline]
    fn mul(self, v: Vector) -> Vector {
        v * self
    }
}

impl Neg for Vector {
    type Output = Vector;
    #[inline]
    fn neg(self) -> Vector {
        self * -1.0
    }
}

/// Symmetric matrix stored as its upper triangle, row-major.
#[derive(Clone, Copy, PartialEq)]
pub struct SymTensor {
    dim: usize,
    a: [f64; 6],
}

#[inline]
fn sym_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // row i starts at i*dim - i*(i-1)/2 in packed storage
    i * dim - (i * i.saturating_sub(1)) / 2 + (j - i)
}

impl SymTensor {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim));
        Self { dim, a: [0.0; 6] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut t = Self::zeros(dim);
        for i in 0..dim {
            t.set(i, i, 1.0);
        }
        t
    }

    /// Builds from packed upper-triangular entries (`e11, e12, e22` in 2D,
    /// `e11, e12, e13, e22, e23, e33` in 3D).
    pub fn from_upper(dim: usize, upper: &[f64]) -> Result<Self> {
        check_space_dim(dim)?;
        if upper.len() != sym_len(dim) {
            return Err(Error::DimensionMismatch { expected: sym_len(dim), found: upper.len() });
        }
        let mut t = Self::zeros(dim);
        t.a[..upper.len()].copy_from_slice(upper);
        Ok(t)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[sym_index(self.dim, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = sym_index(self.dim, i, j);
        self.a[k] = v;
    }

    #[inline]
    pub fn upper(&self) -> &[f64] {
        &self.a[..sym_len(self.dim)]
    }

    #[inline]
    pub fn upper_mut(&mut self) -> &mut [f64] {
        let n = sym_len(self.dim);
        &mut self.a[..n]
    }

    pub fn frobenius(&self) -> f64 {
        frobenius(self)
    }

    /// `ξᵀ A ξ`.
    pub fn quad_form(&self, xi: &Vector) -> f64 {
        debug_assert_eq!(self.dim, xi.dim());
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.get(i, j) * xi[i] * xi[j];
            }
        }
        s
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        let mut out = Vector::zeros(self.dim);
        for i in 0..self.dim {
            out[i] = (0..self.dim).map(|j| self.get(i, j) * v[j]).sum();
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.upper().iter().all(|x| x.is_finite())
    }
}

impl fmt::Debug for SymTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<Vec<f64>> =
            (0..self.dim).map(|i| (0..self.dim).map(|j| self.get(i, j)).collect()).collect();
        f.debug_list().entries(rows).finish()
    }
}

impl Add for SymTensor {
    type Output = SymTensor;
    fn add(mut self, rhs: SymTensor) -> SymTensor {
        debug_assert_eq!(self.dim, rhs.dim);
        for k in 0..sym_len(self.dim) {
            self.a[k] += rhs.a[k];
        }
        self
    }
}

impl AddAssign for SymTensor {
    fn add_assign(&mut self, rhs: SymTensor) {
        *self = *self + rhs;
    }
}

impl Sub for SymTensor {
    type Output = SymTensor;
    fn sub(mut self, rhs: SymTensor) -> SymTensor {
        debug_assert_eq!(self.dim, rhs.dim);
        for k in 0..sym_len(self.dim) {
            self.a[k] -= rhs.a[k];
        }
        self
    }
}

impl Mul<f64> for SymTensor {
    type Output = SymTensor;
    fn mul(mut self, s: f64) -> SymTensor {
        for k in 0..sym_len(self.dim) {
            self.a[k] *= s;
        }
        self
    }
}

impl Neg for SymTensor {
    type Output = SymTensor;
    fn neg(self) -> SymTensor {
        self * -1.0
    }
}

/// Skew-symmetric matrix stored as its strict upper triangle.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct SkewTensor {
    dim: usize,
    a: [f64; 3],
}

impl SkewTensor {
    /// Entries `A_12` (2D) or `A_12, A_13, A_23` (3D).
    pub fn new(dim: usize, strict_upper: &[f64]) -> Result<Self> {
        check_space_dim(dim)?;
        let len = dim * (dim - 1) / 2;
        if strict_upper.len() != len {
            return Err(Error::DimensionMismatch { expected: len, found: strict_upper.len() });
        }
        let mut a = [0.0; 3];
        a[..len].copy_from_slice(strict_upper);
        Ok(Self { dim, a })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        use std::cmp::Ordering;
        let idx = |i: usize, j: usize| match (self.dim, i, j) {
            (_, 0, 1) => 0,
            (3, 0, 2) => 1,
            (3, 1, 2) => 2,
            _ => unreachable!(),
        };
        match i.cmp(&j) {
            Ordering::Equal => 0.0,
            Ordering::Less => self.a[idx(i, j)],
            Ordering::Greater => -self.a[idx(j, i)],
        }
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        let mut out = Vector::zeros(self.dim);
        for i in 0..self.dim {
            out[i] = (0..self.dim).map(|j| self.get(i, j) * v[j]).sum();
        }
        out
    }

    pub fn to_matrix(&self) -> Matrix {
        let mut m = Matrix::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.set(i, j, self.get(i, j));
            }
        }
        m
    }
}

/// General square matrix, used for affine maps and Jacobians.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct Matrix {
    dim: usize,
    m: [[f64; MAX_DIM]; MAX_DIM],
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, m: [[0.0; MAX_DIM]; MAX_DIM] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        check_space_dim(dim)?;
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: row.len() });
            }
            m.m[i][..dim].copy_from_slice(row);
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.m[i][j] = v;
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        let mut out = Vector::zeros(self.dim);
        for i in 0..self.dim {
            out[i] = (0..self.dim).map(|j| self.m[i][j] * v[j]).sum();
        }
        out
    }

    /// `(M + Mᵀ) / 2`.
    pub fn sym_part(&self) -> SymTensor {
        let mut t = SymTensor::zeros(self.dim);
        for i in 0..self.dim {
            for j in i..self.dim {
                t.set(i, j, 0.5 * (self.m[i][j] + self.m[j][i]));
            }
        }
        t
    }
}

/// Symmetric tensor product `a ⊙ b = (a ⊗ b + b ⊗ a) / 2`.
pub fn sym_outer(a: &Vector, b: &Vector) -> Result<SymTensor> {
    a.check_same_dim(b)?;
    check_space_dim(a.dim())?;
    Ok(sym_outer_unchecked(a, b))
}

#[inline]
pub(crate) fn sym_outer_unchecked(a: &Vector, b: &Vector) -> SymTensor {
    let dim = a.dim();
    let mut t = SymTensor::zeros(dim);
    for i in 0..dim {
        for j in i..dim {
            t.set(i, j, 0.5 * (a[i] * b[j] + b[i] * a[j]));
        }
    }
    t
}

/// Frobenius norm; off-diagonal entries count twice.
pub fn frobenius(t: &SymTensor) -> f64 {
    let mut s = 0.0;
    for i in 0..t.dim() {
        for j in i..t.dim() {
            let v = t.get(i, j);
            s += if i == j { v * v } else { 2.0 * v * v };
        }
    }
    s.sqrt()
}

/// Full double contraction `A : B`.
pub fn contract(a: &SymTensor, b: &SymTensor) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    let mut s = 0.0;
    for i in 0..a.dim() {
        for j in i..a.dim() {
            let p = a.get(i, j) * b.get(i, j);
            s += if i == j { p } else { 2.0 * p };
        }
    }
    s
}
