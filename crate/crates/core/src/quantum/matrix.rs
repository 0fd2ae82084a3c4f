//! Dense square complex matrices.
//!
//! Storage is row-major and inline for dimensions up to 4, which covers every
//! model shipped with the crate; larger matrices (block matrices used for
//! exponential derivatives) spill to the heap.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use smallvec::SmallVec;

use crate::error::{Error, Result};

pub type C64 = Complex64;

const INLINE: usize = 16;

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: SmallVec<[C64; INLINE]>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: SmallVec::from_elem(C64::new(0.0, 0.0), dim * dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = SmallVec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    /// Builds a matrix from row-major entries; `entries.len()` must be a square.
    pub fn from_row_major(entries: &[C64]) -> Result<Self> {
        let dim = (entries.len() as f64).sqrt().round() as usize;
        if dim * dim != entries.len() || dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "{} entries do not form a square matrix",
                entries.len()
            )));
        }
        Ok(Self {
            dim,
            data: SmallVec::from_slice(entries),
        })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        Self::from_fn(dim, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn diagonal(values: &[C64]) -> Self {
        let dim = values.len();
        let mut m = Self::zeros(dim);
        for (i, v) in values.iter().enumerate() {
            m.data[i * dim + i] = *v;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        Self::from_fn(d, |i, j| self.data[j * d + i].conj())
    }

    pub fn transpose(&self) -> Self {
        let d = self.dim;
        Self::from_fn(d, |i, j| self.data[j * d + i])
    }

    pub fn conj(&self) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn scale_real_in_place(&mut self, factor: f64) {
        for z in self.data.iter_mut() {
            *z *= factor;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    /// Largest entrywise modulus.
    pub fn norm_max(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Maximum absolute row sum, used for exponential scaling.
    pub fn norm_one(&self) -> f64 {
        let d = self.dim;
        (0..d)
            .map(|i| (0..d).map(|j| self.data[i * d + j].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                let a = self.data[i * d + j];
                let b = self.data[j * d + i].conj();
                worst = worst.max((a - b).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// `(M + M†) / 2`
    pub fn hermitized(&self) -> Self {
        let d = self.dim;
        Self::from_fn(d, |i, j| (self.data[i * d + j] + self.data[j * d + i].conj()) * 0.5)
    }

    pub fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        Ok(())
    }

    pub fn try_mul(&self, rhs: &Self) -> Result<Self> {
        self.check_same_dim(rhs)?;
        Ok(self * rhs)
    }

    /// `out += a · b`
    #[inline]
    pub fn mul_acc(a: &Self, b: &Self, out: &mut Self) {
        let d = a.dim;
        debug_assert!(b.dim == d && out.dim == d);
        for i in 0..d {
            for k in 0..d {
                let aik = a.data[i * d + k];
                if aik.re == 0.0 && aik.im == 0.0 {
                    continue;
                }
                for j in 0..d {
                    out.data[i * d + j] += aik * b.data[k * d + j];
                }
            }
        }
    }

    /// `out += a · b†`
    #[inline]
    pub fn mul_adj_acc(a: &Self, b: &Self, out: &mut Self) {
        let d = a.dim;
        debug_assert!(b.dim == d && out.dim == d);
        for i in 0..d {
            for j in 0..d {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..d {
                    acc += a.data[i * d + k] * b.data[j * d + k].conj();
                }
                out.data[i * d + j] += acc;
            }
        }
    }

    /// `out += a · m · b†`
    #[inline]
    pub fn sandwich_acc(a: &Self, m: &Self, b: &Self, out: &mut Self) {
        let mut tmp = Self::zeros(a.dim);
        Self::mul_acc(a, m, &mut tmp);
        Self::mul_adj_acc(&tmp, b, out);
    }

    /// `a · m · a†`
    pub fn sandwich(a: &Self, m: &Self) -> Self {
        let mut out = Self::zeros(a.dim);
        Self::sandwich_acc(a, m, a, &mut out);
        out
    }

    /// `tr(a · m · b†)` without forming the product.
    pub fn sandwich_trace(a: &Self, m: &Self, b: &Self) -> C64 {
        // tr(A M B†) = Σ_{i,k,l} A_ik M_kl conj(B_il)
        let d = a.dim;
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..d {
            for k in 0..d {
                let aik = a.data[i * d + k];
                if aik.re == 0.0 && aik.im == 0.0 {
                    continue;
                }
                let mut row = C64::new(0.0, 0.0);
                for l in 0..d {
                    row += m.data[k * d + l] * b.data[i * d + l].conj();
                }
                acc += aik * row;
            }
        }
        acc
    }

    pub fn kron(a: &Self, b: &Self) -> Self {
        let (da, db) = (a.dim, b.dim);
        let d = da * db;
        Self::from_fn(d, |i, j| {
            a.data[(i / db) * da + j / db] * b.data[(i % db) * db + j % db]
        })
    }

    /// Matrix exponential by scaling and squaring with a Taylor kernel.
    pub fn expm(&self) -> Self {
        let d = self.dim;
        let norm = self.norm_one();
        let mut squarings = 0u32;
        if norm > 0.5 {
            squarings = (norm / 0.5).log2().ceil() as u32;
        }
        let scaled = self.scale_real(0.5f64.powi(squarings as i32));
        // ‖scaled‖ ≤ 1/2, so 18 terms reach double precision.
        let mut result = Self::identity(d);
        let mut term = Self::identity(d);
        for k in 1..=18 {
            term = &term * &scaled;
            term.scale_real_in_place(1.0 / k as f64);
            result += &term;
            if term.norm_max() == 0.0 {
                break;
            }
        }
        for _ in 0..squarings {
            result = &result * &result;
        }
        result
    }

    /// Returns `(exp(A), L(A, E))` where `L` is the Fréchet derivative of the
    /// exponential at `A` in direction `E`, read off the block exponential
    /// `exp([[A, E], [0, A]]) = [[exp(A), L], [0, exp(A)]]`.
    pub fn expm_frechet(&self, direction: &Self) -> Result<(Self, Self)> {
        self.check_same_dim(direction)?;
        let d = self.dim;
        let block = Self::from_fn(2 * d, |i, j| match (i < d, j < d) {
            (true, true) => self.data[i * d + j],
            (true, false) => direction.data[i * d + (j - d)],
            (false, true) => C64::new(0.0, 0.0),
            (false, false) => self.data[(i - d) * d + (j - d)],
        });
        let e = block.expm();
        let top_left = Self::from_fn(d, |i, j| e.data[i * 2 * d + j]);
        let top_right = Self::from_fn(d, |i, j| e.data[i * 2 * d + j + d]);
        Ok((top_left, top_right))
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let d = self.dim;
        let h = self.hermitized();
        let m = nalgebra::DMatrix::<C64>::from_fn(d, d, |i, j| h.data[i * d + j]);
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})", self.dim, self.dim)?;
        for i in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|j| {
                    let z = self.data[i * self.dim + j];
                    format!("{:+.6}{:+.6}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl<'a> Add<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        debug_assert_eq!(self.dim, rhs.dim);
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(rhs.data.iter()).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<'a> Sub<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        debug_assert_eq!(self.dim, rhs.dim);
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(rhs.data.iter()).map(|(a, b)| a - b).collect(),
        }
    }
}

impl<'a> Mul<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.dim);
        ComplexMatrix::mul_acc(self, rhs, &mut out);
        out
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.scale_real(-1.0)
    }
}

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        debug_assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a += b;
        }
    }
}

impl SubAssign<&ComplexMatrix> for ComplexMatrix {
    fn sub_assign(&mut self, rhs: &ComplexMatrix) {
        debug_assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a -= b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z = ComplexMatrix::zeros(3);
        assert_eq!(z.expm(), ComplexMatrix::identity(3));
    }

    #[test]
    fn expm_of_diagonal() {
        let a = ComplexMatrix::diagonal(&[c(0.3, 0.0), c(-2.0, 1.0)]);
        let e = a.expm();
        assert!((e[(0, 0)] - c(0.3, 0.0).exp()).norm() < 1e-14);
        assert!((e[(1, 1)] - c(-2.0, 1.0).exp()).norm() < 1e-14);
        assert!(e[(0, 1)].norm() < 1e-16);
    }

    #[test]
    fn expm_of_rotation_generator() {
        // exp(-i θ σx) = cos θ 𝟙 - i sin θ σx
        let theta = 2.7;
        let sx = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let e = sx.scale(c(0.0, -theta)).expm();
        assert!((e[(0, 0)] - c(theta.cos(), 0.0)).norm() < 1e-13);
        assert!((e[(0, 1)] - c(0.0, -theta.sin())).norm() < 1e-13);
    }

    #[test]
    fn frechet_matches_finite_difference() {
        let a = ComplexMatrix::from_fn(3, |i, j| c(0.2 * i as f64 - 0.1 * j as f64, 0.3 * (i * j) as f64));
        let e = ComplexMatrix::from_fn(3, |i, j| c((i + 2 * j) as f64 * 0.1, -0.05 * i as f64));
        let (_, l) = a.expm_frechet(&e).unwrap();
        let h = 1e-6;
        let plus = (&a + &e.scale_real(h)).expm();
        let minus = (&a - &e.scale_real(h)).expm();
        let fd = (&plus - &minus).scale_real(0.5 / h);
        assert!(l.max_abs_diff(&fd) < 1e-8, "{:?} vs {:?}", l, fd);
    }

    #[test]
    fn sandwich_trace_matches_product() {
        let a = ComplexMatrix::from_fn(3, |i, j| c(i as f64 + 0.5, j as f64 - 1.0));
        let m = ComplexMatrix::from_fn(3, |i, j| c((i * j) as f64, 0.25 * i as f64));
        let b = ComplexMatrix::from_fn(3, |i, j| c(-(j as f64), i as f64 * 0.1));
        let mut full = ComplexMatrix::zeros(3);
        ComplexMatrix::sandwich_acc(&a, &m, &b, &mut full);
        let direct = &(&a * &m) * &b.adjoint();
        assert!(full.max_abs_diff(&direct) < 1e-12);
        assert!((ComplexMatrix::sandwich_trace(&a, &m, &b) - direct.trace()).norm() < 1e-12);
    }

    #[test]
    fn kron_layout() {
        let a = ComplexMatrix::from_real_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let i2 = ComplexMatrix::identity(2);
        let k = ComplexMatrix::kron(&a, &i2);
        assert_eq!(k[(0, 2)], c(2.0, 0.0));
        assert_eq!(k[(1, 3)], c(2.0, 0.0));
        assert_eq!(k[(0, 1)], c(0.0, 0.0));
        assert_eq!(k[(3, 1)], c(3.0, 0.0));
    }

    #[test]
    fn from_row_major_rejects_non_square() {
        assert!(ComplexMatrix::from_row_major(&[c(1.0, 0.0); 3]).is_err());
        assert_eq!(ComplexMatrix::from_row_major(&[c(1.0, 0.0); 4]).unwrap().dim(), 2);
    }

    #[test]
    fn hermitian_eigenvalues_of_pauli_z() {
        let z = ComplexMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]);
        let ev = z.hermitian_eigenvalues();
        assert!((ev[0] + 1.0).abs() < 1e-12 && (ev[1] - 1.0).abs() < 1e-12);
    }
}
