//! Small dense square matrices.
//!
//! Dimensions are runtime values (`1..=16`); storage is row-major and stays
//! inline for `d <= 4`, which covers every hot loop in the crate.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{invalid, Result};

pub const MAX_DIM: usize = 16;

/// Largest dimension for which [`operator_norm`] returns the exact spectral norm.
pub const SPECTRAL_NORM_MAX_DIM: usize = 8;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    dim: usize,
    data: SmallVec<[f64; 16]>,
}

impl fmt::Debug for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = (0..self.dim).map(|i| self.row(i)).collect();
        f.debug_tuple("SquareMatrix").field(&rows).finish()
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(invalid(format!(
            "matrix dimension must be in 1..={MAX_DIM}, got {dim}"
        )));
    }
    Ok(())
}

impl SquareMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(
            dim > 0 && dim <= MAX_DIM,
            "matrix dimension {dim} out of range"
        );
        Self {
            dim,
            data: SmallVec::from_elem(0.0, dim * dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_row_major(dim: usize, entries: &[f64]) -> Result<Self> {
        check_dim(dim)?;
        if entries.len() != dim * dim {
            return Err(invalid(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(invalid("matrix entries must be finite"));
        }
        Ok(Self {
            dim,
            data: SmallVec::from_slice(entries),
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.len();
        check_dim(dim)?;
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(invalid(
                    "matrix rows must all have length equal to the row count",
                ));
            }
            entries.extend_from_slice(row);
        }
        Self::from_row_major(dim, &entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.data[j * d + i] = self.data[i * d + j];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Self) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += s * b;
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.mul_vec_into(v, &mut out);
        out
    }

    pub fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (i, o) in out.iter_mut().enumerate().take(d) {
            let row = &self.data[i * d..(i + 1) * d];
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        let d = self.dim;
        (0..d)
            .map(|j| (0..d).map(|i| self.data[i * d + j].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Solves `self * X = rhs` with partial pivoting.
    fn solve(&self, rhs: &Self) -> Result<Self> {
        let d = self.dim;
        let mut a = self.data.clone();
        let mut b = rhs.data.clone();
        for col in 0..d {
            let pivot = (col..d)
                .max_by(|&i, &j| a[i * d + col].abs().total_cmp(&a[j * d + col].abs()))
                .unwrap_or(col);
            if a[pivot * d + col] == 0.0 {
                return Err(invalid("singular matrix in linear solve"));
            }
            if pivot != col {
                for k in 0..d {
                    a.swap(pivot * d + k, col * d + k);
                    b.swap(pivot * d + k, col * d + k);
                }
            }
            let p = a[col * d + col];
            for row in col + 1..d {
                let factor = a[row * d + col] / p;
                if factor == 0.0 {
                    continue;
                }
                for k in col..d {
                    a[row * d + k] -= factor * a[col * d + k];
                }
                for k in 0..d {
                    b[row * d + k] -= factor * b[col * d + k];
                }
            }
        }
        for row in (0..d).rev() {
            let p = a[row * d + row];
            for k in 0..d {
                let mut acc = b[row * d + k];
                for j in row + 1..d {
                    acc -= a[row * d + j] * b[j * d + k];
                }
                b[row * d + k] = acc / p;
            }
        }
        Ok(Self { dim: d, data: b })
    }
}

impl std::ops::Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &SquareMatrix {
    type Output = SquareMatrix;
    fn mul(self, rhs: &SquareMatrix) -> SquareMatrix {
        debug_assert_eq!(self.dim, rhs.dim);
        let d = self.dim;
        let mut out = SquareMatrix::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..d {
                    out.data[i * d + j] += a * rhs.data[k * d + j];
                }
            }
        }
        out
    }
}

impl Add for &SquareMatrix {
    type Output = SquareMatrix;
    fn add(self, rhs: &SquareMatrix) -> SquareMatrix {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &SquareMatrix {
    type Output = SquareMatrix;
    fn sub(self, rhs: &SquareMatrix) -> SquareMatrix {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

/// The coordinate projections `P = diag(1,…,1,0)` and `Q = E - P` onto the
/// boundary hyperplane and the normal direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPair {
    pub p: SquareMatrix,
    pub q: SquareMatrix,
}

impl ProjectionPair {
    pub fn new(dim: usize) -> Self {
        let mut p = SquareMatrix::identity(dim);
        p[(dim - 1, dim - 1)] = 0.0;
        let mut q = SquareMatrix::zeros(dim);
        q[(dim - 1, dim - 1)] = 1.0;
        Self { p, q }
    }

    pub fn dim(&self) -> usize {
        self.p.dim()
    }

    /// `P M`: zeroes the last row.
    pub fn tangential(&self, m: &SquareMatrix) -> SquareMatrix {
        let d = m.dim();
        let mut out = m.clone();
        out.data[(d - 1) * d..].iter_mut().for_each(|v| *v = 0.0);
        out
    }

    /// `Q M`: keeps only the last row.
    pub fn normal(&self, m: &SquareMatrix) -> SquareMatrix {
        let d = m.dim();
        let mut out = SquareMatrix::zeros(d);
        out.data[(d - 1) * d..].copy_from_slice(&m.data[(d - 1) * d..]);
        out
    }

    /// `P M + Q (M − anchor)`, computed as `M − Q anchor`.
    pub fn anchored(&self, m: &SquareMatrix, anchor: &SquareMatrix) -> SquareMatrix {
        let d = m.dim();
        let mut out = m.clone();
        for (v, a) in out.data[(d - 1) * d..]
            .iter_mut()
            .zip(&anchor.data[(d - 1) * d..])
        {
            *v -= a;
        }
        out
    }

    /// `P M P`
    pub fn sandwich(&self, m: &SquareMatrix) -> SquareMatrix {
        let d = m.dim();
        let mut out = self.tangential(m);
        for i in 0..d {
            out.data[i * d + d - 1] = 0.0;
        }
        out
    }
}

/// Spectral norm for `d <= 8`; Frobenius norm (an upper bound) above that.
pub fn operator_norm(a: &SquareMatrix) -> f64 {
    if a.dim() > SPECTRAL_NORM_MAX_DIM {
        return a.frobenius_norm();
    }
    let gram = &a.transpose() * a;
    largest_symmetric_eigenvalue(&gram).max(0.0).sqrt()
}

/// Cyclic Jacobi sweeps on a symmetric matrix.
fn largest_symmetric_eigenvalue(s: &SquareMatrix) -> f64 {
    let d = s.dim();
    if d == 1 {
        return s[(0, 0)];
    }
    let mut a = s.clone();
    for _sweep in 0..64 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let diag: f64 = (0..d).map(|i| a[(i, i)] * a[(i, i)]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..d - 1 {
            for q in p + 1..d {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..d {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
            }
        }
    }
    (0..d).map(|i| a[(i, i)]).fold(f64::NEG_INFINITY, f64::max)
}

// Scaling and squaring with diagonal Padé approximants of degree 3..13;
// thresholds are the 1-norm bounds from Higham (2005).
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
];
const THETA_13: f64 = 5.371920351148152;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// `e^{A t}` for `t >= 0`.
pub fn mat_exp(a: &SquareMatrix, t: f64) -> Result<SquareMatrix> {
    if !t.is_finite() || t < 0.0 {
        return Err(invalid(format!(
            "exponential time must be finite and non-negative, got {t}"
        )));
    }
    if !a.is_finite() {
        return Err(invalid("matrix exponential of a non-finite matrix"));
    }
    let at = a.scale(t);
    let norm = at.one_norm();
    let d = a.dim();
    let eye = SquareMatrix::identity(d);

    let (u, v, squarings) = match THETA.iter().find(|(_, theta)| norm <= *theta) {
        Some(&(degree, _)) => {
            let coeffs: &[f64] = match degree {
                3 => &PADE_3,
                5 => &PADE_5,
                7 => &PADE_7,
                _ => &PADE_9,
            };
            let (u, v) = pade_low(&at, coeffs, &eye);
            (u, v, 0)
        }
        None => {
            let s = ((norm / THETA_13).log2().ceil()).max(0.0) as i32;
            let scaled = at.scale(2f64.powi(-s));
            let (u, v) = pade_13(&scaled, &eye);
            (u, v, s as u32)
        }
    };

    let mut result = (&v - &u).solve(&(&v + &u))?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    if !result.is_finite() {
        return Err(invalid("matrix exponential overflowed"));
    }
    Ok(result)
}

fn pade_low(a: &SquareMatrix, b: &[f64], eye: &SquareMatrix) -> (SquareMatrix, SquareMatrix) {
    let a2 = a * a;
    let mut odd = eye.scale(b[1]);
    let mut even = eye.scale(b[0]);
    let mut power = eye.clone();
    for k in 1..b.len() / 2 {
        power = &power * &a2;
        odd.axpy(b[2 * k + 1], &power);
        even.axpy(b[2 * k], &power);
    }
    (a * &odd, even)
}

fn pade_13(a: &SquareMatrix, eye: &SquareMatrix) -> (SquareMatrix, SquareMatrix) {
    let b = &PADE_13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let mut inner = a6.scale(b[13]);
    inner.axpy(b[11], &a4);
    inner.axpy(b[9], &a2);
    let mut odd = &a6 * &inner;
    odd.axpy(b[7], &a6);
    odd.axpy(b[5], &a4);
    odd.axpy(b[3], &a2);
    odd.axpy(b[1], eye);
    let u = a * &odd;

    let mut inner = a6.scale(b[12]);
    inner.axpy(b[10], &a4);
    inner.axpy(b[8], &a2);
    let mut v = &a6 * &inner;
    v.axpy(b[6], &a6);
    v.axpy(b[4], &a4);
    v.axpy(b[2], &a2);
    v.axpy(b[0], eye);
    (u, v)
}
