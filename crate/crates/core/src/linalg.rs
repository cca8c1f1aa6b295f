//! Small dense matrices, singular values and symbolic words.
//!
//! Everything here is sized for the dimensions that occur in practice
//! (`d <= 8`, usually 1-3). Values are plain owned data with no interior
//! mutability, so they can be shared freely across threads.

use crate::error::{CoreError, Result};
use crate::math;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Relative tolerance below which a determinant counts as zero.
const SINGULAR_REL_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

/// Dense row-major `dim x dim` real matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl core::fmt::Debug for Matrix {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "Matrix{}x{}{:?}", self.dim, self.dim, self.data)
    }
}

impl Matrix {
    /// Builds a matrix from row-major entries; rejects non-finite values.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(CoreError::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(CoreError::NonFiniteEntries);
        }
        Ok(Self { dim, data })
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { dim, data }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let dim = entries.len();
        let mut m = Self::zeros(dim);
        for (i, &e) in entries.iter().enumerate() {
            m.data[i * dim + i] = e;
        }
        m
    }

    /// Rotation by `theta` scaled by `r` (2x2 only; handy in tests and demos).
    pub fn rotation_scaled(theta: f64, r: f64) -> Self {
        let (c, s) = (math::cos(theta), math::sin(theta));
        Self {
            dim: 2,
            data: vec![r * c, -r * s, r * s, r * c],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.dim + col] = value;
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(math::abs(*x)))
    }

    pub fn transpose(&self) -> Matrix {
        let d = self.dim;
        let mut out = Matrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.data[j * d + i] = self.data[i * d + j];
            }
        }
        out
    }

    pub fn mul(&self, rhs: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.dim);
        self.mul_into(rhs, &mut out);
        out
    }

    /// `out = self * rhs` without allocating; `out` must have matching dim.
    #[inline]
    pub fn mul_into(&self, rhs: &Matrix, out: &mut Matrix) {
        let d = self.dim;
        debug_assert_eq!(rhs.dim, d);
        debug_assert_eq!(out.dim, d);
        if d == 2 {
            let a = &self.data;
            let b = &rhs.data;
            let o = &mut out.data;
            let (a0, a1, a2, a3) = (a[0], a[1], a[2], a[3]);
            let (b0, b1, b2, b3) = (b[0], b[1], b[2], b[3]);
            o[0] = a0 * b0 + a1 * b2;
            o[1] = a0 * b1 + a1 * b3;
            o[2] = a2 * b0 + a3 * b2;
            o[3] = a2 * b1 + a3 * b3;
            return;
        }
        if d == 1 {
            out.data[0] = self.data[0] * rhs.data[0];
            return;
        }
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += self.data[i * d + k] * rhs.data[k * d + j];
                }
                out.data[i * d + j] = acc;
            }
        }
    }

    pub fn sub(&self, rhs: &Matrix) -> Matrix {
        let mut out = self.clone();
        for (o, r) in out.data.iter_mut().zip(rhs.data.iter()) {
            *o -= r;
        }
        out
    }

    pub fn add(&self, rhs: &Matrix) -> Matrix {
        let mut out = self.clone();
        for (o, r) in out.data.iter_mut().zip(rhs.data.iter()) {
            *o += r;
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Matrix {
        let mut out = self.clone();
        for o in out.data.iter_mut() {
            *o *= factor;
        }
        out
    }

    /// `out = self * v` for a vector `v`.
    #[inline]
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let d = self.dim;
        debug_assert_eq!(v.len(), d);
        debug_assert_eq!(out.len(), d);
        for i in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += self.data[i * d + k] * v[k];
            }
            out[i] = acc;
        }
    }

    pub fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.apply(v, &mut out);
        out
    }

    /// Determinant via partial-pivoting LU (closed forms for d <= 3).
    pub fn det(&self) -> f64 {
        let d = self.dim;
        let a = &self.data;
        match d {
            1 => a[0],
            2 => a[0] * a[3] - a[1] * a[2],
            3 => {
                a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                    + a[2] * (a[3] * a[7] - a[4] * a[6])
            }
            _ => {
                let mut lu = self.data.clone();
                let mut det = 1.0;
                for col in 0..d {
                    let mut pivot = col;
                    for row in col + 1..d {
                        if math::abs(lu[row * d + col]) > math::abs(lu[pivot * d + col]) {
                            pivot = row;
                        }
                    }
                    if lu[pivot * d + col] == 0.0 {
                        return 0.0;
                    }
                    if pivot != col {
                        for k in 0..d {
                            lu.swap(col * d + k, pivot * d + k);
                        }
                        det = -det;
                    }
                    det *= lu[col * d + col];
                    for row in col + 1..d {
                        let f = lu[row * d + col] / lu[col * d + col];
                        for k in col..d {
                            lu[row * d + k] -= f * lu[col * d + k];
                        }
                    }
                }
                det
            }
        }
    }

    /// Inverse via Gauss-Jordan with partial pivoting.
    pub fn inverse(&self) -> Result<Matrix> {
        let d = self.dim;
        let mut aug = self.data.clone();
        let mut inv = Matrix::identity(d);
        for col in 0..d {
            let mut pivot = col;
            for row in col + 1..d {
                if math::abs(aug[row * d + col]) > math::abs(aug[pivot * d + col]) {
                    pivot = row;
                }
            }
            let scale = self.max_abs_entry().max(f64::MIN_POSITIVE);
            if math::abs(aug[pivot * d + col]) <= SINGULAR_REL_TOL * scale {
                return Err(CoreError::SingularMatrix {
                    index: 0,
                    det: self.det(),
                });
            }
            if pivot != col {
                for k in 0..d {
                    aug.swap(col * d + k, pivot * d + k);
                    inv.data.swap(col * d + k, pivot * d + k);
                }
            }
            let p = aug[col * d + col];
            for k in 0..d {
                aug[col * d + k] /= p;
                inv.data[col * d + k] /= p;
            }
            for row in 0..d {
                if row != col {
                    let f = aug[row * d + col];
                    if f != 0.0 {
                        for k in 0..d {
                            aug[row * d + k] -= f * aug[col * d + k];
                            inv.data[row * d + k] -= f * inv.data[col * d + k];
                        }
                    }
                }
            }
        }
        Ok(inv)
    }

    /// Operator norm, i.e. the largest singular value.
    pub fn op_norm(&self) -> f64 {
        largest_singular_value(self)
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let d = a.dim();
    if b.len() != d {
        return Err(CoreError::DimensionMismatch {
            expected: d,
            got: b.len(),
        });
    }
    let mut m = a.entries().to_vec();
    let mut x = b.to_vec();
    let scale = a.max_abs_entry().max(f64::MIN_POSITIVE);
    for col in 0..d {
        let mut pivot = col;
        for row in col + 1..d {
            if math::abs(m[row * d + col]) > math::abs(m[pivot * d + col]) {
                pivot = row;
            }
        }
        if math::abs(m[pivot * d + col]) <= SINGULAR_REL_TOL * scale {
            return Err(CoreError::SingularMatrix {
                index: 0,
                det: a.det(),
            });
        }
        if pivot != col {
            for k in 0..d {
                m.swap(col * d + k, pivot * d + k);
            }
            x.swap(col, pivot);
        }
        for row in col + 1..d {
            let f = m[row * d + col] / m[col * d + col];
            if f != 0.0 {
                for k in col..d {
                    m[row * d + k] -= f * m[col * d + k];
                }
                x[row] -= f * x[col];
            }
        }
    }
    for col in (0..d).rev() {
        x[col] /= m[col * d + col];
        for row in 0..col {
            x[row] -= m[row * d + col] * x[col];
        }
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// Singular values
// ---------------------------------------------------------------------------

/// Singular values in descending order. Total: the zero matrix yields zeros.
///
/// d = 1 and d = 2 use closed forms (exact at extreme anisotropy); larger
/// dimensions run one-sided Jacobi, which keeps relative accuracy on the
/// small singular values instead of squaring the condition number.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    match m.dim() {
        1 => vec![math::abs(m.entries()[0])],
        2 => {
            let (s1, s2) = sv2(m);
            vec![s1, s2]
        }
        _ => one_sided_jacobi(m),
    }
}

/// Smallest singular value without allocating (hot path in word sums).
#[inline]
pub fn smallest_singular_value(m: &Matrix) -> f64 {
    match m.dim() {
        1 => math::abs(m.entries()[0]),
        2 => sv2(m).1,
        _ => *one_sided_jacobi(m).last().unwrap(),
    }
}

/// Largest singular value without allocating.
#[inline]
pub fn largest_singular_value(m: &Matrix) -> f64 {
    match m.dim() {
        1 => math::abs(m.entries()[0]),
        2 => sv2(m).0,
        _ => one_sided_jacobi(m)[0],
    }
}

/// Exact 2x2 singular values via the rotation-sum trick. Plain `sqrt` is
/// fine here: the matrices in this domain have entries of order one.
#[inline]
fn sv2(m: &Matrix) -> (f64, f64) {
    let e = m.entries();
    let (a, b, c, d) = (e[0], e[1], e[2], e[3]);
    let p = a + d;
    let q = b - c;
    let u = a - d;
    let w = b + c;
    let s1 = math::sqrt(p * p + q * q);
    let s2 = math::sqrt(u * u + w * w);
    ((s1 + s2) * 0.5, math::abs(s1 - s2) * 0.5)
}

fn one_sided_jacobi(m: &Matrix) -> Vec<f64> {
    let d = m.dim();
    // Work on columns of a copy of m.
    let mut a = m.transpose(); // rows of `a` are columns of `m`
    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..d {
            for j in i + 1..d {
                let (mut aii, mut ajj, mut aij) = (0.0, 0.0, 0.0);
                for k in 0..d {
                    let x = a.get(i, k);
                    let y = a.get(j, k);
                    aii += x * x;
                    ajj += y * y;
                    aij += x * y;
                }
                if math::abs(aij) <= 1e-15 * math::sqrt(aii * ajj) || aij == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (ajj - aii) / (2.0 * aij);
                let t =
                    math::copysign(1.0, zeta) / (math::abs(zeta) + math::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = c * t;
                for k in 0..d {
                    let x = a.get(i, k);
                    let y = a.get(j, k);
                    a.set(i, k, c * x - s * y);
                    a.set(j, k, s * x + c * y);
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut svals: Vec<f64> = (0..d)
        .map(|i| {
            let mut acc = 0.0;
            for k in 0..d {
                let x = a.get(i, k);
                acc += x * x;
            }
            math::sqrt(acc)
        })
        .collect();
    svals.sort_by(|x, y| y.partial_cmp(x).unwrap());
    svals
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi.
///
/// Returns `(values, vectors)` with eigenvalues in descending order and the
/// matching eigenvectors as columns.
pub fn sym_eigen(m: &Matrix) -> (Vec<f64>, Matrix) {
    let d = m.dim();
    let mut a = m.clone();
    let mut v = Matrix::identity(d);
    for _sweep in 0..80 {
        let mut off = 0.0;
        for i in 0..d {
            for j in i + 1..d {
                off += math::abs(a.get(i, j));
            }
        }
        if off == 0.0 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a.get(p, q);
                if math::abs(apq) <= 1e-300 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                if math::abs(apq) <= 1e-16 * (math::abs(app) + math::abs(aqq)) {
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = math::copysign(1.0, theta)
                    / (math::abs(theta) + math::sqrt(1.0 + theta * theta));
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = c * t;
                for k in 0..d {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..d {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..d {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a.get(j, j).partial_cmp(&a.get(i, i)).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = Matrix::zeros(d);
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..d {
            vectors.set(row, new_col, v.get(row, old_col));
        }
    }
    (values, vectors)
}

// ---------------------------------------------------------------------------
// Vector helpers
// ---------------------------------------------------------------------------

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    math::sqrt(dot(v, v))
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let t = x - y;
        acc += t * t;
    }
    math::sqrt(acc)
}

// ---------------------------------------------------------------------------
// MapTuple
// ---------------------------------------------------------------------------

/// An ordered family `(T_1, ..., T_m)` of contracting invertible matrices.
///
/// Invertibility and contraction are checked once at construction; all other
/// operations may assume them.
#[derive(Clone, Debug)]
pub struct MapTuple {
    dim: usize,
    maps: Vec<Matrix>,
    dets: Vec<f64>,
    norms: Vec<f64>,
    delta: f64,
}

impl MapTuple {
    pub fn new(maps: Vec<Matrix>) -> Result<Self> {
        if maps.is_empty() {
            return Err(CoreError::EmptyTuple);
        }
        let dim = maps[0].dim();
        let mut dets = Vec::with_capacity(maps.len());
        let mut norms = Vec::with_capacity(maps.len());
        let mut delta: f64 = 0.0;
        for (i, m) in maps.iter().enumerate() {
            if m.dim() != dim {
                return Err(CoreError::DimensionMismatch {
                    expected: dim,
                    got: m.dim(),
                });
            }
            if m.entries().iter().any(|x| !x.is_finite()) {
                return Err(CoreError::NonFiniteEntries);
            }
            let det = m.det();
            let scale = m.max_abs_entry().max(f64::MIN_POSITIVE);
            if math::abs(det) <= SINGULAR_REL_TOL * math::powi(scale, dim as u32) {
                return Err(CoreError::SingularMatrix { index: i + 1, det });
            }
            let norm = m.op_norm();
            delta = delta.max(norm);
            dets.push(det);
            norms.push(norm);
        }
        if delta >= 1.0 {
            return Err(CoreError::NotContracting { delta });
        }
        Ok(Self {
            dim,
            maps,
            dets,
            norms,
            delta,
        })
    }

    /// Shorthand for `m` copies of `scale * I_d` (conformal demo systems).
    pub fn uniform_scalar(dim: usize, m: usize, scale: f64) -> Result<Self> {
        Self::new(
            (0..m)
                .map(|_| Matrix::identity(dim).scaled(scale))
                .collect(),
        )
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.maps.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Max operator norm over the family.
    #[inline]
    pub fn delta(&self) -> f64 {
        self.delta
    }

    #[inline]
    pub fn maps(&self) -> &[Matrix] {
        &self.maps
    }

    /// Matrix for a 1-based letter.
    #[inline]
    pub fn map_for(&self, letter: u8) -> &Matrix {
        &self.maps[letter as usize - 1]
    }

    #[inline]
    pub fn det_for(&self, letter: u8) -> f64 {
        self.dets[letter as usize - 1]
    }

    #[inline]
    pub fn dets(&self) -> &[f64] {
        &self.dets
    }

    #[inline]
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn check_letter(&self, letter: u8) -> Result<()> {
        if letter == 0 || letter as usize > self.maps.len() {
            return Err(CoreError::LetterOutOfRange {
                letter,
                alphabet: self.maps.len(),
            });
        }
        Ok(())
    }

    /// Max commutator operator norm over all pairs, with the offending pair.
    pub fn max_commutator(&self) -> (f64, usize, usize) {
        let mut worst = (0.0, 0, 0);
        for i in 0..self.maps.len() {
            for j in i + 1..self.maps.len() {
                let ab = self.maps[i].mul(&self.maps[j]);
                let ba = self.maps[j].mul(&self.maps[i]);
                let norm = ab.sub(&ba).op_norm();
                if norm > worst.0 {
                    worst = (norm, i + 1, j + 1);
                }
            }
        }
        worst
    }
}

// ---------------------------------------------------------------------------
// Word
// ---------------------------------------------------------------------------

/// A finite word over the alphabet `{1, ..., m}`; the empty word is allowed.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Word(Vec<u8>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    /// Letters are 1-based; zero is rejected here, the upper range is checked
    /// against a concrete tuple at use sites.
    pub fn new(letters: Vec<u8>) -> Result<Self> {
        if letters.contains(&0) {
            return Err(CoreError::LetterOutOfRange {
                letter: 0,
                alphabet: 0,
            });
        }
        Ok(Word(letters))
    }

    /// Parses compact digit notation, e.g. `"1213"`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut letters = Vec::with_capacity(text.len());
        for ch in text.chars() {
            let digit = ch.to_digit(10).ok_or_else(|| {
                CoreError::InvalidArgument(format!("invalid word character {ch:?}"))
            })? as u8;
            if digit == 0 {
                return Err(CoreError::LetterOutOfRange {
                    letter: 0,
                    alphabet: 0,
                });
            }
            letters.push(digit);
        }
        Ok(Word(letters))
    }

    #[inline]
    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut letters = self.0.clone();
        letters.extend_from_slice(&other.0);
        Word(letters)
    }

    pub fn push(&mut self, letter: u8) {
        debug_assert!(letter > 0);
        self.0.push(letter);
    }

    pub fn starts_with(&self, prefix: &Word) -> bool {
        self.0.starts_with(&prefix.0)
    }
}

impl core::fmt::Display for Word {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        if self.0.is_empty() {
            return write!(f, "(empty)");
        }
        if self.0.iter().all(|&l| l <= 9) {
            for l in &self.0 {
                write!(f, "{l}")?;
            }
            Ok(())
        } else {
            for (i, l) in self.0.iter().enumerate() {
                if i > 0 {
                    write!(f, ".")?;
                }
                write!(f, "{l}")?;
            }
            Ok(())
        }
    }
}

impl core::fmt::Debug for Word {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "Word({self})")
    }
}

/// Ordered product `T_I = T_{i_1} ... T_{i_n}`; the empty word gives the identity.
pub fn word_product(tuple: &MapTuple, word: &Word) -> Result<Matrix> {
    let mut acc = Matrix::identity(tuple.dim());
    let mut tmp = Matrix::zeros(tuple.dim());
    for &letter in word.letters() {
        tuple.check_letter(letter)?;
        acc.mul_into(tuple.map_for(letter), &mut tmp);
        core::mem::swap(&mut acc, &mut tmp);
    }
    Ok(acc)
}

/// The common initial segment of two words.
pub fn longest_common_prefix(x: &Word, y: &Word) -> Word {
    let n = x
        .letters()
        .iter()
        .zip(y.letters())
        .take_while(|(a, b)| a == b)
        .count();
    Word(x.letters()[..n].to_vec())
}

/// Drops the first `n` letters (the shift map applied `n` times).
pub fn shift_word(x: &Word, n: usize) -> Result<Word> {
    if n > x.len() {
        return Err(CoreError::ShiftOutOfRange {
            shift: n,
            len: x.len(),
        });
    }
    Ok(Word(x.letters()[n..].to_vec()))
}

// ---------------------------------------------------------------------------
// Word-tree enumeration with cached prefix products
// ---------------------------------------------------------------------------

/// Visitor control for [`walk_product_tree`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Walk {
    /// Descend into extensions of the current word.
    Continue,
    /// Skip all extensions of the current word.
    Prune,
    /// Abort the whole walk.
    Halt,
}

/// Depth-first pre-order walk over all non-empty words of length up to
/// `max_depth` that extend `prefix`, carrying the matrix product down the
/// tree, so each node costs one matrix multiplication.
///
/// The visitor receives the letters (including the prefix) and `T_I`.
/// Returns `false` if the walk was halted.
pub fn walk_product_tree(
    tuple: &MapTuple,
    prefix: &Word,
    max_depth: usize,
    visit: &mut dyn FnMut(&[u8], &Matrix) -> Walk,
) -> Result<bool> {
    let root = word_product(tuple, prefix)?;
    if prefix.len() >= max_depth {
        return Ok(true);
    }
    let levels = max_depth - prefix.len();
    let mut stack: Vec<Matrix> = (0..=levels).map(|_| Matrix::zeros(tuple.dim())).collect();
    stack[0] = root;
    let mut letters = prefix.letters().to_vec();
    let finished = descend(tuple, max_depth, &mut letters, &mut stack, 0, visit);
    Ok(finished)
}

fn descend(
    tuple: &MapTuple,
    max_depth: usize,
    letters: &mut Vec<u8>,
    stack: &mut [Matrix],
    level: usize,
    visit: &mut dyn FnMut(&[u8], &Matrix) -> Walk,
) -> bool {
    let m = tuple.len() as u8;
    for letter in 1..=m {
        let (parents, children) = stack.split_at_mut(level + 1);
        parents[level].mul_into(tuple.map_for(letter), &mut children[0]);
        letters.push(letter);
        let action = visit(letters, &stack[level + 1]);
        let keep_going = match action {
            Walk::Halt => false,
            Walk::Prune => true,
            Walk::Continue => {
                if letters.len() < max_depth {
                    descend(tuple, max_depth, letters, stack, level + 1, visit)
                } else {
                    true
                }
            }
        };
        letters.pop();
        if !keep_going {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn word_product_empty_is_identity() {
        let t = MapTuple::uniform_scalar(2, 3, 0.45).unwrap();
        let p = word_product(&t, &Word::empty()).unwrap();
        assert_eq!(p, Matrix::identity(2));
    }

    #[test]
    fn word_product_diagonal_case() {
        let t = MapTuple::uniform_scalar(2, 2, 0.45).unwrap();
        let p = word_product(&t, &Word::parse("12").unwrap()).unwrap();
        approx(p.get(0, 0), 0.2025, 1e-15);
        approx(p.get(1, 1), 0.2025, 1e-15);
        approx(p.get(0, 1), 0.0, 1e-15);
    }

    #[test]
    fn word_product_two_path_oracle() {
        // Left-to-right fold vs the cached-prefix walker must agree.
        let t = MapTuple::new(vec![
            Matrix::diagonal(&[0.5, 1.0 / 3.0]),
            Matrix::rotation_scaled(core::f64::consts::FRAC_PI_2, 0.4),
        ])
        .unwrap();
        let w = Word::parse("21").unwrap();
        let direct = word_product(&t, &w).unwrap();
        let mut cached: Option<Matrix> = None;
        walk_product_tree(&t, &Word::empty(), 2, &mut |letters, product| {
            if letters == w.letters() {
                cached = Some(product.clone());
            }
            Walk::Continue
        })
        .unwrap();
        let cached = cached.unwrap();
        for (a, b) in direct.entries().iter().zip(cached.entries()) {
            approx(*a, *b, 1e-14);
        }
    }

    #[test]
    fn word_product_rejects_bad_letter() {
        let t = MapTuple::uniform_scalar(1, 2, 0.3).unwrap();
        let w = Word::new(vec![1, 3]).unwrap();
        assert!(matches!(
            word_product(&t, &w),
            Err(CoreError::LetterOutOfRange { letter: 3, .. })
        ));
    }

    #[test]
    fn singular_values_identity_and_diagonal() {
        let svs = singular_values(&Matrix::identity(3));
        assert_eq!(svs, vec![1.0, 1.0, 1.0]);
        let svs = singular_values(&Matrix::diagonal(&[0.5, 1.0 / 3.0]));
        approx(svs[0], 0.5, 1e-15);
        approx(svs[1], 1.0 / 3.0, 1e-15);
    }

    #[test]
    fn singular_values_match_mtm_eigen_oracle_at_condition_1e3() {
        // Oracle: Jacobi eigen-solve of the explicit Gram matrix M^T M.
        let mut rng = rng::seeded(42);
        for _ in 0..50 {
            let q1 = rng::uniform_in(&mut rng, 0.0, core::f64::consts::PI);
            let q2 = rng::uniform_in(&mut rng, 0.0, core::f64::consts::PI);
            let r1 = Matrix::rotation_scaled(q1, 1.0);
            let r2 = Matrix::rotation_scaled(q2, 1.0);
            let sigma = Matrix::diagonal(&[1.0, 1e-3]);
            let m = r1.mul(&sigma).mul(&r2);
            let got = singular_values(&m);
            let gram = m.transpose().mul(&m);
            let (eigs, _) = sym_eigen(&gram);
            for (g, e) in got.iter().zip(eigs.iter()) {
                approx(*g, e.max(0.0).sqrt(), 1e-9);
            }
        }
    }

    #[test]
    fn singular_value_product_is_determinant() {
        let mut rng = rng::seeded(7);
        for dim in 1..=4 {
            for _ in 0..200 {
                let data: Vec<f64> = (0..dim * dim)
                    .map(|_| rng::uniform_in(&mut rng, -0.5, 0.5))
                    .collect();
                let m = Matrix::new(dim, data).unwrap();
                let svs = singular_values(&m);
                let prod: f64 = svs.iter().product();
                let det = m.det().abs();
                assert!(
                    (prod - det).abs() <= 1e-10 * det.max(1e-30),
                    "dim {dim}: {prod} vs {det}"
                );
            }
        }
    }

    #[test]
    fn zero_matrix_has_zero_singular_values() {
        assert_eq!(singular_values(&Matrix::zeros(3)), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn lcp_cases() {
        let x = Word::parse("112").unwrap();
        let y = Word::parse("113").unwrap();
        assert_eq!(longest_common_prefix(&x, &y), Word::parse("11").unwrap());
        let a = Word::parse("1").unwrap();
        let b = Word::parse("2").unwrap();
        assert!(longest_common_prefix(&a, &b).is_empty());
        assert_eq!(longest_common_prefix(&x, &x), x);
    }

    #[test]
    fn shift_cases() {
        let w = Word::parse("123").unwrap();
        assert_eq!(shift_word(&w, 1).unwrap(), Word::parse("23").unwrap());
        assert_eq!(shift_word(&w, 0).unwrap(), w);
        assert!(shift_word(&w, 3).unwrap().is_empty());
        assert!(matches!(
            shift_word(&w, 4),
            Err(CoreError::ShiftOutOfRange { .. })
        ));
    }

    #[test]
    fn tuple_rejects_singular_and_expanding() {
        let singular = Matrix::new(2, vec![0.2, 0.1, 0.4, 0.2]).unwrap();
        assert!(matches!(
            MapTuple::new(vec![singular]),
            Err(CoreError::SingularMatrix { index: 1, .. })
        ));
        let big = Matrix::identity(2).scaled(1.2);
        assert!(matches!(
            MapTuple::new(vec![big]),
            Err(CoreError::NotContracting { .. })
        ));
    }

    #[test]
    fn delta_matches_recomputed_norms() {
        let t = MapTuple::new(vec![
            Matrix::diagonal(&[0.5, 1.0 / 3.0]),
            Matrix::rotation_scaled(1.0, 0.4),
        ])
        .unwrap();
        let max_norm = t.maps().iter().map(|m| m.op_norm()).fold(0.0_f64, f64::max);
        approx(t.delta(), max_norm, 1e-10);
    }

    #[test]
    fn solve_inverts_small_systems() {
        let a = Matrix::new(2, vec![2.0, 1.0, 1.0, 3.0]).unwrap();
        let x = solve(&a, &[5.0, 10.0]).unwrap();
        approx(2.0 * x[0] + x[1], 5.0, 1e-12);
        approx(x[0] + 3.0 * x[1], 10.0, 1e-12);
    }

    #[test]
    fn walk_visits_every_word_once() {
        let t = MapTuple::uniform_scalar(1, 3, 0.4).unwrap();
        let mut seen = alloc::vec::Vec::new();
        walk_product_tree(&t, &Word::empty(), 3, &mut |letters, _| {
            seen.push(letters.to_vec());
            Walk::Continue
        })
        .unwrap();
        assert_eq!(seen.len(), 3 + 9 + 27);
        let mut dedup = seen.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), seen.len());
    }
}
