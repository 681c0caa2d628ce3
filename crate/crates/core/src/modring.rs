//! Centered arithmetic and linear algebra over the prime field Z_q.
//!
//! Every value is an arbitrary-precision integer kept in the centered
//! residue range `Z ∩ [-q/2, q/2)`. Elimination routines pick the first
//! nonzero pivot in scan order, so ranks, basis completions and inverses
//! are bit-reproducible.

use std::fmt;
use std::sync::Arc;

use num_bigint::{BigInt, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

const MILLER_RABIN_ROUNDS: usize = 64;

/// `a mod q := a - floor((a + q/2) / q) * q`, evaluated literally.
///
/// This is the definitional form; [`Modulus::reduce`] is the fast path and
/// must agree with it everywhere.
pub fn cmod(a: &BigInt, q: &BigInt) -> BigInt {
    let two = BigInt::from(2);
    // floor((a + q/2)/q) == floor((2a + q) / 2q)
    let k = (a * &two + q).div_floor(&(q * &two));
    a - k * q
}

/// A prime modulus with cached centering threshold.
#[derive(Clone, PartialEq, Eq)]
pub struct Modulus {
    q: BigInt,
    // ceil(q/2): residues r in [0, q) with r >= upper map to r - q.
    upper: BigInt,
}

impl fmt::Debug for Modulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Modulus({})", self.q)
    }
}

impl Modulus {
    /// Builds a modulus after checking `q >= 3` and (probable) primality.
    pub fn new(q: BigInt) -> Result<Arc<Self>> {
        if q < BigInt::from(3) {
            return Err(Error::InvalidModulus(format!("q = {q} must be at least 3")));
        }
        if !is_probable_prime(&q, MILLER_RABIN_ROUNDS) {
            return Err(Error::InvalidModulus(format!("q = {q} is not prime")));
        }
        Ok(Arc::new(Self::new_unchecked(q)))
    }

    pub fn from_u64(q: u64) -> Result<Arc<Self>> {
        Self::new(BigInt::from(q))
    }

    fn new_unchecked(q: BigInt) -> Self {
        let upper = (&q + 1u32) >> 1;
        Self { q, upper }
    }

    /// `2^109 - 31`.
    pub fn benchmark_prime() -> BigInt {
        (BigInt::one() << 109) - 31
    }

    pub fn q(&self) -> &BigInt {
        &self.q
    }

    /// Centered reduction of `a`.
    pub fn reduce(&self, a: &BigInt) -> BigInt {
        let r = a.mod_floor(&self.q);
        if r >= self.upper {
            r - &self.q
        } else {
            r
        }
    }

    pub fn reduce_i64(&self, a: i64) -> BigInt {
        self.reduce(&BigInt::from(a))
    }

    pub fn contains(&self, a: &BigInt) -> bool {
        let lo = -(&self.q - &self.upper);
        *a >= lo && *a < self.upper
    }

    /// Multiplicative inverse via the extended Euclidean algorithm.
    pub fn inverse(&self, a: &BigInt) -> Option<BigInt> {
        let a = self.reduce(a);
        if a.is_zero() {
            return None;
        }
        let eg = a.extended_gcd(&self.q);
        if !eg.gcd.abs().is_one() {
            return None;
        }
        Some(self.reduce(&eg.x))
    }

    /// Uniform sample from the centered range.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> BigInt {
        let lo = -(&self.q - &self.upper);
        rng.gen_bigint_range(&lo, &self.upper)
    }

    /// Centered value as `f64` (lossy beyond 53 bits).
    pub fn as_f64(&self, a: &BigInt) -> f64 {
        self.reduce(a).to_f64().unwrap_or(f64::NAN)
    }
}

/// Miller–Rabin with bases drawn from a fixed-seed stream.
pub fn is_probable_prime(n: &BigInt, rounds: usize) -> bool {
    let two = BigInt::from(2);
    if *n < two {
        return false;
    }
    for small in [2u32, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let s = BigInt::from(small);
        if *n == s {
            return true;
        }
        if (n % &s).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let mut d = n_minus_1.clone();
    let mut s = 0u32;
    while d.is_even() {
        d >>= 1;
        s += 1;
    }
    let mut rng = ChaCha20Rng::seed_from_u64(0x6d69_6c6c_6572);
    'witness: for _ in 0..rounds {
        let a = rng.gen_bigint_range(&two, &n_minus_1);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Wrap-around check: for centered `a`, `b`, if `|a| + |cmod(a-b)| < q/2`
/// then the plain difference equals its centered reduction in magnitude.
///
/// Returns `None` when the hypothesis fails, otherwise whether the
/// conclusion held.
pub fn centered_difference_holds(modulus: &Modulus, a: &BigInt, b: &BigInt) -> Option<bool> {
    let diff = a - b;
    let red = modulus.reduce(&diff);
    // |a| + |red| < q/2  <=>  2(|a| + |red|) < q
    if (a.abs() + red.abs()) * 2 >= *modulus.q() {
        return None;
    }
    Some(diff.abs() == red.abs())
}

/// Dense row-major matrix over Z_q with centered entries.
#[derive(Clone, PartialEq, Eq)]
pub struct ModMatrix {
    rows: usize,
    cols: usize,
    modulus: Arc<Modulus>,
    data: Vec<BigInt>,
}

impl fmt::Debug for ModMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ModMatrix {}x{} mod {}", self.rows, self.cols, self.modulus.q)?;
        for r in 0..self.rows {
            let row: Vec<String> = self.row_slice(r).iter().map(|v| v.to_string()).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl ModMatrix {
    pub fn zeros(rows: usize, cols: usize, modulus: &Arc<Modulus>) -> Self {
        Self {
            rows,
            cols,
            modulus: Arc::clone(modulus),
            data: vec![BigInt::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize, modulus: &Arc<Modulus>) -> Self {
        let mut m = Self::zeros(n, n, modulus);
        for i in 0..n {
            m.data[i * n + i] = BigInt::one();
        }
        m
    }

    /// Reduces every entry into the centered range.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<BigInt>, modulus: &Arc<Modulus>) -> Self {
        assert_eq!(rows * cols, data.len(), "ModMatrix::from_vec: wrong entry count");
        let data = data.iter().map(|v| modulus.reduce(v)).collect();
        Self {
            rows,
            cols,
            modulus: Arc::clone(modulus),
            data,
        }
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        modulus: &Arc<Modulus>,
        mut f: impl FnMut(usize, usize) -> BigInt,
    ) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(modulus.reduce(&f(r, c)));
            }
        }
        Self {
            rows,
            cols,
            modulus: Arc::clone(modulus),
            data,
        }
    }

    pub fn from_i64_rows(rows: &[&[i64]], modulus: &Arc<Modulus>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        Self::from_fn(r, c, modulus, |i, j| BigInt::from(rows[i][j]))
    }

    pub fn column_vector(values: Vec<BigInt>, modulus: &Arc<Modulus>) -> Self {
        let n = values.len();
        Self::from_vec(n, 1, values, modulus)
    }

    pub fn row_vector(values: Vec<BigInt>, modulus: &Arc<Modulus>) -> Self {
        let n = values.len();
        Self::from_vec(1, n, values, modulus)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn modulus(&self) -> &Arc<Modulus> {
        &self.modulus
    }

    pub fn get(&self, r: usize, c: usize) -> &BigInt {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: &BigInt) {
        self.data[r * self.cols + c] = self.modulus.reduce(value);
    }

    pub fn entries(&self) -> &[BigInt] {
        &self.data
    }

    pub fn into_entries(self) -> Vec<BigInt> {
        self.data
    }

    pub fn row_slice(&self, r: usize) -> &[BigInt] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Zero::is_zero)
    }

    fn check_modulus(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.modulus, &other.modulus) || self.modulus == other.modulus {
            Ok(())
        } else {
            Err(Error::ModulusMismatch)
        }
    }

    fn check_same_shape(&self, other: &Self, context: &'static str) -> Result<()> {
        self.check_modulus(other)?;
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.shape(),
                found: other.shape(),
            });
        }
        Ok(())
    }

    /// `cmod(self * rhs)` with exact intermediate products.
    pub fn mul(&self, rhs: &Self) -> Result<Self> {
        self.check_modulus(rhs)?;
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch {
                context: "mat_mul_mod",
                expected: (self.cols, rhs.cols),
                found: rhs.shape(),
            });
        }
        let mut acc = vec![BigInt::zero(); self.rows * rhs.cols];
        for i in 0..self.rows {
            let out = &mut acc[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = &self.data[i * self.cols + k];
                if a.is_zero() {
                    continue;
                }
                for (o, b) in out.iter_mut().zip(rhs.row_slice(k)) {
                    *o += a * b;
                }
            }
        }
        for v in acc.iter_mut() {
            *v = self.modulus.reduce(v);
        }
        Ok(Self {
            rows: self.rows,
            cols: rhs.cols,
            modulus: Arc::clone(&self.modulus),
            data: acc,
        })
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.check_same_shape(rhs, "add")?;
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| self.modulus.reduce(&(a + b)))
            .collect();
        Ok(Self { data, ..self.clone_shape() })
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.check_same_shape(rhs, "sub")?;
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| self.modulus.reduce(&(a - b)))
            .collect();
        Ok(Self { data, ..self.clone_shape() })
    }

    pub fn neg(&self) -> Self {
        let data = self.data.iter().map(|a| self.modulus.reduce(&-a)).collect();
        Self { data, ..self.clone_shape() }
    }

    pub fn scale(&self, k: &BigInt) -> Self {
        let data = self.data.iter().map(|a| self.modulus.reduce(&(a * k))).collect();
        Self { data, ..self.clone_shape() }
    }

    fn clone_shape(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            modulus: Arc::clone(&self.modulus),
            data: Vec::new(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.get(r, c).clone());
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            modulus: Arc::clone(&self.modulus),
            data,
        }
    }

    /// Rows `range` as a new matrix.
    pub fn row_range(&self, range: std::ops::Range<usize>) -> Self {
        let data = self.data[range.start * self.cols..range.end * self.cols].to_vec();
        Self {
            rows: range.len(),
            cols: self.cols,
            modulus: Arc::clone(&self.modulus),
            data,
        }
    }

    pub fn row(&self, r: usize) -> Self {
        self.row_range(r..r + 1)
    }

    /// Columns `range` as a new matrix.
    pub fn col_range(&self, range: std::ops::Range<usize>) -> Self {
        let mut data = Vec::with_capacity(self.rows * range.len());
        for r in 0..self.rows {
            data.extend_from_slice(&self.row_slice(r)[range.clone()]);
        }
        Self {
            rows: self.rows,
            cols: range.len(),
            modulus: Arc::clone(&self.modulus),
            data,
        }
    }

    pub fn column(&self, c: usize) -> Self {
        self.col_range(c..c + 1)
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &r in indices {
            data.extend_from_slice(self.row_slice(r));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            modulus: Arc::clone(&self.modulus),
            data,
        }
    }

    /// `[self; below]`.
    pub fn vstack(&self, below: &Self) -> Result<Self> {
        self.check_modulus(below)?;
        if self.cols != below.cols && self.rows > 0 && below.rows > 0 {
            return Err(Error::DimensionMismatch {
                context: "vstack",
                expected: (below.rows, self.cols),
                found: below.shape(),
            });
        }
        let cols = if self.rows == 0 { below.cols } else { self.cols };
        let mut data = self.data.clone();
        data.extend_from_slice(&below.data);
        Ok(Self {
            rows: self.rows + below.rows,
            cols,
            modulus: Arc::clone(&self.modulus),
            data,
        })
    }

    /// `[self, right]`.
    pub fn hstack(&self, right: &Self) -> Result<Self> {
        self.check_modulus(right)?;
        if self.rows != right.rows {
            return Err(Error::DimensionMismatch {
                context: "hstack",
                expected: (self.rows, right.cols),
                found: right.shape(),
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + right.data.len());
        for r in 0..self.rows {
            data.extend_from_slice(self.row_slice(r));
            data.extend_from_slice(right.row_slice(r));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols + right.cols,
            modulus: Arc::clone(&self.modulus),
            data,
        })
    }

    /// Largest centered magnitude (the infinity norm for vectors).
    pub fn max_abs(&self) -> BigInt {
        self.data.iter().map(|v| v.abs()).max().unwrap_or_default()
    }

    /// Induced infinity norm (max absolute row sum) of the centered values.
    pub fn inf_norm(&self) -> BigInt {
        (0..self.rows)
            .map(|r| self.row_slice(r).iter().map(|v| v.abs()).sum::<BigInt>())
            .max()
            .unwrap_or_default()
    }

    /// Row echelon reduction in place; returns the pivot columns.
    ///
    /// With `full`, entries above each pivot are eliminated as well
    /// (reduced row echelon form).
    fn echelon(&mut self, full: bool) -> Vec<usize> {
        let q = Arc::clone(&self.modulus);
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..self.cols {
            if row == self.rows {
                break;
            }
            let Some(p) = (row..self.rows).find(|&r| !self.get(r, col).is_zero()) else {
                continue;
            };
            if p != row {
                for c in 0..self.cols {
                    self.data.swap(p * self.cols + c, row * self.cols + c);
                }
            }
            let inv = q.inverse(self.get(row, col)).expect("nonzero element of a field");
            for c in 0..self.cols {
                let v = q.reduce(&(self.get(row, c) * &inv));
                self.data[row * self.cols + c] = v;
            }
            let targets: Vec<usize> = if full {
                (0..self.rows).filter(|&r| r != row).collect()
            } else {
                (row + 1..self.rows).collect()
            };
            for r in targets {
                let factor = self.get(r, col).clone();
                if factor.is_zero() {
                    continue;
                }
                for c in 0..self.cols {
                    let v = q.reduce(&(self.get(r, c) - &factor * self.get(row, c)));
                    self.data[r * self.cols + c] = v;
                }
            }
            pivots.push(col);
            row += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        self.clone().echelon(false).len()
    }

    /// Gauss–Jordan inverse.
    pub fn inverse(&self) -> Result<Self> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch {
                context: "inverse_mod",
                expected: (self.rows, self.rows),
                found: self.shape(),
            });
        }
        let n = self.rows;
        let mut aug = self.hstack(&Self::identity(n, &self.modulus))?;
        let pivots = aug.echelon(true);
        if pivots.len() < n || pivots.iter().enumerate().any(|(i, &c)| i != c) {
            return Err(Error::SingularMatrix);
        }
        Ok(aug.col_range(n..2 * n))
    }

    /// Rows `e_i` for every non-pivot column of `self`, ascending.
    ///
    /// `self` must have full row rank; the result stacks with it to an
    /// invertible square matrix.
    pub fn complete_basis(&self) -> Result<Self> {
        let mut work = self.clone();
        let pivots = work.echelon(false);
        if pivots.len() < self.rows {
            return Err(Error::NotFullRowRank {
                expected: self.rows,
                rank: pivots.len(),
            });
        }
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        let mut out = Self::zeros(free.len(), self.cols, &self.modulus);
        for (r, &c) in free.iter().enumerate() {
            out.data[r * self.cols + c] = BigInt::one();
        }
        Ok(out)
    }

    /// Right inverse of a nonzero row vector: `inv(s_k) e_k` for the first
    /// nonzero entry `s_k`.
    pub fn right_inverse_row(&self) -> Result<Self> {
        if self.rows != 1 {
            return Err(Error::DimensionMismatch {
                context: "right_inverse_row",
                expected: (1, self.cols),
                found: self.shape(),
            });
        }
        let k = self.data.iter().position(|v| !v.is_zero()).ok_or(Error::ZeroRow)?;
        let inv = self.modulus.inverse(&self.data[k]).ok_or(Error::ZeroRow)?;
        let mut out = Self::zeros(self.cols, 1, &self.modulus);
        out.data[k] = inv;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(q: u64) -> Arc<Modulus> {
        Modulus::from_u64(q).unwrap()
    }

    fn b(v: i64) -> BigInt {
        BigInt::from(v)
    }

    #[test]
    fn cmod_examples() {
        assert_eq!(cmod(&b(7), &b(5)), b(2));
        assert_eq!(cmod(&b(3), &b(5)), b(-2));
        // -q/2 rounded down is the smallest representative
        assert_eq!(cmod(&b(-3), &b(5)), b(-3) + 5);
        assert_eq!(cmod(&b(-2), &b(5)), b(-2));
        assert_eq!(cmod(&b(-2), &b(4)), b(-2));
        assert_eq!(cmod(&b(2), &b(4)), b(-2));
    }

    #[test]
    fn modulus_rejects_composites_and_small() {
        assert!(Modulus::from_u64(2).is_err());
        assert!(Modulus::from_u64(9).is_err());
        assert!(Modulus::from_u64(561).is_err());
        assert!(Modulus::from_u64(101).is_ok());
        assert!(Modulus::new(Modulus::benchmark_prime()).is_ok());
        assert!(Modulus::new((BigInt::one() << 109) - 1).is_err());
    }

    #[test]
    fn mat_mul_examples() {
        let q = m(7);
        let a = ModMatrix::from_i64_rows(&[&[2, 3]], &q);
        let bm = ModMatrix::from_i64_rows(&[&[4], &[5]], &q);
        assert_eq!(a.mul(&bm).unwrap(), ModMatrix::from_i64_rows(&[&[2]], &q));
        let i = ModMatrix::identity(2, &q);
        let x = ModMatrix::from_i64_rows(&[&[1, -3], &[2, 0]], &q);
        assert_eq!(i.mul(&x).unwrap(), x);
        assert!(x.mul(&ModMatrix::zeros(2, 3, &q)).unwrap().is_zero());
        assert!(matches!(a.mul(&a), Err(Error::DimensionMismatch { .. })));
        let other = ModMatrix::identity(2, &m(11));
        assert!(matches!(i.mul(&other), Err(Error::ModulusMismatch)));
    }

    #[test]
    fn inverse_examples() {
        let q5 = m(5);
        assert_eq!(ModMatrix::identity(3, &q5).inverse().unwrap(), ModMatrix::identity(3, &q5));
        let u = ModMatrix::from_i64_rows(&[&[1, 1], &[0, 1]], &q5);
        assert_eq!(u.inverse().unwrap(), ModMatrix::from_i64_rows(&[&[1, -1], &[0, 1]], &q5));
        let q7 = m(7);
        let two = ModMatrix::from_i64_rows(&[&[2]], &q7);
        assert_eq!(two.inverse().unwrap(), ModMatrix::from_i64_rows(&[&[-3]], &q7));
        let sing = ModMatrix::from_i64_rows(&[&[1, 2], &[2, 4]], &q5);
        assert!(matches!(sing.inverse(), Err(Error::SingularMatrix)));
    }

    #[test]
    fn scalar_inverse_matches_brute_force() {
        let q = m(7);
        for a in 1..7i64 {
            let inv = q.inverse(&b(a)).unwrap();
            let brute = (1..7i64).find(|x| (a * x) % 7 == 1).unwrap();
            assert_eq!(inv, q.reduce_i64(brute));
        }
        assert!(q.inverse(&b(0)).is_none());
        assert!(q.inverse(&b(14)).is_none());
    }

    #[test]
    fn rank_examples() {
        let q = m(5);
        assert_eq!(ModMatrix::zeros(3, 4, &q).rank(), 0);
        assert_eq!(ModMatrix::identity(4, &q).rank(), 4);
        assert_eq!(ModMatrix::from_i64_rows(&[&[1, 2], &[2, 4]], &q).rank(), 1);
    }

    #[test]
    fn complete_basis_examples() {
        let q7 = m(7);
        let t2 = ModMatrix::from_i64_rows(&[&[0, 0, 1]], &q7);
        assert_eq!(
            t2.complete_basis().unwrap(),
            ModMatrix::from_i64_rows(&[&[1, 0, 0], &[0, 1, 0]], &q7)
        );
        let id = ModMatrix::identity(3, &q7);
        let t1 = id.complete_basis().unwrap();
        assert_eq!(t1.shape(), (0, 3));

        let q5 = m(5);
        let t2 = ModMatrix::from_i64_rows(&[&[1, 1, 0]], &q5);
        let t1 = t2.complete_basis().unwrap();
        assert_eq!(t1, ModMatrix::from_i64_rows(&[&[0, 1, 0], &[0, 0, 1]], &q5));
        assert_eq!(t1.vstack(&t2).unwrap().rank(), 3);

        let deficient = ModMatrix::from_i64_rows(&[&[1, 2, 0], &[2, 4, 0]], &q5);
        assert!(matches!(
            deficient.complete_basis(),
            Err(Error::NotFullRowRank { expected: 2, rank: 1 })
        ));
    }

    #[test]
    fn right_inverse_examples() {
        let q5 = m(5);
        let e1 = ModMatrix::from_i64_rows(&[&[1, 0, 0]], &q5);
        assert_eq!(e1.right_inverse_row().unwrap(), ModMatrix::from_i64_rows(&[&[1], &[0], &[0]], &q5));
        let s = ModMatrix::from_i64_rows(&[&[2, 0]], &q5);
        // 2 * 3 = 6 = 1 mod 5; centered 3 is -2
        assert_eq!(s.right_inverse_row().unwrap(), ModMatrix::from_i64_rows(&[&[3], &[0]], &q5));
        let q7 = m(7);
        let s = ModMatrix::from_i64_rows(&[&[0, 3, 0]], &q7);
        assert_eq!(s.right_inverse_row().unwrap(), ModMatrix::from_i64_rows(&[&[0], &[5], &[0]], &q7));
        assert!(matches!(ModMatrix::zeros(1, 3, &q7).right_inverse_row(), Err(Error::ZeroRow)));
    }

    fn arb_matrix(q: u64, n: usize) -> impl Strategy<Value = Vec<i64>> {
        proptest::collection::vec(-(q as i64)..(q as i64), n * n)
    }

    proptest! {
        #[test]
        fn reduce_agrees_with_definition(a in any::<i64>(), q in prop::sample::select(vec![3u64, 5, 7, 101, 65537])) {
            let md = m(q);
            let a = b(a);
            let r = md.reduce(&a);
            prop_assert_eq!(&r, &cmod(&a, md.q()));
            prop_assert!(md.contains(&r));
        }

        #[test]
        fn reduction_is_ring_homomorphism(a in any::<i64>(), c in any::<i64>()) {
            let md = m(101);
            let (a, c) = (b(a), b(c));
            prop_assert_eq!(md.reduce(&(&a + &c)), md.reduce(&(md.reduce(&a) + md.reduce(&c))));
            prop_assert_eq!(md.reduce(&(&a * &c)), md.reduce(&(md.reduce(&a) * md.reduce(&c))));
        }

        #[test]
        fn centered_difference_property(a in -50i64..51, c in -50i64..51) {
            let md = m(101);
            if let Some(ok) = centered_difference_holds(&md, &b(a), &b(c)) {
                prop_assert!(ok);
            }
        }

        #[test]
        fn inverse_roundtrip(entries in arb_matrix(101, 4)) {
            let q = m(101);
            let a = ModMatrix::from_vec(4, 4, entries.into_iter().map(BigInt::from).collect(), &q);
            match a.inverse() {
                Ok(inv) => {
                    prop_assert_eq!(a.mul(&inv).unwrap(), ModMatrix::identity(4, &q));
                    prop_assert_eq!(inv.mul(&a).unwrap(), ModMatrix::identity(4, &q));
                }
                Err(Error::SingularMatrix) => prop_assert!(a.rank() < 4),
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }

        #[test]
        fn completion_is_invertible(entries in proptest::collection::vec(-6i64..7, 2 * 5)) {
            let q = m(13);
            let t2 = ModMatrix::from_vec(2, 5, entries.into_iter().map(BigInt::from).collect(), &q);
            prop_assume!(t2.rank() == 2);
            let t1 = t2.complete_basis().unwrap();
            prop_assert_eq!(t1.vstack(&t2).unwrap().rank(), 5);
        }

        #[test]
        fn right_inverse_properties(entries in proptest::collection::vec(-50i64..51, 5)) {
            let q = m(101);
            let s = ModMatrix::row_vector(entries.into_iter().map(BigInt::from).collect(), &q);
            prop_assume!(!s.is_zero());
            let sd = s.right_inverse_row().unwrap();
            prop_assert_eq!(s.mul(&sd).unwrap(), ModMatrix::identity(1, &q));
            let proj = ModMatrix::identity(5, &q).sub(&sd.mul(&s).unwrap()).unwrap();
            prop_assert_eq!(proj.mul(&proj).unwrap(), proj);
        }
    }
}
