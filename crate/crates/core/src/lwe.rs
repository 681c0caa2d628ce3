//! Additively homomorphic LWE encryption over Z_q.
//!
//! A standard ciphertext of an `h`-vector `m` is `[m + b, A]` with
//! `b = A sk + e`; decryption is `c [1; -sk]`. Modified ciphertexts carry
//! one extra column and decrypt with `c [1; -sk; 1]`.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use rand::{CryptoRng, Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::modring::{ModMatrix, Modulus};

/// Randomness for key generation and encryption.
///
/// The default source is seeded from OS entropy. [`LweRng::insecure_test`]
/// gives a reproducible stream and must not protect real data.
#[derive(Clone)]
pub struct LweRng {
    inner: ChaCha20Rng,
    seeded: bool,
}

impl LweRng {
    pub fn from_entropy() -> Self {
        Self {
            inner: ChaCha20Rng::from_entropy(),
            seeded: false,
        }
    }

    pub fn insecure_test(seed: u64) -> Self {
        Self {
            inner: ChaCha20Rng::seed_from_u64(seed),
            seeded: true,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.seeded
    }
}

impl RngCore for LweRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

impl CryptoRng for LweRng {}

impl fmt::Debug for LweRng {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LweRng({})", if self.seeded { "insecure-test" } else { "entropy" })
    }
}

/// Error distribution: discrete Gaussian of width `Δ/6` truncated to
/// `[-⌊Δ⌋, ⌊Δ⌋]` by rejection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseParams {
    pub delta: f64,
    pub sigma: f64,
}

impl NoiseParams {
    pub fn new(delta: f64) -> Self {
        assert!(delta >= 0.0 && delta.is_finite(), "noise bound must be finite and nonnegative");
        Self {
            delta,
            sigma: delta / 6.0,
        }
    }

    /// No noise at all; every sample is zero.
    pub fn zero() -> Self {
        Self::new(0.0)
    }

    pub fn bound(&self) -> i64 {
        self.delta.floor() as i64
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let b = self.bound();
        if b == 0 || self.sigma == 0.0 {
            return 0;
        }
        let two_var = 2.0 * self.sigma * self.sigma;
        loop {
            let x = rng.gen_range(-b..=b);
            let accept = (-((x * x) as f64) / two_var).exp();
            if rng.gen::<f64>() < accept {
                return x;
            }
        }
    }
}

pub struct SecretKey {
    sk: ModMatrix,
}

impl SecretKey {
    pub fn from_entries(entries: Vec<BigInt>, modulus: &Arc<Modulus>) -> Self {
        Self {
            sk: ModMatrix::column_vector(entries, modulus),
        }
    }

    pub fn dim(&self) -> usize {
        self.sk.rows()
    }

    pub fn modulus(&self) -> &Arc<Modulus> {
        self.sk.modulus()
    }

    pub fn entries(&self) -> &[BigInt] {
        self.sk.entries()
    }

    pub(crate) fn as_column(&self) -> &ModMatrix {
        &self.sk
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey(N = {}, <redacted>)", self.dim())
    }
}

impl Drop for SecretKey {
    // Best effort: the big integers are overwritten before their buffers
    // are released, but earlier reallocations may leave copies behind.
    fn drop(&mut self) {
        let zero = BigInt::default();
        for r in 0..self.sk.rows() {
            self.sk.set(r, 0, &zero);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CtKind {
    Standard,
    Modified,
}

impl CtKind {
    pub fn width(self, n: usize) -> usize {
        match self {
            CtKind::Standard => n + 1,
            CtKind::Modified => n + 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ciphertext {
    body: ModMatrix,
    kind: CtKind,
}

impl Ciphertext {
    pub fn new(body: ModMatrix, kind: CtKind, lwe_dim: usize) -> Result<Self> {
        let expected = kind.width(lwe_dim);
        if body.cols() != expected {
            return Err(Error::WidthMismatch {
                expected,
                found: body.cols(),
            });
        }
        Ok(Self { body, kind })
    }

    pub fn zero(h: usize, lwe_dim: usize, kind: CtKind, modulus: &Arc<Modulus>) -> Self {
        Self {
            body: ModMatrix::zeros(h, kind.width(lwe_dim), modulus),
            kind,
        }
    }

    pub fn body(&self) -> &ModMatrix {
        &self.body
    }

    pub fn into_body(self) -> ModMatrix {
        self.body
    }

    pub fn kind(&self) -> CtKind {
        self.kind
    }

    pub fn h(&self) -> usize {
        self.body.rows()
    }

    pub fn lwe_dim(&self) -> usize {
        match self.kind {
            CtKind::Standard => self.body.cols() - 1,
            CtKind::Modified => self.body.cols() - 2,
        }
    }

    /// First column, the masked message.
    pub fn first_column(&self) -> ModMatrix {
        self.body.column(0)
    }

    /// Columns `2..=N+1`, the randomness block `A`.
    pub fn random_block(&self) -> ModMatrix {
        self.body.col_range(1..self.lwe_dim() + 1)
    }

    /// Extra column of a modified ciphertext.
    pub fn last_column(&self) -> Option<ModMatrix> {
        match self.kind {
            CtKind::Modified => Some(self.body.column(self.body.cols() - 1)),
            CtKind::Standard => None,
        }
    }

    /// Appends a zero extra column.
    pub fn to_modified(&self) -> Self {
        match self.kind {
            CtKind::Modified => self.clone(),
            CtKind::Standard => {
                let z = ModMatrix::zeros(self.h(), 1, self.body.modulus());
                Self {
                    body: self.body.hstack(&z).expect("same row count"),
                    kind: CtKind::Modified,
                }
            }
        }
    }

    /// Folds the extra column into the first and drops it.
    pub fn to_standard(&self) -> Self {
        match self.kind {
            CtKind::Standard => self.clone(),
            CtKind::Modified => {
                let n = self.lwe_dim();
                let first = self.first_column().add(&self.body.column(n + 1)).expect("same shape");
                Self {
                    body: first.hstack(&self.body.col_range(1..n + 1)).expect("same row count"),
                    kind: CtKind::Standard,
                }
            }
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.kind != other.kind {
            return Err(Error::KindMismatch);
        }
        Ok(Self {
            body: self.body.add(&other.body)?,
            kind: self.kind,
        })
    }

    pub fn neg(&self) -> Self {
        Self {
            body: self.body.neg(),
            kind: self.kind,
        }
    }

    /// `cmod(K c)` for an integer matrix `K` already lifted into Z_q.
    pub fn matmul(&self, k: &ModMatrix) -> Result<Self> {
        Ok(Self {
            body: k.mul(&self.body)?,
            kind: self.kind,
        })
    }
}

pub fn ct_add(c1: &Ciphertext, c2: &Ciphertext) -> Result<Ciphertext> {
    c1.add(c2)
}

pub fn ct_matmul(k: &ModMatrix, c: &Ciphertext) -> Result<Ciphertext> {
    c.matmul(k)
}

/// Per-encryption randomness `(A, e)` and the mask `b = A sk + e`, visible
/// only to the party that encrypted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncryptionWitness {
    pub a: ModMatrix,
    pub e: ModMatrix,
    pub b: ModMatrix,
}

/// Key size, modulus and noise of one LWE instance.
#[derive(Clone, Debug)]
pub struct LweScheme {
    pub modulus: Arc<Modulus>,
    pub lwe_dim: usize,
    pub noise: NoiseParams,
}

impl LweScheme {
    pub fn new(modulus: Arc<Modulus>, lwe_dim: usize, noise: NoiseParams) -> Self {
        assert!(lwe_dim >= 1, "LWE dimension must be positive");
        Self { modulus, lwe_dim, noise }
    }

    pub fn keygen<R: Rng + ?Sized>(&self, rng: &mut R) -> SecretKey {
        let entries = (0..self.lwe_dim).map(|_| self.modulus.sample(rng)).collect();
        SecretKey::from_entries(entries, &self.modulus)
    }

    /// Draws `A` uniform `h × N` and `e` from the noise distribution.
    pub fn sample_witness<R: Rng + ?Sized>(&self, h: usize, sk: &SecretKey, rng: &mut R) -> EncryptionWitness {
        let q = &self.modulus;
        let a = ModMatrix::from_fn(h, self.lwe_dim, q, |_, _| q.sample(rng));
        let e = ModMatrix::column_vector((0..h).map(|_| BigInt::from(self.noise.sample(rng))).collect(), q);
        self.witness_from(a, e, sk).expect("sampled shapes agree")
    }

    /// Completes a witness from a chosen `(A, e)`.
    pub fn witness_from(&self, a: ModMatrix, e: ModMatrix, sk: &SecretKey) -> Result<EncryptionWitness> {
        self.check_key(sk)?;
        let b = a.mul(sk.as_column())?.add(&e)?;
        Ok(EncryptionWitness { a, e, b })
    }

    pub fn encrypt<R: Rng + ?Sized>(
        &self,
        m: &ModMatrix,
        sk: &SecretKey,
        rng: &mut R,
    ) -> Result<(Ciphertext, EncryptionWitness)> {
        let w = self.sample_witness(m.rows(), sk, rng);
        let ct = self.encrypt_with(m, &w)?;
        Ok((ct, w))
    }

    /// `[m + b, A]` for a given witness.
    pub fn encrypt_with(&self, m: &ModMatrix, w: &EncryptionWitness) -> Result<Ciphertext> {
        if m.cols() != 1 || m.rows() != w.a.rows() {
            return Err(Error::DimensionMismatch {
                context: "encrypt",
                expected: (w.a.rows(), 1),
                found: m.shape(),
            });
        }
        let body = m.add(&w.b)?.hstack(&w.a)?;
        Ciphertext::new(body, CtKind::Standard, self.lwe_dim)
    }

    pub fn decrypt(&self, c: &Ciphertext, sk: &SecretKey) -> Result<ModMatrix> {
        decrypt(c, sk)
    }

    fn check_key(&self, sk: &SecretKey) -> Result<()> {
        if sk.dim() != self.lwe_dim {
            return Err(Error::WidthMismatch {
                expected: self.lwe_dim,
                found: sk.dim(),
            });
        }
        if sk.modulus() != &self.modulus {
            return Err(Error::ModulusMismatch);
        }
        Ok(())
    }
}

/// `c [1; -sk]` or, for modified ciphertexts, `c [1; -sk; 1]`.
pub fn decrypt(c: &Ciphertext, sk: &SecretKey) -> Result<ModMatrix> {
    let n = sk.dim();
    let expected = c.kind.width(n);
    if c.body.cols() != expected {
        return Err(Error::WidthMismatch {
            expected,
            found: c.body.cols(),
        });
    }
    let a = c.body.col_range(1..n + 1);
    let mut out = c.first_column().sub(&a.mul(sk.as_column())?)?;
    if let Some(last) = c.last_column() {
        out = out.add(&last)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::ToPrimitive;

    fn scheme(q: u64, n: usize, delta: f64) -> LweScheme {
        LweScheme::new(Modulus::from_u64(q).unwrap(), n, NoiseParams::new(delta))
    }

    #[test]
    fn forced_small_example() {
        let s = scheme(97, 1, 19.2);
        let q = &s.modulus;
        let sk = SecretKey::from_entries(vec![3.into()], q);
        let w = s
            .witness_from(ModMatrix::from_i64_rows(&[&[10]], q), ModMatrix::from_i64_rows(&[&[1]], q), &sk)
            .unwrap();
        let m = ModMatrix::from_i64_rows(&[&[5]], q);
        let c = s.encrypt_with(&m, &w).unwrap();
        assert_eq!(c.body(), &ModMatrix::from_i64_rows(&[&[36, 10]], q));
        assert_eq!(s.decrypt(&c, &sk).unwrap(), ModMatrix::from_i64_rows(&[&[6]], q));
    }

    #[test]
    fn zero_witness_gives_plain_message() {
        let s = scheme(101, 4, 19.2);
        let q = &s.modulus;
        let mut rng = LweRng::insecure_test(1);
        let sk = s.keygen(&mut rng);
        let w = s.witness_from(ModMatrix::zeros(2, 4, q), ModMatrix::zeros(2, 1, q), &sk).unwrap();
        let m = ModMatrix::from_i64_rows(&[&[7], &[-3]], q);
        let c = s.encrypt_with(&m, &w).unwrap();
        assert_eq!(c.first_column(), m);
        assert!(c.random_block().is_zero());
        assert_eq!(s.decrypt(&c, &sk).unwrap(), m);
    }

    #[test]
    fn keygen_deterministic_and_forced_single_entry() {
        let s = scheme(101, 8, 19.2);
        let k1 = s.keygen(&mut LweRng::insecure_test(9));
        let k2 = s.keygen(&mut LweRng::insecure_test(9));
        assert_eq!(k1.entries(), k2.entries());
        assert!(LweRng::insecure_test(1).is_deterministic());

        // N = 1 with a known stream value: keygen equals one uniform draw
        let one = scheme(101, 1, 0.0);
        let mut a = LweRng::insecure_test(4);
        let mut b = LweRng::insecure_test(4);
        assert_eq!(one.keygen(&mut a).entries()[0], one.modulus.sample(&mut b));
    }

    #[test]
    fn keygen_is_uniform_chi_square() {
        // q = 11, 10^4 draws over 11 cells; the 1% critical value at 10
        // degrees of freedom is 23.21.
        let s = scheme(11, 10_000, 0.0);
        let sk = s.keygen(&mut LweRng::insecure_test(2024));
        let mut counts = [0usize; 11];
        for v in sk.entries() {
            counts[(v.to_i64().unwrap() + 5) as usize] += 1;
        }
        let expected = 10_000.0 / 11.0;
        let chi: f64 = counts.iter().map(|c| (*c as f64 - expected).powi(2) / expected).sum();
        assert!(chi < 23.21, "chi-square {chi}");
    }

    #[test]
    fn noise_respects_bound_and_shape() {
        let n = NoiseParams::new(19.2);
        assert_eq!(n.bound(), 19);
        let mut rng = LweRng::insecure_test(5);
        let samples: Vec<i64> = (0..20_000).map(|_| n.sample(&mut rng)).collect();
        assert!(samples.iter().all(|e| e.abs() <= 19));
        let var = samples.iter().map(|e| (*e * *e) as f64).sum::<f64>() / samples.len() as f64;
        assert!((var.sqrt() - 3.2).abs() < 0.15, "std {}", var.sqrt());
        assert_eq!(NoiseParams::zero().sample(&mut rng), 0);
    }

    #[test]
    fn modified_reshuffle_preserves_decryption() {
        let s = scheme(1_000_003, 6, 19.2);
        let q = &s.modulus;
        let mut rng = LweRng::insecure_test(3);
        let sk = s.keygen(&mut rng);
        let m = ModMatrix::from_i64_rows(&[&[11], &[-40], &[0]], q);
        let (c, _) = s.encrypt(&m, &sk, &mut rng).unwrap();
        let base = decrypt(&c, &sk).unwrap();
        let shift = ModMatrix::from_i64_rows(&[&[5], &[123], &[-99]], q);
        let mut body = c.to_modified().into_body();
        for r in 0..3 {
            let first = q.reduce(&(body.get(r, 0) - shift.get(r, 0)));
            body.set(r, 0, &first);
            body.set(r, 7, shift.get(r, 0));
        }
        let moved = Ciphertext::new(body, CtKind::Modified, 6).unwrap();
        assert_eq!(decrypt(&moved, &sk).unwrap(), base);
        assert_eq!(moved.to_standard(), c);
    }

    #[test]
    fn width_mismatch_rejected() {
        let s = scheme(101, 4, 1.0);
        let sk = s.keygen(&mut LweRng::insecure_test(0));
        let bad = Ciphertext {
            body: ModMatrix::zeros(1, 3, &s.modulus),
            kind: CtKind::Standard,
        };
        assert!(matches!(decrypt(&bad, &sk), Err(Error::WidthMismatch { .. })));
        assert!(Ciphertext::new(ModMatrix::zeros(1, 5, &s.modulus), CtKind::Modified, 4).is_err());
    }

    #[test]
    fn homomorphic_trivia() {
        let s = scheme(1_000_003, 5, 19.2);
        let q = &s.modulus;
        let mut rng = LweRng::insecure_test(8);
        let sk = s.keygen(&mut rng);
        let m = ModMatrix::from_i64_rows(&[&[17], &[-2]], q);
        let (c, _) = s.encrypt(&m, &sk, &mut rng).unwrap();
        assert!(decrypt(&c.add(&c.neg()).unwrap(), &sk).unwrap().is_zero());
        let zero = Ciphertext::zero(2, 5, CtKind::Standard, q);
        assert_eq!(ct_add(&c, &zero).unwrap(), c);
        assert_eq!(ct_matmul(&ModMatrix::identity(2, q), &c).unwrap(), c);
        assert!(decrypt(&ct_matmul(&ModMatrix::zeros(3, 2, q), &c).unwrap(), &sk).unwrap().is_zero());
        assert!(matches!(c.add(&c.to_modified()), Err(Error::KindMismatch)));
    }
}
