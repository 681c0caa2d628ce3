//! Binary framing for ciphertexts, keys and transcripts.
//!
//! Integers are written as a `u32` little-endian byte count, one sign byte
//! (0 nonnegative, 1 negative) and the magnitude in little-endian order.
//! Every file starts with a 4-byte magic and a version byte.

use std::io::{Read, Write};
use std::sync::Arc;

use num_bigint::{BigInt, Sign};

use crate::error::{Error, Result};
use crate::lwe::{Ciphertext, CtKind, SecretKey};
use crate::modring::{ModMatrix, Modulus};

pub const VERSION: u8 = 1;
pub const CIPHERTEXT_MAGIC: &[u8; 4] = b"COCT";
pub const KEY_MAGIC: &[u8; 4] = b"COSK";

pub fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_u8<W: Write>(w: &mut W, v: u8) -> Result<()> {
    w.write_all(&[v])?;
    Ok(())
}

pub fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

pub fn write_len<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Codec(format!("length {v} exceeds u32")))?;
    write_u32(w, v)
}

pub fn read_len<R: Read>(r: &mut R) -> Result<usize> {
    Ok(read_u32(r)? as usize)
}

pub fn write_bigint<W: Write>(w: &mut W, v: &BigInt) -> Result<()> {
    let (sign, mag) = v.to_bytes_le();
    let mag: &[u8] = if v.sign() == Sign::NoSign { &[] } else { &mag };
    write_len(w, mag.len())?;
    write_u8(w, u8::from(sign == Sign::Minus))?;
    w.write_all(mag)?;
    Ok(())
}

pub fn read_bigint<R: Read>(r: &mut R) -> Result<BigInt> {
    let len = read_len(r)?;
    let sign = read_u8(r)?;
    let mut mag = vec![0u8; len];
    r.read_exact(&mut mag)?;
    let sign = match (sign, len) {
        (_, 0) => Sign::NoSign,
        (0, _) => Sign::Plus,
        (1, _) => Sign::Minus,
        (s, _) => return Err(Error::Codec(format!("invalid sign byte {s}"))),
    };
    Ok(BigInt::from_bytes_le(sign, &mag))
}

pub fn write_magic<W: Write>(w: &mut W, magic: &[u8; 4]) -> Result<()> {
    w.write_all(magic)?;
    write_u8(w, VERSION)
}

pub fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::Codec(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let v = read_u8(r)?;
    if v != VERSION {
        return Err(Error::Codec(format!("unsupported version {v}")));
    }
    Ok(())
}

/// Entries only; the caller writes shape and modulus.
pub fn write_entries<W: Write>(w: &mut W, m: &ModMatrix) -> Result<()> {
    m.entries().iter().try_for_each(|e| write_bigint(w, e))
}

pub fn read_entries<R: Read>(r: &mut R, rows: usize, cols: usize, modulus: &Arc<Modulus>) -> Result<ModMatrix> {
    let data = (0..rows * cols).map(|_| read_bigint(r)).collect::<Result<Vec<_>>>()?;
    if let Some(bad) = data.iter().find(|v| !modulus.contains(v)) {
        return Err(Error::Codec(format!("entry {bad} outside the centered range")));
    }
    Ok(ModMatrix::from_vec(rows, cols, data, modulus))
}

/// Shape-tagged matrix sharing a known modulus.
pub fn write_matrix<W: Write>(w: &mut W, m: &ModMatrix) -> Result<()> {
    write_len(w, m.rows())?;
    write_len(w, m.cols())?;
    write_entries(w, m)
}

pub fn read_matrix<R: Read>(r: &mut R, modulus: &Arc<Modulus>) -> Result<ModMatrix> {
    let rows = read_len(r)?;
    let cols = read_len(r)?;
    read_entries(r, rows, cols, modulus)
}

fn kind_tag(kind: CtKind) -> u8 {
    match kind {
        CtKind::Standard => 0,
        CtKind::Modified => 1,
    }
}

fn kind_from(tag: u8) -> Result<CtKind> {
    match tag {
        0 => Ok(CtKind::Standard),
        1 => Ok(CtKind::Modified),
        t => Err(Error::Codec(format!("unknown ciphertext kind {t}"))),
    }
}

/// Body of a ciphertext after the `(q, N, kind, h)` header, without the
/// file magic. Used inside transcripts.
pub fn write_ciphertext_body<W: Write>(w: &mut W, c: &Ciphertext) -> Result<()> {
    write_u8(w, kind_tag(c.kind()))?;
    write_len(w, c.h())?;
    write_entries(w, c.body())
}

pub fn read_ciphertext_body<R: Read>(r: &mut R, lwe_dim: usize, modulus: &Arc<Modulus>) -> Result<Ciphertext> {
    let kind = kind_from(read_u8(r)?)?;
    let h = read_len(r)?;
    let body = read_entries(r, h, kind.width(lwe_dim), modulus)?;
    Ciphertext::new(body, kind, lwe_dim)
}

pub fn write_ciphertext<W: Write>(w: &mut W, c: &Ciphertext) -> Result<()> {
    write_magic(w, CIPHERTEXT_MAGIC)?;
    write_bigint(w, c.body().modulus().q())?;
    write_len(w, c.lwe_dim())?;
    write_ciphertext_body(w, c)
}

/// Reads a ciphertext and checks it against the expected modulus.
pub fn read_ciphertext<R: Read>(r: &mut R, modulus: &Arc<Modulus>) -> Result<Ciphertext> {
    expect_magic(r, CIPHERTEXT_MAGIC)?;
    let q = read_bigint(r)?;
    if &q != modulus.q() {
        return Err(Error::ModulusMismatch);
    }
    let n = read_len(r)?;
    read_ciphertext_body(r, n, modulus)
}

pub fn write_secret_key<W: Write>(w: &mut W, sk: &SecretKey) -> Result<()> {
    write_magic(w, KEY_MAGIC)?;
    write_bigint(w, sk.modulus().q())?;
    write_len(w, sk.dim())?;
    sk.entries().iter().try_for_each(|e| write_bigint(w, e))
}

pub fn read_secret_key<R: Read>(r: &mut R) -> Result<SecretKey> {
    expect_magic(r, KEY_MAGIC)?;
    let modulus = Modulus::new(read_bigint(r)?)?;
    let n = read_len(r)?;
    let m = read_entries(r, n, 1, &modulus)?;
    Ok(SecretKey::from_entries(m.into_entries(), &modulus))
}

pub fn ciphertext_to_bytes(c: &Ciphertext) -> Vec<u8> {
    let mut out = Vec::new();
    write_ciphertext(&mut out, c).expect("writing to memory");
    out
}

pub fn ciphertext_from_bytes(mut bytes: &[u8], modulus: &Arc<Modulus>) -> Result<Ciphertext> {
    read_ciphertext(&mut bytes, modulus)
}
