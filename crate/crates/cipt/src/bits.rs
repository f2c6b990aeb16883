//! Basis-index arithmetic: bit-string encodings, the first-domain-wall
//! function, and eigenvalues of diagonal observables.
//!
//! Convention: a basis label `n` in `[0, 2^L)` encodes the bit string
//! `b_1 b_2 ... b_L` with `b_1` the most significant bit, so the represented
//! real number is `x = n / 2^L` in `[0, 1)`.

use crate::{Error, Result};

/// Maximum site count in dense (state-vector) mode.
pub const MAX_L_QUANTUM: u32 = 24;
/// Maximum site count in classical (bit-string) mode.
pub const MAX_L_CLASSICAL: u32 = 48;

#[inline]
pub fn check_index(n: u64, l: u32) -> Result<()> {
    if l == 0 || l > MAX_L_CLASSICAL {
        return Err(Error::Domain(format!("site count L={l} out of range")));
    }
    if n >> l != 0 {
        return Err(Error::Domain(format!("basis index {n} >= 2^{l}")));
    }
    Ok(())
}

/// First-domain-wall position of `n`: 0 for the all-zero string, otherwise
/// the position of the leftmost 1 counted from the right edge, i.e. the `k`
/// with `2^(k-1) <= n < 2^k`.
#[inline]
pub fn fdw_of_index(n: u64, l: u32) -> Result<u32> {
    check_index(n, l)?;
    Ok(fdw_unchecked(n))
}

#[inline(always)]
pub(crate) fn fdw_unchecked(n: u64) -> u32 {
    64 - n.leading_zeros()
}

/// Magnetization density eigenvalue of `|n>`: `(L - 2 popcount(n)) / L`,
/// with `Z|0> = +|0>`.
#[inline]
pub fn magnetization_of_index(n: u64, l: u32) -> Result<f64> {
    check_index(n, l)?;
    Ok(magnetization_unchecked(n, l))
}

#[inline(always)]
pub(crate) fn magnetization_unchecked(n: u64, l: u32) -> f64 {
    (l as f64 - 2.0 * n.count_ones() as f64) / l as f64
}

/// Defect density eigenvalue of `|n>`: `popcount(n)/L = (1 - M_z)/2`.
#[inline]
pub fn defect_density_of_index(n: u64, l: u32) -> Result<f64> {
    check_index(n, l)?;
    Ok(n.count_ones() as f64 / l as f64)
}

/// Cyclic left shift of the L-bit field: `|b_1 b_2 ... b_L> -> |b_2 ... b_L b_1>`.
#[inline(always)]
pub fn rotate_left(n: u64, l: u32) -> u64 {
    let mask = (1u64 << l) - 1;
    ((n << 1) | (n >> (l - 1))) & mask
}

/// Cyclic right shift, the inverse of [`rotate_left`].
#[inline(always)]
pub fn rotate_right(n: u64, l: u32) -> u64 {
    let mask = (1u64 << l) - 1;
    ((n >> 1) | (n << (l - 1))) & mask
}

/// Diagonal observables used throughout: all are pure functions of `(n, L)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DiagonalObservable {
    /// First-domain-wall position `k`, integer in `[0, L]`.
    Fdw,
    /// Magnetization density `M_z`, in `[-1, 1]`.
    Magnetization,
    /// Defect density `n_d = (1 - M_z)/2`, in `[0, 1]`.
    DefectDensity,
}

impl DiagonalObservable {
    #[inline(always)]
    pub fn eigenvalue(self, n: u64, l: u32) -> f64 {
        match self {
            DiagonalObservable::Fdw => fdw_unchecked(n) as f64,
            DiagonalObservable::Magnetization => magnetization_unchecked(n, l),
            DiagonalObservable::DefectDensity => n.count_ones() as f64 / l as f64,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DiagonalObservable::Fdw => "k",
            DiagonalObservable::Magnetization => "mz",
            DiagonalObservable::DefectDensity => "nd",
        }
    }
}

/// Parses a bit string like "0010" (b_1 first) into `(n, L)`.
pub fn parse_bits(s: &str) -> Result<(u64, u32)> {
    let l = s.len() as u32;
    if l == 0 || l > MAX_L_CLASSICAL {
        return Err(Error::InvalidInput(format!("bit string length {l} out of range")));
    }
    let mut n = 0u64;
    for c in s.chars() {
        n <<= 1;
        match c {
            '0' => {}
            '1' => n |= 1,
            _ => return Err(Error::InvalidInput(format!("invalid bit character '{c}'"))),
        }
    }
    Ok((n, l))
}
