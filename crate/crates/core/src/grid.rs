//! Exact arithmetic on the finite model X_n of Q_p.
//!
//! X_n = B_n / B_{-n} is the group of p-adic numbers of the form
//! x = Σ_{i=-n}^{n-1} a_i p^i, a_i ∈ {0, …, p-1}, i.e. norm at most p^n,
//! identified when they differ by something of norm at most p^{-n}·(1/p).
//! Writing u = Σ a_i p^{i+n} ∈ {0, …, M-1} with M = p^{2n} realizes X_n as
//! Z/MZ with x = u·p^{-n}; addition of points is addition of residues mod M.
//!
//! The p-adic structure survives the quotient exactly:
//! - |x| = p^{n - v_p(u)} for u ≠ 0 (and |0| = 0), taking the values
//!   {0} ∪ {p^{-n+1}, …, p^n};
//! - the rank-zero additive character χ(y) = e^{2πi {y}_p} pairs two grid
//!   points as χ(x·y) = e^{2πi k / M} with the *exact integer* phase
//!   k = u_x·u_y mod M — no floating point enters until the final complex
//!   exponential;
//! - ∫_{B_i} χ(xξ) dξ = p^i·1{|x| ≤ p^{-i}} (Haar measure normalized so the
//!   unit ball B_0 has mass 1).
//!
//! Each point carries Haar mass p^{-n}; the whole grid has mass p^n. All
//! pairwise operations validate that both operands live on the same grid.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("p must be a prime >= 2, got {0}")]
    NotPrime(u32),
    #[error("grid level n must be >= 1")]
    LevelZero,
    #[error("alpha must be positive and finite, got {0}")]
    BadAlpha(f64),
    #[error("modulus p^(2n) exceeds 2^63 (p={p}, n={n})")]
    ModulusOverflow { p: u32, n: u32 },
    #[error("residue {u} out of range for modulus {modulus}")]
    PointOutOfRange { u: u128, modulus: u128 },
    #[error("grid mismatch: {left} vs {right}")]
    MismatchedGrids { left: GridParams, right: GridParams },
}

/// Parameters of one finite model: the prime p, the level n, and the
/// Vladimirov exponent α used by the spectral layer.
///
/// The modulus M = p^{2n} is capped at 2^63 so that a product of two
/// residues — the exact character phase — always fits in `u128`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridParams {
    p: u32,
    n: u32,
    modulus: u128,
    alpha: f64,
}

impl fmt::Display for GridParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p={}, n={}, alpha={}", self.p, self.n, self.alpha)
    }
}

fn is_prime(p: u32) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2u32;
    while (d as u64) * (d as u64) <= p as u64 {
        if p % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// p-adic valuation of a nonzero residue: the exponent of the largest power
/// of p dividing u.
pub fn valuation(mut u: u128, p: u32) -> u32 {
    assert!(u != 0, "valuation of zero is undefined");
    let p = p as u128;
    let mut v = 0;
    while u % p == 0 {
        u /= p;
        v += 1;
    }
    v
}

impl GridParams {
    pub fn new(p: u32, n: u32, alpha: f64) -> Result<Self, GridError> {
        if !is_prime(p) {
            return Err(GridError::NotPrime(p));
        }
        if n == 0 {
            return Err(GridError::LevelZero);
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(GridError::BadAlpha(alpha));
        }
        let modulus = (p as u128)
            .checked_pow(2 * n)
            .filter(|&m| m <= 1u128 << 63)
            .ok_or(GridError::ModulusOverflow { p, n })?;
        Ok(GridParams { p, n, modulus, alpha })
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// M = p^{2n}, the number of grid points.
    pub fn modulus(&self) -> u128 {
        self.modulus
    }

    /// Grid size as a usize, for indexing dense vectors.
    pub fn len(&self) -> usize {
        self.modulus as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn haar(&self) -> HaarWeight {
        HaarWeight {
            point_mass: (self.p as f64).powi(-(self.n as i32)),
            total_mass: (self.p as f64).powi(self.n as i32),
        }
    }

    pub fn point(&self, u: u128) -> Result<GridPoint, GridError> {
        if u >= self.modulus {
            return Err(GridError::PointOutOfRange { u, modulus: self.modulus });
        }
        Ok(GridPoint { u, params: *self })
    }

    /// The point for an arbitrary signed integer, reduced mod M.
    pub fn point_wrapping(&self, v: i128) -> GridPoint {
        let m = self.modulus as i128;
        let u = v.rem_euclid(m) as u128;
        GridPoint { u, params: *self }
    }

    /// |u·p^{-n}| as an exponent: Some(m) for norm p^m, None for the zero
    /// point. Exact — no floating point.
    pub fn norm_exponent_of(&self, u: u128) -> Option<i32> {
        if u == 0 {
            None
        } else {
            Some(self.n as i32 - valuation(u, self.p) as i32)
        }
    }

    /// |u·p^{-n}| as a float (0.0 for the zero point).
    pub fn norm_of(&self, u: u128) -> f64 {
        match self.norm_exponent_of(u) {
            None => 0.0,
            Some(m) => (self.p as f64).powi(m),
        }
    }

    fn check_same(&self, other: &GridParams) -> Result<(), GridError> {
        if self == other {
            Ok(())
        } else {
            Err(GridError::MismatchedGrids { left: *self, right: *other })
        }
    }
}

/// Haar normalization of one grid: each point weighs q^{-n} = p^{-n}, and the
/// grid as a whole (the ball B_n) weighs p^n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HaarWeight {
    pub point_mass: f64,
    pub total_mass: f64,
}

/// One point of X_n: the residue u mod M standing for x = u·p^{-n}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    u: u128,
    params: GridParams,
}

impl GridPoint {
    pub fn u(&self) -> u128 {
        self.u
    }

    pub fn params(&self) -> &GridParams {
        &self.params
    }

    pub fn is_zero(&self) -> bool {
        self.u == 0
    }

    pub fn norm_exponent(&self) -> Option<i32> {
        self.params.norm_exponent_of(self.u)
    }

    pub fn norm(&self) -> f64 {
        self.params.norm_of(self.u)
    }

    /// Base-p digits a_{-n}, …, a_{n-1} of x = Σ a_i p^i (least significant
    /// first, i.e. starting at the p^{-n} digit).
    pub fn digits(&self) -> Vec<u8> {
        let p = self.params.p as u128;
        let mut u = self.u;
        let mut out = Vec::with_capacity(2 * self.params.n as usize);
        for _ in 0..2 * self.params.n {
            out.push((u % p) as u8);
            u /= p;
        }
        out
    }

    pub fn add(&self, other: &GridPoint) -> Result<GridPoint, GridError> {
        self.params.check_same(&other.params)?;
        // u, v < M <= 2^63, so the sum cannot overflow u128.
        Ok(GridPoint {
            u: (self.u + other.u) % self.params.modulus,
            params: self.params,
        })
    }

    pub fn neg(&self) -> GridPoint {
        let u = if self.u == 0 { 0 } else { self.params.modulus - self.u };
        GridPoint { u, params: self.params }
    }

    pub fn sub(&self, other: &GridPoint) -> Result<GridPoint, GridError> {
        self.add(&other.neg())
    }

    /// Exact integer phase k of the character pairing: χ(x·y) = e^{2πi k/M}
    /// with k = u_x·u_y mod M.
    ///
    /// x·y = u_x·u_y·p^{-2n} as a p-adic number, whose fractional part is
    /// (u_x·u_y mod p^{2n}) / p^{2n}; the rank-zero character e^{2πi {·}_p}
    /// therefore sees exactly the phase k/M. Both residues are below 2^63,
    /// so the product fits in u128 and the reduction is exact.
    pub fn character_phase(&self, other: &GridPoint) -> Result<u128, GridError> {
        self.params.check_same(&other.params)?;
        Ok((self.u * other.u) % self.params.modulus)
    }

    /// χ(x·y) as a complex number. Convenience for spot checks; bulk code
    /// should index a precomputed twiddle table with `character_phase`.
    pub fn character(&self, other: &GridPoint) -> Result<num_complex::Complex64, GridError> {
        let k = self.character_phase(other)?;
        let theta = std::f64::consts::TAU * (k as f64) / (self.params.modulus as f64);
        Ok(num_complex::Complex64::new(theta.cos(), theta.sin()))
    }

    /// ∫_{B_i} χ(x·ξ) dξ = p^i if |x| ≤ p^{-i}, else 0.
    ///
    /// The character integrated over a ball either sees a full set of roots
    /// of unity (cancelling to zero) or is identically one on the ball; the
    /// norm comparison is done in exponent space, so the branch is exact.
    pub fn ball_integral(&self, i: i32) -> f64 {
        ball_integral_by_norm(self.params.p, self.norm_exponent(), i)
    }
}

/// ∫_{B_i} χ(x·ξ) dξ given only |x| (as `Some(m)` for p^m, `None` for x = 0):
/// p^i when |x| ≤ p^{-i}, else 0.
pub fn ball_integral_by_norm(p: u32, norm_exponent: Option<i32>, i: i32) -> f64 {
    let inside = match norm_exponent {
        None => true,
        Some(m) => m <= -i,
    };
    if inside {
        (p as f64).powi(i)
    } else {
        0.0
    }
}
