//! Finite models of p-adic Schrödinger operators.
//!
//! The field Q_p is approximated by the finite quotient X_n = B_n / B_{-n},
//! a cyclic group of order M = p^{2n} whose points carry Haar mass p^{-n}.
//! On X_n everything is exact linear algebra: the additive characters become
//! M-th roots of unity with integer phases, the Fourier transform is a scaled
//! DFT, the heat kernel e^{-t|ξ|^α} pushes back to a strictly positive
//! density, and H = P^α + V is an M×M symmetric matrix whose semigroup,
//! propagator, and path measures can be compared against their continuum
//! limits as n grows.
//!
//! Module layout:
//! - [`grid`]: exact residue arithmetic, norms, characters, ball integrals;
//! - [`transform`]: the unitary finite Fourier transform (direct reference
//!   implementation and radix-p fast path) and convolution;
//! - [`density`]: heat-kernel densities p_{t,n} by two independent routes,
//!   plus the infinite-level limit p_t with certified tail truncation;
//! - [`spectral`]: the Vladimirov operator, Hamiltonians, eigendecompositions,
//!   heat semigroups, Trotter products, propagators, and convergence reports;
//! - [`stochastic`]: random-walk and bridge sampling, Feynman–Kac estimators,
//!   exact moment checks, and path-regularity diagnostics.

pub mod density;
pub mod grid;
pub mod spectral;
pub mod stochastic;
pub mod transform;
