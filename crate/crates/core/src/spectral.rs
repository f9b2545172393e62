//! Finite-model Schrödinger operators H = P^α + V and their heat semigroups.
//!
//! On the grid, P^α acts by multiplication with |ξ|^α after a transform, so
//! as a matrix on value vectors it is the circulant of the kernel
//!
//!   a(x) = p^{-n} (F_n^{-1} |·|^α)(x),      (P^α f)(u) = Σ_v a(u-v) f(v),
//!
//! which is real and symmetric. Adding a diagonal potential gives
//! H[u][v] = a(u-v) + δ_{uv} v(x_u). The module provides
//!
//! * dense assembly (guarded by [`DENSE_CAP`]) and a matrix-free apply;
//! * the eigendecomposition ([`SpectralModel`]) with ascending eigenvalues
//!   and Haar-orthonormal eigenfunctions e_j = p^{n/2} w_j;
//! * the heat semigroup S_t = U e^{-tΛ} Uᵀ acting on value vectors, and the
//!   propagator K_t(x,y) = p^n S_t[x][y] so that (e^{-tH}f)(x)
//!   = q^{-n} Σ_y K_t(x,y) f(y);
//! * the Trotter product (C_{t/N} D_{t/N})^N with C the free heat step and
//!   D = diag(e^{-(t/N) v}), whose error against S_t decays like 1/N;
//! * jump rates of the free generator L = -P^α (off-diagonal rates -a(x) are
//!   nonnegative up to rounding, rows sum to zero);
//! * convergence reports across levels: traces with diagonal tails, and
//!   low-lying eigenvalue/eigenfunction comparisons under the coarsening map
//!   that averages a fine-grid function over each coarse point's fiber.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::density::{DensityError, HeatDensity};
use crate::grid::{GridError, GridParams};
use crate::transform::{Fourier, GridFunction, TransformError};

/// Largest grid for which dense M×M spectral work is permitted.
pub const DENSE_CAP: u128 = 4096;

/// Off-diagonal generator entries may undershoot 0 by at most this much
/// before the model is rejected; smaller undershoots are clipped to 0.
pub const RATE_NEG_TOL: f64 = 1e-12;

/// Allowed deviation of generator row sums from 0.
pub const ROW_SUM_TOL: f64 = 1e-10;

/// Residual imaginary part tolerated when a transform result must be real.
pub const KERNEL_IMAG_TOL: f64 = 1e-10;

/// Eigenvalues closer than this are treated as one cluster when comparing
/// eigenfunctions across levels.
pub const CLUSTER_GAP: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error("grid of M = {m} points exceeds the dense spectral cap {cap}")]
    CapacityExceeded { m: u128, cap: u128 },
    #[error("potential table has {got} entries, grid has {want} points")]
    PotentialLength { got: usize, want: usize },
    #[error("potential value at residue {u} is not finite")]
    NonFinitePotential { u: u128 },
    #[error("potential exponent must be nonnegative and finite, got {exponent}")]
    BadExponent { exponent: f64 },
    #[error("a table potential is tied to one grid; level sweeps need a power or zero potential")]
    TableAcrossLevels,
    #[error("time parameter must be positive and finite, got {t}")]
    BadTime { t: f64 },
    #[error("step count must be at least 1")]
    BadSteps,
    #[error("eigen index {j} out of range for {len} modes")]
    IndexOutOfRange { j: usize, len: usize },
    #[error("decay exponent must be positive and finite, got {k}")]
    BadDecayExponent { k: f64 },
    #[error("levels must be strictly increasing and non-empty")]
    BadLevelList,
    #[error("spectral invariant violated: {what} = {value:e} exceeds {tolerance:e}")]
    InvariantViolation {
        what: &'static str,
        value: f64,
        tolerance: f64,
    },
}

fn check_dense(params: &GridParams) -> Result<(), SpectralError> {
    if params.modulus() > DENSE_CAP {
        return Err(SpectralError::CapacityExceeded {
            m: params.modulus(),
            cap: DENSE_CAP,
        });
    }
    Ok(())
}

fn check_time(t: f64) -> Result<(), SpectralError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(SpectralError::BadTime { t })
    }
}

/// Specification of the potential V, independent of any one grid where
/// possible.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    /// v ≡ 0 (the free walk).
    Zero,
    /// v(x) = |x|^exponent; the exponent must be nonnegative (0 gives v ≡ 1,
    /// with the convention v(0) = 1 in that case).
    Power { exponent: f64 },
    /// Explicit values per residue of one fixed grid.
    Table { values: Vec<f64> },
}

impl PotentialSpec {
    /// Materializes v(x_u) for every residue of the grid.
    pub fn values(&self, params: GridParams) -> Result<Vec<f64>, SpectralError> {
        match self {
            PotentialSpec::Zero => Ok(vec![0.0; params.len()]),
            PotentialSpec::Power { exponent } => {
                if !(exponent.is_finite() && *exponent >= 0.0) {
                    return Err(SpectralError::BadExponent { exponent: *exponent });
                }
                Ok((0..params.modulus())
                    .map(|u| params.norm_of(u).powf(*exponent))
                    .collect())
            }
            PotentialSpec::Table { values } => {
                if values.len() != params.len() {
                    return Err(SpectralError::PotentialLength {
                        got: values.len(),
                        want: params.len(),
                    });
                }
                for (u, v) in values.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(SpectralError::NonFinitePotential { u: u as u128 });
                    }
                }
                Ok(values.clone())
            }
        }
    }

    /// Whether this spec can be instantiated on every level of a sweep.
    pub fn supports_level_sweeps(&self) -> bool {
        !matches!(self, PotentialSpec::Table { .. })
    }
}

/// Guard used by multi-level reports: table potentials are tied to one grid.
pub fn ensure_sweepable(spec: &PotentialSpec) -> Result<(), SpectralError> {
    if spec.supports_level_sweeps() {
        Ok(())
    } else {
        Err(SpectralError::TableAcrossLevels)
    }
}

/// The convolution kernel a(x) = p^{-n}(F_n^{-1}|·|^α)(x) of P^α, indexed by
/// displacement residue. Real up to rounding; the imaginary residue is
/// checked against [`KERNEL_IMAG_TOL`].
pub fn vladimirov_kernel(params: GridParams) -> Result<Vec<f64>, SpectralError> {
    let fourier = Fourier::new(params)?;
    vladimirov_kernel_with(&fourier)
}

/// Same as [`vladimirov_kernel`] with a reusable transform context.
pub fn vladimirov_kernel_with(fourier: &Fourier) -> Result<Vec<f64>, SpectralError> {
    let params = *fourier.params();
    let alpha = params.alpha();
    let symbol = GridFunction::from_fn(params, |xi| {
        num_complex::Complex64::new(xi.norm().powf(alpha), 0.0)
    })?;
    let raw = fourier.inverse(&symbol)?;
    let imag = raw.max_abs_imag();
    if imag > KERNEL_IMAG_TOL {
        return Err(SpectralError::InvariantViolation {
            what: "max |Im a|",
            value: imag,
            tolerance: KERNEL_IMAG_TOL,
        });
    }
    let w = params.haar().point_mass;
    Ok(raw.values().iter().map(|z| z.re * w).collect())
}

/// Applies H = P^α + V to a value vector without materializing the matrix:
/// one convolution (O(M log M) on large grids) plus the diagonal.
pub fn apply_hamiltonian(
    fourier: &Fourier,
    potential: &[f64],
    f: &[f64],
) -> Result<Vec<f64>, SpectralError> {
    let params = *fourier.params();
    if potential.len() != params.len() {
        return Err(SpectralError::PotentialLength {
            got: potential.len(),
            want: params.len(),
        });
    }
    if f.len() != params.len() {
        return Err(SpectralError::PotentialLength {
            got: f.len(),
            want: params.len(),
        });
    }
    let kernel = vladimirov_kernel_with(fourier)?;
    let kf = GridFunction::from_fn(params, |x| {
        num_complex::Complex64::new(kernel[x.u() as usize], 0.0)
    })?;
    let ff = GridFunction::from_fn(params, |x| {
        num_complex::Complex64::new(f[x.u() as usize], 0.0)
    })?;
    // Σ_v a(u-v) f(v) = p^n (a ∗ f)(u) under the Haar-normalized convolution.
    let conv = fourier.convolve(&kf, &ff)?;
    let scale = params.haar().total_mass;
    Ok(conv
        .values()
        .iter()
        .zip(potential)
        .zip(f)
        .map(|((c, v), fv)| c.re * scale + v * fv)
        .collect())
}

/// Dense H = circulant(a) + diag(v). Guarded by [`DENSE_CAP`].
pub fn materialize_hamiltonian(
    params: GridParams,
    potential: &PotentialSpec,
) -> Result<DMatrix<f64>, SpectralError> {
    check_dense(&params)?;
    let v = potential.values(params)?;
    let kernel = vladimirov_kernel(params)?;
    let m = params.len();
    Ok(DMatrix::from_fn(m, m, |i, j| {
        let d = (i + m - j) % m;
        kernel[d] + if i == j { v[i] } else { 0.0 }
    }))
}

/// Jump-rate view of the free generator L = -P^α: off-diagonal entries
/// -a(x) are nonnegative rates, the diagonal is -a(0), and rows sum to 0.
#[derive(Debug, Clone)]
pub struct GeneratorRates {
    /// rate[u] for u ≠ 0 is the jump rate to displacement u (clipped at 0
    /// if it undershot by less than [`RATE_NEG_TOL`]); rate[0] = -a(0) ≤ 0
    /// is the diagonal.
    pub rates: Vec<f64>,
    /// Largest clip applied to an off-diagonal rate.
    pub max_clip: f64,
    /// |Σ_u rate(u)| before clipping — the row-sum residue.
    pub row_sum_residue: f64,
}

pub fn generator_rates(params: GridParams) -> Result<GeneratorRates, SpectralError> {
    let kernel = vladimirov_kernel(params)?;
    let mut rates: Vec<f64> = kernel.iter().map(|a| -a).collect();
    let row_sum_residue = rates.iter().sum::<f64>().abs();
    if row_sum_residue > ROW_SUM_TOL {
        return Err(SpectralError::InvariantViolation {
            what: "|generator row sum|",
            value: row_sum_residue,
            tolerance: ROW_SUM_TOL,
        });
    }
    let mut max_clip = 0.0f64;
    for (u, r) in rates.iter_mut().enumerate() {
        if u == 0 {
            continue;
        }
        if *r < 0.0 {
            if *r < -RATE_NEG_TOL {
                return Err(SpectralError::InvariantViolation {
                    what: "min off-diagonal rate",
                    value: *r,
                    tolerance: RATE_NEG_TOL,
                });
            }
            max_clip = max_clip.max(-*r);
            *r = 0.0;
        }
    }
    Ok(GeneratorRates {
        rates,
        max_clip,
        row_sum_residue,
    })
}

/// Eigendecomposition of one finite-model Hamiltonian.
#[derive(Debug, Clone)]
pub struct SpectralModel {
    params: GridParams,
    potential_values: Vec<f64>,
    eigenvalues: Vec<f64>,
    /// Columns are Euclidean-orthonormal eigenvectors, ascending eigenvalue
    /// order, canonical sign (largest-|entry| positive, ties at lowest u).
    basis: DMatrix<f64>,
}

/// Cyclic Jacobi eigendecomposition of a real symmetric matrix: returns
/// (eigenvalues, eigenvector columns) with A = V diag(λ) Vᵀ, unsorted.
///
/// Every update is an exact plane rotation, so accuracy does not degrade on
/// clustered or exactly degenerate spectra — the regime these Hamiltonians
/// live in — and the fixed sweep order makes the output deterministic.
/// O(M³) per sweep with a handful of sweeps; intended for the dense sizes
/// admitted by [`DENSE_CAP`].
fn symmetric_jacobi(a0: DMatrix<f64>, max_sweeps: u32) -> (Vec<f64>, DMatrix<f64>) {
    let m = a0.nrows();
    assert_eq!(m, a0.ncols(), "matrix must be square");
    // Column-major flat storage; columns p and q are contiguous slices, so
    // the hot rotations vectorize.
    let mut a = a0.as_slice().to_vec();
    let mut v = vec![0.0f64; m * m];
    for i in 0..m {
        v[i * m + i] = 1.0;
    }
    let diag = |a: &[f64]| -> Vec<f64> { (0..m).map(|i| a[i * m + i]).collect() };
    if m < 2 {
        return (diag(&a), DMatrix::from_vec(m, m, v));
    }
    // One sweep rotates every upper-triangle pair whose entry is not already
    // negligible relative to its diagonal pair; convergence is declared when
    // a whole sweep fires no rotation, which the relative skip threshold
    // guarantees happens after a few sweeps.
    for sweep in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..m - 1 {
            for q in (p + 1)..m {
                let app = a[p * m + p];
                let aqq = a[q * m + q];
                let apq = a[q * m + p];
                if apq.abs() <= f64::EPSILON * (app.abs() + aqq.abs()) * 0.5 {
                    continue;
                }
                rotated = true;
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // A ← A·J (columns p, q), then A ← Jᵀ·A (rows p, q): the
                // composition is the full two-sided rotation JᵀAJ.
                rotate_column_pair(&mut a, m, p, q, c, s);
                for col in a.chunks_exact_mut(m) {
                    let (xp, xq) = (col[p], col[q]);
                    col[p] = c * xp - s * xq;
                    col[q] = s * xp + c * xq;
                }
                rotate_column_pair(&mut v, m, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
        assert!(
            sweep + 1 < max_sweeps,
            "Jacobi sweep budget of {max_sweeps} exhausted"
        );
    }
    (diag(&a), DMatrix::from_vec(m, m, v))
}

/// In-place right-rotation of columns p < q of a column-major m×m matrix.
fn rotate_column_pair(data: &mut [f64], m: usize, p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = data.split_at_mut(q * m);
    let colp = &mut head[p * m..p * m + m];
    let colq = &mut tail[..m];
    for (xp, xq) in colp.iter_mut().zip(colq) {
        let (x, y) = (*xp, *xq);
        *xp = c * x - s * y;
        *xq = s * x + c * y;
    }
}

/// Householder reduction of a real symmetric matrix to tridiagonal form with
/// accumulation of the orthogonal transformation. On return `a` holds Q (as
/// rows a[k][j] = Q_{kj}), `d` the tridiagonal diagonal, `e` the subdiagonal
/// in e[1..]. Classic dense-eigensolver front end.
fn householder_reduce(a: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) {
    let n = a.len();
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let (head, tail) = a.split_at_mut(i);
            let row_i = &mut tail[0];
            let scale: f64 = row_i[..=l].iter().map(|x| x.abs()).sum();
            if scale == 0.0 {
                e[i] = row_i[l];
            } else {
                for k in 0..=l {
                    row_i[k] /= scale;
                    h += row_i[k] * row_i[k];
                }
                let f = row_i[l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                row_i[l] = f - g;
                let mut f_acc = 0.0;
                for j in 0..=l {
                    head[j][i] = row_i[j] / h;
                    let mut g_acc = 0.0;
                    for k in 0..=j {
                        g_acc += head[j][k] * row_i[k];
                    }
                    for k in (j + 1)..=l {
                        g_acc += head[k][j] * row_i[k];
                    }
                    e[j] = g_acc / h;
                    f_acc += e[j] * row_i[j];
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    let f = row_i[j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        head[j][k] -= f * e[k] + g * row_i[k];
                    }
                }
            }
        } else {
            e[i] = a[i][l];
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for i in 0..n {
        if d[i] != 0.0 {
            // a transformation was stored at step i; fold it into Q
            let (head, tail) = a.split_at_mut(i);
            let row_i = &tail[0];
            for j in 0..i {
                let mut g = 0.0;
                for (k, head_k) in head.iter().enumerate() {
                    g += row_i[k] * head_k[j];
                }
                for head_k in head.iter_mut() {
                    let corr = g * head_k[i];
                    head_k[j] -= corr;
                }
            }
        }
        d[i] = a[i][i];
        a[i][i] = 1.0;
        for j in 0..i {
            a[j][i] = 0.0;
            a[i][j] = 0.0;
        }
    }
}

/// Implicit-shift QL on a symmetric tridiagonal (d, e with e[0] unused),
/// rotating the eigenvector columns of the column-major matrix `z` along.
/// On return d holds eigenvalues (unsorted) and column j of z the matching
/// eigenvector.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], z: &mut [f64], n: usize) {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter <= 64, "QL iteration budget exhausted at mode {l}");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            let denom = g + if g >= 0.0 { r } else { -r };
            g = d[m] - d[l] + e[l] / denom;
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    // negligible rotation: deflate and restart this mode
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let (head, tail) = z.split_at_mut((i + 1) * n);
                let coli = &mut head[i * n..];
                let coli1 = &mut tail[..n];
                for (zi, zi1) in coli.iter_mut().zip(coli1) {
                    f = *zi1;
                    *zi1 = s * *zi + c * f;
                    *zi = c * *zi - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
}

/// Dense symmetric eigendecomposition: Householder tridiagonalization plus
/// implicit-shift QL, O(M³) once instead of per sweep. Returns unsorted
/// (eigenvalues, eigenvector columns) with A = V diag(λ) Vᵀ. Cross-validated
/// against [`symmetric_jacobi`] in the test suite.
fn symmetric_eigen_dense(a0: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a0.nrows();
    assert_eq!(n, a0.ncols(), "matrix must be square");
    if n == 0 {
        return (Vec::new(), a0);
    }
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| a0[(i, j)]).collect())
        .collect();
    let mut d = vec![0.0f64; n];
    let mut e = vec![0.0f64; n];
    householder_reduce(&mut rows, &mut d, &mut e);
    let mut z = vec![0.0f64; n * n];
    for (k, row) in rows.iter().enumerate() {
        for j in 0..n {
            z[k + j * n] = row[j];
        }
    }
    drop(rows);
    tridiagonal_ql(&mut d, &mut e, &mut z, n);
    (d, DMatrix::from_vec(n, n, z))
}

/// Sign that makes the largest-magnitude entry positive; among ties the
/// lowest index wins. Deterministic for every nonzero vector.
fn canonical_sign(v: &[f64]) -> f64 {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        -1.0
    } else {
        1.0
    }
}

impl SpectralModel {
    pub fn new(params: GridParams, potential: &PotentialSpec) -> Result<Self, SpectralError> {
        let h = materialize_hamiltonian(params, potential)?;
        let potential_values = potential.values(params)?;
        let (raw_values, raw_vectors) = symmetric_eigen_dense(h);
        let m = params.len();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| {
            raw_values[i]
                .partial_cmp(&raw_values[j])
                .expect("eigenvalues are finite")
        });
        let eigenvalues: Vec<f64> = order.iter().map(|&i| raw_values[i]).collect();
        let mut basis = DMatrix::zeros(m, m);
        for (dst, &src) in order.iter().enumerate() {
            let col = raw_vectors.column(src);
            let sign = canonical_sign(col.as_slice());
            for r in 0..m {
                basis[(r, dst)] = sign * col[r];
            }
        }
        Ok(SpectralModel {
            params,
            potential_values,
            eigenvalues,
            basis,
        })
    }

    pub fn params(&self) -> &GridParams {
        &self.params
    }

    pub fn potential_values(&self) -> &[f64] {
        &self.potential_values
    }

    /// Ascending eigenvalues of H.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// The j-th eigenfunction, Haar-orthonormal (e_j = p^{n/2} w_j), with
    /// the canonical sign convention.
    pub fn eigenfunction(&self, j: usize) -> Result<Vec<f64>, SpectralError> {
        if j >= self.eigenvalues.len() {
            return Err(SpectralError::IndexOutOfRange {
                j,
                len: self.eigenvalues.len(),
            });
        }
        let scale = self.params.haar().total_mass.sqrt();
        Ok(self.basis.column(j).iter().map(|x| x * scale).collect())
    }

    /// S_t = U e^{-tΛ} Uᵀ acting on value vectors: (e^{-tH} f)(u) = (S_t f)(u).
    pub fn semigroup(&self, t: f64) -> Result<DMatrix<f64>, SpectralError> {
        check_time(t)?;
        let decay = DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|l| (-t * l).exp()),
        );
        let scaled = &self.basis * DMatrix::from_diagonal(&decay);
        Ok(scaled * self.basis.transpose())
    }

    /// The integral kernel K_t(x,y) = p^n S_t[x][y] with respect to Haar
    /// measure: (e^{-tH} f)(x) = q^{-n} Σ_y K_t(x,y) f(y).
    pub fn propagator(&self, t: f64) -> Result<DMatrix<f64>, SpectralError> {
        Ok(self.semigroup(t)? * self.params.haar().total_mass)
    }

    /// Tr e^{-tH} = Σ_j e^{-t λ_j}.
    pub fn heat_trace(&self, t: f64) -> Result<f64, SpectralError> {
        check_time(t)?;
        Ok(self.eigenvalues.iter().map(|l| (-t * l).exp()).sum())
    }
}

/// Converts a semigroup matrix (acting on value vectors) into the propagator
/// kernel with respect to Haar measure.
pub fn semigroup_to_propagator(params: GridParams, s: &DMatrix<f64>) -> DMatrix<f64> {
    s * params.haar().total_mass
}

/// (C_{t/N} D_{t/N})^N where C is the exact free heat step (circulant of
/// q^{-n} p_{t/N,n}) and D = diag(e^{-(t/N)v}). Converges to S_t at rate 1/N.
pub fn trotter_semigroup(
    params: GridParams,
    potential: &PotentialSpec,
    t: f64,
    steps: u32,
) -> Result<DMatrix<f64>, SpectralError> {
    check_dense(&params)?;
    check_time(t)?;
    if steps == 0 {
        return Err(SpectralError::BadSteps);
    }
    let dt = t / steps as f64;
    let v = potential.values(params)?;
    let density = HeatDensity::closed_form(params, dt)?;
    let m = params.len();
    let w = params.haar().point_mass;
    let c = DMatrix::from_fn(m, m, |i, j| {
        let d = (j + m - i) % m;
        density.value(d as u128) * w
    });
    let d = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            (-dt * v[i]).exp()
        } else {
            0.0
        }
    });
    let step = c * d;
    Ok(matrix_power(step, steps))
}

fn matrix_power(base: DMatrix<f64>, e: u32) -> DMatrix<f64> {
    let m = base.nrows();
    let mut acc = DMatrix::identity(m, m);
    let mut sq = base;
    let mut e = e;
    while e > 0 {
        if e & 1 == 1 {
            acc = &acc * &sq;
        }
        e >>= 1;
        if e > 0 {
            sq = &sq * &sq;
        }
    }
    acc
}

/// Largest absolute entry difference between two equally-shaped matrices.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "matrices must share a shape");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Heat trace of one level together with the Haar mass the diagonal of the
/// propagator carries at large norms.
#[derive(Debug, Clone)]
pub struct TraceReport {
    pub n: u32,
    pub trace: f64,
    /// (m, q^{-n} Σ_{|x| ≥ p^m} K_t(x,x)) for each requested exponent m.
    pub diagonal_tails: Vec<(i32, f64)>,
}

pub fn trace_report(
    model: &SpectralModel,
    t: f64,
    tail_exponents: &[i32],
) -> Result<TraceReport, SpectralError> {
    let s = model.semigroup(t)?;
    let params = model.params();
    let trace = model.heat_trace(t)?;
    let mut diagonal_tails = Vec::with_capacity(tail_exponents.len());
    for &m in tail_exponents {
        // q^{-n} Σ_{|x| ≥ p^m} K(x,x) = Σ_{|x| ≥ p^m} S[u][u]
        let mut tail = 0.0;
        for u in 0..params.modulus() {
            let include = match params.norm_exponent_of(u) {
                None => false, // |0| = 0 never reaches a positive threshold
                Some(e) => e >= m,
            };
            if include {
                tail += s[(u as usize, u as usize)];
            }
        }
        diagonal_tails.push((m, tail));
    }
    Ok(TraceReport {
        n: params.n(),
        trace,
        diagonal_tails,
    })
}

/// Pointwise check of the diagonal bound
/// K_t(x,x) ≤ A · (e^{-(t/2) v*(x)} + |x|^{-k}), with v*(x) the infimum of
/// the potential over the norm class of x and the |x|^{-k} branch dropped at
/// x = 0. Reports the smallest admissible constant A.
#[derive(Debug, Clone)]
pub struct DiagonalBoundReport {
    pub n: u32,
    /// (u, K_t(x_u, x_u), bound expression at x_u, ratio).
    pub rows: Vec<(u128, f64, f64, f64)>,
    /// max over x of K_t(x,x) / bound(x): the constant the bound needs.
    pub required_constant: f64,
}

pub fn diagonal_bound_report(
    model: &SpectralModel,
    t: f64,
    decay_exponent: f64,
) -> Result<DiagonalBoundReport, SpectralError> {
    if !(decay_exponent > 0.0 && decay_exponent.is_finite()) {
        return Err(SpectralError::BadDecayExponent { k: decay_exponent });
    }
    let params = *model.params();
    let k = model.propagator(t)?;
    let v = model.potential_values();
    // radial infimum of the potential: index 0 holds the x = 0 class,
    // index m - (1 - n) + 1 the class |x| = p^m
    let n = params.n() as i32;
    let classes = (2 * params.n() + 1) as usize;
    let mut inf = vec![f64::INFINITY; classes];
    let class_of = |u: u128| -> usize {
        match params.norm_exponent_of(u) {
            None => 0,
            Some(m) => (m - (1 - n) + 1) as usize,
        }
    };
    for u in 0..params.modulus() {
        let c = class_of(u);
        inf[c] = inf[c].min(v[u as usize]);
    }
    let mut rows = Vec::with_capacity(params.len());
    let mut required = 0.0f64;
    for u in 0..params.modulus() {
        let diag = k[(u as usize, u as usize)];
        let vstar = inf[class_of(u)];
        let bound = match params.norm_exponent_of(u) {
            None => (-(t / 2.0) * vstar).exp(),
            Some(m) => {
                (-(t / 2.0) * vstar).exp()
                    + (params.p() as f64).powf(-decay_exponent * m as f64)
            }
        };
        let ratio = diag / bound;
        required = required.max(ratio);
        rows.push((u, diag, bound, ratio));
    }
    Ok(DiagonalBoundReport {
        n: params.n(),
        rows,
        required_constant: required,
    })
}

/// Averages a fine-grid value vector over the fiber of each coarse point:
/// the coarse residue u collects the p^{n2-n1} fine residues
/// u·p^{n2-n1} + c·p^{n1+n2} (mod p^{2n2}), which are exactly the fine points
/// of the coset x_u + B_{-n1}. Fine points outside B_{n1} belong to no
/// coarse point and are dropped.
pub fn restrict_to_level(
    fine: GridParams,
    coarse: GridParams,
    values: &[f64],
) -> Result<Vec<f64>, SpectralError> {
    if fine.p() != coarse.p() || coarse.n() >= fine.n() {
        return Err(SpectralError::BadLevelList);
    }
    if values.len() != fine.len() {
        return Err(SpectralError::PotentialLength {
            got: values.len(),
            want: fine.len(),
        });
    }
    let p = fine.p() as u128;
    let step = p.pow(fine.n() - coarse.n());
    let block = p.pow(fine.n() + coarse.n());
    let m2 = fine.modulus();
    let fiber = step; // p^{n2-n1} fine points per coarse point
    let mut out = Vec::with_capacity(coarse.len());
    for u in 0..coarse.modulus() {
        let mut acc = 0.0;
        for c in 0..fiber {
            let idx = (u * step + c * block) % m2;
            acc += values[idx as usize];
        }
        out.push(acc / fiber as f64);
    }
    Ok(out)
}

/// One mode's comparison between consecutive levels.
#[derive(Debug, Clone)]
pub struct EigenModeRow {
    pub j: usize,
    pub coarse_eigenvalue: f64,
    pub fine_eigenvalue: f64,
    /// |λ_j(fine) - λ_j(coarse)|.
    pub eigenvalue_gap: f64,
    /// Haar-L²(coarse) distance between the coarse eigenfunction and the
    /// restricted fine one after canonical sign alignment; for clustered
    /// modes, sin of the largest principal angle between the restricted
    /// cluster span and the coarse cluster span.
    pub eigenfunction_distance: f64,
    pub cluster_size: usize,
}

#[derive(Debug, Clone)]
pub struct EigenPairComparison {
    pub coarse_n: u32,
    pub fine_n: u32,
    pub modes: Vec<EigenModeRow>,
}

/// Maximal cluster [lo, hi] of index j under the gap threshold, scanning the
/// full ascending eigenvalue list.
fn cluster_of(eigenvalues: &[f64], j: usize) -> (usize, usize) {
    let mut lo = j;
    while lo > 0 && (eigenvalues[lo] - eigenvalues[lo - 1]).abs() < CLUSTER_GAP {
        lo -= 1;
    }
    let mut hi = j;
    while hi + 1 < eigenvalues.len()
        && (eigenvalues[hi + 1] - eigenvalues[hi]).abs() < CLUSTER_GAP
    {
        hi += 1;
    }
    (lo, hi)
}

/// Orthonormalizes the columns of a frame in place with modified
/// Gram–Schmidt, run twice for numerical insurance. Columns that collapse
/// below `tol` (rank deficiency) are replaced by zeros.
fn orthonormalize_columns(m: &mut DMatrix<f64>, tol: f64) {
    let (rows, cols) = m.shape();
    for _pass in 0..2 {
        for j in 0..cols {
            for k in 0..j {
                let dot: f64 = (0..rows).map(|r| m[(r, k)] * m[(r, j)]).sum();
                for r in 0..rows {
                    m[(r, j)] -= dot * m[(r, k)];
                }
            }
            let norm: f64 = (0..rows).map(|r| m[(r, j)] * m[(r, j)]).sum::<f64>().sqrt();
            if norm > tol {
                for r in 0..rows {
                    m[(r, j)] /= norm;
                }
            } else {
                for r in 0..rows {
                    m[(r, j)] = 0.0;
                }
            }
        }
    }
}

/// sin of the largest principal angle between the column spans of two
/// equally-sized frames in the same Euclidean space. The frames are
/// orthonormalized, the overlap Oᵀ = AᵀB is formed, and its smallest
/// singular value σ_min = cos θ_max comes from the Jacobi eigenvalues of
/// the small Gram matrix OᵀO.
fn subspace_distance(mut a: DMatrix<f64>, mut b: DMatrix<f64>) -> f64 {
    orthonormalize_columns(&mut a, 1e-12);
    orthonormalize_columns(&mut b, 1e-12);
    let overlap = a.transpose() * b;
    let gram = overlap.transpose() * &overlap;
    let (ev, _) = symmetric_jacobi(gram, 64);
    let lambda_min = ev.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
    let sigma_min = lambda_min.sqrt().clamp(0.0, 1.0);
    (1.0 - sigma_min * sigma_min).sqrt()
}

/// Compares the k lowest modes between consecutive levels of `levels`
/// (strictly increasing). Eigenfunctions travel via [`restrict_to_level`];
/// near-degenerate modes are compared as subspaces.
pub fn eigen_convergence_report(
    p: u32,
    levels: &[u32],
    alpha: f64,
    potential: &PotentialSpec,
    k: usize,
) -> Result<Vec<EigenPairComparison>, SpectralError> {
    ensure_sweepable(potential)?;
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SpectralError::BadLevelList);
    }
    let mut models = Vec::with_capacity(levels.len());
    for &n in levels {
        let params = GridParams::new(p, n, alpha)?;
        models.push(SpectralModel::new(params, potential)?);
    }
    let mut out = Vec::new();
    for pair in models.windows(2) {
        let (coarse, fine) = (&pair[0], &pair[1]);
        let cp = *coarse.params();
        let fp = *fine.params();
        let k_eff = k.min(coarse.eigenvalues().len()).min(fine.eigenvalues().len());
        let haar_c = cp.haar().point_mass;
        let mut modes = Vec::with_capacity(k_eff);
        let mut cluster_cache: Vec<(usize, usize, f64)> = Vec::new();
        for j in 0..k_eff {
            let (lo, hi) = cluster_of(fine.eigenvalues(), j);
            let cluster_size = hi - lo + 1;
            let distance = if cluster_size == 1 {
                let a = coarse.eigenfunction(j)?;
                let b = restrict_to_level(fp, cp, &fine.eigenfunction(j)?)?;
                let (sa, sb) = (canonical_sign(&a), canonical_sign(&b));
                let sq: f64 = a
                    .iter()
                    .zip(&b)
                    .map(|(x, y)| (sa * x - sb * y).powi(2))
                    .sum();
                (sq * haar_c).sqrt()
            } else if let Some(&(_, _, d)) =
                cluster_cache.iter().find(|(lo2, hi2, _)| *lo2 == lo && *hi2 == hi)
            {
                d
            } else {
                // Clusters can legitimately extend past k or past the coarse
                // mode count; clamp to the modes both levels possess.
                let hi_c = hi.min(coarse.eigenvalues().len() - 1);
                let cols = hi_c - lo + 1;
                let rows = cp.len();
                let mut a = DMatrix::zeros(rows, cols);
                let mut b = DMatrix::zeros(rows, cols);
                for (c, jj) in (lo..=hi_c).enumerate() {
                    let av = coarse.eigenfunction(jj)?;
                    let bv = restrict_to_level(fp, cp, &fine.eigenfunction(jj)?)?;
                    for r in 0..rows {
                        a[(r, c)] = av[r];
                        b[(r, c)] = bv[r];
                    }
                }
                let d = subspace_distance(a, b);
                cluster_cache.push((lo, hi, d));
                d
            };
            modes.push(EigenModeRow {
                j,
                coarse_eigenvalue: coarse.eigenvalues()[j],
                fine_eigenvalue: fine.eigenvalues()[j],
                eigenvalue_gap: (fine.eigenvalues()[j] - coarse.eigenvalues()[j]).abs(),
                eigenfunction_distance: distance,
                cluster_size,
            });
        }
        out.push(EigenPairComparison {
            coarse_n: cp.n(),
            fine_n: fp.n(),
            modes,
        });
    }
    Ok(out)
}
