//! The finite Fourier transform on X_n.
//!
//! With Haar mass q^{-n} = p^{-n} per point, the transform and its inverse are
//!
//!   (F_n f)(u)    = p^{-n} Σ_v f(v) e^{-2πi u v / M},
//!   (F_n^{-1} g)(u) = p^{-n} Σ_v g(v) e^{+2πi u v / M},    M = p^{2n}.
//!
//! F_n is unitary for the Haar-weighted inner product ⟨f,g⟩ = p^{-n} Σ f·ḡ,
//! F_n² is the parity map f(u) ↦ f(-u), and F_n⁴ = id. Convolution
//! (f ∗ g)(u) = p^{-n} Σ_v f(v) g(u-v) satisfies F_n(f ∗ g) = (F_n f)(F_n g).
//!
//! Two implementations are kept side by side and cross-validated: a direct
//! O(M²) sum (the reference) and a radix-p decimation-in-time FFT, O(M·2n·p).
//! Both index one twiddle table exp(2πi k/M), k ∈ [0, M), built once per
//! [`Fourier`]; every phase is carried as an exact integer mod M (products in
//! u128) until the final table lookup, so repeated transforms are
//! bit-reproducible and the two paths agree to near machine precision.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{GridError, GridParams, GridPoint};

/// Largest grid the library will materialize as a dense value vector.
/// Desk-scale levels (p ≤ 3, n ≤ 6 → M ≤ 531441) sit far below it; the cap
/// turns a hopeless allocation into a reportable capacity error.
pub const MATERIALIZE_CAP: u128 = 1 << 24;

/// Grid sizes up to this use the direct O(M²) transform; larger grids take
/// the radix-p fast path automatically.
pub const DIRECT_CUTOFF: usize = 512;

#[derive(Debug, Error)]
pub enum TransformError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("value vector has length {got}, grid has {want} points")]
    LengthMismatch { got: usize, want: usize },
    #[error("grid of M = {m} points exceeds the materialization cap {cap}")]
    CapacityExceeded { m: u128, cap: u128 },
    #[error("CSV line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Decimal float with 17 significant digits — enough for an exact f64
/// round-trip and stable across runs, as required of CSV artifacts.
pub fn float_repr(x: f64) -> String {
    format!("{x:.16e}")
}

/// A complex-valued function on the grid, stored densely by residue.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    params: GridParams,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(params: GridParams, values: Vec<Complex64>) -> Result<Self, TransformError> {
        check_capacity(&params)?;
        if values.len() != params.len() {
            return Err(TransformError::LengthMismatch {
                got: values.len(),
                want: params.len(),
            });
        }
        Ok(GridFunction { params, values })
    }

    pub fn zeros(params: GridParams) -> Result<Self, TransformError> {
        check_capacity(&params)?;
        Ok(GridFunction {
            params,
            values: vec![Complex64::new(0.0, 0.0); params.len()],
        })
    }

    /// The indicator of a single point (value 1 there, 0 elsewhere).
    pub fn delta(at: &GridPoint) -> Result<Self, TransformError> {
        let mut f = Self::zeros(*at.params())?;
        f.values[at.u() as usize] = Complex64::new(1.0, 0.0);
        Ok(f)
    }

    pub fn from_fn(
        params: GridParams,
        mut f: impl FnMut(&GridPoint) -> Complex64,
    ) -> Result<Self, TransformError> {
        check_capacity(&params)?;
        let values = (0..params.modulus())
            .map(|u| f(&params.point(u).expect("u < M by construction")))
            .collect();
        Ok(GridFunction { params, values })
    }

    pub fn params(&self) -> &GridParams {
        &self.params
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn value(&self, u: u128) -> Complex64 {
        self.values[u as usize]
    }

    /// p^{-n} Σ_u f(u): the integral of f against Haar measure.
    pub fn haar_integral(&self) -> Complex64 {
        pairwise_sum(&self.values) * self.params.haar().point_mass
    }

    /// Haar-weighted L² norm: (p^{-n} Σ |f(u)|²)^{1/2}.
    pub fn l2_norm(&self) -> f64 {
        let sq: f64 = self.values.iter().map(|z| z.norm_sqr()).sum();
        (sq * self.params.haar().point_mass).sqrt()
    }

    /// Largest |Im f(u)| — the diagnostic residue for quantities that are
    /// real in exact arithmetic.
    pub fn max_abs_imag(&self) -> f64 {
        self.values.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    /// Writes `u,re,im` rows (header included), floats with 17 significant
    /// digits, rows in increasing u. Byte-stable for identical inputs.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), TransformError> {
        writeln!(w, "u,re,im")?;
        for (u, z) in self.values.iter().enumerate() {
            writeln!(w, "{},{},{}", u, float_repr(z.re), float_repr(z.im))?;
        }
        Ok(())
    }

    /// Reads the format produced by [`GridFunction::write_csv`]; rows must
    /// cover every residue of `params` exactly once, in increasing order.
    pub fn read_csv<R: BufRead>(params: GridParams, r: R) -> Result<Self, TransformError> {
        check_capacity(&params)?;
        let mut values = Vec::with_capacity(params.len());
        let mut lines = r.lines().enumerate();
        match lines.next() {
            Some((_, Ok(h))) if h.trim() == "u,re,im" => {}
            Some((_, Ok(h))) => {
                return Err(TransformError::Csv {
                    line: 1,
                    msg: format!("expected header 'u,re,im', got '{h}'"),
                })
            }
            Some((_, Err(e))) => return Err(e.into()),
            None => {
                return Err(TransformError::Csv { line: 1, msg: "empty file".into() })
            }
        }
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let err = |msg: String| TransformError::Csv { line: idx + 1, msg };
            if fields.len() != 3 {
                return Err(err(format!("expected 3 fields, got {}", fields.len())));
            }
            let u: u128 = fields[0].trim().parse().map_err(|e| err(format!("bad u: {e}")))?;
            if u != values.len() as u128 {
                return Err(err(format!("expected u={}, got {}", values.len(), u)));
            }
            let re: f64 = fields[1].trim().parse().map_err(|e| err(format!("bad re: {e}")))?;
            let im: f64 = fields[2].trim().parse().map_err(|e| err(format!("bad im: {e}")))?;
            values.push(Complex64::new(re, im));
        }
        GridFunction::new(params, values)
    }
}

fn check_capacity(params: &GridParams) -> Result<(), TransformError> {
    if params.modulus() > MATERIALIZE_CAP {
        return Err(TransformError::CapacityExceeded {
            m: params.modulus(),
            cap: MATERIALIZE_CAP,
        });
    }
    Ok(())
}

fn check_same_grid(a: &GridFunction, b: &GridFunction) -> Result<(), TransformError> {
    if a.params == b.params {
        Ok(())
    } else {
        Err(TransformError::Grid(GridError::MismatchedGrids {
            left: a.params,
            right: b.params,
        }))
    }
}

/// Sum with pairwise splitting: error grows like log(len) instead of len,
/// which keeps the direct transform's cancellation error near machine
/// precision even at the largest direct-path sizes.
fn pairwise_sum(xs: &[Complex64]) -> Complex64 {
    if xs.len() <= 16 {
        let mut acc = Complex64::new(0.0, 0.0);
        for x in xs {
            acc += x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Transform context for one grid: the twiddle table exp(2πi k/M), k ∈ [0,M),
/// built once and shared by every transform, both paths, both directions.
#[derive(Debug, Clone)]
pub struct Fourier {
    params: GridParams,
    twiddle: Vec<Complex64>,
}

impl Fourier {
    pub fn new(params: GridParams) -> Result<Self, TransformError> {
        check_capacity(&params)?;
        let m = params.len();
        let step = std::f64::consts::TAU / m as f64;
        let twiddle = (0..m)
            .map(|k| {
                let theta = step * k as f64;
                Complex64::new(theta.cos(), theta.sin())
            })
            .collect();
        Ok(Fourier { params, twiddle })
    }

    pub fn params(&self) -> &GridParams {
        &self.params
    }

    /// exp(±2πi k/M) for an exact integer phase k (already reduced mod M).
    fn unit(&self, dir: Direction, phase: u128) -> Complex64 {
        let m = self.params.modulus();
        let idx = match dir {
            Direction::Inverse => phase,
            Direction::Forward => (m - phase) % m,
        };
        self.twiddle[idx as usize]
    }

    fn check_owns(&self, f: &GridFunction) -> Result<(), TransformError> {
        if *f.params() == self.params {
            Ok(())
        } else {
            Err(TransformError::Grid(GridError::MismatchedGrids {
                left: self.params,
                right: *f.params(),
            }))
        }
    }

    /// F_n f, choosing the fast path automatically above [`DIRECT_CUTOFF`].
    pub fn forward(&self, f: &GridFunction) -> Result<GridFunction, TransformError> {
        self.auto(f, Direction::Forward)
    }

    /// F_n^{-1} f, same path selection as [`Fourier::forward`].
    pub fn inverse(&self, f: &GridFunction) -> Result<GridFunction, TransformError> {
        self.auto(f, Direction::Inverse)
    }

    fn auto(&self, f: &GridFunction, dir: Direction) -> Result<GridFunction, TransformError> {
        if self.params.len() > DIRECT_CUTOFF {
            self.transform_fast(f, dir)
        } else {
            self.transform_direct(f, dir)
        }
    }

    /// Reference implementation: the literal O(M²) sum with exact integer
    /// phases, inner sums accumulated pairwise.
    pub fn transform_direct(
        &self,
        f: &GridFunction,
        dir: Direction,
    ) -> Result<GridFunction, TransformError> {
        self.check_owns(f)?;
        let m = self.params.modulus();
        let len = self.params.len();
        let scale = self.params.haar().point_mass;
        let mut out = Vec::with_capacity(len);
        let mut terms = vec![Complex64::new(0.0, 0.0); len];
        for u in 0..len as u128 {
            for v in 0..len {
                let phase = (u * v as u128) % m;
                terms[v] = f.values[v] * self.unit(dir, phase);
            }
            out.push(pairwise_sum(&terms) * scale);
        }
        Ok(GridFunction { params: self.params, values: out })
    }

    /// Radix-p decimation-in-time FFT for length M = p^{2n}.
    pub fn transform_fast(
        &self,
        f: &GridFunction,
        dir: Direction,
    ) -> Result<GridFunction, TransformError> {
        self.check_owns(f)?;
        let len = self.params.len();
        let mut out = vec![Complex64::new(0.0, 0.0); len];
        self.fft_rec(&f.values, 1, &mut out, dir);
        let scale = self.params.haar().point_mass;
        for z in &mut out {
            *z *= scale;
        }
        Ok(GridFunction { params: self.params, values: out })
    }

    /// Unnormalized DFT of x[0], x[stride], x[2·stride], … into out[0..len]:
    /// split into p interleaved subsequences, transform each recursively,
    /// recombine with twiddles e^{±2πi r k (M/len) / M} indexed exactly.
    fn fft_rec(&self, x: &[Complex64], stride: usize, out: &mut [Complex64], dir: Direction) {
        let len = out.len();
        if len == 1 {
            out[0] = x[0];
            return;
        }
        let p = self.params.p() as usize;
        let sub = len / p;
        for (r, chunk) in out.chunks_exact_mut(sub).enumerate() {
            self.fft_rec(&x[r * stride..], stride * p, chunk, dir);
        }
        let m = self.params.modulus();
        let tstep = (self.params.len() / len) as u128;
        let mut tmp = vec![Complex64::new(0.0, 0.0); len];
        for (k, slot) in tmp.iter_mut().enumerate() {
            let base = k % sub;
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..p {
                let phase = (tstep * r as u128 * k as u128) % m;
                acc += self.unit(dir, phase) * out[r * sub + base];
            }
            *slot = acc;
        }
        out.copy_from_slice(&tmp);
    }

    /// (f ∗ g)(u) = p^{-n} Σ_v f(v) g(u-v). Small grids take the literal sum;
    /// larger ones go through the transform pair (the convolution theorem).
    pub fn convolve(
        &self,
        f: &GridFunction,
        g: &GridFunction,
    ) -> Result<GridFunction, TransformError> {
        self.check_owns(f)?;
        check_same_grid(f, g)?;
        if self.params.len() <= DIRECT_CUTOFF {
            self.convolve_direct(f, g)
        } else {
            let fh = self.forward(f)?;
            let gh = self.forward(g)?;
            let prod: Vec<Complex64> = fh
                .values
                .iter()
                .zip(&gh.values)
                .map(|(a, b)| a * b)
                .collect();
            // F(f∗g) = (Ff)(Fg) carries no extra normalization: the p^{-n}
            // in the convolution matches the p^{-n} of one transform.
            self.inverse(&GridFunction { params: self.params, values: prod })
        }
    }

    /// Literal convolution sum, kept as the validating reference.
    pub fn convolve_direct(
        &self,
        f: &GridFunction,
        g: &GridFunction,
    ) -> Result<GridFunction, TransformError> {
        self.check_owns(f)?;
        check_same_grid(f, g)?;
        let len = self.params.len();
        let scale = self.params.haar().point_mass;
        let mut out = Vec::with_capacity(len);
        let mut terms = vec![Complex64::new(0.0, 0.0); len];
        for u in 0..len {
            for v in 0..len {
                let w = (u + len - v) % len;
                terms[v] = f.values[v] * g.values[w];
            }
            out.push(pairwise_sum(&terms) * scale);
        }
        Ok(GridFunction { params: self.params, values: out })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(p: u32, n: u32) -> GridParams {
        GridParams::new(p, n, 1.0).unwrap()
    }

    fn random_function(params: GridParams, seed: u64) -> GridFunction {
        // tiny deterministic LCG; test data only
        let mut state = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
        let mut next = move || {
            state = state.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        GridFunction::from_fn(params, |_| Complex64::new(next(), next())).unwrap()
    }

    #[test]
    fn delta_transforms_to_unit_modulus_constant() {
        // F(1_{x0})(u) = p^{-n} e^{-2πi u·u0 / M}; for x0 = 0 it is the
        // constant p^{-n}.
        let g = params(2, 1);
        let f = Fourier::new(g).unwrap();
        let d0 = GridFunction::delta(&g.point(0).unwrap()).unwrap();
        let hat = f.forward(&d0).unwrap();
        for z in hat.values() {
            assert!((z - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        }
        let d1 = GridFunction::delta(&g.point(1).unwrap()).unwrap();
        let hat1 = f.forward(&d1).unwrap();
        for (u, z) in hat1.values().iter().enumerate() {
            let theta = -std::f64::consts::TAU * (u as f64) / 4.0;
            let expect = Complex64::from_polar(0.5, theta);
            assert!((z - expect).norm() < 1e-15, "u={u}");
        }
    }

    #[test]
    fn inverse_undoes_forward() {
        for (p, n) in [(2, 2), (3, 1), (5, 1)] {
            let g = params(p, n);
            let f = Fourier::new(g).unwrap();
            let x = random_function(g, 7 + p as u64);
            let back = f.inverse(&f.forward(&x).unwrap()).unwrap();
            let err: f64 = x
                .values()
                .iter()
                .zip(back.values())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-13, "p={p} n={n}: {err}");
        }
    }

    #[test]
    fn double_transform_is_parity_and_fourth_power_is_identity() {
        let g = params(3, 1);
        let f = Fourier::new(g).unwrap();
        let x = random_function(g, 11);
        let ff = f.forward(&f.forward(&x).unwrap()).unwrap();
        let m = g.len();
        for u in 0..m {
            let mirrored = x.values()[(m - u) % m];
            assert!((ff.values()[u] - mirrored).norm() < 1e-13);
        }
        let ffff = f.forward(&f.forward(&ff).unwrap()).unwrap();
        for u in 0..m {
            assert!((ffff.values()[u] - x.values()[u]).norm() < 1e-12);
        }
    }

    #[test]
    fn fast_path_matches_direct_reference() {
        // One odd and one even prime, exercising multiple recursion depths.
        for (p, n) in [(2u32, 3u32), (3, 2), (2, 4), (5, 1)] {
            let g = params(p, n);
            let f = Fourier::new(g).unwrap();
            let x = random_function(g, 1000 + (p * n) as u64);
            for dir in [Direction::Forward, Direction::Inverse] {
                let a = f.transform_direct(&x, dir).unwrap();
                let b = f.transform_fast(&x, dir).unwrap();
                let err: f64 = a
                    .values()
                    .iter()
                    .zip(b.values())
                    .map(|(u, v)| (u - v).norm())
                    .fold(0.0, f64::max);
                assert!(err < 1e-12, "p={p} n={n} {dir:?}: {err}");
            }
        }
    }

    #[test]
    fn convolution_theorem_holds() {
        let g = params(2, 2);
        let f = Fourier::new(g).unwrap();
        let a = random_function(g, 21);
        let b = random_function(g, 22);
        let direct = f.convolve_direct(&a, &b).unwrap();
        let fa = f.forward(&a).unwrap();
        let fb = f.forward(&b).unwrap();
        let fc = f.forward(&direct).unwrap();
        for u in 0..g.len() {
            let prod = fa.values()[u] * fb.values()[u];
            assert!((fc.values()[u] - prod).norm() < 1e-13);
        }
    }

    #[test]
    fn twiddle_phases_mark_exact_roots_of_unity() {
        let g = params(3, 1);
        let f = Fourier::new(g).unwrap();
        for k in 0..g.len() {
            let z = f.twiddle[k];
            assert!((z.norm() - 1.0).abs() < 1e-15);
            let conj = f.twiddle[(g.len() - k) % g.len()];
            assert!((z * conj - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let g = params(2, 2);
        let x = random_function(g, 99);
        let mut buf = Vec::new();
        x.write_csv(&mut buf).unwrap();
        let back = GridFunction::read_csv(g, buf.as_slice()).unwrap();
        assert_eq!(x, back);
        let mut buf2 = Vec::new();
        back.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn csv_rejects_malformed_input() {
        let g = params(2, 1);
        let bad_header = "x,y,z\n0,1,2\n";
        assert!(matches!(
            GridFunction::read_csv(g, bad_header.as_bytes()),
            Err(TransformError::Csv { line: 1, .. })
        ));
        let bad_order = "u,re,im\n1,0.0,0.0\n";
        assert!(matches!(
            GridFunction::read_csv(g, bad_order.as_bytes()),
            Err(TransformError::Csv { line: 2, .. })
        ));
        let too_short = "u,re,im\n0,0.0,0.0\n";
        assert!(matches!(
            GridFunction::read_csv(g, too_short.as_bytes()),
            Err(TransformError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn float_repr_has_seventeen_significant_digits() {
        let s = float_repr(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
    }

    proptest! {
        #[test]
        fn transform_is_unitary(seed in 0u64..1000,
                                pn in prop::sample::select(vec![(2u32, 1u32), (2, 2), (3, 1)])) {
            let g = params(pn.0, pn.1);
            let f = Fourier::new(g).unwrap();
            let x = random_function(g, seed);
            let hat = f.forward(&x).unwrap();
            prop_assert!((hat.l2_norm() - x.l2_norm()).abs() < 1e-12);
        }

        #[test]
        fn convolution_routes_agree(seed in 0u64..500) {
            let g = params(2, 2);
            let f = Fourier::new(g).unwrap();
            let a = random_function(g, seed);
            let b = random_function(g, seed ^ 0xabcd);
            let direct = f.convolve_direct(&a, &b).unwrap();
            // transform route, forced even though the grid is small
            let fa = f.forward(&a).unwrap();
            let fb = f.forward(&b).unwrap();
            let prod: Vec<Complex64> = fa.values().iter().zip(fb.values())
                .map(|(x, y)| x * y).collect();
            let via = f.inverse(&GridFunction::new(g, prod).unwrap()).unwrap();
            for u in 0..g.len() {
                prop_assert!((direct.values()[u] - via.values()[u]).norm() < 1e-12);
            }
        }
    }
}
