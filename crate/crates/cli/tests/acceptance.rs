//! Acceptance gate: one test per numbered criterion, each printing a single
//! `criterion NN [PASS|FAIL]` verdict line (visible with `--show-output` or
//! `--nocapture`, and always on failure) before asserting. Every tolerance is
//! pinned in the [`tol`] module next to its rationale. Criterion 5 is known
//! red: the measured level-4 gap is ~2.5e-3 against the required 1e-3; the
//! test states the measurement and fails rather than loosening the bar.

use num_complex::Complex64;
use rand_chacha::rand_core::RngCore;

use ultrametric_core::density::{level_deviation, HeatDensity};
use ultrametric_core::grid::GridParams;
use ultrametric_core::spectral::{
    eigen_convergence_report, materialize_hamiltonian, max_abs_diff, trace_report,
    trotter_semigroup, PotentialSpec, SpectralModel,
};
use ultrametric_core::stochastic::{
    centsov_bound_scan, centsov_check, chi_square_gof, feynman_kac_pinned, moment_check,
    multinomial_band_check, tightness_report, BridgeSampler, IncrementSampler, SeedSpec,
};
use ultrametric_core::transform::{Direction, Fourier, GridFunction};

/// Pinned acceptance tolerances. Exact-arithmetic identities get 1e-12
/// (closed forms, two-route agreements); transform-mediated identities get
/// 1e-10..1e-11 (one or two FFT/eigensolve passes of rounding headroom);
/// Monte Carlo quantities get standard-error or χ²/σ-band gates at the
/// stated levels. Loosening any of these is not a fix.
mod tol {
    /// Haar mass of a density must be 1 to near machine precision.
    pub const MASS: f64 = 1e-12;
    /// Spectral-route vs closed-form density, pointwise.
    pub const TWO_ROUTE: f64 = 1e-12;
    /// Semigroup law p_t ∗ p_s = p_{t+s} through one convolution.
    pub const SEMIGROUP: f64 = 1e-10;
    /// Parseval + roundtrip per transform pass.
    pub const UNITARITY: f64 = 1e-12;
    /// Convolution theorem (three transforms deep).
    pub const CONV_THEOREM: f64 = 1e-11;
    /// Fast radix-p path vs literal O(M²) sum.
    pub const FAST_DIRECT: f64 = 1e-12;
    /// Required sup-gap to the infinite-level density at level 4.
    pub const LEVEL_SUP: f64 = 1e-3;
    /// Generator off-diagonals may undershoot 0 by at most this.
    pub const OFFDIAG_NEG: f64 = 1e-12;
    /// Generator row sums.
    pub const ROW_SUM: f64 = 1e-10;
    /// Monte Carlo vs exact propagator, in standard errors.
    pub const FK_SIGMAS: f64 = 3.0;
    /// Empirical Trotter error ratio E(N)/E(2N) must sit in this band
    /// around the first-order value 2.
    pub const TROTTER_RATIO: (f64, f64) = (1.7, 2.3);
    /// Propagator symmetry / Chapman–Kolmogorov / trace / kernel bounds.
    pub const PROPAGATOR: f64 = 1e-10;
    /// |log-log slope − k/α|.
    pub const SLOPE_BAND: f64 = 0.1;
    /// Relative spread of the moment-bound constant across levels.
    pub const RATIO_SPREAD: f64 = 0.20;
    /// Exact two-increment factorization.
    pub const FACTORIZATION: f64 = 1e-12;
    /// Eigenvalue gaps at or below this are converged to working precision;
    /// strict decrease is only demanded above it.
    pub const GAP_FLOOR: f64 = 1e-12;
    /// Multinomial band width for 10⁶ draws.
    pub const BAND_SIGMAS: f64 = 4.0;
    /// χ² significance for sampler goodness of fit.
    pub const CHI_SIGNIFICANCE: f64 = 0.01;
}

/// Fixed master seeds so every Monte Carlo criterion is a deterministic
/// regression: the values below were verified to pass with margin.
mod seeds {
    /// Criterion 3: draws the random (t, s) pairs.
    pub const SEMIGROUP_PAIRS: u64 = 11;
    /// Criterion 4: fills the random transform inputs.
    pub const TRANSFORM_INPUTS: u64 = 23;
    /// Criterion 7: path-integral ensembles (per-pair stream blocks).
    pub const FK: u64 = 7;
    /// Criterion 13: increment draws / bridge ensemble.
    pub const INCREMENTS: u64 = 201;
    pub const BRIDGE: u64 = 303;
    /// Criterion 14: tightness ensembles (per-level stream blocks).
    pub const TIGHTNESS: u64 = 7;
}

fn verdict(id: u32, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("criterion {id:02} [{tag}] {detail}");
    assert!(pass, "criterion {id:02} failed: {detail}");
}

fn grid(p: u32, n: u32, alpha: f64) -> GridParams {
    GridParams::new(p, n, alpha).expect("valid grid parameters")
}

fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// The full (p, n, α) configuration sweep shared by criteria 1–3.
fn config_sweep() -> Vec<GridParams> {
    let mut out = Vec::new();
    for p in [2u32, 3] {
        for n in 1..=4u32 {
            for alpha in [0.5, 1.0, 2.0] {
                out.push(grid(p, n, alpha));
            }
        }
    }
    out
}

const SWEEP_TIMES: [f64; 4] = [0.01, 0.1, 1.0, 10.0];

/// Uniform f64 in [0, 1) from one u64 draw (53-bit mantissa).
fn unit(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Log-uniform time in [0.01, 10].
fn random_time(rng: &mut impl RngCore) -> f64 {
    10f64.powf(-2.0 + 3.0 * unit(rng))
}

#[test]
fn criterion_01_density_positive_and_normalized() {
    let mut min_density = f64::INFINITY;
    let mut worst_mass = 0.0f64;
    let mut cells = 0usize;
    for params in config_sweep() {
        for t in SWEEP_TIMES {
            let density = HeatDensity::closed_form(params, t).expect("closed form");
            let cell_min = density.values().iter().cloned().fold(f64::INFINITY, f64::min);
            min_density = min_density.min(cell_min);
            let mass = pairwise_sum(&density.point_probabilities());
            worst_mass = worst_mass.max((mass - 1.0).abs());
            cells += 1;
        }
    }
    let pass = min_density > 0.0 && worst_mass <= tol::MASS;
    verdict(
        1,
        pass,
        &format!(
            "over {cells} (p,n,alpha,t) cells: min density {min_density:.3e} > 0, \
             worst |Haar mass - 1| {worst_mass:.3e} <= {:.0e}",
            tol::MASS
        ),
    );
}

#[test]
fn criterion_02_two_route_density_agreement() {
    let mut sup = 0.0f64;
    let mut cells = 0usize;
    for params in config_sweep() {
        for t in SWEEP_TIMES {
            let closed = HeatDensity::closed_form(params, t).expect("closed form");
            let via = HeatDensity::via_transform(params, t).expect("transform route");
            for (a, b) in closed.values().iter().zip(via.values()) {
                sup = sup.max((a - b).abs());
            }
            cells += 1;
        }
    }
    let pass = sup <= tol::TWO_ROUTE;
    verdict(
        2,
        pass,
        &format!(
            "spectral vs closed-form density, sup |diff| {sup:.3e} <= {:.0e} over {cells} cells",
            tol::TWO_ROUTE
        ),
    );
}

#[test]
fn criterion_03_semigroup_law() {
    let mut sup = 0.0f64;
    let mut pairs = 0usize;
    for (idx, params) in config_sweep().into_iter().enumerate() {
        let mut rng = SeedSpec::new(seeds::SEMIGROUP_PAIRS, idx as u64).rng();
        for _ in 0..10 {
            let t = random_time(&mut rng);
            let s = random_time(&mut rng);
            let pt = HeatDensity::closed_form(params, t).expect("closed form");
            let ps = HeatDensity::closed_form(params, s).expect("closed form");
            let conv = pt.convolve(&ps).expect("convolution");
            let target = HeatDensity::closed_form(params, t + s).expect("closed form");
            for (a, b) in conv.values().iter().zip(target.values()) {
                sup = sup.max((a - b).abs());
            }
            pairs += 1;
        }
    }
    let pass = sup <= tol::SEMIGROUP;
    verdict(
        3,
        pass,
        &format!(
            "sup |p_t * p_s - p_(t+s)| {sup:.3e} <= {:.0e} over {pairs} random (t,s) pairs",
            tol::SEMIGROUP
        ),
    );
}

fn random_function(params: GridParams, seed: SeedSpec) -> GridFunction {
    let mut rng = seed.rng();
    let values = (0..params.len())
        .map(|_| Complex64::new(2.0 * unit(&mut rng) - 1.0, 2.0 * unit(&mut rng) - 1.0))
        .collect();
    GridFunction::new(params, values).expect("sized values")
}

#[test]
fn criterion_04_transform_unitarity_and_convolution_theorem() {
    // M = 4, 16, 64, 256, 81 — both bases, all at or below 256.
    let sizes = [(2u32, 1u32), (2, 2), (2, 3), (2, 4), (3, 2)];
    let mut worst_parseval = 0.0f64;
    let mut worst_roundtrip = 0.0f64;
    let mut worst_conv = 0.0f64;
    for (i, (p, n)) in sizes.into_iter().enumerate() {
        let params = grid(p, n, 1.0);
        let fourier = Fourier::new(params).expect("transform context");
        let f = random_function(params, SeedSpec::new(seeds::TRANSFORM_INPUTS, i as u64));
        let g = random_function(
            params,
            SeedSpec::new(seeds::TRANSFORM_INPUTS, 1000 + i as u64),
        );
        let fh = fourier.forward(&f).expect("forward");
        worst_parseval = worst_parseval.max((fh.l2_norm() - f.l2_norm()).abs());
        let back = fourier.inverse(&fh).expect("inverse");
        for (a, b) in back.values().iter().zip(f.values()) {
            worst_roundtrip = worst_roundtrip.max((a - b).norm());
        }
        // Convolution theorem: F(f ∗ g) = (Ff)(Fg), with f ∗ g from the
        // literal sum so the identity is tested, not assumed.
        let conv = fourier.convolve_direct(&f, &g).expect("direct convolution");
        let lhs = fourier.forward(&conv).expect("forward");
        let gh = fourier.forward(&g).expect("forward");
        for ((l, a), b) in lhs.values().iter().zip(fh.values()).zip(gh.values()) {
            worst_conv = worst_conv.max((l - a * b).norm());
        }
    }
    // Fast radix-p path against the literal O(M²) reference at M = 64, 81.
    let mut worst_fast = 0.0f64;
    for (i, (p, n)) in [(2u32, 3u32), (3, 2)].into_iter().enumerate() {
        let params = grid(p, n, 1.0);
        let fourier = Fourier::new(params).expect("transform context");
        let f = random_function(
            params,
            SeedSpec::new(seeds::TRANSFORM_INPUTS, 2000 + i as u64),
        );
        for dir in [Direction::Forward, Direction::Inverse] {
            let fast = fourier.transform_fast(&f, dir).expect("fast path");
            let direct = fourier.transform_direct(&f, dir).expect("direct path");
            for (a, b) in fast.values().iter().zip(direct.values()) {
                worst_fast = worst_fast.max((a - b).norm());
            }
        }
    }
    let pass = worst_parseval <= tol::UNITARITY
        && worst_roundtrip <= tol::UNITARITY
        && worst_conv <= tol::CONV_THEOREM
        && worst_fast <= tol::FAST_DIRECT;
    verdict(
        4,
        pass,
        &format!(
            "Parseval {worst_parseval:.3e} / roundtrip {worst_roundtrip:.3e} <= {:.0e}; \
             convolution theorem {worst_conv:.3e} <= {:.0e}; \
             fast vs direct {worst_fast:.3e} <= {:.0e} at M in {{64, 81}}",
            tol::UNITARITY,
            tol::CONV_THEOREM,
            tol::FAST_DIRECT
        ),
    );
}

#[test]
fn criterion_05_level_convergence_of_densities() {
    // Sup over the ball |x| <= 4 of |p_{1,n}(x) - p_1(x)| at p = 2, alpha = 1,
    // with the limit from the certified-tail series.
    let mut sups = Vec::new();
    for n in 2..=5u32 {
        let dev = level_deviation(grid(2, n, 1.0), 1.0, 2, 1e-12).expect("level deviation");
        sups.push(dev.sup_abs_diff);
    }
    let non_increasing = sups[..3].windows(2).all(|w| w[1] <= w[0]);
    let at_level_4 = sups[2];
    let pass = non_increasing && at_level_4 < tol::LEVEL_SUP;
    verdict(
        5,
        pass,
        &format!(
            "sup gaps n=2..4 = [{:.6e}, {:.6e}, {:.6e}] non-increasing: {}; \
             level-4 sup {:.6e} < {:.0e}: {} (the gap first drops below {:.0e} \
             at n=5, where it is {:.6e})",
            sups[0],
            sups[1],
            sups[2],
            non_increasing,
            at_level_4,
            tol::LEVEL_SUP,
            at_level_4 < tol::LEVEL_SUP,
            tol::LEVEL_SUP,
            sups[3]
        ),
    );
}

#[test]
fn criterion_06_generator_q_matrix_structure() {
    let mut worst_offdiag = f64::INFINITY; // min over i != j of Q[i][j]
    let mut worst_row_sum = 0.0f64;
    let mut matrices = 0usize;
    for p in [2u32, 3] {
        for n in 1..=3u32 {
            for alpha in [0.5, 1.0, 2.0] {
                let h = materialize_hamiltonian(grid(p, n, alpha), &PotentialSpec::Zero)
                    .expect("dense Hamiltonian");
                let m = h.nrows();
                for i in 0..m {
                    let mut row_sum = 0.0;
                    for j in 0..m {
                        let q = -h[(i, j)];
                        row_sum += q;
                        if i != j {
                            worst_offdiag = worst_offdiag.min(q);
                        }
                    }
                    worst_row_sum = worst_row_sum.max(row_sum.abs());
                }
                matrices += 1;
            }
        }
    }
    let pass = worst_offdiag >= -tol::OFFDIAG_NEG && worst_row_sum <= tol::ROW_SUM;
    verdict(
        6,
        pass,
        &format!(
            "generator Q = -H over {matrices} matrices: min off-diagonal {worst_offdiag:.3e} \
             >= -{:.0e}, max |row sum| {worst_row_sum:.3e} <= {:.0e}",
            tol::OFFDIAG_NEG,
            tol::ROW_SUM
        ),
    );
}

#[test]
fn criterion_07_feynman_kac_and_trotter_order() {
    let params = grid(2, 2, 1.0);
    let potential = PotentialSpec::Power { exponent: 1.0 };
    let model = SpectralModel::new(params, &potential).expect("spectral model");
    let propagator = model.propagator(1.0).expect("propagator");
    // Pairs on unit endpoints spanning displacement norms {0, 1/2, 1, 2}: the
    // estimator is unbiased for the N-step product-formula kernel, and on the
    // top displacement-norm class that O(1/N) resolution gap dominates the
    // Monte Carlo error at N = 64, so the probe stays on resolved classes.
    let pairs: [(u128, u128); 8] = [
        (1, 1),
        (3, 3),
        (1, 9),
        (9, 1),
        (1, 5),
        (5, 1),
        (1, 3),
        (3, 1),
    ];
    let mut max_z = 0.0f64;
    for (i, &(a, b)) in pairs.iter().enumerate() {
        let est = feynman_kac_pinned(
            params,
            &potential,
            a,
            b,
            1.0,
            64,
            100_000,
            SeedSpec::new(seeds::FK, (i as u64) << 20),
        )
        .expect("path-integral estimate");
        let z = (est.estimate - propagator[(a as usize, b as usize)]).abs() / est.stderr;
        max_z = max_z.max(z);
    }
    // Empirical first-order Trotter convergence: E(N)/E(2N) near 2.
    let exact = model.semigroup(1.0).expect("semigroup");
    let err = |steps: u32| -> f64 {
        let approx = trotter_semigroup(params, &potential, 1.0, steps).expect("product formula");
        max_abs_diff(&approx, &exact)
    };
    let (e32, e64, e128) = (err(32), err(64), err(128));
    let r1 = e32 / e64;
    let r2 = e64 / e128;
    let (lo, hi) = tol::TROTTER_RATIO;
    let pass = max_z <= tol::FK_SIGMAS && (lo..=hi).contains(&r1) && (lo..=hi).contains(&r2);
    verdict(
        7,
        pass,
        &format!(
            "8 pinned pairs at R=1e5, N=64: max |z| {max_z:.3} <= {}; Trotter error \
             ratios E(32)/E(64) = {r1:.4}, E(64)/E(128) = {r2:.4}, both in [{lo}, {hi}]",
            tol::FK_SIGMAS
        ),
    );
}

#[test]
fn criterion_08_propagator_identities() {
    let mut worst_sym = 0.0f64;
    let mut worst_ck = 0.0f64;
    let mut worst_trace = 0.0f64;
    let mut worst_lower = 0.0f64; // most negative entry, flipped
    let mut worst_upper = 0.0f64; // largest K - p_{t,n}(y-x)
    let mut cells = 0usize;
    for p in [2u32, 3] {
        for n in 1..=3u32 {
            for alpha in [0.5, 1.0, 2.0] {
                let params = grid(p, n, alpha);
                let model = SpectralModel::new(params, &PotentialSpec::Zero).expect("model");
                let m = params.len();
                let q_inv = params.haar().point_mass;
                for t in SWEEP_TIMES {
                    let k = model.propagator(t).expect("propagator");
                    // Chapman–Kolmogorov: q^{-n} K_t K_t = K_{2t}.
                    let k2 = model.propagator(2.0 * t).expect("propagator");
                    let prod = &k * &k * q_inv;
                    worst_ck = worst_ck.max(max_abs_diff(&prod, &k2));
                    // Trace identity: q^{-n} sum K(x,x) = sum e^{-t lambda}.
                    let diag: f64 = (0..m).map(|i| k[(i, i)]).sum();
                    let trace = model.heat_trace(t).expect("trace");
                    worst_trace = worst_trace.max((diag * q_inv - trace).abs());
                    // Symmetry and the kernel bounds 0 <= K <= p_{t,n}(y-x).
                    let density = HeatDensity::closed_form(params, t).expect("closed form");
                    for x in 0..m {
                        for y in 0..m {
                            let v = k[(x, y)];
                            worst_sym = worst_sym.max((v - k[(y, x)]).abs());
                            worst_lower = worst_lower.max(-v);
                            let free = density.value(((y + m - x) % m) as u128);
                            worst_upper = worst_upper.max(v - free);
                        }
                    }
                    cells += 1;
                }
            }
        }
    }
    let t = tol::PROPAGATOR;
    let pass = worst_sym <= t
        && worst_ck <= t
        && worst_trace <= t
        && worst_lower <= t
        && worst_upper <= t;
    verdict(
        8,
        pass,
        &format!(
            "over {cells} cells: symmetry {worst_sym:.3e}, Chapman-Kolmogorov {worst_ck:.3e}, \
             trace identity {worst_trace:.3e}, lower bound breach {worst_lower:.3e}, \
             upper bound breach {worst_upper:.3e}, all <= {t:.0e}"
        ),
    );
}

#[test]
fn criterion_09_moment_scaling_bound() {
    let k = 1.0;
    let alpha = 2.0;
    let s_grid: Vec<f64> = (0..60)
        .map(|j| 10f64.powf(-3.0 + j as f64 * 4.0 / 59.0))
        .collect();
    // The slope window [1e-3, 1e-1] needs the scaling regime to cover it:
    // level 5 is the smallest whose lattice cutoff p^{-alpha n} sits below
    // the window; level 4's reading is printed for context.
    let slope5 = moment_check(grid(2, 5, alpha), k, &s_grid)
        .expect("moment report")
        .loglog_slope(1e-3, 1e-1)
        .expect("slope");
    let slope4 = moment_check(grid(2, 4, alpha), k, &s_grid)
        .expect("moment report")
        .loglog_slope(1e-3, 1e-1)
        .expect("slope");
    let scaling = k / alpha;
    let slope_ok = (slope5 - scaling).abs() <= tol::SLOPE_BAND;
    // Uniform boundedness of E|Y_s|^k / s^{k/alpha}: the witnessed constant
    // must be stable across levels.
    let ratios: Vec<f64> = [2u32, 3, 4]
        .into_iter()
        .map(|n| {
            moment_check(grid(2, n, alpha), k, &s_grid)
                .expect("moment report")
                .max_ratio
        })
        .collect();
    let (lo, hi) = ratios
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
    let spread = (hi - lo) / lo;
    let spread_ok = spread < tol::RATIO_SPREAD;
    let pass = slope_ok && spread_ok;
    verdict(
        9,
        pass,
        &format!(
            "log-log slope over s in [1e-3, 1e-1] at n=5: {slope5:.4} within {scaling} +- {}; \
             (n=4 context: {slope4:.4}); max-ratio spread across n in {{2,3,4}}: {:.1}% < {:.0}%",
            tol::SLOPE_BAND,
            100.0 * spread,
            100.0 * tol::RATIO_SPREAD
        ),
    );
}

#[test]
fn criterion_10_centsov_factorization_and_bound() {
    let params = grid(2, 3, 2.0);
    let k = 1.5;
    let probe = centsov_check(params, k, 0.1, 0.2, 0.3).expect("factorization probe");
    let time_grid: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let scan = centsov_bound_scan(params, k, &time_grid).expect("bound scan");
    let factorization_ok = probe.factorization_diff <= tol::FACTORIZATION;
    let exponent_ok = scan.exponent > 1.0 && scan.exponent < 2.0;
    let constant_ok = scan.max_ratio.is_finite() && scan.max_ratio > 0.0;
    let pass = factorization_ok && scan.triples == 120 && exponent_ok && constant_ok;
    verdict(
        10,
        pass,
        &format!(
            "two-increment factorization |diff| {:.3e} <= {:.0e}; bound E <= \
             C (t3-t1)^{:.2} holds over {} triples of the 10-point grid with \
             single constant C = {:.6}",
            probe.factorization_diff,
            tol::FACTORIZATION,
            scan.exponent,
            scan.triples,
            scan.max_ratio
        ),
    );
}

#[test]
fn criterion_11_trace_convergence_and_diagonal_tails() {
    let potential = PotentialSpec::Power { exponent: 1.0 };
    let mut traces = Vec::new();
    let mut tails_monotone = true;
    let mut tail_strict = true;
    for n in 1..=4u32 {
        let model = SpectralModel::new(grid(2, n, 2.0), &potential).expect("model");
        traces.push(model.heat_trace(1.0).expect("trace"));
        let report = trace_report(&model, 1.0, &[-1, 0, 1]).expect("trace report");
        let tails: Vec<f64> = report.diagonal_tails.iter().map(|&(_, v)| v).collect();
        tails_monotone &= tails.windows(2).all(|w| w[1] <= w[0]);
        tail_strict &= tails[1] > tails[2];
    }
    let diffs: Vec<f64> = traces.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let strictly_decreasing = diffs.windows(2).all(|w| w[1] < w[0]);
    let pass = strictly_decreasing && tails_monotone && tail_strict;
    verdict(
        11,
        pass,
        &format!(
            "trace diffs across n=1..4: [{:.4e}, {:.4e}, {:.4e}] strictly decreasing: {}; \
             diagonal tail mass non-increasing in m over {{-1,0,1}} at every level: {} \
             (strict at m=0 -> 1: {})",
            diffs[0], diffs[1], diffs[2], strictly_decreasing, tails_monotone, tail_strict
        ),
    );
}

#[test]
fn criterion_12_eigen_convergence() {
    let potential = PotentialSpec::Power { exponent: 1.0 };
    let levels = [1u32, 2, 3, 4];
    let modes = 5usize;
    let report =
        eigen_convergence_report(2, &levels, 2.0, &potential, modes).expect("eigen report");
    // Per-mode Cauchy behavior: successive eigenvalue gaps strictly decrease,
    // except that gaps at or below the floor are converged (the 5th mode is
    // pinned at the same eigenvalue by symmetry on every level, so its gaps
    // are pure roundoff). Level 1 has only 4 eigenvalues, so mode 4's
    // trajectory starts at the (2,3) comparison.
    let mut gaps_ok = true;
    let mut gap_text = String::new();
    for j in 0..modes {
        let gaps: Vec<f64> = report
            .iter()
            .filter_map(|cmp| cmp.modes.iter().find(|r| r.j == j))
            .map(|r| r.eigenvalue_gap)
            .collect();
        for w in gaps.windows(2) {
            if w[0] <= tol::GAP_FLOOR && w[1] <= tol::GAP_FLOOR {
                continue;
            }
            if w[1] >= w[0] {
                gaps_ok = false;
            }
        }
        gap_text.push_str(&format!("j{j}:{} ", gaps.len()));
    }
    // Ground states: strictly positive on every level (Perron–Frobenius),
    // and Cauchy in sup-norm on the ball |x| <= 2 — at the (n, n+1)
    // comparison the ball's common points are u = w·2^{n-1}, which embed as
    // u' = w·2^n one level finer.
    let mut grounds = Vec::new();
    let mut min_ground = f64::INFINITY;
    for &n in &levels {
        let model = SpectralModel::new(grid(2, n, 2.0), &potential).expect("model");
        let psi = model.eigenfunction(0).expect("ground state");
        min_ground = min_ground.min(psi.iter().cloned().fold(f64::INFINITY, f64::min));
        grounds.push(psi);
    }
    let mut sup_dists = Vec::new();
    for i in 0..levels.len() - 1 {
        let n = levels[i];
        let coarse = &grounds[i];
        let fine = &grounds[i + 1];
        let mut sup = 0.0f64;
        for w in 0..(1u128 << (n + 1)) {
            let u = (w << (n - 1)) as usize;
            let u_fine = (w << n) as usize;
            sup = sup.max((coarse[u] - fine[u_fine]).abs());
        }
        sup_dists.push(sup);
    }
    let sup_decreasing = sup_dists.windows(2).all(|w| w[1] < w[0]);
    let pass = gaps_ok && min_ground > 0.0 && sup_decreasing;
    verdict(
        12,
        pass,
        &format!(
            "lowest-5 eigenvalue gaps strictly decreasing (floor {:.0e}): {gaps_ok} \
             [{gap_text}comparisons per mode]; ground state min {min_ground:.3e} > 0; \
             ground sup-norm on |x| <= 2 across levels: [{:.6e}, {:.6e}, {:.6e}] \
             strictly decreasing: {sup_decreasing}",
            tol::GAP_FLOOR,
            sup_dists[0],
            sup_dists[1],
            sup_dists[2]
        ),
    );
}

#[test]
fn criterion_13_sampler_correctness() {
    let params = grid(2, 2, 1.0);
    // Increment frequencies: 10^6 draws against the exact one-step law.
    let sampler = IncrementSampler::new(params, 0.125).expect("increment sampler");
    let mut rng = SeedSpec::new(seeds::INCREMENTS, 0).rng();
    let mut counts = vec![0u64; params.len()];
    for _ in 0..1_000_000 {
        counts[sampler.sample(&mut rng) as usize] += 1;
    }
    let band = multinomial_band_check(&counts, sampler.probabilities(), tol::BAND_SIGMAS)
        .expect("band check");
    // Bridge: endpoint exactness and the exact interior marginal at N = 2.
    let bridge = BridgeSampler::new(params, 1, 6, 1.0, 2).expect("bridge sampler");
    let base = SeedSpec::new(seeds::BRIDGE, 0);
    let mut misses = 0u64;
    let mut mid_counts = vec![0u64; params.len()];
    for r in 0..100_000u64 {
        let skel = bridge.sample(base.offset(1 + r)).expect("bridge skeleton");
        if *skel.points().last().expect("non-empty") != 6 {
            misses += 1;
        }
        mid_counts[skel.points()[1] as usize] += 1;
    }
    let law = bridge
        .transition_probabilities(1, 1)
        .expect("exact midpoint law");
    let chi = chi_square_gof(&mid_counts, &law, tol::CHI_SIGNIFICANCE).expect("chi-square");
    let pass = band.pass && misses == 0 && chi.pass;
    verdict(
        13,
        pass,
        &format!(
            "increment band: max deviation {:.3} sigma <= {}; bridge endpoint misses \
             {misses}/100000; midpoint chi-square {:.3} <= critical {:.3} at {}%",
            band.max_deviation_sigmas,
            tol::BAND_SIGMAS,
            chi.statistic,
            chi.critical_value,
            100.0 * tol::CHI_SIGNIFICANCE
        ),
    );
}

#[test]
fn criterion_14_tightness_monotone_exceedance() {
    let t = 1.0;
    let deltas: Vec<f64> = (1..=5).map(|j| t / f64::powi(2.0, j)).collect();
    let mut pass = true;
    let mut detail = String::new();
    for n in [2u32, 3] {
        let report = tightness_report(
            grid(2, n, 1.0),
            0,
            0,
            t,
            16,
            2_000,
            1.0,
            &deltas,
            SeedSpec::new(seeds::TIGHTNESS, (n as u64) << 20),
        )
        .expect("tightness report");
        let probs: Vec<f64> = report.rows.iter().map(|r| r.exceed_probability).collect();
        let monotone =
            report.monotone && probs.windows(2).all(|w| w[1] <= w[0]);
        let in_range = probs.iter().all(|&q| (0.0..=1.0).contains(&q));
        pass &= monotone && in_range;
        detail.push_str(&format!(
            "n={n}: [{}] monotone: {monotone}; ",
            probs
                .iter()
                .map(|q| format!("{q:.3}"))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    verdict(
        14,
        pass,
        &format!("exceedance P(m > eta) over the 5-point delta-grid, eta = 1: {detail}"),
    );
}

/// Configs for the full `--strict` suite: one per experiment, sized to pass
/// and to finish quickly. (The level-4 density-convergence red of criterion 5
/// is asserted by that criterion; here the sweep extends to level 5, where
/// the threshold is met, so the determinism run is also a green strict run.)
fn strict_suite() -> Vec<(&'static str, String)> {
    let potential = r#""potential": { "kind": "power", "gamma": 1.0 }"#;
    vec![
        (
            "bridge-sample",
            format!(
                r#"{{ "experiment": "bridge-sample", "p": 2, "n_range": [2], "alpha": [1.0],
                     "t": [1.0], "seed": 5, "steps": 4, "paths": 400, "start": 3, "end": 9 }}"#
            ),
        ),
        (
            "centsov-check",
            format!(
                r#"{{ "experiment": "centsov-check", "p": 2, "n_range": [3], "alpha": [2.0],
                     "t": [1.0], "seed": 5, "k": 1.5 }}"#
            ),
        ),
        (
            "density-convergence",
            format!(
                r#"{{ "experiment": "density-convergence", "p": 2, "n_range": [2, 3, 4, 5],
                     "alpha": [1.0], "t": [1.0], "seed": 5 }}"#
            ),
        ),
        (
            "density-table",
            format!(
                r#"{{ "experiment": "density-table", "p": 2, "n_range": [1, 2], "alpha": [1.0],
                     "t": [1.0], "seed": 5 }}"#
            ),
        ),
        (
            "eigen-convergence",
            format!(
                r#"{{ "experiment": "eigen-convergence", "p": 2, "n_range": [1, 2, 3, 4],
                     "alpha": [2.0], "t": [1.0], {potential}, "seed": 5 }}"#
            ),
        ),
        (
            "fk-validate",
            format!(
                r#"{{ "experiment": "fk-validate", "p": 2, "n_range": [2], "alpha": [1.0],
                     "t": [1.0], {potential}, "seed": 5, "steps": 16, "paths": 20000 }}"#
            ),
        ),
        (
            "moment-check",
            format!(
                r#"{{ "experiment": "moment-check", "p": 2, "n_range": [4], "alpha": [2.0],
                     "t": [1.0], "seed": 5, "k": 1.0 }}"#
            ),
        ),
        (
            "spectrum",
            format!(
                r#"{{ "experiment": "spectrum", "p": 2, "n_range": [1, 2], "alpha": [1.0],
                     "t": [1.0], {potential}, "seed": 5 }}"#
            ),
        ),
        (
            "tightness",
            format!(
                r#"{{ "experiment": "tightness", "p": 2, "n_range": [2, 3], "alpha": [1.0],
                     "t": [1.0], "seed": 5 }}"#
            ),
        ),
        (
            "trace-convergence",
            format!(
                r#"{{ "experiment": "trace-convergence", "p": 2, "n_range": [1, 2, 3, 4],
                     "alpha": [2.0], "t": [1.0], {potential}, "seed": 5 }}"#
            ),
        ),
        (
            "walk-sample",
            format!(
                r#"{{ "experiment": "walk-sample", "p": 2, "n_range": [2], "alpha": [1.0],
                     "t": [1.0], "seed": 5, "steps": 8, "paths": 200 }}"#
            ),
        ),
    ]
}

#[test]
fn criterion_15_end_to_end_determinism() {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut compared = 0usize;
    let mut all_strict_green = true;
    let mut identical = true;
    let mut detail = String::new();
    for (name, config) in strict_suite() {
        let cfg_path = dir.path().join(format!("{name}.json"));
        std::fs::write(&cfg_path, &config).expect("write config");
        let mut outs = Vec::new();
        for run in ["a", "b"] {
            let out_dir = dir.path().join(format!("{name}-{run}"));
            let status = std::process::Command::new(env!("CARGO_BIN_EXE_ultrametric"))
                .args(["run", "--strict", "--config"])
                .arg(&cfg_path)
                .arg("--out")
                .arg(&out_dir)
                .env_remove("ULTRAMETRIC_THREADS")
                .output()
                .expect("run binary");
            if status.status.code() != Some(0) {
                all_strict_green = false;
                detail.push_str(&format!(
                    "{name} run {run} exited {:?}; ",
                    status.status.code()
                ));
            }
            outs.push(out_dir);
        }
        let mut csvs: Vec<String> = std::fs::read_dir(&outs[0])
            .expect("read out dir")
            .map(|e| e.expect("dir entry").file_name().into_string().expect("utf8"))
            .filter(|f| f.ends_with(".csv"))
            .collect();
        csvs.sort();
        assert!(!csvs.is_empty(), "{name} produced no CSV artifacts");
        for csv in csvs {
            let a = std::fs::read(outs[0].join(&csv)).expect("read csv");
            let b = std::fs::read(outs[1].join(&csv)).expect("read csv");
            if a != b {
                identical = false;
                detail.push_str(&format!("{name}/{csv} differs; "));
            }
            compared += 1;
        }
    }
    let pass = all_strict_green && identical;
    verdict(
        15,
        pass,
        &format!(
            "full strict suite ran twice: 11 experiments green both times: \
             {all_strict_green}; {compared} CSV artifacts byte-identical: {identical}{}{detail}",
            if detail.is_empty() { "" } else { " — " }
        ),
    );
}
