//! Path measures on one grid: stationary-increment random walks, pinned
//! bridges, Monte Carlo Feynman–Kac estimation, exact finite-dimensional
//! distributions, and the moment / modulus diagnostics used by the
//! convergence harnesses.
//!
//! # Measures
//!
//! The walk started at `a` assigns the cylinder set {ω(t_1)=x_1, …, ω(t_N)=x_N}
//! (0 < t_1 < … < t_N) the probability ∏_k q^{-n} p_{Δt_k}(x_k − x_{k−1}),
//! where p_s is the heat-kernel density of [`crate::density`], q = p, and
//! Δt_k = t_k − t_{k−1}. The bridge measure is that law conditioned on
//! ω(t_N) = b. Paths are always represented as finite skeletons
//! ([`PathSkeleton`]): grid values at finitely many times. The càdlàg
//! interpolation is never materialized — every quantity evaluated here (the
//! Feynman–Kac exponent, cylinder probabilities, the modulus statistic) is a
//! function of the skeleton.
//!
//! # Reproducibility
//!
//! All randomness flows from a [`SeedSpec`]: a ChaCha8 stream cipher keyed by
//! `master_seed`, positioned on a 64-bit `stream_id`. Each sampled path owns
//! one stream, and every draw consumes a fixed number of generator words, so
//! an identical (master_seed, stream_id, draw index) triple reproduces the
//! identical value on any platform, thread count, or schedule. Monte Carlo
//! reductions are computed by pairwise summation over path-indexed vectors,
//! which makes the reduced statistics bit-stable across parallelism degrees.

use crate::density::{closed_form_by_norm, DensityError, HeatDensity};
use crate::grid::{GridError, GridParams};
use crate::spectral::{PotentialSpec, SpectralError, DENSE_CAP};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::collections::HashMap;
use thiserror::Error;

/// Largest (steps−1)·M² for which a bridge sampler materializes every
/// per-(step, state) alias table up front. Above the cap tables are rebuilt
/// on the fly from the same weights, which changes speed but not one sampled
/// value.
pub const BRIDGE_TABLE_CAP: u128 = 1 << 22;

/// Largest M³ accepted by the literal three-fold joint sum of
/// [`two_increment_moment_direct`].
pub const DIRECT_JOINT_CAP: u128 = 1 << 24;

/// Cells with expected count below this are pooled into one bucket before a
/// χ² statistic is formed (the usual validity rule of thumb).
pub const CHI_SQUARE_MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Error)]
pub enum StochasticError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("time step must be finite and positive")]
    BadTime,
    #[error("step count must be at least 1")]
    BadSteps,
    #[error("path count must be at least 1")]
    BadPaths,
    #[error("window width delta must be finite and positive")]
    BadDelta,
    #[error("norm threshold eta must be finite and nonnegative")]
    BadThreshold,
    #[error("exponent k = {k} outside the admissible open interval ({lo}, {hi})")]
    BadExponent { k: f64, lo: f64, hi: f64 },
    #[error("time points must be 1 to 3 finite values, strictly increasing and positive")]
    BadTimePoints,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid sampling weights: {0}")]
    InvalidWeights(&'static str),
    #[error("an input grid of values was empty")]
    EmptyInput,
    #[error("workload {needed} exceeds the capacity cap {cap}")]
    CapacityExceeded { needed: u128, cap: u128 },
    #[error("internal invariant violated: {0}")]
    InvariantViolation(String),
}

// ---------------------------------------------------------------------------
// Seeds and raw draws
// ---------------------------------------------------------------------------

/// A reproducible random-stream address: one keyed cipher (`master_seed`)
/// positioned on one of 2^64 independent streams (`stream_id`).
///
/// The generator is ChaCha8, a counter-based cipher: the k-th word of a
/// stream is a pure function of (master_seed, stream_id, k). Drivers that
/// sample R paths give path r the stream `stream_id + 1 + r`, so a worker
/// pool of any size replays the identical ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        SeedSpec {
            master_seed,
            stream_id,
        }
    }

    /// The same keyed cipher, positioned on `stream_id + delta` (wrapping).
    pub fn offset(&self, delta: u64) -> SeedSpec {
        SeedSpec {
            master_seed: self.master_seed,
            stream_id: self.stream_id.wrapping_add(delta),
        }
    }

    /// Instantiate the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// One uniform f64 in [0, 1) from exactly one generator word (53 mantissa
/// bits).
fn unit_f64<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// One uniform index in [0, m) from exactly one generator word, by the
/// widening-multiply map ⌊u·m/2^64⌋. The selection bias is O(m/2^64) — far
/// below every statistical tolerance used here — and the fixed draw count
/// keeps stream alignment independent of m.
fn index_below<R: RngCore>(rng: &mut R, m: usize) -> usize {
    ((rng.next_u64() as u128 * m as u128) >> 64) as usize
}

/// Pairwise (cascade) summation: error O(ε·log₂ len), order-independent of
/// any parallel schedule because callers materialize addends in index order.
fn pairwise_sum_f64(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum_f64(&xs[..mid]) + pairwise_sum_f64(&xs[mid..])
    }
}

/// Mean and standard error of the mean (sample standard deviation / √len),
/// both by pairwise summation. A single observation reports zero spread.
fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let len = xs.len();
    assert!(len >= 1, "mean of an empty sample");
    let mean = pairwise_sum_f64(xs) / len as f64;
    if len == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum_f64(&sq) / (len - 1) as f64;
    (mean, (var / len as f64).sqrt())
}

// ---------------------------------------------------------------------------
// Alias table
// ---------------------------------------------------------------------------

/// Walker/Vose alias table: O(len) preparation, O(1) per draw (exactly two
/// generator words: one for the column, one for the coin).
///
/// Construction splits the scaled weights w_i·len/Σw into columns of unit
/// height: column i keeps probability `prob[i]` for itself and donates the
/// remainder to `alias[i]`. Sampling picks a uniform column and flips the
/// biased coin.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    pub fn new(weights: &[f64]) -> Result<Self, StochasticError> {
        let m = weights.len();
        if m == 0 {
            return Err(StochasticError::EmptyInput);
        }
        if m > u32::MAX as usize {
            return Err(StochasticError::CapacityExceeded {
                needed: m as u128,
                cap: u32::MAX as u128,
            });
        }
        for &w in weights {
            if !w.is_finite() || w < 0.0 {
                return Err(StochasticError::InvalidWeights(
                    "weights must be finite and nonnegative",
                ));
            }
        }
        let total = pairwise_sum_f64(weights);
        if !(total > 0.0) {
            return Err(StochasticError::InvalidWeights("weights sum to zero"));
        }
        let scale = m as f64 / total;
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * scale).collect();
        let mut small: Vec<u32> = Vec::new();
        let mut large: Vec<u32> = Vec::new();
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i as u32);
            } else {
                large.push(i as u32);
            }
        }
        let mut prob = vec![1.0f64; m];
        let mut alias: Vec<u32> = (0..m as u32).collect();
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            prob[s as usize] = scaled[s as usize];
            alias[s as usize] = l;
            scaled[l as usize] = (scaled[l as usize] + scaled[s as usize]) - 1.0;
            if scaled[l as usize] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers (one stack empty) hold scaled weight 1 up to rounding.
        for &i in small.iter().chain(large.iter()) {
            if (scaled[i as usize] - 1.0).abs() > 1e-9 {
                return Err(StochasticError::InvariantViolation(format!(
                    "alias leftover column {i} has scaled weight {} (expected 1)",
                    scaled[i as usize]
                )));
            }
            prob[i as usize] = 1.0;
        }
        Ok(AliasTable { prob, alias })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    /// Draw one index. Consumes exactly two generator words.
    pub fn sample<R: RngCore>(&self, rng: &mut R) -> usize {
        let i = index_below(rng, self.prob.len());
        let coin = unit_f64(rng);
        if coin < self.prob[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }

    /// The exact probability of drawing `i` implied by the table:
    /// (prob[i] + Σ_{j: alias[j]=i} (1 − prob[j])) / len. Used by tests to
    /// confirm the table encodes the requested distribution.
    pub fn implied_probability(&self, i: usize) -> f64 {
        let m = self.prob.len() as f64;
        let mut acc = self.prob[i];
        for (j, &a) in self.alias.iter().enumerate() {
            if a as usize == i && j != i {
                acc += 1.0 - self.prob[j];
            }
        }
        acc / m
    }
}

// ---------------------------------------------------------------------------
// Increment sampler and unconditioned walks
// ---------------------------------------------------------------------------

/// Sampler for one stationary increment of the grid walk over a time step
/// `dt`: the law π(u) = q^{-n}·p_{dt}(u), prepared once (O(M)) and drawn in
/// O(1) via an alias table.
#[derive(Debug, Clone)]
pub struct IncrementSampler {
    params: GridParams,
    dt: f64,
    probabilities: Vec<f64>,
    table: AliasTable,
}

impl IncrementSampler {
    pub fn new(params: GridParams, dt: f64) -> Result<Self, StochasticError> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(StochasticError::BadTime);
        }
        let density = HeatDensity::closed_form(params, dt)?;
        let probabilities = density.point_probabilities();
        let table = AliasTable::new(&probabilities)?;
        Ok(IncrementSampler {
            params,
            dt,
            probabilities,
            table,
        })
    }

    pub fn params(&self) -> &GridParams {
        &self.params
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// The exact one-step law π(u) = q^{-n} p_{dt}(u), indexed by u.
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Σ_u π(u), which equals the Haar mass of the density (1 up to float
    /// rounding).
    pub fn total_probability(&self) -> f64 {
        pairwise_sum_f64(&self.probabilities)
    }

    /// Draw one increment (a grid index).
    pub fn sample<R: RngCore>(&self, rng: &mut R) -> u128 {
        self.table.sample(rng) as u128
    }
}

/// Sampler for the unconditioned walk on [0, t] observed at N+1 equispaced
/// times k·t/N: independent stationary increments from
/// [`IncrementSampler`] with dt = t/N.
#[derive(Debug, Clone)]
pub struct PathSampler {
    increments: IncrementSampler,
    t: f64,
    steps: u32,
}

impl PathSampler {
    pub fn new(params: GridParams, t: f64, steps: u32) -> Result<Self, StochasticError> {
        if !t.is_finite() || t <= 0.0 {
            return Err(StochasticError::BadTime);
        }
        if steps == 0 {
            return Err(StochasticError::BadSteps);
        }
        let increments = IncrementSampler::new(params, t / steps as f64)?;
        Ok(PathSampler {
            increments,
            t,
            steps,
        })
    }

    pub fn params(&self) -> &GridParams {
        self.increments.params()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    /// One skeleton from start `a` under the given stream. The k-th point is
    /// a + (sum of k independent increments) mod M, whose exact law is the
    /// k-fold convolution power p_{kt/N} shifted by a.
    pub fn sample(&self, a: u128, seed: SeedSpec) -> Result<PathSkeleton, StochasticError> {
        let params = *self.params();
        params.point(a)?;
        let m = params.modulus();
        let mut rng = seed.rng();
        let n = self.steps as usize;
        let mut points = Vec::with_capacity(n + 1);
        let mut times = Vec::with_capacity(n + 1);
        points.push(a);
        times.push(0.0);
        let mut x = a;
        for k in 1..=n {
            let inc = self.increments.sample(&mut rng);
            x = (x + inc) % m;
            points.push(x);
            times.push(self.t * k as f64 / self.steps as f64);
        }
        PathSkeleton::new(params, times, points, None)
    }
}

// ---------------------------------------------------------------------------
// Bridge sampler
// ---------------------------------------------------------------------------

/// Sampler for the walk conditioned to end at `b` at time `t` (the bridge
/// measure), on the equispaced N-step skeleton.
///
/// Transition rule. Under the unconditioned walk, the cylinder probability
/// of (x_0 = a, x_1, …, x_N) factorizes as ∏_k q^{-n} p_{dt}(x_k − x_{k−1}).
/// Conditioning on x_N = b divides by q^{-n} p_t(b − a) and leaves a Markov
/// chain. Summing the conditioned cylinder over the future (x_{k+1}, …)
/// telescopes through the semigroup identity p_s ∗ p_r = p_{s+r}, giving the
/// one-step law from state x at time (k−1)·dt:
///
///   P(x_k = y | x) = q^{-n} · p_{dt}(y − x) · p_{rem}(b − y) / p_{dt+rem}(b − x),
///
/// with rem = t − k·dt the time left after the step. The denominator is the
/// normalizer (again the semigroup identity), the final step (rem = 0) is
/// the point mass at b, and multiplying the rule over k = 1..N recovers the
/// conditioned cylinder formula exactly — so skeletons sampled this way have
/// the bridge law exactly (up to float rounding in the weights).
#[derive(Debug)]
pub struct BridgeSampler {
    params: GridParams,
    a: u128,
    b: u128,
    t: f64,
    steps: u32,
    dt: f64,
    /// p_{dt} values by grid index.
    step_density: Vec<f64>,
    /// tails[j−1] = p_{j·dt} values by grid index, j = 1..=steps−1.
    tails: Vec<Vec<f64>>,
    /// Alias tables for every (step k, state x) pair, flattened as
    /// (k−1)·M + x, when (steps−1)·M² fits [`BRIDGE_TABLE_CAP`]; otherwise
    /// tables are rebuilt per draw from the same weights (identical samples,
    /// different speed).
    tables: Option<Vec<AliasTable>>,
}

impl BridgeSampler {
    pub fn new(
        params: GridParams,
        a: u128,
        b: u128,
        t: f64,
        steps: u32,
    ) -> Result<Self, StochasticError> {
        if !t.is_finite() || t <= 0.0 {
            return Err(StochasticError::BadTime);
        }
        if steps == 0 {
            return Err(StochasticError::BadSteps);
        }
        params.point(a)?;
        params.point(b)?;
        let dt = t / steps as f64;
        let step_density = HeatDensity::closed_form(params, dt)?.values().to_vec();
        let mut tails = Vec::with_capacity(steps.saturating_sub(1) as usize);
        for j in 1..steps {
            tails.push(
                HeatDensity::closed_form(params, dt * j as f64)?
                    .values()
                    .to_vec(),
            );
        }
        let m = params.modulus();
        let table_cells = (steps.saturating_sub(1) as u128) * m * m;
        let mut sampler = BridgeSampler {
            params,
            a,
            b,
            t,
            steps,
            dt,
            step_density,
            tails,
            tables: None,
        };
        if table_cells <= BRIDGE_TABLE_CAP {
            let mlen = params.len();
            let mut tables = Vec::with_capacity((steps as usize - 1) * mlen);
            for k in 1..steps {
                for x in 0..mlen as u128 {
                    tables.push(AliasTable::new(&sampler.raw_weights(k, x))?);
                }
            }
            sampler.tables = Some(tables);
        }
        Ok(sampler)
    }

    pub fn params(&self) -> &GridParams {
        &self.params
    }

    pub fn endpoints(&self) -> (u128, u128) {
        (self.a, self.b)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Unnormalized transition weights w(y) = p_{dt}(y−x)·p_{rem}(b−y) for
    /// the step landing at time k·dt (1 ≤ k ≤ steps−1) from state x.
    fn raw_weights(&self, k: u32, x: u128) -> Vec<f64> {
        let m = self.params.modulus();
        let mlen = self.params.len();
        let tail = &self.tails[(self.steps - k - 1) as usize];
        let mut w = Vec::with_capacity(mlen);
        for y in 0..mlen as u128 {
            let d_step = ((y + m - x) % m) as usize;
            let d_tail = ((self.b + m - y) % m) as usize;
            w.push(self.step_density[d_step] * tail[d_tail]);
        }
        w
    }

    /// The normalized one-step law P(x_k = y | x_{k−1} = x) for
    /// 1 ≤ k ≤ steps−1 (the last step is the point mass at b).
    pub fn transition_probabilities(&self, k: u32, x: u128) -> Result<Vec<f64>, StochasticError> {
        if k == 0 || k >= self.steps {
            return Err(StochasticError::BadSteps);
        }
        self.params.point(x)?;
        let w = self.raw_weights(k, x);
        let total = pairwise_sum_f64(&w);
        if !(total > 0.0) {
            return Err(StochasticError::InvariantViolation(
                "bridge transition weights sum to zero".into(),
            ));
        }
        Ok(w.into_iter().map(|v| v / total).collect())
    }

    /// One bridge skeleton under the given stream; the last point is `b` by
    /// construction.
    pub fn sample(&self, seed: SeedSpec) -> Result<PathSkeleton, StochasticError> {
        let mut rng = seed.rng();
        let m = self.params.modulus();
        let mlen = self.params.len();
        let n = self.steps as usize;
        let mut points = Vec::with_capacity(n + 1);
        let mut times = Vec::with_capacity(n + 1);
        points.push(self.a);
        times.push(0.0);
        let mut x = self.a;
        for k in 1..self.steps {
            let y = match &self.tables {
                Some(tables) => {
                    tables[(k as usize - 1) * mlen + x as usize].sample(&mut rng) as u128
                }
                None => AliasTable::new(&self.raw_weights(k, x))?.sample(&mut rng) as u128,
            };
            debug_assert!(y < m);
            points.push(y);
            times.push(self.t * k as f64 / self.steps as f64);
            x = y;
        }
        points.push(self.b);
        times.push(self.t);
        PathSkeleton::new(self.params, times, points, Some(self.b))
    }
}

// ---------------------------------------------------------------------------
// Path skeletons and the modulus statistic
// ---------------------------------------------------------------------------

/// A path observed at finitely many times: grid values at strictly
/// increasing times in [0, t], optionally pinned to end at `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSkeleton {
    params: GridParams,
    times: Vec<f64>,
    points: Vec<u128>,
    pinned_end: Option<u128>,
}

impl PathSkeleton {
    pub fn new(
        params: GridParams,
        times: Vec<f64>,
        points: Vec<u128>,
        pinned_end: Option<u128>,
    ) -> Result<Self, StochasticError> {
        if times.is_empty() {
            return Err(StochasticError::EmptyInput);
        }
        if times.len() != points.len() {
            return Err(StochasticError::LengthMismatch {
                left: times.len(),
                right: points.len(),
            });
        }
        if !times[0].is_finite() || times[0] < 0.0 {
            return Err(StochasticError::BadTimePoints);
        }
        for w in times.windows(2) {
            if !w[1].is_finite() || w[1] <= w[0] {
                return Err(StochasticError::BadTimePoints);
            }
        }
        for &u in &points {
            params.point(u)?;
        }
        if let Some(b) = pinned_end {
            params.point(b)?;
            if *points.last().expect("nonempty") != b {
                return Err(StochasticError::InvariantViolation(
                    "pinned skeleton does not end at its pin".into(),
                ));
            }
        }
        Ok(PathSkeleton {
            params,
            times,
            points,
            pinned_end,
        })
    }

    pub fn params(&self) -> &GridParams {
        &self.params
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[u128] {
        &self.points
    }

    pub fn start(&self) -> u128 {
        self.points[0]
    }

    pub fn pinned_end(&self) -> Option<u128> {
        self.pinned_end
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Norm of the difference of the skeleton values at two indices.
    fn jump_norm(&self, i: usize, j: usize) -> f64 {
        let m = self.params.modulus();
        let d = (self.points[j] + m - self.points[i]) % m;
        self.params.norm_of(d)
    }

    /// The two-sided jump statistic m(ω: δ): the supremum, over index
    /// triples i < j < k with times[k] − times[i] < δ, of
    /// min(|ω_j − ω_i|, |ω_k − ω_j|); 0 when no triple qualifies.
    ///
    /// This plays the role a modulus of continuity plays for continuous
    /// paths: it ignores single jumps (which càdlàg paths are allowed) and
    /// detects two large movements inside one short window.
    pub fn modulus_stat(&self, delta: f64) -> Result<f64, StochasticError> {
        if !delta.is_finite() || delta <= 0.0 {
            return Err(StochasticError::BadDelta);
        }
        let n = self.points.len();
        let mut best = 0.0f64;
        for i in 0..n {
            for k in (i + 2)..n {
                if self.times[k] - self.times[i] >= delta {
                    break;
                }
                for j in (i + 1)..k {
                    let v = self.jump_norm(i, j).min(self.jump_norm(j, k));
                    if v > best {
                        best = v;
                    }
                }
            }
        }
        Ok(best)
    }

    /// The smallest window span times[k] − times[i] over triples i < j < k
    /// whose two-sided jump min(|ω_j − ω_i|, |ω_k − ω_j|) exceeds `eta`;
    /// `None` when no triple exceeds it.
    ///
    /// Relation to the modulus: m(ω: δ) > η ⇔ min_span_exceeding(η) < δ.
    /// Computing the span once therefore prices *every* δ on a grid, and
    /// makes the empirical exceedance probability monotone in δ by
    /// construction (pathwise, a larger window admits every smaller one).
    pub fn min_span_exceeding(&self, eta: f64) -> Result<Option<f64>, StochasticError> {
        if !eta.is_finite() || eta < 0.0 {
            return Err(StochasticError::BadThreshold);
        }
        let n = self.points.len();
        let mut best: Option<f64> = None;
        for i in 0..n {
            'k: for k in (i + 2)..n {
                let span = self.times[k] - self.times[i];
                if let Some(b) = best {
                    if span >= b {
                        break 'k;
                    }
                }
                for j in (i + 1)..k {
                    if self.jump_norm(i, j).min(self.jump_norm(j, k)) > eta {
                        best = Some(span);
                        break;
                    }
                }
            }
        }
        Ok(best)
    }
}

// ---------------------------------------------------------------------------
// Exact finite-dimensional distributions
// ---------------------------------------------------------------------------

/// A closed ball on the grid: {x : |x − center| ≤ p^{radius_exponent}}.
/// The center always belongs (|0| = 0), so grid balls are never empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BallSpec {
    pub center: u128,
    pub radius_exponent: i32,
}

impl BallSpec {
    /// Indices of the grid points inside the ball.
    pub fn members(&self, params: GridParams) -> Result<Vec<u128>, StochasticError> {
        params.point(self.center)?;
        let m = params.modulus();
        let mut out = Vec::new();
        for u in 0..m {
            let d = (u + m - self.center) % m;
            let inside = match params.norm_exponent_of(d) {
                None => true, // |0| = 0 ≤ any radius
                Some(e) => e <= self.radius_exponent,
            };
            if inside {
                out.push(u);
            }
        }
        Ok(out)
    }
}

/// Exact cylinder probability P_a(ω(t_i) ∈ J_i for all i) for 1–3 time
/// points, by nested summation of transition densities:
///
///   Σ_{x_1∈J_1} … Σ_{x_N∈J_N} ∏_i q^{-n} p_{Δt_i}(x_i − x_{i−1}),  x_0 = a.
///
/// The sums are evaluated back to front (one sweep per time point), so the
/// cost is O(N·M·max|J_i|) rather than ∏|J_i|.
pub fn fdd_probability(
    params: GridParams,
    a: u128,
    time_points: &[f64],
    balls: &[BallSpec],
) -> Result<f64, StochasticError> {
    params.point(a)?;
    if params.modulus() > DENSE_CAP {
        return Err(StochasticError::CapacityExceeded {
            needed: params.modulus(),
            cap: DENSE_CAP,
        });
    }
    if time_points.is_empty() || time_points.len() > 3 {
        return Err(StochasticError::BadTimePoints);
    }
    if balls.len() != time_points.len() {
        return Err(StochasticError::LengthMismatch {
            left: balls.len(),
            right: time_points.len(),
        });
    }
    let mut prev = 0.0;
    for &t in time_points {
        if !t.is_finite() || t <= prev {
            return Err(StochasticError::BadTimePoints);
        }
        prev = t;
    }
    let m = params.modulus();
    let w = params.haar().point_mass;
    // Backward sweep: after[x] = P(remaining windows hit | current point x).
    let mut after = vec![1.0f64; params.len()];
    for i in (0..time_points.len()).rev() {
        let dt = if i == 0 {
            time_points[0]
        } else {
            time_points[i] - time_points[i - 1]
        };
        let density = HeatDensity::closed_form(params, dt)?;
        let members = balls[i].members(params)?;
        let mut next = vec![0.0f64; params.len()];
        let terms: Vec<(u128, f64)> = members
            .iter()
            .map(|&y| (y, after[y as usize]))
            .collect();
        for x in 0..m {
            let contributions: Vec<f64> = terms
                .iter()
                .map(|&(y, a_y)| w * density.value((y + m - x) % m) * a_y)
                .collect();
            next[x as usize] = pairwise_sum_f64(&contributions);
        }
        after = next;
    }
    Ok(after[a as usize])
}

// ---------------------------------------------------------------------------
// Feynman–Kac estimation
// ---------------------------------------------------------------------------

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FkEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub paths: u64,
    pub steps: u32,
}

/// The path weight e^{−(t/N)·Σ_{r=1..N} v(ω(r·t/N))}: a left Riemann sum of
/// ∫v(ω) over the skeleton, matching the product-formula factorization
/// (e^{-tP/N} e^{-tV/N})^N term by term, so its bridge expectation times
/// p_t(b−a) equals the N-step product-formula kernel exactly.
fn path_weight(dt: f64, potential: &[f64], skeleton: &PathSkeleton) -> f64 {
    let s: f64 = skeleton.points()[1..]
        .iter()
        .map(|&u| potential[u as usize])
        .sum();
    (-dt * s).exp()
}

/// Pinned Feynman–Kac estimator of the propagator K_t(a, b): bridge sampling
/// of E[e^{−∫v}] times the exact density p_t(b − a).
///
/// Path r uses stream `seed.stream_id + 1 + r`; the weight vector is reduced
/// by pairwise summation, so the returned numbers are bit-identical across
/// thread counts. The estimator is unbiased for the N-step product-formula
/// kernel; its bias against the exact propagator is the O(1/N) product-
/// formula error.
pub fn feynman_kac_pinned(
    params: GridParams,
    potential: &PotentialSpec,
    a: u128,
    b: u128,
    t: f64,
    steps: u32,
    paths: u64,
    seed: SeedSpec,
) -> Result<FkEstimate, StochasticError> {
    if paths == 0 {
        return Err(StochasticError::BadPaths);
    }
    let sampler = BridgeSampler::new(params, a, b, t, steps)?;
    let v = potential.values(params)?;
    let dt = t / steps as f64;
    let weights: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|r| {
            let skeleton = sampler
                .sample(seed.offset(1 + r))
                .expect("bridge sampling cannot fail after construction");
            path_weight(dt, &v, &skeleton)
        })
        .collect();
    let (mean, se) = mean_and_stderr(&weights);
    let m = params.modulus();
    let factor = HeatDensity::closed_form(params, t)?.value((b + m - a) % m);
    Ok(FkEstimate {
        estimate: mean * factor,
        stderr: se * factor,
        paths,
        steps,
    })
}

/// Unpinned Feynman–Kac estimator of (e^{-tH} f)(a): walk sampling of
/// E[e^{−∫v}·f(ω(t))]. Same stream and reduction discipline as the pinned
/// form.
pub fn feynman_kac_unpinned<F>(
    params: GridParams,
    potential: &PotentialSpec,
    a: u128,
    t: f64,
    steps: u32,
    paths: u64,
    terminal: F,
    seed: SeedSpec,
) -> Result<FkEstimate, StochasticError>
where
    F: Fn(u128) -> f64 + Sync,
{
    if paths == 0 {
        return Err(StochasticError::BadPaths);
    }
    let sampler = PathSampler::new(params, t, steps)?;
    params.point(a)?;
    let v = potential.values(params)?;
    let dt = t / steps as f64;
    let values: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|r| {
            let skeleton = sampler
                .sample(a, seed.offset(1 + r))
                .expect("path sampling cannot fail after construction");
            path_weight(dt, &v, &skeleton)
                * terminal(*skeleton.points().last().expect("nonempty"))
        })
        .collect();
    let (mean, se) = mean_and_stderr(&values);
    Ok(FkEstimate {
        estimate: mean,
        stderr: se,
        paths,
        steps,
    })
}

// ---------------------------------------------------------------------------
// Exact moments and the two-increment bound
// ---------------------------------------------------------------------------

/// Exact E|Y_s|^k for the walk increment over time s: summing the density
/// over norm shells,
///
///   E|Y_s|^k = (1 − 1/p) Σ_{e=1−n}^{n} p^{e(1+k)} · p_s(|x| = p^e),
///
/// using q^{-n}·#{|x| = p^e} = p^e(1 − 1/p). O(n) closed-form evaluations;
/// no M-sized vector is materialized.
pub fn exact_norm_moment(params: GridParams, k: f64, s: f64) -> Result<f64, StochasticError> {
    if !s.is_finite() || s <= 0.0 {
        return Err(StochasticError::BadTime);
    }
    if !k.is_finite() || k <= 0.0 {
        return Err(StochasticError::BadExponent {
            k,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let p = params.p() as f64;
    let n = params.n() as i32;
    let mut terms = Vec::with_capacity(2 * params.n() as usize);
    for e in (1 - n)..=n {
        let value = closed_form_by_norm(params, s, Some(e))?;
        terms.push((1.0 - 1.0 / p) * p.powf(e as f64 * (1.0 + k)) * value);
    }
    Ok(pairwise_sum_f64(&terms))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRow {
    pub s: f64,
    /// Exact E|Y_s|^k.
    pub moment: f64,
    /// moment / s^{k/α}.
    pub ratio: f64,
}

/// Exact increment moments across a time grid, with the scaling ratio
/// E|Y_s|^k / s^{k/α} whose uniform boundedness is the k-th moment bound.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub k: f64,
    pub rows: Vec<MomentRow>,
    /// max over the grid of E|Y_s|^k / s^{k/α}: the smallest constant C_k
    /// witnessing the bound on this grid.
    pub max_ratio: f64,
}

impl MomentReport {
    /// Least-squares slope of log E|Y_s|^k against log s over rows with
    /// s ∈ [s_lo, s_hi]. In the scaling regime the slope is k/α.
    pub fn loglog_slope(&self, s_lo: f64, s_hi: f64) -> Result<f64, StochasticError> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.s >= s_lo && r.s <= s_hi)
            .map(|r| (r.s.ln(), r.moment.ln()))
            .collect();
        if pts.len() < 2 {
            return Err(StochasticError::EmptyInput);
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        Ok(sxy / sxx)
    }
}

/// Exact E|Y_s|^k across `s_grid` with the s^{k/α} scaling ratio. Requires
/// 0 < k < α (beyond α the uniform-in-n bound genuinely fails: the norm has
/// heavy tails of index α).
pub fn moment_check(
    params: GridParams,
    k: f64,
    s_grid: &[f64],
) -> Result<MomentReport, StochasticError> {
    let alpha = params.alpha();
    if !k.is_finite() || k <= 0.0 || k >= alpha {
        return Err(StochasticError::BadExponent {
            k,
            lo: 0.0,
            hi: alpha,
        });
    }
    if s_grid.is_empty() {
        return Err(StochasticError::EmptyInput);
    }
    let mut ss = s_grid.to_vec();
    for &s in &ss {
        if !s.is_finite() || s <= 0.0 {
            return Err(StochasticError::BadTime);
        }
    }
    ss.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    ss.dedup();
    let mut rows = Vec::with_capacity(ss.len());
    let mut max_ratio = 0.0f64;
    for &s in &ss {
        let moment = exact_norm_moment(params, k, s)?;
        let ratio = moment / s.powf(k / alpha);
        max_ratio = max_ratio.max(ratio);
        rows.push(MomentRow { s, moment, ratio });
    }
    Ok(MomentReport { k, rows, max_ratio })
}

/// Product route for the two-increment expectation: by independence of
/// disjoint increments, E(|Y_{t2}−Y_{t1}|^k · |Y_{t3}−Y_{t2}|^k) equals
/// E|Y_{t2−t1}|^k · E|Y_{t3−t2}|^k.
pub fn two_increment_moment_product(
    params: GridParams,
    k: f64,
    gap1: f64,
    gap2: f64,
) -> Result<f64, StochasticError> {
    Ok(exact_norm_moment(params, k, gap1)? * exact_norm_moment(params, k, gap2)?)
}

/// Literal route for the same expectation: the full three-fold joint sum
///
///   Σ_{x1,x2,x3} q^{-3n} p_{t1}(x1) p_{t2−t1}(x2−x1) p_{t3−t2}(x3−x2)
///                · |x2−x1|^k · |x3−x2|^k
///
/// over the joint law of (ω(t1), ω(t2), ω(t3)) started at 0. O(M³); capped
/// by [`DIRECT_JOINT_CAP`]. Kept deliberately independent of the product
/// route so the factorization identity is a real cross-check.
pub fn two_increment_moment_direct(
    params: GridParams,
    k: f64,
    t1: f64,
    t2: f64,
    t3: f64,
) -> Result<f64, StochasticError> {
    check_ordered_times(&[t1, t2, t3])?;
    if !k.is_finite() || k <= 0.0 {
        return Err(StochasticError::BadExponent {
            k,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let m = params.modulus();
    let needed = m.saturating_mul(m).saturating_mul(m);
    if needed > DIRECT_JOINT_CAP {
        return Err(StochasticError::CapacityExceeded {
            needed,
            cap: DIRECT_JOINT_CAP,
        });
    }
    let mlen = params.len();
    let d1 = HeatDensity::closed_form(params, t1)?.values().to_vec();
    let d2 = HeatDensity::closed_form(params, t2 - t1)?.values().to_vec();
    let d3 = HeatDensity::closed_form(params, t3 - t2)?.values().to_vec();
    let normk: Vec<f64> = (0..mlen as u128).map(|u| params.norm_of(u).powf(k)).collect();
    let w = params.haar().point_mass;
    let scale = w * w * w;
    let mut outer = Vec::with_capacity(mlen);
    let mut buffer = Vec::with_capacity(mlen * mlen);
    for x1 in 0..mlen {
        buffer.clear();
        for x2 in 0..mlen {
            let d21 = (x2 + mlen - x1) % mlen;
            let f12 = d2[d21] * normk[d21];
            for x3 in 0..mlen {
                let d32 = (x3 + mlen - x2) % mlen;
                buffer.push(f12 * d3[d32] * normk[d32]);
            }
        }
        outer.push(d1[x1] * pairwise_sum_f64(&buffer));
    }
    Ok(scale * pairwise_sum_f64(&outer))
}

/// Both routes to the two-increment expectation at one time triple, plus the
/// window bound E ≤ D·(t3−t1)^{2k/α}. The exponent 2k/α exceeds 1 exactly
/// when k > α/2, which is what makes the bound strong enough to control a
/// path measure; hence the admissible band α/2 < k < α.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentsovReport {
    pub k: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    /// Literal triple-sum value.
    pub direct: f64,
    /// Product-of-moments value.
    pub product: f64,
    /// |direct − product|.
    pub factorization_diff: f64,
    /// 2k/α.
    pub exponent: f64,
    /// direct / (t3−t1)^{2k/α}.
    pub bound_ratio: f64,
}

/// Evaluate both routes at one strictly increasing time triple; requires
/// α/2 < k < α.
pub fn centsov_check(
    params: GridParams,
    k: f64,
    t1: f64,
    t2: f64,
    t3: f64,
) -> Result<CentsovReport, StochasticError> {
    check_centsov_exponent(params, k)?;
    check_ordered_times(&[t1, t2, t3])?;
    let direct = two_increment_moment_direct(params, k, t1, t2, t3)?;
    let product = two_increment_moment_product(params, k, t2 - t1, t3 - t2)?;
    let exponent = 2.0 * k / params.alpha();
    Ok(CentsovReport {
        k,
        t1,
        t2,
        t3,
        direct,
        product,
        factorization_diff: (direct - product).abs(),
        exponent,
        bound_ratio: direct / (t3 - t1).powf(exponent),
    })
}

/// The two-increment bound swept over every strictly increasing triple of a
/// time grid, via the exact product route with memoized one-increment
/// moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentsovScan {
    pub k: f64,
    /// 2k/α.
    pub exponent: f64,
    /// Number of (t1, t2, t3) triples scanned.
    pub triples: u64,
    /// max over triples of E / (t3−t1)^{2k/α}: the witnessed constant D_k.
    pub max_ratio: f64,
}

pub fn centsov_bound_scan(
    params: GridParams,
    k: f64,
    time_grid: &[f64],
) -> Result<CentsovScan, StochasticError> {
    check_centsov_exponent(params, k)?;
    if time_grid.is_empty() {
        return Err(StochasticError::EmptyInput);
    }
    let mut ts = time_grid.to_vec();
    for &t in &ts {
        if !t.is_finite() || t <= 0.0 {
            return Err(StochasticError::BadTime);
        }
    }
    ts.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    ts.dedup();
    let mut moment_cache: HashMap<u64, f64> = HashMap::new();
    let mut cached_moment = |s: f64| -> Result<f64, StochasticError> {
        if let Some(&v) = moment_cache.get(&s.to_bits()) {
            return Ok(v);
        }
        let v = exact_norm_moment(params, k, s)?;
        moment_cache.insert(s.to_bits(), v);
        Ok(v)
    };
    let exponent = 2.0 * k / params.alpha();
    let mut triples = 0u64;
    let mut max_ratio = 0.0f64;
    for i in 0..ts.len() {
        for j in (i + 1)..ts.len() {
            let m1 = cached_moment(ts[j] - ts[i])?;
            for l in (j + 1)..ts.len() {
                let m2 = cached_moment(ts[l] - ts[j])?;
                let ratio = m1 * m2 / (ts[l] - ts[i]).powf(exponent);
                if ratio > max_ratio {
                    max_ratio = ratio;
                }
                triples += 1;
            }
        }
    }
    if triples == 0 {
        return Err(StochasticError::EmptyInput);
    }
    Ok(CentsovScan {
        k,
        exponent,
        triples,
        max_ratio,
    })
}

fn check_centsov_exponent(params: GridParams, k: f64) -> Result<(), StochasticError> {
    let alpha = params.alpha();
    if !k.is_finite() || k <= alpha / 2.0 || k >= alpha {
        return Err(StochasticError::BadExponent {
            k,
            lo: alpha / 2.0,
            hi: alpha,
        });
    }
    Ok(())
}

fn check_ordered_times(ts: &[f64]) -> Result<(), StochasticError> {
    let mut prev = 0.0;
    for &t in ts {
        if !t.is_finite() || t <= prev {
            return Err(StochasticError::BadTimePoints);
        }
        prev = t;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Tightness diagnostic
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TightnessRow {
    pub delta: f64,
    /// Empirical P(m(ω: δ) > η) over the ensemble.
    pub exceed_probability: f64,
}

/// Empirical exceedance curve of the two-sided jump statistic over a bridge
/// ensemble: rows are ordered by decreasing δ, and the probabilities are
/// non-increasing along that order by pathwise monotonicity (each path's
/// minimal offending window span is computed once; δ merely thresholds it).
#[derive(Debug, Clone, PartialEq)]
pub struct TightnessReport {
    pub eta: f64,
    pub paths: u64,
    /// Ordered by decreasing δ.
    pub rows: Vec<TightnessRow>,
    /// Non-increasing along the rows (always true by construction; recorded
    /// for the harness).
    pub monotone: bool,
}

/// Sample `paths` bridges from a to b over [0, t] on an N-step skeleton and
/// tabulate P(m(ω: δ) > η) on the given δ grid.
pub fn tightness_report(
    params: GridParams,
    a: u128,
    b: u128,
    t: f64,
    steps: u32,
    paths: u64,
    eta: f64,
    deltas: &[f64],
    seed: SeedSpec,
) -> Result<TightnessReport, StochasticError> {
    if paths == 0 {
        return Err(StochasticError::BadPaths);
    }
    if !eta.is_finite() || eta < 0.0 {
        return Err(StochasticError::BadThreshold);
    }
    if deltas.is_empty() {
        return Err(StochasticError::EmptyInput);
    }
    let mut ds = deltas.to_vec();
    for &d in &ds {
        if !d.is_finite() || d <= 0.0 {
            return Err(StochasticError::BadDelta);
        }
    }
    ds.sort_by(|x, y| y.partial_cmp(x).expect("finite"));
    ds.dedup();
    let sampler = BridgeSampler::new(params, a, b, t, steps)?;
    // Minimal offending span per path; ∞ when the path never offends.
    let spans: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|r| {
            let skeleton = sampler
                .sample(seed.offset(1 + r))
                .expect("bridge sampling cannot fail after construction");
            skeleton
                .min_span_exceeding(eta)
                .expect("eta validated")
                .unwrap_or(f64::INFINITY)
        })
        .collect();
    let rows: Vec<TightnessRow> = ds
        .iter()
        .map(|&delta| {
            let count = spans.iter().filter(|&&s| s < delta).count();
            TightnessRow {
                delta,
                exceed_probability: count as f64 / paths as f64,
            }
        })
        .collect();
    let monotone = rows
        .windows(2)
        .all(|w| w[1].exceed_probability <= w[0].exceed_probability);
    Ok(TightnessReport {
        eta,
        paths,
        rows,
        monotone,
    })
}

// ---------------------------------------------------------------------------
// Frequency-test helpers
// ---------------------------------------------------------------------------

/// A χ² goodness-of-fit verdict against exact cell probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub dof: u64,
    pub critical_value: f64,
    pub significance: f64,
    pub pass: bool,
    /// Cells merged into the pooled bucket for having expected count below
    /// [`CHI_SQUARE_MIN_EXPECTED`].
    pub pooled_cells: usize,
}

/// Pearson χ² of observed counts against exact probabilities, at the given
/// significance (e.g. 0.01). Cells with expected count under
/// [`CHI_SQUARE_MIN_EXPECTED`] are pooled into one bucket first.
pub fn chi_square_gof(
    observed: &[u64],
    probabilities: &[f64],
    significance: f64,
) -> Result<ChiSquareReport, StochasticError> {
    if observed.len() != probabilities.len() {
        return Err(StochasticError::LengthMismatch {
            left: observed.len(),
            right: probabilities.len(),
        });
    }
    if observed.is_empty() {
        return Err(StochasticError::EmptyInput);
    }
    if !(significance > 0.0 && significance < 1.0) {
        return Err(StochasticError::InvalidWeights(
            "significance must lie in (0, 1)",
        ));
    }
    for &q in probabilities {
        if !q.is_finite() || q < 0.0 {
            return Err(StochasticError::InvalidWeights(
                "cell probabilities must be finite and nonnegative",
            ));
        }
    }
    let total_prob = pairwise_sum_f64(probabilities);
    if (total_prob - 1.0).abs() > 1e-9 {
        return Err(StochasticError::InvalidWeights(
            "cell probabilities must sum to 1",
        ));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(StochasticError::EmptyInput);
    }
    let n = total as f64;
    let mut statistic = 0.0;
    let mut kept = 0usize;
    let mut pooled_cells = 0usize;
    let mut pooled_obs = 0.0f64;
    let mut pooled_exp = 0.0f64;
    for (&o, &q) in observed.iter().zip(probabilities.iter()) {
        let expected = n * q;
        if expected < CHI_SQUARE_MIN_EXPECTED {
            pooled_cells += 1;
            pooled_obs += o as f64;
            pooled_exp += expected;
        } else {
            statistic += (o as f64 - expected).powi(2) / expected;
            kept += 1;
        }
    }
    let mut cells = kept;
    if pooled_cells > 0 && pooled_exp > 0.0 {
        statistic += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        cells += 1;
    }
    if cells < 2 {
        return Err(StochasticError::InvalidWeights(
            "fewer than two usable cells after pooling",
        ));
    }
    let dof = (cells - 1) as u64;
    let dist = ChiSquared::new(dof as f64)
        .map_err(|e| StochasticError::InvariantViolation(format!("chi-squared dof: {e}")))?;
    let critical_value = dist.inverse_cdf(1.0 - significance);
    Ok(ChiSquareReport {
        statistic,
        dof,
        critical_value,
        significance,
        pass: statistic <= critical_value,
        pooled_cells,
    })
}

/// Per-cell multinomial band verdict: the worst standardized deviation
/// |O_i − N·q_i| / sqrt(N·q_i·(1−q_i)) across cells, compared to a band
/// width in σ units. Cells with q_i ∈ {0, 1} have zero variance and demand
/// an exact count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandReport {
    pub max_deviation_sigmas: f64,
    pub worst_cell: usize,
    pub band_sigmas: f64,
    pub pass: bool,
}

pub fn multinomial_band_check(
    observed: &[u64],
    probabilities: &[f64],
    band_sigmas: f64,
) -> Result<BandReport, StochasticError> {
    if observed.len() != probabilities.len() {
        return Err(StochasticError::LengthMismatch {
            left: observed.len(),
            right: probabilities.len(),
        });
    }
    if observed.is_empty() {
        return Err(StochasticError::EmptyInput);
    }
    if !(band_sigmas > 0.0) || !band_sigmas.is_finite() {
        return Err(StochasticError::BadThreshold);
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(StochasticError::EmptyInput);
    }
    let n = total as f64;
    let mut worst = 0.0f64;
    let mut worst_cell = 0usize;
    for (i, (&o, &q)) in observed.iter().zip(probabilities.iter()).enumerate() {
        if !q.is_finite() || q < 0.0 || q > 1.0 {
            return Err(StochasticError::InvalidWeights(
                "cell probabilities must lie in [0, 1]",
            ));
        }
        let expected = n * q;
        let var = n * q * (1.0 - q);
        let dev = if var > 0.0 {
            (o as f64 - expected).abs() / var.sqrt()
        } else if (o as f64 - expected).abs() == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        if dev > worst {
            worst = dev;
            worst_cell = i;
        }
    }
    Ok(BandReport {
        max_deviation_sigmas: worst,
        worst_cell,
        band_sigmas,
        pass: worst <= band_sigmas,
    })
}
