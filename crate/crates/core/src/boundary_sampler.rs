//! Monte Carlo sampling of the boundary point `ξ = Σ x_j e^{−S_{j−1}}` with a
//! certified stopping rule, plus speed and stationarity diagnostics.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonic::EmpiricalMeasure;
use crate::rng::{self, Rng};
use crate::sol_group::{self, axis_distance, BoundarySide, SolElement};
use crate::step_measure::StepMeasure;
use crate::vertical_walk::lundberg_exponent;

/// Hard cap on walk length per sample.
pub const MAX_STEPS: u64 = 100_000_000;

/// Largest tolerated fraction of capped samples in a batch.
pub const MAX_FAILURE_FRACTION: f64 = 1e-3;

/// Partial products `W_n = X_1 ⋯ X_n` in coordinates `(S_n, U_n, V_n)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WalkState {
    pub n: u64,
    pub s: f64,
    pub u: f64,
    pub v: f64,
}

impl WalkState {
    pub const START: WalkState = WalkState {
        n: 0,
        s: 0.0,
        u: 0.0,
        v: 0.0,
    };

    /// `W_{n+1} = W_n · X`.
    pub fn step(&self, inc: &SolElement) -> Result<WalkState> {
        let du = if inc.x == 0.0 { 0.0 } else { inc.x * (-self.s).exp() };
        let dv = if inc.y == 0.0 { 0.0 } else { inc.y * self.s.exp() };
        let next = WalkState {
            n: self.n + 1,
            s: self.s + inc.z,
            u: self.u + du,
            v: self.v + dv,
        };
        if !(next.s.is_finite() && next.u.is_finite() && next.v.is_finite()) {
            return Err(Error::NumericRange(format!(
                "walk left floating-point range at step {}",
                next.n
            )));
        }
        Ok(next)
    }

    pub fn element(&self) -> SolElement {
        SolElement::new(self.s, self.u, self.v)
    }
}

/// One sampled boundary point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundarySample {
    pub xi: f64,
    pub err_bound: f64,
    /// Probability that the limit lies within `err_bound` of `xi`.
    pub err_confidence: f64,
    pub steps: u64,
    pub side: BoundarySide,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum StopRule {
    /// Every horizontal offset vanishes.
    Zero,
    /// Every vertical step is at least `z_min > 0`: geometric tail bound.
    Deterministic { z_min: f64 },
    /// Stop once `S_n ≥ threshold` (moment bound of order `s` plus Markov).
    Moment { s: f64, threshold: f64 },
}

/// Everything needed to run paths of one measure on its drift side.
#[derive(Clone, Debug)]
pub struct SamplerPlan {
    side: BoundarySide,
    z: Vec<f64>,
    x: Vec<f64>,
    contraction: Vec<f64>,
    index: WeightedIndex<f64>,
    x_max: f64,
    eps: f64,
    delta: f64,
    rule: StopRule,
}

impl SamplerPlan {
    pub fn new(mu: &StepMeasure, eps: f64, delta: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Validation(format!(
                "eps and delta must lie in (0,1), got {eps}, {delta}"
            )));
        }
        let side = mu
            .side()
            .ok_or_else(|| Error::ZeroDrift("boundary sampling needs nonzero drift".into()))?;
        let oriented = match side {
            BoundarySide::Plus => mu.clone(),
            BoundarySide::Minus => mu.mirrored(),
        };
        let atoms = oriented.atoms();
        let z: Vec<f64> = atoms.iter().map(|a| a.0.z).collect();
        let x: Vec<f64> = atoms.iter().map(|a| a.0.x).collect();
        let contraction = z.iter().map(|z| (-z).exp()).collect();
        let index = WeightedIndex::new(atoms.iter().map(|a| a.1))
            .map_err(|e| Error::Validation(format!("bad weights: {e}")))?;
        let x_max = oriented.x_max();
        let z_min = z.iter().copied().fold(f64::INFINITY, f64::min);
        let rule = if x_max == 0.0 {
            StopRule::Zero
        } else if z_min > 0.0 {
            StopRule::Deterministic { z_min }
        } else {
            let z_atoms = oriented.z_marginal();
            let theta = lundberg_exponent(&z_atoms)?;
            let s = (0.5 * theta).min(1.0);
            let phi: f64 = z_atoms.iter().map(|&(z, w)| w * (-s * z).exp()).sum();
            if !(phi < 1.0) {
                return Err(Error::NumericRange(format!(
                    "moment generating value {phi} is not below 1"
                )));
            }
            // x_max^s e^{-s S} / ((1 - φ(s)) eps^s) ≤ δ
            let threshold = x_max.ln() - eps.ln() - ((1.0 - phi) * delta).ln() / s;
            StopRule::Moment { s, threshold }
        };
        Ok(Self {
            side,
            z,
            x,
            contraction,
            index,
            x_max,
            eps,
            delta,
            rule,
        })
    }

    pub fn side(&self) -> BoundarySide {
        self.side
    }

    /// Tail exponent `s` of the moment rule, if it is in use.
    pub fn moment_order(&self) -> Option<f64> {
        match self.rule {
            StopRule::Moment { s, .. } => Some(s),
            _ => None,
        }
    }

    /// Geometric tail bound `x_max e^{−S}/(1 − e^{−z_min})` for ascending walks.
    fn deterministic_tail(&self, s: f64, z_min: f64) -> f64 {
        self.x_max * (-s).exp() / -(-z_min).exp_m1()
    }

    fn done(&self, s: f64) -> bool {
        match self.rule {
            StopRule::Zero => true,
            StopRule::Deterministic { z_min } => self.deterministic_tail(s, z_min) <= self.eps,
            StopRule::Moment { threshold, .. } => s >= threshold,
        }
    }

    /// Runs one path until the stopping rule fires, then for `extra` more
    /// multiples of the elapsed step count. Returns the stopped sample and
    /// the value after the extension.
    fn run(&self, rng: &mut Rng, extend: u64) -> Result<(BoundarySample, f64)> {
        let (mut s, mut u, mut scale) = (0.0f64, 0.0f64, 1.0f64);
        let mut n = 0u64;
        loop {
            let i = self.index.sample(rng);
            u += self.x[i] * scale;
            scale *= self.contraction[i];
            s += self.z[i];
            n += 1;
            if self.done(s) {
                break;
            }
            if n >= MAX_STEPS {
                return Err(Error::StepCap { failed: 1, total: 1 });
            }
        }
        let (err_bound, err_confidence) = match self.rule {
            StopRule::Zero => (0.0, 1.0),
            StopRule::Deterministic { z_min } => (self.deterministic_tail(s, z_min), 1.0),
            StopRule::Moment { .. } => (self.eps, 1.0 - self.delta),
        };
        let sample = BoundarySample {
            xi: u,
            err_bound,
            err_confidence,
            steps: n,
            side: self.side,
        };
        let mut long = u;
        for _ in 0..n.saturating_mul(extend) {
            let i = self.index.sample(rng);
            long += self.x[i] * scale;
            scale *= self.contraction[i];
        }
        Ok((sample, long))
    }

    pub fn sample(&self, rng: &mut Rng) -> Result<BoundarySample> {
        self.run(rng, 0).map(|r| r.0)
    }
}

/// Samples `ξ` (or `ξ'` for negative drift) to within `eps` with probability `≥ 1 − delta`.
pub fn sample_xi(mu: &StepMeasure, rng: &mut Rng, eps: f64, delta: f64) -> Result<BoundarySample> {
    SamplerPlan::new(mu, eps, delta)?.sample(rng)
}

/// `n` independent samples, sorted. Sample `i` draws from chunk stream `i / CHUNK`.
pub fn sample_batch(mu: &StepMeasure, n: usize, seed: u64, eps: f64, delta: f64) -> Result<EmpiricalMeasure> {
    if n == 0 {
        return Err(Error::Validation("need at least one sample".into()));
    }
    let plan = SamplerPlan::new(mu, eps, delta)?;
    let chunks = rng::par_chunked(n, seed, rng::salt::BOUNDARY, |rng, _, len| {
        let mut out = Vec::with_capacity(len);
        let mut failed = 0usize;
        let mut max_err: f64 = 0.0;
        let mut confidence: f64 = 1.0;
        for _ in 0..len {
            match plan.sample(rng) {
                Ok(b) => {
                    max_err = max_err.max(b.err_bound);
                    confidence = confidence.min(b.err_confidence);
                    out.push(b.xi);
                }
                Err(Error::StepCap { .. }) => failed += 1,
                Err(e) => return Err(e),
            }
        }
        Ok((out, failed, max_err, confidence))
    });
    let mut samples = Vec::with_capacity(n);
    let (mut failed, mut max_err, mut confidence) = (0usize, 0.0f64, 1.0f64);
    for chunk in chunks {
        let (out, f, e, c) = chunk?;
        samples.extend(out);
        failed += f;
        max_err = max_err.max(e);
        confidence = confidence.min(c);
    }
    if failed as f64 > MAX_FAILURE_FRACTION * n as f64 || samples.is_empty() {
        return Err(Error::StepCap { failed, total: n });
    }
    EmpiricalMeasure::new(samples, Some(seed), max_err, confidence, failed)
}

/// Outcome of re-running stopped paths for longer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub paths: usize,
    pub extension_factor: u64,
    pub eps: f64,
    pub delta: f64,
    /// Paths whose extended value moved by more than `eps`.
    pub violations: usize,
    pub max_deviation: f64,
}

/// Continues each stopped path for `factor` times its length and counts
/// deviations beyond `eps`.
pub fn truncation_check(
    mu: &StepMeasure,
    paths: usize,
    seed: u64,
    eps: f64,
    delta: f64,
    factor: u64,
) -> Result<TruncationReport> {
    let plan = SamplerPlan::new(mu, eps, delta)?;
    let chunks = rng::par_chunked(paths, seed, rng::salt::BOUNDARY ^ 0x55, |rng, _, len| {
        let mut violations = 0usize;
        let mut max_dev: f64 = 0.0;
        for _ in 0..len {
            let (b, long) = plan.run(rng, factor)?;
            let dev = (b.xi - long).abs();
            max_dev = max_dev.max(dev);
            if dev > eps {
                violations += 1;
            }
        }
        Ok::<_, Error>((violations, max_dev))
    });
    let mut violations = 0;
    let mut max_deviation: f64 = 0.0;
    for c in chunks {
        let (v, d) = c?;
        violations += v;
        max_deviation = max_deviation.max(d);
    }
    Ok(TruncationReport {
        paths,
        extension_factor: factor,
        eps,
        delta,
        violations,
        max_deviation,
    })
}

/// Empirical speed of the walk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate {
    pub alpha: f64,
    pub n: u64,
    pub trials: usize,
    pub mean_s_over_n: f64,
    /// Standard error of `mean_s_over_n`.
    pub stderr: f64,
    /// Mean of the distance lower bound over `n`.
    pub lower_over_n: f64,
    /// Mean of the distance upper bound over `n`.
    pub upper_over_n: f64,
}

/// Distance bounds from `(S, U, V)` kept as `U, e^{S}U, V, e^{−S}V` so that
/// none of them overflows on long walks.
fn sandwich(s: f64, u: f64, u_scaled: f64, v: f64, v_scaled: f64) -> (f64, f64) {
    let az = s.abs();
    let mut upper = f64::INFINITY;
    if u.is_finite() && v_scaled.is_finite() {
        upper = upper.min(axis_distance(u) + az + axis_distance(v_scaled));
    }
    if v.is_finite() && u_scaled.is_finite() {
        upper = upper.min(axis_distance(v) + az + axis_distance(u_scaled));
    }
    let mut lower = az;
    if u.is_finite() {
        lower = lower.max(sol_group::hyperbolic_plane_distance(s, u));
    }
    if v.is_finite() {
        lower = lower.max(sol_group::hyperbolic_plane_distance(-s, v));
    }
    if u.is_finite() && v.is_finite() {
        let b = sol_group::distance_bounds(&SolElement::new(s, u, v));
        if b.upper.is_finite() {
            upper = upper.min(b.upper);
            lower = lower.max(b.lower);
        }
    }
    (lower.min(upper), upper)
}

/// Mean of `S_n/n` and of the distance sandwich over `trials` walks of length `n`.
pub fn speed_estimate(mu: &StepMeasure, n: u64, trials: usize, seed: u64) -> Result<SpeedEstimate> {
    if n == 0 || trials == 0 {
        return Err(Error::Validation("need n >= 1 and trials >= 1".into()));
    }
    let atoms = mu.atoms();
    let steps: Vec<(f64, f64, f64, f64, f64)> = atoms
        .iter()
        .map(|(g, _)| (g.z, g.x, g.y, g.z.exp(), (-g.z).exp()))
        .collect();
    let index =
        WeightedIndex::new(atoms.iter().map(|a| a.1)).map_err(|e| Error::Validation(format!("bad weights: {e}")))?;
    let nf = n as f64;
    let chunks = rng::par_chunked(trials, seed, rng::salt::SPEED, |rng, _, len| {
        let mut rows = Vec::with_capacity(len);
        for _ in 0..len {
            let (mut s, mut u, mut v) = (0.0f64, 0.0f64, 0.0f64);
            let (mut us, mut vs) = (0.0f64, 0.0f64);
            let (mut down, mut up) = (1.0f64, 1.0f64);
            for _ in 0..n {
                let (z, x, y, ez, emz) = steps[index.sample(rng)];
                u += x * down;
                v += y * up;
                us = ez * (us + x);
                vs = emz * (vs + y);
                down *= emz;
                up *= ez;
                s += z;
            }
            let (lo, hi) = sandwich(s, u, us, v, vs);
            rows.push((s / nf, lo / nf, hi / nf));
        }
        rows
    });
    let rows: Vec<(f64, f64, f64)> = chunks.into_iter().flatten().collect();
    let t = rows.len() as f64;
    let mean = rng::pairwise_sum(&rows.iter().map(|r| r.0).collect::<Vec<_>>()) / t;
    let lower = rng::pairwise_sum(&rows.iter().map(|r| r.1).collect::<Vec<_>>()) / t;
    let upper = rng::pairwise_sum(&rows.iter().map(|r| r.2).collect::<Vec<_>>()) / t;
    let var = if rows.len() > 1 {
        rows.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / (t - 1.0)
    } else {
        0.0
    };
    Ok(SpeedEstimate {
        alpha: mu.drift(),
        n,
        trials,
        mean_s_over_n: mean,
        stderr: (var / t).sqrt(),
        lower_over_n: lower,
        upper_over_n: upper,
    })
}

/// Two-sample Kolmogorov–Smirnov statistic of sorted inputs.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// KS statistic tolerant of per-sample errors up to `h` in total: the larger
/// of `sup F_a(x) - F_b(x + h)` and `sup F_b(x) - F_a(x + h)`. Under the null
/// it is dominated by the statistic of the exact values. Inputs sorted.
pub fn ks_statistic_shifted(a: &[f64], b: &[f64], h: f64) -> f64 {
    fn one_sided(a: &[f64], b: &[f64], h: f64) -> f64 {
        let (n, m) = (a.len() as f64, b.len() as f64);
        let mut j = 0usize;
        let mut d: f64 = 0.0;
        let mut i = 0usize;
        while i < a.len() {
            let x = a[i];
            while i < a.len() && a[i] <= x {
                i += 1;
            }
            while j < b.len() && b[j] <= x + h {
                j += 1;
            }
            d = d.max(i as f64 / n - j as f64 / m);
        }
        d
    }
    one_sided(a, b, h).max(one_sided(b, a, h))
}

/// Two-sample KS critical value at significance `level` (asymptotic).
pub fn ks_critical(n: usize, m: usize, level: f64) -> f64 {
    let c = (-(level / 2.0).ln() / 2.0).sqrt();
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}

/// Asymptotic p-value of a two-sample KS statistic.
pub fn ks_p_value(d: f64, n: usize, m: usize) -> f64 {
    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// KS comparison of `{ξ_i}` against `{g_i·ξ_j}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    /// Plain two-sample statistic of the stored values.
    pub ks: f64,
    /// Statistic allowing each comparison to absorb the truncation errors.
    pub ks_shifted: f64,
    /// Total error allowance used for `ks_shifted`.
    pub shift: f64,
    pub n_original: usize,
    pub n_resampled: usize,
    /// 99.9% quantile of the two-sample null distribution.
    pub null_quantile: f64,
    pub p_value: f64,
    pub passes: bool,
}

/// Splits the samples at random into two halves, pushes the second half
/// forward by independent steps `g ~ μ` and compares with the first half.
pub fn stationarity_check(
    mu: &StepMeasure,
    samples: &EmpiricalMeasure,
    n_resample: usize,
    seed: u64,
) -> Result<StationarityReport> {
    let side = mu
        .side()
        .ok_or_else(|| Error::ZeroDrift("stationarity needs nonzero drift".into()))?;
    let xs = samples.samples();
    if xs.len() < 4 {
        return Err(Error::InsufficientSamples(format!("{} samples", xs.len())));
    }
    let mut rng = rng::stream(seed, rng::salt::STATIONARITY, 0);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.shuffle(&mut rng);
    let half = xs.len() / 2;
    let mut original: Vec<f64> = order[..half].iter().map(|&i| xs[i]).collect();
    let pool = &order[half..];
    let take = n_resample.clamp(1, pool.len());
    let atoms = mu.atoms();
    let index =
        WeightedIndex::new(atoms.iter().map(|a| a.1)).map_err(|e| Error::Validation(format!("bad weights: {e}")))?;
    let mut pushed: Vec<f64> = pool[..take]
        .iter()
        .map(|&i| atoms[index.sample(&mut rng)].0.act(xs[i], side))
        .collect();
    original.sort_by(f64::total_cmp);
    pushed.sort_by(f64::total_cmp);
    let ks = ks_statistic(&original, &pushed);
    let stretch = atoms
        .iter()
        .map(|(g, _)| (g.act(1.0, side) - g.act(0.0, side)).abs())
        .fold(0.0, f64::max);
    let shift = samples.max_err() * (1.0 + stretch) * (1.0 + 1e-12);
    let ks_shifted = ks_statistic_shifted(&original, &pushed, shift);
    let null_quantile = ks_critical(original.len(), pushed.len(), 1e-3);
    Ok(StationarityReport {
        ks,
        ks_shifted,
        shift,
        n_original: original.len(),
        n_resampled: pushed.len(),
        null_quantile,
        p_value: ks_p_value(ks_shifted, original.len(), pushed.len()),
        passes: ks_shifted < null_quantile,
    })
}
