//! Fourier and dimension diagnostics of harmonic measures.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::pisot::PisotCertificate;
use crate::rng::{self, Rng};
use crate::step_measure::{check_erdos_weights, StepMeasure};
use crate::vertical_walk::{
    occupation_with, return_probability, OccupationProfile, ReturnMethod, TruncationPolicy, VerticalLaw,
    VerticalWalkStats,
};

/// Sorted sample of a boundary law together with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    samples: Vec<f64>,
    seed: Option<u64>,
    max_err: f64,
    confidence: f64,
    failures: usize,
}

impl EmpiricalMeasure {
    pub fn new(
        mut samples: Vec<f64>,
        seed: Option<u64>,
        max_err: f64,
        confidence: f64,
        failures: usize,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InsufficientSamples("empty sample".into()));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("non-finite sample".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self {
            samples,
            seed,
            max_err,
            confidence,
            failures,
        })
    }

    /// Samples with no truncation error and no provenance.
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, None, 0.0, 1.0, 0)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Largest per-sample truncation error.
    pub fn max_err(&self) -> f64 {
        self.max_err
    }

    /// Smallest per-sample confidence that the error bound holds.
    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    /// Samples dropped after hitting the step cap.
    pub fn failures(&self) -> usize {
        self.failures
    }

    pub fn mean(&self) -> f64 {
        rng::pairwise_sum(&self.samples) / self.samples.len() as f64
    }
}

/// `ν̂(t)` with its error budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierEvaluation {
    pub t: f64,
    pub re: f64,
    pub im: f64,
    pub stat_err: f64,
    pub trunc_err: f64,
}

impl FourierEvaluation {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn total_err(&self) -> f64 {
        self.stat_err + self.trunc_err
    }
}

const ECF_BLOCK: usize = 8192;

/// Empirical characteristic function `(1/N) Σ e^{itξ_j}`.
pub fn ecf(samples: &EmpiricalMeasure, t: f64) -> Result<FourierEvaluation> {
    let xs = samples.samples();
    if xs.len() < 2 {
        return Err(Error::InsufficientSamples("ecf needs at least two samples".into()));
    }
    let partial: Vec<(f64, f64)> = xs
        .par_chunks(ECF_BLOCK)
        .map(|c| {
            c.iter().fold((0.0, 0.0), |(a, b), &x| {
                let (s, co) = (t * x).sin_cos();
                (a + co, b + s)
            })
        })
        .collect();
    let n = xs.len() as f64;
    let re = rng::pairwise_sum(&partial.iter().map(|p| p.0).collect::<Vec<_>>()) / n;
    let im = rng::pairwise_sum(&partial.iter().map(|p| p.1).collect::<Vec<_>>()) / n;
    Ok(FourierEvaluation {
        t,
        re,
        im,
        stat_err: 1.0 / n.sqrt(),
        trunc_err: samples.max_err() * t.abs(),
    })
}

/// Monte Carlo evaluation of `ν̂(t) = E Π_k φ_x(tβ^k)^{n(ζ,k)}` over sampled
/// vertical paths, where `φ_x` is the characteristic function of `μ_x`.
pub struct ProductEstimator {
    gamma: f64,
    x_atoms: Vec<(f64, f64)>,
    second_moment: f64,
    stats: VerticalWalkStats,
    max_level: i64,
    profiles: Vec<OccupationProfile>,
    capped: usize,
}

impl ProductEstimator {
    /// Samples `n_paths` occupation profiles up to `max_level`.
    pub fn new(mu: &StepMeasure, n_paths: usize, seed: u64, max_level: i64, delta: f64) -> Result<Self> {
        let law = Self::check(mu)?;
        let stats = vertical_stats(&law, seed)?;
        let policy = TruncationPolicy::for_law(&law, delta)?;
        let sampler = law.sampler();
        let chunks = rng::par_chunked(n_paths, seed, rng::salt::VERTICAL ^ 0x77, |rng: &mut Rng, _, len| {
            let mut scratch = Vec::new();
            (0..len)
                .map(|_| occupation_with(&sampler, rng, max_level, &policy, &mut scratch))
                .collect::<Vec<_>>()
        });
        let profiles: Vec<OccupationProfile> = chunks.into_iter().flatten().collect();
        let capped = profiles.iter().filter(|p| p.capped).count();
        let x_atoms = mu.x_marginal();
        let second_moment = x_atoms.iter().map(|&(x, w)| w * x * x).sum();
        Ok(Self {
            gamma: law.gamma,
            x_atoms,
            second_moment,
            stats,
            max_level,
            profiles,
            capped,
        })
    }

    fn check(mu: &StepMeasure) -> Result<VerticalLaw> {
        if !mu.is_x_symmetric() {
            return Err(Error::Validation(
                "product formula needs a symmetric horizontal law".into(),
            ));
        }
        if mu.product_form().is_none() {
            return Err(Error::Validation("product formula needs a product-form measure".into()));
        }
        let law = mu.vertical_law()?;
        if !(law.drift() > 0.0) {
            return Err(Error::ZeroDrift("product formula needs positive drift".into()));
        }
        Ok(law)
    }

    /// Top level needed so that dropping higher levels costs at most `eps`
    /// at frequency scale `t` (in units where level `k` contributes `tβ^k`).
    pub fn levels_needed(&self, t: f64, eps: f64) -> i64 {
        levels_needed(t, eps, self.gamma, self.stats.m, self.second_moment)
    }

    pub fn stats(&self) -> &VerticalWalkStats {
        &self.stats
    }

    pub fn paths(&self) -> usize {
        self.profiles.len()
    }

    pub fn capped_paths(&self) -> usize {
        self.capped
    }

    /// `ν̂(t)` for real `t`.
    pub fn evaluate(&self, t: f64, eps: f64) -> Result<FourierEvaluation> {
        let beta = (-self.gamma).exp();
        let factor = |k: i64| -> f64 {
            let scale = t * beta.powi(k as i32);
            self.x_atoms.iter().map(|&(x, w)| w * (scale * x).cos()).sum()
        };
        self.run(t, t, eps, factor)
    }

    /// `ν̂(2πβ^l)` with `β^{k+l}` reduced modulo 1 through the certificate.
    pub fn evaluate_pisot(&self, cert: &PisotCertificate, l: i64, eps: f64) -> Result<FourierEvaluation> {
        if (cert.gamma() - self.gamma).abs() > 1e-9 * self.gamma {
            return Err(Error::Validation("certificate does not match the vertical step".into()));
        }
        if self.x_atoms.iter().any(|a| a.0.fract() != 0.0) {
            return Err(Error::Validation(
                "Pisot frequencies need integer horizontal offsets".into(),
            ));
        }
        let t = 2.0 * PI * cert.beta.powi(l as i32);
        let lo = self.profiles.iter().map(|p| p.min_level).min().unwrap_or(0);
        let hi = self.levels_needed(t, eps);
        let mut table = Vec::with_capacity((hi - lo + 1).max(0) as usize);
        for k in lo..=hi {
            let frac = cert.beta_power_mod1(k + l)?;
            table.push(
                self.x_atoms
                    .iter()
                    .map(|&(x, w)| w * (2.0 * PI * x * frac).cos())
                    .sum::<f64>(),
            );
        }
        self.run(t, t, eps, |k| table[(k - lo) as usize])
    }

    fn run(&self, t: f64, scale: f64, eps: f64, factor: impl Fn(i64) -> f64 + Sync) -> Result<FourierEvaluation> {
        let hi = self.levels_needed(scale, eps);
        if hi > self.max_level {
            return Err(Error::Validation(format!(
                "frequency {t} needs levels up to {hi}, paths were sampled to {}",
                self.max_level
            )));
        }
        let lo = self.profiles.iter().map(|p| p.min_level).min().unwrap_or(0);
        let table: Vec<f64> = (lo..=hi).map(&factor).collect();
        let values: Vec<f64> = self
            .profiles
            .par_iter()
            .map(|p| {
                let mut v = 1.0f64;
                for (k, n) in p.iter() {
                    if k > hi {
                        break;
                    }
                    v *= table[(k - lo) as usize].powi(n as i32);
                }
                v
            })
            .collect();
        let n = values.len() as f64;
        let mean = rng::pairwise_sum(&values) / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let bias = self.capped as f64 / n * 2.0;
        let tail = truncation_tail(scale, hi, self.gamma, self.stats.m, self.second_moment);
        Ok(FourierEvaluation {
            t,
            re: mean,
            im: 0.0,
            stat_err: (var / n).sqrt(),
            trunc_err: tail + bias,
        })
    }
}

/// `M E[x²] t² β^{2(K+1)} / (2(1 − β²))`: expected cost of dropping levels above `K`.
fn truncation_tail(t: f64, k: i64, gamma: f64, m: f64, second_moment: f64) -> f64 {
    let b2 = (-2.0 * gamma).exp();
    m * second_moment * t * t * b2.powi((k + 1) as i32) / (2.0 * (1.0 - b2))
}

fn levels_needed(t: f64, eps: f64, gamma: f64, m: f64, second_moment: f64) -> i64 {
    if t == 0.0 || second_moment == 0.0 {
        return 0;
    }
    let mut k = 0i64;
    while truncation_tail(t, k, gamma, m, second_moment) > eps {
        k += 1;
    }
    k
}

fn vertical_stats(law: &VerticalLaw, seed: u64) -> Result<VerticalWalkStats> {
    match return_probability(law, ReturnMethod::Exact2Atom) {
        Err(Error::MethodMismatch(_)) => {
            let mut stats = return_probability(
                law,
                ReturnMethod::MonteCarlo {
                    paths: 200_000,
                    seed,
                    delta: 1e-9,
                },
            )?;
            // a conservative occupation bound for the truncation budget
            let p = (stats.p_ret + 4.0 * stats.p_ret_stderr + stats.truncation_bias).min(0.999);
            stats.m = 1.0 / (1.0 - p);
            Ok(stats)
        }
        other => other,
    }
}

/// `ν̂(t)` by the product formula with `n_paths` vertical paths.
pub fn exact_ft_product(mu: &StepMeasure, t: f64, n_paths: usize, seed: u64, eps: f64) -> Result<FourierEvaluation> {
    exact_ft_product_grid(mu, &[t], n_paths, seed, eps).map(|mut v| v.remove(0))
}

/// The product formula on a grid of real frequencies, sharing one set of paths.
pub fn exact_ft_product_grid(
    mu: &StepMeasure,
    ts: &[f64],
    n_paths: usize,
    seed: u64,
    eps: f64,
) -> Result<Vec<FourierEvaluation>> {
    if n_paths < 2 {
        return Err(Error::Validation("need at least two paths".into()));
    }
    let law = ProductEstimator::check(mu)?;
    let stats = vertical_stats(&law, seed)?;
    let second: f64 = mu.x_marginal().iter().map(|&(x, w)| w * x * x).sum();
    let t_max = ts.iter().fold(0.0f64, |a, t| a.max(t.abs()));
    let top = levels_needed(t_max, eps, law.gamma, stats.m, second);
    let est = ProductEstimator::new(mu, n_paths, seed, top, eps.min(1e-6))?;
    ts.iter().map(|&t| est.evaluate(t, eps)).collect()
}

/// Positive lower bound `c` with `ν̂(2πβ^l) ≥ c^M` for every `l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularityCertificate {
    pub beta: f64,
    pub q0: f64,
    pub q1: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub theta: f64,
    #[serde(rename = "L")]
    pub l: u32,
    pub c: f64,
    pub log_c: f64,
    /// `c^M`.
    pub floor: f64,
    /// `(k, log factor)` for `|k| < L`.
    pub near_factors: Vec<(i64, f64)>,
    /// `Σ_{|k| ≥ L} log(1 − 2q₁θ^{|k|})`.
    pub tail_log: f64,
}

/// `c = Π_{|k|≥L}(1 − 2q₁θ^{|k|}) · Π_{|k|<L}(q₀ + 2q₁cos 2πβ^k)`.
pub fn erdos_certificate(cert: &PisotCertificate, q0: f64, q1: f64, m: f64) -> Result<SingularityCertificate> {
    check_erdos_weights(q0, q1)?;
    if !(m >= 1.0 && m.is_finite()) {
        return Err(Error::Validation(format!("M must be at least 1, got {m}")));
    }
    let theta = cert.theta;
    let big_l = cert.l as i64;
    let term = |k: i64| (-2.0 * q1 * theta.powi(k as i32)).ln_1p();
    // |k| = 0 appears once, every other |k| twice
    let mut tail_log = if big_l == 0 { term(0) } else { 0.0 };
    let mut k = big_l.max(1);
    loop {
        tail_log += 2.0 * term(k);
        let next = 2.0 * q1 * theta.powi((k + 1) as i32);
        // Σ_{j>k} |log(1 − x_j)| ≤ 2 Σ x_j/(1 − x_j) ≤ 2 next/((1 − next)(1 − θ))
        let remainder = 2.0 * next / ((1.0 - next) * (1.0 - theta));
        if remainder <= 1e-13 * tail_log.abs().max(f64::MIN_POSITIVE) || next == 0.0 {
            break;
        }
        k += 1;
    }
    let mut near_factors = Vec::new();
    let mut log_c = tail_log;
    for k in (1 - big_l)..big_l {
        let frac = cert.beta_power_mod1(k)?;
        let f = q0 + 2.0 * q1 * (2.0 * PI * frac).cos();
        if !(f > 0.0) {
            return Err(Error::NumericRange(format!("factor at k = {k} is {f}")));
        }
        near_factors.push((k, f.ln()));
        log_c += f.ln();
    }
    let c = log_c.exp();
    if !(c > 0.0) {
        return Err(Error::NumericRange("certificate constant underflowed".into()));
    }
    Ok(SingularityCertificate {
        beta: cert.beta,
        q0,
        q1,
        m,
        theta,
        l: cert.l,
        c,
        log_c,
        floor: (m * log_c).exp(),
        near_factors,
        tail_log,
    })
}

/// Diagnostic label attached to reports. It never amounts to a proof.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    SingularSignature,
    AcSignature,
    Inconclusive,
}

/// Level below which a Fourier modulus counts as decayed.
pub const DECAY_LEVEL: f64 = 0.05;

/// Labels Fourier values by their behaviour on the upper third of the grid.
pub fn fourier_verdict(evals: &[FourierEvaluation]) -> Verdict {
    if evals.is_empty() {
        return Verdict::Inconclusive;
    }
    let mut sorted: Vec<&FourierEvaluation> = evals.iter().collect();
    sorted.sort_by(|a, b| a.t.abs().total_cmp(&b.t.abs()));
    let top = &sorted[sorted.len() * 2 / 3..];
    if top.iter().all(|e| e.modulus() <= DECAY_LEVEL + 3.0 * e.total_err()) {
        Verdict::AcSignature
    } else if top.iter().all(|e| e.modulus() - 3.0 * e.total_err() > DECAY_LEVEL) {
        Verdict::SingularSignature
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub l: i64,
    pub t: f64,
    pub value: f64,
    pub stat_err: f64,
    pub trunc_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularityProbe {
    pub certificate: SingularityCertificate,
    pub rows: Vec<ProbeRow>,
    /// `min_l (ν̂(t_l) − 3·stat_err)`.
    pub min_lower: f64,
    pub min_value: f64,
    /// Every row satisfies `ν̂(t_l) ≥ c^M − 3·stat_err − trunc_err`.
    pub above_floor: bool,
    pub verdict: Verdict,
}

/// Evaluates `ν̂(2πβ^l)` for `l` in `ls` and compares against the certificate floor.
pub fn singularity_probe(
    mu: &StepMeasure,
    cert: &PisotCertificate,
    ls: &[i64],
    n_paths: usize,
    seed: u64,
    eps: f64,
) -> Result<SingularityProbe> {
    let (q0, q1) = erdos_weights(mu)?;
    let law = ProductEstimator::check(mu)?;
    let stats = vertical_stats(&law, seed)?;
    let certificate = erdos_certificate(cert, q0, q1, stats.m)?;
    let second = 2.0 * q1;
    let t_max = ls
        .iter()
        .map(|&l| 2.0 * PI * cert.beta.powi(l as i32))
        .fold(0.0, f64::max);
    let top = levels_needed(t_max, eps, law.gamma, stats.m, second);
    let est = ProductEstimator::new(mu, n_paths, seed, top, eps.min(1e-6))?;
    let mut rows = Vec::with_capacity(ls.len());
    for &l in ls {
        let e = est.evaluate_pisot(cert, l, eps)?;
        rows.push(ProbeRow {
            l,
            t: e.t,
            value: e.re,
            stat_err: e.stat_err,
            trunc_err: e.trunc_err,
        });
    }
    let min_lower = rows
        .iter()
        .map(|r| r.value - 3.0 * r.stat_err)
        .fold(f64::INFINITY, f64::min);
    let min_value = rows.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    let floor = certificate.floor;
    let above_floor = rows.iter().all(|r| r.value >= floor - 3.0 * r.stat_err - r.trunc_err);
    let verdict = if above_floor && min_value > 0.5 * floor {
        Verdict::SingularSignature
    } else {
        Verdict::Inconclusive
    };
    Ok(SingularityProbe {
        certificate,
        rows,
        min_lower,
        min_value,
        above_floor,
        verdict,
    })
}

/// `(q₀, q₁)` when the horizontal law is `q₁δ₋₁ + q₀δ₀ + q₁δ₁`.
fn erdos_weights(mu: &StepMeasure) -> Result<(f64, f64)> {
    let xs = mu.x_marginal();
    let weight = |x: f64| xs.iter().find(|a| a.0 == x).map(|a| a.1).unwrap_or(0.0);
    let known = xs.iter().all(|a| [-1.0, 0.0, 1.0].contains(&a.0));
    let (q0, q1) = (weight(0.0), weight(1.0));
    if !known || (weight(-1.0) - q1).abs() > 1e-12 {
        return Err(Error::Validation(
            "horizontal law must be q1·δ(-1) + q0·δ(0) + q1·δ(1)".into(),
        ));
    }
    check_erdos_weights(q0, q1)?;
    Ok((q0, q1))
}

/// Least-squares slope of `log|ν̂|` against `log t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
    /// False means "no decay resolved".
    pub resolved: bool,
}

/// Envelope points per fit: the grid is cut into this many windows and the
/// largest modulus of each window is kept.
const ENVELOPE_WINDOWS: usize = 20;

/// Fits the decay exponent of `|ν̂(t)|` over a log-spaced grid.
///
/// Values within their combined error are dropped. The fit uses the upper
/// envelope so that isolated zeros of oscillating transforms do not dominate.
pub fn decay_exponent_fit(evals: &[FourierEvaluation]) -> Result<DecayFit> {
    let mut pts: Vec<(f64, f64)> = evals
        .iter()
        .filter(|e| e.t > 0.0 && e.modulus() > e.total_err() && e.modulus() > 0.0)
        .map(|e| (e.t, e.modulus()))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.len() < 10 {
        return Ok(DecayFit {
            slope: 0.0,
            stderr: f64::INFINITY,
            intercept: 0.0,
            points: pts.len(),
            resolved: false,
        });
    }
    let windows = ENVELOPE_WINDOWS.min(pts.len());
    let env: Vec<(f64, f64)> = (0..windows)
        .map(|w| {
            let a = w * pts.len() / windows;
            let b = (w + 1) * pts.len() / windows;
            let best = pts[a..b]
                .iter()
                .copied()
                .fold((0.0, 0.0), |acc, p| if p.1 > acc.1 { p } else { acc });
            (best.0.ln(), best.1.ln())
        })
        .collect();
    let (slope, intercept, stderr) = linear_fit(&env);
    let resolved = slope + 2.0 * stderr < -0.1;
    Ok(DecayFit {
        slope,
        stderr,
        intercept,
        points: env.len(),
        resolved,
    })
}

/// Ordinary least squares `y = a + b x`; returns `(b, a, se(b))`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return (0.0, my, f64::INFINITY);
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - a - b * p.0).powi(2)).sum();
    let se = if pts.len() > 2 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        f64::INFINITY
    };
    (b, a, se)
}

/// Two dimension estimates of the sampled law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    /// Mean over probes of the slope of `log ν(B_r(x))` against `log r`.
    pub local: f64,
    /// Slope of the log pair-correlation integral against `log r`.
    pub correlation: f64,
    pub r: Vec<f64>,
    /// Mean of `log(count/N)` over probes, per radius.
    pub local_log_mass: Vec<f64>,
    /// `log` of the fraction of pairs within `r`, per radius.
    pub correlation_log: Vec<f64>,
    pub probes: usize,
    /// The two estimates differ by more than 0.1.
    pub disagreement: bool,
}

/// Default radii: 16 log-spaced values from the sample resolution up to a
/// fiftieth of the sample range.
pub fn default_r_grid(samples: &EmpiricalMeasure) -> Vec<f64> {
    let xs = samples.samples();
    let range = xs[xs.len() - 1] - xs[0];
    let n = xs.len() as f64;
    let hi = range / 50.0;
    let lo = (10.0 * samples.max_err()).max(range * 50.0 / n).min(hi / 10.0);
    log_grid(lo, hi, 16)
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Minimum sample size for the dimension estimators.
pub const MIN_DIMENSION_SAMPLES: usize = 10_000;

/// Frostman local-dimension and Grassberger–Procaccia estimates.
pub fn local_dimension(
    samples: &EmpiricalMeasure,
    r_grid: Option<&[f64]>,
    probe_count: usize,
    seed: u64,
) -> Result<DimensionEstimate> {
    let xs = samples.samples();
    if xs.len() < MIN_DIMENSION_SAMPLES {
        return Err(Error::InsufficientSamples(format!(
            "{} samples, need at least {MIN_DIMENSION_SAMPLES}",
            xs.len()
        )));
    }
    if probe_count == 0 {
        return Err(Error::Validation("need at least one probe".into()));
    }
    let n = xs.len();
    if xs[n - 1] == xs[0] {
        return Ok(DimensionEstimate {
            local: 0.0,
            correlation: 0.0,
            r: Vec::new(),
            local_log_mass: Vec::new(),
            correlation_log: Vec::new(),
            probes: probe_count,
            disagreement: false,
        });
    }
    let r: Vec<f64> = match r_grid {
        Some(g) => {
            let floor = 10.0 * samples.max_err();
            if g.len() < 2 || g.iter().any(|&r| !(r > 0.0) || r < floor) {
                return Err(Error::Validation(format!(
                    "radii must be positive, at least {floor}, and two or more"
                )));
            }
            g.to_vec()
        }
        None => default_r_grid(samples),
    };
    let log_r: Vec<f64> = r.iter().map(|r| r.ln()).collect();
    let nf = n as f64;

    let mut rng = rng::stream(seed, rng::salt::DIMENSION, 0);
    let probes: Vec<f64> = {
        use rand::Rng as _;
        (0..probe_count).map(|_| xs[rng.random_range(0..n)]).collect()
    };
    let count_within = |c: f64, radius: f64| {
        let a = xs.partition_point(|&x| x < c - radius);
        let b = xs.partition_point(|&x| x <= c + radius);
        (b - a) as f64
    };
    let local_log_mass: Vec<f64> = r
        .par_iter()
        .map(|&radius| probes.iter().map(|&c| (count_within(c, radius) / nf).ln()).sum::<f64>() / probe_count as f64)
        .collect();
    let correlation_log: Vec<f64> = r
        .par_iter()
        .map(|&radius| {
            let mut j = 0usize;
            let mut pairs = 0u64;
            for i in 0..n {
                if j < i + 1 {
                    j = i + 1;
                }
                while j < n && xs[j] - xs[i] <= radius {
                    j += 1;
                }
                pairs += (j - i - 1) as u64;
            }
            let total = nf * (nf - 1.0) / 2.0;
            (pairs.max(1) as f64 / total).ln()
        })
        .collect();
    let fit = |ys: &[f64]| {
        let pts: Vec<(f64, f64)> = log_r.iter().copied().zip(ys.iter().copied()).collect();
        linear_fit(&pts).0
    };
    let local = fit(&local_log_mass);
    let correlation = fit(&correlation_log);
    Ok(DimensionEstimate {
        local,
        correlation,
        r,
        local_log_mass,
        correlation_log,
        probes: probe_count,
        disagreement: (local - correlation).abs() > 0.1,
    })
}

/// Largest fraction of samples in a window of the given width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomReport {
    pub window: f64,
    pub max_fraction: f64,
    pub n: usize,
}

/// Largest mass in a window of width `10 · max_err` (or `window` when given).
pub fn atom_diagnostic(samples: &EmpiricalMeasure, window: Option<f64>) -> AtomReport {
    let xs = samples.samples();
    let w = window.unwrap_or(10.0 * samples.max_err());
    let mut best = 0usize;
    let mut j = 0usize;
    for i in 0..xs.len() {
        if j < i {
            j = i;
        }
        while j < xs.len() && xs[j] - xs[i] <= w {
            j += 1;
        }
        best = best.max(j - i);
    }
    AtomReport {
        window: w,
        max_fraction: best as f64 / xs.len() as f64,
        n: xs.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernoulli;
    use crate::boundary_sampler::sample_batch;
    use crate::pisot::{certify_pisot, IntPoly};
    use crate::step_measure::{make_erdos, make_solomyak, YRule};
    use rand::Rng as _;
    use std::f64::consts::LN_2;

    fn sinc2(t: f64) -> f64 {
        (2.0 * t).sin() / (2.0 * t)
    }

    #[test]
    fn ecf_trivial_cases() {
        let zeros = EmpiricalMeasure::from_samples(vec![0.0; 10]).unwrap();
        for t in [0.0, 1.0, 100.0] {
            let e = ecf(&zeros, t).unwrap();
            assert_eq!((e.re, e.im), (1.0, 0.0));
        }
        let some = EmpiricalMeasure::from_samples(vec![0.3, -2.0, 5.0]).unwrap();
        assert_eq!(ecf(&some, 0.0).unwrap().re, 1.0);
        let one = EmpiricalMeasure::from_samples(vec![1.0]).unwrap();
        assert!(ecf(&one, 1.0).is_err());
    }

    #[test]
    fn ecf_of_uniform_bernoulli_samples() {
        let mut rng = rng::stream(1, 0, 0);
        let xs: Vec<f64> = (0..200_000)
            .map(|_| bernoulli::sample_b(0.5, &mut rng, 1e-12).unwrap())
            .collect();
        let m = EmpiricalMeasure::from_samples(xs).unwrap();
        for t in [0.5, 1.0, 3.0, 10.0, 30.0] {
            let e = ecf(&m, t).unwrap();
            assert!((e.re - sinc2(t)).abs() <= 4.0 * e.stat_err, "t={t}");
        }
    }

    #[test]
    fn product_formula_trivial_and_envelope() {
        let mu = make_solomyak(LN_2, 0.7, YRule::Zero).unwrap();
        let zero = exact_ft_product(&mu, 0.0, 1000, 1, 1e-9).unwrap();
        assert_eq!(zero.re, 1.0);
        let ts = log_grid(1.0, 1e3, 12);
        let evals = exact_ft_product_grid(&mu, &ts, 20_000, 2, 1e-6).unwrap();
        for e in &evals {
            assert!(
                e.re.abs() <= 1.0 / (2.0 * e.t) + 3.0 * e.stat_err + e.trunc_err,
                "{e:?}"
            );
        }
    }

    #[test]
    fn product_formula_agrees_with_ecf() {
        let mu = make_solomyak(LN_2, 0.7, YRule::Zero).unwrap();
        let samples = sample_batch(&mu, 200_000, 5, 1e-8, 1e-8).unwrap();
        let ts = log_grid(0.2, 20.0, 20);
        let exact = exact_ft_product_grid(&mu, &ts, 100_000, 6, 1e-8).unwrap();
        for e in exact {
            let emp = ecf(&samples, e.t).unwrap();
            let bar = 3.0 * (e.stat_err.powi(2) + emp.stat_err.powi(2)).sqrt() + e.trunc_err + emp.trunc_err;
            assert!((e.re - emp.re).abs() <= bar, "t={} {} vs {}", e.t, e.re, emp.re);
        }
    }

    #[test]
    fn product_formula_rejects_asymmetric_offsets() {
        let mu = StepMeasure::from_product(crate::step_measure::ProductForm {
            gamma: 1.0,
            mu_z: vec![(1.0, 0.7), (-1.0, 0.3)],
            mu_x: vec![(1.0, 0.5), (0.0, 0.5)],
            mu_y: vec![(0.0, 1.0)],
        })
        .unwrap();
        assert!(matches!(
            exact_ft_product(&mu, 1.0, 100, 1, 1e-6),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn certificate_examples() {
        let cert = certify_pisot(&"1,-3,1".parse::<IntPoly>().unwrap()).unwrap();
        let trivial = erdos_certificate(&cert, 1.0, 0.0, 2.5).unwrap();
        assert_eq!(trivial.c, 1.0);
        let c = erdos_certificate(&cert, 0.6, 0.2, 2.5).unwrap();
        assert!(c.c > 0.0 && c.c < 1.0);
        assert!(c.near_factors.iter().all(|&(_, lf)| lf.exp() >= 0.6 - 0.4 - 1e-15));
        let mut prev = 0.0;
        for q0 in [0.55, 0.6, 0.7, 0.8, 0.9] {
            let v = erdos_certificate(&cert, q0, (1.0 - q0) / 2.0, 2.5).unwrap().c;
            assert!(v >= prev);
            prev = v;
        }
        assert!(erdos_certificate(&cert, 0.5, 0.25, 2.5).is_err());
    }

    #[test]
    fn certificate_matches_frozen_oracle() {
        // independent 60-digit evaluation with β^k computed directly
        const C: f64 = 0.02501330539854937;
        const FLOOR: f64 = 9.895271488328314e-5;
        let cert = certify_pisot(&"1,-3,1".parse::<IntPoly>().unwrap()).unwrap();
        let c = erdos_certificate(&cert, 0.6, 0.2, 2.5).unwrap();
        assert_eq!(c.l, 2);
        assert!((c.c - C).abs() <= 1e-12 * C, "{}", c.c);
        assert!((c.floor - FLOOR).abs() <= 1e-11 * FLOOR, "{}", c.floor);
    }

    #[test]
    fn probe_sits_above_floor() {
        let cert = certify_pisot(&"1,-3,1".parse::<IntPoly>().unwrap()).unwrap();
        let mu = make_erdos(&cert, &[(1, 0.7), (-1, 0.3)], 0.6, 0.2, YRule::Zero).unwrap();
        let probe = singularity_probe(&mu, &cert, &[0, -1, -4, -8], 10_000, 3, 1e-6).unwrap();
        assert!(probe.above_floor);
        let l0 = probe.rows.iter().find(|r| r.l == 0).unwrap();
        assert!(l0.value > 0.0 && l0.value <= 1.0);
        assert!((l0.t - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn decay_fits() {
        let ts = log_grid(10.0, 1e4, 400);
        let exact = |f: &dyn Fn(f64) -> f64| -> Vec<FourierEvaluation> {
            ts.iter()
                .map(|&t| FourierEvaluation {
                    t,
                    re: f(t),
                    im: 0.0,
                    stat_err: 0.0,
                    trunc_err: 0.0,
                })
                .collect()
        };
        let one = decay_exponent_fit(&exact(&sinc2)).unwrap();
        assert!((one.slope + 1.0).abs() < 0.1 && one.resolved, "{one:?}");
        let lam = 2f64.powf(-1.0 / 3.0);
        let three = decay_exponent_fit(&exact(&|t: f64| (0..3).map(|j| sinc2(t * lam.powi(j))).product())).unwrap();
        assert!((three.slope + 3.0).abs() < 0.3 && three.resolved, "{three:?}");
        let flat = decay_exponent_fit(&exact(&|_| 0.3)).unwrap();
        assert!(!flat.resolved);
    }

    fn uniform_samples(n: usize, seed: u64) -> EmpiricalMeasure {
        let mut rng = rng::stream(seed, rng::salt::SYNTHETIC, 0);
        EmpiricalMeasure::from_samples((0..n).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    fn cantor_samples(n: usize, seed: u64) -> EmpiricalMeasure {
        biased_cantor_samples(n, 0.5, seed)
    }

    /// Middle-thirds Cantor measure with weight `p` on the right branch.
    fn biased_cantor_samples(n: usize, p: f64, seed: u64) -> EmpiricalMeasure {
        let mut rng = rng::stream(seed, rng::salt::SYNTHETIC, 1);
        let xs = (0..n)
            .map(|_| {
                let mut x = 0.0;
                let mut scale = 1.0;
                for _ in 0..40 {
                    scale /= 3.0;
                    if rng.random::<f64>() < p {
                        x += 2.0 * scale;
                    }
                }
                x
            })
            .collect();
        EmpiricalMeasure::from_samples(xs).unwrap()
    }

    #[test]
    fn dimension_of_synthetic_laws() {
        let u = local_dimension(&uniform_samples(100_000, 1), None, 500, 2).unwrap();
        assert!(
            (u.local - 1.0).abs() < 0.05 && (u.correlation - 1.0).abs() < 0.05,
            "{u:?}"
        );
        let c = local_dimension(&cantor_samples(100_000, 3), None, 500, 4).unwrap();
        let target = 2f64.ln() / 3f64.ln();
        assert!(
            (c.local - target).abs() < 0.05 && (c.correlation - target).abs() < 0.05,
            "{c:?}"
        );
        let point = EmpiricalMeasure::from_samples(vec![1.5; 20_000]).unwrap();
        assert_eq!(local_dimension(&point, None, 10, 1).unwrap().local, 0.0);
        assert!(matches!(
            local_dimension(&uniform_samples(100, 1), None, 10, 1),
            Err(Error::InsufficientSamples(_))
        ));
    }

    #[test]
    fn estimators_separate_information_and_correlation_dimension() {
        // D1 = H(0.7, 0.3)/ln 3, D2 = -ln(0.7² + 0.3²)/ln 3
        let d1 = -(0.7 * 0.7f64.ln() + 0.3 * 0.3f64.ln()) / 3f64.ln();
        let d2 = -(0.58f64).ln() / 3f64.ln();
        let e = local_dimension(&biased_cantor_samples(200_000, 0.3, 5), None, 1000, 6).unwrap();
        assert!((e.local - d1).abs() < 0.03, "{} vs {d1}", e.local);
        assert!((e.correlation - d2).abs() < 0.03, "{} vs {d2}", e.correlation);
    }

    #[test]
    fn atom_examples() {
        let zeros = EmpiricalMeasure::from_samples(vec![0.0; 100]).unwrap();
        assert_eq!(atom_diagnostic(&zeros, None).max_fraction, 1.0);
        let u = uniform_samples(1_000_000, 9);
        let r = atom_diagnostic(&u, Some(1e-5));
        assert!(r.max_fraction < 40.0 / 1e6, "{r:?}");
    }
}
