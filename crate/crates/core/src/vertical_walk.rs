//! The projected vertical walk `S_n` on `γℤ`: Lundberg exponent, return
//! probability, occupation counts and the truncation policy built on them.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Per-path cap on walk length in occupation and return sampling.
pub const MAX_PATH_STEPS: usize = 100_000_000;

/// Integer-level step law of the vertical walk; level `k` means `z = kγ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerticalLaw {
    pub gamma: f64,
    pub steps: Vec<(i64, f64)>,
}

impl VerticalLaw {
    pub fn new(gamma: f64, steps: Vec<(i64, f64)>) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Validation(format!("gamma must be positive, got {gamma}")));
        }
        if steps.is_empty() {
            return Err(Error::Validation("vertical law has no atoms".into()));
        }
        if steps.iter().any(|&(_, w)| !(w > 0.0 && w.is_finite())) {
            return Err(Error::Validation("vertical weights must be positive".into()));
        }
        let total: f64 = steps.iter().map(|s| s.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("vertical weights sum to {total}")));
        }
        let mut sorted = steps;
        sorted.sort_by_key(|s| s.0);
        let mut merged: Vec<(i64, f64)> = Vec::with_capacity(sorted.len());
        for (k, w) in sorted {
            match merged.last_mut() {
                Some(last) if last.0 == k => last.1 += w / total,
                _ => merged.push((k, w / total)),
            }
        }
        Ok(Self { gamma, steps: merged })
    }

    /// `pδ_{+1} + (1−p)δ_{−1}`.
    pub fn two_atom(gamma: f64, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Validation(format!("p must lie in (0,1), got {p}")));
        }
        Self::new(gamma, vec![(1, p), (-1, 1.0 - p)])
    }

    /// Mean step in level units.
    pub fn level_drift(&self) -> f64 {
        self.steps.iter().map(|&(k, w)| k as f64 * w).sum()
    }

    /// Mean step in real units, `α = γ·E[level]`.
    pub fn drift(&self) -> f64 {
        self.gamma * self.level_drift()
    }

    /// The law of `−S_n`.
    pub fn mirrored(&self) -> Self {
        let mut steps: Vec<_> = self.steps.iter().map(|&(k, w)| (-k, w)).collect();
        steps.sort_by_key(|s| s.0);
        Self {
            gamma: self.gamma,
            steps,
        }
    }

    /// Step levels as real `z` values.
    pub fn real_atoms(&self) -> Vec<(f64, f64)> {
        self.steps.iter().map(|&(k, w)| (k as f64 * self.gamma, w)).collect()
    }

    /// Lundberg exponent in level units (`θ*·γ`); `+∞` without downward steps.
    pub fn level_lundberg(&self) -> Result<f64> {
        let atoms: Vec<(f64, f64)> = self.steps.iter().map(|&(k, w)| (k as f64, w)).collect();
        lundberg_exponent(&atoms)
    }

    /// `p` if the law is exactly `pδ_{+1} + (1−p)δ_{−1}`.
    pub fn as_two_atom(&self) -> Option<f64> {
        match self.steps.as_slice() {
            [(-1, q), (1, p)] if (p + q - 1.0).abs() < 1e-12 => Some(*p),
            _ => None,
        }
    }

    pub(crate) fn sampler(&self) -> LevelSampler {
        LevelSampler::new(self)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LevelSampler {
    levels: Vec<i64>,
    index: WeightedIndex<f64>,
}

impl LevelSampler {
    fn new(law: &VerticalLaw) -> Self {
        Self {
            levels: law.steps.iter().map(|s| s.0).collect(),
            index: WeightedIndex::new(law.steps.iter().map(|s| s.1)).expect("validated weights"),
        }
    }

    #[inline]
    pub(crate) fn sample(&self, rng: &mut Rng) -> i64 {
        self.levels[self.index.sample(rng)]
    }
}

fn mgf(atoms: &[(f64, f64)], theta: f64) -> f64 {
    atoms.iter().map(|&(z, w)| w * (-theta * z).exp()).sum()
}

fn mgf_slope(atoms: &[(f64, f64)], theta: f64) -> f64 {
    atoms.iter().map(|&(z, w)| -z * w * (-theta * z).exp()).sum()
}

/// The positive root `θ*` of `Σ w e^{−θz} = 1`.
///
/// Returns `+∞` when no atom is negative. Fails with a zero-drift error when
/// the mean is not positive.
pub fn lundberg_exponent(atoms: &[(f64, f64)]) -> Result<f64> {
    let alpha: f64 = atoms.iter().map(|&(z, w)| z * w).sum();
    if !(alpha > 0.0) {
        return Err(Error::ZeroDrift(format!(
            "Lundberg exponent needs positive drift, got {alpha}"
        )));
    }
    if !atoms.iter().any(|&(z, w)| z < 0.0 && w > 0.0) {
        return Ok(f64::INFINITY);
    }
    let mut hi = 1.0;
    while mgf(atoms, hi) <= 1.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NumericRange("Lundberg bracket diverged".into()));
        }
    }
    // φ is convex with φ'(0) = −α < 0; its minimiser separates 0 from the root.
    let (mut a, mut b) = (0.0, hi);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if mgf_slope(atoms, m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a <= 1e-15 * b.max(1.0) {
            break;
        }
    }
    let (mut lo, mut hi) = (0.5 * (a + b), hi);
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if mgf(atoms, m) < 1.0 {
            lo = m;
        } else {
            hi = m;
        }
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Path-level stopping rule: a path is stopped once it climbs `margin_levels`
/// above the highest level of interest, so that later visits occur with
/// probability at most `delta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub delta: f64,
    pub margin_levels: i64,
}

impl TruncationPolicy {
    /// Margin `⌈ln(1/δ)/θ*⌉` levels; zero when the walk never steps down.
    pub fn for_law(law: &VerticalLaw, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Validation(format!("delta must lie in (0,1), got {delta}")));
        }
        let theta = law.level_lundberg()?;
        let margin_levels = if theta.is_infinite() {
            0
        } else {
            ((1.0 / delta).ln() / theta).ceil() as i64
        };
        Ok(Self { delta, margin_levels })
    }
}

/// Vertical walk summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerticalWalkStats {
    pub alpha: f64,
    /// `None` when the walk never steps against its drift.
    pub theta_star: Option<f64>,
    pub p_ret: f64,
    #[serde(rename = "M")]
    pub m: f64,
    /// Standard error of `p_ret`; zero for closed forms.
    pub p_ret_stderr: f64,
    /// Upper bound on the truncation bias of `p_ret`.
    pub truncation_bias: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum ReturnMethod {
    Exact2Atom,
    MonteCarlo { paths: usize, seed: u64, delta: f64 },
}

/// Return probability to level 0 and the expected occupation `M = 1/(1−p_ret)`.
pub fn return_probability(law: &VerticalLaw, method: ReturnMethod) -> Result<VerticalWalkStats> {
    let alpha = law.drift();
    if alpha == 0.0 {
        return Err(Error::ZeroDrift("return probability needs nonzero drift".into()));
    }
    let oriented = if alpha > 0.0 { law.clone() } else { law.mirrored() };
    let theta = oriented.level_lundberg()?;
    let theta_star = theta.is_finite().then(|| theta / law.gamma);
    match method {
        ReturnMethod::Exact2Atom => {
            let p = law
                .as_two_atom()
                .ok_or_else(|| Error::MethodMismatch("exact return probability needs a ±1 two-atom law".into()))?;
            let p_ret = 1.0 - (2.0 * p - 1.0).abs();
            Ok(VerticalWalkStats {
                alpha,
                theta_star,
                p_ret,
                m: 1.0 / (1.0 - p_ret),
                p_ret_stderr: 0.0,
                truncation_bias: 0.0,
            })
        }
        ReturnMethod::MonteCarlo { paths, seed, delta } => {
            if paths == 0 {
                return Err(Error::Validation("need at least one path".into()));
            }
            let policy = TruncationPolicy::for_law(&oriented, delta)?;
            let ceiling = policy.margin_levels.max(1);
            let sampler = oriented.sampler();
            let chunks = rng::par_chunked(paths, seed, rng::salt::RETURN, |rng, _, len| {
                let mut returns = 0u64;
                for _ in 0..len {
                    let mut s = 0i64;
                    for _ in 0..MAX_PATH_STEPS {
                        s += sampler.sample(rng);
                        if s == 0 {
                            returns += 1;
                            break;
                        }
                        if s >= ceiling {
                            break;
                        }
                    }
                }
                returns
            });
            let returns: u64 = chunks.iter().sum();
            let p_ret = returns as f64 / paths as f64;
            let p_ret_stderr = (p_ret * (1.0 - p_ret) / paths as f64).sqrt();
            Ok(VerticalWalkStats {
                alpha,
                theta_star,
                p_ret,
                m: 1.0 / (1.0 - p_ret),
                p_ret_stderr,
                truncation_bias: if theta.is_finite() { delta } else { 0.0 },
            })
        }
    }
}

/// Occupation counts `n(ζ,k) = #{j ≥ 1 : S_{j−1} = k}` of one path.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OccupationProfile {
    /// Lowest level visited.
    pub min_level: i64,
    /// `counts[i]` is the count at level `min_level + i`, up to the requested maximum level.
    pub counts: Vec<u32>,
    /// The path hit [`MAX_PATH_STEPS`] before the stopping rule fired.
    pub capped: bool,
}

impl OccupationProfile {
    pub fn get(&self, level: i64) -> u32 {
        if level < self.min_level {
            return 0;
        }
        self.counts.get((level - self.min_level) as usize).copied().unwrap_or(0)
    }

    pub fn max_level(&self) -> i64 {
        self.min_level + self.counts.len() as i64 - 1
    }

    /// `(level, count)` pairs with nonzero count.
    pub fn iter(&self) -> impl Iterator<Item = (i64, u32)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(move |(i, &c)| (self.min_level + i as i64, c))
    }
}

/// Samples one path from level 0 and records occupation counts for levels up to
/// `max_level`. The walk stops once it exceeds `max_level + margin`.
pub(crate) fn occupation_with(
    sampler: &LevelSampler,
    rng: &mut Rng,
    max_level: i64,
    policy: &TruncationPolicy,
    scratch: &mut Vec<u32>,
) -> OccupationProfile {
    // Counts are kept relative to an offset that grows when the path dips lower.
    let stop = max_level + policy.margin_levels;
    let mut offset: i64 = 0;
    scratch.clear();
    let width = (max_level.max(0) + 1) as usize;
    scratch.resize(width, 0);
    let mut s: i64 = 0;
    let mut capped = true;
    for _ in 0..MAX_PATH_STEPS {
        if s <= max_level {
            if s < offset {
                let grow = (offset - s) as usize;
                scratch.splice(0..0, std::iter::repeat_n(0, grow));
                offset = s;
            }
            scratch[(s - offset) as usize] += 1;
        }
        if s > stop {
            capped = false;
            break;
        }
        s += sampler.sample(rng);
    }
    let mut counts = scratch.clone();
    let mut min_level = offset;
    let lead = counts.iter().take_while(|&&c| c == 0).count();
    if lead == counts.len() {
        return OccupationProfile {
            min_level: 0,
            counts: Vec::new(),
            capped,
        };
    }
    counts.drain(..lead);
    min_level += lead as i64;
    OccupationProfile {
        min_level,
        counts,
        capped,
    }
}

/// One sampled occupation profile of a walk with positive drift.
pub fn occupation_counts(
    law: &VerticalLaw,
    rng: &mut Rng,
    max_level: i64,
    policy: &TruncationPolicy,
) -> Result<OccupationProfile> {
    if !(law.drift() > 0.0) {
        return Err(Error::ZeroDrift("occupation counts need positive drift".into()));
    }
    let mut scratch = Vec::new();
    Ok(occupation_with(&law.sampler(), rng, max_level, policy, &mut scratch))
}

/// Monte Carlo mean of `n(ζ,k)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationMean {
    pub level: i64,
    pub mean: f64,
    pub stderr: f64,
}

/// Mean occupation counts for `levels` over `paths` independent paths.
pub fn mean_occupation(
    law: &VerticalLaw,
    levels: std::ops::RangeInclusive<i64>,
    paths: usize,
    seed: u64,
    delta: f64,
) -> Result<Vec<OccupationMean>> {
    if !(law.drift() > 0.0) {
        return Err(Error::ZeroDrift("occupation counts need positive drift".into()));
    }
    if paths < 2 {
        return Err(Error::Validation("need at least two paths".into()));
    }
    let policy = TruncationPolicy::for_law(law, delta)?;
    let (lo, hi) = (*levels.start(), *levels.end());
    let width = (hi - lo + 1).max(0) as usize;
    let sampler = law.sampler();
    let chunks = rng::par_chunked(paths, seed, rng::salt::VERTICAL, |rng, _, len| {
        let mut sums = vec![0f64; width];
        let mut squares = vec![0f64; width];
        let mut scratch = Vec::new();
        for _ in 0..len {
            let profile = occupation_with(&sampler, rng, hi, &policy, &mut scratch);
            for (i, level) in (lo..=hi).enumerate() {
                let c = profile.get(level) as f64;
                sums[i] += c;
                squares[i] += c * c;
            }
        }
        (sums, squares)
    });
    let n = paths as f64;
    Ok((lo..=hi)
        .enumerate()
        .map(|(i, level)| {
            let sum: f64 = chunks.iter().map(|c| c.0[i]).sum();
            let sq: f64 = chunks.iter().map(|c| c.1[i]).sum();
            let mean = sum / n;
            let var = ((sq - n * mean * mean) / (n - 1.0)).max(0.0);
            OccupationMean {
                level,
                mean,
                stderr: (var / n).sqrt(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_atom(p: f64) -> VerticalLaw {
        VerticalLaw::two_atom(1.0, p).unwrap()
    }

    #[test]
    fn lundberg_two_atom_closed_form() {
        let theta = lundberg_exponent(&[(1.0, 0.7), (-1.0, 0.3)]).unwrap();
        assert!((theta - (7.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((theta - 0.847298).abs() < 1e-6);
    }

    #[test]
    fn lundberg_sentinel_and_errors() {
        assert_eq!(lundberg_exponent(&[(0.7, 1.0)]).unwrap(), f64::INFINITY);
        assert!(matches!(
            lundberg_exponent(&[(1.0, 0.5), (-1.0, 0.5)]),
            Err(Error::ZeroDrift(_))
        ));
        assert!(lundberg_exponent(&[(1.0, 0.3), (-1.0, 0.7)]).is_err());
    }

    #[test]
    fn lundberg_vanishes_near_zero_drift() {
        let mut prev = f64::INFINITY;
        for p in [0.7, 0.6, 0.55, 0.51, 0.501] {
            let theta = lundberg_exponent(&[(1.0, p), (-1.0, 1.0 - p)]).unwrap();
            assert!(theta < prev);
            prev = theta;
        }
        assert!(prev < 0.005);
    }

    #[test]
    fn exact_return_probability() {
        let stats = return_probability(&two_atom(0.7), ReturnMethod::Exact2Atom).unwrap();
        assert!((stats.p_ret - 0.6).abs() < 1e-12);
        assert!((stats.m - 2.5).abs() < 1e-12);
        assert!((stats.m - 1.0 / (1.0 - stats.p_ret)).abs() < 1e-9);
        let near_one = return_probability(&two_atom(0.999), ReturnMethod::Exact2Atom).unwrap();
        assert!(near_one.p_ret < 0.01 && near_one.m < 1.01);
        let negative = return_probability(&two_atom(0.3), ReturnMethod::Exact2Atom).unwrap();
        assert!((negative.p_ret - 0.6).abs() < 1e-12 && negative.alpha < 0.0);
    }

    #[test]
    fn method_mismatch() {
        let law = VerticalLaw::new(1.0, vec![(2, 0.5), (-1, 0.5)]).unwrap();
        assert!(matches!(
            return_probability(&law, ReturnMethod::Exact2Atom),
            Err(Error::MethodMismatch(_))
        ));
    }

    #[test]
    fn monte_carlo_matches_exact() {
        let mc = return_probability(
            &two_atom(0.7),
            ReturnMethod::MonteCarlo {
                paths: 200_000,
                seed: 3,
                delta: 1e-8,
            },
        )
        .unwrap();
        assert!((mc.p_ret - 0.6).abs() < 3.0 * mc.p_ret_stderr + 1e-8, "{mc:?}");
    }

    #[test]
    fn deterministic_ascent_occupation() {
        let law = VerticalLaw::new(0.5, vec![(1, 1.0)]).unwrap();
        let policy = TruncationPolicy::for_law(&law, 1e-6).unwrap();
        assert_eq!(policy.margin_levels, 0);
        let mut rng = rng::stream(1, 0, 0);
        let profile = occupation_counts(&law, &mut rng, 10, &policy).unwrap();
        assert_eq!(profile.min_level, 0);
        assert!((0..=10).all(|k| profile.get(k) == 1));
        assert_eq!(profile.get(-1), 0);
        assert_eq!(profile.get(11), 0);
    }

    #[test]
    fn mean_occupation_near_m() {
        let means = mean_occupation(&two_atom(0.7), -3..=5, 100_000, 11, 1e-8).unwrap();
        for m in &means {
            if m.level >= 0 {
                assert!((m.mean - 2.5).abs() < 4.0 * m.stderr, "{m:?}");
            } else {
                assert!(m.mean < 2.5 + 4.0 * m.stderr, "{m:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn lundberg_root_solves_equation(p in 0.52f64..0.98, up in 1i64..4, down in 1i64..4) {
            let atoms = [(up as f64, p), (-(down as f64), 1.0 - p)];
            prop_assume!(atoms[0].0 * p + atoms[1].0 * (1.0 - p) > 0.05);
            let theta = lundberg_exponent(&atoms).unwrap();
            prop_assert!(theta > 0.0);
            prop_assert!((mgf(&atoms, theta) - 1.0).abs() < 1e-10);
        }

        #[test]
        fn paths_cross_every_level(seed in any::<u64>()) {
            let law = two_atom(0.8);
            let policy = TruncationPolicy::for_law(&law, 1e-9).unwrap();
            let mut rng = rng::stream(seed, 0, 0);
            let profile = occupation_counts(&law, &mut rng, 20, &policy).unwrap();
            prop_assert!((0..=20).all(|k| profile.get(k) >= 1));
        }
    }
}
