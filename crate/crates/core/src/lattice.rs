//! Cocompact lattices `Γ_T = Z ⋉_T Z²` in Sol for hyperbolic `T ∈ SL(2, Z)`.
//!
//! Elements `(r, p, q)` multiply exactly as `(r, v)(r', v') = (r + r', v + T^r v')`.
//! The embedding `ψ(r, p, q) = (rγ, B(p, q))` uses the eigenbasis of `T`.
//! Measures on the lattice can be convolved exactly, which gives the entropy
//! sequence `H(μ^{*k})`.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, DefaultHasher};

use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sol_group::SolElement;

/// Default cap on the number of atoms of a convolution power.
pub const DEFAULT_ATOM_BUDGET: usize = 10_000_000;

/// Integer 2×2 matrix as given by the user.
pub type Mat2 = [[i64; 2]; 2];
type Wide = [[i128; 2]; 2];
type DetMap<K, V> = HashMap<K, V, BuildHasherDefault<DefaultHasher>>;

/// `(r, p, q)` in `Γ_T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct LatticeElement {
    pub r: i64,
    pub p: i128,
    pub q: i128,
}

impl LatticeElement {
    pub const IDENTITY: LatticeElement = LatticeElement { r: 0, p: 0, q: 0 };

    pub const fn new(r: i64, p: i128, q: i128) -> Self {
        LatticeElement { r, p, q }
    }
}

fn overflow() -> Error {
    Error::NumericRange("lattice coordinate exceeds 128-bit range".into())
}

fn mat_mul(a: &Wide, b: &Wide) -> Result<Wide> {
    let mut out = [[0i128; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let s = a[i][0]
                .checked_mul(b[0][j])
                .zip(a[i][1].checked_mul(b[1][j]))
                .and_then(|(u, v)| u.checked_add(v))
                .ok_or_else(overflow)?;
            out[i][j] = s;
        }
    }
    Ok(out)
}

fn mat_vec(m: &Wide, p: i128, q: i128) -> Result<(i128, i128)> {
    let row = |i: usize| {
        m[i][0]
            .checked_mul(p)
            .zip(m[i][1].checked_mul(q))
            .and_then(|(u, v)| u.checked_add(v))
            .ok_or_else(overflow)
    };
    Ok((row(0)?, row(1)?))
}

#[derive(Deserialize)]
struct LatticeSpecJson {
    #[serde(rename = "T")]
    t: Mat2,
}

/// The matrix `T` together with its derived eigendata.
///
/// Only `T` is serialized; `gamma` and `B` are recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatticeSpecJson")]
pub struct LatticeSpec {
    #[serde(rename = "T")]
    t: Mat2,
    #[serde(skip)]
    t_wide: Wide,
    #[serde(skip)]
    t_inv: Wide,
    #[serde(skip)]
    gamma: f64,
    #[serde(skip)]
    basis: [[f64; 2]; 2],
}

impl TryFrom<LatticeSpecJson> for LatticeSpec {
    type Error = Error;

    fn try_from(value: LatticeSpecJson) -> Result<Self> {
        LatticeSpec::new(value.t)
    }
}

/// Left eigenvector of `t` for eigenvalue `lambda`, unit norm, first nonzero entry positive.
fn left_eigenvector(t: &Mat2, lambda: f64) -> [f64; 2] {
    let [[a, b], [c, d]] = t.map(|row| row.map(|v| v as f64));
    // v (T - λ) = 0: v1 (a - λ) + v2 c = 0 and v1 b + v2 (d - λ) = 0
    let cand1 = [c, lambda - a];
    let cand2 = [lambda - d, b];
    let n1 = cand1[0].hypot(cand1[1]);
    let n2 = cand2[0].hypot(cand2[1]);
    let (v, n) = if n1 >= n2 { (cand1, n1) } else { (cand2, n2) };
    let mut v = [v[0] / n, v[1] / n];
    let first = if v[0] != 0.0 { v[0] } else { v[1] };
    if first < 0.0 {
        v = [-v[0], -v[1]];
    }
    v
}

impl LatticeSpec {
    /// Validates `det T = 1`, `tr T > 2` and derives `γ` and `B`.
    pub fn new(t: Mat2) -> Result<Self> {
        let [[a, b], [c, d]] = t;
        let det = a as i128 * d as i128 - b as i128 * c as i128;
        if det != 1 {
            return Err(Error::Validation(format!("det T = {det}, expected 1")));
        }
        let tr = a as i128 + d as i128;
        if tr <= 2 {
            return Err(Error::Validation(format!("trace T = {tr}, expected > 2")));
        }
        let trf = tr as f64;
        let disc = (trf * trf - 4.0).sqrt();
        let big = (trf + disc) / 2.0;
        // product of the roots is 1; avoid cancellation for the small one
        let small = 1.0 / big;
        let gamma = big.ln();
        let basis = [left_eigenvector(&t, small), left_eigenvector(&t, big)];
        Ok(LatticeSpec {
            t,
            t_wide: t.map(|row| row.map(i128::from)),
            t_inv: [[d, -b], [-c, a]].map(|row| row.map(i128::from)),
            gamma,
            basis,
        })
    }

    pub fn matrix(&self) -> Mat2 {
        self.t
    }

    /// `γ = log` of the larger eigenvalue of `T`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn trace(&self) -> i64 {
        self.t[0][0] + self.t[1][1]
    }

    /// Rows are the left eigenvectors for `e^{-γ}` and `e^{γ}`.
    pub fn basis(&self) -> [[f64; 2]; 2] {
        self.basis
    }

    /// Exact `T^r`; negative powers use the adjugate since `det T = 1`.
    pub fn matrix_power(&self, r: i64) -> Result<[[i128; 2]; 2]> {
        let mut base = if r >= 0 { self.t_wide } else { self.t_inv };
        let mut e = r.unsigned_abs();
        let mut acc: Wide = [[1, 0], [0, 1]];
        while e > 0 {
            if e & 1 == 1 {
                acc = mat_mul(&acc, &base)?;
            }
            e >>= 1;
            if e > 0 {
                base = mat_mul(&base, &base)?;
            }
        }
        Ok(acc)
    }

    /// `a · b = (a.r + b.r, (a.p, a.q) + T^{a.r} (b.p, b.q))`.
    pub fn multiply(&self, a: &LatticeElement, b: &LatticeElement) -> Result<LatticeElement> {
        let m = self.matrix_power(a.r)?;
        self.multiply_with(&m, a, b)
    }

    fn multiply_with(&self, t_pow_ar: &Wide, a: &LatticeElement, b: &LatticeElement) -> Result<LatticeElement> {
        let (bp, bq) = mat_vec(t_pow_ar, b.p, b.q)?;
        Ok(LatticeElement {
            r: a.r.checked_add(b.r).ok_or_else(overflow)?,
            p: a.p.checked_add(bp).ok_or_else(overflow)?,
            q: a.q.checked_add(bq).ok_or_else(overflow)?,
        })
    }

    /// `(r, v)^{-1} = (-r, -T^{-r} v)`.
    pub fn inverse(&self, a: &LatticeElement) -> Result<LatticeElement> {
        let m = self.matrix_power(-a.r)?;
        let (p, q) = mat_vec(&m, a.p, a.q)?;
        Ok(LatticeElement::new(-a.r, -p, -q))
    }

    /// `a^n` for `n ≥ 0` by repeated squaring.
    pub fn power(&self, a: &LatticeElement, n: u64) -> Result<LatticeElement> {
        let mut acc = LatticeElement::IDENTITY;
        let mut base = *a;
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.multiply(&acc, &base)?;
            }
            e >>= 1;
            if e > 0 {
                base = self.multiply(&base, &base)?;
            }
        }
        Ok(acc)
    }

    /// `ψ(r, p, q) = (rγ, B(p, q))`.
    pub fn embed(&self, a: &LatticeElement) -> SolElement {
        let (p, q) = (a.p as f64, a.q as f64);
        let b = &self.basis;
        SolElement {
            z: a.r as f64 * self.gamma,
            x: b[0][0] * p + b[0][1] * q,
            y: b[1][0] * p + b[1][1] * q,
        }
    }
}

/// Finitely supported probability measure on `Γ_T`, atoms sorted by element.
/// Finite support makes the Shannon entropy finite automatically.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeMeasure {
    atoms: Vec<(LatticeElement, f64)>,
}

impl LatticeMeasure {
    /// Merges repeated elements and checks positivity and normalization.
    pub fn new(atoms: impl IntoIterator<Item = (LatticeElement, f64)>) -> Result<Self> {
        let mut merged: Vec<(LatticeElement, f64)> = Vec::new();
        let mut items: Vec<_> = atoms.into_iter().collect();
        items.sort_by_key(|a| a.0);
        for (g, w) in items {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Validation(format!("weight {w} of {g:?} is not positive")));
            }
            match merged.last_mut() {
                Some((h, acc)) if *h == g => *acc += w,
                _ => merged.push((g, w)),
            }
        }
        if merged.is_empty() {
            return Err(Error::Validation("measure has no atoms".into()));
        }
        let total: f64 = merged.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("weights sum to {total}, expected 1")));
        }
        Ok(LatticeMeasure { atoms: merged })
    }

    /// Uniform measure on the given elements (duplicates add up).
    pub fn uniform(elements: &[LatticeElement]) -> Result<Self> {
        let w = 1.0 / elements.len() as f64;
        Self::new(elements.iter().map(|g| (*g, w)))
    }

    pub fn dirac(g: LatticeElement) -> Self {
        LatticeMeasure { atoms: vec![(g, 1.0)] }
    }

    fn from_sorted_unchecked(atoms: Vec<(LatticeElement, f64)>) -> Self {
        LatticeMeasure { atoms }
    }

    pub fn atoms(&self) -> &[(LatticeElement, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|(_, w)| w).sum()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        shannon(self.atoms.iter().map(|(_, w)| *w))
    }

    /// Mean vertical displacement `Σ w r γ`.
    pub fn drift(&self, spec: &LatticeSpec) -> f64 {
        self.atoms.iter().map(|(g, w)| w * g.r as f64).sum::<f64>() * spec.gamma()
    }

    pub fn weight_of(&self, g: &LatticeElement) -> f64 {
        self.atoms
            .binary_search_by(|(h, _)| h.cmp(g))
            .map(|i| self.atoms[i].1)
            .unwrap_or(0.0)
    }

    /// `½ self + ½ other`.
    pub fn half_mixture(&self, other: &LatticeMeasure) -> LatticeMeasure {
        let atoms = self.atoms.iter().chain(other.atoms.iter()).map(|(g, w)| (*g, 0.5 * w));
        // inputs are already valid measures
        LatticeMeasure::new(atoms).expect("mixture of probability measures")
    }
}

pub(crate) fn shannon(weights: impl Iterator<Item = f64>) -> f64 {
    -weights.filter(|w| *w > 0.0).map(|w| w * w.ln()).sum::<f64>()
}

/// Number of independent accumulation chunks per convolution step. Fixed so
/// that the floating point summation order does not depend on thread count.
const CONV_CHUNKS: usize = 64;

/// `prev * step`: distribution of `g h` with `g ~ prev`, `h ~ step`.
fn convolve(spec: &LatticeSpec, prev: &LatticeMeasure, step: &LatticeMeasure) -> Result<LatticeMeasure> {
    let chunk_len = prev.atoms.len().div_ceil(CONV_CHUNKS).max(1);
    let partials: Vec<Result<DetMap<LatticeElement, f64>>> = prev
        .atoms
        .par_chunks(chunk_len)
        .map(|chunk| {
            let mut map = DetMap::default();
            for (g, wg) in chunk {
                let m = spec.matrix_power(g.r)?;
                for (h, wh) in &step.atoms {
                    let gh = spec.multiply_with(&m, g, h)?;
                    *map.entry(gh).or_insert(0.0) += wg * wh;
                }
            }
            Ok(map)
        })
        .collect();
    let mut total: DetMap<LatticeElement, f64> = DetMap::default();
    for part in partials {
        let part = part?;
        let mut entries: Vec<_> = part.into_iter().collect();
        entries.sort_unstable_by_key(|a| a.0);
        for (g, w) in entries {
            *total.entry(g).or_insert(0.0) += w;
        }
    }
    let mut atoms: Vec<_> = total.into_iter().collect();
    atoms.sort_unstable_by_key(|a| a.0);
    // renormalization guard against drift in the summed weight
    let sum: f64 = atoms.iter().map(|(_, w)| w).sum();
    if (sum - 1.0).abs() > 1e-12 {
        for (_, w) in atoms.iter_mut() {
            *w /= sum;
        }
    }
    Ok(LatticeMeasure::from_sorted_unchecked(atoms))
}

/// `μ^{*k}`, failing once the atom count exceeds `budget`.
pub fn convolution_power(spec: &LatticeSpec, mu: &LatticeMeasure, k: usize, budget: usize) -> Result<LatticeMeasure> {
    if k == 0 {
        return Err(Error::Validation("convolution power needs k >= 1".into()));
    }
    let mut acc = mu.clone();
    for j in 2..=k {
        acc = convolve(spec, &acc, mu)?;
        if acc.len() > budget {
            return Err(Error::BudgetExceeded {
                budget,
                reached_k: j - 1,
            });
        }
    }
    Ok(acc)
}

/// Exact rational convolution power, for small `k`.
pub fn convolution_power_exact(
    spec: &LatticeSpec,
    mu: &[(LatticeElement, BigRational)],
    k: usize,
    budget: usize,
) -> Result<Vec<(LatticeElement, BigRational)>> {
    if k == 0 {
        return Err(Error::Validation("convolution power needs k >= 1".into()));
    }
    let total = mu.iter().fold(BigRational::zero(), |acc, (_, w)| acc + w);
    if !total.is_one() {
        return Err(Error::Validation("rational weights must sum to exactly 1".into()));
    }
    let mut acc: Vec<(LatticeElement, BigRational)> = mu.to_vec();
    for j in 2..=k {
        let mut map: DetMap<LatticeElement, BigRational> = DetMap::default();
        for (g, wg) in &acc {
            let m = spec.matrix_power(g.r)?;
            for (h, wh) in mu {
                let gh = spec.multiply_with(&m, g, h)?;
                *map.entry(gh).or_insert_with(BigRational::zero) += wg * wh;
            }
        }
        if map.len() > budget {
            return Err(Error::BudgetExceeded {
                budget,
                reached_k: j - 1,
            });
        }
        acc = map.into_iter().collect();
        acc.sort_by_key(|a| a.0);
    }
    Ok(acc)
}

/// Shannon entropy of a rational measure, evaluated in double precision.
pub fn entropy_exact(atoms: &[(LatticeElement, BigRational)]) -> f64 {
    shannon(atoms.iter().map(|(_, w)| w.to_f64().unwrap_or(0.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEntry {
    pub k: usize,
    /// `H(μ^{*k})`
    pub entropy: f64,
    /// `H(μ^{*k}) / k`
    pub rate: f64,
    pub atoms: usize,
}

/// Entropy of successive convolution powers; `budget_exceeded_at` is set
/// when the sequence stopped early (atom budget or coordinate range) and
/// holds the last `k` that fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropySequence {
    pub entries: Vec<EntropyEntry>,
    pub budget_exceeded_at: Option<usize>,
}

impl EntropySequence {
    /// `min_k H(μ^{*k}) / k` over the computed prefix.
    pub fn best_rate(&self) -> f64 {
        self.entries.iter().map(|e| e.rate).fold(f64::INFINITY, f64::min)
    }
}

pub fn entropy_sequence(
    spec: &LatticeSpec,
    mu: &LatticeMeasure,
    kmax: usize,
    budget: usize,
) -> Result<EntropySequence> {
    if kmax == 0 {
        return Err(Error::Validation("kmax must be >= 1".into()));
    }
    let mut entries = Vec::with_capacity(kmax);
    let mut acc = mu.clone();
    for k in 1..=kmax {
        if k > 1 {
            match convolve(spec, &acc, mu) {
                Ok(next) if next.len() <= budget => acc = next,
                Ok(_) | Err(Error::NumericRange(_)) => {
                    return Ok(EntropySequence {
                        entries,
                        budget_exceeded_at: Some(k - 1),
                    });
                }
                Err(e) => return Err(e),
            }
        }
        let h = acc.entropy();
        entries.push(EntropyEntry {
            k,
            entropy: h,
            rate: h / k as f64,
            atoms: acc.len(),
        });
    }
    Ok(EntropySequence {
        entries,
        budget_exceeded_at: None,
    })
}
