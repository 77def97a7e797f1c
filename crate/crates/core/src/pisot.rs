//! Pisot numbers: certification from an integer polynomial, exact power sums
//! and the constants `(θ, L)` controlling `|cos(2π β^k) - 1| ≤ θ^{|k|}`.
//!
//! Powers `α^k` are evaluated in binary fixed point on big integers so that
//! the residual `α^k - s_k` stays resolved far beyond double precision.

use std::str::FromStr;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fractional bits of the fixed-point representation of `α`.
const FRAC_BITS: u32 = 768;

/// Largest `|k|` for which powers are evaluated in extended precision.
pub const MAX_PRECISE_POWER: u32 = 120;

/// Exponents up to which the cosine inequality is checked numerically.
const CHECK_RANGE: u32 = 60;

/// Separation from the unit circle required of the conjugates and of `α`.
const CIRCLE_MARGIN: f64 = 1e-9;

/// Monic integer polynomial, coefficients highest degree first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntPoly(pub Vec<i64>);

impl IntPoly {
    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    fn eval_complex(&self, x: Complex64) -> (Complex64, Complex64) {
        let mut p = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for &c in &self.0 {
            dp = dp * x + p;
            p = p * x + c as f64;
        }
        (p, dp)
    }

    /// Sign of `P(X / 2^FRAC_BITS)`, evaluated exactly.
    fn sign_at_fixed(&self, x: &BigInt) -> i32 {
        let deg = self.degree();
        let mut acc = BigInt::zero();
        let mut xpow = BigInt::from(1);
        // P(X/2^F) 2^{F d} = Σ c_i X^{d-i} 2^{F i}
        let mut terms = Vec::with_capacity(deg + 1);
        for _ in 0..=deg {
            terms.push(xpow.clone());
            xpow *= x;
        }
        for (i, &c) in self.0.iter().enumerate() {
            acc += (BigInt::from(c) * &terms[deg - i]) << (FRAC_BITS as usize * i);
        }
        if acc.is_zero() {
            0
        } else if acc.is_positive() {
            1
        } else {
            -1
        }
    }
}

impl FromStr for IntPoly {
    type Err = Error;

    /// Comma-separated integer coefficients, highest degree first, e.g. `"1,-1,-1"`.
    fn from_str(s: &str) -> Result<Self> {
        let coeffs = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<i64>()
                    .map_err(|e| Error::Validation(format!("bad coefficient {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if coeffs.len() < 2 {
            return Err(Error::Validation("polynomial must have degree >= 1".into()));
        }
        Ok(IntPoly(coeffs))
    }
}

/// All complex roots by the Aberth–Ehrlich iteration, Newton polished.
fn complex_roots(poly: &IntPoly) -> Vec<Complex64> {
    let n = poly.degree();
    if n == 0 {
        return Vec::new();
    }
    // Cauchy bound on root moduli
    let bound = 1.0 + poly.0[1..].iter().map(|c| c.abs() as f64).fold(0.0, f64::max);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / n as f64 + 0.4;
            Complex64::from_polar(0.5 * bound, angle)
        })
        .collect();
    for _ in 0..2000 {
        let mut max_step: f64 = 0.0;
        for i in 0..n {
            let (p, dp) = poly.eval_complex(z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| Complex64::new(1.0, 0.0) / (z[i] - z[j]))
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            z[i] -= step;
            max_step = max_step.max(step.norm() / z[i].norm().max(1.0));
        }
        if max_step < 1e-16 {
            break;
        }
    }
    for zi in z.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = poly.eval_complex(*zi);
            if dp.norm() == 0.0 {
                break;
            }
            let next = *zi - p / dp;
            if !next.re.is_finite() || !next.im.is_finite() {
                break;
            }
            *zi = next;
        }
    }
    z
}

fn to_fixed(x: f64) -> BigInt {
    // exact conversion of a double into fixed point
    let (mantissa, exponent, sign) = num_traits::float::FloatCore::integer_decode(x);
    let m = BigInt::from(mantissa) * sign;
    let shift = exponent as i64 + FRAC_BITS as i64;
    if shift >= 0 {
        m << shift as usize
    } else {
        m >> (-shift) as usize
    }
}

fn fixed_to_f64(x: &BigInt) -> f64 {
    // keep 80 significant bits before converting
    let bits = x.bits() as i64;
    let drop = (bits - 80).max(0);
    let top = (x >> drop as usize).to_f64().unwrap_or(f64::NAN);
    top * 2f64.powi((drop - FRAC_BITS as i64) as i32)
}

fn fixed_mul(a: &BigInt, b: &BigInt) -> BigInt {
    (a * b) >> FRAC_BITS as usize
}

/// A certified Pisot number `α` with the constants used downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PisotCertificate {
    pub poly: IntPoly,
    /// the real root `α > 1`
    pub alpha: f64,
    /// `1/α`
    pub beta: f64,
    /// largest modulus among the other roots
    pub delta: f64,
    /// base with `dist(α^k, Z) ≤ θ̃^k` for all `k ≥ 1`
    pub theta_tilde: f64,
    /// `θ = (1 + max(β, θ̃)) / 2`
    pub theta: f64,
    /// `|cos(2π β^k) - 1| ≤ θ^{|k|}` for every `|k| ≥ L`
    #[serde(rename = "L")]
    pub l: u32,
    #[serde(skip)]
    alpha_fixed: BigInt,
}

impl PisotCertificate {
    pub fn degree(&self) -> usize {
        self.poly.degree()
    }

    /// `γ = log α`, the vertical lattice step with `e^{-γ} = β`.
    pub fn gamma(&self) -> f64 {
        self.alpha.ln()
    }

    fn alpha_pow_fixed(&self, k: u32) -> BigInt {
        let mut acc = BigInt::from(1) << FRAC_BITS as usize;
        let mut base = self.alpha_fixed.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                acc = fixed_mul(&acc, &base);
            }
            e >>= 1;
            if e > 0 {
                base = fixed_mul(&base, &base);
            }
        }
        acc
    }

    /// `α^k - s_k` in extended precision, `0 ≤ k ≤ 120`.
    pub fn power_residual(&self, k: u32) -> Result<f64> {
        if k > MAX_PRECISE_POWER {
            return Err(Error::Precision {
                k,
                max: MAX_PRECISE_POWER,
            });
        }
        let s = power_sum(&self.poly, k as usize) << FRAC_BITS as usize;
        Ok(fixed_to_f64(&(self.alpha_pow_fixed(k) - s)))
    }

    /// A representative of `β^m` modulo 1 with full relative accuracy:
    /// `β^m` itself for `m ≥ 0`, `α^{|m|} - s_{|m|}` for `m < 0`.
    pub fn beta_power_mod1(&self, m: i64) -> Result<f64> {
        if m >= 0 {
            Ok(self.beta.powi(m.min(i32::MAX as i64) as i32))
        } else {
            let k = u32::try_from(-m).unwrap_or(u32::MAX);
            self.power_residual(k)
        }
    }
}

/// `|cos(2π u) - 1| = 2 sin²(π u)`, accurate for small `u`.
fn one_minus_cos_turns(u: f64) -> f64 {
    let s = (std::f64::consts::PI * u).sin();
    2.0 * s * s
}

/// Certifies that the polynomial's dominant root is a Pisot number.
pub fn certify_pisot(poly: &IntPoly) -> Result<PisotCertificate> {
    if poly.0.first() != Some(&1) {
        return Err(Error::NotMonic);
    }
    let r = poly.degree();
    if r == 0 {
        return Err(Error::Validation("polynomial must have degree >= 1".into()));
    }
    let mut roots = complex_roots(poly);
    roots.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let lead = roots[0];
    if lead.im.abs() > CIRCLE_MARGIN || lead.re <= 1.0 + CIRCLE_MARGIN {
        return Err(Error::NotPisot(format!("largest root {lead} is not a real number > 1")));
    }
    let delta = roots[1..].iter().map(|z| z.norm()).fold(0.0, f64::max);
    if delta >= 1.0 - CIRCLE_MARGIN {
        return Err(Error::NotPisot(format!("a conjugate has modulus {delta} >= 1")));
    }

    // refine α by exact bisection in fixed point
    let width = 1e-9 * lead.re.max(1.0);
    let mut lo = to_fixed(lead.re - width);
    let mut hi = to_fixed(lead.re + width);
    let (slo, shi) = (poly.sign_at_fixed(&lo), poly.sign_at_fixed(&hi));
    if slo == 0 {
        hi = lo.clone();
    } else if shi == 0 {
        lo = hi.clone();
    } else if slo == shi {
        return Err(Error::NotPisot("could not bracket the dominant root".into()));
    }
    while &hi - &lo > BigInt::from(1) {
        let mid: BigInt = (&lo + &hi) >> 1;
        let sm = poly.sign_at_fixed(&mid);
        if sm == 0 {
            lo = mid;
            break;
        }
        if sm == slo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha_fixed = lo;
    let alpha = fixed_to_f64(&alpha_fixed);
    let beta = 1.0 / alpha;

    let theta_tilde = if r == 1 {
        0.0
    } else {
        // max over k of min(1/2, (r-1) δ^k)^{1/k}; dist(·, Z) never exceeds 1/2
        let mut best: f64 = 0.0;
        for k in 1..=400u32 {
            let b = ((r - 1) as f64 * delta.powi(k as i32)).min(0.5).powf(1.0 / k as f64);
            best = best.max(b);
        }
        best
    };
    let theta = 0.5 * (1.0 + beta.max(theta_tilde));

    let mut cert = PisotCertificate {
        poly: poly.clone(),
        alpha,
        beta,
        delta,
        theta_tilde,
        theta,
        l: 0,
        alpha_fixed,
    };

    // Beyond `check_to` the bound follows from |cos u - 1| ≤ u²/2 with
    // u = 2π β^k (k > 0) or u = 2π (r-1) δ^k (k < 0): both ratios against θ^k
    // are decreasing since β², δ² < θ.
    let analytic_ok = |k: u32| {
        let kf = k as i32;
        let pos = 2.0 * std::f64::consts::PI.powi(2) * beta.powi(2 * kf);
        let neg = 2.0 * std::f64::consts::PI.powi(2) * ((r - 1) as f64).powi(2) * delta.powi(2 * kf);
        pos.max(neg) <= theta.powi(kf)
    };
    let mut check_to = CHECK_RANGE;
    while !analytic_ok(check_to + 1) {
        check_to += 1;
        if check_to >= MAX_PRECISE_POWER {
            return Err(Error::Precision {
                k: check_to,
                max: MAX_PRECISE_POWER,
            });
        }
    }
    let mut l = 0u32;
    for k in (1..=check_to).rev() {
        let pos = one_minus_cos_turns(cert.beta_power_mod1(k as i64)?);
        let neg = one_minus_cos_turns(cert.beta_power_mod1(-(k as i64))?);
        let bound = theta.powi(k as i32);
        if pos > bound || neg > bound {
            l = k + 1;
            break;
        }
    }
    cert.l = l;
    Ok(cert)
}

/// Power sums `s_k = Σ_roots ρ^k`, exact, by Newton's identities.
pub fn power_sums(poly: &IntPoly, kmax: usize) -> Vec<BigInt> {
    let r = poly.degree();
    // P = X^r + a_{r-1} X^{r-1} + ... + a_0, with e-coefficients c_i = poly[i]
    let c: Vec<BigInt> = poly.0.iter().map(|&v| BigInt::from(v)).collect();
    let mut s: Vec<BigInt> = Vec::with_capacity(kmax + 1);
    s.push(BigInt::from(r as i64));
    for k in 1..=kmax {
        let mut acc = BigInt::zero();
        for i in 1..=r.min(k - 1) {
            acc -= &c[i] * &s[k - i];
        }
        if k <= r {
            acc -= &c[k] * BigInt::from(k as i64);
        }
        s.push(acc);
    }
    s
}

/// `s_k = α^k + α_2^k + ... + α_r^k`.
pub fn power_sum(poly: &IntPoly, k: usize) -> BigInt {
    power_sums(poly, k).pop().expect("non-empty")
}

/// `|cos(2π β^k) - 1|`, checked against `θ^{|k|}`.
pub fn cosine_closeness(cert: &PisotCertificate, k: i64) -> Result<f64> {
    if k.unsigned_abs() < cert.l as u64 {
        return Err(Error::Validation(format!("|k| = {} is below L = {}", k.abs(), cert.l)));
    }
    let value = one_minus_cos_turns(cert.beta_power_mod1(k)?);
    let bound = cert.theta.powi(k.unsigned_abs().min(i32::MAX as u64) as i32);
    if value > bound {
        return Err(Error::NumericRange(format!(
            "cosine bound violated at k = {k}: {value} > {bound}"
        )));
    }
    Ok(value)
}
