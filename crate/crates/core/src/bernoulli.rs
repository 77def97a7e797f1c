//! Bernoulli convolutions `b_λ`, the laws of `Σ_{j≥0} ±λ^j` with fair signs.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonic::FourierEvaluation;
use crate::pisot::PisotCertificate;
use crate::rng::Rng;

/// A contraction ratio `λ ∈ (0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernoulliParam {
    lambda: f64,
}

impl BernoulliParam {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Validation(format!("lambda must lie in (0,1), got {lambda}")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Validation(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

/// Number of terms `K + 1` with `λ^{K+1}/(1 − λ) ≤ eps`.
fn sample_terms(lambda: f64, eps: f64) -> usize {
    let mut k = 0usize;
    let mut tail = lambda / (1.0 - lambda);
    while tail > eps {
        tail *= lambda;
        k += 1;
    }
    k + 1
}

/// One draw of `Σ_{j≤K} ±λ^j`, within `eps` of an exact draw.
pub fn sample_b(lambda: f64, rng: &mut Rng, eps: f64) -> Result<f64> {
    BernoulliParam::new(lambda)?;
    check_eps(eps)?;
    let terms = sample_terms(lambda, eps);
    let mut x = 0.0;
    let mut scale = 1.0;
    let mut bits = 0u64;
    for j in 0..terms {
        if j % 64 == 0 {
            bits = rng.random();
        }
        x += if bits & 1 == 1 { scale } else { -scale };
        bits >>= 1;
        scale *= lambda;
    }
    Ok(x)
}

/// `b̂_λ(t) = Π_{k≥0} cos(tλ^k)`, truncated once the tail can move the
/// product by at most `eps` (using `|cos u − 1| ≤ u²/2`).
pub fn ft_bernoulli(lambda: f64, t: f64, eps: f64) -> Result<FourierEvaluation> {
    BernoulliParam::new(lambda)?;
    check_eps(eps)?;
    let l2 = lambda * lambda;
    let mut value = 1.0;
    let mut scale = t;
    // tail after the current factor: t² λ^{2(K+1)} / (2(1 − λ²))
    loop {
        value *= scale.cos();
        scale *= lambda;
        let tail = scale * scale / (2.0 * (1.0 - l2));
        if tail <= eps {
            return Ok(FourierEvaluation {
                t,
                re: value,
                im: 0.0,
                stat_err: 0.0,
                trunc_err: tail,
            });
        }
    }
}

/// Closed interval containing the support of `b_λ`.
pub fn support_interval(lambda: f64) -> Result<(f64, f64)> {
    BernoulliParam::new(lambda)?;
    let r = 1.0 / (1.0 - lambda);
    Ok((-r, r))
}

/// `m` when `λ^m = ½` for an integer `1 ≤ m ≤ 64`.
pub fn halving_power(lambda: f64) -> Option<u32> {
    (1..=64u32).find(|&m| (lambda.powi(m as i32) - 0.5).abs() < 1e-12)
}

/// Density values from Fourier inversion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub lambda: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Frequency cutoff of the inversion integral.
    pub cutoff: f64,
    /// The cutoff comes from a proven decay bound (`λ^m = ½`).
    pub certified: bool,
    pub warnings: Vec<String>,
}

/// Heuristic cutoff for ratios without a decay bound.
const HEURISTIC_CUTOFF: f64 = 2000.0;

/// Density of `b_λ` on `grid` by trapezoidal inversion over `[−T, T]`.
///
/// When `λ^m = ½` the transform is a product of `m` sinc factors and the
/// cutoff `T` is chosen so that the neglected tail contributes at most `eps`;
/// otherwise `T` is heuristic and a warning is attached. Passing a Pisot
/// certificate whose inverse equals `λ` also attaches a warning.
pub fn density_estimate(
    lambda: f64,
    grid: &[f64],
    eps: f64,
    pisot: Option<&PisotCertificate>,
) -> Result<DensityEstimate> {
    BernoulliParam::new(lambda)?;
    check_eps(eps)?;
    if lambda < 0.5 {
        return Err(Error::Validation(format!(
            "no density is expected for lambda = {lambda} < 1/2"
        )));
    }
    let mut warnings = Vec::new();
    if let Some(c) = pisot {
        if (c.beta - lambda).abs() < 1e-12 {
            warnings.push(format!(
                "lambda is the inverse of a Pisot number ({:.12}); b_lambda is singular and the output is not a density",
                c.alpha
            ));
        }
    }
    let (certified, cutoff) = match halving_power(lambda) {
        Some(1) => (true, 1.0 / eps),
        Some(m) => {
            // |b̂(t)| ≤ C t^{−m}, C = Π_{j<m} 1/(2λ^j); tail (1/π) ∫_T^∞ ≤ eps
            let c: f64 = (0..m).map(|j| 1.0 / (2.0 * lambda.powi(j as i32))).product();
            let mf = m as f64;
            (
                true,
                (c / (std::f64::consts::PI * eps * (mf - 1.0))).powf(1.0 / (mf - 1.0)),
            )
        }
        None => {
            warnings.push("no certified decay bound for this lambda; the cutoff is heuristic".into());
            (false, HEURISTIC_CUTOFF)
        }
    };
    let (_, r) = support_interval(lambda)?;
    let reach = grid.iter().fold(r, |a, x| a.max(x.abs()));
    // the trapezoid rule periodizes the density with period 2π/h
    let h = std::f64::consts::PI / (reach + r);
    let steps = (cutoff / h).ceil() as usize;
    let inner_eps = (eps * 1e-3).max(1e-15);
    let transform: Vec<f64> = (0..=steps)
        .map(|j| ft_bernoulli(lambda, j as f64 * h, inner_eps).map(|e| e.re))
        .collect::<Result<_>>()?;
    let values = grid
        .iter()
        .map(|&x| {
            let mut s = 0.5 * transform[0];
            for (j, b) in transform.iter().enumerate().skip(1) {
                let w = if j == steps { 0.5 } else { 1.0 };
                s += w * b * (j as f64 * h * x).cos();
            }
            s * h / std::f64::consts::PI
        })
        .collect();
    Ok(DensityEstimate {
        lambda,
        grid: grid.to_vec(),
        values,
        cutoff,
        certified,
        warnings,
    })
}
