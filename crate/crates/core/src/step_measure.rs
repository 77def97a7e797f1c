//! Finitely supported step laws on Sol and the constructions used in the
//! experiments: Solomyak-type, Erdős-type and the entropy/speed family.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{self, EntropyEntry, LatticeElement, LatticeMeasure, LatticeSpec};
use crate::pisot::PisotCertificate;
use crate::sol_group::{BoundarySide, SolElement};
use crate::vertical_walk::VerticalLaw;

/// Coordinates closer than this are the same atom.
pub const MERGE_TOL: f64 = 1e-12;

/// How the y-coordinates of a product construction are chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum YRule {
    #[default]
    Zero,
    /// `μ_y = ½δ₊₁ + ½δ₋₁`, independent of the other coordinates.
    IndependentSign,
}

impl YRule {
    fn law(self) -> Vec<(f64, f64)> {
        match self {
            YRule::Zero => vec![(0.0, 1.0)],
            YRule::IndependentSign => vec![(-1.0, 0.5), (1.0, 0.5)],
        }
    }
}

/// Independent marginals `μ = μ_z ⊗ μ_x ⊗ μ_y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductForm {
    pub gamma: f64,
    pub mu_z: Vec<(f64, f64)>,
    pub mu_x: Vec<(f64, f64)>,
    pub mu_y: Vec<(f64, f64)>,
}

/// A finitely supported probability measure on Sol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureFile", into = "MeasureFile")]
pub struct StepMeasure {
    atoms: Vec<(SolElement, f64)>,
    gamma: Option<f64>,
    product_form: Option<ProductForm>,
    lattice: Option<(LatticeSpec, LatticeMeasure)>,
}

fn cmp_elements(a: &SolElement, b: &SolElement) -> Ordering {
    a.z.total_cmp(&b.z).then(a.x.total_cmp(&b.x)).then(a.y.total_cmp(&b.y))
}

fn close(a: &SolElement, b: &SolElement) -> bool {
    (a.z - b.z).abs() <= MERGE_TOL && (a.x - b.x).abs() <= MERGE_TOL && (a.y - b.y).abs() <= MERGE_TOL
}

fn check_weights(weights: impl Iterator<Item = f64>, tol: f64) -> Result<f64> {
    let mut total = 0.0;
    for w in weights {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::Validation(format!(
                "weights must be positive and finite, got {w}"
            )));
        }
        total += w;
    }
    if (total - 1.0).abs() > tol {
        return Err(Error::Validation(format!("weights sum to {total}, expected 1")));
    }
    Ok(total)
}

fn check_marginal(name: &str, law: &[(f64, f64)]) -> Result<()> {
    if law.is_empty() {
        return Err(Error::Validation(format!("{name} has no atoms")));
    }
    if law.iter().any(|a| !a.0.is_finite()) {
        return Err(Error::Validation(format!("{name} has a non-finite atom")));
    }
    check_weights(law.iter().map(|a| a.1), 1e-9).map(|_| ())
}

/// Sorts, merges near-equal atoms and renormalizes.
fn normalize_atoms(mut atoms: Vec<(SolElement, f64)>) -> Result<Vec<(SolElement, f64)>> {
    if atoms.is_empty() {
        return Err(Error::Validation("measure has no atoms".into()));
    }
    if atoms.iter().any(|a| !a.0.is_finite()) {
        return Err(Error::Validation("atom with non-finite coordinate".into()));
    }
    let total = check_weights(atoms.iter().map(|a| a.1), 1e-9)?;
    atoms.sort_by(|a, b| cmp_elements(&a.0, &b.0));
    let mut merged: Vec<(SolElement, f64)> = Vec::with_capacity(atoms.len());
    for (g, w) in atoms {
        match merged.last_mut() {
            Some(last) if close(&last.0, &g) => last.1 += w / total,
            _ => merged.push((g, w / total)),
        }
    }
    Ok(merged)
}

impl StepMeasure {
    pub fn from_atoms(atoms: Vec<(SolElement, f64)>) -> Result<Self> {
        Ok(Self {
            atoms: normalize_atoms(atoms)?,
            gamma: None,
            product_form: None,
            lattice: None,
        })
    }

    pub fn from_product(form: ProductForm) -> Result<Self> {
        if !(form.gamma > 0.0 && form.gamma.is_finite()) {
            return Err(Error::Validation(format!("gamma must be positive, got {}", form.gamma)));
        }
        check_marginal("mu_z", &form.mu_z)?;
        check_marginal("mu_x", &form.mu_x)?;
        check_marginal("mu_y", &form.mu_y)?;
        let mut atoms = Vec::with_capacity(form.mu_z.len() * form.mu_x.len() * form.mu_y.len());
        for &(z, wz) in &form.mu_z {
            for &(x, wx) in &form.mu_x {
                for &(y, wy) in &form.mu_y {
                    atoms.push((SolElement::new(z, x, y), wz * wx * wy));
                }
            }
        }
        Ok(Self {
            atoms: normalize_atoms(atoms)?,
            gamma: Some(form.gamma),
            product_form: Some(form),
            lattice: None,
        })
    }

    /// The image of a lattice measure under the embedding into Sol.
    pub fn from_lattice(spec: &LatticeSpec, mu: &LatticeMeasure) -> Result<Self> {
        let atoms = mu.atoms().iter().map(|(g, w)| (spec.embed(g), *w)).collect();
        Ok(Self {
            atoms: normalize_atoms(atoms)?,
            gamma: Some(spec.gamma()),
            product_form: None,
            lattice: Some((spec.clone(), mu.clone())),
        })
    }

    pub fn atoms(&self) -> &[(SolElement, f64)] {
        &self.atoms
    }

    pub fn product_form(&self) -> Option<&ProductForm> {
        self.product_form.as_ref()
    }

    pub fn lattice(&self) -> Option<(&LatticeSpec, &LatticeMeasure)> {
        self.lattice.as_ref().map(|(s, m)| (s, m))
    }

    /// Vertical drift `α = E z`.
    pub fn drift(&self) -> f64 {
        self.atoms.iter().map(|(g, w)| g.z * w).sum()
    }

    /// Shannon entropy in nats.
    pub fn shannon_entropy(&self) -> f64 {
        lattice::shannon(self.atoms.iter().map(|a| a.1))
    }

    /// Boundary line hit by the walk; `None` at zero drift.
    pub fn side(&self) -> Option<BoundarySide> {
        BoundarySide::from_drift(self.drift())
    }

    pub fn x_max(&self) -> f64 {
        self.atoms.iter().map(|a| a.0.x.abs()).fold(0.0, f64::max)
    }

    pub fn y_max(&self) -> f64 {
        self.atoms.iter().map(|a| a.0.y.abs()).fold(0.0, f64::max)
    }

    /// The z-marginal as `(z, weight)` pairs.
    pub fn z_marginal(&self) -> Vec<(f64, f64)> {
        marginal(self.atoms.iter().map(|(g, w)| (g.z, *w)))
    }

    /// The x-marginal as `(x, weight)` pairs.
    pub fn x_marginal(&self) -> Vec<(f64, f64)> {
        marginal(self.atoms.iter().map(|(g, w)| (g.x, *w)))
    }

    /// Vertical step unit: from the product form or lattice, if any.
    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    /// The z-marginal as an integer-level law on `γℤ`.
    pub fn vertical_law(&self) -> Result<VerticalLaw> {
        let gamma = self
            .gamma()
            .ok_or_else(|| Error::Validation("measure has no vertical lattice step".into()))?;
        let mut steps = Vec::new();
        for (z, w) in self.z_marginal() {
            let k = (z / gamma).round();
            if (z - k * gamma).abs() > 1e-9 * gamma.max(1.0) {
                return Err(Error::Validation(format!(
                    "z = {z} is not a multiple of gamma = {gamma}"
                )));
            }
            steps.push((k as i64, w));
        }
        VerticalLaw::new(gamma, steps)
    }

    /// Whether `x` and `−x` carry the same weight within `1e−12`.
    pub fn is_x_symmetric(&self) -> bool {
        let xs = self.x_marginal();
        xs.iter().all(|&(x, w)| {
            xs.iter()
                .any(|&(x2, w2)| (x + x2).abs() <= MERGE_TOL && (w - w2).abs() <= 1e-12)
        })
    }

    /// The measure seen from the other boundary: `(z,x,y) ↦ (−z,y,x)`.
    ///
    /// This is an automorphism of Sol exchanging the two boundary lines, so
    /// sampling the minus side of `μ` is sampling the plus side of the mirror.
    pub fn mirrored(&self) -> StepMeasure {
        let atoms = self
            .atoms
            .iter()
            .map(|(g, w)| (SolElement::new(-g.z, g.y, g.x), *w))
            .collect();
        let product_form = self.product_form.as_ref().map(|f| ProductForm {
            gamma: f.gamma,
            mu_z: f.mu_z.iter().map(|&(z, w)| (-z, w)).collect(),
            mu_x: f.mu_y.clone(),
            mu_y: f.mu_x.clone(),
        });
        StepMeasure {
            atoms: normalize_atoms(atoms).expect("mirror of a valid measure"),
            gamma: self.gamma,
            product_form,
            lattice: None,
        }
    }

    /// Sufficient test that the generated semigroup is a group.
    pub fn nondegeneracy(&self, kmax: usize) -> NonDegeneracy {
        let closed_under_inverse = self
            .atoms
            .iter()
            .all(|(g, _)| self.atoms.iter().any(|(h, _)| close(&g.inverse(), h)));
        let identity_at = identity_return(self, kmax);
        NonDegeneracy {
            closed_under_inverse,
            identity_at,
            sufficient: closed_under_inverse || identity_at.is_some(),
        }
    }
}

fn marginal(values: impl Iterator<Item = (f64, f64)>) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = values.collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (x, w) in v {
        match out.last_mut() {
            Some(last) if (last.0 - x).abs() <= MERGE_TOL => last.1 += w,
            _ => out.push((x, w)),
        }
    }
    out
}

const SUPPORT_CAP: usize = 200_000;

/// Smallest `k ≤ kmax` with the identity in `supp μ^{*k}`, if found within budget.
fn identity_return(mu: &StepMeasure, kmax: usize) -> Option<usize> {
    if let Some((spec, lm)) = mu.lattice() {
        let steps: Vec<LatticeElement> = lm.atoms().iter().map(|a| a.0).collect();
        let mut support = steps.clone();
        for k in 1..=kmax {
            if support.contains(&LatticeElement::IDENTITY) {
                return Some(k);
            }
            let mut next: Vec<LatticeElement> = support
                .iter()
                .flat_map(|a| steps.iter().filter_map(|b| spec.multiply(a, b).ok()))
                .collect();
            next.sort_unstable();
            next.dedup();
            if next.len() > SUPPORT_CAP {
                return None;
            }
            support = next;
        }
        return None;
    }
    let steps: Vec<SolElement> = mu.atoms.iter().map(|a| a.0).collect();
    let mut support = steps.clone();
    for k in 1..=kmax {
        if support.iter().any(|g| close(g, &SolElement::IDENTITY)) {
            return Some(k);
        }
        let mut next: Vec<SolElement> = support
            .iter()
            .flat_map(|a| steps.iter().map(move |b| *a * *b))
            .collect();
        next.sort_by(cmp_elements);
        next.dedup_by(|a, b| close(a, b));
        if next.len() > SUPPORT_CAP {
            return None;
        }
        support = next;
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonDegeneracy {
    pub closed_under_inverse: bool,
    /// Smallest `k` with the identity in the support of `μ^{*k}`.
    pub identity_at: Option<usize>,
    /// True when either witness was found; false means undecided.
    pub sufficient: bool,
}

/// `pδ_γ + (1−p)δ_{−γ}` vertically, `½δ₁ + ½δ₋₁` horizontally.
pub fn make_solomyak(gamma: f64, p: f64, y_rule: YRule) -> Result<StepMeasure> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Validation(format!("gamma must be positive, got {gamma}")));
    }
    if !(p > 0.5 && p < 1.0) {
        return Err(Error::Validation(format!("p must lie in (1/2, 1), got {p}")));
    }
    StepMeasure::from_product(ProductForm {
        gamma,
        mu_z: vec![(-gamma, 1.0 - p), (gamma, p)],
        mu_x: vec![(-1.0, 0.5), (1.0, 0.5)],
        mu_y: y_rule.law(),
    })
}

/// Pisot-type construction: `μ_z` on `γℤ` with `e^γ` the certified Pisot
/// number, `μ_x = q₁δ₋₁ + q₀δ₀ + q₁δ₁`.
///
/// `levels` lists `(k, w)` for vertical atoms `kγ`.
pub fn make_erdos(
    cert: &PisotCertificate,
    levels: &[(i64, f64)],
    q0: f64,
    q1: f64,
    y_rule: YRule,
) -> Result<StepMeasure> {
    check_erdos_weights(q0, q1)?;
    let gamma = cert.gamma();
    let law = VerticalLaw::new(gamma, levels.to_vec())?;
    if !(law.drift() > 0.0) {
        return Err(Error::Validation(format!(
            "vertical mean must be positive, got {}",
            law.drift()
        )));
    }
    let mut mu_x = vec![(0.0, q0)];
    if q1 > 0.0 {
        mu_x.insert(0, (-1.0, q1));
        mu_x.push((1.0, q1));
    }
    StepMeasure::from_product(ProductForm {
        gamma,
        mu_z: law.real_atoms(),
        mu_x,
        mu_y: y_rule.law(),
    })
}

pub(crate) fn check_erdos_weights(q0: f64, q1: f64) -> Result<()> {
    if !(q0 > 0.5 && q0 <= 1.0) {
        return Err(Error::Validation(format!("q0 must lie in (1/2, 1], got {q0}")));
    }
    if !(q1 >= 0.0) || (q0 + 2.0 * q1 - 1.0).abs() > 1e-12 {
        return Err(Error::Validation(format!("need q0 + 2 q1 = 1, got q0={q0}, q1={q1}")));
    }
    Ok(())
}

/// `½·base + ½·δ_{g^l}`: the same entropy budget spread over a faster walk.
pub fn make_singular_by_speed(
    spec: &LatticeSpec,
    base: &LatticeMeasure,
    g: &LatticeElement,
    l: u64,
) -> Result<LatticeMeasure> {
    if g.r == 0 {
        return Err(Error::Validation("g must have a nonzero vertical component".into()));
    }
    if l == 0 {
        return Err(Error::Validation("l must be at least 1".into()));
    }
    let gl = spec.power(g, l)?;
    Ok(base.half_mixture(&LatticeMeasure::dirac(gl)))
}

/// Entropy/speed upper bound on the dimension of the harmonic measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionBound {
    pub alpha: f64,
    /// `min_k H(μ^{*k}) / (k|α|)` over the computed `k`.
    pub raw: f64,
    /// `min(1, raw)`.
    pub capped: f64,
    pub entropies: Vec<EntropyEntry>,
    /// Set when the atom budget stopped the sequence early.
    pub budget_exceeded_at: Option<usize>,
}

/// Dimension bound from entropy of convolution powers; lattice measures use
/// exact convolutions up to `kmax`, others the `k = 1` bound.
pub fn dimension_bound(mu: &StepMeasure, kmax: usize, budget: usize) -> Result<DimensionBound> {
    let alpha = mu.drift();
    if alpha == 0.0 {
        return Err(Error::ZeroDrift("dimension bound undefined at zero drift".into()));
    }
    let (entropies, budget_exceeded_at) = match mu.lattice() {
        Some((spec, lm)) => {
            let seq = lattice::entropy_sequence(spec, lm, kmax.max(1), budget)?;
            (seq.entries, seq.budget_exceeded_at)
        }
        None => {
            let h = mu.shannon_entropy();
            (
                vec![EntropyEntry {
                    k: 1,
                    entropy: h,
                    rate: h,
                    atoms: mu.atoms.len(),
                }],
                None,
            )
        }
    };
    let rate = entropies.iter().map(|e| e.rate).fold(f64::INFINITY, f64::min);
    let raw = rate / alpha.abs();
    Ok(DimensionBound {
        alpha,
        raw,
        capped: raw.min(1.0),
        entropies,
        budget_exceeded_at,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ZAtom {
    z: f64,
    w: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct XAtom {
    x: f64,
    w: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct YAtom {
    y: f64,
    w: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SolAtom {
    z: f64,
    x: f64,
    y: f64,
    w: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct LatticeAtom {
    r: i64,
    p: i64,
    q: i64,
    w: f64,
}

/// On-disk measure description.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum MeasureFile {
    Product {
        gamma: f64,
        mu_z: Vec<ZAtom>,
        mu_x: Vec<XAtom>,
        #[serde(default)]
        mu_y: Vec<YAtom>,
    },
    Atoms {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
        atoms: Vec<SolAtom>,
    },
    Lattice {
        #[serde(rename = "T")]
        t: [[i64; 2]; 2],
        atoms: Vec<LatticeAtom>,
    },
}

impl TryFrom<MeasureFile> for StepMeasure {
    type Error = Error;

    fn try_from(file: MeasureFile) -> Result<Self> {
        match file {
            MeasureFile::Product {
                gamma,
                mu_z,
                mu_x,
                mu_y,
            } => {
                let mu_y = if mu_y.is_empty() {
                    vec![(0.0, 1.0)]
                } else {
                    mu_y.iter().map(|a| (a.y, a.w)).collect()
                };
                StepMeasure::from_product(ProductForm {
                    gamma,
                    mu_z: mu_z.iter().map(|a| (a.z, a.w)).collect(),
                    mu_x: mu_x.iter().map(|a| (a.x, a.w)).collect(),
                    mu_y,
                })
            }
            MeasureFile::Atoms { gamma, atoms } => {
                let mut mu =
                    StepMeasure::from_atoms(atoms.iter().map(|a| (SolElement::new(a.z, a.x, a.y), a.w)).collect())?;
                if let Some(gamma) = gamma {
                    if !(gamma > 0.0 && gamma.is_finite()) {
                        return Err(Error::Validation(format!("gamma must be positive, got {gamma}")));
                    }
                    mu.gamma = Some(gamma);
                }
                Ok(mu)
            }
            MeasureFile::Lattice { t, atoms } => {
                let spec = LatticeSpec::new(t)?;
                check_weights(atoms.iter().map(|a| a.w), 1e-9)?;
                let lm = LatticeMeasure::new(
                    atoms
                        .iter()
                        .map(|a| (LatticeElement::new(a.r, a.p.into(), a.q.into()), a.w)),
                )?;
                StepMeasure::from_lattice(&spec, &lm)
            }
        }
    }
}

impl From<StepMeasure> for MeasureFile {
    fn from(mu: StepMeasure) -> Self {
        if let Some((spec, lm)) = &mu.lattice {
            return MeasureFile::Lattice {
                t: spec.matrix(),
                atoms: lm
                    .atoms()
                    .iter()
                    .map(|(g, w)| LatticeAtom {
                        r: g.r,
                        p: g.p as i64,
                        q: g.q as i64,
                        w: *w,
                    })
                    .collect(),
            };
        }
        match mu.product_form {
            Some(f) => MeasureFile::Product {
                gamma: f.gamma,
                mu_z: f.mu_z.iter().map(|&(z, w)| ZAtom { z, w }).collect(),
                mu_x: f.mu_x.iter().map(|&(x, w)| XAtom { x, w }).collect(),
                mu_y: f.mu_y.iter().map(|&(y, w)| YAtom { y, w }).collect(),
            },
            None => MeasureFile::Atoms {
                gamma: mu.gamma,
                atoms: mu
                    .atoms
                    .iter()
                    .map(|(g, w)| SolAtom {
                        z: g.z,
                        x: g.x,
                        y: g.y,
                        w: *w,
                    })
                    .collect(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pisot::{certify_pisot, IntPoly};
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn golden_square() -> PisotCertificate {
        certify_pisot(&"1,-3,1".parse::<IntPoly>().unwrap()).unwrap()
    }

    #[test]
    fn drift_examples() {
        let g = StepMeasure::from_atoms(vec![(SolElement::new(0.8, 1.0, 2.0), 1.0)]).unwrap();
        assert_eq!(g.drift(), 0.8);
        let mu = StepMeasure::from_atoms(vec![
            (SolElement::new(1.0, 0.0, 0.0), 0.7),
            (SolElement::new(-1.0, 0.0, 0.0), 0.3),
        ])
        .unwrap();
        assert!((mu.drift() - 0.4).abs() < 1e-15);
        let sym = StepMeasure::from_atoms(vec![
            (SolElement::new(1.0, 0.0, 0.0), 0.5),
            (SolElement::new(-1.0, 0.0, 0.0), 0.5),
        ])
        .unwrap();
        assert_eq!(sym.drift(), 0.0);
    }

    #[test]
    fn entropy_examples() {
        let point = StepMeasure::from_atoms(vec![(SolElement::new(1.0, 0.0, 0.0), 1.0)]).unwrap();
        assert_eq!(point.shannon_entropy(), 0.0);
        let two = StepMeasure::from_atoms(vec![
            (SolElement::new(1.0, 0.0, 0.0), 0.5),
            (SolElement::new(0.0, 1.0, 0.0), 0.5),
        ])
        .unwrap();
        assert!((two.shannon_entropy() - LN_2).abs() < 1e-15);
        let three = StepMeasure::from_atoms(vec![
            (SolElement::new(1.0, 0.0, 0.0), 0.5),
            (SolElement::new(0.0, 1.0, 0.0), 0.25),
            (SolElement::new(0.0, 0.0, 1.0), 0.25),
        ])
        .unwrap();
        assert!((three.shannon_entropy() - 1.5 * LN_2).abs() < 1e-15);
        let merged = StepMeasure::from_atoms(vec![
            (SolElement::new(1.0, 0.0, 0.0), 0.5),
            (SolElement::new(1.0, 1e-14, 0.0), 0.5),
        ])
        .unwrap();
        assert_eq!(merged.atoms().len(), 1);
        assert_eq!(merged.shannon_entropy(), 0.0);
    }

    #[test]
    fn solomyak_construction() {
        let mu = make_solomyak(LN_2, 0.7, YRule::Zero).unwrap();
        assert_eq!(mu.atoms().len(), 4);
        assert!((mu.drift() - 0.4 * LN_2).abs() < 1e-15);
        let with_y = make_solomyak(LN_2, 0.7, YRule::IndependentSign).unwrap();
        assert_eq!(with_y.atoms().len(), 8);
        assert!(make_solomyak(LN_2, 0.5, YRule::Zero).is_err());
        assert!(make_solomyak(LN_2, 0.4, YRule::Zero).is_err());
        let near = make_solomyak(LN_2, 0.500001, YRule::Zero).unwrap();
        assert!(near.drift() > 0.0 && near.drift() < 1e-5);
        let law = mu.vertical_law().unwrap();
        assert_eq!(law.as_two_atom(), Some(0.7));
    }

    #[test]
    fn erdos_construction() {
        let cert = golden_square();
        let mu = make_erdos(&cert, &[(1, 0.55), (-1, 0.45)], 0.6, 0.2, YRule::Zero).unwrap();
        assert!((mu.drift() - 0.1 * cert.gamma()).abs() < 1e-12);
        assert_eq!(mu.atoms().len(), 6);
        assert!(mu.is_x_symmetric());
        assert!(make_erdos(&cert, &[(1, 0.55), (-1, 0.45)], 0.5, 0.25, YRule::Zero).is_err());
        assert!(make_erdos(&cert, &[(1, 0.55), (-1, 0.45)], 0.6, 0.3, YRule::Zero).is_err());
        assert!(make_erdos(&cert, &[(1, 0.4), (-1, 0.6)], 0.6, 0.2, YRule::Zero).is_err());
        let a = make_erdos(&cert, &[(1, 0.52), (-1, 0.48)], 0.6, 0.2, YRule::Zero)
            .unwrap()
            .drift();
        let b = make_erdos(&cert, &[(1, 0.51), (-1, 0.49)], 0.6, 0.2, YRule::Zero)
            .unwrap()
            .drift();
        assert!((a - 2.0 * b).abs() < 1e-12);
    }

    #[test]
    fn speed_family() {
        let spec = LatticeSpec::new([[2, 1], [1, 1]]).unwrap();
        let g = LatticeElement::new(1, 0, 0);
        let two = make_singular_by_speed(&spec, &LatticeMeasure::dirac(LatticeElement::IDENTITY), &g, 3).unwrap();
        assert_eq!(two.len(), 2);
        assert!((two.entropy() - LN_2).abs() < 1e-15);
        assert!(make_singular_by_speed(&spec, &two, &LatticeElement::new(0, 1, 0), 1).is_err());

        let base = LatticeMeasure::uniform(&[
            LatticeElement::new(0, 1, 0),
            LatticeElement::new(0, -1, 0),
            LatticeElement::new(0, 0, 1),
            LatticeElement::new(0, 0, -1),
        ])
        .unwrap();
        let d1 = make_singular_by_speed(&spec, &base, &g, 1).unwrap().drift(&spec);
        let d2 = make_singular_by_speed(&spec, &base, &g, 2).unwrap().drift(&spec);
        assert!((d2 - 2.0 * d1).abs() < 1e-12);
        for l in [1u64, 5, 50] {
            let mu = make_singular_by_speed(&spec, &base, &g, l).unwrap();
            assert!(mu.entropy() <= 0.5 * base.entropy() + LN_2 + 1e-12);
            assert!((mu.drift(&spec) - 0.5 * l as f64 * spec.gamma()).abs() < 1e-9);
        }
    }

    #[test]
    fn dimension_bound_examples() {
        let point = StepMeasure::from_atoms(vec![(SolElement::new(0.5, 1.0, 0.0), 1.0)]).unwrap();
        assert_eq!(dimension_bound(&point, 1, 1000).unwrap().raw, 0.0);
        let two = StepMeasure::from_atoms(vec![
            (SolElement::new(1.0, 1.0, 0.0), 0.5),
            (SolElement::new(1.0, -1.0, 0.0), 0.5),
        ])
        .unwrap();
        let b = dimension_bound(&two, 1, 1000).unwrap();
        assert!(b.raw <= LN_2 + 1e-15 && b.capped <= 1.0);
        let zero = make_solomyak(1.0, 0.7, YRule::Zero).unwrap().mirrored();
        let sym = StepMeasure::from_atoms(vec![
            (SolElement::new(1.0, 0.0, 0.0), 0.5),
            (SolElement::new(-1.0, 1.0, 0.0), 0.5),
        ])
        .unwrap();
        assert!(matches!(dimension_bound(&sym, 1, 10), Err(Error::ZeroDrift(_))));
        assert!(dimension_bound(&zero, 1, 10).unwrap().alpha < 0.0);

        let spec = LatticeSpec::new([[2, 1], [1, 1]]).unwrap();
        let base = LatticeMeasure::uniform(&[
            LatticeElement::new(0, 1, 0),
            LatticeElement::new(0, -1, 0),
            LatticeElement::new(0, 0, 1),
            LatticeElement::new(0, 0, -1),
            LatticeElement::new(1, 0, 0),
            LatticeElement::new(-1, 0, 0),
        ])
        .unwrap();
        let mut prev = f64::INFINITY;
        for l in [1u64, 2, 4, 8, 16, 40] {
            let lm = make_singular_by_speed(&spec, &base, &LatticeElement::new(1, 0, 0), l).unwrap();
            let mu = StepMeasure::from_lattice(&spec, &lm).unwrap();
            let b = dimension_bound(&mu, 2, 1_000_000).unwrap();
            assert!(b.raw < prev);
            prev = b.raw;
        }
        assert!(prev < 0.1);
    }

    #[test]
    fn dimension_bound_monotone_in_kmax() {
        let spec = LatticeSpec::new([[2, 1], [1, 1]]).unwrap();
        let lm = LatticeMeasure::new([
            (LatticeElement::new(1, 0, 0), 0.5),
            (LatticeElement::new(0, 1, 0), 0.25),
            (LatticeElement::new(-1, 0, 1), 0.25),
        ])
        .unwrap();
        let mu = StepMeasure::from_lattice(&spec, &lm).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..=6 {
            let b = dimension_bound(&mu, k, 1_000_000).unwrap().raw;
            assert!(b <= prev);
            prev = b;
        }
    }

    #[test]
    fn nondegeneracy_witnesses() {
        let sym = StepMeasure::from_atoms(vec![
            (SolElement::new(1.0, 1.0, 0.0), 0.5),
            (SolElement::new(1.0, 1.0, 0.0).inverse(), 0.5),
        ])
        .unwrap();
        assert!(sym.nondegeneracy(1).closed_under_inverse);
        let spec = LatticeSpec::new([[2, 1], [1, 1]]).unwrap();
        let lm = LatticeMeasure::new([
            (LatticeElement::new(1, 0, 0), 0.5),
            (LatticeElement::new(-1, 0, 0), 0.25),
            (LatticeElement::new(0, 1, 0), 0.25),
        ])
        .unwrap();
        let mu = StepMeasure::from_lattice(&spec, &lm).unwrap();
        let nd = mu.nondegeneracy(4);
        assert_eq!(nd.identity_at, Some(2));
        assert!(nd.sufficient);
        let up = StepMeasure::from_atoms(vec![(SolElement::new(1.0, 0.0, 0.0), 1.0)]).unwrap();
        assert!(!up.nondegeneracy(5).sufficient);
    }

    #[test]
    fn json_round_trip() {
        let mu = make_solomyak(LN_2, 0.7, YRule::IndependentSign).unwrap();
        let text = serde_json::to_string(&mu).unwrap();
        assert!(text.contains("\"kind\":\"product\""));
        let back: StepMeasure = serde_json::from_str(&text).unwrap();
        assert_eq!(back, mu);

        let spec = LatticeSpec::new([[2, 1], [1, 1]]).unwrap();
        let lm = LatticeMeasure::uniform(&[LatticeElement::new(1, 0, 0), LatticeElement::new(0, 1, 0)]).unwrap();
        let lat = StepMeasure::from_lattice(&spec, &lm).unwrap();
        let text = serde_json::to_string(&lat).unwrap();
        assert!(text.contains("\"kind\":\"lattice\""));
        let back: StepMeasure = serde_json::from_str(&text).unwrap();
        assert_eq!(back.atoms(), lat.atoms());

        let raw = r#"{"kind":"atoms","atoms":[{"z":1,"x":0,"y":0,"w":0.5},{"z":-1,"x":1,"y":0,"w":0.5}]}"#;
        let mu: StepMeasure = serde_json::from_str(raw).unwrap();
        assert_eq!(mu.atoms().len(), 2);
        let bad = r#"{"kind":"atoms","atoms":[{"z":1,"x":0,"y":0,"w":0.5},{"z":-1,"x":1,"y":0,"w":0.4}]}"#;
        assert!(serde_json::from_str::<StepMeasure>(bad).is_err());
        let tolerant =
            r#"{"kind":"product","gamma":1,"mu_z":[{"z":1,"w":0.7000000001},{"z":-1,"w":0.3}],"mu_x":[{"x":1,"w":1}]}"#;
        let mu: StepMeasure = serde_json::from_str(tolerant).unwrap();
        assert!((mu.atoms().iter().map(|a| a.1).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn product_marginals_reproduce(p in 0.51f64..0.99, q0 in 0.51f64..1.0) {
            let q1 = (1.0 - q0) / 2.0;
            let form = ProductForm {
                gamma: 0.9,
                mu_z: vec![(-0.9, 1.0 - p), (0.9, p)],
                mu_x: vec![(-1.0, q1), (0.0, q0), (1.0, q1)],
                mu_y: vec![(-1.0, 0.5), (1.0, 0.5)],
            };
            let mu = StepMeasure::from_product(form.clone()).unwrap();
            for (z, w) in mu.z_marginal() {
                let want = form.mu_z.iter().find(|a| a.0 == z).unwrap().1;
                prop_assert!((w - want).abs() < 1e-12);
            }
            for (x, w) in mu.x_marginal() {
                let want = form.mu_x.iter().find(|a| a.0 == x).unwrap().1;
                prop_assert!((w - want).abs() < 1e-12);
            }
            prop_assert!((mu.drift() - (2.0 * p - 1.0) * 0.9).abs() < 1e-12);
        }

        #[test]
        fn solomyak_drift_closed_form(gamma in 0.01f64..5.0, p in 0.501f64..0.999) {
            let mu = make_solomyak(gamma, p, YRule::Zero).unwrap();
            prop_assert!((mu.drift() - (2.0 * p - 1.0) * gamma).abs() < 1e-12);
        }
    }
}
