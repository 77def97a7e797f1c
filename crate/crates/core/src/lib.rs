//! Random walks on the Sol group: exact group and lattice arithmetic, boundary
//! sampling of harmonic measures, Pisot certificates and Fourier/dimension
//! diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bernoulli;
pub mod boundary_sampler;
pub mod error;
pub mod harmonic;
pub mod io;
pub mod lattice;
pub mod pisot;
pub mod rng;
pub mod sol_group;
pub mod step_measure;
pub mod vertical_walk;

pub use boundary_sampler::{BoundarySample, WalkState};
pub use error::{Error, Result};
pub use harmonic::{EmpiricalMeasure, FourierEvaluation, SingularityCertificate, Verdict};
pub use lattice::{LatticeElement, LatticeMeasure, LatticeSpec};
pub use pisot::{certify_pisot, IntPoly, PisotCertificate};
pub use sol_group::{BoundarySide, DistanceBounds, SolElement};
pub use step_measure::{ProductForm, StepMeasure, YRule};
pub use vertical_walk::{TruncationPolicy, VerticalLaw, VerticalWalkStats};
