//! Exact relax-and-round mechanisms that are truthful in expectation.
//!
//! The pipeline: build a relaxed objective `L` over a packing polytope `P`
//! from the reports ([`relaxation`]), maximize it exactly ([`lp`]), round the
//! optimum obliviously through a convex decomposition and a second thinning
//! step ([`rounding`]), and charge expected VCG payments ([`mechanism`]).
//! [`verify`] checks the guarantees by exhaustive enumeration with exact
//! rationals.

pub mod error;
pub mod instances;
pub mod io;
pub mod lp;
pub mod mechanism;
pub mod model;
pub mod rational;
pub mod relaxation;
pub mod rounding;
pub mod verify;

pub use error::{Error, Result};
pub use instances::{FamilySpec, KeepRule, NoMoneyKind, RoundingCase};
pub use lp::{FractionalPoint, Polytope};
pub use mechanism::{MechanismOutcome, PaymentRule, RangeDescriptor};
pub use model::{Allocation, Bundle, Family, FamilyTag, Instance, Valuation, ValuationProfile};
pub use rational::Rational;
pub use relaxation::{ConcaveCurve, RelaxedObjective};
pub use rounding::{AllocationDistribution, ConvexDecomposition, KeepProbabilities};
pub use verify::VerificationReport;
