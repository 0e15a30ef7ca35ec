//! Guaranteed moment and mass bounds for uncertain polynomial ODEs.
//!
//! Given a polynomial vector field, interval bounds on a few raw moments of
//! the state distribution at grid points in time, and semialgebraic support
//! information, this crate computes outer bounds on any queried moment (or
//! on the probability mass of a region of initial conditions) that hold for
//! *every* trajectory of measures consistent with the data. The machinery is
//! a hierarchy of semidefinite relaxations of an occupation-measure
//! formulation of the dynamics; infeasibility of a relaxation doubles as a
//! certificate that no consistent model exists.
//!
//! Modules:
//! - [`poly`]: sparse polynomials, monomial bases, Lie derivatives
//! - [`problem`]: the declarative problem description and its JSON form
//! - [`relaxation`]: assembly of the moment-matrix / Liouville constraints
//! - [`conic`]: solver-facing conic program, Clarabel backend, SDPA export
//! - [`oracle`]: high-accuracy reference answers by integration and sampling
//! - [`engine`]: query orchestration, bound extraction, result reporting

pub mod conic;
pub mod engine;
pub mod oracle;
pub mod poly;
pub mod problem;
pub mod relaxation;
