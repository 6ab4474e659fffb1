//! Linear-threshold networks with a timescale parameter: fields, diagonal
//! stability certificates, equilibria, integrators and Lyapunov audits.

pub mod cert;
pub mod equilibrium;
pub mod error;
pub mod harness;
pub mod integrate;
pub mod lyapunov;
pub mod net;
mod serde_util;
pub mod tol;

pub use cert::{find_certificate, CertSearchConfig, CertificateSearch, DiagonalCertificate};
pub use equilibrium::{solve_by_enumeration, EquilibriumPoint, EquilibriumResult};
pub use error::{Error, Result};
pub use integrate::{integrate_hss, integrate_pds, integrate_tau_ltn, Trajectory};
pub use net::{NetworkSpec, Regime, RegimePattern, StatePolytope, Tau};
