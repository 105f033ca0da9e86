//! Equivalence class determination: instances, greedy edge-cutting and
//! baseline policies, adversarial families, exact oracles and the
//! behavioral-economics experiment harness.

pub mod adversarial;
pub mod econ;
pub mod error;
pub mod harness;
pub mod instance;
pub mod noisy;
pub mod objectives;
pub mod oracle;
pub mod policy;
pub mod prior;

pub use error::{EcdError, Result};
pub use instance::{EcdInstance, InstanceFile, Mode, PartialRealization, VersionSpace};
pub use policy::{Criterion, PolicySpec, PolicyTrace, TieBreak};
pub use prior::Prior;
