//! Transitions, robust cycles, tangent directions and the tangency pipeline.

pub mod lifted;
pub mod tangent;
pub mod transition;

pub use tangent::{detect_tangent_directions, tangency_codimension, TangentDirectionReport};
pub use transition::{find_transition, TransitionSearch, TransitionSource, TransitionWitness};
pub mod scenario;
pub use scenario::{build_tangency_scenario, verify_tangency_scenario, TangencyCertificate};
pub mod cycle;
pub mod probe;
pub use cycle::{build_cycle_scenario, verify_cycle, CycleCertificate};
pub use probe::{robustness_probe, ProbeReport, ProbeTarget};
