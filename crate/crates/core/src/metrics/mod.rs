//! Scaling fits, lemma bound verifiers, the phase sweep and the benchmark
//! harness.

pub mod bench;
pub mod fit;
pub mod phase;
pub mod verify;

pub use bench::{bench, BenchRow, BenchTable, SlopeRow};
pub use fit::{fit_exponent, ScalingReport};
pub use phase::{phase_sweep, PhaseRow};
pub use verify::{BoundReport, BoundSummary, TrialRecord};
