//! Fractional-order partial cancellation of non-minimum-phase (NMP) zeros.
//!
//! A plant `P(s) = (1 - s/z) P~(s)` with a right-half-plane zero at `z` is
//! preceded by the canceller
//!
//! ```text
//! C(s) = 1 / sum_{k=1..n} (s/z)^((k-1)/n)
//! ```
//!
//! so that the augmented plant carries `1 - (s/z)^(1/n)` instead of the
//! integer-order zero. The crate covers the whole pipeline:
//!
//! * [`folti`]: commensurate fractional-order transfer functions on the
//!   principal branch,
//! * [`freqresp`]: frequency responses, crossovers, phase/gain margins and
//!   the closed-form results for the partly-cancelled zero term,
//! * [`canceller`]: canceller construction and the gain/margin design
//!   procedures,
//! * [`ilt`]: numerical inverse Laplace transform (de Hoog) with an
//!   analytic half-order oracle,
//! * [`discrete`]: impulse-invariance FIR realization and zero-order-hold
//!   plant discretization,
//! * [`loopsim`]: sampled closed-loop simulation and step metrics.
//!
//! Grid evaluations, time-point inversions and design sweeps run on rayon
//! when the `parallel` feature (on by default) is enabled and fall back to
//! plain iterators otherwise. Results are identical either way.

pub mod canceller;
pub mod discrete;
pub mod error;
pub mod folti;
pub mod freqresp;
pub mod ilt;
pub mod loopsim;
mod par;
pub mod special;

pub use canceller::{CancellerDesign, DesignReport};
pub use discrete::{DiscretePlant, FirFilter};
pub use error::{Error, Result};
pub use folti::{FoTransferFunction, PlantParams, PlantSpec};
pub use freqresp::{FrequencySeries, MarginReport};
pub use ilt::TimeSamples;
pub use loopsim::{LoopConfig, StepMetrics, StepTrajectory};

pub use num_complex::Complex64;
