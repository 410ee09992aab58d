//! Stabilization of continuous-time linear plants whose state feedback is
//! sparsified and sensed by a compressive sensing device, by switching
//! among a class of block sparsifiers.
//!
//! The modules build on each other bottom-up: [`linalg`] provides the
//! dense numerics, [`sparsify`] the sparsifier class and `Σ`, [`csd`] the
//! sensing device, [`switching`] the synthesis and switching law, and
//! [`sim`] the closed-loop integration. [`io`] holds the JSON schemas used
//! by the `csdswitch` binary.

pub mod csd;
pub mod error;
pub mod io;
pub mod linalg;
pub mod sim;
pub mod sparsify;
pub mod switching;

pub use error::{Error, Result};
pub use linalg::{LinearSystem, Matrix, Spectrum, Vector};
pub use sim::{integrate, lyapunov_trace, SimConfig, Trajectory};
pub use sparsify::SparsifierClass;
pub use switching::{select_mode, GainSpec, SwitchingDesign, SynthesisOptions};
