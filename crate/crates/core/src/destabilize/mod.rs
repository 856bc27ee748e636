//! Destabilization by small perturbations.
//!
//! [`millionschikov_perturbation`] rotates a carried solution of an ODE toward
//! the fastest-growing direction of each block with unit-time rotations of
//! speed at most `δ`. [`destabilize_timescale`] embeds a time-scale system
//! into an ODE, rotates there and projects the result back to the scale.
//! [`build_unstable_nonlinearity`] glues such linear perturbations into a
//! nonlinearity supported in thin tubes around escaping solutions.
//!
//! Only syndetic scales are handled; scales with unbounded gaps need a
//! different shift construction that is not implemented.

mod millionschikov;
mod pipeline;
mod schedule;
mod tube;

pub use millionschikov::*;
pub use pipeline::*;
pub use schedule::*;
pub use tube::*;
