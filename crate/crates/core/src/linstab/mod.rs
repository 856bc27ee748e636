//! Linear dynamic equations `x^Δ = A(t)x` on a time scale.

mod certificate;
mod coefficient;
mod exponents;
mod stability;
mod transition;

pub use certificate::*;
pub use coefficient::*;
pub use exponents::*;
pub use stability::*;
pub use transition::*;
