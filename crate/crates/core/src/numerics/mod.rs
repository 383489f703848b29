//! Small numerical building blocks shared by the physics modules.

pub mod quad;
pub mod roots;
pub mod skyline;

pub use quad::{gauss_kronrod, integrate, Integral};
pub use roots::{bisect, safeguarded_newton, RootError};
