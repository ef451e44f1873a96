//! Finite element simulation of the rotating Gross-Pitaevskii equation
//!
//! ```text
//! i u_t = -1/2 Lap u + V u - Omega L_z u + beta |u|^2 u,   L_z = -i (x d_y - y d_x)
//! ```
//!
//! on a rectangle with homogeneous Dirichlet conditions, discretized with
//! conforming bilinear or nonconforming rotated (EQ1rot) elements and a
//! Crank-Nicolson scheme that conserves the discrete mass and energy.

pub mod assembly;
pub mod elements;
pub mod groundstate;
pub mod harness;
pub mod mesh;
pub mod observables;
pub mod scheme;
pub mod sparse;

pub use assembly::{FeSpace, FormSet, PotentialSpec};
pub use elements::ElementKind;
pub use mesh::{RectDomain, StructuredMesh};
pub use scheme::{Field, SchemeConfig};
pub use sparse::C64;
