//! Multi-layer continuum deformation coordination for agent teams.
//!
//! A team is organised as a feed-forward hierarchy: primary leaders (boundary
//! leaders plus a core agent at the origin of the material frame) are placed
//! by per-leader scale factors `alpha` and a translation `s`, and every deeper
//! layer is a convex combination of the layer above it. A small quadratic
//! program picks `alpha` at each planning instant so the team's nominal
//! position tracks a reference trajectory; the safety module turns the
//! per-cell deformation spectra into a certificate of inter-agent separation.

pub mod eigen;
pub mod error;
pub mod geometry;
pub mod hierarchy;
pub mod io;
pub mod qp;
pub mod safety;
pub mod scenario;
pub mod sim;
pub mod team;
pub mod trajectory;

pub use error::{Error, Result};
pub use geometry::Vec3;
