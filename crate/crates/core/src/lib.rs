//! Finite element methods and convergence experiments for time-fractional
//! diffusion problems: conforming P1, Crouzeix-Raviart and mixed
//! Raviart-Thomas discretizations driven by exact spectral propagation or
//! L1 time stepping on graded grids.

pub mod convergence;
pub mod error;
pub mod evolution;
pub mod fem;
pub mod fractional;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod report;
pub mod special;

pub use error::{Error, Result};
pub use mesh::{build_structured_mesh, DomainKind, DomainSpec, TriangleMesh};
pub use quadrature::{element_quadrature, QuadratureRule};

/// Route the dense kernels through rayon. Call once at process start;
/// safe to call repeatedly.
pub fn init_parallelism() {
    faer::set_global_parallelism(faer::Par::rayon(0));
}
