//! Finite element discretizations of the elliptic operator
//! `-div(A grad u) + c u` with homogeneous Dirichlet data: conforming P1,
//! Crouzeix-Raviart, and mixed Raviart-Thomas flavors.

pub mod conforming;
pub mod mixed;
pub mod nonconforming;

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::linalg::{generalized_symmetric_eigen, ColMatrix, SparseMatrix, SpdSolver};
use crate::mesh::TriangleMesh;

/// Default cap on the dense generalized eigensolver.
pub const DENSE_EIGEN_CAP: usize = 5000;

type MatrixFn = Arc<dyn Fn(f64, f64) -> [[f64; 2]; 2] + Send + Sync>;
type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type GradientFn = Arc<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>;

/// Coefficients of the elliptic operator: a symmetric positive definite
/// matrix field `A` and a nonnegative scalar field `c`.
#[derive(Clone)]
pub struct CoefficientField {
    matrix_a: MatrixFn,
    scalar_c: ScalarFn,
    constant: bool,
}

impl CoefficientField {
    /// The Laplacian: `A = I`, `c = 0`.
    pub fn laplace() -> Self {
        Self {
            matrix_a: Arc::new(|_, _| [[1.0, 0.0], [0.0, 1.0]]),
            scalar_c: Arc::new(|_, _| 0.0),
            constant: true,
        }
    }

    pub fn constant(a: [[f64; 2]; 2], c: f64) -> Self {
        Self {
            matrix_a: Arc::new(move |_, _| a),
            scalar_c: Arc::new(move |_, _| c),
            constant: true,
        }
    }

    pub fn variable(
        a: impl Fn(f64, f64) -> [[f64; 2]; 2] + Send + Sync + 'static,
        c: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { matrix_a: Arc::new(a), scalar_c: Arc::new(c), constant: false }
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn matrix_at(&self, x: f64, y: f64) -> [[f64; 2]; 2] {
        (self.matrix_a)(x, y)
    }

    pub fn scalar_at(&self, x: f64, y: f64) -> f64 {
        (self.scalar_c)(x, y)
    }

    /// Validate the coefficient sample used during assembly.
    pub(crate) fn check_sample(&self, element: usize, x: f64, y: f64) -> Result<[[f64; 2]; 2]> {
        let a = self.matrix_at(x, y);
        let sym_err = (a[0][1] - a[1][0]).abs();
        let trace = a[0][0] + a[1][1];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        // symmetric 2x2 is positive definite iff trace > 0 and det > 0
        if sym_err > 1e-12 * (1.0 + trace.abs()) || a[0][0] <= 0.0 || det <= 0.0 {
            return Err(Error::Assembly {
                element,
                reason: format!("coefficient matrix not symmetric positive definite at ({x}, {y})"),
            });
        }
        if self.scalar_at(x, y) < 0.0 {
            return Err(Error::Assembly {
                element,
                reason: format!("scalar coefficient negative at ({x}, {y})"),
            });
        }
        Ok(a)
    }
}

/// Scalar data function, optionally with an analytic gradient (required by
/// the Ritz projection and by gradient error norms).
#[derive(Clone)]
pub struct ScalarField {
    value: ScalarFn,
    gradient: Option<GradientFn>,
}

impl ScalarField {
    pub fn new(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { value: Arc::new(f), gradient: None }
    }

    pub fn with_gradient(
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        grad: impl Fn(f64, f64) -> [f64; 2] + Send + Sync + 'static,
    ) -> Self {
        Self { value: Arc::new(f), gradient: Some(Arc::new(grad)) }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        (self.value)(x, y)
    }

    pub fn grad(&self, x: f64, y: f64) -> Result<[f64; 2]> {
        match &self.gradient {
            Some(g) => Ok(g(x, y)),
            None => Err(Error::Precondition("scalar field has no gradient attached".into())),
        }
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FemFlavor {
    ConformingP1,
    CrouzeixRaviart,
}

/// Maps mesh entities (vertices for P1, edges for Crouzeix-Raviart) to
/// interior degrees of freedom; boundary entities carry no DOF.
#[derive(Debug, Clone)]
pub struct DofMap {
    entity_to_dof: Vec<Option<usize>>,
    dof_to_entity: Vec<usize>,
}

impl DofMap {
    pub(crate) fn from_interior<I: Iterator<Item = bool>>(flags: I) -> Self {
        let mut entity_to_dof = Vec::new();
        let mut dof_to_entity = Vec::new();
        for (entity, is_boundary) in flags.enumerate() {
            if is_boundary {
                entity_to_dof.push(None);
            } else {
                entity_to_dof.push(Some(dof_to_entity.len()));
                dof_to_entity.push(entity);
            }
        }
        Self { entity_to_dof, dof_to_entity }
    }

    pub fn n_dofs(&self) -> usize {
        self.dof_to_entity.len()
    }

    pub fn dof_of(&self, entity: usize) -> Option<usize> {
        self.entity_to_dof[entity]
    }

    pub fn entity_of(&self, dof: usize) -> usize {
        self.dof_to_entity[dof]
    }
}

/// Assembled mass/stiffness pair on the interior DOFs of one FEM flavor.
pub struct DiscreteEllipticPair {
    pub flavor: FemFlavor,
    stiffness: SparseMatrix,
    mass: SparseMatrix,
    dof_map: DofMap,
    stiffness_solver: OnceLock<SpdSolver>,
    mass_solver: OnceLock<SpdSolver>,
}

impl DiscreteEllipticPair {
    pub(crate) fn new(
        flavor: FemFlavor,
        stiffness: SparseMatrix,
        mass: SparseMatrix,
        dof_map: DofMap,
    ) -> Self {
        Self {
            flavor,
            stiffness,
            mass,
            dof_map,
            stiffness_solver: OnceLock::new(),
            mass_solver: OnceLock::new(),
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.dof_map.n_dofs()
    }

    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    pub fn dof_map(&self) -> &DofMap {
        &self.dof_map
    }

    pub fn stiffness_solver(&self) -> Result<&SpdSolver> {
        if let Some(s) = self.stiffness_solver.get() {
            return Ok(s);
        }
        let solver = SpdSolver::new(&self.stiffness)?;
        Ok(self.stiffness_solver.get_or_init(|| solver))
    }

    pub fn mass_solver(&self) -> Result<&SpdSolver> {
        if let Some(s) = self.mass_solver.get() {
            return Ok(s);
        }
        let solver = SpdSolver::new(&self.mass)?;
        Ok(self.mass_solver.get_or_init(|| solver))
    }

    /// `T_h` applied to a coefficient vector already living in the discrete
    /// space: solves `S u = M f`.
    pub fn apply_th(&self, f_coeffs: &[f64]) -> Result<Vec<f64>> {
        let rhs = self.mass.matvec(f_coeffs);
        Ok(self.stiffness_solver()?.solve(&rhs))
    }

    /// Solve `S u = load` for an already-assembled load vector.
    pub fn elliptic_solve(&self, load: &[f64]) -> Result<Vec<f64>> {
        if load.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("load vector contains non-finite entries".into()));
        }
        Ok(self.stiffness_solver()?.solve(load))
    }

    /// Full generalized eigendecomposition `S v = lambda M v`; refuses above
    /// the dense cap.
    pub fn eigendecompose(&self, cap: usize) -> Result<SpectralBasis> {
        let n = self.n_dofs();
        if n > cap {
            return Err(Error::EigenCapExceeded { n_dofs: n, cap });
        }
        let (eigenvalues, eigenvectors) =
            generalized_symmetric_eigen(&self.stiffness.to_dense(), &self.mass.to_dense())?;
        Ok(SpectralBasis { eigenvalues, eigenvectors })
    }

    /// Mass inner product of two coefficient vectors.
    pub fn mass_inner(&self, x: &[f64], y: &[f64]) -> f64 {
        crate::linalg::dot(x, &self.mass.matvec(y))
    }

    /// Mass norm of a coefficient vector.
    pub fn mass_norm(&self, x: &[f64]) -> f64 {
        self.mass_inner(x, x).max(0.0).sqrt()
    }
}

/// Discrete eigenpairs of the elliptic operator, mass-orthonormal.
pub struct SpectralBasis {
    eigenvalues: Vec<f64>,
    eigenvectors: ColMatrix,
}

impl SpectralBasis {
    pub(crate) fn from_parts(eigenvalues: Vec<f64>, eigenvectors: ColMatrix) -> Self {
        Self { eigenvalues, eigenvectors }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalue(&self, j: usize) -> f64 {
        self.eigenvalues[j]
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvector(&self, j: usize) -> &[f64] {
        self.eigenvectors.col(j)
    }

    /// Modal coefficients `(v, v_j)_M` of a coefficient vector.
    pub fn modal_coefficients(&self, pair: &DiscreteEllipticPair, v: &[f64]) -> Vec<f64> {
        let mv = pair.mass().matvec(v);
        (0..self.len()).map(|j| crate::linalg::dot(self.eigenvector(j), &mv)).collect()
    }

    /// Reconstruct a coefficient vector from modal coefficients.
    pub fn synthesize(&self, modal: &[f64]) -> Vec<f64> {
        let n = self.eigenvectors.nrows();
        let mut out = vec![0.0; n];
        for (j, &c) in modal.iter().enumerate() {
            if c != 0.0 {
                crate::linalg::axpy(c, self.eigenvector(j), &mut out);
            }
        }
        out
    }
}

/// Per-element evaluation interface shared by the error norms.
pub trait DiscreteField {
    /// Value at barycentric position `bary` of triangle `t`.
    fn eval(&self, mesh: &TriangleMesh, t: usize, bary: [f64; 3]) -> f64;
    /// Gradient at barycentric position `bary` of triangle `t`.
    fn eval_grad(&self, mesh: &TriangleMesh, t: usize, bary: [f64; 3]) -> [f64; 2];
}

/// Gradients of the three barycentric coordinates on triangle `t`.
pub(crate) fn barycentric_gradients(mesh: &TriangleMesh, t: usize) -> [[f64; 2]; 3] {
    let [p0, p1, p2] = mesh.triangle_vertices(t);
    let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    let g1 = [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det];
    let g2 = [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det];
    let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
    [g0, g1, g2]
}
