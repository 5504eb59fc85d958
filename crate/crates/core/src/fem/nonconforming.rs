//! Crouzeix-Raviart element: one DOF per interior edge midpoint, broken
//! bilinear form assembled element by element.
//!
//! The local basis on a triangle is `theta_k = 1 - 2 lambda_k`, where
//! `theta_k` belongs to the midpoint of the edge opposite vertex `k`;
//! boundary-edge DOFs are eliminated (zero midpoint values).

use rayon::prelude::*;

use crate::error::Result;
use crate::linalg::CooMatrix;
use crate::mesh::TriangleMesh;
use crate::quadrature::element_quadrature;

use super::{
    barycentric_gradients, CoefficientField, DiscreteEllipticPair, DiscreteField, DofMap,
    FemFlavor, ScalarField,
};

fn theta(bary: [f64; 3], k: usize) -> f64 {
    1.0 - 2.0 * bary[k]
}

fn local_matrices(
    mesh: &TriangleMesh,
    t: usize,
    coeffs: &CoefficientField,
) -> Result<([[f64; 3]; 3], [[f64; 3]; 3])> {
    let area = mesh.triangle_area(t);
    let grads = barycentric_gradients(mesh, t);
    let mut stiff = [[0.0; 3]; 3];
    let mut mass = [[0.0; 3]; 3];
    if coeffs.is_constant() {
        let [p0, ..] = mesh.triangle_vertices(t);
        let a = coeffs.check_sample(t, p0[0], p0[1])?;
        let c = coeffs.scalar_at(p0[0], p0[1]);
        for i in 0..3 {
            for j in 0..3 {
                // grad theta_k = -2 grad lambda_k
                let ag = [
                    a[0][0] * grads[j][0] + a[0][1] * grads[j][1],
                    a[1][0] * grads[j][0] + a[1][1] * grads[j][1],
                ];
                let m = if i == j { area / 3.0 } else { 0.0 };
                stiff[i][j] =
                    4.0 * area * (ag[0] * grads[i][0] + ag[1] * grads[i][1]) + c * m;
                mass[i][j] = m;
            }
        }
    } else {
        let rule = element_quadrature(4).expect("degree 4 supported");
        let [p0, p1, p2] = mesh.triangle_vertices(t);
        for (l, &w) in rule.points.iter().zip(&rule.weights) {
            let x = l[0] * p0[0] + l[1] * p1[0] + l[2] * p2[0];
            let y = l[0] * p0[1] + l[1] * p1[1] + l[2] * p2[1];
            let a = coeffs.check_sample(t, x, y)?;
            let c = coeffs.scalar_at(x, y);
            let wt = w * area;
            for i in 0..3 {
                for j in 0..3 {
                    let ag = [
                        -2.0 * (a[0][0] * grads[j][0] + a[0][1] * grads[j][1]),
                        -2.0 * (a[1][0] * grads[j][0] + a[1][1] * grads[j][1]),
                    ];
                    let gi = [-2.0 * grads[i][0], -2.0 * grads[i][1]];
                    stiff[i][j] += wt
                        * (ag[0] * gi[0] + ag[1] * gi[1] + c * theta(*l, i) * theta(*l, j));
                    mass[i][j] += wt * theta(*l, i) * theta(*l, j);
                }
            }
        }
    }
    Ok((stiff, mass))
}

/// Assemble the Crouzeix-Raviart pair over interior edges.
pub fn assemble_cr(mesh: &TriangleMesh, coeffs: &CoefficientField) -> Result<DiscreteEllipticPair> {
    let dof_map = DofMap::from_interior((0..mesh.n_edges()).map(|e| mesh.is_boundary_edge(e)));
    let n = dof_map.n_dofs();

    let locals: Vec<([[f64; 3]; 3], [[f64; 3]; 3])> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| local_matrices(mesh, t, coeffs))
        .collect::<Result<_>>()?;

    let mut stiff = CooMatrix::new(n, n);
    let mut mass = CooMatrix::new(n, n);
    for (t, (ls, lm)) in locals.iter().enumerate() {
        let edges = mesh.triangle_edges(t);
        for i in 0..3 {
            let Some(di) = dof_map.dof_of(edges[i]) else { continue };
            for j in 0..3 {
                let Some(dj) = dof_map.dof_of(edges[j]) else { continue };
                stiff.push(di, dj, ls[i][j]);
                mass.push(di, dj, lm[i][j]);
            }
        }
    }
    Ok(DiscreteEllipticPair::new(
        FemFlavor::CrouzeixRaviart,
        stiff.to_sparse(),
        mass.to_sparse(),
        dof_map,
    ))
}

/// Load vector `(f, theta_e)` by degree-4 broken quadrature.
pub fn load_vector(mesh: &TriangleMesh, pair: &DiscreteEllipticPair, f: &ScalarField) -> Vec<f64> {
    let rule = element_quadrature(4).expect("degree 4 supported");
    let dof_map = pair.dof_map();
    let mut b = vec![0.0; dof_map.n_dofs()];
    for t in 0..mesh.n_triangles() {
        let [p0, p1, p2] = mesh.triangle_vertices(t);
        let area = mesh.triangle_area(t);
        let edges = mesh.triangle_edges(t);
        for (l, &w) in rule.points.iter().zip(&rule.weights) {
            let x = l[0] * p0[0] + l[1] * p1[0] + l[2] * p2[0];
            let y = l[0] * p0[1] + l[1] * p1[1] + l[2] * p2[1];
            let fv = f.eval(x, y) * w * area;
            for i in 0..3 {
                if let Some(di) = dof_map.dof_of(edges[i]) {
                    b[di] += fv * theta(*l, i);
                }
            }
        }
    }
    b
}

/// L2 projection onto the Crouzeix-Raviart space.
pub fn l2_project(
    mesh: &TriangleMesh,
    pair: &DiscreteEllipticPair,
    f: &ScalarField,
) -> Result<Vec<f64>> {
    let b = load_vector(mesh, pair, f);
    Ok(pair.mass_solver()?.solve(&b))
}

/// Nonconforming `T_h f` for `f` given as an L2 function.
pub fn solution_operator(
    mesh: &TriangleMesh,
    pair: &DiscreteEllipticPair,
    f: &ScalarField,
) -> Result<Vec<f64>> {
    let b = load_vector(mesh, pair, f);
    pair.elliptic_solve(&b)
}

/// Element-wise view of a Crouzeix-Raviart coefficient vector.
pub struct CrSolution<'a> {
    dof_map: &'a DofMap,
    coeffs: &'a [f64],
}

impl<'a> CrSolution<'a> {
    pub fn new(pair: &'a DiscreteEllipticPair, coeffs: &'a [f64]) -> Self {
        assert_eq!(pair.flavor, FemFlavor::CrouzeixRaviart);
        assert_eq!(coeffs.len(), pair.n_dofs());
        Self { dof_map: pair.dof_map(), coeffs }
    }

    fn edge_value(&self, e: usize) -> f64 {
        self.dof_map.dof_of(e).map_or(0.0, |d| self.coeffs[d])
    }
}

impl DiscreteField for CrSolution<'_> {
    fn eval(&self, mesh: &TriangleMesh, t: usize, bary: [f64; 3]) -> f64 {
        let edges = mesh.triangle_edges(t);
        (0..3).map(|k| theta(bary, k) * self.edge_value(edges[k])).sum()
    }

    fn eval_grad(&self, mesh: &TriangleMesh, t: usize, bary: [f64; 3]) -> [f64; 2] {
        let _ = bary;
        let edges = mesh.triangle_edges(t);
        let grads = barycentric_gradients(mesh, t);
        let mut g = [0.0, 0.0];
        for k in 0..3 {
            let v = self.edge_value(edges[k]);
            g[0] -= 2.0 * v * grads[k][0];
            g[1] -= 2.0 * v * grads[k][1];
        }
        g
    }
}
