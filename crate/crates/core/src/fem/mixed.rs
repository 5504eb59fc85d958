//! Mixed Raviart-Thomas discretization of `(u, sigma = grad u)` for the
//! Laplacian: RT0/P0 and RT1/discontinuous-P1 pairs.
//!
//! Flux basis functions are built per element directly in physical
//! coordinates by inverting the degree-of-freedom matrix on a monomial
//! basis. Edge DOFs are normal moments against 1 (and the edge-linear
//! polynomial for RT1) with a globally fixed edge normal: it points away
//! from the lower-index adjacent triangle (outward on the boundary), and
//! the edge parameter runs from the lower to the higher vertex index.
//! Sharing those functionals across neighbouring elements makes the normal
//! component continuous by construction.

use faer::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dot, CooMatrix, LuSolver, SparseMatrix, SpdSolver};
use crate::mesh::TriangleMesh;
use crate::quadrature::{element_quadrature, gauss_legendre_01};

use super::{DiscreteField, ScalarField};

use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtSpaceIndex {
    Rt0,
    Rt1,
}

impl RtSpaceIndex {
    pub fn flux_dofs_per_edge(self) -> usize {
        match self {
            RtSpaceIndex::Rt0 => 1,
            RtSpaceIndex::Rt1 => 2,
        }
    }

    pub fn flux_dofs_interior(self) -> usize {
        match self {
            RtSpaceIndex::Rt0 => 0,
            RtSpaceIndex::Rt1 => 2,
        }
    }

    pub fn scalar_dofs_per_element(self) -> usize {
        match self {
            RtSpaceIndex::Rt0 => 1,
            RtSpaceIndex::Rt1 => 3,
        }
    }

    fn local_flux_dofs(self) -> usize {
        3 * self.flux_dofs_per_edge() + self.flux_dofs_interior()
    }
}

/// Monomial basis of RT_l(K) in element-local coordinates
/// `(xh, yh) = ((x, y) - center) / scale`.
#[derive(Debug, Clone, Copy)]
enum RtMonomial {
    ConstX,
    ConstY,
    /// position field (xh, yh); the RT0 bubble
    Pos,
    XinX,
    XinY,
    YinX,
    YinY,
    XTimesPos,
    YTimesPos,
}

const RT0_MONOMIALS: [RtMonomial; 3] = [RtMonomial::ConstX, RtMonomial::ConstY, RtMonomial::Pos];
const RT1_MONOMIALS: [RtMonomial; 8] = [
    RtMonomial::ConstX,
    RtMonomial::ConstY,
    RtMonomial::XinX,
    RtMonomial::XinY,
    RtMonomial::YinX,
    RtMonomial::YinY,
    RtMonomial::XTimesPos,
    RtMonomial::YTimesPos,
];

impl RtMonomial {
    fn eval(self, xh: f64, yh: f64) -> [f64; 2] {
        match self {
            RtMonomial::ConstX => [1.0, 0.0],
            RtMonomial::ConstY => [0.0, 1.0],
            RtMonomial::Pos => [xh, yh],
            RtMonomial::XinX => [xh, 0.0],
            RtMonomial::XinY => [0.0, xh],
            RtMonomial::YinX => [yh, 0.0],
            RtMonomial::YinY => [0.0, yh],
            RtMonomial::XTimesPos => [xh * xh, xh * yh],
            RtMonomial::YTimesPos => [xh * yh, yh * yh],
        }
    }

    /// Divergence with respect to physical coordinates, divided by 1/scale.
    fn div(self, xh: f64, yh: f64) -> f64 {
        match self {
            RtMonomial::ConstX | RtMonomial::ConstY => 0.0,
            RtMonomial::Pos => 2.0,
            RtMonomial::XinX => 1.0,
            RtMonomial::XinY => 0.0,
            RtMonomial::YinX => 0.0,
            RtMonomial::YinY => 1.0,
            RtMonomial::XTimesPos => 3.0 * xh,
            RtMonomial::YTimesPos => 3.0 * yh,
        }
    }
}

/// Per-element flux basis: coefficient rows over the monomial list.
#[derive(Debug, Clone)]
struct LocalRtBasis {
    monomials: &'static [RtMonomial],
    /// coeffs[b * n_mono + m]
    coeffs: Vec<f64>,
    center: [f64; 2],
    scale: f64,
    n_dofs: usize,
}

impl LocalRtBasis {
    fn eval(&self, b: usize, x: f64, y: f64) -> [f64; 2] {
        let xh = (x - self.center[0]) / self.scale;
        let yh = (y - self.center[1]) / self.scale;
        let n = self.monomials.len();
        let mut out = [0.0, 0.0];
        for (m, mono) in self.monomials.iter().enumerate() {
            let c = self.coeffs[b * n + m];
            if c != 0.0 {
                let v = mono.eval(xh, yh);
                out[0] += c * v[0];
                out[1] += c * v[1];
            }
        }
        out
    }

    fn div(&self, b: usize, x: f64, y: f64) -> f64 {
        let xh = (x - self.center[0]) / self.scale;
        let yh = (y - self.center[1]) / self.scale;
        let n = self.monomials.len();
        let mut out = 0.0;
        for (m, mono) in self.monomials.iter().enumerate() {
            let c = self.coeffs[b * n + m];
            if c != 0.0 {
                out += c * mono.div(xh, yh) / self.scale;
            }
        }
        out
    }
}

/// Globally oriented unit normal of edge `e`: away from the lower-index
/// adjacent triangle.
fn edge_normal(mesh: &TriangleMesh, e: usize) -> [f64; 2] {
    let edge = mesh.edge(e);
    let a = mesh.vertex(edge.vertices[0]);
    let b = mesh.vertex(edge.vertices[1]);
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let tangent = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
    let mut normal = [tangent[1], -tangent[0]];
    // orient away from the first adjacent triangle
    let k1 = edge.triangles.0;
    let opp = mesh
        .triangle(k1)
        .into_iter()
        .find(|v| !edge.vertices.contains(v))
        .expect("triangle has a vertex off the edge");
    let p = mesh.vertex(opp);
    let to_opp = [p[0] - edge.midpoint[0], p[1] - edge.midpoint[1]];
    if normal[0] * to_opp[0] + normal[1] * to_opp[1] > 0.0 {
        normal = [-normal[0], -normal[1]];
    }
    normal
}

fn edge_length(mesh: &TriangleMesh, e: usize) -> f64 {
    let edge = mesh.edge(e);
    let a = mesh.vertex(edge.vertices[0]);
    let b = mesh.vertex(edge.vertices[1]);
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
}

/// Build the local flux basis of triangle `t` dual to the global DOF
/// functionals (edge moments first, then interior moments).
fn build_local_basis(mesh: &TriangleMesh, t: usize, index: RtSpaceIndex) -> LocalRtBasis {
    let monomials: &'static [RtMonomial] = match index {
        RtSpaceIndex::Rt0 => &RT0_MONOMIALS,
        RtSpaceIndex::Rt1 => &RT1_MONOMIALS,
    };
    let n = monomials.len();
    let [p0, p1, p2] = mesh.triangle_vertices(t);
    let center = [(p0[0] + p1[0] + p2[0]) / 3.0, (p0[1] + p1[1] + p2[1]) / 3.0];
    let scale = mesh
        .triangle_vertices(t)
        .iter()
        .map(|p| ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt())
        .fold(0.0, f64::max);

    let gauss = gauss_legendre_01(4).expect("4-point rule");
    let area_rule = element_quadrature(4).expect("degree 4");

    // dof x monomial matrix
    let mut dof_matrix = Mat::<f64>::zeros(n, n);
    let per_edge = index.flux_dofs_per_edge();
    let edges = mesh.triangle_edges(t);
    for (k, &e) in edges.iter().enumerate() {
        let edge = mesh.edge(e);
        let a = mesh.vertex(edge.vertices[0]);
        let b = mesh.vertex(edge.vertices[1]);
        let normal = edge_normal(mesh, e);
        let len = edge_length(mesh, e);
        for (m, mono) in monomials.iter().enumerate() {
            let mut m0 = 0.0;
            let mut m1 = 0.0;
            for &(s, w) in &gauss {
                let x = a[0] + s * (b[0] - a[0]);
                let y = a[1] + s * (b[1] - a[1]);
                let v = mono.eval((x - center[0]) / scale, (y - center[1]) / scale);
                let vn = v[0] * normal[0] + v[1] * normal[1];
                m0 += w * len * vn;
                m1 += w * len * vn * (2.0 * s - 1.0);
            }
            dof_matrix[(per_edge * k, m)] = m0;
            if per_edge == 2 {
                dof_matrix[(per_edge * k + 1, m)] = m1;
            }
        }
    }
    if index.flux_dofs_interior() == 2 {
        let area = mesh.triangle_area(t);
        for (m, mono) in monomials.iter().enumerate() {
            let mut ix = 0.0;
            let mut iy = 0.0;
            for (l, &w) in area_rule.points.iter().zip(&area_rule.weights) {
                let x = l[0] * p0[0] + l[1] * p1[0] + l[2] * p2[0];
                let y = l[0] * p0[1] + l[1] * p1[1] + l[2] * p2[1];
                let v = mono.eval((x - center[0]) / scale, (y - center[1]) / scale);
                ix += w * area * v[0];
                iy += w * area * v[1];
            }
            dof_matrix[(6, m)] = ix;
            dof_matrix[(7, m)] = iy;
        }
    }

    // invert: rows of the inverse transpose give the dual-basis coefficients
    let lu = dof_matrix.partial_piv_lu();
    let inv = lu.solve(Mat::<f64>::identity(n, n));
    let mut coeffs = vec![0.0; n * n];
    for b in 0..n {
        for m in 0..n {
            // basis b satisfies dof_i(basis_b) = delta_ib
            coeffs[b * n + m] = inv[(m, b)];
        }
    }
    LocalRtBasis { monomials, coeffs, center, scale, n_dofs: n }
}

/// Global DOF layout of the flux space.
#[derive(Debug, Clone)]
pub struct FluxDofLayout {
    pub index: RtSpaceIndex,
    pub n_edges: usize,
    pub n_triangles: usize,
}

impl FluxDofLayout {
    pub fn n_flux_dofs(&self) -> usize {
        self.index.flux_dofs_per_edge() * self.n_edges
            + self.index.flux_dofs_interior() * self.n_triangles
    }

    pub fn edge_dof(&self, e: usize, moment: usize) -> usize {
        debug_assert!(moment < self.index.flux_dofs_per_edge());
        self.index.flux_dofs_per_edge() * e + moment
    }

    pub fn interior_dof(&self, t: usize, comp: usize) -> usize {
        debug_assert!(comp < self.index.flux_dofs_interior());
        self.index.flux_dofs_per_edge() * self.n_edges
            + self.index.flux_dofs_interior() * t
            + comp
    }

    /// Global flux DOFs of element `t` in local order.
    fn element_dofs(&self, mesh: &TriangleMesh, t: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.index.local_flux_dofs());
        for &e in &mesh.triangle_edges(t) {
            for m in 0..self.index.flux_dofs_per_edge() {
                out.push(self.edge_dof(e, m));
            }
        }
        for c in 0..self.index.flux_dofs_interior() {
            out.push(self.interior_dof(t, c));
        }
        out
    }

    pub fn n_scalar_dofs(&self) -> usize {
        self.index.scalar_dofs_per_element() * self.n_triangles
    }

    pub fn scalar_dof(&self, t: usize, i: usize) -> usize {
        self.index.scalar_dofs_per_element() * t + i
    }
}

/// Assembled blocks of the mixed system for `-div grad u = f`.
pub struct MixedSystem {
    pub index: RtSpaceIndex,
    layout: FluxDofLayout,
    /// flux mass (sigma_j, sigma_i)
    d_block: SparseMatrix,
    /// divergence coupling (div sigma_j, v_i): n_scalar x n_flux
    g_block: SparseMatrix,
    /// scalar mass, block diagonal
    scalar_mass: SparseMatrix,
    /// G^T A^{-1} G, sharing the sparsity pattern of `d_block`
    k_block: SparseMatrix,
    local_bases: Vec<LocalRtBasis>,
    saddle: OnceLock<LuSolver>,
    d_solver: OnceLock<SpdSolver>,
    scalar_mass_solver: OnceLock<SpdSolver>,
}

/// Scalar P0/P1dg basis value of local function `i` at barycentric `l`.
fn scalar_basis(index: RtSpaceIndex, i: usize, l: [f64; 3]) -> f64 {
    match index {
        RtSpaceIndex::Rt0 => 1.0,
        RtSpaceIndex::Rt1 => l[i],
    }
}

/// Assemble the mixed blocks; integrands are polynomial, so the fixed
/// degree-4 rule integrates them exactly.
pub fn assemble_mixed(mesh: &TriangleMesh, index: RtSpaceIndex) -> Result<MixedSystem> {
    let layout =
        FluxDofLayout { index, n_edges: mesh.n_edges(), n_triangles: mesh.n_triangles() };
    let nf = layout.n_flux_dofs();
    let ns = layout.n_scalar_dofs();
    let nloc = index.local_flux_dofs();
    let sloc = index.scalar_dofs_per_element();
    let rule = element_quadrature(4).expect("degree 4");

    let mut d = CooMatrix::new(nf, nf);
    let mut k = CooMatrix::new(nf, nf);
    let mut g = CooMatrix::new(ns, nf);
    let mut a = CooMatrix::new(ns, ns);
    let mut bases = Vec::with_capacity(mesh.n_triangles());

    for t in 0..mesh.n_triangles() {
        let basis = build_local_basis(mesh, t, index);
        let dofs = layout.element_dofs(mesh, t);
        let [p0, p1, p2] = mesh.triangle_vertices(t);
        let area = mesh.triangle_area(t);

        let mut d_loc = vec![0.0; nloc * nloc];
        let mut g_loc = vec![0.0; sloc * nloc];
        let mut a_loc = vec![0.0; sloc * sloc];
        for (l, &w) in rule.points.iter().zip(&rule.weights) {
            let x = l[0] * p0[0] + l[1] * p1[0] + l[2] * p2[0];
            let y = l[0] * p0[1] + l[1] * p1[1] + l[2] * p2[1];
            let wt = w * area;
            let vals: Vec<[f64; 2]> = (0..nloc).map(|b| basis.eval(b, x, y)).collect();
            let divs: Vec<f64> = (0..nloc).map(|b| basis.div(b, x, y)).collect();
            for i in 0..nloc {
                for j in 0..nloc {
                    d_loc[i * nloc + j] +=
                        wt * (vals[i][0] * vals[j][0] + vals[i][1] * vals[j][1]);
                }
            }
            for i in 0..sloc {
                let si = scalar_basis(index, i, *l);
                for j in 0..nloc {
                    g_loc[i * nloc + j] += wt * divs[j] * si;
                }
                for j in 0..sloc {
                    a_loc[i * sloc + j] += wt * si * scalar_basis(index, j, *l);
                }
            }
        }

        // K_loc = G_loc^T A_loc^{-1} G_loc keeps the saddle system reducible
        // to a flux-only SPD solve during time stepping
        let mut a_mat = Mat::<f64>::zeros(sloc, sloc);
        for i in 0..sloc {
            for j in 0..sloc {
                a_mat[(i, j)] = a_loc[i * sloc + j];
            }
        }
        let mut g_mat = Mat::<f64>::zeros(sloc, nloc);
        for i in 0..sloc {
            for j in 0..nloc {
                g_mat[(i, j)] = g_loc[i * nloc + j];
            }
        }
        let a_llt = a_mat
            .llt(faer::Side::Lower)
            .map_err(|_| Error::Assembly { element: t, reason: "scalar mass not SPD".into() })?;
        let ainv_g = a_llt.solve(&g_mat);
        let k_mat = g_mat.transpose() * &ainv_g;

        for i in 0..nloc {
            for j in 0..nloc {
                d.push(dofs[i], dofs[j], d_loc[i * nloc + j]);
                k.push(dofs[i], dofs[j], k_mat[(i, j)]);
            }
        }
        for i in 0..sloc {
            let gi = layout.scalar_dof(t, i);
            for j in 0..nloc {
                g.push(gi, dofs[j], g_loc[i * nloc + j]);
            }
            for j in 0..sloc {
                a.push(gi, layout.scalar_dof(t, j), a_loc[i * sloc + j]);
            }
        }
        bases.push(basis);
    }

    Ok(MixedSystem {
        index,
        layout,
        d_block: d.to_sparse(),
        g_block: g.to_sparse(),
        scalar_mass: a.to_sparse(),
        k_block: k.to_sparse(),
        local_bases: bases,
        saddle: OnceLock::new(),
        d_solver: OnceLock::new(),
        scalar_mass_solver: OnceLock::new(),
    })
}

impl MixedSystem {
    pub fn layout(&self) -> &FluxDofLayout {
        &self.layout
    }

    pub fn n_flux_dofs(&self) -> usize {
        self.layout.n_flux_dofs()
    }

    pub fn n_scalar_dofs(&self) -> usize {
        self.layout.n_scalar_dofs()
    }

    pub fn flux_mass(&self) -> &SparseMatrix {
        &self.d_block
    }

    pub fn div_coupling(&self) -> &SparseMatrix {
        &self.g_block
    }

    pub fn scalar_mass(&self) -> &SparseMatrix {
        &self.scalar_mass
    }

    /// `G^T A^{-1} G` on the flux space (same pattern as the flux mass).
    pub fn grad_penalty(&self) -> &SparseMatrix {
        &self.k_block
    }

    pub fn flux_mass_solver(&self) -> Result<&SpdSolver> {
        if let Some(s) = self.d_solver.get() {
            return Ok(s);
        }
        let s = SpdSolver::new(&self.d_block)?;
        Ok(self.d_solver.get_or_init(|| s))
    }

    pub fn scalar_mass_solver(&self) -> Result<&SpdSolver> {
        if let Some(s) = self.scalar_mass_solver.get() {
            return Ok(s);
        }
        let s = SpdSolver::new(&self.scalar_mass)?;
        Ok(self.scalar_mass_solver.get_or_init(|| s))
    }

    /// Saddle matrix [[D, G^T], [G, 0]] with flux DOFs first.
    fn saddle_solver(&self) -> Result<&LuSolver> {
        if let Some(s) = self.saddle.get() {
            return Ok(s);
        }
        let nf = self.n_flux_dofs();
        let ns = self.n_scalar_dofs();
        let mut coo = CooMatrix::new(nf + ns, nf + ns);
        for (r, c, v) in self.d_block.entries() {
            coo.push(r, c, v);
        }
        for (r, c, v) in self.g_block.entries() {
            coo.push(nf + r, c, v); // G
            coo.push(c, nf + r, v); // G^T
        }
        let solver = LuSolver::new(&coo.to_sparse())?;
        Ok(self.saddle.get_or_init(|| solver))
    }

    /// Solve the mixed elliptic system for a scalar load vector `F`:
    /// `(sigma, w) + (u, div w) = 0`, `-(div sigma, v) = (f, v)`.
    /// Returns `(u, sigma)`.
    pub fn elliptic_solve_load(&self, load: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let nf = self.n_flux_dofs();
        let ns = self.n_scalar_dofs();
        assert_eq!(load.len(), ns);
        let mut rhs = vec![0.0; nf + ns];
        for i in 0..ns {
            rhs[nf + i] = -load[i];
        }
        let sol = self.saddle_solver()?.solve(&rhs);
        let sigma = sol[..nf].to_vec();
        let u = sol[nf..].to_vec();
        self.check_elliptic_residual(&u, &sigma, load)?;
        Ok((u, sigma))
    }

    fn check_elliptic_residual(&self, u: &[f64], sigma: &[f64], load: &[f64]) -> Result<()> {
        // block residuals, relative per block
        let mut r1 = self.d_block.matvec(sigma);
        let gtu = {
            // G^T u
            let mut out = vec![0.0; self.n_flux_dofs()];
            for (r, c, v) in self.g_block.entries() {
                out[c] += v * u[r];
            }
            out
        };
        for (a, b) in r1.iter_mut().zip(&gtu) {
            *a += b;
        }
        let scale1 = norm(&gtu).max(norm(sigma)).max(1e-300);
        let mut r2 = self.g_block.matvec(sigma);
        for (a, b) in r2.iter_mut().zip(load) {
            *a += b;
        }
        let scale2 = norm(load).max(1e-300);
        if norm(&r1) > 1e-11 * scale1 || norm(&r2) > 1e-11 * scale2 {
            return Err(Error::Numerical(format!(
                "mixed solve residuals {:.2e}, {:.2e} exceed 1e-11",
                norm(&r1) / scale1,
                norm(&r2) / scale2
            )));
        }
        Ok(())
    }

    /// `(T_h f, S_h f)` for an L2 function `f`.
    pub fn solution_operator(
        &self,
        mesh: &TriangleMesh,
        f: &ScalarField,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let load = self.scalar_load(mesh, f);
        self.elliptic_solve_load(&load)
    }

    /// Scalar load vector `(f, v_i)` by degree-6 quadrature.
    pub fn scalar_load(&self, mesh: &TriangleMesh, f: &ScalarField) -> Vec<f64> {
        let rule = element_quadrature(6).expect("degree 6");
        let sloc = self.index.scalar_dofs_per_element();
        let mut b = vec![0.0; self.n_scalar_dofs()];
        for t in 0..mesh.n_triangles() {
            let [p0, p1, p2] = mesh.triangle_vertices(t);
            let area = mesh.triangle_area(t);
            for (l, &w) in rule.points.iter().zip(&rule.weights) {
                let x = l[0] * p0[0] + l[1] * p1[0] + l[2] * p2[0];
                let y = l[0] * p0[1] + l[1] * p1[1] + l[2] * p2[1];
                let fv = f.eval(x, y) * w * area;
                for i in 0..sloc {
                    b[self.layout.scalar_dof(t, i)] += fv * scalar_basis(self.index, i, *l);
                }
            }
        }
        b
    }

    /// Flux recovered from a scalar coefficient vector through
    /// `(sigma, w) + (u, div w) = 0`, i.e. `sigma = -D^{-1} G^T u`.
    pub fn flux_from_scalar(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut gtu = vec![0.0; self.n_flux_dofs()];
        for (r, c, v) in self.g_block.entries() {
            gtu[c] += v * u[r];
        }
        for v in gtu.iter_mut() {
            *v = -*v;
        }
        Ok(self.flux_mass_solver()?.solve(&gtu))
    }

    /// Residual of the constraint `(sigma, w) + (u, div w) = 0` relative to
    /// the solution magnitude.
    pub fn constraint_residual(&self, u: &[f64], sigma: &[f64]) -> f64 {
        let mut res = self.d_block.matvec(sigma);
        for (row, col, v) in self.g_block.entries() {
            res[col] += v * u[row];
        }
        let scale = norm(sigma).max(norm(u)).max(1e-300);
        norm(&res) / scale
    }

    /// Dense Schur complement `G D^{-1} G^T` on the scalar space; the
    /// stiffness part of the eliminated evolution system.
    pub fn schur_stiffness_dense(&self) -> Result<Mat<f64>> {
        let nf = self.n_flux_dofs();
        let ns = self.n_scalar_dofs();
        let mut gt = Mat::<f64>::zeros(nf, ns);
        for (r, c, v) in self.g_block.entries() {
            gt[(c, r)] = v;
        }
        let x = self.flux_mass_solver()?.solve_mat(&gt); // D^{-1} G^T
        let mut h = Mat::<f64>::zeros(ns, ns);
        for j in 0..ns {
            let col: Vec<f64> = (0..nf).map(|i| x[(i, j)]).collect();
            let gcol = self.g_block.matvec(&col);
            for i in 0..ns {
                h[(i, j)] = gcol[i];
            }
        }
        // symmetrize solver roundoff
        for j in 0..ns {
            for i in (j + 1)..ns {
                let s = 0.5 * (h[(i, j)] + h[(j, i)]);
                h[(i, j)] = s;
                h[(j, i)] = s;
            }
        }
        Ok(h)
    }

    /// Generalized eigendecomposition of the Schur complement against the
    /// scalar mass: the modal basis of the eliminated evolution system.
    pub fn eigendecompose(&self, cap: usize) -> Result<super::SpectralBasis> {
        let n = self.n_scalar_dofs();
        if n > cap {
            return Err(Error::EigenCapExceeded { n_dofs: n, cap });
        }
        let h = self.schur_stiffness_dense()?;
        let (eigenvalues, eigenvectors) =
            crate::linalg::generalized_symmetric_eigen(&h, &self.scalar_mass.to_dense())?;
        Ok(super::SpectralBasis::from_parts(eigenvalues, eigenvectors))
    }

    /// L2 norm of a flux coefficient vector.
    pub fn flux_norm(&self, sigma: &[f64]) -> f64 {
        dot(sigma, &self.d_block.matvec(sigma)).max(0.0).sqrt()
    }

    /// L2 norm of a scalar coefficient vector.
    pub fn scalar_norm(&self, u: &[f64]) -> f64 {
        dot(u, &self.scalar_mass.matvec(u)).max(0.0).sqrt()
    }

    pub fn scalar_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        dot(u, &self.scalar_mass.matvec(v))
    }

    /// L2 norm of `div xi` (exact: the divergence lies in the scalar space).
    pub fn div_norm(&self, xi: &[f64]) -> f64 {
        dot(xi, &self.k_block.matvec(xi)).max(0.0).sqrt()
    }

    /// Max-norm of the scalar field sampled on a 15-point lattice per
    /// element (barycentric lattice of degree 4).
    pub fn scalar_maxnorm(&self, mesh: &TriangleMesh, u: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        let field = MixedScalar::new(self, u);
        for t in 0..mesh.n_triangles() {
            for i in 0..=4usize {
                for j in 0..=(4 - i) {
                    let l = [i as f64 / 4.0, j as f64 / 4.0, (4 - i - j) as f64 / 4.0];
                    worst = worst.max(field.eval(mesh, t, l).abs());
                }
            }
        }
        worst
    }

    /// L2 projection of an L2 function onto the scalar space.
    pub fn scalar_l2_project(&self, mesh: &TriangleMesh, f: &ScalarField) -> Result<Vec<f64>> {
        let b = self.scalar_load(mesh, f);
        Ok(self.scalar_mass_solver()?.solve(&b))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Vector-valued data with an analytic divergence, for the mixed projection.
#[derive(Clone)]
pub struct VectorField {
    value: std::sync::Arc<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>,
    divergence: std::sync::Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl VectorField {
    pub fn new(
        value: impl Fn(f64, f64) -> [f64; 2] + Send + Sync + 'static,
        divergence: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { value: std::sync::Arc::new(value), divergence: std::sync::Arc::new(divergence) }
    }

    pub fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        (self.value)(x, y)
    }

    pub fn div(&self, x: f64, y: f64) -> f64 {
        (self.divergence)(x, y)
    }
}

/// Intermediate mixed projection `(u, sigma) -> (u_h, sigma_h)` defined by
/// `(div(sigma - sigma_h), v) = 0` and
/// `(sigma - sigma_h, w) + (u - u_h, div w) = 0`.
pub fn mixed_projection(
    mesh: &TriangleMesh,
    sys: &MixedSystem,
    u: &ScalarField,
    sigma: &VectorField,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let nf = sys.n_flux_dofs();
    let ns = sys.n_scalar_dofs();
    let rule = element_quadrature(6).expect("degree 6");

    // right-hand sides: (sigma, w_j) + (u, div w_j), and (div sigma, v_i)
    let mut rhs = vec![0.0; nf + ns];
    for t in 0..mesh.n_triangles() {
        let basis = &sys.local_bases[t];
        let dofs = sys.layout.element_dofs(mesh, t);
        let [p0, p1, p2] = mesh.triangle_vertices(t);
        let area = mesh.triangle_area(t);
        for (l, &w) in rule.points.iter().zip(&rule.weights) {
            let x = l[0] * p0[0] + l[1] * p1[0] + l[2] * p2[0];
            let y = l[0] * p0[1] + l[1] * p1[1] + l[2] * p2[1];
            let wt = w * area;
            let sv = sigma.eval(x, y);
            let dv = sigma.div(x, y);
            let uv = u.eval(x, y);
            for (bi, &dof) in dofs.iter().enumerate() {
                let wv = basis.eval(bi, x, y);
                let wd = basis.div(bi, x, y);
                rhs[dof] += wt * (sv[0] * wv[0] + sv[1] * wv[1] + uv * wd);
            }
            for i in 0..sys.index.scalar_dofs_per_element() {
                rhs[nf + sys.layout.scalar_dof(t, i)] +=
                    wt * dv * scalar_basis(sys.index, i, *l);
            }
        }
    }
    let sol = sys.saddle_solver()?.solve(&rhs);
    let sigma_h = sol[..nf].to_vec();
    let u_h = sol[nf..].to_vec();

    // defining-relation residuals
    let mut r1 = sys.g_block.matvec(&sigma_h);
    for (a, b) in r1.iter_mut().zip(&rhs[nf..]) {
        *a -= b;
    }
    let mut r2 = sys.d_block.matvec(&sigma_h);
    for (r, c, v) in sys.g_block.entries() {
        r2[c] += v * u_h[r];
    }
    for (a, b) in r2.iter_mut().zip(&rhs[..nf]) {
        *a -= b;
    }
    // b_w vanishes when sigma = grad u with u zero on the boundary, so the
    // second residual is scaled by the equation terms, not by b_w
    let s1 = norm(&rhs[nf..]).max(norm(&u_h)).max(1e-300);
    let s2 = norm(&sigma_h).max(norm(&u_h)).max(1e-300);
    if norm(&r1) > 1e-11 * s1 || norm(&r2) > 1e-11 * s2 {
        return Err(Error::Numerical(format!(
            "mixed projection residuals {:.2e}, {:.2e} exceed 1e-11",
            norm(&r1) / s1,
            norm(&r2) / s2
        )));
    }
    Ok((u_h, sigma_h))
}

/// `||theta_h||_inf / (|ln h| ||z||)`; returns 0 for a vanishing pair.
pub fn maxnorm_transfer_check(
    mesh: &TriangleMesh,
    sys: &MixedSystem,
    theta: &[f64],
    z: &[f64],
) -> f64 {
    let zn = sys.flux_norm(z);
    let tn = sys.scalar_maxnorm(mesh, theta);
    if zn == 0.0 && tn == 0.0 {
        return 0.0;
    }
    let lh = mesh.mesh_size_h().ln().abs().max(1e-12);
    tn / (lh * zn)
}

/// `h ||div xi|| / ||xi||`; zero flux gives 0.
pub fn inverse_estimate_check(mesh: &TriangleMesh, sys: &MixedSystem, xi: &[f64]) -> f64 {
    let xin = sys.flux_norm(xi);
    if xin == 0.0 {
        return 0.0;
    }
    mesh.mesh_size_h() * sys.div_norm(xi) / xin
}

/// Element-wise view of a scalar coefficient vector (P0 or broken P1).
pub struct MixedScalar<'a> {
    sys: &'a MixedSystem,
    coeffs: &'a [f64],
}

impl<'a> MixedScalar<'a> {
    pub fn new(sys: &'a MixedSystem, coeffs: &'a [f64]) -> Self {
        assert_eq!(coeffs.len(), sys.n_scalar_dofs());
        Self { sys, coeffs }
    }
}

impl DiscreteField for MixedScalar<'_> {
    fn eval(&self, _mesh: &TriangleMesh, t: usize, bary: [f64; 3]) -> f64 {
        let sloc = self.sys.index.scalar_dofs_per_element();
        (0..sloc)
            .map(|i| {
                self.coeffs[self.sys.layout.scalar_dof(t, i)]
                    * scalar_basis(self.sys.index, i, bary)
            })
            .sum()
    }

    fn eval_grad(&self, mesh: &TriangleMesh, t: usize, bary: [f64; 3]) -> [f64; 2] {
        let _ = bary;
        match self.sys.index {
            RtSpaceIndex::Rt0 => [0.0, 0.0],
            RtSpaceIndex::Rt1 => {
                let grads = super::barycentric_gradients(mesh, t);
                let mut g = [0.0, 0.0];
                for i in 0..3 {
                    let c = self.coeffs[self.sys.layout.scalar_dof(t, i)];
                    g[0] += c * grads[i][0];
                    g[1] += c * grads[i][1];
                }
                g
            }
        }
    }
}

/// Element-wise view of a flux coefficient vector.
pub struct MixedFlux<'a> {
    sys: &'a MixedSystem,
    coeffs: &'a [f64],
}

impl<'a> MixedFlux<'a> {
    pub fn new(sys: &'a MixedSystem, coeffs: &'a [f64]) -> Self {
        assert_eq!(coeffs.len(), sys.n_flux_dofs());
        Self { sys, coeffs }
    }

    pub fn eval(&self, mesh: &TriangleMesh, t: usize, bary: [f64; 3]) -> [f64; 2] {
        let [p0, p1, p2] = mesh.triangle_vertices(t);
        let x = bary[0] * p0[0] + bary[1] * p1[0] + bary[2] * p2[0];
        let y = bary[0] * p0[1] + bary[1] * p1[1] + bary[2] * p2[1];
        let basis = &self.sys.local_bases[t];
        let dofs = self.sys.layout.element_dofs(mesh, t);
        let mut out = [0.0, 0.0];
        for (bi, &dof) in dofs.iter().enumerate() {
            let c = self.coeffs[dof];
            if c != 0.0 {
                let v = basis.eval(bi, x, y);
                out[0] += c * v[0];
                out[1] += c * v[1];
            }
        }
        out
    }

    pub fn eval_div(&self, mesh: &TriangleMesh, t: usize, bary: [f64; 3]) -> f64 {
        let [p0, p1, p2] = mesh.triangle_vertices(t);
        let x = bary[0] * p0[0] + bary[1] * p1[0] + bary[2] * p2[0];
        let y = bary[0] * p0[1] + bary[1] * p1[1] + bary[2] * p2[1];
        let basis = &self.sys.local_bases[t];
        let dofs = self.sys.layout.element_dofs(mesh, t);
        dofs.iter()
            .enumerate()
            .map(|(bi, &dof)| self.coeffs[dof] * basis.div(bi, x, y))
            .sum()
    }
}

/// Write the blocks in coordinate text format with a block-structure header.
pub fn write_block_system(sys: &MixedSystem, w: &mut impl std::io::Write) -> Result<()> {
    writeln!(
        w,
        "blocks D({nf}x{nf}) G({ns}x{nf}) A({ns}x{ns})",
        nf = sys.n_flux_dofs(),
        ns = sys.n_scalar_dofs()
    )?;
    writeln!(w, "block D")?;
    sys.d_block.write_coordinate_text(w)?;
    writeln!(w, "block G")?;
    sys.g_block.write_coordinate_text(w)?;
    writeln!(w, "block A")?;
    sys.scalar_mass.write_coordinate_text(w)?;
    Ok(())
}
