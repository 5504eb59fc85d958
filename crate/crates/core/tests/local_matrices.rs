//! Re-derivation of the frozen local-matrix values through the exact
//! polynomial-integration oracle; the implementation side assembles with
//! quadrature, the oracle side never touches a quadrature rule.

mod common;

use common::poly::{barycentric_polys, Poly};
use fracfem::fem::conforming::assemble;
use fracfem::fem::mixed::{assemble_mixed, inverse_estimate_check, RtSpaceIndex};
use fracfem::fem::nonconforming::assemble_cr;
use fracfem::fem::CoefficientField;
use fracfem::mesh::{build_structured_mesh, DomainSpec, TriangleMesh};

fn p1_local_stiffness_oracle(p: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let lam = barycentric_polys(p[0], p[1], p[2]);
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let gi = (lam[i].dx(), lam[i].dy());
            let gj = (lam[j].dx(), lam[j].dy());
            let integrand = gi.0.mul(&gj.0).add(&gi.1.mul(&gj.1));
            out[i][j] = integrand.integral_triangle(p[0], p[1], p[2]);
        }
    }
    out
}

fn p1_local_mass_oracle(p: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let lam = barycentric_polys(p[0], p[1], p[2]);
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = lam[i].mul(&lam[j]).integral_triangle(p[0], p[1], p[2]);
        }
    }
    out
}

#[test]
fn p1_reference_triangle_stiffness_rows() {
    // the values frozen in the spec examples and the conforming unit tests
    let p = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let s = p1_local_stiffness_oracle(p);
    let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
    for i in 0..3 {
        for j in 0..3 {
            assert!((s[i][j] - expect[i][j]).abs() < 1e-14, "({i},{j}): {}", s[i][j]);
        }
    }
}

#[test]
fn p1_mass_pattern_on_skewed_triangle() {
    let p = [[0.2, -0.1], [1.3, 0.4], [0.5, 1.7]];
    let m = p1_local_mass_oracle(p);
    let area = 0.5
        * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
            - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
            .abs();
    for i in 0..3 {
        for j in 0..3 {
            let expect = area / 12.0 * if i == j { 2.0 } else { 1.0 };
            assert!((m[i][j] - expect).abs() < 1e-14);
        }
    }
}

#[test]
fn cr_local_matrices_oracle() {
    // theta_k = 1 - 2 lambda_k: stiffness four times the P1 pattern, mass
    // diagonal |K|/3
    let p = [[0.0, 0.3], [1.1, 0.0], [0.4, 0.9]];
    let lam = barycentric_polys(p[0], p[1], p[2]);
    let theta: Vec<Poly> =
        lam.iter().map(|l| Poly::constant(1.0).sub(&l.scale(2.0))).collect();
    let s_p1 = p1_local_stiffness_oracle(p);
    let area = 0.5
        * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
            - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
            .abs();
    for i in 0..3 {
        for j in 0..3 {
            let grad_dot = theta[i]
                .dx()
                .mul(&theta[j].dx())
                .add(&theta[i].dy().mul(&theta[j].dy()));
            let s = grad_dot.integral_triangle(p[0], p[1], p[2]);
            assert!((s - 4.0 * s_p1[i][j]).abs() < 1e-13, "stiffness ({i},{j})");
            let m = theta[i].mul(&theta[j]).integral_triangle(p[0], p[1], p[2]);
            let expect = if i == j { area / 3.0 } else { 0.0 };
            assert!((m - expect).abs() < 1e-14, "mass ({i},{j}): {m}");
        }
    }
}

#[test]
fn hand_assembly_of_n2_interior_vertex() {
    // sum the six triangles incident to the single interior vertex of the
    // n = 2 structured square, entirely through the oracle, and compare
    // with the assembled operator
    let mesh = build_structured_mesh(DomainSpec::unit_square(), 2).unwrap();
    let center = (0..mesh.n_vertices())
        .find(|&v| mesh.vertex(v) == [0.5, 0.5])
        .unwrap();
    let mut stiff = 0.0;
    let mut mass = 0.0;
    let mut incident = 0;
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangle(t);
        let Some(local) = tri.iter().position(|&v| v == center) else { continue };
        incident += 1;
        let p = mesh.triangle_vertices(t);
        stiff += p1_local_stiffness_oracle(p)[local][local];
        mass += p1_local_mass_oracle(p)[local][local];
    }
    assert_eq!(incident, 6);
    assert!((stiff - 4.0).abs() < 1e-13, "oracle stiffness {stiff}");
    assert!((mass - 0.125).abs() < 1e-14, "oracle mass {mass}");

    let pair = assemble(&mesh, &CoefficientField::laplace()).unwrap();
    assert!((pair.stiffness().get(0, 0) - stiff).abs() < 1e-13);
    assert!((pair.mass().get(0, 0) - mass).abs() < 1e-14);
    // the discrete eigenvalue the spectral tests freeze: 4 / (1/8) = 32
    assert!((stiff / mass - 32.0).abs() < 1e-11);
}

#[test]
fn cr_assembly_matches_oracle_on_mesh() {
    let mesh = build_structured_mesh(DomainSpec::unit_square(), 2).unwrap();
    let pair = assemble_cr(&mesh, &CoefficientField::laplace()).unwrap();
    let dof_map = pair.dof_map();
    // oracle assembly of the full CR stiffness for a few interior edges
    for e in 0..mesh.n_edges() {
        let Some(de) = dof_map.dof_of(e) else { continue };
        let mut oracle = 0.0;
        for t in 0..mesh.n_triangles() {
            let edges = mesh.triangle_edges(t);
            let Some(local) = edges.iter().position(|&x| x == e) else { continue };
            let p = mesh.triangle_vertices(t);
            let lam = barycentric_polys(p[0], p[1], p[2]);
            let th = Poly::constant(1.0).sub(&lam[local].scale(2.0));
            let g = th.dx().mul(&th.dx()).add(&th.dy().mul(&th.dy()));
            oracle += g.integral_triangle(p[0], p[1], p[2]);
        }
        let got = pair.stiffness().get(de, de);
        assert!((got - oracle).abs() < 1e-12, "edge {e}: {got} vs {oracle}");
    }
}

/// Classical RT0 basis with unit edge moment: `s_e (x - p_opp) / (2|K|)`.
fn rt0_oracle_polys(
    mesh: &TriangleMesh,
    t: usize,
    local_edge: usize,
    sign: f64,
) -> (Poly, Poly) {
    let p = mesh.triangle_vertices(t);
    let opp = p[local_edge];
    let area = mesh.triangle_area(t);
    let px = Poly::linear(-opp[0], 1.0, 0.0).scale(sign / (2.0 * area));
    let py = Poly::linear(-opp[1], 0.0, 1.0).scale(sign / (2.0 * area));
    (px, py)
}

/// Orientation of the global edge normal relative to triangle `t`: +1 when
/// it points out of `t` (i.e. `t` is the lower-index adjacent triangle).
fn orientation(mesh: &TriangleMesh, t: usize, e: usize) -> f64 {
    if mesh.edge(e).triangles.0 == t {
        1.0
    } else {
        -1.0
    }
}

#[test]
fn rt0_flux_mass_matches_oracle() {
    let mesh = build_structured_mesh(DomainSpec::unit_square(), 1).unwrap();
    let sys = assemble_mixed(&mesh, RtSpaceIndex::Rt0).unwrap();
    let layout = sys.layout();
    let ne = mesh.n_edges();
    // oracle D: sum over triangles of the exact integrals
    let mut oracle = vec![vec![0.0; ne]; ne];
    for t in 0..mesh.n_triangles() {
        let edges = mesh.triangle_edges(t);
        for (i, &ei) in edges.iter().enumerate() {
            let (ax, ay) = rt0_oracle_polys(&mesh, t, i, orientation(&mesh, t, ei));
            for (j, &ej) in edges.iter().enumerate() {
                let (bx, by) = rt0_oracle_polys(&mesh, t, j, orientation(&mesh, t, ej));
                let p = mesh.triangle_vertices(t);
                oracle[ei][ej] +=
                    ax.mul(&bx).add(&ay.mul(&by)).integral_triangle(p[0], p[1], p[2]);
            }
        }
    }
    for ei in 0..ne {
        for ej in 0..ne {
            let got = sys.flux_mass().get(layout.edge_dof(ei, 0), layout.edge_dof(ej, 0));
            assert!(
                (got - oracle[ei][ej]).abs() < 1e-12,
                "D[{ei}][{ej}]: {got} vs {}",
                oracle[ei][ej]
            );
        }
    }
}

#[test]
fn rt0_divergence_and_inverse_ratio_oracle() {
    let mesh = build_structured_mesh(DomainSpec::unit_square(), 1).unwrap();
    let sys = assemble_mixed(&mesh, RtSpaceIndex::Rt0).unwrap();
    let layout = sys.layout();
    // div of the oracle basis is s_e / |K|; the coupling entries are +-1
    for t in 0..mesh.n_triangles() {
        for (i, &e) in mesh.triangle_edges(t).iter().enumerate() {
            let (px, py) = rt0_oracle_polys(&mesh, t, i, orientation(&mesh, t, e));
            let div = px.dx().add(&py.dy());
            let p = mesh.triangle_vertices(t);
            let integral = div.integral_triangle(p[0], p[1], p[2]);
            let got = sys.div_coupling().get(t, layout.edge_dof(e, 0));
            assert!((integral - got).abs() < 1e-12);
            assert!((got.abs() - 1.0).abs() < 1e-12);
        }
    }

    // single-edge inverse-estimate ratio, fully symbolic:
    // ratio = h sqrt(||div xi||^2 / ||xi||^2)
    let diag = (0..mesh.n_edges()).find(|&e| !mesh.is_boundary_edge(e)).unwrap();
    let mut div2 = 0.0;
    let mut l2 = 0.0;
    for t in 0..mesh.n_triangles() {
        let edges = mesh.triangle_edges(t);
        let Some(i) = edges.iter().position(|&x| x == diag) else { continue };
        let (px, py) = rt0_oracle_polys(&mesh, t, i, orientation(&mesh, t, diag));
        let p = mesh.triangle_vertices(t);
        let div = px.dx().add(&py.dy());
        div2 += div.mul(&div).integral_triangle(p[0], p[1], p[2]);
        l2 += px.mul(&px).add(&py.mul(&py)).integral_triangle(p[0], p[1], p[2]);
    }
    let expect = mesh.mesh_size_h() * (div2 / l2).sqrt();
    let mut xi = vec![0.0; sys.n_flux_dofs()];
    xi[layout.edge_dof(diag, 0)] = 1.0;
    let got = inverse_estimate_check(&mesh, &sys, &xi);
    assert!((got - expect).abs() < 1e-11, "{got} vs {expect}");
}

#[test]
fn degree_three_rule_against_symbolic_monomial() {
    // the spec's 1/60 example: x^2 y over the reference triangle
    let mut xxy = Poly::zero();
    xxy.add_term(2, 1, 1.0);
    let exact = xxy.integral_reference();
    assert!((exact - 1.0 / 60.0).abs() < 1e-17);
    let rule = fracfem::element_quadrature(3).unwrap();
    let approx: f64 = rule
        .mapped([0.0, 0.0], [1.0, 0.0], [0.0, 1.0])
        .iter()
        .map(|&([x, y], w)| w * x * x * y)
        .sum();
    assert!((approx - exact).abs() < 1e-15);
}
