//! Quadrature rules on the reference triangle and on edges.
//!
//! Triangle rules are symmetric, stored in barycentric coordinates with
//! weights normalized to sum to one; an integral over a physical triangle K
//! is `|K| * sum_i w_i f(p_i)`.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub degree: usize,
    /// Barycentric coordinates (l0, l1, l2) of each node.
    pub points: Vec<[f64; 3]>,
    /// Weights on the reference measure, summing to 1.
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Map the rule onto the physical triangle `(a, b, c)`, yielding
    /// Cartesian nodes and weights that already include the triangle area.
    pub fn mapped(&self, a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Vec<([f64; 2], f64)> {
        let area = 0.5
            * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs();
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(l, &w)| {
                let x = l[0] * a[0] + l[1] * b[0] + l[2] * c[0];
                let y = l[0] * a[1] + l[1] * b[1] + l[2] * c[1];
                ([x, y], w * area)
            })
            .collect()
    }
}

fn orbit1(points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>, w: f64) {
    points.push([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
    weights.push(w);
}

/// Orbit (1-2a, a, a): three permutations.
fn orbit3(points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>, a: f64, w: f64) {
    let b = 1.0 - 2.0 * a;
    points.push([b, a, a]);
    points.push([a, b, a]);
    points.push([a, a, b]);
    weights.extend([w, w, w]);
}

/// Orbit (a, b, 1-a-b): six permutations.
fn orbit6(points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>, a: f64, b: f64, w: f64) {
    let c = 1.0 - a - b;
    for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
        points.push(p);
        weights.push(w);
    }
}

/// Symmetric rule exact for polynomials of total degree `degree` on the
/// reference triangle. Supported degrees: 1 through 6.
pub fn element_quadrature(degree: usize) -> Result<QuadratureRule> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    match degree {
        1 => orbit1(&mut points, &mut weights, 1.0),
        2 => {
            // edge midpoints
            orbit3(&mut points, &mut weights, 0.5, 1.0 / 3.0);
        }
        3 => {
            orbit1(&mut points, &mut weights, -27.0 / 48.0);
            orbit3(&mut points, &mut weights, 0.2, 25.0 / 48.0);
        }
        4 => {
            orbit3(&mut points, &mut weights, 0.445948490915965, 0.223381589678011);
            orbit3(&mut points, &mut weights, 0.091576213509771, 0.109951743655322);
        }
        5 => {
            orbit1(&mut points, &mut weights, 0.225);
            orbit3(&mut points, &mut weights, 0.470142064105115, 0.132394152788506);
            orbit3(&mut points, &mut weights, 0.101286507323456, 0.125939180544827);
        }
        6 => {
            orbit3(&mut points, &mut weights, 0.249286745170910, 0.116786275726379);
            orbit3(&mut points, &mut weights, 0.063089014491502, 0.050844906370207);
            orbit6(
                &mut points,
                &mut weights,
                0.310352451033785,
                0.053145049844816,
                0.082851075618374,
            );
        }
        _ => {
            return Err(Error::InvalidParameter(format!(
                "quadrature degree {degree} unsupported (expected 1..=6)"
            )))
        }
    }
    Ok(QuadratureRule { degree, points, weights })
}

/// Gauss-Legendre nodes and weights on [0, 1]; exact for degree `2n - 1`.
pub fn gauss_legendre_01(n: usize) -> Result<Vec<(f64, f64)>> {
    // nodes/weights on [-1, 1]
    let raw: &[(f64, f64)] = match n {
        1 => &[(0.0, 2.0)],
        2 => &[(-0.5773502691896257, 1.0), (0.5773502691896257, 1.0)],
        3 => &[
            (-0.7745966692414834, 5.0 / 9.0),
            (0.0, 8.0 / 9.0),
            (0.7745966692414834, 5.0 / 9.0),
        ],
        4 => &[
            (-0.8611363115940526, 0.3478548451374538),
            (-0.3399810435848563, 0.6521451548625461),
            (0.3399810435848563, 0.6521451548625461),
            (0.8611363115940526, 0.3478548451374538),
        ],
        5 => &[
            (-0.9061798459386640, 0.2369268850561891),
            (-0.5384693101056831, 0.4786286704993665),
            (0.0, 0.5688888888888889),
            (0.5384693101056831, 0.4786286704993665),
            (0.9061798459386640, 0.2369268850561891),
        ],
        _ => {
            return Err(Error::InvalidParameter(format!(
                "gauss_legendre_01: {n} points unsupported (expected 1..=5)"
            )))
        }
    };
    Ok(raw.iter().map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect())
}
