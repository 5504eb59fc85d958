//! Exact bivariate polynomial arithmetic with closed-form integration over
//! triangles: the symbolic oracle behind the frozen local-matrix values.
//!
//! Integrals over the reference triangle use the monomial formula
//! `int x^i y^j = i! j! / (i + j + 2)!`; arbitrary triangles go through the
//! affine substitution, so nothing here touches quadrature rules.

use std::collections::HashMap;

/// Sparse bivariate polynomial with f64 coefficients.
#[derive(Debug, Clone, Default)]
pub struct Poly {
    terms: HashMap<(u32, u32), f64>,
}

impl Poly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Self::zero();
        p.add_term(0, 0, c);
        p
    }

    /// `c0 + cx x + cy y`
    pub fn linear(c0: f64, cx: f64, cy: f64) -> Self {
        let mut p = Self::zero();
        p.add_term(0, 0, c0);
        p.add_term(1, 0, cx);
        p.add_term(0, 1, cy);
        p
    }

    pub fn add_term(&mut self, i: u32, j: u32, c: f64) {
        if c != 0.0 {
            *self.terms.entry((i, j)).or_insert(0.0) += c;
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (&k, &c) in &other.terms {
            out.add_term(k.0, k.1, c);
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Poly {
        let mut out = Poly::zero();
        for (&k, &c) in &self.terms {
            out.add_term(k.0, k.1, c * s);
        }
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (&(i1, j1), &c1) in &self.terms {
            for (&(i2, j2), &c2) in &other.terms {
                out.add_term(i1 + i2, j1 + j2, c1 * c2);
            }
        }
        out
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.terms
            .iter()
            .map(|(&(i, j), &c)| c * x.powi(i as i32) * y.powi(j as i32))
            .sum()
    }

    pub fn dx(&self) -> Poly {
        let mut out = Poly::zero();
        for (&(i, j), &c) in &self.terms {
            if i > 0 {
                out.add_term(i - 1, j, c * i as f64);
            }
        }
        out
    }

    pub fn dy(&self) -> Poly {
        let mut out = Poly::zero();
        for (&(i, j), &c) in &self.terms {
            if j > 0 {
                out.add_term(i, j - 1, c * j as f64);
            }
        }
        out
    }

    /// Exact integral over the reference triangle {x, y >= 0, x + y <= 1}.
    pub fn integral_reference(&self) -> f64 {
        fn fact(k: u32) -> f64 {
            (1..=k).map(|i| i as f64).product()
        }
        self.terms
            .iter()
            .map(|(&(i, j), &c)| c * fact(i) * fact(j) / fact(i + j + 2))
            .sum()
    }

    /// Substitute the affine map `x = x0 + ax u + bx v`,
    /// `y = y0 + ay u + by v`, returning a polynomial in `(u, v)`.
    pub fn compose_affine(&self, x: [f64; 3], y: [f64; 3]) -> Poly {
        let xs = Poly::linear(x[0], x[1], x[2]);
        let ys = Poly::linear(y[0], y[1], y[2]);
        let mut out = Poly::zero();
        for (&(i, j), &c) in &self.terms {
            let mut term = Poly::constant(c);
            for _ in 0..i {
                term = term.mul(&xs);
            }
            for _ in 0..j {
                term = term.mul(&ys);
            }
            out = out.add(&term);
        }
        out
    }

    /// Exact integral over the triangle with vertices `p0, p1, p2`.
    pub fn integral_triangle(&self, p0: [f64; 2], p1: [f64; 2], p2: [f64; 2]) -> f64 {
        let jac =
            ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])).abs();
        let mapped = self.compose_affine(
            [p0[0], p1[0] - p0[0], p2[0] - p0[0]],
            [p0[1], p1[1] - p0[1], p2[1] - p0[1]],
        );
        jac * mapped.integral_reference()
    }
}

/// The three P1 barycentric polynomials of a triangle, as exact affine
/// functions of (x, y) obtained by Cramer's rule.
pub fn barycentric_polys(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2]) -> [Poly; 3] {
    let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    let mut out = [Poly::zero(), Poly::zero(), Poly::zero()];
    let pts = [p0, p1, p2];
    for k in 0..3 {
        let a = pts[(k + 1) % 3];
        let b = pts[(k + 2) % 3];
        // lambda_k = ((b - a) x (x - a)) / det, consistently oriented
        let c0 = (a[0] * b[1] - b[0] * a[1]) / det;
        let cx = (a[1] - b[1]) / det;
        let cy = (b[0] - a[0]) / det;
        out[k] = Poly::linear(c0, cx, cy);
    }
    out
}
