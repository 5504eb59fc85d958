//! Time evolution of the semidiscrete systems: the exact spectral
//! propagator for homogeneous single-order problems, and L1 stepping on
//! (graded) grids for the general case, including the mixed flavor through
//! block elimination of the discontinuous scalar.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::mixed::MixedSystem;
use crate::fem::{DiscreteEllipticPair, SpectralBasis};
use crate::fractional::{FractionalOrderSpec, GradedTimeGrid, L1Weights};
use crate::linalg::{NeumaierSum, SpdSolver, SymbolicSpd};
use crate::special::mittag_leffler;

/// Exact-in-time modal propagator `u_h(t) = sum_j E_alpha(-lambda_j t^alpha)
/// (u0h, v_j)_M v_j` for the homogeneous single-order problem.
pub struct SpectralPropagator<'a> {
    basis: &'a SpectralBasis,
    alpha: f64,
    modal_u0: Vec<f64>,
}

impl<'a> SpectralPropagator<'a> {
    pub fn new(
        pair: &DiscreteEllipticPair,
        basis: &'a SpectralBasis,
        spec: &FractionalOrderSpec,
        u0h: &[f64],
    ) -> Result<Self> {
        if !spec.is_single_term() {
            return Err(Error::InvalidParameter(
                "spectral propagator handles single-order problems; use l1_evolve for multi-term"
                    .into(),
            ));
        }
        let modal_u0 = basis.modal_coefficients(pair, u0h);
        // Parseval in the mass inner product
        let modal_energy: f64 = modal_u0.iter().map(|c| c * c).sum();
        let direct = pair.mass_inner(u0h, u0h);
        if (modal_energy - direct).abs() > 1e-10 * direct.max(1e-300) {
            return Err(Error::Numerical(format!(
                "modal energy {modal_energy} deviates from ||u0h||^2 = {direct}"
            )));
        }
        Ok(Self { basis, alpha: spec.alpha(), modal_u0 })
    }

    pub fn modal_initial(&self) -> &[f64] {
        &self.modal_u0
    }

    /// Modal coefficients at time `t >= 0`.
    pub fn modal_at(&self, t: f64) -> Result<Vec<f64>> {
        if t < 0.0 {
            return Err(Error::Domain("propagation time must be nonnegative".into()));
        }
        let ta = t.powf(self.alpha);
        self.modal_u0
            .par_iter()
            .enumerate()
            .map(|(j, &c)| {
                let decay = mittag_leffler(self.alpha, 1.0, -self.basis.eigenvalue(j) * ta)?;
                Ok(c * decay)
            })
            .collect()
    }

    /// Coefficient vector at time `t`.
    pub fn solve_at(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.basis.synthesize(&self.modal_at(t)?))
    }
}

/// Spectral path for the homogeneous mixed system: eigenpairs of the Schur
/// complement `G D^{-1} G^T` against the scalar mass (see
/// [`MixedSystem::eigendecompose`]); algebraically equivalent to evolving
/// the saddle system.
pub struct MixedSpectralPropagator<'a> {
    sys: &'a MixedSystem,
    basis: &'a SpectralBasis,
    alpha: f64,
    modal_u0: Vec<f64>,
}

impl<'a> MixedSpectralPropagator<'a> {
    pub fn new(
        sys: &'a MixedSystem,
        basis: &'a SpectralBasis,
        spec: &FractionalOrderSpec,
        u0: &[f64],
    ) -> Result<Self> {
        if !spec.is_single_term() {
            return Err(Error::InvalidParameter(
                "spectral propagator handles single-order problems; use l1_evolve_mixed".into(),
            ));
        }
        let mu0 = sys.scalar_mass().matvec(u0);
        let modal_u0: Vec<f64> =
            (0..basis.len()).map(|j| crate::linalg::dot(basis.eigenvector(j), &mu0)).collect();
        Ok(Self { sys, basis, alpha: spec.alpha(), modal_u0 })
    }

    /// Scalar and flux coefficients at time `t`.
    pub fn solve_at(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let ta = t.powf(self.alpha);
        let modal: Vec<f64> = self
            .modal_u0
            .par_iter()
            .enumerate()
            .map(|(j, &c)| {
                let decay = mittag_leffler(self.alpha, 1.0, -self.basis.eigenvalue(j) * ta)?;
                Ok(c * decay)
            })
            .collect::<Result<_>>()?;
        let u = self.basis.synthesize(&modal);
        let sigma = self.sys.flux_from_scalar(&u)?;
        Ok((u, sigma))
    }
}

/// Trajectory of an L1 evolution; the full history is kept because the
/// fractional memory term needs it.
pub struct EvolutionState {
    pub times: Vec<f64>,
    pub scalar_history: Vec<Vec<f64>>,
    pub flux_history: Option<Vec<Vec<f64>>>,
    /// worst per-step residual of the flux constraint (mixed flavor only)
    pub max_constraint_residual: f64,
}

impl EvolutionState {
    pub fn terminal(&self) -> &[f64] {
        self.scalar_history.last().expect("history is nonempty")
    }

    /// Dump as CSV: `t, dof0, dof1, ...`.
    pub fn write_csv(&self, w: &mut impl std::io::Write) -> Result<()> {
        for (n, t) in self.times.iter().enumerate() {
            write!(w, "{t:.17e}")?;
            for v in &self.scalar_history[n] {
                write!(w, ",{v:.17e}")?;
            }
            if let Some(flux) = &self.flux_history {
                for v in &flux[n] {
                    write!(w, ",{v:.17e}")?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Fractional history term `sum_{k<n} w_{n,k} (u^k - u^{k-1})` per DOF with
/// compensated accumulation.
fn history_term(row: &[f64], history: &[Vec<f64>], n: usize, ndof: usize) -> Vec<f64> {
    (0..ndof)
        .into_par_iter()
        .map(|d| {
            let mut acc = NeumaierSum::new();
            for k in 1..n {
                acc.add(row[k - 1] * (history[k][d] - history[k - 1][d]));
            }
            acc.total()
        })
        .collect()
}

fn check_finite(step: usize, v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!("non-finite solution at step {step}")));
    }
    Ok(())
}

/// L1 evolution of the (possibly multi-term) semidiscrete system
/// `M P(d_t) u + S u = F(t)` for the conforming or Crouzeix-Raviart pair.
///
/// `forcing` returns the assembled load vector at a given time; `None`
/// means the homogeneous problem.
pub fn l1_evolve(
    pair: &DiscreteEllipticPair,
    spec: &FractionalOrderSpec,
    grid: &GradedTimeGrid,
    u0h: &[f64],
    forcing: Option<&(dyn Fn(f64) -> Vec<f64> + Sync)>,
) -> Result<EvolutionState> {
    let ndof = pair.n_dofs();
    assert_eq!(u0h.len(), ndof);
    let weights = L1Weights::new(grid, spec);
    let mut history = Vec::with_capacity(grid.n_steps() + 1);
    history.push(u0h.to_vec());

    let symbolic = SymbolicSpd::analyze(&pair.mass().linear_combination(1.0, pair.stiffness(), 1.0))?;
    let mut cached: Option<(f64, SpdSolver)> = None;
    for n in 1..=grid.n_steps() {
        let row = weights.row(n);
        let w0 = row[n - 1];
        let hist = history_term(&row, &history, n, ndof);

        // M (w0 u^{n-1} - H_n) + F_n
        let mut rhs_vec: Vec<f64> = history[n - 1].iter().zip(&hist).map(|(u, h)| w0 * u - h).collect();
        rhs_vec = pair.mass().matvec(&rhs_vec);
        if let Some(f) = forcing {
            let load = f(grid.node(n));
            for (r, l) in rhs_vec.iter_mut().zip(&load) {
                *r += l;
            }
        }

        let reuse = matches!(&cached, Some((w, _)) if *w == w0);
        if !reuse {
            let system = pair.mass().linear_combination(w0, pair.stiffness(), 1.0);
            cached = Some((w0, symbolic.factor(&system)?));
        }
        let solver = &cached.as_ref().expect("factorization cached").1;
        let u_next = solver.solve(&rhs_vec);
        check_finite(n, &u_next)?;
        history.push(u_next);
    }
    Ok(EvolutionState {
        times: grid.nodes().to_vec(),
        scalar_history: history,
        flux_history: None,
        max_constraint_residual: 0.0,
    })
}

/// L1 evolution of the mixed system. Each step eliminates the
/// block-diagonal scalar mass and solves the SPD flux system
/// `(D + K / w0) Sigma = -(1/w0) G^T A^{-1} R_n`, then recovers the scalar
/// unknown; both saddle equations hold to solver accuracy.
pub fn l1_evolve_mixed(
    sys: &MixedSystem,
    spec: &FractionalOrderSpec,
    grid: &GradedTimeGrid,
    u0: &[f64],
    forcing: Option<&(dyn Fn(f64) -> Vec<f64> + Sync)>,
) -> Result<EvolutionState> {
    let ns = sys.n_scalar_dofs();
    assert_eq!(u0.len(), ns);
    let weights = L1Weights::new(grid, spec);
    let mut scalar_history = Vec::with_capacity(grid.n_steps() + 1);
    let mut flux_history = Vec::with_capacity(grid.n_steps() + 1);
    scalar_history.push(u0.to_vec());
    flux_history.push(sys.flux_from_scalar(u0)?);
    let mut worst_residual: f64 = sys.constraint_residual(u0, &flux_history[0]);

    let symbolic =
        SymbolicSpd::analyze(&sys.flux_mass().linear_combination(1.0, sys.grad_penalty(), 1.0))?;
    let mut cached: Option<(f64, SpdSolver)> = None;
    for n in 1..=grid.n_steps() {
        let row = weights.row(n);
        let w0 = row[n - 1];
        let hist = history_term(&row, &scalar_history, n, ns);

        // R_n = F_n + A (w0 u^{n-1} - H_n)
        let mut r: Vec<f64> =
            scalar_history[n - 1].iter().zip(&hist).map(|(u, h)| w0 * u - h).collect();
        r = sys.scalar_mass().matvec(&r);
        if let Some(f) = forcing {
            let load = f(grid.node(n));
            for (ri, l) in r.iter_mut().zip(&load) {
                *ri += l;
            }
        }

        let reuse = matches!(&cached, Some((w, _)) if *w == w0);
        if !reuse {
            let system = sys.flux_mass().linear_combination(1.0, sys.grad_penalty(), 1.0 / w0);
            cached = Some((w0, symbolic.factor(&system)?));
        }
        let solver = &cached.as_ref().expect("factorization cached").1;

        // -(1/w0) G^T A^{-1} R_n
        let ainv_r = sys.scalar_mass_solver()?.solve(&r);
        let mut rhs = vec![0.0; sys.n_flux_dofs()];
        for (row_g, col_g, v) in sys.div_coupling().entries() {
            rhs[col_g] += v * ainv_r[row_g];
        }
        for x in rhs.iter_mut() {
            *x *= -1.0 / w0;
        }
        let sigma = solver.solve(&rhs);

        // u^n = (1/w0) A^{-1} (R_n + G sigma)
        let mut g_sigma = sys.div_coupling().matvec(&sigma);
        for (g, ri) in g_sigma.iter_mut().zip(&r) {
            *g = (*g + ri) / w0;
        }
        let u_next = sys.scalar_mass_solver()?.solve(&g_sigma);
        check_finite(n, &u_next)?;
        check_finite(n, &sigma)?;
        worst_residual = worst_residual.max(sys.constraint_residual(&u_next, &sigma));
        scalar_history.push(u_next);
        flux_history.push(sigma);
    }
    Ok(EvolutionState {
        times: grid.nodes().to_vec(),
        scalar_history,
        flux_history: Some(flux_history),
        max_constraint_residual: worst_residual,
    })
}
