//! Fully discrete Crank-Nicolson stepper for the rotating GPE.
//!
//! One step solves, for the new coefficients `u1` and `u_hat = (u0 + u1)/2`,
//!
//! ```text
//! i M (u1 - u0) / tau = (A/2 + P - Omega L) u_hat + beta M_rho(u0, u1) u_hat
//!                       + S(u_hat, u1) + F(t_{n+1/2})
//! ```
//!
//! where `M_rho` is the mass matrix weighted by `(|u0|^2 + |u1|^2)/2` and `S`
//! is the boundary-pairing stabilization of the nonconforming space (zero for
//! Q1). The nonlinearity is resolved by a fixed-point iteration that freezes
//! the density at the previous iterate.

use std::fmt;
use std::sync::Arc;

use log::debug;
use thiserror::Error;

use crate::assembly::{
    assemble_density_mass, assemble_load, assemble_single_density_mass, FeSpace, FormSet,
    PotentialSpec,
};
use crate::elements::ElementKind;
use crate::sparse::{gmres, CsrMatrix, Factorization, SolverError, SparseLu, C64};

/// Complex source term `f(x, y, t)`.
pub type SourceFn = dyn Fn(f64, f64, f64) -> C64 + Send + Sync;

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("fixed-point iteration did not converge: {0}")]
    NonConvergence(StepReport),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("invalid scheme configuration: {0}")]
    InvalidConfig(String),
    #[error("field does not belong to this space ({got} coefficients, expected {expected})")]
    FieldMismatch { got: usize, expected: usize },
    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<SchemeError>,
    },
}

/// A finite element function: one complex coefficient per global DOF.
#[derive(Debug, Clone)]
pub struct Field {
    pub space: Arc<FeSpace>,
    pub coeffs: Vec<C64>,
}

impl Field {
    pub fn zeros(space: Arc<FeSpace>) -> Self {
        let coeffs = vec![C64::new(0.0, 0.0); space.n_dofs()];
        Field { space, coeffs }
    }

    /// Wraps coefficients, pinning constrained entries to zero.
    pub fn from_coeffs(space: Arc<FeSpace>, mut coeffs: Vec<C64>) -> Result<Self, SchemeError> {
        if coeffs.len() != space.n_dofs() {
            return Err(SchemeError::FieldMismatch {
                got: coeffs.len(),
                expected: space.n_dofs(),
            });
        }
        for (c, &fixed) in coeffs.iter_mut().zip(space.constrained()) {
            if fixed {
                *c = C64::new(0.0, 0.0);
            }
        }
        Ok(Field { space, coeffs })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn kind(&self) -> ElementKind {
        self.space.kind
    }

    pub fn scaled(&self, s: C64) -> Field {
        Field {
            space: self.space.clone(),
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn evaluate(&self, x: f64, y: f64) -> (C64, [C64; 2]) {
        self.space.evaluate(&self.coeffs, x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearSolverKind {
    /// Sparse LU, refactorized every fixed-point iteration.
    DirectSparse,
    /// GMRES preconditioned by the LU of the density-free operator.
    Krylov { tol: f64, max_iters: usize },
}

/// Where the source term is sampled inside a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceEvaluation {
    /// `f(t_n + tau/2)`.
    #[default]
    Midpoint,
    /// `(f(t_n) + f(t_{n+1})) / 2`.
    Average,
}

/// Realization of the nonconforming stabilization as a load vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stabilization {
    /// `-i (Omega/2) B u_hat`: the pairing applied complex-linearly. Its
    /// effect is to replace `L` by its Hermitian part; mass and energy are
    /// conserved exactly.
    #[default]
    Hermitian,
    /// Per basis function `-i (Omega/2) B Re(u_hat) + (Omega/2) B Im(u1)`,
    /// lagged inside the fixed-point iteration. Loses mass when `hx != hy`;
    /// on square cells `B` vanishes on constrained fields and the two
    /// variants coincide.
    SplitParts,
}

/// Density used in the cubic term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DensityEvaluation {
    /// `(|u0|^2 + |u1|^2) / 2`, the energy-conserving choice.
    #[default]
    Averaged,
    /// `|u_hat|^2`. Conserves mass but not the discrete energy.
    Midpoint,
}

#[derive(Debug, Clone)]
pub struct SchemeConfig {
    pub tau: f64,
    pub t_final: f64,
    pub omega: f64,
    pub beta: f64,
    pub potential: PotentialSpec,
    /// Relative increment tolerance in the mass norm.
    pub fixed_point_tol: f64,
    pub fixed_point_max_iters: usize,
    pub linear_solver: LinearSolverKind,
    pub source_evaluation: SourceEvaluation,
    pub stabilization: Stabilization,
    pub density: DensityEvaluation,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            tau: 0.01,
            t_final: 1.0,
            omega: 0.0,
            beta: 0.0,
            potential: PotentialSpec::Zero,
            fixed_point_tol: 1e-13,
            fixed_point_max_iters: 100,
            linear_solver: LinearSolverKind::DirectSparse,
            source_evaluation: SourceEvaluation::Midpoint,
            stabilization: Stabilization::Hermitian,
            density: DensityEvaluation::Averaged,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<(), SchemeError> {
        let bad = |m: &str| Err(SchemeError::InvalidConfig(m.to_string()));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if self.t_final.is_nan() || self.t_final < self.tau * (1.0 - 1e-12) {
            return bad("final time must be at least one step");
        }
        if self.fixed_point_tol.is_nan() || self.fixed_point_tol <= 0.0 {
            return bad("fixed-point tolerance must be positive");
        }
        if self.fixed_point_max_iters == 0 {
            return bad("fixed-point iteration limit must be positive");
        }
        if !self.omega.is_finite() || !self.beta.is_finite() {
            return bad("omega and beta must be finite");
        }
        Ok(())
    }

    /// Number of steps `round(T / tau)`.
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.tau).round() as usize
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepReport {
    pub iterations: usize,
    /// Final relative increment `|u^(k+1) - u^(k)|_M / |u^(k+1)|_M`.
    pub increment: f64,
    pub factorizations: usize,
    pub krylov_iterations: usize,
}

impl fmt::Display for StepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} iterations, relative increment {:.3e}",
            self.iterations, self.increment
        )
    }
}

/// Data handed to the observer after each step.
#[derive(Debug)]
pub struct StepInfo<'a> {
    pub step: usize,
    pub t: f64,
    pub field: &'a Field,
    pub report: &'a StepReport,
}

fn mass_norm(mass: &CsrMatrix<f64>, v: &[C64]) -> f64 {
    mass.quadratic_form(v).re.max(0.0).sqrt()
}

/// Reusable stepper for fixed forms and configuration.
pub struct CrankNicolson<'a> {
    forms: &'a FormSet,
    cfg: SchemeConfig,
    /// `i M / tau - K / 2`, unconstrained.
    lhs_base: CsrMatrix<C64>,
    /// `i M / tau + K / 2`.
    rhs_base: CsrMatrix<C64>,
    lu: SparseLu,
    /// Factorization of the constrained `lhs_base`.
    base_factor: Factorization,
}

impl<'a> CrankNicolson<'a> {
    /// `tau` may be negative here, which steps backwards in time.
    pub fn new(forms: &'a FormSet, cfg: &SchemeConfig) -> Result<Self, SchemeError> {
        if cfg.tau == 0.0 || !cfg.tau.is_finite() {
            return Err(SchemeError::InvalidConfig("tau must be nonzero".into()));
        }
        let lz = match (forms.space.kind, cfg.stabilization) {
            (ElementKind::NonconformingEQ1Rot, Stabilization::Hermitian) => forms.hermitian_lz(),
            _ => forms.lz.clone(),
        };
        let pattern = forms.space.pattern.clone();
        let mut lhs_base = CsrMatrix::zeros(pattern.clone());
        let mut rhs_base = CsrMatrix::zeros(pattern.clone());
        let inv_tau = 1.0 / cfg.tau;
        for k in 0..pattern.nnz() {
            let h = C64::new(
                0.5 * forms.stiffness.values[k] + forms.potential.values[k],
                0.0,
            ) - lz.values[k] * cfg.omega;
            let m = C64::new(0.0, forms.mass.values[k] * inv_tau);
            lhs_base.values[k] = m - 0.5 * h;
            rhs_base.values[k] = m + 0.5 * h;
        }
        let mut lu = SparseLu::new(pattern)?;
        let mut constrained = lhs_base.clone();
        constrained.constrain(forms.space.constrained(), C64::new(1.0, 0.0));
        let base_factor = lu.factor(&constrained)?;
        Ok(CrankNicolson {
            forms,
            cfg: cfg.clone(),
            lhs_base,
            rhs_base,
            lu,
            base_factor,
        })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    fn is_linear(&self) -> bool {
        let stab_lagged = self.cfg.stabilization == Stabilization::SplitParts
            && self.forms.space.kind == ElementKind::NonconformingEQ1Rot
            && self.cfg.omega != 0.0;
        self.cfg.beta == 0.0 && !stab_lagged
    }

    fn source_load(&self, source: Option<&SourceFn>, t_n: f64) -> Option<Vec<C64>> {
        let f = source?;
        let space = &self.forms.space;
        let tau = self.cfg.tau;
        Some(match self.cfg.source_evaluation {
            SourceEvaluation::Midpoint => assemble_load(space, f, t_n + 0.5 * tau),
            SourceEvaluation::Average => {
                let a = assemble_load(space, f, t_n);
                let b = assemble_load(space, f, t_n + tau);
                a.iter().zip(&b).map(|(a, b)| 0.5 * (a + b)).collect()
            }
        })
    }

    /// Lagged split-parts stabilization vector.
    fn split_stabilization(&self, u0: &[C64], u1: &[C64]) -> Vec<C64> {
        let half_omega = 0.5 * self.cfg.omega;
        let re_hat: Vec<f64> = u0
            .iter()
            .zip(u1)
            .map(|(a, b)| 0.5 * (a.re + b.re))
            .collect();
        let im_new: Vec<f64> = u1.iter().map(|z| z.im).collect();
        let b_re = self.forms.jump.mul_real(&re_hat);
        let b_im = self.forms.jump.mul_real(&im_new);
        b_re.iter()
            .zip(&b_im)
            .map(|(r, i)| C64::new(half_omega * i.re, -half_omega * r.re))
            .collect()
    }

    fn density_matrix(&self, u0: &[C64], u1: &[C64]) -> CsrMatrix<f64> {
        let space = &self.forms.space;
        match self.cfg.density {
            DensityEvaluation::Averaged => assemble_density_mass(space, u0, u1),
            DensityEvaluation::Midpoint => {
                let hat: Vec<C64> = u0.iter().zip(u1).map(|(a, b)| 0.5 * (a + b)).collect();
                assemble_single_density_mass(space, &hat)
            }
        }
    }

    /// Advances `u_n` at time `t_n` by one step.
    pub fn step(
        &mut self,
        u_n: &Field,
        source: Option<&SourceFn>,
        t_n: f64,
    ) -> Result<(Field, StepReport), SchemeError> {
        let n = self.forms.n_dofs();
        if u_n.len() != n {
            return Err(SchemeError::FieldMismatch {
                got: u_n.len(),
                expected: n,
            });
        }
        let constrained = self.forms.space.constrained();
        let u0 = &u_n.coeffs;
        let mut rhs_fixed = self.rhs_base.mul_vec(u0);
        if let Some(load) = self.source_load(source, t_n) {
            for (r, l) in rhs_fixed.iter_mut().zip(&load) {
                *r += l;
            }
        }

        let mut report = StepReport::default();
        let mut current = u0.clone();
        let linear = self.is_linear();
        let half_beta = 0.5 * self.cfg.beta;

        loop {
            report.iterations += 1;
            let mut rhs = rhs_fixed.clone();
            let mut density = None;
            if self.cfg.beta != 0.0 {
                let md = self.density_matrix(u0, &current);
                for (r, v) in rhs.iter_mut().zip(md.mul_vec(u0)) {
                    *r += half_beta * v;
                }
                density = Some(md);
            }
            if self.cfg.stabilization == Stabilization::SplitParts
                && self.forms.space.kind == ElementKind::NonconformingEQ1Rot
            {
                for (r, s) in rhs.iter_mut().zip(self.split_stabilization(u0, &current)) {
                    *r += s;
                }
            }
            for (r, &fixed) in rhs.iter_mut().zip(constrained) {
                if fixed {
                    *r = C64::new(0.0, 0.0);
                }
            }

            let next = match (&density, self.cfg.linear_solver) {
                (None, _) => self.base_factor.solve(&rhs)?,
                (Some(md), solver) => {
                    let mut sys = self.lhs_base.clone();
                    for (v, d) in sys.values.iter_mut().zip(&md.values) {
                        *v -= half_beta * d;
                    }
                    sys.constrain(constrained, C64::new(1.0, 0.0));
                    match solver {
                        LinearSolverKind::DirectSparse => {
                            report.factorizations += 1;
                            self.lu.factor(&sys)?.solve(&rhs)?
                        }
                        LinearSolverKind::Krylov { tol, max_iters } => {
                            let mut x = current.clone();
                            let stats =
                                gmres(&sys, &self.base_factor, &rhs, &mut x, tol, max_iters, 50)?;
                            report.krylov_iterations += stats.iterations;
                            x
                        }
                    }
                }
            };

            let diff: Vec<C64> = next.iter().zip(&current).map(|(a, b)| a - b).collect();
            let diff_norm = mass_norm(&self.forms.mass, &diff);
            let next_norm = mass_norm(&self.forms.mass, &next);
            report.increment = if next_norm > 0.0 {
                diff_norm / next_norm
            } else {
                diff_norm
            };
            current = next;
            if linear || report.increment <= self.cfg.fixed_point_tol {
                break;
            }
            if report.iterations >= self.cfg.fixed_point_max_iters {
                return Err(SchemeError::NonConvergence(report));
            }
        }
        debug!("t={:.6} step: {}", t_n + self.cfg.tau, report);
        Ok((
            Field {
                space: u_n.space.clone(),
                coeffs: current,
            },
            report,
        ))
    }
}

/// One Crank-Nicolson step from `u_n` at `t_n`.
pub fn cn_step(
    u_n: &Field,
    forms: &FormSet,
    cfg: &SchemeConfig,
    source: Option<&SourceFn>,
    t_n: f64,
) -> Result<(Field, StepReport), SchemeError> {
    CrankNicolson::new(forms, cfg)?.step(u_n, source, t_n)
}

/// Runs `round(T / tau)` steps from `u0` at `t = 0`, calling `observer`
/// after every step.
pub fn evolve<O>(
    u0: &Field,
    cfg: &SchemeConfig,
    forms: &FormSet,
    source: Option<&SourceFn>,
    mut observer: O,
) -> Result<Field, SchemeError>
where
    O: FnMut(&StepInfo<'_>),
{
    cfg.validate()?;
    let n_steps = cfg.n_steps();
    let mut stepper = CrankNicolson::new(forms, cfg)?;
    let mut u = u0.clone();
    for step in 1..=n_steps {
        let t_prev = (step - 1) as f64 * cfg.tau;
        let (next, report) = stepper
            .step(&u, source, t_prev)
            .map_err(|e| SchemeError::Step {
                step,
                source: Box::new(e),
            })?;
        u = next;
        observer(&StepInfo {
            step,
            t: step as f64 * cfg.tau,
            field: &u,
            report: &report,
        });
    }
    Ok(u)
}
