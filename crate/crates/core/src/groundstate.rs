//! Ground states by normalized gradient flow.
//!
//! Each flow step solves the backward-Euler system
//! `(M/dt + A/2 + P - Omega L) u* = (M/dt) u^k - beta M_{|u^k|^2} u^k`
//! and renormalizes `u^{k+1} = u* / ||u*||_{L2}`. The linear part is implicit
//! (factorized once per `dt`); the cubic term is explicit.

use std::sync::Arc;

use log::{debug, warn};

use crate::assembly::{assemble_single_density_mass, FeSpace, FormSet};
use crate::elements::ElementKind;
use crate::observables::{energy_h_of, interpolate};
use crate::scheme::{Field, SchemeConfig, SchemeError};
use crate::sparse::{CsrMatrix, Factorization, SparseLu, C64};

/// Built-in initial wave functions, normalized after interpolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialProfile {
    Gaussian {
        sigma: f64,
        center: [f64; 2],
    },
    /// Gaussian times `((x + i y) / r)^m` around `center`, i.e. `m` quanta of
    /// circulation; `|u|` vanishes at the core and forms a ring.
    GaussianWithVortex {
        sigma: f64,
        winding: i32,
        center: [f64; 2],
    },
}

impl InitialProfile {
    pub fn eval(&self, x: f64, y: f64) -> C64 {
        match *self {
            InitialProfile::Gaussian { sigma, center } => {
                let (dx, dy) = (x - center[0], y - center[1]);
                C64::new((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp(), 0.0)
            }
            InitialProfile::GaussianWithVortex {
                sigma,
                winding,
                center,
            } => {
                let (dx, dy) = (x - center[0], y - center[1]);
                let r2 = dx * dx + dy * dy;
                let envelope = (-r2 / (2.0 * sigma * sigma)).exp();
                let m = winding.unsigned_abs() as i32;
                let z = C64::new(dx, if winding >= 0 { dy } else { -dy });
                // (x + iy)^m e^{-r^2/2s^2} / s^m: smooth at the core
                z.powi(m) * (envelope / sigma.powi(m))
            }
        }
    }

    /// Interpolated, constrained and normalized to unit mass.
    pub fn to_field(&self, forms: &FormSet) -> Field {
        let space: &Arc<FeSpace> = &forms.space;
        let coeffs = interpolate(space, |x, y| self.eval(x, y));
        let field = Field::from_coeffs(space.clone(), coeffs).expect("length matches");
        normalize(&field, forms)
    }
}

fn normalize(u: &Field, forms: &FormSet) -> Field {
    let norm = forms.mass.quadratic_form(&u.coeffs).re.sqrt();
    if norm > 0.0 {
        u.scaled(C64::new(1.0 / norm, 0.0))
    } else {
        u.clone()
    }
}

#[derive(Debug, Clone)]
pub struct GroundStateConfig {
    pub dt: f64,
    /// Stop when `||u^{k+1} - u^k||_{L2} / dt` falls below this.
    pub tol: f64,
    pub max_steps: usize,
    pub omega: f64,
    pub beta: f64,
    pub initial: InitialProfile,
    /// Energy increases above this trigger `dt` halving.
    pub energy_increase_tol: f64,
    pub min_dt: f64,
}

impl Default for GroundStateConfig {
    fn default() -> Self {
        GroundStateConfig {
            dt: 0.01,
            tol: 1e-8,
            max_steps: 20_000,
            omega: 0.0,
            beta: 0.0,
            initial: InitialProfile::Gaussian {
                sigma: 1.0,
                center: [0.0, 0.0],
            },
            energy_increase_tol: 1e-8,
            min_dt: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundState {
    /// Lowest-energy accepted iterate.
    pub field: Field,
    pub energy: f64,
    /// `false` when the step limit was hit before the stopping criterion.
    pub converged: bool,
    pub steps: usize,
    pub final_dt: f64,
    /// Energy after each accepted step (index 0 is the initial state).
    pub energies: Vec<f64>,
    pub last_residual: f64,
}

/// Factorized `M/dt + A/2 + P - Omega L` with Dirichlet rows.
fn flow_operator(
    forms: &FormSet,
    omega: f64,
    dt: f64,
    lu: &mut SparseLu,
) -> Result<Factorization, SchemeError> {
    let lz = match forms.space.kind {
        ElementKind::NonconformingEQ1Rot => forms.hermitian_lz(),
        ElementKind::ConformingQ1 => forms.lz.clone(),
    };
    let mut lhs = CsrMatrix::zeros(forms.space.pattern.clone());
    for k in 0..lhs.values.len() {
        lhs.values[k] = C64::new(
            forms.mass.values[k] / dt + 0.5 * forms.stiffness.values[k] + forms.potential.values[k],
            0.0,
        ) - lz.values[k] * omega;
    }
    lhs.constrain(forms.space.constrained(), C64::new(1.0, 0.0));
    Ok(lu.factor(&lhs)?)
}

/// Runs the normalized gradient flow from `cfg.initial`.
pub fn gradient_flow_ground_state(
    cfg: &GroundStateConfig,
    forms: &FormSet,
) -> Result<GroundState, SchemeError> {
    if !(cfg.dt > 0.0 && cfg.tol > 0.0) {
        return Err(SchemeError::InvalidConfig(
            "flow step and tolerance must be positive".into(),
        ));
    }
    gradient_flow_from(cfg.initial.to_field(forms), cfg, forms)
}

/// Runs the normalized gradient flow from a given state.
pub fn gradient_flow_from(
    initial: Field,
    cfg: &GroundStateConfig,
    forms: &FormSet,
) -> Result<GroundState, SchemeError> {
    let energy_cfg = SchemeConfig {
        omega: cfg.omega,
        beta: cfg.beta,
        ..Default::default()
    };
    let constrained = forms.space.constrained();
    let mut lu = SparseLu::new(forms.space.pattern.clone())?;
    let mut dt = cfg.dt;
    let mut op = flow_operator(forms, cfg.omega, dt, &mut lu)?;

    let mut u = normalize(&initial, forms);
    let mut energy = energy_h_of(&u, forms, &energy_cfg);
    let mut energies = vec![energy];
    let mut best = (u.clone(), energy);
    let mut residual = f64::INFINITY;
    let mut steps = 0;

    while steps < cfg.max_steps {
        let mut rhs = forms.mass.mul_vec(&u.coeffs);
        for r in rhs.iter_mut() {
            *r /= dt;
        }
        if cfg.beta != 0.0 {
            let md = assemble_single_density_mass(&forms.space, &u.coeffs);
            for (r, v) in rhs.iter_mut().zip(md.mul_vec(&u.coeffs)) {
                *r -= cfg.beta * v;
            }
        }
        for (r, &fixed) in rhs.iter_mut().zip(constrained) {
            if fixed {
                *r = C64::new(0.0, 0.0);
            }
        }
        let star = op.solve(&rhs)?;
        let next = normalize(&Field::from_coeffs(u.space.clone(), star)?, forms);
        let next_energy = energy_h_of(&next, forms, &energy_cfg);

        if next_energy > energy + cfg.energy_increase_tol {
            if dt / 2.0 < cfg.min_dt {
                warn!("gradient flow: step size underflow at dt={dt:e}");
                break;
            }
            dt /= 2.0;
            debug!(
                "gradient flow: energy rose by {:e}, halving dt to {dt:e}",
                next_energy - energy
            );
            op = flow_operator(forms, cfg.omega, dt, &mut lu)?;
            continue;
        }

        let diff: Vec<C64> = next
            .coeffs
            .iter()
            .zip(&u.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        residual = forms.mass.quadratic_form(&diff).re.max(0.0).sqrt() / dt;
        u = next;
        energy = next_energy;
        energies.push(energy);
        steps += 1;
        if energy <= best.1 {
            best = (u.clone(), energy);
        }
        if residual < cfg.tol {
            return Ok(GroundState {
                field: u,
                energy,
                converged: true,
                steps,
                final_dt: dt,
                energies,
                last_residual: residual,
            });
        }
    }
    warn!("gradient flow stopped after {steps} steps, residual {residual:e}");
    Ok(GroundState {
        field: best.0,
        energy: best.1,
        converged: false,
        steps,
        final_dt: dt,
        energies,
        last_residual: residual,
    })
}
