//! Conserved quantities, norms, interpolation and the interpolated
//! postprocessing operator used for superconvergence measurements.

use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::assembly::{FeSpace, FormSet};
use crate::elements::{gauss_legendre_1d, gauss_rule, ElementKind, REFERENCE_VERTICES};
use crate::mesh::{build_mesh, StructuredMesh};
use crate::scheme::{Field, SchemeConfig};
use crate::sparse::C64;

/// Gauss points per direction for edge and cell means in interpolation.
const INTERPOLATION_ORDER: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum ObservableError {
    #[error("postprocessing needs even cell counts, got {nx} x {ny}")]
    OddCellCount { nx: usize, ny: usize },
}

/// One row of a conservation trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservableRecord {
    pub t: f64,
    pub mass: f64,
    pub energy_h: f64,
    pub h1_broken_norm: f64,
    pub rel_mass_err: f64,
    pub rel_energy_err: f64,
    pub fp_iters: usize,
}

type ScalarFn = dyn Fn(f64, f64, f64) -> C64 + Send + Sync;
type GradientFn = dyn Fn(f64, f64, f64) -> [C64; 2] + Send + Sync;

/// A closed-form solution `u(x, y, t)` with optional gradient and the
/// matching source term.
#[derive(Clone)]
pub struct ExactSolution {
    pub value: Arc<ScalarFn>,
    pub gradient: Option<Arc<GradientFn>>,
    pub source: Option<Arc<ScalarFn>>,
}

impl std::fmt::Debug for ExactSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExactSolution")
            .field("gradient", &self.gradient.is_some())
            .field("source", &self.source.is_some())
            .finish()
    }
}

impl ExactSolution {
    pub fn new<F>(value: F) -> Self
    where
        F: Fn(f64, f64, f64) -> C64 + Send + Sync + 'static,
    {
        ExactSolution {
            value: Arc::new(value),
            gradient: None,
            source: None,
        }
    }

    pub fn with_gradient<G>(mut self, gradient: G) -> Self
    where
        G: Fn(f64, f64, f64) -> [C64; 2] + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn with_source<S>(mut self, source: S) -> Self
    where
        S: Fn(f64, f64, f64) -> C64 + Send + Sync + 'static,
    {
        self.source = Some(Arc::new(source));
        self
    }

    pub fn eval(&self, x: f64, y: f64, t: f64) -> C64 {
        (self.value)(x, y, t)
    }
}

/// Discrete mass `u^H M u`.
pub fn mass_of(u: &Field, forms: &FormSet) -> f64 {
    forms.mass.quadratic_form(&u.coeffs).re
}

pub fn l2_norm(u: &Field, forms: &FormSet) -> f64 {
    mass_of(u, forms).max(0.0).sqrt()
}

/// Broken H1 seminorm `(sum_K |u|_{1,K}^2)^{1/2}`.
pub fn h1_broken_norm(u: &Field, forms: &FormSet) -> f64 {
    forms.stiffness.quadratic_form(&u.coeffs).re.max(0.0).sqrt()
}

/// `int |u_h|^4` with the assembly quadrature of the space.
pub fn l4_fourth_power(u: &Field) -> f64 {
    let space = &u.space;
    let mut total = 0.0;
    for cell in 0..space.mesh.n_cells() {
        for qp in space.quad_points(cell) {
            let v = space.value_at_quad(&u.coeffs, cell, qp.index).norm_sqr();
            total += qp.weight * v * v;
        }
    }
    total
}

/// Discrete energy `1/2 |u|_{1,h}^2 + (V u, u) + beta/2 |u|_4^4 - Omega Re (L_z u, u)_h`.
pub fn energy_h_of(u: &Field, forms: &FormSet, cfg: &SchemeConfig) -> f64 {
    let kinetic = 0.5 * forms.stiffness.quadratic_form(&u.coeffs).re;
    let potential = forms.potential.quadratic_form(&u.coeffs).re;
    let interaction = if cfg.beta != 0.0 {
        0.5 * cfg.beta * l4_fourth_power(u)
    } else {
        0.0
    };
    let rotation = if cfg.omega != 0.0 {
        cfg.omega * forms.lz.quadratic_form(&u.coeffs).re
    } else {
        0.0
    };
    kinetic + potential + interaction - rotation
}

/// `||v||_{L4} / (||v||^{1/2} (||v|| + ||v||_{1,h})^{1/2})`.
pub fn gagliardo_nirenberg_ratio(u: &Field, forms: &FormSet) -> f64 {
    let l4 = l4_fourth_power(u).powf(0.25);
    let l2 = l2_norm(u, forms);
    let h1 = h1_broken_norm(u, forms);
    l4 / (l2.sqrt() * (l2 + h1).sqrt())
}

/// `int (x^2 + y^2) |u_h|^2`.
pub fn second_moment(u: &Field) -> f64 {
    let space = &u.space;
    let mut total = 0.0;
    for cell in 0..space.mesh.n_cells() {
        for qp in space.quad_points(cell) {
            let v = space.value_at_quad(&u.coeffs, cell, qp.index).norm_sqr();
            total += qp.weight * (qp.x * qp.x + qp.y * qp.y) * v;
        }
    }
    total
}

/// `|K|^{-1} int_K |u_h|^2` per cell, row-major.
pub fn cell_average_density(u: &Field) -> Vec<f64> {
    let space = &u.space;
    let area = space.mesh.cell_area();
    (0..space.mesh.n_cells())
        .map(|cell| {
            space
                .quad_points(cell)
                .map(|qp| qp.weight * space.value_at_quad(&u.coeffs, cell, qp.index).norm_sqr())
                .sum::<f64>()
                / area
        })
        .collect()
}

/// `|u_h|^2` at the mesh nodes, row-major. For EQ1rot the value is averaged
/// over the cells sharing the node.
pub fn nodal_density(u: &Field) -> Vec<f64> {
    let space = &u.space;
    let mesh = &space.mesh;
    match space.kind {
        ElementKind::ConformingQ1 => u.coeffs.iter().map(|z| z.norm_sqr()).collect(),
        ElementKind::NonconformingEQ1Rot => {
            let mut sum = vec![0.0; mesh.n_nodes()];
            let mut count = vec![0usize; mesh.n_nodes()];
            for cell in 0..mesh.n_cells() {
                for (k, &[xi, eta]) in REFERENCE_VERTICES.iter().enumerate() {
                    let (v, _) = space.evaluate_reference(&u.coeffs, cell, xi, eta);
                    let node = mesh.cells[cell][k];
                    sum[node] += v.norm_sqr();
                    count[node] += 1;
                }
            }
            sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect()
        }
    }
}

/// Canonical interpolant coefficients of `f`: nodal values for Q1, edge
/// and cell means for EQ1rot. Constrained entries are not pinned.
pub fn interpolate<F>(space: &FeSpace, f: F) -> Vec<C64>
where
    F: Fn(f64, f64) -> C64,
{
    let mesh = &space.mesh;
    match space.kind {
        ElementKind::ConformingQ1 => mesh.nodes.iter().map(|&[x, y]| f(x, y)).collect(),
        ElementKind::NonconformingEQ1Rot => {
            let (t, w) = gauss_legendre_1d(INTERPOLATION_ORDER).expect("valid order");
            let mut coeffs = Vec::with_capacity(space.n_dofs());
            for edge in &mesh.edges {
                let [a, b] = [mesh.nodes[edge.nodes[0]], mesh.nodes[edge.nodes[1]]];
                let mean: C64 = t
                    .iter()
                    .zip(&w)
                    .map(|(&s, &ws)| {
                        let x = 0.5 * (a[0] + b[0]) + 0.5 * s * (b[0] - a[0]);
                        let y = 0.5 * (a[1] + b[1]) + 0.5 * s * (b[1] - a[1]);
                        f(x, y) * (0.5 * ws)
                    })
                    .sum();
                coeffs.push(mean);
            }
            let rule = gauss_rule(INTERPOLATION_ORDER).expect("valid order");
            for cell in 0..mesh.n_cells() {
                let mean: C64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(&[xi, eta], &w)| {
                        let [x, y] = mesh.to_physical(cell, xi, eta);
                        f(x, y) * (0.25 * w)
                    })
                    .sum();
                coeffs.push(mean);
            }
            coeffs
        }
    }
}

/// `I_h u(., t)` with constrained DOFs set to zero.
pub fn interpolate_exact(exact: &ExactSolution, t: f64, space: &Arc<FeSpace>) -> Field {
    let coeffs = interpolate(space, |x, y| exact.eval(x, y, t));
    Field::from_coeffs(space.clone(), coeffs).expect("interpolant has the space's length")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub l2: f64,
    /// Broken H1 seminorm error; absent without an exact gradient.
    pub h1: Option<f64>,
}

fn error_rule(space: &FeSpace) -> crate::elements::QuadratureRule {
    gauss_rule((space.quadrature.order + 2).min(10)).expect("valid order")
}

/// `||u(., t) - u_h||_{L2}` and `||u(., t) - u_h||_{1,h}` by elevated
/// quadrature.
pub fn error_norms(u_h: &Field, exact: &ExactSolution, t: f64) -> ErrorNorms {
    let space = &u_h.space;
    let mesh = &space.mesh;
    let rule = error_rule(space);
    let jac = space.jacobian();
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for cell in 0..mesh.n_cells() {
        for (&[xi, eta], &w) in rule.points.iter().zip(&rule.weights) {
            let [x, y] = mesh.to_physical(cell, xi, eta);
            let (v, g) = space.evaluate_reference(&u_h.coeffs, cell, xi, eta);
            l2 += w * jac * (exact.eval(x, y, t) - v).norm_sqr();
            if let Some(grad) = &exact.gradient {
                let ge = grad(x, y, t);
                h1 += w * jac * ((ge[0] - g[0]).norm_sqr() + (ge[1] - g[1]).norm_sqr());
            }
        }
    }
    ErrorNorms {
        l2: l2.sqrt(),
        h1: exact.gradient.as_ref().map(|_| h1.sqrt()),
    }
}

/// `||I_h u(., t) - u_h||_{1,h}`.
pub fn superclose_norm(u_h: &Field, exact: &ExactSolution, t: f64, forms: &FormSet) -> f64 {
    let ih = interpolate_exact(exact, t, &u_h.space);
    let diff: Vec<C64> = ih
        .coeffs
        .iter()
        .zip(&u_h.coeffs)
        .map(|(a, b)| a - b)
        .collect();
    forms.stiffness.quadratic_form(&diff).re.max(0.0).sqrt()
}

/// Exponents of the biquadratic monomials `s^a r^b`.
const Q2_MONOMIALS: [(i32, i32); 9] = [
    (0, 0),
    (1, 0),
    (0, 1),
    (1, 1),
    (2, 0),
    (0, 2),
    (2, 1),
    (1, 2),
    (2, 2),
];

/// Piecewise biquadratic field on the 2x2 macro cells of a fine mesh.
#[derive(Debug, Clone)]
pub struct PostProcessed {
    pub macro_mesh: StructuredMesh,
    /// Monomial coefficients per macro cell in local coordinates `[-1, 1]^2`.
    pub coefficients: Vec<[C64; 9]>,
}

fn mean_power_on(a: i32, lo: f64, hi: f64) -> f64 {
    if (hi - lo).abs() < 1e-15 {
        lo.powi(a)
    } else {
        (hi.powi(a + 1) - lo.powi(a + 1)) / ((a + 1) as f64 * (hi - lo))
    }
}

/// A DOF functional on a macro cell: the mean of a monomial over the box
/// `[s0, s1] x [r0, r1]` (degenerate boxes give edge means or point values).
#[derive(Debug, Clone, Copy)]
struct MacroFunctional {
    fine_offset: (usize, usize),
    slot: usize,
    s: (f64, f64),
    r: (f64, f64),
}

fn macro_functionals(kind: ElementKind) -> Vec<MacroFunctional> {
    let mut out: Vec<MacroFunctional> = Vec::new();
    for (a, b) in [(0usize, 0usize), (1, 0), (0, 1), (1, 1)] {
        let s0 = -1.0 + a as f64;
        let r0 = -1.0 + b as f64;
        let candidates: Vec<((f64, f64), (f64, f64))> = match kind {
            ElementKind::ConformingQ1 => REFERENCE_VERTICES
                .iter()
                .map(|&[xi, eta]| {
                    let s = s0 + 0.5 * (xi + 1.0);
                    let r = r0 + 0.5 * (eta + 1.0);
                    ((s, s), (r, r))
                })
                .collect(),
            ElementKind::NonconformingEQ1Rot => vec![
                ((s0, s0 + 1.0), (r0, r0)),
                ((s0 + 1.0, s0 + 1.0), (r0, r0 + 1.0)),
                ((s0, s0 + 1.0), (r0 + 1.0, r0 + 1.0)),
                ((s0, s0), (r0, r0 + 1.0)),
                ((s0, s0 + 1.0), (r0, r0 + 1.0)),
            ],
        };
        for (slot, (s, r)) in candidates.into_iter().enumerate() {
            let duplicate = out.iter().any(|f| {
                (f.s.0 - s.0).abs() < 1e-12
                    && (f.s.1 - s.1).abs() < 1e-12
                    && (f.r.0 - r.0).abs() < 1e-12
                    && (f.r.1 - r.1).abs() < 1e-12
            });
            if !duplicate {
                out.push(MacroFunctional {
                    fine_offset: (a, b),
                    slot,
                    s,
                    r,
                });
            }
        }
    }
    out
}

/// Interpolated postprocessing onto biquadratics over 2x2 macro cells.
/// Q1: the 9-node biquadratic interpolant of the nodal values. EQ1rot:
/// least-squares fit of the 12 fine edge means and 4 fine cell means in
/// `Q2` without the `s^2 r^2` term.
pub fn postprocess_i2h(u_h: &Field) -> Result<PostProcessed, ObservableError> {
    let space = &u_h.space;
    let mesh = &space.mesh;
    if !mesh.nx.is_multiple_of(2) || !mesh.ny.is_multiple_of(2) {
        return Err(ObservableError::OddCellCount {
            nx: mesh.nx,
            ny: mesh.ny,
        });
    }
    let macro_mesh = build_mesh(mesh.domain, mesh.nx / 2, mesh.ny / 2).expect("valid coarse mesh");
    let functionals = macro_functionals(space.kind);
    let rows = functionals.len();
    let mut design = DMatrix::<f64>::zeros(rows, 9);
    for (i, f) in functionals.iter().enumerate() {
        for (m, &(a, b)) in Q2_MONOMIALS.iter().enumerate() {
            // (s^2 - 1/3)(r^2 - 1/3) has zero edge and cell means, so the
            // rotated fit drops s^2 r^2
            if space.kind == ElementKind::NonconformingEQ1Rot && (a, b) == (2, 2) {
                continue;
            }
            design[(i, m)] = mean_power_on(a, f.s.0, f.s.1) * mean_power_on(b, f.r.0, f.r.1);
        }
    }
    let fit = design.pseudo_inverse(1e-12).expect("valid tolerance");

    let mut coefficients = Vec::with_capacity(macro_mesh.n_cells());
    for mc in 0..macro_mesh.n_cells() {
        let (ci, cj) = macro_mesh.cell_ij(mc);
        let data: Vec<C64> = functionals
            .iter()
            .map(|f| {
                let fine = mesh.cell_index(2 * ci + f.fine_offset.0, 2 * cj + f.fine_offset.1);
                u_h.coeffs[space.dofs.cell_dofs(fine)[f.slot]]
            })
            .collect();
        let mut c = [C64::new(0.0, 0.0); 9];
        for (m, cm) in c.iter_mut().enumerate() {
            *cm = (0..rows).map(|i| data[i] * fit[(m, i)]).sum();
        }
        coefficients.push(c);
    }
    Ok(PostProcessed {
        macro_mesh,
        coefficients,
    })
}

impl PostProcessed {
    fn eval_local(&self, cell: usize, s: f64, r: f64) -> (C64, [C64; 2]) {
        let c = &self.coefficients[cell];
        let [gx, gy] = [2.0 / self.macro_mesh.hx, 2.0 / self.macro_mesh.hy];
        let mut v = C64::new(0.0, 0.0);
        let mut g = [C64::new(0.0, 0.0); 2];
        for (cm, &(a, b)) in c.iter().zip(&Q2_MONOMIALS) {
            v += cm * (s.powi(a) * r.powi(b));
            if a > 0 {
                g[0] += cm * (a as f64 * s.powi(a - 1) * r.powi(b) * gx);
            }
            if b > 0 {
                g[1] += cm * (b as f64 * s.powi(a) * r.powi(b - 1) * gy);
            }
        }
        (v, g)
    }

    /// Value and gradient at a physical point.
    pub fn evaluate(&self, x: f64, y: f64) -> (C64, [C64; 2]) {
        let cell = self.macro_mesh.locate(x, y);
        let [xc, yc] = self.macro_mesh.cell_center(cell);
        let s = 2.0 * (x - xc) / self.macro_mesh.hx;
        let r = 2.0 * (y - yc) / self.macro_mesh.hy;
        self.eval_local(cell, s, r)
    }

    /// `||u - I_2h u_h||_{L2}` and the H1 seminorm error, per macro cell
    /// with a 6-point Gauss rule.
    pub fn error_norms(&self, exact: &ExactSolution, t: f64) -> ErrorNorms {
        let rule = gauss_rule(6).expect("valid order");
        let m = &self.macro_mesh;
        let jac = 0.25 * m.hx * m.hy;
        let mut l2 = 0.0;
        let mut h1 = 0.0;
        for cell in 0..m.n_cells() {
            for (&[s, r], &w) in rule.points.iter().zip(&rule.weights) {
                let [x, y] = m.to_physical(cell, s, r);
                let (v, g) = self.eval_local(cell, s, r);
                l2 += w * jac * (exact.eval(x, y, t) - v).norm_sqr();
                if let Some(grad) = &exact.gradient {
                    let ge = grad(x, y, t);
                    h1 += w * jac * ((ge[0] - g[0]).norm_sqr() + (ge[1] - g[1]).norm_sqr());
                }
            }
        }
        ErrorNorms {
            l2: l2.sqrt(),
            h1: exact.gradient.as_ref().map(|_| h1.sqrt()),
        }
    }
}
