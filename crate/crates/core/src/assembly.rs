//! Finite element spaces and assembly of the sparse forms of the rotating
//! GPE weak formulation.
//!
//! All forms are assembled over every degree of freedom, constrained ones
//! included; Dirichlet conditions are imposed later on the system matrix by
//! zeroing rows/columns and placing a unit diagonal
//! ([`CsrMatrix::constrain`]). Entry `(i, j)` of each form is the form
//! applied to trial function `j` and test function `i`.

use std::fmt;
use std::sync::Arc;

use crate::elements::{
    build_dof_map, gauss_legendre_1d, gauss_rule, reference_basis, DofMap, ElementError,
    ElementKind, QuadratureRule, ReferenceBasis, Tabulation,
};
use crate::mesh::StructuredMesh;
use crate::sparse::{CsrMatrix, Pattern, C64};

/// Gauss points used for the edge integrals of the jump pairing.
pub const EDGE_QUADRATURE_ORDER: usize = 5;

/// Trap potential `V(x, y)`.
#[derive(Clone)]
pub enum PotentialSpec {
    /// `(gx^2 x^2 + gy^2 y^2) / 2`.
    Harmonic {
        gamma_x: f64,
        gamma_y: f64,
    },
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
    Zero,
}

impl PotentialSpec {
    pub fn harmonic(gamma_x: f64, gamma_y: f64) -> Self {
        PotentialSpec::Harmonic { gamma_x, gamma_y }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            PotentialSpec::Harmonic { gamma_x, gamma_y } => {
                0.5 * (gamma_x * gamma_x * x * x + gamma_y * gamma_y * y * y)
            }
            PotentialSpec::Custom(f) => f(x, y),
            PotentialSpec::Zero => 0.0,
        }
    }
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialSpec::Harmonic { gamma_x, gamma_y } => f
                .debug_struct("Harmonic")
                .field("gamma_x", gamma_x)
                .field("gamma_y", gamma_y)
                .finish(),
            PotentialSpec::Custom(_) => f.write_str("Custom(..)"),
            PotentialSpec::Zero => f.write_str("Zero"),
        }
    }
}

/// A finite element space on a structured mesh.
#[derive(Debug)]
pub struct FeSpace {
    pub mesh: Arc<StructuredMesh>,
    pub kind: ElementKind,
    pub dofs: DofMap,
    pub basis: ReferenceBasis,
    pub quadrature: QuadratureRule,
    /// Basis values and reference gradients at the quadrature points.
    pub tabulation: Tabulation,
    pub pattern: Arc<Pattern>,
}

/// Physical data of one quadrature point on one cell.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub index: usize,
    pub x: f64,
    pub y: f64,
    /// Quadrature weight times the Jacobian.
    pub weight: f64,
}

impl FeSpace {
    pub fn new(mesh: Arc<StructuredMesh>, kind: ElementKind) -> Self {
        Self::with_quadrature(mesh, kind, kind.default_quadrature_order())
            .expect("default quadrature order is valid")
    }

    pub fn with_quadrature(
        mesh: Arc<StructuredMesh>,
        kind: ElementKind,
        order: usize,
    ) -> Result<Self, ElementError> {
        let dofs = build_dof_map(&mesh, kind);
        let basis = reference_basis(kind);
        let quadrature = gauss_rule(order)?;
        let tabulation = basis.tabulate(&quadrature.points);
        let pattern = Arc::new(Pattern::from_dof_map(&dofs));
        Ok(FeSpace {
            mesh,
            kind,
            dofs,
            basis,
            quadrature,
            tabulation,
            pattern,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.n_dofs
    }

    pub fn constrained(&self) -> &[bool] {
        &self.dofs.constrained
    }

    pub fn jacobian(&self) -> f64 {
        0.25 * self.mesh.hx * self.mesh.hy
    }

    /// Reference-to-physical gradient scaling.
    pub fn gradient_scale(&self) -> [f64; 2] {
        [2.0 / self.mesh.hx, 2.0 / self.mesh.hy]
    }

    pub fn quad_points(&self, cell: usize) -> impl Iterator<Item = QuadPoint> + '_ {
        let jac = self.jacobian();
        self.quadrature
            .points
            .iter()
            .zip(&self.quadrature.weights)
            .enumerate()
            .map(move |(index, (&[xi, eta], &w))| {
                let [x, y] = self.mesh.to_physical(cell, xi, eta);
                QuadPoint {
                    index,
                    x,
                    y,
                    weight: w * jac,
                }
            })
    }

    /// Physical gradient of local basis `a` at quadrature point `q`.
    pub fn basis_gradient(&self, q: usize, a: usize) -> [f64; 2] {
        let [sx, sy] = self.gradient_scale();
        let g = self.tabulation.gradient(q, a);
        [g[0] * sx, g[1] * sy]
    }

    /// Value of the FE function at quadrature point `q` of `cell`.
    pub fn value_at_quad(&self, u: &[C64], cell: usize, q: usize) -> C64 {
        self.dofs
            .cell_dofs(cell)
            .iter()
            .zip(self.tabulation.point_values(q))
            .map(|(&d, &phi)| u[d] * phi)
            .sum()
    }

    /// Value and physical gradient of the FE function at reference point
    /// `(xi, eta)` of `cell`.
    pub fn evaluate_reference(&self, u: &[C64], cell: usize, xi: f64, eta: f64) -> (C64, [C64; 2]) {
        let [sx, sy] = self.gradient_scale();
        let mut v = C64::new(0.0, 0.0);
        let mut g = [C64::new(0.0, 0.0); 2];
        for (a, &d) in self.dofs.cell_dofs(cell).iter().enumerate() {
            let phi = self.basis.value(a, xi, eta);
            let dphi = self.basis.gradient(a, xi, eta);
            v += u[d] * phi;
            g[0] += u[d] * (dphi[0] * sx);
            g[1] += u[d] * (dphi[1] * sy);
        }
        (v, g)
    }

    /// Value and gradient at a physical point.
    pub fn evaluate(&self, u: &[C64], x: f64, y: f64) -> (C64, [C64; 2]) {
        let cell = self.mesh.locate(x, y);
        let [xc, yc] = self.mesh.cell_center(cell);
        let xi = 2.0 * (x - xc) / self.mesh.hx;
        let eta = 2.0 * (y - yc) / self.mesh.hy;
        self.evaluate_reference(u, cell, xi, eta)
    }

    fn assemble_real<F>(&self, mut element: F) -> CsrMatrix<f64>
    where
        F: FnMut(usize, &mut [f64]),
    {
        let n = self.kind.local_dofs();
        let mut m = CsrMatrix::zeros(self.pattern.clone());
        let mut local = vec![0.0; n * n];
        for cell in 0..self.mesh.n_cells() {
            local.iter_mut().for_each(|v| *v = 0.0);
            element(cell, &mut local);
            m.add_local(self.dofs.cell_dofs(cell), &local);
        }
        m
    }

    /// `sum_K int_K w(x) phi_j phi_i` for a real weight evaluated at
    /// quadrature points.
    fn weighted_mass<W>(&self, mut weight: W) -> CsrMatrix<f64>
    where
        W: FnMut(usize, &QuadPoint) -> f64,
    {
        let n = self.kind.local_dofs();
        self.assemble_real(|cell, local| {
            for qp in self.quad_points(cell) {
                let w = qp.weight * weight(cell, &qp);
                if w == 0.0 {
                    continue;
                }
                let phi = self.tabulation.point_values(qp.index);
                for a in 0..n {
                    for b in 0..n {
                        local[a * n + b] += w * phi[a] * phi[b];
                    }
                }
            }
        })
    }
}

pub fn assemble_mass(space: &FeSpace) -> CsrMatrix<f64> {
    space.weighted_mass(|_, _| 1.0)
}

pub fn assemble_stiffness(space: &FeSpace) -> CsrMatrix<f64> {
    let n = space.kind.local_dofs();
    space.assemble_real(|cell, local| {
        for qp in space.quad_points(cell) {
            for a in 0..n {
                let ga = space.basis_gradient(qp.index, a);
                for b in 0..n {
                    let gb = space.basis_gradient(qp.index, b);
                    local[a * n + b] += qp.weight * (ga[0] * gb[0] + ga[1] * gb[1]);
                }
            }
        }
    })
}

pub fn assemble_potential(space: &FeSpace, potential: &PotentialSpec) -> CsrMatrix<f64> {
    space.weighted_mass(|_, qp| potential.eval(qp.x, qp.y))
}

/// Rotation form `(L_z phi_j, phi_i)` with `L_z = -i (x d/dy - y d/dx)`.
pub fn assemble_lz(space: &FeSpace) -> CsrMatrix<C64> {
    let n = space.kind.local_dofs();
    let real = space.assemble_real(|cell, local| {
        for qp in space.quad_points(cell) {
            let phi = space.tabulation.point_values(qp.index);
            for b in 0..n {
                let g = space.basis_gradient(qp.index, b);
                let rot = qp.x * g[1] - qp.y * g[0];
                for a in 0..n {
                    local[a * n + b] += qp.weight * rot * phi[a];
                }
            }
        }
    });
    CsrMatrix {
        pattern: real.pattern,
        values: real.values.iter().map(|&v| C64::new(0.0, -v)).collect(),
    }
}

/// Boundary pairing `sum_K int_{dK} phi_j phi_i (x . n_perp) ds` with
/// `n_perp = (n_y, -n_x)` built from the outward normal of each cell. Only
/// the nonconforming space uses it; for Q1 the zero matrix is returned.
pub fn assemble_jump_pairing(space: &FeSpace) -> CsrMatrix<f64> {
    if space.kind == ElementKind::ConformingQ1 {
        return CsrMatrix::zeros(space.pattern.clone());
    }
    let (t, w) = gauss_legendre_1d(EDGE_QUADRATURE_ORDER).expect("valid order");
    let n = space.kind.local_dofs();
    let mesh = &space.mesh;
    space.assemble_real(|cell, local| {
        // (reference point on the edge, half edge length, x . n_perp)
        for edge in 0..4 {
            for (&s, &ws) in t.iter().zip(&w) {
                let (xi, eta, half_len) = match edge {
                    0 => (s, -1.0, 0.5 * mesh.hx),
                    1 => (1.0, s, 0.5 * mesh.hy),
                    2 => (s, 1.0, 0.5 * mesh.hx),
                    _ => (-1.0, s, 0.5 * mesh.hy),
                };
                let [x, y] = mesh.to_physical(cell, xi, eta);
                let weight = match edge {
                    0 => -x,
                    1 => -y,
                    2 => x,
                    _ => y,
                };
                let scale = ws * half_len * weight;
                let phi = space.basis.values(xi, eta);
                for a in 0..n {
                    for b in 0..n {
                        local[a * n + b] += scale * phi[a] * phi[b];
                    }
                }
            }
        }
    })
}

/// Mass matrix weighted by `(|a_h|^2 + |b_h|^2) / 2` evaluated pointwise at
/// quadrature points.
pub fn assemble_density_mass(space: &FeSpace, a: &[C64], b: &[C64]) -> CsrMatrix<f64> {
    assert_eq!(a.len(), space.n_dofs(), "field length mismatch");
    assert_eq!(b.len(), space.n_dofs(), "field length mismatch");
    space.weighted_mass(|cell, qp| {
        let ua = space.value_at_quad(a, cell, qp.index);
        let ub = space.value_at_quad(b, cell, qp.index);
        0.5 * (ua.norm_sqr() + ub.norm_sqr())
    })
}

/// Mass matrix weighted by `|a_h|^2`.
pub fn assemble_single_density_mass(space: &FeSpace, a: &[C64]) -> CsrMatrix<f64> {
    assert_eq!(a.len(), space.n_dofs(), "field length mismatch");
    space.weighted_mass(|cell, qp| space.value_at_quad(a, cell, qp.index).norm_sqr())
}

/// Load vector `(f(., t), phi_i)`.
pub fn assemble_load<F>(space: &FeSpace, f: F, t: f64) -> Vec<C64>
where
    F: Fn(f64, f64, f64) -> C64,
{
    let mut load = vec![C64::new(0.0, 0.0); space.n_dofs()];
    for cell in 0..space.mesh.n_cells() {
        let dofs = space.dofs.cell_dofs(cell);
        for qp in space.quad_points(cell) {
            let fv = f(qp.x, qp.y, t) * qp.weight;
            for (&d, &phi) in dofs.iter().zip(space.tabulation.point_values(qp.index)) {
                load[d] += fv * phi;
            }
        }
    }
    load
}

/// The assembled bilinear forms of one space and potential.
#[derive(Debug, Clone)]
pub struct FormSet {
    pub space: Arc<FeSpace>,
    pub potential_spec: PotentialSpec,
    /// `(phi_j, phi_i)`.
    pub mass: CsrMatrix<f64>,
    /// Broken `(grad phi_j, grad phi_i)_h`.
    pub stiffness: CsrMatrix<f64>,
    /// `(V phi_j, phi_i)`.
    pub potential: CsrMatrix<f64>,
    /// `(L_z phi_j, phi_i)_h`.
    pub lz: CsrMatrix<C64>,
    /// Boundary pairing, zero for Q1.
    pub jump: CsrMatrix<f64>,
}

impl FormSet {
    pub fn assemble(space: Arc<FeSpace>, potential: PotentialSpec) -> Self {
        let mass = assemble_mass(&space);
        let stiffness = assemble_stiffness(&space);
        let potential_m = assemble_potential(&space, &potential);
        let lz = assemble_lz(&space);
        let jump = assemble_jump_pairing(&space);
        FormSet {
            space,
            potential_spec: potential,
            mass,
            stiffness,
            potential: potential_m,
            lz,
            jump,
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.space.n_dofs()
    }

    /// Hermitian part of the rotation form, `L + (i/2) B`. For EQ1rot the
    /// skew part of `L` is exactly `-(i/2) B`; on constrained Q1 fields `L`
    /// is already Hermitian and `B = 0`.
    pub fn hermitian_lz(&self) -> CsrMatrix<C64> {
        let mut l = self.lz.clone();
        for (v, b) in l.values.iter_mut().zip(&self.jump.values) {
            *v += C64::new(0.0, 0.5 * b);
        }
        l
    }
}
