//! Reference elements, Gauss rules and global degree-of-freedom maps.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::mesh::StructuredMesh;

#[derive(Debug, Error, PartialEq)]
pub enum ElementError {
    #[error("quadrature order {0} outside 1..=10")]
    QuadratureOrder(usize),
    #[error("unknown element kind '{0}' (expected q1 or eq1rot)")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    /// Continuous bilinears, `span{1, x, y, xy}` per cell.
    ConformingQ1,
    /// Rotated nonconforming element, `span{1, x, y, x^2, y^2}` per cell
    /// with edge-mean continuity.
    NonconformingEQ1Rot,
}

impl ElementKind {
    pub fn local_dofs(self) -> usize {
        match self {
            ElementKind::ConformingQ1 => 4,
            ElementKind::NonconformingEQ1Rot => 5,
        }
    }

    /// Gauss points per direction used for assembly. Exact for the quartic
    /// nonlinear integrands of each space.
    pub fn default_quadrature_order(self) -> usize {
        match self {
            ElementKind::ConformingQ1 => 3,
            ElementKind::NonconformingEQ1Rot => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementKind::ConformingQ1 => "q1",
            ElementKind::NonconformingEQ1Rot => "eq1rot",
        }
    }
}

impl std::str::FromStr for ElementKind {
    type Err = ElementError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "q1" => Ok(ElementKind::ConformingQ1),
            "eq1rot" => Ok(ElementKind::NonconformingEQ1Rot),
            other => Err(ElementError::UnknownKind(other.to_string())),
        }
    }
}

impl std::fmt::Display for ElementKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre_1d(q: usize) -> Result<(Vec<f64>, Vec<f64>), ElementError> {
    if !(1..=10).contains(&q) {
        return Err(ElementError::QuadratureOrder(q));
    }
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    for k in 0..q.div_ceil(2) {
        // Newton on P_q starting from the Tricomi estimate of the k-th root.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(q, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(q, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[q - 1 - k] = x;
        weights[k] = w;
        weights[q - 1 - k] = w;
    }
    if q % 2 == 1 {
        nodes[q / 2] = 0.0;
    }
    Ok((nodes, weights))
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = if n == 0 {
        0.0
    } else {
        n as f64 * (x * p1 - p0) / (x * x - 1.0)
    };
    (p, dp)
}

/// Tensor Gauss-Legendre rule on the reference square `[-1, 1]^2`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub order: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn gauss_rule(q: usize) -> Result<QuadratureRule, ElementError> {
    let (x, w) = gauss_legendre_1d(q)?;
    let mut points = Vec::with_capacity(q * q);
    let mut weights = Vec::with_capacity(q * q);
    for j in 0..q {
        for i in 0..q {
            points.push([x[i], x[j]]);
            weights.push(w[i] * w[j]);
        }
    }
    Ok(QuadratureRule {
        order: q,
        points,
        weights,
    })
}

/// Local shape functions on `[-1, 1]^2`, stored as monomial expansions.
#[derive(Debug, Clone)]
pub struct ReferenceBasis {
    pub kind: ElementKind,
    /// Exponents `(a, b)` of the monomials `xi^a eta^b`.
    pub monomials: Vec<(u32, u32)>,
    /// `coefficients[i][m]`: weight of monomial `m` in basis function `i`.
    pub coefficients: Vec<Vec<f64>>,
}

/// Reference vertices, counterclockwise from `(-1, -1)`.
pub const REFERENCE_VERTICES: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

/// Mean of `t^a` over `[-1, 1]`.
fn mean_power(a: u32) -> f64 {
    if a % 2 == 1 {
        0.0
    } else {
        1.0 / (a as f64 + 1.0)
    }
}

fn monomial(a: u32, b: u32, xi: f64, eta: f64) -> f64 {
    xi.powi(a as i32) * eta.powi(b as i32)
}

/// The degree-of-freedom functionals of `kind` applied to `xi^a eta^b`.
/// Q1: vertex values. EQ1rot: means over the bottom, right, top and left
/// edges, then the cell mean.
pub fn reference_functionals(kind: ElementKind, a: u32, b: u32) -> Vec<f64> {
    match kind {
        ElementKind::ConformingQ1 => REFERENCE_VERTICES
            .iter()
            .map(|&[xi, eta]| monomial(a, b, xi, eta))
            .collect(),
        ElementKind::NonconformingEQ1Rot => {
            let sign = |p: u32| if p.is_multiple_of(2) { 1.0 } else { -1.0 };
            vec![
                mean_power(a) * sign(b),
                mean_power(b),
                mean_power(a),
                sign(a) * mean_power(b),
                mean_power(a) * mean_power(b),
            ]
        }
    }
}

pub fn reference_monomials(kind: ElementKind) -> Vec<(u32, u32)> {
    match kind {
        ElementKind::ConformingQ1 => vec![(0, 0), (1, 0), (0, 1), (1, 1)],
        ElementKind::NonconformingEQ1Rot => vec![(0, 0), (1, 0), (0, 1), (2, 0), (0, 2)],
    }
}

/// Builds the nodal basis by inverting the functional-monomial matrix.
pub fn reference_basis(kind: ElementKind) -> ReferenceBasis {
    let monomials = reference_monomials(kind);
    let n = monomials.len();
    // functional_matrix[(j, m)] = functional j applied to monomial m
    let mut functional_matrix = DMatrix::<f64>::zeros(n, n);
    for (m, &(a, b)) in monomials.iter().enumerate() {
        for (j, v) in reference_functionals(kind, a, b).into_iter().enumerate() {
            functional_matrix[(j, m)] = v;
        }
    }
    let inv = functional_matrix
        .try_inverse()
        .expect("element functionals are unisolvent");
    let coefficients = (0..n)
        .map(|i| (0..n).map(|m| inv[(m, i)]).collect())
        .collect();
    ReferenceBasis {
        kind,
        monomials,
        coefficients,
    }
}

impl ReferenceBasis {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn value(&self, i: usize, xi: f64, eta: f64) -> f64 {
        self.monomials
            .iter()
            .zip(&self.coefficients[i])
            .map(|(&(a, b), c)| c * monomial(a, b, xi, eta))
            .sum()
    }

    /// Gradient with respect to the reference coordinates.
    pub fn gradient(&self, i: usize, xi: f64, eta: f64) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (&(a, b), c) in self.monomials.iter().zip(&self.coefficients[i]) {
            if a > 0 {
                g[0] += c * a as f64 * monomial(a - 1, b, xi, eta);
            }
            if b > 0 {
                g[1] += c * b as f64 * monomial(a, b - 1, xi, eta);
            }
        }
        g
    }

    pub fn values(&self, xi: f64, eta: f64) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i, xi, eta)).collect()
    }

    /// Values and reference gradients of every basis function at each point.
    pub fn tabulate(&self, points: &[[f64; 2]]) -> Tabulation {
        let n = self.len();
        let mut values = Vec::with_capacity(points.len() * n);
        let mut gradients = Vec::with_capacity(points.len() * n);
        for &[xi, eta] in points {
            for i in 0..n {
                values.push(self.value(i, xi, eta));
                gradients.push(self.gradient(i, xi, eta));
            }
        }
        Tabulation {
            n_basis: n,
            values,
            gradients,
        }
    }
}

/// Basis values and reference gradients at a fixed point set.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub n_basis: usize,
    values: Vec<f64>,
    gradients: Vec<[f64; 2]>,
}

impl Tabulation {
    pub fn value(&self, point: usize, i: usize) -> f64 {
        self.values[point * self.n_basis + i]
    }

    pub fn gradient(&self, point: usize, i: usize) -> [f64; 2] {
        self.gradients[point * self.n_basis + i]
    }

    pub fn point_values(&self, point: usize) -> &[f64] {
        &self.values[point * self.n_basis..(point + 1) * self.n_basis]
    }
}

/// Global numbering of the degrees of freedom of one element family.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub kind: ElementKind,
    pub n_dofs: usize,
    pub dofs_per_cell: usize,
    cell_dofs: Vec<usize>,
    /// Homogeneous Dirichlet flags: boundary nodes (Q1) or boundary edges
    /// (EQ1rot).
    pub constrained: Vec<bool>,
}

impl DofMap {
    pub fn cell_dofs(&self, cell: usize) -> &[usize] {
        &self.cell_dofs[cell * self.dofs_per_cell..(cell + 1) * self.dofs_per_cell]
    }

    pub fn n_cells(&self) -> usize {
        self.cell_dofs.len() / self.dofs_per_cell
    }

    pub fn n_constrained(&self) -> usize {
        self.constrained.iter().filter(|c| **c).count()
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.constrained[dof]
    }
}

/// Q1 DOFs are mesh nodes. EQ1rot DOFs are mesh edges followed by cells.
pub fn build_dof_map(mesh: &StructuredMesh, kind: ElementKind) -> DofMap {
    match kind {
        ElementKind::ConformingQ1 => DofMap {
            kind,
            n_dofs: mesh.n_nodes(),
            dofs_per_cell: 4,
            cell_dofs: mesh.cells.iter().flatten().copied().collect(),
            constrained: mesh.node_boundary.clone(),
        },
        ElementKind::NonconformingEQ1Rot => {
            let n_edges = mesh.n_edges();
            let mut cell_dofs = Vec::with_capacity(mesh.n_cells() * 5);
            for (c, edges) in mesh.cell_edges.iter().enumerate() {
                cell_dofs.extend_from_slice(edges);
                cell_dofs.push(n_edges + c);
            }
            let mut constrained: Vec<bool> = mesh.edges.iter().map(|e| e.boundary).collect();
            constrained.resize(n_edges + mesh.n_cells(), false);
            DofMap {
                kind,
                n_dofs: n_edges + mesh.n_cells(),
                dofs_per_cell: 5,
                cell_dofs,
                constrained,
            }
        }
    }
}
