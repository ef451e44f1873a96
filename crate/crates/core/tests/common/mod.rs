//! Dense brute-force reference assembly in physical coordinates.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use rand::Rng;

/// Gauss-Legendre rule on `[-1, 1]` from the eigen-decomposition of the
/// Jacobi matrix.
pub fn golub_welsch(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], 2.0 * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Q1,
    Rot,
}

pub struct OracleCell {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub dofs: Vec<usize>,
    /// Rotated element: `coeffs[(m, i)]` weight of monomial `m` in basis `i`
    /// for the monomials `1, X, Y, X^2, Y^2` with `X = x - xc`, `Y = y - yc`.
    coeffs: Option<DMatrix<f64>>,
}

impl OracleCell {
    fn center(&self) -> (f64, f64) {
        (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    /// Values and gradients of the local basis at a physical point.
    pub fn basis(&self, x: f64, y: f64) -> (Vec<f64>, Vec<[f64; 2]>) {
        match &self.coeffs {
            None => {
                let (hx, hy) = (self.x1 - self.x0, self.y1 - self.y0);
                let lx = [(self.x1 - x) / hx, (x - self.x0) / hx];
                let ly = [(self.y1 - y) / hy, (y - self.y0) / hy];
                let dlx = [-1.0 / hx, 1.0 / hx];
                let dly = [-1.0 / hy, 1.0 / hy];
                // counterclockwise from the lower left corner
                let corners = [(0, 0), (1, 0), (1, 1), (0, 1)];
                let vals = corners.iter().map(|&(a, b)| lx[a] * ly[b]).collect();
                let grads = corners
                    .iter()
                    .map(|&(a, b)| [dlx[a] * ly[b], lx[a] * dly[b]])
                    .collect();
                (vals, grads)
            }
            Some(c) => {
                let (xc, yc) = self.center();
                let (dx, dy) = (x - xc, y - yc);
                let mono = [1.0, dx, dy, dx * dx, dy * dy];
                let dmx = [0.0, 1.0, 0.0, 2.0 * dx, 0.0];
                let dmy = [0.0, 0.0, 1.0, 0.0, 2.0 * dy];
                let mut vals = vec![0.0; 5];
                let mut grads = vec![[0.0; 2]; 5];
                for i in 0..5 {
                    for m in 0..5 {
                        vals[i] += c[(m, i)] * mono[m];
                        grads[i][0] += c[(m, i)] * dmx[m];
                        grads[i][1] += c[(m, i)] * dmy[m];
                    }
                }
                (vals, grads)
            }
        }
    }

    /// Physical tensor quadrature points `(x, y, w)`.
    pub fn points(&self, n: usize) -> Vec<(f64, f64, f64)> {
        let (t, w) = golub_welsch(n);
        let (hx, hy) = (self.x1 - self.x0, self.y1 - self.y0);
        let mut out = Vec::new();
        for (a, wa) in t.iter().zip(&w) {
            for (b, wb) in t.iter().zip(&w) {
                out.push((
                    self.x0 + 0.5 * (a + 1.0) * hx,
                    self.y0 + 0.5 * (b + 1.0) * hy,
                    wa * wb * 0.25 * hx * hy,
                ));
            }
        }
        out
    }

    /// Edges as `(start, end)` traversed counterclockwise: bottom, right,
    /// top, left.
    pub fn edges(&self) -> [((f64, f64), (f64, f64)); 4] {
        let (a, b, c, d) = (
            (self.x0, self.y0),
            (self.x1, self.y0),
            (self.x1, self.y1),
            (self.x0, self.y1),
        );
        [(a, b), (b, c), (c, d), (d, a)]
    }
}

fn edge_points(e: ((f64, f64), (f64, f64)), n: usize) -> Vec<(f64, f64, f64)> {
    let (t, w) = golub_welsch(n);
    let ((xa, ya), (xb, yb)) = e;
    let len = ((xb - xa).powi(2) + (yb - ya).powi(2)).sqrt();
    t.iter()
        .zip(&w)
        .map(|(s, ws)| {
            let l = 0.5 * (s + 1.0);
            (xa + l * (xb - xa), ya + l * (yb - ya), 0.5 * ws * len)
        })
        .collect()
}

pub struct Oracle {
    pub kind: Kind,
    pub nx: usize,
    pub ny: usize,
    pub n_dofs: usize,
    pub cells: Vec<OracleCell>,
    pub constrained: Vec<bool>,
}

pub const QUAD: usize = 8;

impl Oracle {
    pub fn new(
        kind: Kind,
        (xmin, xmax, ymin, ymax): (f64, f64, f64, f64),
        nx: usize,
        ny: usize,
    ) -> Self {
        let hx = (xmax - xmin) / nx as f64;
        let hy = (ymax - ymin) / ny as f64;
        let n_h = nx * (ny + 1);
        let n_edges = n_h + ny * (nx + 1);
        let node = |i: usize, j: usize| j * (nx + 1) + i;
        let h_edge = |i: usize, j: usize| j * nx + i;
        let v_edge = |i: usize, j: usize| n_h + j * (nx + 1) + i;
        let (n_dofs, mut constrained) = match kind {
            Kind::Q1 => ((nx + 1) * (ny + 1), vec![false; (nx + 1) * (ny + 1)]),
            Kind::Rot => (n_edges + nx * ny, vec![false; n_edges + nx * ny]),
        };
        match kind {
            Kind::Q1 => {
                for j in 0..=ny {
                    for i in 0..=nx {
                        if i == 0 || j == 0 || i == nx || j == ny {
                            constrained[node(i, j)] = true;
                        }
                    }
                }
            }
            Kind::Rot => {
                for i in 0..nx {
                    constrained[h_edge(i, 0)] = true;
                    constrained[h_edge(i, ny)] = true;
                }
                for j in 0..ny {
                    constrained[v_edge(0, j)] = true;
                    constrained[v_edge(nx, j)] = true;
                }
            }
        }
        let mut cells = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let mut cell = OracleCell {
                    x0: xmin + i as f64 * hx,
                    x1: xmin + (i + 1) as f64 * hx,
                    y0: ymin + j as f64 * hy,
                    y1: ymin + (j + 1) as f64 * hy,
                    dofs: Vec::new(),
                    coeffs: None,
                };
                match kind {
                    Kind::Q1 => {
                        cell.dofs = vec![
                            node(i, j),
                            node(i + 1, j),
                            node(i + 1, j + 1),
                            node(i, j + 1),
                        ]
                    }
                    Kind::Rot => {
                        cell.dofs = vec![
                            h_edge(i, j),
                            v_edge(i + 1, j),
                            h_edge(i, j + 1),
                            v_edge(i, j),
                            n_edges + j * nx + i,
                        ];
                        cell.coeffs = Some(rotated_coefficients(&cell));
                    }
                }
                cells.push(cell);
            }
        }
        Oracle {
            kind,
            nx,
            ny,
            n_dofs,
            cells,
            constrained,
        }
    }

    fn assemble<F>(&self, mut local: F) -> DMatrix<C64>
    where
        F: FnMut(&OracleCell, f64, f64, &[f64], &[[f64; 2]], usize, usize) -> C64,
    {
        let mut m = DMatrix::<C64>::zeros(self.n_dofs, self.n_dofs);
        for cell in &self.cells {
            for (x, y, w) in cell.points(QUAD) {
                let (v, g) = cell.basis(x, y);
                for (i, &gi) in cell.dofs.iter().enumerate() {
                    for (j, &gj) in cell.dofs.iter().enumerate() {
                        m[(gi, gj)] += local(cell, x, y, &v, &g, i, j) * w;
                    }
                }
            }
        }
        m
    }

    pub fn mass(&self) -> DMatrix<C64> {
        self.assemble(|_, _, _, v, _, i, j| C64::new(v[j] * v[i], 0.0))
    }

    pub fn stiffness(&self) -> DMatrix<C64> {
        self.assemble(|_, _, _, _, g, i, j| C64::new(g[j][0] * g[i][0] + g[j][1] * g[i][1], 0.0))
    }

    pub fn potential(&self, v: impl Fn(f64, f64) -> f64) -> DMatrix<C64> {
        self.assemble(|_, x, y, b, _, i, j| C64::new(v(x, y) * b[j] * b[i], 0.0))
    }

    /// `-i int (x d_y phi_j - y d_x phi_j) phi_i`.
    pub fn lz(&self) -> DMatrix<C64> {
        self.assemble(|_, x, y, b, g, i, j| C64::new(0.0, -(x * g[j][1] - y * g[j][0]) * b[i]))
    }

    /// `int rho phi_j phi_i` with `rho = (|a|^2 + |b|^2) / 2`.
    pub fn density(&self, a: &[C64], b: &[C64]) -> DMatrix<C64> {
        self.assemble(|cell, _, _, v, _, i, j| {
            let ua: C64 = cell.dofs.iter().zip(v).map(|(&d, &p)| a[d] * p).sum();
            let ub: C64 = cell.dofs.iter().zip(v).map(|(&d, &p)| b[d] * p).sum();
            C64::new(0.5 * (ua.norm_sqr() + ub.norm_sqr()) * v[j] * v[i], 0.0)
        })
    }

    /// `sum_K int_{dK} phi_j phi_i (x . n_perp)` with `n_perp = (n_y, -n_x)`.
    pub fn jump(&self) -> DMatrix<C64> {
        let mut m = DMatrix::<C64>::zeros(self.n_dofs, self.n_dofs);
        if self.kind == Kind::Q1 {
            // the pairing is defined for the nonconforming space only
            return m;
        }
        for cell in &self.cells {
            for e in cell.edges() {
                let ((xa, ya), (xb, yb)) = e;
                let len = ((xb - xa).powi(2) + (yb - ya).powi(2)).sqrt();
                // outward normal of a counterclockwise edge
                let n = ((yb - ya) / len, -(xb - xa) / len);
                let n_perp = (n.1, -n.0);
                for (x, y, w) in edge_points(e, QUAD) {
                    let (v, _) = cell.basis(x, y);
                    let weight = x * n_perp.0 + y * n_perp.1;
                    for (i, &gi) in cell.dofs.iter().enumerate() {
                        for (j, &gj) in cell.dofs.iter().enumerate() {
                            m[(gi, gj)] += C64::new(v[j] * v[i] * weight * w, 0.0);
                        }
                    }
                }
            }
        }
        m
    }

    /// `int f phi_i` with an `n`-point rule per direction.
    pub fn load(&self, f: impl Fn(f64, f64) -> C64, n: usize) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.n_dofs];
        for cell in &self.cells {
            for (x, y, w) in cell.points(n) {
                let (v, _) = cell.basis(x, y);
                let fx = f(x, y);
                for (i, &gi) in cell.dofs.iter().enumerate() {
                    out[gi] += fx * v[i] * w;
                }
            }
        }
        out
    }

    /// Functionals (vertex values or edge/cell means) of `f`.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_dofs];
        for cell in &self.cells {
            let vals = functionals(cell, self.kind, &f);
            for (k, &d) in cell.dofs.iter().enumerate() {
                out[d] = vals[k];
            }
        }
        out
    }
}

/// Vertex values, or edge means (bottom, right, top, left) and the cell mean.
pub fn functionals(cell: &OracleCell, kind: Kind, f: &dyn Fn(f64, f64) -> f64) -> Vec<f64> {
    match kind {
        Kind::Q1 => vec![
            f(cell.x0, cell.y0),
            f(cell.x1, cell.y0),
            f(cell.x1, cell.y1),
            f(cell.x0, cell.y1),
        ],
        Kind::Rot => {
            let mut out: Vec<f64> = cell
                .edges()
                .iter()
                .map(|&e| {
                    let pts = edge_points(e, QUAD);
                    let len: f64 = pts.iter().map(|p| p.2).sum();
                    pts.iter().map(|&(x, y, w)| f(x, y) * w).sum::<f64>() / len
                })
                .collect();
            let pts = cell.points(QUAD);
            let area: f64 = pts.iter().map(|p| p.2).sum();
            out.push(pts.iter().map(|&(x, y, w)| f(x, y) * w).sum::<f64>() / area);
            out
        }
    }
}

fn rotated_coefficients(cell: &OracleCell) -> DMatrix<f64> {
    let (xc, yc) = cell.center();
    let mut f = DMatrix::<f64>::zeros(5, 5);
    for m in 0..5 {
        let mono = move |x: f64, y: f64| {
            let (dx, dy) = (x - xc, y - yc);
            [1.0, dx, dy, dx * dx, dy * dy][m]
        };
        for (j, v) in functionals(cell, Kind::Rot, &mono).into_iter().enumerate() {
            f[(j, m)] = v;
        }
    }
    f.try_inverse().expect("rotated functionals are unisolvent")
}

pub fn max_diff(a: &DMatrix<C64>, b: &[Vec<C64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            worst = worst.max((a[(i, j)] - b[i][j]).norm());
        }
    }
    worst
}

pub fn real_dense(m: &[Vec<f64>]) -> Vec<Vec<C64>> {
    m.iter()
        .map(|r| r.iter().map(|&v| C64::new(v, 0.0)).collect())
        .collect()
}

pub fn random_vector<R: Rng>(rng: &mut R, n: usize) -> Vec<C64> {
    (0..n)
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}
