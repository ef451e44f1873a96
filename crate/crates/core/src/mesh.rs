//! Structured tensor-product meshes of an axis-aligned rectangle.
//!
//! Numbering is 0-based and row-major (x fastest) for nodes and cells.
//! Horizontal edges come first (`j * nx + i`, `j` in `0..=ny`), followed by
//! vertical edges (`nx * (ny + 1) + j * (nx + 1) + i`, `i` in `0..=nx`).

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("degenerate domain [{x_min}, {x_max}] x [{y_min}, {y_max}]")]
    DegenerateDomain {
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    },
    #[error("cell counts must be positive, got nx={nx}, ny={ny}")]
    ZeroCells { nx: usize, ny: usize },
}

/// The rectangle `[x_min, x_max] x [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectDomain {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl RectDomain {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self, MeshError> {
        let d = RectDomain {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn unit_square() -> Self {
        RectDomain {
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
        }
    }

    /// Square `[-half, half]^2`.
    pub fn centered_square(half: f64) -> Self {
        RectDomain {
            x_min: -half,
            x_max: half,
            y_min: -half,
            y_max: half,
        }
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let ok = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_min < self.x_max
            && self.y_min < self.y_max;
        if ok {
            Ok(())
        } else {
            Err(MeshError::DegenerateDomain {
                x_min: self.x_min,
                x_max: self.x_max,
                y_min: self.y_min,
                y_max: self.y_max,
            })
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeDirection {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Endpoints ordered by increasing coordinate.
    pub nodes: [usize; 2],
    /// Adjacent cells; the second slot is empty on the boundary.
    pub cells: [Option<usize>; 2],
    pub direction: EdgeDirection,
    pub boundary: bool,
}

impl Edge {
    pub fn adjacent_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells.iter().flatten().copied()
    }
}

/// Local edge slots of a cell, counterclockwise starting at the bottom.
pub const LOCAL_EDGE_BOTTOM: usize = 0;
pub const LOCAL_EDGE_RIGHT: usize = 1;
pub const LOCAL_EDGE_TOP: usize = 2;
pub const LOCAL_EDGE_LEFT: usize = 3;

#[derive(Debug, Clone)]
pub struct StructuredMesh {
    pub domain: RectDomain,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub nodes: Vec<[f64; 2]>,
    /// Node indices, counterclockwise from the lower-left corner.
    pub cells: Vec<[usize; 4]>,
    /// Edge indices in local order bottom, right, top, left.
    pub cell_edges: Vec<[usize; 4]>,
    pub edges: Vec<Edge>,
    pub node_boundary: Vec<bool>,
}

impl StructuredMesh {
    pub fn new(domain: RectDomain, nx: usize, ny: usize) -> Result<Self, MeshError> {
        build_mesh(domain, nx, ny)
    }

    /// Mesh parameter `max(hx, hy)`.
    pub fn h(&self) -> f64 {
        self.hx.max(self.hy)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// `(i, j)` grid position of a cell.
    pub fn cell_ij(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    pub fn horizontal_edge(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn vertical_edge(&self, i: usize, j: usize) -> usize {
        self.nx * (self.ny + 1) + j * (self.nx + 1) + i
    }

    /// Lower-left corner of a cell.
    pub fn cell_origin(&self, cell: usize) -> [f64; 2] {
        self.nodes[self.cells[cell][0]]
    }

    pub fn cell_center(&self, cell: usize) -> [f64; 2] {
        let [x0, y0] = self.cell_origin(cell);
        [x0 + 0.5 * self.hx, y0 + 0.5 * self.hy]
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    /// Maps reference coordinates in `[-1, 1]^2` to physical coordinates.
    pub fn to_physical(&self, cell: usize, xi: f64, eta: f64) -> [f64; 2] {
        let [xc, yc] = self.cell_center(cell);
        [xc + 0.5 * self.hx * xi, yc + 0.5 * self.hy * eta]
    }

    /// Cell containing a physical point; points on shared faces go to the
    /// upper/right neighbour, points on the outer boundary are clamped inside.
    pub fn locate(&self, x: f64, y: f64) -> usize {
        let fi = ((x - self.domain.x_min) / self.hx).floor();
        let fj = ((y - self.domain.y_min) / self.hy).floor();
        let i = (fi.max(0.0) as usize).min(self.nx - 1);
        let j = (fj.max(0.0) as usize).min(self.ny - 1);
        self.cell_index(i, j)
    }

    /// Parent cell on the mesh this one was refined from.
    pub fn parent_cell(&self, cell: usize) -> Option<usize> {
        if !self.nx.is_multiple_of(2) || !self.ny.is_multiple_of(2) {
            return None;
        }
        let (i, j) = self.cell_ij(cell);
        Some((j / 2) * (self.nx / 2) + i / 2)
    }

    pub fn refine_uniform(&self) -> StructuredMesh {
        refine_uniform(self)
    }
}

/// Builds the `nx x ny` tensor mesh of `domain`.
pub fn build_mesh(domain: RectDomain, nx: usize, ny: usize) -> Result<StructuredMesh, MeshError> {
    domain.validate()?;
    if nx == 0 || ny == 0 {
        return Err(MeshError::ZeroCells { nx, ny });
    }
    let hx = domain.width() / nx as f64;
    let hy = domain.height() / ny as f64;

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut node_boundary = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        let y = if j == ny {
            domain.y_max
        } else {
            domain.y_min + j as f64 * hy
        };
        for i in 0..=nx {
            let x = if i == nx {
                domain.x_max
            } else {
                domain.x_min + i as f64 * hx
            };
            nodes.push([x, y]);
            node_boundary.push(i == 0 || j == 0 || i == nx || j == ny);
        }
    }

    let node = |i: usize, j: usize| j * (nx + 1) + i;
    let n_horizontal = nx * (ny + 1);
    let h_edge = |i: usize, j: usize| j * nx + i;
    let v_edge = |i: usize, j: usize| n_horizontal + j * (nx + 1) + i;
    let cell_at = |i: usize, j: usize| j * nx + i;

    let mut edges = Vec::with_capacity(n_horizontal + ny * (nx + 1));
    for j in 0..=ny {
        for i in 0..nx {
            let below = (j > 0).then(|| cell_at(i, j - 1));
            let above = (j < ny).then(|| cell_at(i, j));
            let cells = match (below, above) {
                (Some(b), Some(a)) => [Some(b), Some(a)],
                (Some(c), None) | (None, Some(c)) => [Some(c), None],
                (None, None) => unreachable!(),
            };
            edges.push(Edge {
                nodes: [node(i, j), node(i + 1, j)],
                cells,
                direction: EdgeDirection::Horizontal,
                boundary: j == 0 || j == ny,
            });
        }
    }
    for j in 0..ny {
        for i in 0..=nx {
            let left = (i > 0).then(|| cell_at(i - 1, j));
            let right = (i < nx).then(|| cell_at(i, j));
            let cells = match (left, right) {
                (Some(l), Some(r)) => [Some(l), Some(r)],
                (Some(c), None) | (None, Some(c)) => [Some(c), None],
                (None, None) => unreachable!(),
            };
            edges.push(Edge {
                nodes: [node(i, j), node(i, j + 1)],
                cells,
                direction: EdgeDirection::Vertical,
                boundary: i == 0 || i == nx,
            });
        }
    }

    let mut cells = Vec::with_capacity(nx * ny);
    let mut cell_edges = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            cells.push([
                node(i, j),
                node(i + 1, j),
                node(i + 1, j + 1),
                node(i, j + 1),
            ]);
            cell_edges.push([
                h_edge(i, j),
                v_edge(i + 1, j),
                h_edge(i, j + 1),
                v_edge(i, j),
            ]);
        }
    }

    Ok(StructuredMesh {
        domain,
        nx,
        ny,
        hx,
        hy,
        nodes,
        cells,
        cell_edges,
        edges,
        node_boundary,
    })
}

/// Splits every cell into four.
pub fn refine_uniform(mesh: &StructuredMesh) -> StructuredMesh {
    build_mesh(mesh.domain, 2 * mesh.nx, 2 * mesh.ny).expect("refining a valid mesh")
}
