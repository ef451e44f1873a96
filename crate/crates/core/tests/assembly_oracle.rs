mod common;

use std::sync::Arc;

use common::{max_diff, real_dense, Kind, Oracle};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rotgpe::assembly::{
    assemble_density_mass, assemble_load, assemble_potential, FeSpace, FormSet, PotentialSpec,
};
use rotgpe::elements::{reference_basis, ElementKind};
use rotgpe::harness::{manufactured_solution, ManufacturedParams};
use rotgpe::mesh::{build_mesh, RectDomain};
use rotgpe::C64;

type Bounds = (f64, f64, f64, f64);

const MESHES: [(Bounds, usize, usize); 4] = [
    ((0.0, 1.0, 0.0, 1.0), 1, 1),
    ((0.0, 1.0, 0.0, 1.0), 4, 4),
    ((-1.0, 2.0, -0.5, 1.5), 3, 4),
    ((-2.0, 2.0, -2.0, 2.0), 4, 2),
];

fn kinds() -> [(ElementKind, Kind); 2] {
    [
        (ElementKind::ConformingQ1, Kind::Q1),
        (ElementKind::NonconformingEQ1Rot, Kind::Rot),
    ]
}

fn space(kind: ElementKind, d: (f64, f64, f64, f64), nx: usize, ny: usize) -> Arc<FeSpace> {
    let domain = RectDomain::new(d.0, d.1, d.2, d.3).unwrap();
    Arc::new(FeSpace::new(
        Arc::new(build_mesh(domain, nx, ny).unwrap()),
        kind,
    ))
}

#[test]
fn dof_numbering_matches_reference() {
    for (kind, k) in kinds() {
        for (d, nx, ny) in MESHES {
            let s = space(kind, d, nx, ny);
            let o = Oracle::new(k, d, nx, ny);
            assert_eq!(s.n_dofs(), o.n_dofs);
            assert_eq!(s.constrained(), &o.constrained[..]);
            for (c, cell) in o.cells.iter().enumerate() {
                assert_eq!(s.dofs.cell_dofs(c), &cell.dofs[..], "{kind} cell {c}");
            }
        }
    }
}

#[test]
fn all_forms_match_dense_quadrature() {
    let v = |x: f64, y: f64| 0.5 * (x * x + 4.0 * y * y);
    for (kind, k) in kinds() {
        for (d, nx, ny) in MESHES {
            let forms =
                FormSet::assemble(space(kind, d, nx, ny), PotentialSpec::harmonic(1.0, 2.0));
            let o = Oracle::new(k, d, nx, ny);
            let checks = [
                (
                    "M",
                    max_diff(&o.mass(), &real_dense(&forms.mass.to_dense())),
                ),
                (
                    "A",
                    max_diff(&o.stiffness(), &real_dense(&forms.stiffness.to_dense())),
                ),
                (
                    "P",
                    max_diff(&o.potential(v), &real_dense(&forms.potential.to_dense())),
                ),
                ("L", max_diff(&o.lz(), &forms.lz.to_dense())),
                (
                    "B",
                    max_diff(&o.jump(), &real_dense(&forms.jump.to_dense())),
                ),
            ];
            for (name, err) in checks {
                assert!(err <= 1e-12, "{kind} {nx}x{ny} {name}: {err:e}");
            }
        }
    }
}

#[test]
fn custom_potential_matches_dense_quadrature() {
    let f = |x: f64, y: f64| 1.0 + x * y - 0.3 * y * y;
    for (kind, k) in kinds() {
        let d = (-1.0, 2.0, -0.5, 1.5);
        let s = space(kind, d, 3, 4);
        let p = assemble_potential(&s, &PotentialSpec::Custom(Arc::new(f)));
        let o = Oracle::new(k, d, 3, 4);
        let err = max_diff(&o.potential(f), &real_dense(&p.to_dense()));
        assert!(err <= 1e-12, "{kind}: {err:e}");
    }
}

#[test]
fn density_mass_matches_dense_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (kind, k) in kinds() {
        let d = (0.0, 1.0, 0.0, 1.0);
        let s = space(kind, d, 4, 4);
        let o = Oracle::new(k, d, 4, 4);
        let a = common::random_vector(&mut rng, s.n_dofs());
        let b = common::random_vector(&mut rng, s.n_dofs());
        let err = max_diff(
            &o.density(&a, &b),
            &real_dense(&assemble_density_mass(&s, &a, &b).to_dense()),
        );
        assert!(err <= 1e-12, "{kind}: {err:e}");
    }
}

#[test]
fn manufactured_load_matches_dense_quadrature() {
    let exact = manufactured_solution(ManufacturedParams::default());
    let f = exact.source.clone().unwrap();
    for (kind, k) in kinds() {
        let d = (0.0, 1.0, 0.0, 1.0);
        let s = space(kind, d, 4, 4);
        let load = assemble_load(&s, |x, y, t| f(x, y, t), 0.0);
        let o = Oracle::new(k, d, 4, 4);
        let reference = o.load(|x, y| f(x, y, 0.0), s.quadrature.order);
        let err = load
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err <= 1e-12, "{kind}: {err:e}");
    }
}

#[test]
fn unit_load_gives_cell_areas() {
    let s = space(ElementKind::ConformingQ1, (0.0, 1.0, 0.0, 1.0), 4, 4);
    let load = assemble_load(&s, |_, _, _| C64::new(1.0, 0.0), 0.0);
    let h2 = 1.0 / 16.0;
    for (i, v) in load.iter().enumerate() {
        if !s.constrained()[i] {
            assert!((v.re - h2).abs() < 1e-15 && v.im == 0.0);
        }
    }
    assert!(assemble_load(&s, |_, _, _| C64::new(0.0, 0.0), 0.0)
        .iter()
        .all(|v| v.norm() == 0.0));
}

#[test]
fn q1_element_matrices() {
    let h = 0.5;
    let forms = FormSet::assemble(
        space(ElementKind::ConformingQ1, (0.0, h, 0.0, h), 1, 1),
        PotentialSpec::Zero,
    );
    let mass = [
        [4.0, 2.0, 1.0, 2.0],
        [2.0, 4.0, 2.0, 1.0],
        [1.0, 2.0, 4.0, 2.0],
        [2.0, 1.0, 2.0, 4.0],
    ];
    let stiff = [
        [4.0, -1.0, -2.0, -1.0],
        [-1.0, 4.0, -1.0, -2.0],
        [-2.0, -1.0, 4.0, -1.0],
        [-1.0, -2.0, -1.0, 4.0],
    ];
    // node order of the single cell: (0,0), (h,0), (0,h), (h,h)
    let perm = [0, 1, 3, 2];
    for a in 0..4 {
        for b in 0..4 {
            let (i, j) = (perm[a], perm[b]);
            assert!((forms.mass.get(i, j) - h * h / 36.0 * mass[a][b]).abs() < 1e-15);
            assert!((forms.stiffness.get(i, j) - stiff[a][b] / 6.0).abs() < 1e-15);
        }
    }
}

#[test]
fn rotated_basis_inverts_quadrature_functionals() {
    // Reference cell [-1,1]^2, functionals by an independent Gauss rule.
    let cell = Oracle::new(Kind::Rot, (-1.0, 1.0, -1.0, 1.0), 1, 1);
    let basis = reference_basis(ElementKind::NonconformingEQ1Rot);
    let monos: Vec<(u32, u32)> = basis.monomials.clone();
    let mut f = DMatrix::<f64>::zeros(5, 5);
    for (m, &(a, b)) in monos.iter().enumerate() {
        let g = move |x: f64, y: f64| x.powi(a as i32) * y.powi(b as i32);
        for (j, v) in common::functionals(&cell.cells[0], Kind::Rot, &g)
            .into_iter()
            .enumerate()
        {
            f[(j, m)] = v;
        }
    }
    let inv = f.try_inverse().unwrap();
    for i in 0..5 {
        for m in 0..5 {
            assert!((basis.coefficients[i][m] - inv[(m, i)]).abs() < 1e-13);
        }
    }
}
