mod common;

use std::sync::Arc;

use common::{Kind, Oracle};
use nalgebra::{DMatrix, DVector};
use rotgpe::assembly::{FeSpace, FormSet, PotentialSpec};
use rotgpe::elements::ElementKind;
use rotgpe::groundstate::{gradient_flow_ground_state, GroundStateConfig, InitialProfile};
use rotgpe::mesh::{build_mesh, RectDomain};
use rotgpe::observables::mass_of;
use rotgpe::C64;

fn forms(kind: ElementKind, half: f64, n: usize, potential: PotentialSpec) -> FormSet {
    let domain = RectDomain::new(-half, half, -half, half).unwrap();
    let mesh = Arc::new(build_mesh(domain, n, n).unwrap());
    FormSet::assemble(Arc::new(FeSpace::new(mesh, kind)), potential)
}

/// Lowest generalized eigenvector of `(A/2 + P) v = lambda M v` on the free
/// block by inverse iteration, scattered back with zeros and `M`-normalized.
fn inverse_iteration(o: &Oracle, v: fn(f64, f64) -> f64) -> (Vec<f64>, f64) {
    let free: Vec<usize> = (0..o.n_dofs).filter(|&i| !o.constrained[i]).collect();
    let nf = free.len();
    let re = |m: DMatrix<C64>| DMatrix::from_fn(nf, nf, |a, b| m[(free[a], free[b])].re);
    let mass = re(o.mass());
    let h = re(o.stiffness()) * 0.5 + re(o.potential(v));
    let lu = h.clone().lu();
    let mut x = DVector::from_element(nf, 1.0);
    let mut lambda = 0.0;
    for _ in 0..500 {
        let y = lu.solve(&(&mass * &x)).unwrap();
        let norm = y.dot(&(&mass * &y)).sqrt();
        let next = y / norm;
        let change = (&next - &x).amax();
        x = next;
        lambda = x.dot(&(&h * &x));
        if change < 1e-14 {
            break;
        }
    }
    let mut full = vec![0.0; o.n_dofs];
    for (a, &i) in free.iter().enumerate() {
        full[i] = x[a];
    }
    (full, lambda)
}

#[test]
fn linear_flow_finds_the_lowest_eigenvector() {
    let v = |x: f64, y: f64| 0.5 * (x * x + 4.0 * y * y);
    for (kind, k) in [
        (ElementKind::ConformingQ1, Kind::Q1),
        (ElementKind::NonconformingEQ1Rot, Kind::Rot),
    ] {
        let f = forms(kind, 4.0, 32, PotentialSpec::harmonic(1.0, 2.0));
        let cfg = GroundStateConfig {
            dt: 0.5,
            tol: 1e-10,
            initial: InitialProfile::Gaussian {
                sigma: 1.0,
                center: [0.3, -0.2],
            },
            ..Default::default()
        };
        let gs = gradient_flow_ground_state(&cfg, &f).unwrap();
        assert!(gs.converged);
        let o = Oracle::new(k, (-4.0, 4.0, -4.0, 4.0), 32, 32);
        let (reference, lambda) = inverse_iteration(&o, v);

        // align the global phase before comparing
        let overlap = f.mass.form(
            &reference
                .iter()
                .map(|&r| C64::new(r, 0.0))
                .collect::<Vec<_>>(),
            &gs.field.coeffs,
        );
        let phase = overlap.conj() / overlap.norm();
        let diff: Vec<C64> = gs
            .field
            .coeffs
            .iter()
            .zip(&reference)
            .map(|(u, &r)| u * phase - r)
            .collect();
        let err = f.mass.quadratic_form(&diff).re.sqrt();
        assert!(err <= 1e-6, "{kind}: {err:e}");
        assert!(
            (gs.energy - lambda).abs() < 1e-9 * lambda,
            "{kind}: {} vs {lambda}",
            gs.energy
        );
        // the discrete ground state of the isotropic-in-x trap sits near 3/2
        assert!((lambda - 1.5).abs() < 0.05, "{kind}: {lambda}");
    }
}

#[test]
fn rotating_interacting_flow_does_not_raise_energy() {
    for kind in [ElementKind::ConformingQ1, ElementKind::NonconformingEQ1Rot] {
        let f = forms(kind, 8.0, 64, PotentialSpec::harmonic(1.0, 1.0));
        let cfg = GroundStateConfig {
            dt: 0.01,
            tol: 1e-6,
            max_steps: 150,
            omega: 0.5,
            beta: 100.0,
            initial: InitialProfile::GaussianWithVortex {
                sigma: 1.6,
                winding: 1,
                center: [0.0, 0.0],
            },
            ..Default::default()
        };
        let gs = gradient_flow_ground_state(&cfg, &f).unwrap();
        assert!(gs.energies.len() > 100);
        for w in gs.energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-8, "{kind}: {} -> {}", w[0], w[1]);
        }
        assert!((mass_of(&gs.field, &f) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn real_start_without_rotation_stays_real() {
    for kind in [ElementKind::ConformingQ1, ElementKind::NonconformingEQ1Rot] {
        let f = forms(kind, 4.0, 16, PotentialSpec::harmonic(1.0, 2.0));
        let cfg = GroundStateConfig {
            dt: 0.05,
            tol: 1e-7,
            beta: 10.0,
            ..Default::default()
        };
        let gs = gradient_flow_ground_state(&cfg, &f).unwrap();
        assert!(gs.converged);
        let im: Vec<C64> = gs
            .field
            .coeffs
            .iter()
            .map(|z| C64::new(z.im, 0.0))
            .collect();
        assert!(f.mass.quadratic_form(&im).re.sqrt() < 1e-8);
        assert!((mass_of(&gs.field, &f) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn step_limit_returns_best_iterate_unconverged() {
    let f = forms(
        ElementKind::ConformingQ1,
        4.0,
        8,
        PotentialSpec::harmonic(1.0, 1.0),
    );
    let cfg = GroundStateConfig {
        dt: 0.01,
        tol: 1e-12,
        max_steps: 3,
        beta: 5.0,
        ..Default::default()
    };
    let gs = gradient_flow_ground_state(&cfg, &f).unwrap();
    assert!(!gs.converged);
    assert_eq!(gs.steps, 3);
    let lowest = gs.energies.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(gs.energy, lowest);
}
