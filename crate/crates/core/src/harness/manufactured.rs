//! Manufactured solution `u = (t + 1)^2 sin(pi x) sin(pi y)` on the unit square.

use std::f64::consts::PI;

use crate::assembly::PotentialSpec;
use crate::observables::ExactSolution;
use crate::sparse::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedParams {
    pub omega: f64,
    pub beta: f64,
    pub gamma_x: f64,
    pub gamma_y: f64,
}

impl Default for ManufacturedParams {
    fn default() -> Self {
        ManufacturedParams {
            omega: 0.8,
            beta: 1.0,
            gamma_x: 1.0,
            gamma_y: 2.0,
        }
    }
}

fn value(x: f64, y: f64, t: f64) -> f64 {
    (t + 1.0).powi(2) * (PI * x).sin() * (PI * y).sin()
}

fn gradient(x: f64, y: f64, t: f64) -> [f64; 2] {
    let a = (t + 1.0).powi(2) * PI;
    [
        a * (PI * x).cos() * (PI * y).sin(),
        a * (PI * x).sin() * (PI * y).cos(),
    ]
}

/// The exact solution with gradient and the source `f` that makes it solve
/// `i u_t = -1/2 Lap u + V u - Omega L_z u + beta |u|^2 u + f`.
pub fn manufactured_solution(p: ManufacturedParams) -> ExactSolution {
    let potential = PotentialSpec::harmonic(p.gamma_x, p.gamma_y);
    ExactSolution::new(|x, y, t| C64::new(value(x, y, t), 0.0))
        .with_gradient(|x, y, t| {
            let [gx, gy] = gradient(x, y, t);
            [C64::new(gx, 0.0), C64::new(gy, 0.0)]
        })
        .with_source(move |x, y, t| {
            let u = value(x, y, t);
            let [ux, uy] = gradient(x, y, t);
            let u_t = 2.0 * (t + 1.0) * (PI * x).sin() * (PI * y).sin();
            let lap = -2.0 * PI * PI * u;
            // L_z u = -i (x u_y - y u_x)
            let lz_u = C64::new(0.0, -(x * uy - y * ux));
            C64::new(0.0, u_t) + 0.5 * lap - potential.eval(x, y) * u + p.omega * lz_u
                - p.beta * u * u * u
        })
}

/// Largest `|i u_t + 1/2 Lap u - V u + Omega L_z u - beta |u|^2 u - f|` over
/// a fixed set of sample points, with all derivatives of `u` taken by
/// central differences of step `delta`. Vanishes like `delta^2` when the
/// source matches the equation.
pub fn source_defect(exact: &ExactSolution, p: ManufacturedParams, delta: f64) -> f64 {
    let source = exact
        .source
        .as_ref()
        .expect("manufactured solution has a source");
    let potential = PotentialSpec::harmonic(p.gamma_x, p.gamma_y);
    let u = |x: f64, y: f64, t: f64| exact.eval(x, y, t);
    let samples = [
        (0.13, 0.71, 0.0),
        (0.5, 0.5, 0.25),
        (0.27, 0.38, 0.5),
        (0.91, 0.06, 0.75),
        (0.64, 0.83, 1.0),
    ];
    let d = delta;
    samples
        .iter()
        .map(|&(x, y, t)| {
            let c = u(x, y, t);
            let u_t = (u(x, y, t + d) - u(x, y, t - d)) / (2.0 * d);
            let u_x = (u(x + d, y, t) - u(x - d, y, t)) / (2.0 * d);
            let u_y = (u(x, y + d, t) - u(x, y - d, t)) / (2.0 * d);
            let lap = (u(x + d, y, t) + u(x - d, y, t) + u(x, y + d, t) + u(x, y - d, t) - 4.0 * c)
                / (d * d);
            let lz_u = C64::new(0.0, -1.0) * (x * u_y - y * u_x);
            let lhs = C64::new(0.0, 1.0) * u_t + 0.5 * lap - potential.eval(x, y) * c
                + p.omega * lz_u
                - p.beta * c.norm_sqr() * c;
            (lhs - source(x, y, t)).norm()
        })
        .fold(0.0, f64::max)
}
