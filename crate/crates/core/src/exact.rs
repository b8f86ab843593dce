//! Manufactured solutions.

use std::f64::consts::PI;

use crate::fem::Jet;
use crate::mesh::InterfaceSpec;

/// Closed-form solution of the coupled problem, identical on both sides of
/// the interface.
pub trait ManufacturedSolution: Send + Sync {
    fn value(&self, p: [f64; 2], t: f64) -> f64;
    fn grad(&self, p: [f64; 2], t: f64) -> [f64; 2];
    fn hess(&self, p: [f64; 2], t: f64) -> [[f64; 2]; 2];
    fn time_derivative(&self, p: [f64; 2], t: f64) -> f64;
    /// Diffusivity for which the solution solves the heat equation.
    fn diffusivity(&self) -> f64;

    fn jet(&self, p: [f64; 2], t: f64) -> Jet {
        Jet { value: self.value(p, t), grad: self.grad(p, t), hess: self.hess(p, t) }
    }
}

/// `exp(-2π²νt) cos(πx) sin(πy)`: vanishes on y ∈ {0, 1}, has zero normal
/// derivative on x ∈ {0, 1}, and solves ∂ₜv − νΔv = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosSinMode {
    pub nu: f64,
}

impl Default for CosSinMode {
    fn default() -> Self {
        CosSinMode { nu: 1.0 }
    }
}

impl CosSinMode {
    fn decay(&self, t: f64) -> f64 {
        (-2.0 * PI * PI * self.nu * t).exp()
    }
}

impl ManufacturedSolution for CosSinMode {
    fn value(&self, p: [f64; 2], t: f64) -> f64 {
        self.decay(t) * (PI * p[0]).cos() * (PI * p[1]).sin()
    }

    fn grad(&self, p: [f64; 2], t: f64) -> [f64; 2] {
        let e = self.decay(t);
        [
            -PI * e * (PI * p[0]).sin() * (PI * p[1]).sin(),
            PI * e * (PI * p[0]).cos() * (PI * p[1]).cos(),
        ]
    }

    fn hess(&self, p: [f64; 2], t: f64) -> [[f64; 2]; 2] {
        let e = self.decay(t) * PI * PI;
        let (cx, sx) = ((PI * p[0]).cos(), (PI * p[0]).sin());
        let (cy, sy) = ((PI * p[1]).cos(), (PI * p[1]).sin());
        [[-e * cx * sy, -e * sx * cy], [-e * sx * cy, -e * cx * sy]]
    }

    fn time_derivative(&self, p: [f64; 2], t: f64) -> f64 {
        -2.0 * PI * PI * self.nu * self.value(p, t)
    }

    fn diffusivity(&self) -> f64 {
        self.nu
    }
}

/// Fluid flux ν_f ∇u·n_f at a point of Σ, with n_f the unit normal pointing
/// from the fluid into the solid.
pub fn interface_flux(sol: &dyn ManufacturedSolution, spec: &InterfaceSpec, nu_f: f64, p: [f64; 2], t: f64) -> f64 {
    let g = sol.grad(p, t);
    let n = spec.fluid_normal();
    nu_f * (g[0] * n[0] + g[1] * n[1])
}
