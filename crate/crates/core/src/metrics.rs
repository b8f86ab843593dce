//! Discrete difference operators, stability functionals and error reports.
//!
//! For a state triple (w, u, λ) and step size Δt,
//!
//! ```text
//! Z = ½‖u‖²_f + ½‖w‖²_s + (Δtα/2)‖u‖²_Σ + (Δt/2α)‖λ‖²_Σ
//! S = Δt(ν_f‖∇u'‖²_f + ν_s‖∇w'‖²_s) + ½(‖w'−w‖²_s + ‖u'−u‖²_f)
//!     + (αΔt/2)‖(u'−u) + (λ'−λ)/α‖²_Σ
//! ```
//!
//! and the scheme satisfies Z' + S = Z + Δt·F + (Δt/α)⟨ε₂, λ'⟩ exactly with
//! F = (b₁, w')_s + (b₂, u')_f + ⟨ε₁ + ε₂, w'⟩ + ⟨u' − u, ε₂⟩.

use crate::error::{Error, Result};
use crate::exact::{interface_flux, ManufacturedSolution};
use crate::fem::{error_norms, interface_l2_error, Discretization, Jet, Space};
use crate::linalg::dot;
use crate::quadrature::{segment_gauss3, triangle_degree4};
use crate::splitting::{PhysicsParams, ResidualInjection, SplitState, StepLoads};

fn combine(history: &[Vec<f64>], n: usize, weights: &[f64], scale: f64) -> Result<Vec<f64>> {
    let needed = weights.len();
    if n + 1 < needed || n >= history.len() {
        return Err(Error::InsufficientHistory { needed, available: history.len().min(n + 1) });
    }
    let len = history[n].len();
    let mut out = vec![0.0; len];
    for (k, &c) in weights.iter().enumerate() {
        let v = &history[n - k];
        if v.len() != len {
            return Err(Error::DimensionMismatch("history vectors differ in length".into()));
        }
        for (o, x) in out.iter_mut().zip(v) {
            *o += c * x;
        }
    }
    out.iter_mut().for_each(|o| *o /= scale);
    Ok(out)
}

/// (vⁿ − vⁿ⁻¹)/Δt
pub fn diff1(history: &[Vec<f64>], n: usize, dt: f64) -> Result<Vec<f64>> {
    combine(history, n, &[1.0, -1.0], dt)
}

/// (vⁿ − 2vⁿ⁻¹ + vⁿ⁻²)/Δt²
pub fn diff2(history: &[Vec<f64>], n: usize, dt: f64) -> Result<Vec<f64>> {
    combine(history, n, &[1.0, -2.0, 1.0], dt * dt)
}

/// (vⁿ − 3vⁿ⁻¹ + 3vⁿ⁻² − vⁿ⁻³)/Δt³
pub fn diff3(history: &[Vec<f64>], n: usize, dt: f64) -> Result<Vec<f64>> {
    combine(history, n, &[1.0, -3.0, 3.0, -1.0], dt * dt * dt)
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn compute_z(disc: &Discretization, params: &PhysicsParams, state: &SplitState) -> f64 {
    let (dt, alpha) = (params.dt(), params.alpha);
    let ut = disc.fluid.trace(&state.u);
    0.5 * disc.mass_f.quadratic(&state.u)
        + 0.5 * disc.mass_s.quadratic(&state.w)
        + 0.5 * dt * alpha * disc.iface_ff.quadratic(&ut)
        + 0.5 * dt / alpha * disc.iface_ff.quadratic(&state.lambda)
}

pub fn compute_s(disc: &Discretization, params: &PhysicsParams, prev: &SplitState, next: &SplitState) -> f64 {
    let (dt, alpha) = (params.dt(), params.alpha);
    let dw = sub(&next.w, &prev.w);
    let du = sub(&next.u, &prev.u);
    let dut = disc.fluid.trace(&du);
    let mixed: Vec<f64> = dut
        .iter()
        .zip(next.lambda.iter().zip(&prev.lambda))
        .map(|(u, (l1, l0))| u + (l1 - l0) / alpha)
        .collect();
    dt * (params.nu_f * disc.stiff_f.quadratic(&next.u) + params.nu_s * disc.stiff_s.quadratic(&next.w))
        + 0.5 * (disc.mass_s.quadratic(&dw) + disc.mass_f.quadratic(&du))
        + 0.5 * alpha * dt * disc.iface_ff.quadratic(&mixed)
}

/// Δt·F + (Δt/α)⟨ε₂, λ'⟩ for one step.
pub fn forcing(disc: &Discretization, params: &PhysicsParams, prev: &SplitState, next: &SplitState, loads: &StepLoads) -> f64 {
    let (dt, alpha) = (params.dt(), params.alpha);
    let wt = disc.solid.trace(&next.w);
    let dut = disc.fluid.trace(&sub(&next.u, &prev.u));
    let b_eps2 = disc.iface_ff.matvec(&loads.eps2);
    let f = dot(&loads.b1, &next.w)
        + dot(&loads.b2, &next.u)
        + dot(&loads.eps1, &wt)
        + dot(&b_eps2, &wt)
        + dot(&b_eps2, &dut);
    dt * f + dt / alpha * dot(&b_eps2, &next.lambda)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepFunctionals {
    /// Index of the new state.
    pub step: usize,
    pub z_prev: f64,
    pub z: f64,
    pub s: f64,
    pub forcing: f64,
    /// Z' + S − Z − Δt·F − (Δt/α)⟨ε₂, λ'⟩.
    pub identity_residual: f64,
}

impl StepFunctionals {
    /// Residual relative to 1 + |Z'| + |Z|.
    pub fn relative_residual(&self) -> f64 {
        self.identity_residual.abs() / (1.0 + self.z.abs() + self.z_prev.abs())
    }
}

pub fn step_functionals(disc: &Discretization, params: &PhysicsParams, prev: &SplitState, next: &SplitState, loads: &StepLoads) -> StepFunctionals {
    let z_prev = compute_z(disc, params, prev);
    let z = compute_z(disc, params, next);
    let s = compute_s(disc, params, prev, next);
    let forcing = forcing(disc, params, prev, next, loads);
    StepFunctionals { step: next.step, z_prev, z, s, forcing, identity_residual: z + s - z_prev - forcing }
}

/// Signed defect of the discrete energy identity for one step.
pub fn identity_residual(disc: &Discretization, params: &PhysicsParams, prev: &SplitState, next: &SplitState, loads: &StepLoads) -> f64 {
    step_functionals(disc, params, prev, next, loads).identity_residual
}

fn integrate_sq(space: &Space, f: impl Fn([f64; 2]) -> f64) -> f64 {
    let rule = triangle_degree4();
    space
        .cells
        .iter()
        .map(|c| {
            rule.points
                .iter()
                .zip(&rule.weights)
                .map(|(p, w)| w * c.area * f(c.point(*p)).powi(2))
                .sum::<f64>()
        })
        .sum()
}

fn interface_integrate_sq(space: &Space, f: impl Fn([f64; 2]) -> f64) -> f64 {
    space
        .interface_edges
        .iter()
        .map(|e| {
            let len = e.length();
            segment_gauss3().iter().map(|&(s, w)| w * len * f(e.at(s)).powi(2)).sum::<f64>()
        })
        .sum()
}

/// Ξ_m^N of the injected data.
///
/// Volume and interface terms integrate the fields directly; the ε₂ terms on
/// Ω_f use its fluid-space interpolant (zero on the Dirichlet edge), whose
/// mass and stiffness norms are read from the assembled matrices.
pub fn compute_xi(disc: &Discretization, params: &PhysicsParams, injection: &ResidualInjection, m: usize) -> f64 {
    let (dt, alpha, nu_f, nu_s) = (params.dt(), params.alpha, params.nu_f, params.nu_s);
    let n_final = params.steps;
    let zero = |_: [f64; 2], _: f64| 0.0;
    let field = |f: &Option<crate::splitting::Field>, p: [f64; 2], t: f64| f.as_ref().map_or_else(|| zero(p, t), |g| g(p, t));
    let s2_coeffs = |k: usize| -> Vec<f64> {
        let t = params.time(k);
        disc.fluid.interpolate_homogeneous(|p| field(&injection.eps2, p, t))
    };

    let mut xi = 0.0;
    for k in (m + 1)..=n_final {
        let t = params.time(k);
        let mut term = 0.0;
        if injection.b1.is_some() {
            term += integrate_sq(&disc.solid, |p| field(&injection.b1, p, t)) / nu_s;
        }
        if injection.b2.is_some() {
            term += (1.0 / nu_f + 1.0 / alpha) * integrate_sq(&disc.fluid, |p| field(&injection.b2, p, t));
        }
        if injection.eps2.is_some() {
            let s2 = s2_coeffs(k);
            term += nu_f / (alpha * alpha) * disc.stiff_f.quadratic(&s2) + disc.mass_f.quadratic(&s2) / alpha;
            if k >= m + 2 {
                let ds2: Vec<f64> = s2.iter().zip(s2_coeffs(k - 1)).map(|(a, b)| (a - b) / dt).collect();
                term += disc.mass_f.quadratic(&ds2) / (nu_f * alpha * alpha);
            }
        }
        if injection.eps1.is_some() || injection.eps2.is_some() {
            term += interface_integrate_sq(&disc.fluid, |p| field(&injection.eps1, p, t) + field(&injection.eps2, p, t)) / nu_s;
            term += interface_integrate_sq(&disc.fluid, |p| field(&injection.eps2, p, t)) / nu_f;
        }
        xi += dt * term;
    }
    if injection.eps2.is_some() {
        xi += disc.mass_f.quadratic(&s2_coeffs(n_final)) / (alpha * alpha);
    }
    xi
}

/// Final-time errors against a manufactured solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub e_u: f64,
    pub e_1u: f64,
    pub e_2u: Option<f64>,
    pub e_lambda: f64,
    pub e_1lambda: f64,
    /// Broken H² norm of Uᴺ − Uᴺ⁻¹; P2 only.
    pub e_1u_h2: Option<f64>,
}

/// Errors Uⁿ = u(tₙ) − uⁿ and Λⁿ = l(tₙ) − λⁿ at the last states of `tail`
/// (oldest first, consecutive steps, at least two states).
pub fn evaluate_errors(disc: &Discretization, params: &PhysicsParams, tail: &[SplitState], sol: &dyn ManufacturedSolution) -> Result<ErrorReport> {
    if tail.len() < 2 {
        return Err(Error::InsufficientHistory { needed: 2, available: tail.len() });
    }
    let k = tail.len();
    let (sn, sm) = (&tail[k - 1], &tail[k - 2]);
    let (tn, tm) = (params.time(sn.step), params.time(sm.step));
    let fluid = &disc.fluid;
    let h2 = disc.degree >= 2;

    let e_u = error_norms(fluid, &sn.u, |p| sol.jet(p, tn), false)?.l2;
    let du = sub(&sn.u, &sm.u);
    let first = error_norms(fluid, &du, |p| sol.jet(p, tn) - sol.jet(p, tm), h2)?;

    let e_2u = if k >= 3 {
        let so = &tail[k - 3];
        let to = params.time(so.step);
        let d2: Vec<f64> = (0..du.len()).map(|i| sn.u[i] - 2.0 * sm.u[i] + so.u[i]).collect();
        let exact = |p: [f64; 2]| -> Jet {
            let (a, b, c) = (sol.jet(p, tn), sol.jet(p, tm), sol.jet(p, to));
            (a - b) - (b - c)
        };
        Some(error_norms(fluid, &d2, exact, false)?.l2)
    } else {
        None
    };

    let spec = disc.mesh.interface;
    let flux = |p: [f64; 2], t: f64| interface_flux(sol, &spec, params.nu_f, p, t);
    let e_lambda = interface_l2_error(fluid, &sn.lambda, |p| flux(p, tn));
    let e_1lambda = interface_l2_error(fluid, &sub(&sn.lambda, &sm.lambda), |p| flux(p, tn) - flux(p, tm));

    Ok(ErrorReport { e_u, e_1u: first.l2, e_2u, e_lambda, e_1lambda, e_1u_h2: first.h2_broken })
}

/// Observed order between two levels: log(e_c/e_f) / log(h_c/h_f).
pub fn observed_rate(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> Option<f64> {
    (e_coarse > 0.0 && e_fine > 0.0 && h_coarse != h_fine).then(|| (e_coarse / e_fine).ln() / (h_coarse / h_fine).ln())
}
