//! Loosely coupled Robin-Robin time stepping.
//!
//! One step from (wⁿ, uⁿ, λⁿ) solves, in order,
//!
//! ```text
//! solid:  (M_s/Δt + ν_s K_s + α B_ss) wⁿ⁺¹ = M_s wⁿ/Δt + α C_sf uⁿ − C_sf λⁿ + b₁ + ε₁
//! fluid:  (M_f/Δt + ν_f K_f + α B_ff) uⁿ⁺¹ = M_f uⁿ/Δt + α C_fs wⁿ⁺¹ + B_ff λⁿ + B_ff P ε₂ + b₂
//! λⁿ⁺¹ = λⁿ − α (uⁿ⁺¹ − wⁿ⁺¹)|_Σ + P ε₂
//! ```
//!
//! where the interface matrices act on trace coefficients and `P` is the
//! L²(Σ) projection onto the fluid trace space, which also carries λ. With
//! all injected terms zero this is the plain Robin-Robin scheme.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{assemble_interface_load, assemble_load, project_interface, Discretization, Space};
use crate::linalg::{cg_solve_from, SparseMatrix, TripletBuilder, DEFAULT_MAXIT_FACTOR, DEFAULT_TOL};
use crate::metrics::{self, StepFunctionals};

/// Space-time scalar field `f(point, t)`.
pub type Field = Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsParams {
    pub nu_f: f64,
    pub nu_s: f64,
    pub alpha: f64,
    pub t_final: f64,
    pub steps: usize,
}

impl PhysicsParams {
    pub fn new(nu_f: f64, nu_s: f64, alpha: f64, t_final: f64, steps: usize) -> Result<Self> {
        let p = PhysicsParams { nu_f, nu_s, alpha, t_final, steps };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.nu_f, self.nu_s, self.alpha, self.t_final];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.steps == 0 {
            return Err(Error::Config(format!("physical parameters must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt()
    }
}

/// Coefficients of (wⁿ, uⁿ, λⁿ).
#[derive(Debug, Clone, PartialEq)]
pub struct SplitState {
    pub step: usize,
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    /// Fluid-trace coefficients of the multiplier.
    pub lambda: Vec<f64>,
}

impl SplitState {
    pub fn zero(disc: &Discretization) -> Self {
        SplitState {
            step: 0,
            w: vec![0.0; disc.solid.dim()],
            u: vec![0.0; disc.fluid.dim()],
            lambda: vec![0.0; disc.n_interface()],
        }
    }
}

/// Right-hand side terms of the generalized scheme; `None` means zero.
#[derive(Clone, Default)]
pub struct ResidualInjection {
    /// Volume source in the solid.
    pub b1: Option<Field>,
    /// Volume source in the fluid.
    pub b2: Option<Field>,
    /// Perturbation of the solid Robin condition.
    pub eps1: Option<Field>,
    /// Perturbation of the fluid Robin condition and multiplier update.
    pub eps2: Option<Field>,
}

impl std::fmt::Debug for ResidualInjection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResidualInjection")
            .field("b1", &self.b1.is_some())
            .field("b2", &self.b2.is_some())
            .field("eps1", &self.eps1.is_some())
            .field("eps2", &self.eps2.is_some())
            .finish()
    }
}

impl ResidualInjection {
    pub fn is_zero(&self) -> bool {
        self.b1.is_none() && self.b2.is_none() && self.eps1.is_none() && self.eps2.is_none()
    }
}

/// Discrete injected data at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLoads {
    /// ∫ b₁ φᵢ over Ω_s.
    pub b1: Vec<f64>,
    /// ∫ b₂ φᵢ over Ω_f.
    pub b2: Vec<f64>,
    /// ∫_Σ ε₁ φᵢ on solid traces.
    pub eps1: Vec<f64>,
    /// Trace-space coefficients of the projection of ε₂.
    pub eps2: Vec<f64>,
}

impl StepLoads {
    pub fn zero(disc: &Discretization) -> Self {
        let m = disc.n_interface();
        StepLoads { b1: vec![0.0; disc.solid.dim()], b2: vec![0.0; disc.fluid.dim()], eps1: vec![0.0; m], eps2: vec![0.0; m] }
    }
}

/// How λ⁰ is initialized.
pub enum LambdaInit<'a> {
    /// L²(Σ) projection of the given initial flux ν_f ∇u₀·n_f.
    Projected(&'a dyn Fn([f64; 2]) -> f64),
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    pub maxit_factor: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tol: DEFAULT_TOL, maxit_factor: DEFAULT_MAXIT_FACTOR }
    }
}

/// Embeds an interface-indexed matrix into the dofs of `space`.
pub(crate) fn embed_interface(space: &Space, m: &SparseMatrix) -> SparseMatrix {
    let mut b = TripletBuilder::with_capacity(space.dim(), space.dim(), m.nnz());
    for i in 0..m.n_rows() {
        for (j, v) in m.row(i) {
            b.add(space.interface_dofs[i], space.interface_dofs[j], v);
        }
    }
    b.build()
}

pub(crate) fn zero_dirichlet(space: &Space, v: &mut [f64]) {
    for &d in &space.dirichlet_dofs {
        v[d] = 0.0;
    }
}

fn add_on_interface(space: &Space, target: &mut [f64], values: &[f64], scale: f64) {
    for (&d, &v) in space.interface_dofs.iter().zip(values) {
        target[d] += scale * v;
    }
}

pub fn init_state(disc: &Discretization, u0: impl Fn([f64; 2]) -> f64, w0: impl Fn([f64; 2]) -> f64, lambda0: LambdaInit<'_>) -> Result<SplitState> {
    let lambda = match lambda0 {
        LambdaInit::Zero => vec![0.0; disc.n_interface()],
        LambdaInit::Projected(flux) => project_interface(&disc.fluid, &disc.iface_ff, flux)?,
    };
    Ok(SplitState {
        step: 0,
        w: disc.solid.interpolate_homogeneous(w0),
        u: disc.fluid.interpolate_homogeneous(u0),
        lambda,
    })
}

/// Robin-Robin stepper with the step matrices factored out of the time loop.
pub struct SplitStepper<'a> {
    pub disc: &'a Discretization,
    pub params: PhysicsParams,
    pub settings: SolverSettings,
    solid_matrix: SparseMatrix,
    fluid_matrix: SparseMatrix,
    iface_fs: SparseMatrix,
}

impl<'a> SplitStepper<'a> {
    pub fn new(disc: &'a Discretization, params: PhysicsParams, settings: SolverSettings) -> Result<Self> {
        params.validate()?;
        let dt = params.dt();
        let solid_robin = embed_interface(&disc.solid, &disc.iface_ss);
        let fluid_robin = embed_interface(&disc.fluid, &disc.iface_ff);
        let solid_matrix = SparseMatrix::linear_combination(&[
            (1.0 / dt, &disc.mass_s),
            (params.nu_s, &disc.stiff_s),
            (params.alpha, &solid_robin),
        ])
        .eliminate(disc.solid.dirichlet_mask());
        let fluid_matrix = SparseMatrix::linear_combination(&[
            (1.0 / dt, &disc.mass_f),
            (params.nu_f, &disc.stiff_f),
            (params.alpha, &fluid_robin),
        ])
        .eliminate(disc.fluid.dirichlet_mask());
        Ok(SplitStepper { disc, params, settings, solid_matrix, fluid_matrix, iface_fs: disc.iface_sf.transpose() })
    }

    pub fn solid_matrix(&self) -> &SparseMatrix {
        &self.solid_matrix
    }

    pub fn fluid_matrix(&self) -> &SparseMatrix {
        &self.fluid_matrix
    }

    /// Discretizes the injected data at time `t`.
    pub fn loads(&self, injection: &ResidualInjection, t: f64) -> Result<StepLoads> {
        let d = self.disc;
        let mut loads = StepLoads::zero(d);
        if let Some(f) = &injection.b1 {
            loads.b1 = assemble_load(&d.solid, |p| f(p, t));
            zero_dirichlet(&d.solid, &mut loads.b1);
        }
        if let Some(f) = &injection.b2 {
            loads.b2 = assemble_load(&d.fluid, |p| f(p, t));
            zero_dirichlet(&d.fluid, &mut loads.b2);
        }
        if let Some(f) = &injection.eps1 {
            loads.eps1 = assemble_interface_load(&d.solid, |p| f(p, t));
        }
        if let Some(f) = &injection.eps2 {
            loads.eps2 = project_interface(&d.fluid, &d.iface_ff, |p| f(p, t))?;
        }
        Ok(loads)
    }

    /// Right-hand side of the solid system.
    pub fn solid_rhs(&self, state: &SplitState, loads: &StepLoads) -> Vec<f64> {
        let d = self.disc;
        let dt = self.params.dt();
        let mut rhs = d.mass_s.matvec(&state.w);
        rhs.iter_mut().for_each(|v| *v /= dt);
        let robin = d.iface_sf.matvec(&d.fluid.trace(&state.u));
        let flux = d.iface_sf.matvec(&state.lambda);
        add_on_interface(&d.solid, &mut rhs, &robin, self.params.alpha);
        add_on_interface(&d.solid, &mut rhs, &flux, -1.0);
        add_on_interface(&d.solid, &mut rhs, &loads.eps1, 1.0);
        for (r, b) in rhs.iter_mut().zip(&loads.b1) {
            *r += b;
        }
        zero_dirichlet(&d.solid, &mut rhs);
        rhs
    }

    /// Right-hand side of the fluid system given the new solid state.
    pub fn fluid_rhs(&self, state: &SplitState, w_new: &[f64], loads: &StepLoads) -> Vec<f64> {
        let d = self.disc;
        let dt = self.params.dt();
        let mut rhs = d.mass_f.matvec(&state.u);
        rhs.iter_mut().for_each(|v| *v /= dt);
        let robin = self.iface_fs.matvec(&d.solid.trace(w_new));
        let flux: Vec<f64> = state.lambda.iter().zip(&loads.eps2).map(|(l, e)| l + e).collect();
        let flux = d.iface_ff.matvec(&flux);
        add_on_interface(&d.fluid, &mut rhs, &robin, self.params.alpha);
        add_on_interface(&d.fluid, &mut rhs, &flux, 1.0);
        for (r, b) in rhs.iter_mut().zip(&loads.b2) {
            *r += b;
        }
        zero_dirichlet(&d.fluid, &mut rhs);
        rhs
    }

    fn solve(&self, a: &SparseMatrix, rhs: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
        let mut x = guess.to_vec();
        let maxit = self.settings.maxit_factor * rhs.len();
        let report = cg_solve_from(a, rhs, &mut x, self.settings.tol, maxit)?;
        log::debug!("cg: {} iterations, relative residual {:.1e}", report.iterations, report.relative_residual);
        Ok(x)
    }

    pub fn solid_step(&self, state: &SplitState, loads: &StepLoads) -> Result<Vec<f64>> {
        self.solve(&self.solid_matrix, &self.solid_rhs(state, loads), &state.w)
    }

    pub fn fluid_step(&self, state: &SplitState, w_new: &[f64], loads: &StepLoads) -> Result<Vec<f64>> {
        self.solve(&self.fluid_matrix, &self.fluid_rhs(state, w_new, loads), &state.u)
    }

    /// λⁿ⁺¹ = λⁿ − α (uⁿ⁺¹ − wⁿ⁺¹)|_Σ + P ε₂ⁿ⁺¹.
    pub fn lambda_update(&self, state: &SplitState, w_new: &[f64], u_new: &[f64], loads: &StepLoads) -> Vec<f64> {
        let d = self.disc;
        let alpha = self.params.alpha;
        let (tu, tw) = (d.fluid.trace(u_new), d.solid.trace(w_new));
        state
            .lambda
            .iter()
            .zip(tu.iter().zip(&tw))
            .zip(&loads.eps2)
            .map(|((l, (u, w)), e)| l - alpha * (u - w) + e)
            .collect()
    }

    /// Advances one step with precomputed loads.
    pub fn step_with(&self, state: &SplitState, loads: &StepLoads) -> Result<SplitState> {
        let w = self.solid_step(state, loads)?;
        let u = self.fluid_step(state, &w, loads)?;
        let lambda = self.lambda_update(state, &w, &u, loads);
        Ok(SplitState { step: state.step + 1, w, u, lambda })
    }

    pub fn step(&self, state: &SplitState, injection: &ResidualInjection) -> Result<(SplitState, StepLoads)> {
        let loads = self.loads(injection, self.params.time(state.step + 1))?;
        let next = self.step_with(state, &loads)?;
        Ok((next, loads))
    }
}

/// Which states a run keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum History {
    /// The last `k` states (including the initial one while n < k).
    Tail(usize),
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub history: History,
    /// Evaluate Z, S and the energy-identity residual at every step.
    pub functionals: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { history: History::Tail(3), functionals: false }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Retained states, oldest first; the last one is step N.
    pub states: Vec<SplitState>,
    pub functionals: Vec<StepFunctionals>,
}

impl RunOutput {
    pub fn last(&self) -> &SplitState {
        self.states.last().expect("a run keeps at least one state")
    }
}

fn keep(states: &mut Vec<SplitState>, history: History) {
    if let History::Tail(k) = history {
        let k = k.max(1);
        if states.len() > k {
            states.drain(..states.len() - k);
        }
    }
}

/// Runs N = `params.steps` steps of the splitting scheme from `initial`.
pub fn run(stepper: &SplitStepper<'_>, initial: SplitState, injection: &ResidualInjection, options: RunOptions) -> Result<RunOutput> {
    let steps = stepper.params.steps;
    let mut states = vec![initial];
    let mut functionals = Vec::new();
    for n in 0..steps {
        let current = states.last().unwrap();
        let (next, loads) = stepper
            .step(current, injection)
            .map_err(|e| Error::StepFailed { step: n + 1, source: Box::new(e) })?;
        if options.functionals {
            functionals.push(metrics::step_functionals(stepper.disc, &stepper.params, current, &next, &loads));
        }
        states.push(next);
        keep(&mut states, options.history);
    }
    Ok(RunOutput { states, functionals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{interface_flux, CosSinMode, ManufacturedSolution};
    use crate::linalg::dense_solve;
    use crate::mesh::{InterfaceSpec, Mesh};

    fn disc(n: usize, degree: usize) -> Discretization {
        Discretization::new(Mesh::build(n, InterfaceSpec::Horizontal { y0: 0.75 }).unwrap(), degree).unwrap()
    }

    fn example_state(d: &Discretization) -> SplitState {
        let sol = CosSinMode::default();
        let spec = d.mesh.interface;
        let flux = move |p: [f64; 2]| interface_flux(&sol, &spec, 1.0, p, 0.0);
        init_state(d, |p| sol.value(p, 0.0), |p| sol.value(p, 0.0), LambdaInit::Projected(&flux)).unwrap()
    }

    fn max_abs(v: &[f64]) -> f64 {
        v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    #[test]
    fn params_validation() {
        assert!(PhysicsParams::new(1.0, 1.0, 4.0, 0.25, 8).is_ok());
        assert!(PhysicsParams::new(1.0, 0.0, 4.0, 0.25, 8).is_err());
        assert!(PhysicsParams::new(1.0, 1.0, -4.0, 0.25, 8).is_err());
        assert!(PhysicsParams::new(1.0, 1.0, 4.0, 0.25, 0).is_err());
        let p = PhysicsParams::new(1.0, 1.0, 4.0, 0.25, 8).unwrap();
        assert!((p.steps as f64 * p.dt() - p.t_final).abs() < 1e-12);
    }

    #[test]
    fn zero_state_stays_zero() {
        let d = disc(4, 1);
        let s = SplitStepper::new(&d, PhysicsParams::new(1.0, 1.0, 4.0, 0.25, 4).unwrap(), SolverSettings::default()).unwrap();
        let zero = init_state(&d, |_| 0.0, |_| 0.0, LambdaInit::Zero).unwrap();
        assert_eq!(zero, SplitState::zero(&d));
        let out = run(&s, zero, &ResidualInjection::default(), RunOptions { history: History::Full, functionals: false }).unwrap();
        assert_eq!(out.states.len(), 5);
        for st in &out.states {
            assert_eq!(max_abs(&st.w), 0.0);
            assert_eq!(max_abs(&st.u), 0.0);
            assert_eq!(max_abs(&st.lambda), 0.0);
        }
    }

    #[test]
    fn initial_multiplier_approximates_flux() {
        let d = disc(16, 1);
        let st = example_state(&d);
        let sol = CosSinMode::default();
        for (i, &dof) in d.fluid.interface_dofs.iter().enumerate() {
            let x = d.fluid.dof_coords[dof][0];
            let exact = std::f64::consts::PI * (std::f64::consts::PI * x).cos() * (0.75 * std::f64::consts::PI).cos();
            assert!((st.lambda[i] - exact).abs() < 0.05, "x={x}: {} vs {exact}", st.lambda[i]);
            assert!((sol.grad([x, 0.75], 0.0)[1] - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn single_step_matches_dense_oracle() {
        let d = disc(4, 1);
        let s = SplitStepper::new(&d, PhysicsParams::new(1.0, 1.0, 4.0, 0.25, 8).unwrap(), SolverSettings::default()).unwrap();
        let st = example_state(&d);
        let loads = StepLoads::zero(&d);
        let w = s.solid_step(&st, &loads).unwrap();
        let w_dense = dense_solve(&s.solid_matrix().to_dense(), &s.solid_rhs(&st, &loads)).unwrap();
        let scale = max_abs(&w_dense);
        for (a, b) in w.iter().zip(&w_dense) {
            assert!((a - b).abs() <= 1e-10 * scale);
        }
        let u = s.fluid_step(&st, &w, &loads).unwrap();
        let u_dense = dense_solve(&s.fluid_matrix().to_dense(), &s.fluid_rhs(&st, &w, &loads)).unwrap();
        let scale = max_abs(&u_dense);
        for (a, b) in u.iter().zip(&u_dense) {
            assert!((a - b).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn lambda_update_arithmetic() {
        let d = disc(4, 1);
        let s = SplitStepper::new(&d, PhysicsParams::new(1.0, 1.0, 4.0, 0.25, 8).unwrap(), SolverSettings::default()).unwrap();
        let mut st = SplitState::zero(&d);
        st.lambda = (0..d.n_interface()).map(|i| i as f64).collect();
        let w = d.solid.interpolate(|p| p[0]);
        let u = d.fluid.interpolate(|p| p[0]);
        let loads = StepLoads::zero(&d);
        assert_eq!(s.lambda_update(&st, &w, &u, &loads), st.lambda);

        let u_shift = d.fluid.interpolate(|p| p[0] + 0.25);
        let l = s.lambda_update(&st, &w, &u_shift, &loads);
        for (new, old) in l.iter().zip(&st.lambda) {
            assert!((old - new - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn lambda_update_satisfies_weak_multiplier_equation() {
        let d = disc(8, 2);
        let params = PhysicsParams::new(1.0, 1.0, 4.0, 0.25, 8).unwrap();
        let s = SplitStepper::new(&d, params, SolverSettings::default()).unwrap();
        let st = example_state(&d);
        let inj = ResidualInjection { eps2: Some(Arc::new(|p: [f64; 2], t: f64| (3.0 * p[0]).sin() + t)), ..Default::default() };
        let (next, _) = s.step(&st, &inj).unwrap();
        // B(λ' − λ) + α B(u' − w')|_Σ − ∫ ε₂ μ = 0
        let dl: Vec<f64> = next.lambda.iter().zip(&st.lambda).map(|(a, b)| a - b).collect();
        let jump: Vec<f64> = d.fluid.trace(&next.u).iter().zip(d.solid.trace(&next.w)).map(|(a, b)| a - b).collect();
        let load = assemble_interface_load(&d.fluid, |p| (3.0 * p[0]).sin() + params.time(1));
        let r1 = d.iface_ff.matvec(&dl);
        let r2 = d.iface_ff.matvec(&jump);
        for i in 0..d.n_interface() {
            let res = r1[i] + params.alpha * r2[i] - load[i];
            assert!(res.abs() <= 1e-12, "residual {res}");
        }
    }

    #[test]
    fn large_alpha_pulls_solid_trace_to_fluid() {
        let d = disc(8, 1);
        let sol = CosSinMode::default();
        let misfit = |alpha: f64| {
            let params = PhysicsParams::new(1.0, 1.0, alpha, 0.25, 8).unwrap();
            let s = SplitStepper::new(&d, params, SolverSettings::default()).unwrap();
            let st = init_state(&d, |p| sol.value(p, 0.0), |p| sol.value(p, 0.0), LambdaInit::Zero).unwrap();
            let w = s.solid_step(&st, &StepLoads::zero(&d)).unwrap();
            let diff: Vec<f64> = d.solid.trace(&w).iter().zip(d.fluid.trace(&st.u)).map(|(a, b)| a - b).collect();
            d.iface_ff.quadratic(&diff).sqrt()
        };
        let (m4, m400) = (misfit(4.0), misfit(400.0));
        assert!(m400 < m4, "{m400} !< {m4}");
        assert!(m400 < 0.05 * m4);
    }

    #[test]
    fn tail_history_keeps_three() {
        let d = disc(4, 1);
        let s = SplitStepper::new(&d, PhysicsParams::new(1.0, 1.0, 4.0, 0.25, 5).unwrap(), SolverSettings::default()).unwrap();
        let out = run(&s, example_state(&d), &ResidualInjection::default(), RunOptions::default()).unwrap();
        let steps: Vec<usize> = out.states.iter().map(|s| s.step).collect();
        assert_eq!(steps, vec![3, 4, 5]);
    }
}
