//! Fully coupled backward-Euler reference solver.
//!
//! Each step solves the symmetric indefinite system
//!
//! ```text
//! [ A_s   0    C   ] [w']   [M_s w/Δt]
//! [ 0     A_f  −B  ] [u'] = [M_f u/Δt]
//! [ Cᵀ    −Bᵀ  0   ] [l']   [0       ]
//! ```
//!
//! with A = M/Δt + νK, C the solid-fluid trace coupling and B the fluid
//! trace mass matrix, so the last row enforces ⟨w' − u', μ⟩ = 0.

use crate::error::{Error, Result};
use crate::fem::Discretization;
use crate::linalg::{cg_solve, cg_solve_from, LdltFactor, SparseMatrix, TripletBuilder};
use crate::splitting::{History, PhysicsParams, SolverSettings, SplitState};

/// Largest saddle system factored densely under `MonolithicSolver::Auto`.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MonolithicSolver {
    /// Dense LDLᵀ up to `DENSE_LIMIT` unknowns, condensed CG above.
    #[default]
    Auto,
    Dense,
    /// CG on the system with fluid and solid interface dofs merged.
    Condensed,
}

enum Backend {
    Dense(LdltFactor),
    Condensed {
        matrix: SparseMatrix,
        /// Global index of every solid dof, then of every fluid dof.
        solid_map: Vec<usize>,
        fluid_map: Vec<usize>,
    },
}

pub struct MonolithicStepper<'a> {
    pub disc: &'a Discretization,
    pub params: PhysicsParams,
    pub settings: SolverSettings,
    a_s: SparseMatrix,
    a_f: SparseMatrix,
    backend: Backend,
}

fn step_matrix(mass: &SparseMatrix, stiff: &SparseMatrix, dt: f64, nu: f64) -> SparseMatrix {
    SparseMatrix::linear_combination(&[(1.0 / dt, mass), (nu, stiff)])
}

impl<'a> MonolithicStepper<'a> {
    pub fn new(disc: &'a Discretization, params: PhysicsParams, settings: SolverSettings, solver: MonolithicSolver) -> Result<Self> {
        params.validate()?;
        if disc.n_interface() == 0 {
            return Err(Error::Singular("empty interface".into()));
        }
        let dt = params.dt();
        let a_s = step_matrix(&disc.mass_s, &disc.stiff_s, dt, params.nu_s);
        let a_f = step_matrix(&disc.mass_f, &disc.stiff_f, dt, params.nu_f);
        let size = disc.solid.dim() + disc.fluid.dim() + disc.n_interface();
        let dense = match solver {
            MonolithicSolver::Auto => size <= DENSE_LIMIT,
            MonolithicSolver::Dense => true,
            MonolithicSolver::Condensed => false,
        };
        let backend = if dense {
            Backend::Dense(LdltFactor::factor(&saddle_matrix(disc, &a_s, &a_f).to_dense())?)
        } else {
            condensed(disc, &a_s, &a_f)
        };
        Ok(MonolithicStepper { disc, params, settings, a_s, a_f, backend })
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.backend, Backend::Dense(_))
    }

    fn rhs_parts(&self, state: &SplitState) -> (Vec<f64>, Vec<f64>) {
        let d = self.disc;
        let dt = self.params.dt();
        let mut rs: Vec<f64> = d.mass_s.matvec(&state.w).iter().map(|v| v / dt).collect();
        let mut rf: Vec<f64> = d.mass_f.matvec(&state.u).iter().map(|v| v / dt).collect();
        d.solid.dirichlet_dofs.iter().for_each(|&i| rs[i] = 0.0);
        d.fluid.dirichlet_dofs.iter().for_each(|&i| rf[i] = 0.0);
        (rs, rf)
    }

    pub fn step(&self, state: &SplitState) -> Result<SplitState> {
        let d = self.disc;
        let (ns, nf) = (d.solid.dim(), d.fluid.dim());
        let (rs, rf) = self.rhs_parts(state);
        let (w, u, lambda) = match &self.backend {
            Backend::Dense(f) => {
                let mut rhs = rs;
                rhs.extend(rf);
                rhs.resize(ns + nf + d.n_interface(), 0.0);
                let x = f.solve(&rhs);
                (x[..ns].to_vec(), x[ns..ns + nf].to_vec(), x[ns + nf..].to_vec())
            }
            Backend::Condensed { matrix, solid_map, fluid_map } => {
                let mut rhs = vec![0.0; matrix.n_rows()];
                let mut guess = vec![0.0; matrix.n_rows()];
                for (i, &g) in solid_map.iter().enumerate() {
                    rhs[g] += rs[i];
                    guess[g] = state.w[i];
                }
                for (i, &g) in fluid_map.iter().enumerate() {
                    rhs[g] += rf[i];
                    if d.fluid.interface_index(i).is_none() {
                        guess[g] = state.u[i];
                    }
                }
                let maxit = self.settings.maxit_factor * rhs.len();
                cg_solve_from(matrix, &rhs, &mut guess, self.settings.tol, maxit)?;
                let w: Vec<f64> = solid_map.iter().map(|&g| guess[g]).collect();
                let u: Vec<f64> = fluid_map.iter().map(|&g| guess[g]).collect();
                let lambda = self.recover_multiplier(state, &u)?;
                (w, u, lambda)
            }
        };
        Ok(SplitState { step: state.step + 1, w, u, lambda })
    }

    /// Solves B l = (A_f u' − M_f u/Δt)|_Σ for the multiplier.
    fn recover_multiplier(&self, state: &SplitState, u_new: &[f64]) -> Result<Vec<f64>> {
        let d = self.disc;
        let dt = self.params.dt();
        let au = self.a_f.matvec(u_new);
        let mu = d.mass_f.matvec(&state.u);
        let r: Vec<f64> = d.fluid.interface_dofs.iter().map(|&i| au[i] - mu[i] / dt).collect();
        let maxit = self.settings.maxit_factor * r.len().max(1);
        Ok(cg_solve(&d.iface_ff, &r, self.settings.tol, maxit)?.0)
    }

    /// Residual of the full saddle system at `next`, relative to its right-hand side.
    pub fn residual(&self, state: &SplitState, next: &SplitState) -> f64 {
        let d = self.disc;
        let k = saddle_matrix(d, &self.a_s, &self.a_f);
        let (rs, rf) = self.rhs_parts(state);
        let mut rhs = rs;
        rhs.extend(rf);
        rhs.resize(k.n_rows(), 0.0);
        let mut x = next.w.clone();
        x.extend(&next.u);
        x.extend(&next.lambda);
        crate::linalg::relative_residual(&k, &x, &rhs)
    }
}

/// Assembles the saddle matrix with Dirichlet rows and columns eliminated.
pub fn saddle_matrix(d: &Discretization, a_s: &SparseMatrix, a_f: &SparseMatrix) -> SparseMatrix {
    let (ns, nf, m) = (d.solid.dim(), d.fluid.dim(), d.n_interface());
    let a_s = a_s.eliminate(d.solid.dirichlet_mask());
    let a_f = a_f.eliminate(d.fluid.dirichlet_mask());
    let mut b = TripletBuilder::with_capacity(ns + nf + m, ns + nf + m, a_s.nnz() + a_f.nnz() + 4 * d.iface_sf.nnz());
    for i in 0..ns {
        for (j, v) in a_s.row(i) {
            b.add(i, j, v);
        }
    }
    for i in 0..nf {
        for (j, v) in a_f.row(i) {
            b.add(ns + i, ns + j, v);
        }
    }
    for r in 0..m {
        let si = d.solid.interface_dofs[r];
        if !d.solid.dirichlet_mask()[si] {
            for (c, v) in d.iface_sf.row(r) {
                b.add(si, ns + nf + c, v);
                b.add(ns + nf + c, si, v);
            }
        }
        let fi = d.fluid.interface_dofs[r];
        if !d.fluid.dirichlet_mask()[fi] {
            for (c, v) in d.iface_ff.row(r) {
                b.add(ns + fi, ns + nf + c, -v);
                b.add(ns + nf + c, ns + fi, -v);
            }
        }
    }
    b.build()
}

/// Conforming system on Ω with the fluid interface dofs identified with the solid ones.
fn condensed(d: &Discretization, a_s: &SparseMatrix, a_f: &SparseMatrix) -> Backend {
    let ns = d.solid.dim();
    let solid_map: Vec<usize> = (0..ns).collect();
    let mut next = ns;
    let fluid_map: Vec<usize> = (0..d.fluid.dim())
        .map(|i| match d.fluid.interface_index(i) {
            Some(k) => d.solid.interface_dofs[k],
            None => {
                next += 1;
                next - 1
            }
        })
        .collect();
    let mut dirichlet = vec![false; next];
    for &i in &d.solid.dirichlet_dofs {
        dirichlet[solid_map[i]] = true;
    }
    for &i in &d.fluid.dirichlet_dofs {
        dirichlet[fluid_map[i]] = true;
    }
    let mut b = TripletBuilder::with_capacity(next, next, a_s.nnz() + a_f.nnz());
    for i in 0..ns {
        for (j, v) in a_s.row(i) {
            b.add(solid_map[i], solid_map[j], v);
        }
    }
    for i in 0..d.fluid.dim() {
        for (j, v) in a_f.row(i) {
            b.add(fluid_map[i], fluid_map[j], v);
        }
    }
    let matrix = b.build().eliminate(&dirichlet);
    Backend::Condensed { matrix, solid_map, fluid_map }
}

#[derive(Debug, Clone)]
pub struct MonolithicOutput {
    pub states: Vec<SplitState>,
    /// max ‖w' − u'‖_Σ over all steps.
    pub max_jump: f64,
}

impl MonolithicOutput {
    pub fn last(&self) -> &SplitState {
        self.states.last().expect("a run keeps at least one state")
    }
}

/// ‖trace w − trace u‖ in the interface mass norm.
pub fn interface_jump(d: &Discretization, state: &SplitState) -> f64 {
    let jump: Vec<f64> = d.solid.trace(&state.w).iter().zip(d.fluid.trace(&state.u)).map(|(a, b)| a - b).collect();
    d.iface_ff.quadratic(&jump).max(0.0).sqrt()
}

pub fn run_monolithic(stepper: &MonolithicStepper<'_>, initial: SplitState, history: History) -> Result<MonolithicOutput> {
    let mut states = vec![initial];
    let mut max_jump = 0.0f64;
    for n in 0..stepper.params.steps {
        let next = stepper
            .step(states.last().unwrap())
            .map_err(|e| Error::StepFailed { step: n + 1, source: Box::new(e) })?;
        max_jump = max_jump.max(interface_jump(stepper.disc, &next));
        states.push(next);
        if let History::Tail(k) = history {
            let k = k.max(1);
            if states.len() > k {
                states.drain(..states.len() - k);
            }
        }
    }
    Ok(MonolithicOutput { states, max_jump })
}

/// Dense oracle: solves the saddle system for one step from scratch.
pub fn dense_reference_step(d: &Discretization, params: &PhysicsParams, state: &SplitState) -> Result<SplitState> {
    let s = MonolithicStepper::new(d, *params, SolverSettings::default(), MonolithicSolver::Dense)?;
    s.step(state)
}
