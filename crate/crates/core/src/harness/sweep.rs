//! Convergence and stability sweeps over refinement levels.

use log::info;
use rayon::prelude::*;

use super::config::{Lambda0Mode, RunConfig, Scheme};
use crate::error::{Error, Result};
use crate::exact::{interface_flux, CosSinMode, ManufacturedSolution};
use crate::fem::Discretization;
use crate::mesh::Mesh;
use crate::metrics::{compute_xi, compute_z, evaluate_errors, observed_rate, ErrorReport, StepFunctionals};
use crate::monolithic::{run_monolithic, MonolithicSolver, MonolithicStepper};
use crate::splitting::{init_state, run, History, LambdaInit, PhysicsParams, RunOptions, SolverSettings, SplitState, SplitStepper};

/// Identity residuals above this (relative to 1 + |Z'| + |Z|) fail `check_identity`.
pub const IDENTITY_TOL: f64 = 1e-9;

/// Result of one level of an error sweep.
#[derive(Debug, Clone)]
pub struct LevelRun {
    pub level: u32,
    pub dt: f64,
    pub h: f64,
    pub errors: ErrorReport,
    /// Largest relative identity residual, when functionals were recorded.
    pub max_identity_residual: Option<f64>,
    /// Largest interface jump of the monolithic solution.
    pub max_jump: Option<f64>,
    pub functionals: Vec<StepFunctionals>,
}

/// One line of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub level: u32,
    pub dt: f64,
    pub h: f64,
    /// e_u, e_1u, e_2u, e_lambda, e_1lambda, e_1u_H2.
    pub errors: [Option<f64>; 6],
    pub rates: [Option<f64>; 6],
}

impl ConvergenceRow {
    pub const NAMES: [&'static str; 6] = ["u", "1u", "2u", "lambda", "1lambda", "1u_H2"];
}

/// Result of one level of a stability sweep.
#[derive(Debug, Clone)]
pub struct StabilityRun {
    pub level: u32,
    pub dt: f64,
    pub z0: f64,
    pub z_final: f64,
    pub z_max: f64,
    pub xi: f64,
    /// max Zⁿ / (Z⁰ + Ξ).
    pub ratio: f64,
    pub max_identity_residual: f64,
    pub functionals: Vec<StepFunctionals>,
}

fn build(config: &RunConfig, level: u32) -> Result<(Discretization, PhysicsParams)> {
    let n = 1usize << level;
    let disc = Discretization::new(Mesh::build(n, config.interface)?, config.degree)?;
    let params = PhysicsParams::new(config.nu_f, config.nu_s, config.alpha, config.t_final, config.steps(level))?;
    Ok((disc, params))
}

fn initial_state(disc: &Discretization, config: &RunConfig, sol: &CosSinMode, projected: bool) -> Result<SplitState> {
    let spec = disc.mesh.interface;
    let nu_f = config.nu_f;
    let flux = move |p: [f64; 2]| interface_flux(sol, &spec, nu_f, p, 0.0);
    let lambda0 = if projected { LambdaInit::Projected(&flux) } else { LambdaInit::Zero };
    init_state(disc, |p| sol.value(p, 0.0), |p| sol.value(p, 0.0), lambda0)
}

fn max_residual(f: &[StepFunctionals]) -> f64 {
    f.iter().map(StepFunctionals::relative_residual).fold(0.0, f64::max)
}

fn settings(config: &RunConfig) -> SolverSettings {
    SolverSettings { tol: config.tol, ..Default::default() }
}

/// Runs one level against the manufactured solution.
pub fn run_level(config: &RunConfig, level: u32) -> Result<LevelRun> {
    let (disc, params) = build(config, level)?;
    let sol = CosSinMode { nu: config.nu_f };
    let projected = config.lambda0 != Lambda0Mode::Zero;
    let initial = initial_state(&disc, config, &sol, projected)?;
    let record = config.outputs.check_identity || config.outputs.functional_log.is_some();
    let (tail, functionals, max_jump) = match config.scheme {
        Scheme::Splitting => {
            let stepper = SplitStepper::new(&disc, params, settings(config))?;
            let injection = Default::default();
            let out = run(&stepper, initial, &injection, RunOptions { history: History::Tail(3), functionals: record })?;
            (out.states, out.functionals, None)
        }
        Scheme::Monolithic => {
            let stepper = MonolithicStepper::new(&disc, params, settings(config), MonolithicSolver::Auto)?;
            let out = run_monolithic(&stepper, initial, History::Tail(3))?;
            (out.states, Vec::new(), Some(out.max_jump))
        }
    };
    let errors = evaluate_errors(&disc, &params, &tail, &sol)?;
    let max_identity_residual = record.then(|| max_residual(&functionals)).filter(|_| config.scheme == Scheme::Splitting);
    if config.outputs.check_identity {
        if let Some(r) = max_identity_residual {
            info!("level {level}: max identity residual {r:.3e}");
            if r > IDENTITY_TOL {
                return Err(Error::IdentityViolated { level, residual: r });
            }
        }
    }
    Ok(LevelRun { level, dt: params.dt(), h: disc.mesh.h, errors, max_identity_residual, max_jump, functionals })
}

/// Runs one level with the configured injection preset, starting from the
/// manufactured initial data.
pub fn run_stability_level(config: &RunConfig, level: u32) -> Result<StabilityRun> {
    let preset = config.injection.ok_or_else(|| Error::Config("no injection preset configured".into()))?;
    let (disc, params) = build(config, level)?;
    let sol = CosSinMode { nu: config.nu_f };
    let initial = initial_state(&disc, config, &sol, config.lambda0 == Lambda0Mode::Projected)?;
    let injection = preset.injection();
    let stepper = SplitStepper::new(&disc, params, settings(config))?;
    let z0 = compute_z(&disc, &params, &initial);
    let out = run(&stepper, initial, &injection, RunOptions { history: History::Tail(1), functionals: true })?;
    let xi = compute_xi(&disc, &params, &injection, 0);
    let z_final = out.functionals.last().map_or(z0, |f| f.z);
    let z_max = out.functionals.iter().map(|f| f.z).fold(z0, f64::max);
    let max_identity_residual = max_residual(&out.functionals);
    if config.outputs.check_identity && max_identity_residual > IDENTITY_TOL {
        return Err(Error::IdentityViolated { level, residual: max_identity_residual });
    }
    Ok(StabilityRun {
        level,
        dt: params.dt(),
        z0,
        z_final,
        z_max,
        xi,
        ratio: z_max / (z0 + xi),
        max_identity_residual,
        functionals: out.functionals,
    })
}

/// Runs every level independently and in parallel; results keep the level order.
pub fn run_sweep(config: &RunConfig) -> Vec<(u32, Result<LevelRun>)> {
    config.levels.par_iter().map(|&k| (k, run_level(config, k))).collect()
}

pub fn run_stability_sweep(config: &RunConfig) -> Vec<(u32, Result<StabilityRun>)> {
    config.levels.par_iter().map(|&k| (k, run_stability_level(config, k))).collect()
}

/// Table rows with rates against the previous row.
pub fn convergence_rows(runs: &[LevelRun]) -> Vec<ConvergenceRow> {
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(runs.len());
    for r in runs {
        let e = r.errors;
        let errors = [Some(e.e_u), Some(e.e_1u), e.e_2u, Some(e.e_lambda), Some(e.e_1lambda), e.e_1u_h2];
        let mut rates = [None; 6];
        if let Some(prev) = rows.last() {
            for j in 0..6 {
                if let (Some(a), Some(b)) = (prev.errors[j], errors[j]) {
                    rates[j] = observed_rate(a, b, prev.h, r.h);
                }
            }
        }
        rows.push(ConvergenceRow { level: r.level, dt: r.dt, h: r.h, errors, rates });
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::error_norms;
    use crate::harness::config::InjectionPreset;
    use crate::mesh::InterfaceSpec;

    fn tiny(levels: Vec<u32>) -> RunConfig {
        RunConfig { levels, ..Default::default() }
    }

    #[test]
    fn rows_and_rates() {
        let runs: Vec<LevelRun> = run_sweep(&tiny(vec![2, 3])).into_iter().map(|(_, r)| r.unwrap()).collect();
        let rows = convergence_rows(&runs);
        assert_eq!(rows.len(), 2);
        assert!(rows[0].rates.iter().all(Option::is_none));
        let expected = (rows[0].errors[0].unwrap() / rows[1].errors[0].unwrap()).log2();
        assert!((rows[1].rates[0].unwrap() - expected).abs() < 1e-12);
        assert!(rows[1].errors[5].is_none() && rows[1].rates[5].is_none());
    }

    #[test]
    fn levels_are_independent() {
        let both: Vec<_> = run_sweep(&tiny(vec![3, 4]));
        let alone = run_level(&tiny(vec![4]), 4).unwrap();
        assert_eq!(both[1].1.as_ref().unwrap().errors, alone.errors);
    }

    #[test]
    fn identity_check_passes() {
        let mut c = tiny(vec![3]);
        c.outputs.check_identity = true;
        assert!(run_level(&c, 3).unwrap().max_identity_residual.unwrap() <= IDENTITY_TOL);
    }

    #[test]
    fn failures_keep_their_level() {
        let c = RunConfig { tol: 1e-300, ..tiny(vec![2, 3]) };
        let out = run_sweep(&c);
        assert_eq!(out.iter().map(|(k, _)| *k).collect::<Vec<_>>(), vec![2, 3]);
        assert!(out.iter().all(|(_, r)| matches!(r, Err(Error::StepFailed { .. }))));
    }

    #[test]
    fn monolithic_level() {
        let c = RunConfig { scheme: Scheme::Monolithic, ..tiny(vec![4]) };
        let r = run_level(&c, 4).unwrap();
        assert!(r.max_jump.unwrap() <= 1e-9);
        assert!(r.max_identity_residual.is_none());
    }

    #[test]
    fn stability_level() {
        let c = RunConfig { injection: Some(InjectionPreset::All), nu_s: 0.5, ..tiny(vec![3]) };
        let r = run_stability_level(&c, 3).unwrap();
        assert!(r.xi > 0.0 && r.z0 > 0.0);
        assert!(r.max_identity_residual <= IDENTITY_TOL);
        let none = RunConfig { injection: Some(InjectionPreset::None), ..c };
        let r = run_stability_level(&none, 3).unwrap();
        assert_eq!(r.xi, 0.0);
        assert!(r.z_final <= r.z0 && r.ratio <= 1.0);
    }

    #[test]
    fn interpolant_stub_rates() {
        // exact interpolants in place of the scheme: the L2 errors are pure
        // interpolation errors with rate degree + 1
        let sol = CosSinMode::default();
        for degree in [1usize, 2] {
            let err = |k: u32| {
                let n = 1usize << k;
                let d = Discretization::new(Mesh::build(n, InterfaceSpec::Horizontal { y0: 0.75 }).unwrap(), degree).unwrap();
                let u = d.fluid.interpolate(|p| sol.value(p, 0.25));
                (error_norms(&d.fluid, &u, |p| sol.jet(p, 0.25), false).unwrap().l2, d.mesh.h)
            };
            let ((e1, h1), (e2, h2)) = (err(4), err(5));
            let rate = observed_rate(e1, e2, h1, h2).unwrap();
            assert!((rate - (degree as f64 + 1.0)).abs() < 0.15, "degree {degree}: {rate}");
        }
    }
}
