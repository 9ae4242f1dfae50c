//! Configuration-driven numerical experiments: convergence
//! tables, reconstructions with and without noise, the regularization
//! comparison and the ill-posedness table.

mod config;
mod output;
mod targets;

use nalgebra::DVector;
use rayon::prelude::*;

pub use config::{
    ExperimentConfig, ExperimentKind, GammaPolicy, RawConfig, DEFAULT_SEED, EXAMPLE_51_PAIRS, HEAVY_NOISE,
    LIGHT_NOISE, MOROZOV_NOISE,
};
pub use output::{param_hash, OutputDir};
pub use targets::{TargetFunction, NONSMOOTH_JUMPS};

use crate::error::Result;
use crate::fem::{l2_error_continuous, make_mesh, Mesh1D, NonlocalMatrices};
use crate::inverse::{add_noise, run_cgm, CgmConfig, CgmTrace, ForwardOperator, GradientRoute, NoiseSpec, StopReason};
use crate::spectral::{compute_eigenbasis, illposedness_demo, inverse_series, IllposednessRow};
use crate::special_functions::gamma_eval;
use crate::time_stepper::{L1Stepper, TimeGrid};

/// Least-squares slope of `ln e` against `ln h`.
pub fn fit_rate(steps: &[f64], errors: &[f64]) -> f64 {
    let n = steps.len() as f64;
    let xs: Vec<f64> = steps.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// `ln(e_i / e_{i+1}) / ln(h_i / h_{i+1})` for consecutive pairs.
pub fn pairwise_rates(steps: &[f64], errors: &[f64]) -> Vec<f64> {
    steps
        .windows(2)
        .zip(errors.windows(2))
        .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}

// ---------------------------------------------------------------------------
// Convergence tables

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Temporal,
    Spatial,
}

impl Sweep {
    pub fn name(&self) -> &'static str {
        match self {
            Sweep::Temporal => "temporal",
            Sweep::Spatial => "spatial",
        }
    }
}

/// Step sizes and fixed resolutions of the convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceProtocol {
    /// Table step labels; `K = 1/step` in time, `N = 2/step` in space.
    pub steps: Vec<f64>,
    /// Mesh intervals for the temporal sweep.
    pub temporal_mesh: usize,
    /// Time steps of the fine-time reference solution for the temporal sweep.
    pub temporal_reference_steps: usize,
    /// Time steps for the spatial sweep.
    pub spatial_time_steps: usize,
    pub t_final: f64,
}

impl Default for ConvergenceProtocol {
    fn default() -> Self {
        Self {
            steps: vec![1.0 / 50.0, 1.0 / 100.0, 1.0 / 200.0, 1.0 / 400.0],
            temporal_mesh: 400,
            temporal_reference_steps: 6400,
            spatial_time_steps: 200,
            t_final: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub sweep: Sweep,
    pub alpha: f64,
    pub s: f64,
    pub steps: Vec<f64>,
    /// Temporal: distance to the fine-time reference. Spatial: nodal mass-norm
    /// distance to the interpolated exact solution.
    pub errors: Vec<f64>,
    /// Temporal: distance to the interpolated exact solution. Spatial:
    /// continuous `L²` distance between the P1 solution and the exact one.
    pub errors_alt: Vec<f64>,
    pub rate: f64,
    pub pairwise: Vec<f64>,
    pub rate_alt: f64,
    pub theoretical: f64,
}

/// Source and exact solution of the manufactured problem
/// `u(x, t) = (1 + t^α) w_s(x)` with `(-Δ)^s w_s = 1`.
pub struct ManufacturedProblem {
    pub alpha: f64,
    pub s: f64,
    gamma_1a: f64,
}

impl ManufacturedProblem {
    pub fn new(alpha: f64, s: f64) -> Result<Self> {
        Ok(Self {
            alpha,
            s,
            gamma_1a: gamma_eval(1.0 + alpha)?,
        })
    }

    pub fn exact(&self, x: f64, t: f64) -> Result<f64> {
        Ok((1.0 + t.powf(self.alpha)) * TargetFunction::Manufactured { s: self.s }.eval(x)?)
    }

    /// `F(x, t) = 1 + t^α + Γ(1+α) w_s(x)` given the nodal samples of `w_s`.
    fn source(&self, w: &DVector<f64>, t: f64) -> DVector<f64> {
        w.map(|v| 1.0 + t.powf(self.alpha) + self.gamma_1a * v)
    }

    /// `u_h(T)` on `mesh` with `k` time steps.
    pub fn solve(&self, mesh: &Mesh1D, mats: &NonlocalMatrices, k: usize, t_final: f64) -> Result<DVector<f64>> {
        let grid = TimeGrid::new(k, t_final, self.alpha)?;
        let stepper = L1Stepper::new(mats, grid)?;
        let w = TargetFunction::Manufactured { s: self.s }.sample(mesh)?;
        let source = |n: usize| self.source(&w, grid.time(n));
        Ok(stepper.forward(&w, Some(&source))?.final_value())
    }
}

/// `ð(s) = 1/2 + min(s, 1/2)` for right-hand sides in `H^{1/2-s}`.
pub fn theoretical_spatial_rate(s: f64) -> f64 {
    0.5 + s.min(0.5)
}

pub fn temporal_sweep(alpha: f64, s: f64, protocol: &ConvergenceProtocol) -> Result<ConvergenceRow> {
    let problem = ManufacturedProblem::new(alpha, s)?;
    let mesh = make_mesh(protocol.temporal_mesh)?;
    let mats = NonlocalMatrices::assemble(&mesh, s)?;
    let t = protocol.t_final;
    let ks: Vec<usize> = protocol.steps.iter().map(|h| (t / h).round() as usize).collect();
    let mut runs: Vec<usize> = ks.clone();
    runs.push(protocol.temporal_reference_steps);
    let solutions = runs
        .par_iter()
        .map(|&k| problem.solve(&mesh, &mats, k, t))
        .collect::<Result<Vec<_>>>()?;
    let reference = solutions.last().expect("reference run");
    let exact = mesh.sample(|x| problem.exact(x, t).unwrap_or(f64::NAN));
    let errors: Vec<f64> = solutions[..ks.len()].iter().map(|u| mats.mass.norm(&(u - reference))).collect();
    let errors_alt: Vec<f64> = solutions[..ks.len()].iter().map(|u| mats.mass.norm(&(u - &exact))).collect();
    Ok(ConvergenceRow {
        sweep: Sweep::Temporal,
        alpha,
        s,
        steps: protocol.steps.clone(),
        rate: fit_rate(&protocol.steps, &errors),
        pairwise: pairwise_rates(&protocol.steps, &errors),
        rate_alt: fit_rate(&protocol.steps, &errors_alt),
        errors,
        errors_alt,
        theoretical: 2.0 - alpha,
    })
}

pub fn spatial_sweep(alpha: f64, s: f64, protocol: &ConvergenceProtocol) -> Result<ConvergenceRow> {
    let problem = ManufacturedProblem::new(alpha, s)?;
    let t = protocol.t_final;
    let pairs = protocol
        .steps
        .par_iter()
        .map(|h| {
            let mesh = make_mesh((2.0 / h).round() as usize)?;
            let mats = NonlocalMatrices::assemble(&mesh, s)?;
            let u = problem.solve(&mesh, &mats, protocol.spatial_time_steps, t)?;
            let exact = mesh.sample(|x| problem.exact(x, t).unwrap_or(f64::NAN));
            let nodal = mats.mass.norm(&(&u - &exact));
            let cont = l2_error_continuous(&mesh, &u, |x| problem.exact(x, t).unwrap_or(f64::NAN));
            Ok((nodal, cont))
        })
        .collect::<Result<Vec<_>>>()?;
    let (errors, errors_alt): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(ConvergenceRow {
        sweep: Sweep::Spatial,
        alpha,
        s,
        steps: protocol.steps.clone(),
        rate: fit_rate(&protocol.steps, &errors),
        pairwise: pairwise_rates(&protocol.steps, &errors),
        rate_alt: fit_rate(&protocol.steps, &errors_alt),
        errors,
        errors_alt,
        theoretical: theoretical_spatial_rate(s),
    })
}

/// The four table rows: temporal for `s = 1/2`, `α ∈ {0.3, 0.8}`; spatial for
/// `α = 1/2`, `s ∈ {0.2, 0.9}`. A failing row is reported in place.
pub fn run_convergence_table(protocol: &ConvergenceProtocol) -> Vec<(Sweep, f64, f64, Result<ConvergenceRow>)> {
    let rows = [
        (Sweep::Temporal, 0.3, 0.5),
        (Sweep::Temporal, 0.8, 0.5),
        (Sweep::Spatial, 0.5, 0.2),
        (Sweep::Spatial, 0.5, 0.9),
    ];
    rows.into_iter()
        .map(|(sweep, alpha, s)| {
            let row = match sweep {
                Sweep::Temporal => temporal_sweep(alpha, s, protocol),
                Sweep::Spatial => spatial_sweep(alpha, s, protocol),
            };
            (sweep, alpha, s, row)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Reconstructions

/// Settings shared by every reconstruction cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionSetup {
    pub n: usize,
    pub k: usize,
    pub t_final: f64,
    pub seed: u64,
    pub sigma: f64,
    pub eta: f64,
    pub max_iter: usize,
    pub route: GradientRoute,
    /// Supplied noise level; `None` measures it against the clean data.
    pub theta: Option<f64>,
}

impl ReconstructionSetup {
    pub fn from_config(c: &ExperimentConfig) -> Self {
        Self {
            n: c.n,
            k: c.k,
            t_final: c.t,
            seed: c.seed,
            sigma: c.sigma,
            eta: c.eta,
            max_iter: c.max_iter,
            route: GradientRoute::SelfAdjoint,
            theta: c.theta,
        }
    }
}

/// Mean nodal error in a window of half-width 0.05 around a jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowError {
    pub center: f64,
    pub mean_abs_error: f64,
}

#[derive(Debug, Clone)]
pub struct ReconstructionCell {
    pub alpha: f64,
    pub s: f64,
    pub mu: f64,
    pub theta: f64,
    pub gamma: f64,
    pub trace: CgmTrace,
    pub reconstruction: DVector<f64>,
    pub exact: DVector<f64>,
    /// Mass-norm error of the returned iterate.
    pub final_error: f64,
    pub global_mean_abs_error: f64,
    pub windows: Vec<WindowError>,
}

impl ReconstructionCell {
    pub fn stopping_index(&self) -> usize {
        self.trace.stopping_index
    }

    pub fn stop_reason(&self) -> StopReason {
        self.trace.stop_reason
    }
}

/// Whether the discrepancy rule may stop the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stopping {
    Discrepancy,
    FixedIterations,
}

/// Synthesize `h = A g_ex`, perturb it, and run CGM.
#[allow(clippy::too_many_arguments)]
pub fn reconstruct(
    mesh: &Mesh1D,
    mats: &NonlocalMatrices,
    alpha: f64,
    target: &TargetFunction,
    mu: f64,
    gamma_policy: GammaPolicy,
    stopping: Stopping,
    setup: &ReconstructionSetup,
) -> Result<ReconstructionCell> {
    let grid = TimeGrid::new(setup.k, setup.t_final, alpha)?;
    let op = ForwardOperator::new(L1Stepper::new(mats, grid)?);
    let exact = target.sample(mesh)?;
    let h = op.apply(&exact)?;
    let (h_noisy, measured) = add_noise(&h, NoiseSpec { mu, seed: setup.seed }, &mats.mass)?;
    let theta = setup.theta.unwrap_or(measured);
    let gamma = gamma_policy.resolve(theta);
    let config = CgmConfig {
        gamma,
        sigma: setup.sigma,
        max_iter: setup.max_iter,
        g0: None,
        eta: setup.eta,
        route: setup.route,
        theta_override: (stopping == Stopping::FixedIterations).then_some(0.0),
    };
    let (g, trace) = run_cgm(&h_noisy, theta, &config, &op, Some(&exact))?;
    let err = (&g - &exact).abs();
    let nodes = mesh.interior_nodes();
    let windows = NONSMOOTH_JUMPS
        .iter()
        .map(|&c| {
            let (sum, count) = nodes
                .iter()
                .zip(err.iter())
                .filter(|(x, _)| (**x - c).abs() <= 0.05 + 1e-12)
                .fold((0.0, 0usize), |(s, n), (_, e)| (s + e, n + 1));
            WindowError {
                center: c,
                mean_abs_error: if count == 0 { f64::NAN } else { sum / count as f64 },
            }
        })
        .collect();
    Ok(ReconstructionCell {
        alpha,
        s: mats.s,
        mu,
        theta,
        gamma,
        final_error: mats.mass.norm(&(&g - &exact)),
        global_mean_abs_error: err.mean(),
        reconstruction: g,
        exact,
        trace,
        windows,
    })
}

/// One `(α, s)` pair over a list of noise levels; each level is isolated.
pub fn reconstruction_sweep(
    alpha: f64,
    s: f64,
    target: &TargetFunction,
    mu_list: &[f64],
    gamma_policy: GammaPolicy,
    stopping: Stopping,
    setup: &ReconstructionSetup,
) -> Result<Vec<Result<ReconstructionCell>>> {
    let mesh = make_mesh(setup.n)?;
    let mats = NonlocalMatrices::assemble(&mesh, s)?;
    Ok(mu_list
        .par_iter()
        .map(|&mu| reconstruct(&mesh, &mats, alpha, target, mu, gamma_policy, stopping, setup))
        .collect())
}

/// Noise-free reconstruction of `cos(πx) sin(πx)` for each order pair.
pub fn run_example_5_1(
    pairs: &[(f64, f64)],
    setup: &ReconstructionSetup,
    target: &TargetFunction,
) -> Vec<((f64, f64), Result<ReconstructionCell>)> {
    pairs
        .par_iter()
        .map(|&(alpha, s)| {
            let cell = reconstruction_sweep(alpha, s, target, &[0.0], GammaPolicy::Zero, Stopping::FixedIterations, setup)
                .and_then(|mut v| v.pop().expect("one noise level"));
            ((alpha, s), cell)
        })
        .collect()
}

/// Paired runs with `γ = 0` and `γ = 10⁻² θ^{4/5}` at a fixed iteration count.
#[derive(Debug, Clone)]
pub struct RegularizationPair {
    pub mu: f64,
    pub unregularized: ReconstructionCell,
    pub regularized: ReconstructionCell,
}

pub fn run_regularization_comparison(
    alpha: f64,
    s: f64,
    target: &TargetFunction,
    mu_list: &[f64],
    setup: &ReconstructionSetup,
) -> Result<Vec<Result<RegularizationPair>>> {
    let mesh = make_mesh(setup.n)?;
    let mats = NonlocalMatrices::assemble(&mesh, s)?;
    Ok(mu_list
        .par_iter()
        .map(|&mu| {
            let run = |policy| reconstruct(&mesh, &mats, alpha, target, mu, policy, Stopping::FixedIterations, setup);
            Ok(RegularizationPair {
                mu,
                unregularized: run(GammaPolicy::Zero)?,
                regularized: run(GammaPolicy::PaperFormula)?,
            })
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Ill-posedness

#[derive(Debug, Clone)]
pub struct IllposednessReport {
    pub rows: Vec<IllposednessRow>,
    pub max_amplification: f64,
    pub strictly_increasing: bool,
    /// `(retained modes, ‖g*‖ / ‖g_ex‖)` for the naive inverse of noisy data.
    pub naive_inflation: Vec<(usize, f64)>,
}

/// Norm inflation of the unregularized inverse series applied to noisy data.
pub fn naive_inverse_inflation(
    mesh: &Mesh1D,
    mats: &NonlocalMatrices,
    alpha: f64,
    t_final: f64,
    target: &TargetFunction,
    mu: f64,
    seed: u64,
    modes: &[usize],
) -> Result<Vec<(usize, f64)>> {
    let basis = compute_eigenbasis(mats, mats.dim())?;
    let g = target.sample(mesh)?;
    let h = crate::spectral::forward_series(&g, &basis, alpha, t_final)?;
    let (h_noisy, _) = add_noise(&h, NoiseSpec { mu, seed }, &mats.mass)?;
    let g_norm = mats.mass.norm(&g);
    modes
        .iter()
        .map(|&m| {
            let g_star = inverse_series(&h_noisy, &basis, alpha, t_final, m)?;
            Ok((m, mats.mass.norm(&g_star) / g_norm))
        })
        .collect()
}

pub fn run_illposedness(config: &ExperimentConfig) -> Result<IllposednessReport> {
    let (alpha, s) = config.orders();
    let mesh = make_mesh(config.n)?;
    let mats = NonlocalMatrices::assemble(&mesh, s)?;
    let basis = compute_eigenbasis(&mats, mats.dim())?;
    let rows = illposedness_demo(&basis, alpha, config.t, basis.count())?;
    let max_amplification = rows.iter().map(|r| r.amplification).fold(0.0, f64::max);
    let strictly_increasing = rows.windows(2).all(|w| w[1].amplification > w[0].amplification);
    let modes: Vec<usize> = (1..=basis.count()).filter(|m| m % 10 == 0 || *m == basis.count()).collect();
    let mu = config.mu_list.first().copied().unwrap_or(0.01);
    let naive_inflation = naive_inverse_inflation(&mesh, &mats, alpha, config.t, &TargetFunction::Trig, mu, config.seed, &modes)?;
    Ok(IllposednessReport {
        rows,
        max_amplification,
        strictly_increasing,
        naive_inflation,
    })
}

// ---------------------------------------------------------------------------
// Driver

/// What a run produced, for the CLI summary.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output: std::path::PathBuf,
    pub lines: Vec<String>,
    pub failures: usize,
}

fn target_for(config: &ExperimentConfig, default: TargetFunction) -> Result<TargetFunction> {
    match &config.target_csv {
        Some(path) => TargetFunction::from_csv(path),
        None => Ok(default),
    }
}

/// Run the configured experiment and write its CSV files.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary> {
    let out = OutputDir::create(config)?;
    let mut lines = Vec::new();
    let mut failures = 0;
    match config.experiment {
        ExperimentKind::ConvergenceTable => {
            let protocol = ConvergenceProtocol {
                t_final: config.t,
                ..ConvergenceProtocol::default()
            };
            let rows = run_convergence_table(&protocol);
            out.write_convergence(&rows)?;
            for (sweep, alpha, s, row) in &rows {
                match row {
                    Ok(r) => lines.push(format!(
                        "{} alpha={alpha} s={s}: rate {:.3} (theory {:.2}), errors {:?}",
                        sweep.name(),
                        r.rate,
                        r.theoretical,
                        r.errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>()
                    )),
                    Err(e) => {
                        failures += 1;
                        lines.push(format!("{} alpha={alpha} s={s}: error: {e}", sweep.name()));
                    }
                }
            }
        }
        ExperimentKind::Example51 => {
            let pairs = match (config.alpha, config.s) {
                (Some(a), Some(s)) => vec![(a, s)],
                _ => EXAMPLE_51_PAIRS.to_vec(),
            };
            let target = target_for(config, TargetFunction::Trig)?;
            let cells = run_example_5_1(&pairs, &ReconstructionSetup::from_config(config), &target);
            for ((alpha, s), cell) in &cells {
                match cell {
                    Ok(c) => {
                        out.write_cell(c, &format!("a{alpha}_s{s}"))?;
                        lines.push(format!("alpha={alpha} s={s}: E = {:.5} after {} iterations", c.final_error, c.stopping_index()));
                    }
                    Err(e) => {
                        failures += 1;
                        lines.push(format!("alpha={alpha} s={s}: error: {e}"));
                    }
                }
            }
            out.write_cell_summary(cells.iter().map(|(_, c)| c))?;
        }
        ExperimentKind::Example52 => {
            let (alpha, s) = config.orders();
            let target = target_for(config, TargetFunction::Trig)?;
            let pairs = run_regularization_comparison(alpha, s, &target, &config.mu_list, &ReconstructionSetup::from_config(config))?;
            out.write_regularization(&pairs)?;
            for (mu, pair) in config.mu_list.iter().zip(&pairs) {
                match pair {
                    Ok(p) => {
                        out.write_cell(&p.unregularized, &format!("mu{mu}_gamma_zero"))?;
                        out.write_cell(&p.regularized, &format!("mu{mu}_gamma_formula"))?;
                        lines.push(format!(
                            "mu={mu}: E(gamma=0) = {:.5}, E(gamma={:.3e}) = {:.5}",
                            p.unregularized.final_error, p.regularized.gamma, p.regularized.final_error
                        ));
                    }
                    Err(e) => {
                        failures += 1;
                        lines.push(format!("mu={mu}: error: {e}"));
                    }
                }
            }
        }
        ExperimentKind::Example53 | ExperimentKind::Example54 => {
            let (alpha, s) = config.orders();
            let default = if config.experiment == ExperimentKind::Example53 {
                TargetFunction::Smooth
            } else {
                TargetFunction::Nonsmooth
            };
            let target = target_for(config, default)?;
            let cells = reconstruction_sweep(
                alpha,
                s,
                &target,
                &config.mu_list,
                config.gamma_policy,
                Stopping::Discrepancy,
                &ReconstructionSetup::from_config(config),
            )?;
            for (mu, cell) in config.mu_list.iter().zip(&cells) {
                match cell {
                    Ok(c) => {
                        out.write_cell(c, &format!("mu{mu}"))?;
                        lines.push(format!(
                            "mu={mu}: I_s = {} ({}), E = {:.5}, theta = {:.3e}",
                            c.stopping_index(),
                            c.stop_reason().as_str(),
                            c.final_error,
                            c.theta
                        ));
                    }
                    Err(e) => {
                        failures += 1;
                        lines.push(format!("mu={mu}: error: {e}"));
                    }
                }
            }
            out.write_cell_summary(cells.iter())?;
            if config.experiment == ExperimentKind::Example54 {
                out.write_windows(config.mu_list.iter().copied().zip(cells.iter()))?;
            }
        }
        ExperimentKind::Illposedness => {
            let report = run_illposedness(config)?;
            out.write_illposedness(&report)?;
            lines.push(format!(
                "max amplification {:.3e} over {} modes ({}), strictly increasing: {}",
                report.max_amplification,
                report.rows.len(),
                if report.max_amplification > 1e3 { "exceeds 1e3" } else { "below 1e3" },
                report.strictly_increasing
            ));
            if let Some((m, r)) = report.naive_inflation.last() {
                lines.push(format!("naive inverse with {m} modes inflates the norm by {r:.3}x"));
            }
        }
    }
    Ok(RunSummary {
        output: out.path().to_path_buf(),
        lines,
        failures,
    })
}

/// Optional debugging dumps: matrices and a forward trajectory of the
/// experiment's target at the configured orders.
pub fn dump_debug_artifacts(config: &ExperimentConfig, matrices: bool, trajectory: bool) -> Result<Vec<std::path::PathBuf>> {
    let out = OutputDir::create(config)?;
    let (alpha, s) = config.orders();
    let mesh = make_mesh(config.n)?;
    let mats = NonlocalMatrices::assemble(&mesh, s)?;
    let mut written = Vec::new();
    if matrices {
        let path = out.path().join("matrices.csv");
        mats.dump_csv(&path)?;
        written.push(path);
    }
    if trajectory {
        let target = match config.experiment {
            ExperimentKind::Example53 => TargetFunction::Smooth,
            ExperimentKind::Example54 => TargetFunction::Nonsmooth,
            ExperimentKind::ConvergenceTable => TargetFunction::Manufactured { s },
            _ => TargetFunction::Trig,
        };
        let target = target_for(config, target)?;
        let grid = TimeGrid::new(config.k, config.t, alpha)?;
        let u = L1Stepper::new(&mats, grid)?.forward(&target.sample(&mesh)?, None)?;
        let path = out.path().join("trajectory.csv");
        u.dump_csv(&mesh, &path)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_fit_recovers_power_law() {
        let steps = [0.02, 0.01, 0.005, 0.0025];
        for r in [0.5, 1.2, 1.7] {
            let errors: Vec<f64> = steps.iter().map(|h: &f64| 3.7 * h.powf(r)).collect();
            assert!((fit_rate(&steps, &errors) - r).abs() < 1e-6);
            assert!(pairwise_rates(&steps, &errors).iter().all(|p| (p - r).abs() < 1e-6));
        }
    }

    #[test]
    fn small_convergence_sweeps_refine_monotonically() {
        let protocol = ConvergenceProtocol {
            steps: vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0],
            temporal_mesh: 32,
            temporal_reference_steps: 256,
            spatial_time_steps: 40,
            t_final: 1.0,
        };
        let t = temporal_sweep(0.5, 0.5, &protocol).unwrap();
        assert!(t.errors.windows(2).all(|w| w[1] < w[0]), "{:?}", t.errors);
        let s = spatial_sweep(0.5, 0.5, &protocol).unwrap();
        assert!(s.errors.windows(2).all(|w| w[1] < w[0]), "{:?}", s.errors);
        assert!(s.rate > 0.5);
    }

    #[test]
    fn noise_free_trig_reconstruction_improves() {
        let setup = ReconstructionSetup {
            n: 32,
            k: 20,
            t_final: 1.0,
            seed: 1,
            sigma: 1.01,
            eta: 1e-3,
            max_iter: 20,
            route: GradientRoute::SelfAdjoint,
            theta: None,
        };
        let cells = run_example_5_1(&[(0.5, 0.5)], &setup, &TargetFunction::Trig);
        let c = cells[0].1.as_ref().unwrap();
        assert_eq!(c.stop_reason(), StopReason::MaxIter);
        let first = c.trace.iterations[0].error.unwrap();
        assert!(c.final_error < 0.2 * first);
    }
}
