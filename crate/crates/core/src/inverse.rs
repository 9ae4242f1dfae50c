//! Tikhonov-regularized recovery of the initial value from noisy final-time
//! data by the conjugate gradient method with discrepancy stopping.

use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::{Mesh1D, SymTridiagonal};
use crate::time_stepper::{rl_integral_at_zero, L1Stepper, ProductRule};

/// Relative multiplicative noise `h + μ h (2r - 1)`, `r ~ U[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub mu: f64,
    pub seed: u64,
}

/// Noisy data and its mass-norm distance `θ` to the clean data.
pub fn add_noise(h: &DVector<f64>, spec: NoiseSpec, mass: &SymTridiagonal) -> Result<(DVector<f64>, f64)> {
    if !(spec.mu >= 0.0 && spec.mu.is_finite()) {
        return Err(Error::invalid("mu", spec.mu, "noise level must be non-negative"));
    }
    if spec.mu == 0.0 {
        return Ok((h.clone(), 0.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noisy = h.map(|v| {
        let r: f64 = rng.gen();
        v + spec.mu * v * (2.0 * r - 1.0)
    });
    let theta = mass.norm(&(&noisy - h));
    Ok((noisy, theta))
}

/// `γ = 10⁻² θ^{4/5}`.
pub fn choose_gamma(theta: f64) -> f64 {
    if theta <= 0.0 {
        0.0
    } else {
        1e-2 * theta.powf(0.8)
    }
}

/// How the gradient of the data misfit is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientRoute {
    /// Backward adjoint march followed by the right Riemann–Liouville integral.
    Adjoint,
    /// `A` is self-adjoint in the mass inner product: one more forward solve.
    SelfAdjoint,
    /// Both, failing if they differ by more than [`ROUTE_TOLERANCE`].
    BothWithCheck,
}

/// Relative mass-norm disagreement tolerated between the two routes.
pub const ROUTE_TOLERANCE: f64 = 0.02;

/// Final-value map `A g = u_g(T)` of the source-free problem.
pub struct ForwardOperator<'a> {
    stepper: L1Stepper<'a>,
}

impl<'a> ForwardOperator<'a> {
    pub fn new(stepper: L1Stepper<'a>) -> Self {
        Self { stepper }
    }

    pub fn stepper(&self) -> &L1Stepper<'a> {
        &self.stepper
    }

    pub fn mass(&self) -> &SymTridiagonal {
        &self.stepper.matrices().mass
    }

    pub fn apply(&self, g: &DVector<f64>) -> Result<DVector<f64>> {
        self.stepper.final_value(g)
    }

    /// `A* r` through the adjoint problem with Dirac width `eta`.
    pub fn adjoint_apply(&self, r: &DVector<f64>, eta: f64) -> Result<DVector<f64>> {
        let z = self.stepper.adjoint(r, eta)?;
        rl_integral_at_zero(&z, ProductRule::LeftConstant)
    }
}

/// `½‖A g - h‖² + (γ/2)‖g‖²` in the mass norm.
pub fn tikhonov_value(g: &DVector<f64>, h_noisy: &DVector<f64>, gamma: f64, op: &ForwardOperator) -> Result<f64> {
    let r = op.apply(g)? - h_noisy;
    let m = op.mass();
    Ok(0.5 * m.inner(&r, &r) + 0.5 * gamma * m.inner(g, g))
}

/// Gradient of the misfit part given the residual `A g - h`.
fn misfit_gradient(op: &ForwardOperator, residual: &DVector<f64>, route: GradientRoute, eta: f64) -> Result<DVector<f64>> {
    match route {
        GradientRoute::Adjoint => op.adjoint_apply(residual, eta),
        GradientRoute::SelfAdjoint => op.apply(residual),
        GradientRoute::BothWithCheck => {
            let a = op.adjoint_apply(residual, eta)?;
            let b = op.apply(residual)?;
            let scale = op.mass().norm(&b);
            if scale > 0.0 {
                let relative = op.mass().norm(&(&a - &b)) / scale;
                if relative > ROUTE_TOLERANCE {
                    return Err(Error::GradientMismatch { relative });
                }
            }
            Ok(b)
        }
    }
}

/// `∇T(g) = J^{1-α}_{T-} z_g(·, 0) + γ g`, mass-weighted (Riesz) gradient.
pub fn gradient(
    g: &DVector<f64>,
    h_noisy: &DVector<f64>,
    gamma: f64,
    op: &ForwardOperator,
    route: GradientRoute,
    eta: f64,
) -> Result<DVector<f64>> {
    let r = op.apply(g)? - h_noisy;
    Ok(misfit_gradient(op, &r, route, eta)? + g * gamma)
}

/// Fletcher–Reeves direction. Returns `None` when the current gradient
/// vanishes, i.e. the iterate is stationary.
pub fn cgm_direction(
    grad: &DVector<f64>,
    previous: Option<(&DVector<f64>, &DVector<f64>)>,
    mass: &SymTridiagonal,
) -> Option<(DVector<f64>, f64)> {
    let gg = mass.inner(grad, grad);
    if gg == 0.0 {
        return None;
    }
    match previous {
        None => Some((-grad, 0.0)),
        Some((grad_prev, d_prev)) => {
            let prev = mass.inner(grad_prev, grad_prev);
            if prev == 0.0 {
                return None;
            }
            let beta = gg / prev;
            Some((d_prev * beta - grad, beta))
        }
    }
}

/// Exact line search along `d`, given `r = A g - h` and `A d`.
pub fn cgm_stepsize(
    g: &DVector<f64>,
    d: &DVector<f64>,
    residual: &DVector<f64>,
    a_d: &DVector<f64>,
    gamma: f64,
    mass: &SymTridiagonal,
    iteration: usize,
) -> Result<f64> {
    let num = mass.inner(residual, a_d) + gamma * mass.inner(g, d);
    let den = mass.inner(a_d, a_d) + gamma * mass.inner(d, d);
    if den == 0.0 || !den.is_finite() {
        return Err(Error::DegenerateDirection(iteration));
    }
    Ok(-num / den)
}

#[derive(Debug, Clone)]
pub struct CgmConfig {
    pub gamma: f64,
    pub sigma: f64,
    pub max_iter: usize,
    /// Initial guess; `None` means the constant 1.
    pub g0: Option<DVector<f64>>,
    pub eta: f64,
    pub route: GradientRoute,
    /// Replaces the computed noise level in the stopping rule.
    pub theta_override: Option<f64>,
}

impl Default for CgmConfig {
    fn default() -> Self {
        Self {
            gamma: 0.0,
            sigma: 1.01,
            max_iter: 100,
            g0: None,
            eta: 1e-3,
            route: GradientRoute::SelfAdjoint,
            theta_override: None,
        }
    }
}

impl CgmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid("gamma", self.gamma, "must be non-negative"));
        }
        if !(self.sigma > 1.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("sigma", self.sigma, "must exceed 1"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter", self.max_iter, "must be at least 1"));
        }
        if !(self.eta > 0.0) {
            return Err(Error::invalid("eta", self.eta, "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Discrepancy,
    MaxIter,
    /// The gradient vanished exactly.
    Stationary,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Discrepancy => "discrepancy",
            StopReason::MaxIter => "max_iter",
            StopReason::Stationary => "stationary",
        }
    }
}

/// State at iterate `k`; `zeta` and `alpha_cc` are the coefficients used to
/// leave it (zero at the final iterate).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CgmRecord {
    pub k: usize,
    pub zeta: f64,
    pub alpha_cc: f64,
    pub residual: f64,
    pub error: Option<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct CgmTrace {
    pub iterations: Vec<CgmRecord>,
    pub stopping_index: usize,
    pub stop_reason: StopReason,
    pub theta: f64,
    pub gamma: f64,
}

impl CgmTrace {
    pub fn final_error(&self) -> Option<f64> {
        self.iterations.last().and_then(|r| r.error)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["k", "zeta", "alpha_cc", "residual", "error", "objective"])?;
        for r in &self.iterations {
            w.write_record([
                r.k.to_string(),
                format!("{:.17e}", r.zeta),
                format!("{:.17e}", r.alpha_cc),
                format!("{:.17e}", r.residual),
                r.error.map_or(String::new(), |e| format!("{e:.17e}")),
                format!("{:.17e}", r.objective),
            ])?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Conjugate gradient iteration on the Tikhonov functional.
///
/// Stops at the first `k` with `R_k = ‖A g_k - h‖ ≤ σθ` when `θ > 0`,
/// otherwise after `max_iter` updates.
pub fn run_cgm(
    h_noisy: &DVector<f64>,
    theta: f64,
    config: &CgmConfig,
    op: &ForwardOperator,
    ground_truth: Option<&DVector<f64>>,
) -> Result<(DVector<f64>, CgmTrace)> {
    config.validate()?;
    let mass = op.mass();
    let theta = config.theta_override.unwrap_or(theta);
    let gamma = config.gamma;
    let mut g = config
        .g0
        .clone()
        .unwrap_or_else(|| DVector::from_element(h_noisy.len(), 1.0));
    let mut residual = op.apply(&g)? - h_noisy;
    let mut prev: Option<(DVector<f64>, DVector<f64>)> = None;
    let mut records = Vec::new();
    let record = |k: usize, g: &DVector<f64>, r: &DVector<f64>| -> Result<CgmRecord> {
        let rn = mass.norm(r);
        if !rn.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { iteration: k });
        }
        Ok(CgmRecord {
            k,
            zeta: 0.0,
            alpha_cc: 0.0,
            residual: rn,
            error: ground_truth.map(|t| mass.norm(&(t - g))),
            objective: 0.5 * rn * rn + 0.5 * gamma * mass.inner(g, g),
        })
    };
    let mut k = 0;
    let stop_reason = loop {
        let mut rec = record(k, &g, &residual)?;
        if theta > 0.0 && rec.residual <= config.sigma * theta {
            records.push(rec);
            break StopReason::Discrepancy;
        }
        if k == config.max_iter {
            records.push(rec);
            break StopReason::MaxIter;
        }
        let grad = misfit_gradient(op, &residual, config.route, config.eta)? + &g * gamma;
        let Some((d, alpha_cc)) = cgm_direction(&grad, prev.as_ref().map(|(a, b)| (a, b)), mass) else {
            records.push(rec);
            break StopReason::Stationary;
        };
        let a_d = op.apply(&d)?;
        let zeta = cgm_stepsize(&g, &d, &residual, &a_d, gamma, mass, k)?;
        rec.zeta = zeta;
        rec.alpha_cc = alpha_cc;
        records.push(rec);
        g += &d * zeta;
        residual += &a_d * zeta;
        prev = Some((grad, d));
        k += 1;
    };
    Ok((
        g,
        CgmTrace {
            iterations: records,
            stopping_index: k,
            stop_reason,
            theta,
            gamma,
        },
    ))
}

/// Write the reconstruction as `x, g_value`, endpoints included.
pub fn write_reconstruction_csv(mesh: &Mesh1D, g: &DVector<f64>, exact: Option<&DVector<f64>>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "g_value", "g_exact"])?;
    for (node, &x) in mesh.nodes().iter().enumerate() {
        let (v, e) = match mesh.interior_index(node) {
            Some(i) => (g[i], exact.map(|e| e[i])),
            None => (0.0, exact.map(|_| 0.0)),
        };
        w.write_record([
            format!("{x:.17e}"),
            format!("{v:.17e}"),
            e.map_or(String::new(), |e| format!("{e:.17e}")),
        ])?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{make_mesh, NonlocalMatrices};
    use crate::time_stepper::TimeGrid;

    struct Fixture {
        mesh: Mesh1D,
        mats: NonlocalMatrices,
        grid: TimeGrid,
    }

    fn fixture(n: usize, k: usize, s: f64, alpha: f64) -> Fixture {
        let mesh = make_mesh(n).unwrap();
        let mats = NonlocalMatrices::assemble(&mesh, s).unwrap();
        let grid = TimeGrid::new(k, 1.0, alpha).unwrap();
        Fixture { mesh, mats, grid }
    }

    impl Fixture {
        fn op(&self) -> ForwardOperator<'_> {
            ForwardOperator::new(L1Stepper::new(&self.mats, self.grid).unwrap())
        }
    }

    fn pseudo_random(n: usize, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5)
    }

    #[test]
    fn noise_model() {
        let f = fixture(16, 10, 0.5, 0.5);
        let h = f.mesh.sample(|x| 1.0 - x * x);
        let (same, theta) = add_noise(&h, NoiseSpec { mu: 0.0, seed: 3 }, &f.mats.mass).unwrap();
        assert_eq!(same, h);
        assert_eq!(theta, 0.0);
        let spec = NoiseSpec { mu: 0.01, seed: 42 };
        let (a, ta) = add_noise(&h, spec, &f.mats.mass).unwrap();
        let (b, tb) = add_noise(&h, spec, &f.mats.mass).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert!(ta > 0.0 && ta <= 0.01 * f.mats.mass.norm(&h));
        assert!(add_noise(&h, NoiseSpec { mu: -0.1, seed: 1 }, &f.mats.mass).is_err());
    }

    #[test]
    fn gamma_formula() {
        assert_eq!(choose_gamma(0.0), 0.0);
        assert!((choose_gamma(1.0) - 0.01).abs() < 1e-16);
        assert!((choose_gamma(1e-5) - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn objective_trivial_values() {
        let f = fixture(16, 20, 0.5, 0.5);
        let op = f.op();
        let h = f.mesh.sample(|x| (2.0 * x).cos());
        let v = tikhonov_value(&DVector::zeros(15), &h, 0.0, &op).unwrap();
        assert!((v - 0.5 * f.mats.mass.inner(&h, &h)).abs() < 1e-15);
        let g = f.mesh.sample(|x| x.sin());
        let exact = op.apply(&g).unwrap();
        assert!(tikhonov_value(&g, &exact, 0.0, &op).unwrap() < 1e-28);
        let grad = gradient(&g, &exact, 0.0, &op, GradientRoute::Adjoint, 1e-3).unwrap();
        assert!(grad.amax() < 1e-14);
    }

    #[test]
    fn gradient_routes_pass_central_difference_check() {
        let f = fixture(20, 40, 0.3, 0.7);
        let op = f.op();
        let h = f.mesh.sample(|x| (3.0 * x).sin());
        let g = pseudo_random(19, 1);
        let gamma = 1e-3;
        for route in [GradientRoute::Adjoint, GradientRoute::SelfAdjoint] {
            let grad = gradient(&g, &h, gamma, &op, route, 1e-3).unwrap();
            for seed in 10..15 {
                let p = pseudo_random(19, seed);
                let eps = 1e-5;
                let fd = (tikhonov_value(&(&g + &p * eps), &h, gamma, &op).unwrap()
                    - tikhonov_value(&(&g - &p * eps), &h, gamma, &op).unwrap())
                    / (2.0 * eps);
                let an = f.mats.mass.inner(&grad, &p);
                assert!((fd - an).abs() <= 1e-4 * an.abs(), "{route:?}: {fd} vs {an}");
            }
        }
        let both = gradient(&g, &h, gamma, &op, GradientRoute::BothWithCheck, 1e-3).unwrap();
        let adj = gradient(&g, &h, gamma, &op, GradientRoute::Adjoint, 1e-3).unwrap();
        assert!(f.mats.mass.norm(&(&both - &adj)) <= 1e-10 * f.mats.mass.norm(&adj));
    }

    #[test]
    fn direction_rules() {
        let m = SymTridiagonal {
            diag: vec![1.0; 3],
            off: vec![0.0; 2],
        };
        let g = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let (d0, a0) = cgm_direction(&g, None, &m).unwrap();
        assert_eq!(a0, 0.0);
        assert_eq!(d0, -&g);
        let (_, a1) = cgm_direction(&g, Some((&g, &d0)), &m).unwrap();
        assert_eq!(a1, 1.0);
        assert!(cgm_direction(&DVector::zeros(3), Some((&g, &d0)), &m).is_none());
    }

    #[test]
    fn stepsize_is_exact_line_search() {
        let f = fixture(16, 30, 0.6, 0.4);
        let op = f.op();
        let h = f.mesh.sample(|x| 1.0 - x.abs());
        let g = DVector::from_element(15, 1.0);
        let gamma = 1e-2;
        let grad = gradient(&g, &h, gamma, &op, GradientRoute::SelfAdjoint, 1e-3).unwrap();
        let d = -grad;
        let r = op.apply(&g).unwrap() - &h;
        let ad = op.apply(&d).unwrap();
        let zeta = cgm_stepsize(&g, &d, &r, &ad, gamma, &f.mats.mass, 0).unwrap();
        let phi = |z: f64| tikhonov_value(&(&g + &d * z), &h, gamma, &op).unwrap();
        let eps = 1e-4 * zeta.abs();
        let slope = (phi(zeta + eps) - phi(zeta - eps)) / (2.0 * eps);
        let scale = (phi(0.0) - phi(zeta)) / zeta.abs();
        assert!(slope.abs() < 1e-6 * scale, "slope {slope}");
        // zero residual, no regularization
        let z0 = cgm_stepsize(&g, &d, &DVector::zeros(15), &ad, 0.0, &f.mats.mass, 0).unwrap();
        assert_eq!(z0, 0.0);
        assert!(matches!(
            cgm_stepsize(&g, &DVector::zeros(15), &r, &DVector::zeros(15), 0.0, &f.mats.mass, 3),
            Err(Error::DegenerateDirection(3))
        ));
    }

    #[test]
    fn objective_decreases_and_discrepancy_brackets() {
        let f = fixture(24, 40, 0.5, 0.5);
        let op = f.op();
        let truth = f.mesh.sample(|x| (std::f64::consts::PI * x).cos() * (std::f64::consts::PI * x).sin());
        let h = op.apply(&truth).unwrap();
        let config = CgmConfig {
            gamma: 1e-4,
            max_iter: 30,
            ..CgmConfig::default()
        };
        let (_, trace) = run_cgm(&h, 0.0, &config, &op, Some(&truth)).unwrap();
        assert_eq!(trace.stop_reason, StopReason::MaxIter);
        assert_eq!(trace.iterations.len(), 31);
        for w in trace.iterations.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-12 * w[0].objective.abs().max(1e-300));
        }
        let (h_noisy, theta) = add_noise(&h, NoiseSpec { mu: 0.05, seed: 5 }, &f.mats.mass).unwrap();
        let config = CgmConfig::default();
        let (_, trace) = run_cgm(&h_noisy, theta, &config, &op, Some(&truth)).unwrap();
        if trace.stop_reason == StopReason::Discrepancy {
            let rs: Vec<f64> = trace.iterations.iter().map(|r| r.residual).collect();
            let is = trace.stopping_index;
            assert!(rs[is] <= config.sigma * theta);
            assert!(is == 0 || rs[is - 1] > config.sigma * theta);
        }
        assert!(CgmConfig { sigma: 1.0, ..CgmConfig::default() }.validate().is_err());
        assert!(CgmConfig { max_iter: 0, ..CgmConfig::default() }.validate().is_err());
    }
}
