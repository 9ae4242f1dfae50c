//! L1 time stepping for `∂_t^α u + (-Δ)^s u = F` and the backward adjoint.

use std::io::Write;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::fem::{factor, Mesh1D, NonlocalMatrices};
use crate::special_functions::gamma_eval;

/// Uniform grid `t_n = n Δt`, `n = 0..=K`, on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    n_steps: usize,
    dt: f64,
    t_final: f64,
    alpha: f64,
}

impl TimeGrid {
    pub fn new(n_steps: usize, t_final: f64, alpha: f64) -> Result<Self> {
        if n_steps < 2 {
            return Err(Error::invalid("n_steps", n_steps, "need at least 2 time steps"));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::invalid("t_final", t_final, "final time must be positive"));
        }
        check_alpha(alpha)?;
        Ok(Self {
            n_steps,
            dt: t_final / n_steps as f64,
            t_final,
            alpha,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.n_steps {
            self.t_final
        } else {
            n as f64 * self.dt
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha", alpha, "Caputo order must lie in (0, 1)"));
    }
    Ok(())
}

/// Nodal values on the interior nodes at every time level. Row `n` holds `t_n`.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    pub values: DMatrix<f64>,
    pub grid: TimeGrid,
}

impl SpaceTimeField {
    pub fn at(&self, n: usize) -> DVector<f64> {
        self.values.row(n).transpose()
    }

    pub fn final_value(&self) -> DVector<f64> {
        self.at(self.grid.n_steps())
    }

    /// Write `t, x, value` rows, endpoints (zero) included.
    pub fn dump_csv(&self, mesh: &Mesh1D, path: &Path) -> Result<()> {
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = std::fs::File::create(path).map_err(io_err)?;
        let mut out = std::io::BufWriter::new(file);
        writeln!(out, "t,x,value").map_err(io_err)?;
        for n in 0..=self.grid.n_steps() {
            let t = self.grid.time(n);
            for (node, &x) in mesh.nodes().iter().enumerate() {
                let v = mesh.interior_index(node).map_or(0.0, |i| self.values[(n, i)]);
                writeln!(out, "{t:.17e},{x:.17e},{v:.17e}").map_err(io_err)?;
            }
        }
        out.flush().map_err(io_err)
    }
}

/// Scaled L1 weights `c b_j`, `j = 0..n`, where `c = Δt^{-α}/Γ(2-α)` and
/// `b_j = (j+1)^{1-α} - j^{1-α}`.
pub fn l1_weights(alpha: f64, dt: f64, n: usize) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    if n == 0 {
        return Err(Error::invalid("n", n, "step index must be at least 1"));
    }
    let c = dt.powf(-alpha) / gamma_eval(2.0 - alpha)?;
    Ok(raw_weights(alpha, n).into_iter().map(|b| c * b).collect())
}

fn raw_weights(alpha: f64, n: usize) -> Vec<f64> {
    let e = 1.0 - alpha;
    (0..n)
        .map(|j| {
            let j = j as f64;
            (j + 1.0).powf(e) - j.powf(e)
        })
        .collect()
}

/// Prefactored L1 stepper for a fixed mesh, order pair and time grid.
pub struct L1Stepper<'a> {
    matrices: &'a NonlocalMatrices,
    grid: TimeGrid,
    c: f64,
    /// `b_j`, `j = 0..=K`
    b: Vec<f64>,
    system: Cholesky<f64, Dyn>,
}

impl<'a> L1Stepper<'a> {
    pub fn new(matrices: &'a NonlocalMatrices, grid: TimeGrid) -> Result<Self> {
        let c = grid.dt().powf(-grid.alpha()) / gamma_eval(2.0 - grid.alpha())?;
        let b = raw_weights(grid.alpha(), grid.n_steps() + 1);
        let system = factor(
            matrices.mass.to_dense() * (c * b[0]) + &matrices.stiffness,
            "L1 step",
        )?;
        Ok(Self {
            matrices,
            grid,
            c,
            b,
            system,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn matrices(&self) -> &NonlocalMatrices {
        self.matrices
    }

    /// March from `u^0 = initial`. `load(n)` returns the nodal source `F^n`
    /// (or `None` for zero), which enters the right-hand side as `M F^n`.
    fn march(
        &self,
        initial: &DVector<f64>,
        load: impl Fn(usize) -> Option<DVector<f64>>,
    ) -> Result<DMatrix<f64>> {
        let dim = self.matrices.dim();
        if initial.len() != dim {
            return Err(Error::Dimension {
                context: "initial value",
                expected: dim,
                got: initial.len(),
            });
        }
        let k = self.grid.n_steps();
        // Column n holds u^n so the history sum runs over contiguous memory.
        let mut levels = DMatrix::zeros(dim, k + 1);
        levels.set_column(0, initial);
        let mut history = DVector::zeros(dim);
        for n in 1..=k {
            // c [ b_{n-1} u^0 + Σ_{j=1}^{n-1} (b_{j-1} - b_j) u^{n-j} ]
            history.copy_from(initial);
            history *= self.b[n - 1];
            for j in 1..n {
                history.axpy(self.b[j - 1] - self.b[j], &levels.column(n - j), 1.0);
            }
            history *= self.c;
            if let Some(f) = load(n) {
                if f.len() != dim {
                    return Err(Error::Dimension {
                        context: "source sample",
                        expected: dim,
                        got: f.len(),
                    });
                }
                history += f;
            }
            let rhs = self.matrices.mass.apply(&history);
            levels.set_column(n, &self.system.solve(&rhs));
        }
        Ok(levels.transpose())
    }

    /// Forward solve with nodal source samples `F^n` taken at `t_n`.
    pub fn forward(
        &self,
        initial: &DVector<f64>,
        source: Option<&dyn Fn(usize) -> DVector<f64>>,
    ) -> Result<SpaceTimeField> {
        let values = self.march(initial, |n| source.map(|f| f(n)))?;
        Ok(SpaceTimeField {
            values,
            grid: self.grid,
        })
    }

    /// Final value `u(T)` of the source-free problem.
    pub fn final_value(&self, initial: &DVector<f64>) -> Result<DVector<f64>> {
        let values = self.march(initial, |_| None)?;
        Ok(values.row(self.grid.n_steps()).transpose())
    }

    /// Adjoint trajectory for terminal datum `residual`, stored in `t`-order
    /// with row `K` equal to zero.
    ///
    /// With `τ = T - t` the backward problem becomes a forward L1 march from
    /// zero whose source is `residual` times the doubled Gaussian
    /// `2 exp(-τ²/η²)/(η√π)`, averaged over each step.
    pub fn adjoint(&self, residual: &DVector<f64>, eta: f64) -> Result<SpaceTimeField> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::invalid("eta", eta, "Dirac width must be positive"));
        }
        let k = self.grid.n_steps();
        let dt = self.grid.dt();
        let dim = self.matrices.dim();
        if residual.len() != dim {
            return Err(Error::Dimension {
                context: "adjoint residual",
                expected: dim,
                got: residual.len(),
            });
        }
        let cell_mass: Vec<f64> = (0..=k)
            .map(|q| {
                if q == 0 {
                    0.0
                } else {
                    let erf = statrs::function::erf::erf;
                    erf(q as f64 * dt / eta) - erf((q - 1) as f64 * dt / eta)
                }
            })
            .collect();
        let reversed = self.march(&DVector::zeros(dim), |q| {
            (cell_mass[q] != 0.0).then(|| residual * (cell_mass[q] / dt))
        })?;
        let mut values = DMatrix::zeros(k + 1, dim);
        for q in 1..=k {
            values.set_row(k - q, &reversed.row(q));
        }
        Ok(SpaceTimeField {
            values,
            grid: self.grid,
        })
    }
}

/// Forward solve; `source(t)` returns nodal samples of `F(·, t)`.
pub fn solve_forward(
    g: &DVector<f64>,
    source: Option<&dyn Fn(f64) -> DVector<f64>>,
    matrices: &NonlocalMatrices,
    grid: TimeGrid,
) -> Result<SpaceTimeField> {
    let stepper = L1Stepper::new(matrices, grid)?;
    match source {
        Some(f) => stepper.forward(g, Some(&|n| f(grid.time(n)))),
        None => stepper.forward(g, None),
    }
}

/// Backward adjoint solve with terminal datum `residual = u_g(T) - h`.
pub fn solve_adjoint(
    residual: &DVector<f64>,
    matrices: &NonlocalMatrices,
    grid: TimeGrid,
    eta: f64,
) -> Result<SpaceTimeField> {
    L1Stepper::new(matrices, grid)?.adjoint(residual, eta)
}

/// Product-integration rule for `(1/Γ(1-α)) ∫_0^T z(τ) τ^{-α} dτ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProductRule {
    /// `z` linear on each step; exact for piecewise-linear `z`.
    #[default]
    Linear,
    /// `z` frozen at the left end of each step. Combined with the adjoint
    /// march this is the exact transpose of the forward L1 scheme.
    LeftConstant,
}

/// `J^{1-α}_{T-} z(·, 0) = (1/Γ(1-α)) ∫_0^T z(·, τ) τ^{-α} dτ`.
pub fn rl_integral_at_zero(z: &SpaceTimeField, rule: ProductRule) -> Result<DVector<f64>> {
    let grid = z.grid;
    let a = grid.alpha();
    let k = grid.n_steps();
    let g1 = gamma_eval(1.0 - a)?;
    let mut out = DVector::zeros(z.values.ncols());
    for m in 0..k {
        let (t0, t1) = (grid.time(m), grid.time(m + 1));
        let i0 = (t1.powf(1.0 - a) - t0.powf(1.0 - a)) / (1.0 - a);
        let (w0, w1) = match rule {
            ProductRule::LeftConstant => (i0, 0.0),
            ProductRule::Linear => {
                let i1 = (t1.powf(2.0 - a) - t0.powf(2.0 - a)) / (2.0 - a) - t0 * i0;
                let slope = i1 / (t1 - t0);
                (i0 - slope, slope)
            }
        };
        for (o, (z0, z1)) in out
            .iter_mut()
            .zip(z.values.row(m).iter().zip(z.values.row(m + 1).iter()))
        {
            *o += w0 * z0 + w1 * z1;
        }
    }
    Ok(out / g1)
}

/// `∫_0^T 2 exp(-(t-T)²/η²)/(η√π) dt = erf(T/η)`; the undoubled kernel keeps half.
pub fn gaussian_dirac_mass_inside(t_final: f64, eta: f64) -> f64 {
    0.5 * statrs::function::erf::erf(t_final / eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::make_mesh;

    fn setup(n: usize, s: f64) -> (Mesh1D, NonlocalMatrices) {
        let mesh = make_mesh(n).unwrap();
        let mats = NonlocalMatrices::assemble(&mesh, s).unwrap();
        (mesh, mats)
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(1, 1.0, 0.5).is_err());
        assert!(TimeGrid::new(10, 1.0, 1.0).is_err());
        assert!(TimeGrid::new(10, 0.0, 0.5).is_err());
        let g = TimeGrid::new(3, 1.0, 0.5).unwrap();
        assert_eq!(g.time(3), 1.0);
        assert!((g.dt() * 3.0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn weights_are_positive_decreasing_and_telescope() {
        for &alpha in &[0.1, 0.5, 0.9] {
            let dt = 0.01;
            let n = 50;
            let w = l1_weights(alpha, dt, n).unwrap();
            let c = dt.powf(-alpha) / gamma_eval(2.0 - alpha).unwrap();
            assert!((w[0] - c).abs() < 1e-12 * c);
            assert!(w.iter().all(|&x| x > 0.0));
            assert!(w.windows(2).all(|p| p[1] < p[0]));
            let sum: f64 = w.iter().sum();
            assert!((sum - c * (n as f64).powf(1.0 - alpha)).abs() < 1e-12 * sum);
        }
        let w = l1_weights(0.999, 0.1, 5).unwrap();
        assert!(w[1] < 1e-2 * w[0]);
        assert!(l1_weights(0.0, 0.1, 5).is_err());
        assert!(l1_weights(0.5, 0.1, 0).is_err());
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let (_, mats) = setup(16, 0.5);
        let grid = TimeGrid::new(20, 1.0, 0.5).unwrap();
        let u = solve_forward(&DVector::zeros(15), None, &mats, grid).unwrap();
        assert!(u.values.iter().all(|&v| v == 0.0));
        let z = solve_adjoint(&DVector::zeros(15), &mats, grid, 1e-3).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
        assert!(solve_adjoint(&DVector::zeros(15), &mats, grid, 0.0).is_err());
    }

    #[test]
    fn nonnegative_data_stays_nonnegative() {
        let (mesh, mats) = setup(64, 0.7);
        let grid = TimeGrid::new(100, 1.0, 0.4).unwrap();
        let g = mesh.sample(|x| if x.abs() < 0.3 { 1.0 } else { 0.0 });
        let u = solve_forward(&g, None, &mats, grid).unwrap().final_value();
        assert!(u.min() >= -1e-8 * g.amax(), "min {}", u.min());
    }

    #[test]
    fn adjoint_is_the_transpose_of_the_forward_map() {
        // Δt/η = 10 puts the whole Gaussian in the first reversed cell, so
        // ⟨A g, r⟩_M = ⟨g, A* r⟩_M holds to rounding.
        let (mesh, mats) = setup(24, 0.4);
        let grid = TimeGrid::new(100, 1.0, 0.6).unwrap();
        let stepper = L1Stepper::new(&mats, grid).unwrap();
        let g = mesh.sample(|x| (3.0 * x).sin() + 0.5);
        let r = mesh.sample(|x| x * x - 0.2 * x);
        let ag = stepper.final_value(&g).unwrap();
        let z = stepper.adjoint(&r, 1e-3).unwrap();
        let astar_r = rl_integral_at_zero(&z, ProductRule::LeftConstant).unwrap();
        let lhs = mats.mass.inner(&ag, &r);
        let rhs = mats.mass.inner(&g, &astar_r);
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs(), "{lhs} vs {rhs}");
        assert!(z.values.row(grid.n_steps()).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gaussian_half_mass() {
        assert!((gaussian_dirac_mass_inside(1.0, 1e-3) - 0.5).abs() < 1e-15);
        assert!(gaussian_dirac_mass_inside(1.0, 1.0) < 0.5);
    }

    fn field_from(grid: TimeGrid, f: impl Fn(f64) -> f64) -> SpaceTimeField {
        let k = grid.n_steps();
        SpaceTimeField {
            values: DMatrix::from_fn(k + 1, 2, |n, _| f(grid.time(n))),
            grid,
        }
    }

    #[test]
    fn rl_integral_examples() {
        let alpha = 0.3;
        let t = 2.0;
        let grid = TimeGrid::new(7, t, alpha).unwrap();
        let zero = rl_integral_at_zero(&field_from(grid, |_| 0.0), ProductRule::Linear).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let c = rl_integral_at_zero(&field_from(grid, |_| 1.5), ProductRule::Linear).unwrap();
        let exact = 1.5 * t.powf(1.0 - alpha) / gamma_eval(2.0 - alpha).unwrap();
        assert!((c[0] - exact).abs() < 1e-13 * exact);
        // 2^{1.7} / (1.7 Γ(0.7)), 30-digit quadrature.
        let oracle = 1.472_342_558_136_857_959_9;
        let lin = rl_integral_at_zero(&field_from(grid, |s| s), ProductRule::Linear).unwrap();
        assert!((lin[1] - oracle).abs() < 1e-13 * oracle, "{}", lin[1]);
        let left = rl_integral_at_zero(&field_from(grid, |_| 1.5), ProductRule::LeftConstant).unwrap();
        assert!((left[0] - exact).abs() < 1e-13 * exact);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn adjoint_is_linear(
            r in proptest::collection::vec(-1.0f64..1.0, 7),
            scale in -10.0f64..10.0,
        ) {
            let (_, mats) = setup(8, 0.6);
            let grid = TimeGrid::new(12, 1.0, 0.5).unwrap();
            let r = DVector::from_vec(r);
            let z1 = solve_adjoint(&r, &mats, grid, 1e-3).unwrap();
            let z2 = solve_adjoint(&(&r * scale), &mats, grid, 1e-3).unwrap();
            let diff = (&z2.values - &z1.values * scale).norm();
            proptest::prop_assert!(diff <= 1e-10 * (z2.values.norm() + 1e-300));
        }
    }
}
