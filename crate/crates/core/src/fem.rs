//! P1 finite elements for the integral fractional Laplacian on `Ω = (-1, 1)`
//! with the volume constraint `u = 0` on `Ω^c`.
//!
//! Degrees of freedom are the `N - 1` interior nodes. Because every hat
//! function vanishes on `Ω^c`, the energy form
//! `(C_{1,s}/2) ∬ (φ_i(x)-φ_i(y))(φ_j(x)-φ_j(y)) |x-y|^{-1-2s}` over
//! `(ℝ×ℝ) \ (Ω^c×Ω^c)` coincides with the same integral over all of `ℝ²`.
//! Integrating by parts twice against the piecewise-constant hat slopes
//! turns each entry into a fourth central difference of `|r|^{3-2s}` at
//! `r = |i - j| h`, so the stiffness matrix is symmetric Toeplitz and is
//! assembled in closed form.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::special_functions::gamma_eval;

/// Uniform partition of `[-1, 1]` into `N` intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    n_intervals: usize,
    nodes: Vec<f64>,
    dx: f64,
}

impl Mesh1D {
    pub fn n_intervals(&self) -> usize {
        self.n_intervals
    }

    /// All `N + 1` node coordinates, endpoints included.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Number of interior nodes (`N - 1`), i.e. the number of unknowns.
    pub fn n_interior(&self) -> usize {
        self.n_intervals - 1
    }

    /// Coordinates of the interior nodes, in unknown order.
    pub fn interior_nodes(&self) -> &[f64] {
        &self.nodes[1..self.n_intervals]
    }

    /// Unknown index of global node `node`, or `None` for the endpoints.
    pub fn interior_index(&self, node: usize) -> Option<usize> {
        (node >= 1 && node < self.n_intervals).then(|| node - 1)
    }

    /// Nodal interpolant of `f` on the interior nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> DVector<f64> {
        DVector::from_iterator(self.n_interior(), self.interior_nodes().iter().map(|&x| f(x)))
    }
}

/// Uniform mesh with `n_intervals` subintervals of width `2 / N`.
pub fn make_mesh(n_intervals: usize) -> Result<Mesh1D> {
    if n_intervals < 4 {
        return Err(Error::invalid("n_intervals", n_intervals, "need at least 4 intervals"));
    }
    let dx = 2.0 / n_intervals as f64;
    let mut nodes: Vec<f64> = (0..=n_intervals).map(|i| -1.0 + i as f64 * dx).collect();
    // Pin the endpoints; the midpoint is exact whenever N is even.
    nodes[0] = -1.0;
    nodes[n_intervals] = 1.0;
    Ok(Mesh1D {
        n_intervals,
        nodes,
        dx,
    })
}

/// Symmetric tridiagonal matrix stored by its diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut out = DVector::zeros(n);
        for i in 0..n {
            let mut acc = self.diag[i] * v[i];
            if i > 0 {
                acc += self.off[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                acc += self.off[i] * v[i + 1];
            }
            out[i] = acc;
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if i + 1 == j {
                self.off[i]
            } else if j + 1 == i {
                self.off[j]
            } else {
                0.0
            }
        })
    }

    /// `uᵀ M v`.
    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(&self.apply(v))
    }

    /// `sqrt(vᵀ M v)`.
    pub fn norm(&self, v: &DVector<f64>) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }
}

/// Stiffness and mass matrices of the discrete nonlocal problem.
#[derive(Debug, Clone)]
pub struct NonlocalMatrices {
    pub stiffness: DMatrix<f64>,
    pub mass: SymTridiagonal,
    pub s: f64,
    pub c_ds: f64,
}

impl NonlocalMatrices {
    pub fn assemble(mesh: &Mesh1D, s: f64) -> Result<Self> {
        let stiffness = assemble_stiffness(mesh, s)?;
        Ok(Self {
            stiffness,
            mass: assemble_mass(mesh),
            s,
            c_ds: normalization_constant(s)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.mass.dim()
    }

    /// Write `(row, col, value)` triples of both matrices to a CSV file.
    pub fn dump_csv(&self, path: &Path) -> Result<()> {
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = std::fs::File::create(path).map_err(io_err)?;
        let mut out = std::io::BufWriter::new(file);
        writeln!(out, "# s = {}, C_1s = {:.17e}", self.s, self.c_ds).map_err(io_err)?;
        writeln!(out, "matrix,row,col,value").map_err(io_err)?;
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                writeln!(out, "stiffness,{i},{j},{:.17e}", self.stiffness[(i, j)]).map_err(io_err)?;
            }
        }
        let mass = self.mass.to_dense();
        for i in 0..n {
            for j in i.saturating_sub(1)..(i + 2).min(n) {
                writeln!(out, "mass,{i},{j},{:.17e}", mass[(i, j)]).map_err(io_err)?;
            }
        }
        out.flush().map_err(io_err)
    }
}

fn check_order(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::invalid("s", s, "fractional order must lie in (0, 1)"));
    }
    Ok(())
}

/// `C_{1,s} = 2^{2s} s Γ(s + 1/2) / (√π Γ(1 - s))`.
pub fn normalization_constant(s: f64) -> Result<f64> {
    check_order(s)?;
    Ok(4f64.powf(s) * s * gamma_eval(s + 0.5)? / (PI.sqrt() * gamma_eval(1.0 - s)?))
}

/// Below this distance (in units of `h`) the fourth difference is taken
/// directly; beyond it the Taylor expansion of the difference operator is
/// summed to avoid cancellation.
const DIRECT_DIFFERENCE_RANGE: usize = 20;
/// Width of the band around `s = 1/2` where `(|k|^{2+ε} - k²)/ε` is expanded in `ε`.
const HALF_ORDER_BAND: f64 = 2e-2;

/// First Toeplitz coefficient sequence `a_m = B(φ_i, φ_{i+m})` for a mesh of
/// spacing `h`, `m = 0..len`.
pub fn toeplitz_coefficients(s: f64, h: f64, len: usize) -> Result<Vec<f64>> {
    check_order(s)?;
    let c = normalization_constant(s)?;
    let scale = c * h.powf(1.0 - 2.0 * s);
    Ok((0..len).map(|m| scale * unit_coefficient(s, m)).collect())
}

/// `δ⁴ |k|^{3-2s} / (2s (1-2s) (2-2s) (3-2s))` at `k = m`, with the removable
/// singularity at `s = 1/2` resolved.
fn unit_coefficient(s: f64, m: usize) -> f64 {
    if m >= DIRECT_DIFFERENCE_RANGE {
        far_field_coefficient(s, m as f64)
    } else if (1.0 - 2.0 * s).abs() < HALF_ORDER_BAND {
        half_order_coefficient(s, m)
    } else {
        direct_coefficient(s, m)
    }
}

const STENCIL: [(i64, f64); 5] = [(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)];

fn stencil_point(m: usize, offset: i64) -> f64 {
    (m as i64 + offset).unsigned_abs() as f64
}

fn direct_coefficient(s: f64, m: usize) -> f64 {
    let p = 3.0 - 2.0 * s;
    let diff: f64 = STENCIL.iter().map(|&(o, w)| w * stencil_point(m, o).powf(p)).sum();
    diff / (2.0 * s * (1.0 - 2.0 * s) * (2.0 - 2.0 * s) * (3.0 - 2.0 * s))
}

/// `|k|^{2+ε} = k² Σ_j (ε ln|k|)^j / j!` and `δ⁴ k² = 0`, so the `1/ε` cancels.
fn half_order_coefficient(s: f64, m: usize) -> f64 {
    let eps = 1.0 - 2.0 * s;
    let mut total = 0.0;
    let mut eps_pow = 1.0;
    let mut fact = 1.0;
    for j in 1..=10 {
        fact *= j as f64;
        let diff: f64 = STENCIL
            .iter()
            .map(|&(o, w)| {
                let k = stencil_point(m, o);
                if k == 0.0 {
                    0.0
                } else {
                    w * k * k * k.ln().powi(j)
                }
            })
            .sum();
        total += eps_pow / fact * diff;
        eps_pow *= eps;
    }
    total / (2.0 * s * (2.0 - 2.0 * s) * (3.0 - 2.0 * s))
}

/// `δ⁴ = Σ_{n≥2} (2^{2n+1} - 8)/(2n)! D^{2n}` applied to `|k|^{3-2s}`, divided
/// by the same constant as the direct formula. The leading term is
/// `-m^{-1-2s}`.
fn far_field_coefficient(s: f64, m: f64) -> f64 {
    let q = -1.0 - 2.0 * s;
    let mut total = 0.0;
    // falling factorial q (q-1) ... tracked incrementally
    let mut falling = 1.0;
    let mut power = m.powf(q);
    let inv_m2 = 1.0 / (m * m);
    let mut fact = 24.0; // (2n)! at n = 2
    for n in 2..=12usize {
        let coeff = (2f64.powi(2 * n as i32 + 1) - 8.0) / fact;
        let term = coeff * falling * power;
        total += term;
        if term.abs() < 1e-18 * total.abs() {
            break;
        }
        let k = 2 * (n - 2) as i32;
        falling *= (q - k as f64) * (q - k as f64 - 1.0);
        power *= inv_m2;
        fact *= ((2 * n + 1) * (2 * n + 2)) as f64;
    }
    -total
}

/// Dense stiffness matrix `S_ij = B_s(φ_i, φ_j)` on the interior nodes.
pub fn assemble_stiffness(mesh: &Mesh1D, s: f64) -> Result<DMatrix<f64>> {
    let n = mesh.n_interior();
    let coeffs = toeplitz_coefficients(s, mesh.dx(), n)?;
    Ok(DMatrix::from_fn(n, n, |i, j| coeffs[i.abs_diff(j)]))
}

/// Standard P1 mass matrix `(h/6) tridiag(1, 4, 1)` on the interior nodes.
pub fn assemble_mass(mesh: &Mesh1D) -> SymTridiagonal {
    let n = mesh.n_interior();
    let h = mesh.dx();
    SymTridiagonal {
        diag: vec![4.0 * h / 6.0; n],
        off: vec![h / 6.0; n - 1],
    }
}

/// Solve `(-Δ)^s u = f` in `Ω`, `u = 0` on `Ω^c`, with load `M f`.
pub fn solve_stationary(
    matrices: &NonlocalMatrices,
    rhs: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = matrices.dim();
    if rhs.len() != n {
        return Err(Error::Dimension {
            context: "solve_stationary rhs",
            expected: n,
            got: rhs.len(),
        });
    }
    let chol = factor(matrices.stiffness.clone(), "stiffness")?;
    Ok(chol.solve(&matrices.mass.apply(rhs)))
}

pub(crate) fn factor(matrix: DMatrix<f64>, name: &'static str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(matrix).ok_or(Error::Factorization(name))
}

/// `√π 2^{-2s} (1 - x²)^s / (Γ(s + 1/2) Γ(s + 1))`, the solution of
/// `(-Δ)^s u = 1` on `(-1, 1)` with zero exterior data.
pub fn unit_load_profile(s: f64) -> Result<impl Fn(f64) -> f64> {
    check_order(s)?;
    let k = PI.sqrt() * 4f64.powf(-s) / (gamma_eval(s + 0.5)? * gamma_eval(s + 1.0)?);
    Ok(move |x: f64| {
        let r = 1.0 - x * x;
        if r <= 0.0 {
            0.0
        } else {
            k * r.powf(s)
        }
    })
}

/// `L²(Ω)` distance between the P1 interpolant of `nodal` and `exact`,
/// computed element by element with Gauss–Legendre quadrature.
pub fn l2_error_continuous(mesh: &Mesh1D, nodal: &DVector<f64>, exact: impl Fn(f64) -> f64) -> f64 {
    let rule = crate::quadrature::gauss_legendre(20);
    let value = |node: usize| mesh.interior_index(node).map_or(0.0, |i| nodal[i]);
    let mut acc = 0.0;
    for k in 0..mesh.n_intervals() {
        let (a, b) = (mesh.nodes()[k], mesh.nodes()[k + 1]);
        let (ua, ub) = (value(k), value(k + 1));
        acc += crate::quadrature::integrate_gl(
            |x| {
                let uh = ua + (ub - ua) * (x - a) / (b - a);
                (uh - exact(x)).powi(2)
            },
            a,
            b,
            &rule,
        );
    }
    acc.sqrt()
}
