//! Eigenfunction expansions of the discrete operator: series solutions, the
//! exact inverse, finite-rank truncations and the ill-posedness table.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fem::{factor, NonlocalMatrices};
use crate::special_functions::{ml_eval, MlParams};

/// Smallest relaxation factor the inverse series will divide by.
pub const INVERSE_UNDERFLOW: f64 = 1e-300;

/// Generalized eigenpairs `S φ = λ M φ`, ascending, `M`-orthonormal.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    pub lambdas: Vec<f64>,
    /// Column `k` is `φ_{k+1}`.
    pub vectors: DMatrix<f64>,
    mass: crate::fem::SymTridiagonal,
}

impl EigenBasis {
    pub fn count(&self) -> usize {
        self.lambdas.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn vector(&self, k: usize) -> DVector<f64> {
        self.vectors.column(k).into_owned()
    }

    /// `g_k = φ_kᵀ M g` for every retained mode.
    pub fn coefficients(&self, g: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(g)?;
        Ok(self.vectors.tr_mul(&self.mass.apply(g)))
    }

    /// `Σ_k c_k φ_k`.
    pub fn synthesize(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        &self.vectors * coeffs
    }

    fn check_len(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::Dimension {
                context: "nodal field",
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    fn check_count(&self, name: &'static str, m: usize) -> Result<()> {
        if m > self.count() {
            return Err(Error::invalid(name, m, format!("basis holds only {} modes", self.count())));
        }
        Ok(())
    }
}

/// The `m` smallest eigenpairs of `S φ = λ M φ`.
///
/// With `M = L Lᵀ` the pencil reduces to the symmetric matrix `L⁻¹ S L⁻ᵀ`.
pub fn compute_eigenbasis(matrices: &NonlocalMatrices, m: usize) -> Result<EigenBasis> {
    let n = matrices.dim();
    if m == 0 || m > n {
        return Err(Error::invalid("m", m, format!("mode count must be in 1..={n}")));
    }
    let chol = factor(matrices.mass.to_dense(), "mass")?;
    let l = chol.l();
    let l_inv_s = l
        .solve_lower_triangular(&matrices.stiffness)
        .ok_or_else(|| Error::Eigen("singular mass factor".into()))?;
    let mut reduced = l
        .solve_lower_triangular(&l_inv_s.transpose())
        .ok_or_else(|| Error::Eigen("singular mass factor".into()))?;
    reduced = (&reduced + reduced.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(reduced, f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric QR iteration did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lt = l.transpose();
    let mut vectors = DMatrix::zeros(n, m);
    let mut lambdas = Vec::with_capacity(m);
    for (col, &k) in order.iter().take(m).enumerate() {
        let y = eig.eigenvectors.column(k).into_owned();
        let phi = lt
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::Eigen("singular mass factor".into()))?;
        // Fix the sign so the largest entry is positive.
        let sign = if phi[phi.iamax()] < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(col, &(phi * sign));
        lambdas.push(eig.eigenvalues[k]);
    }
    if lambdas[0] <= 0.0 {
        return Err(Error::Eigen(format!("non-positive smallest eigenvalue {}", lambdas[0])));
    }
    Ok(EigenBasis {
        lambdas,
        vectors,
        mass: matrices.mass.clone(),
    })
}

/// `E_{α,1}(-λ_k t^α)` for the first `n` modes.
fn relaxation_factors(basis: &EigenBasis, alpha: f64, t: f64, n: usize) -> Result<Vec<f64>> {
    let params = MlParams::relaxation(alpha)?;
    if t == 0.0 {
        return Ok(vec![1.0; n]);
    }
    let ta = t.powf(alpha);
    basis.lambdas[..n].iter().map(|&l| ml_eval(params, -l * ta)).collect()
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid("t", t, "time must be non-negative"));
    }
    Ok(())
}

/// `Σ_k g_k E_{α,1}(-λ_k t^α) φ_k`.
pub fn forward_series(g: &DVector<f64>, basis: &EigenBasis, alpha: f64, t: f64) -> Result<DVector<f64>> {
    truncation_operator(g, basis, alpha, t, basis.count())
}

/// `A_n g = Σ_{k≤n} g_k E_{α,1}(-λ_k T^α) φ_k`.
pub fn truncation_operator(
    g: &DVector<f64>,
    basis: &EigenBasis,
    alpha: f64,
    t_final: f64,
    n_modes: usize,
) -> Result<DVector<f64>> {
    check_time(t_final)?;
    basis.check_count("n_modes", n_modes)?;
    let e = relaxation_factors(basis, alpha, t_final, n_modes)?;
    let gk = basis.coefficients(g)?;
    let coeffs = DVector::from_fn(basis.count(), |k, _| if k < n_modes { gk[k] * e[k] } else { 0.0 });
    Ok(basis.synthesize(&coeffs))
}

/// Naive inverse `Σ_{k≤n} (h, φ_k) / E_{α,1}(-λ_k T^α) φ_k`.
pub fn inverse_series(
    h: &DVector<f64>,
    basis: &EigenBasis,
    alpha: f64,
    t_final: f64,
    truncation: usize,
) -> Result<DVector<f64>> {
    check_time(t_final)?;
    basis.check_count("truncation", truncation)?;
    let e = relaxation_factors(basis, alpha, t_final, truncation)?;
    if let Some(k) = e.iter().position(|&v| v < INVERSE_UNDERFLOW) {
        return Err(Error::InverseOverflow {
            mode: k + 1,
            value: e[k],
        });
    }
    let hk = basis.coefficients(h)?;
    let coeffs = DVector::from_fn(basis.count(), |k, _| if k < truncation { hk[k] / e[k] } else { 0.0 });
    Ok(basis.synthesize(&coeffs))
}

/// One row of the ill-posedness table for the datum `φ_p / √λ_p`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct IllposednessRow {
    pub p: usize,
    pub lambda_p: f64,
    pub data_gap: f64,
    pub solution_gap: f64,
    pub amplification: f64,
}

/// Data gap `1/√λ_p` and solution gap `1/(√λ_p E_{α,1}(-λ_p T^α))`, `p = 1..=p_max`.
pub fn illposedness_demo(
    basis: &EigenBasis,
    alpha: f64,
    t_final: f64,
    p_max: usize,
) -> Result<Vec<IllposednessRow>> {
    check_time(t_final)?;
    basis.check_count("p_max", p_max)?;
    let e = relaxation_factors(basis, alpha, t_final, p_max)?;
    Ok((0..p_max)
        .map(|k| {
            let lambda_p = basis.lambdas[k];
            let data_gap = 1.0 / lambda_p.sqrt();
            IllposednessRow {
                p: k + 1,
                lambda_p,
                data_gap,
                solution_gap: data_gap / e[k],
                amplification: 1.0 / e[k],
            }
        })
        .collect())
}

pub fn write_illposedness_csv(rows: &[IllposednessRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
