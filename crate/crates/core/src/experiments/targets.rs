use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fem::unit_load_profile;

/// Initial values used by the experiments.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetFunction {
    /// `cos(πx) sin(πx)`
    Trig,
    /// `sin(πx) e^{-x²} - cos(πx) e^{x²}`
    Smooth,
    /// Three-level step: 2 on `[-1/4, 1/4]`, 1 on `[-3/4, -1/4) ∪ (1/4, 3/4]`, 1/2 outside.
    Nonsmooth,
    /// `√π 2^{-2s} (1-x²)^s / (Γ(s+1/2) Γ(s+1))`
    Manufactured { s: f64 },
    /// Piecewise-linear interpolation of `(x, value)` samples, constant beyond the ends.
    Custom(Vec<(f64, f64)>),
}

/// Jump locations of [`TargetFunction::Nonsmooth`].
pub const NONSMOOTH_JUMPS: [f64; 4] = [-0.75, -0.25, 0.25, 0.75];

impl TargetFunction {
    pub fn name(&self) -> &'static str {
        match self {
            TargetFunction::Trig => "trig",
            TargetFunction::Smooth => "smooth",
            TargetFunction::Nonsmooth => "nonsmooth",
            TargetFunction::Manufactured { .. } => "manufactured",
            TargetFunction::Custom(_) => "custom",
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(match self {
            TargetFunction::Trig => (PI * x).cos() * (PI * x).sin(),
            TargetFunction::Smooth => (PI * x).sin() * (-x * x).exp() - (PI * x).cos() * (x * x).exp(),
            TargetFunction::Nonsmooth => {
                let a = x.abs();
                if a <= 0.25 {
                    2.0
                } else if a <= 0.75 {
                    1.0
                } else {
                    0.5
                }
            }
            TargetFunction::Manufactured { s } => unit_load_profile(*s)?(x),
            TargetFunction::Custom(samples) => interpolate(samples, x),
        })
    }

    pub fn sample(&self, mesh: &crate::fem::Mesh1D) -> Result<nalgebra::DVector<f64>> {
        let values = mesh
            .interior_nodes()
            .iter()
            .map(|&x| self.eval(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(nalgebra::DVector::from_vec(values))
    }

    /// Read `x,value` rows (header optional, `#` comments skipped).
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut samples = Vec::new();
        for record in reader.records() {
            let record = record?;
            let parse = |i: usize| record.get(i).and_then(|v| v.parse::<f64>().ok());
            match (parse(0), parse(1)) {
                (Some(x), Some(v)) => samples.push((x, v)),
                _ if samples.is_empty() => continue,
                _ => {
                    return Err(Error::Config(format!(
                        "{}: malformed sample row {:?}",
                        path.display(),
                        record
                    )))
                }
            }
        }
        if samples.len() < 2 {
            return Err(Error::Config(format!("{}: need at least two samples", path.display())));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(TargetFunction::Custom(samples))
    }
}

fn interpolate(samples: &[(f64, f64)], x: f64) -> f64 {
    let idx = samples.partition_point(|p| p.0 < x);
    if idx == 0 {
        return samples[0].1;
    }
    if idx == samples.len() {
        return samples[samples.len() - 1].1;
    }
    let (x0, y0) = samples[idx - 1];
    let (x1, y1) = samples[idx];
    if x1 == x0 {
        y1
    } else {
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}
