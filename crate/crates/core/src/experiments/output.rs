use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{ConvergenceRow, ExperimentConfig, IllposednessReport, ReconstructionCell, RegularizationPair, Sweep};
use crate::error::{Error, Result};

/// First 16 hex digits of the SHA-256 of the resolved config, output
/// location excluded.
pub fn param_hash(config: &ExperimentConfig) -> String {
    let located = ExperimentConfig {
        output_dir: PathBuf::new(),
        ..config.clone()
    };
    let digest = Sha256::digest(located.to_toml().as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// `<output_dir>/<experiment>/<param-hash>/`, with the resolved config as a
/// `#` comment block at the top of every file.
pub struct OutputDir {
    path: PathBuf,
    header: String,
}

fn fmt(v: f64) -> String {
    format!("{v:.10e}")
}

impl OutputDir {
    pub fn create(config: &ExperimentConfig) -> Result<Self> {
        let path = config
            .output_dir
            .join(config.experiment.name())
            .join(param_hash(config));
        std::fs::create_dir_all(&path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        let mut header = format!("# fracinv {}\n", env!("CARGO_PKG_VERSION"));
        for line in config.to_toml().lines() {
            header.push_str("# ");
            header.push_str(line);
            header.push('\n');
        }
        Ok(Self { path, header })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn writer(&self, name: &str) -> Result<csv::Writer<File>> {
        let path = self.path.join(name);
        let io_err = |source| Error::Io {
            path: path.clone(),
            source,
        };
        let mut file = File::create(&path).map_err(io_err)?;
        file.write_all(self.header.as_bytes()).map_err(io_err)?;
        Ok(csv::Writer::from_writer(file))
    }

    fn finish(&self, mut w: csv::Writer<File>) -> Result<()> {
        w.flush().map_err(|source| Error::Io {
            path: self.path.clone(),
            source,
        })
    }

    pub fn write_convergence(&self, rows: &[(Sweep, f64, f64, Result<ConvergenceRow>)]) -> Result<()> {
        let mut w = self.writer("convergence.csv")?;
        let n_steps = rows
            .iter()
            .find_map(|(_, _, _, r)| r.as_ref().ok().map(|r| r.steps.len()))
            .unwrap_or(0);
        let mut head: Vec<String> = vec!["sweep".into(), "alpha".into(), "s".into()];
        let steps = rows.iter().find_map(|(_, _, _, r)| r.as_ref().ok().map(|r| r.steps.clone()));
        for i in 0..n_steps {
            let label = steps.as_ref().map_or(String::new(), |s| format!("1/{}", (1.0 / s[i]).round()));
            head.push(format!("err_{label}"));
        }
        for i in 1..n_steps {
            head.push(format!("pairwise_rate_{i}"));
        }
        head.extend(["rate".into(), "theoretical".into(), "rate_alt_norm".into(), "diagnostic".into()]);
        for i in 0..n_steps {
            head.push(format!("err_alt_{i}"));
        }
        w.write_record(&head)?;
        for (sweep, alpha, s, row) in rows {
            let mut rec = vec![sweep.name().to_string(), alpha.to_string(), s.to_string()];
            match row {
                Ok(r) => {
                    rec.extend(r.errors.iter().map(|&e| fmt(e)));
                    rec.extend(r.pairwise.iter().map(|&e| format!("{e:.4}")));
                    rec.extend([format!("{:.4}", r.rate), format!("{:.2}", r.theoretical), format!("{:.4}", r.rate_alt), String::new()]);
                    rec.extend(r.errors_alt.iter().map(|&e| fmt(e)));
                }
                Err(e) => {
                    rec.extend(std::iter::repeat(String::new()).take(2 * n_steps + 2));
                    rec.push(String::new());
                    rec.push(e.to_string());
                    rec.extend(std::iter::repeat(String::new()).take(n_steps));
                }
            }
            w.write_record(&rec)?;
        }
        self.finish(w)
    }

    /// Trace and profile files for one reconstruction cell.
    pub fn write_cell(&self, cell: &ReconstructionCell, tag: &str) -> Result<()> {
        let mut w = self.writer(&format!("trace_{tag}.csv"))?;
        w.write_record(["k", "zeta", "alpha_cc", "residual", "error", "objective"])?;
        for r in &cell.trace.iterations {
            w.write_record([
                r.k.to_string(),
                fmt(r.zeta),
                fmt(r.alpha_cc),
                fmt(r.residual),
                r.error.map_or(String::new(), fmt),
                fmt(r.objective),
            ])?;
        }
        self.finish(w)?;
        let mut w = self.writer(&format!("profile_{tag}.csv"))?;
        w.write_record(["x", "exact", "reconstructed"])?;
        let n = cell.exact.len();
        let h = 2.0 / (n + 1) as f64;
        w.write_record([fmt(-1.0), fmt(0.0), fmt(0.0)])?;
        for i in 0..n {
            w.write_record([fmt(-1.0 + (i + 1) as f64 * h), fmt(cell.exact[i]), fmt(cell.reconstruction[i])])?;
        }
        w.write_record([fmt(1.0), fmt(0.0), fmt(0.0)])?;
        self.finish(w)
    }

    pub fn write_cell_summary<'a>(&self, cells: impl Iterator<Item = &'a Result<ReconstructionCell>>) -> Result<()> {
        let mut w = self.writer("summary.csv")?;
        w.write_record(["alpha", "s", "mu", "theta", "gamma", "stopping_index", "stop_reason", "final_error", "diagnostic"])?;
        for cell in cells {
            match cell {
                Ok(c) => w.write_record([
                    c.alpha.to_string(),
                    c.s.to_string(),
                    c.mu.to_string(),
                    fmt(c.theta),
                    fmt(c.gamma),
                    c.stopping_index().to_string(),
                    c.stop_reason().as_str().to_string(),
                    fmt(c.final_error),
                    String::new(),
                ])?,
                Err(e) => w.write_record(["", "", "", "", "", "", "", "", &e.to_string()])?,
            }
        }
        self.finish(w)
    }

    pub fn write_windows<'a>(&self, cells: impl Iterator<Item = (f64, &'a Result<ReconstructionCell>)>) -> Result<()> {
        let mut w = self.writer("jump_windows.csv")?;
        w.write_record(["mu", "center", "window_mean_abs_error", "global_mean_abs_error", "ratio"])?;
        for (mu, cell) in cells {
            if let Ok(c) = cell {
                for win in &c.windows {
                    w.write_record([
                        mu.to_string(),
                        win.center.to_string(),
                        fmt(win.mean_abs_error),
                        fmt(c.global_mean_abs_error),
                        format!("{:.4}", win.mean_abs_error / c.global_mean_abs_error),
                    ])?;
                }
            }
        }
        self.finish(w)
    }

    pub fn write_regularization(&self, pairs: &[Result<RegularizationPair>]) -> Result<()> {
        let mut w = self.writer("regularization.csv")?;
        w.write_record(["mu", "theta", "gamma_formula", "error_gamma_zero", "error_gamma_formula", "diagnostic"])?;
        for p in pairs {
            match p {
                Ok(p) => w.write_record([
                    p.mu.to_string(),
                    fmt(p.regularized.theta),
                    fmt(p.regularized.gamma),
                    fmt(p.unregularized.final_error),
                    fmt(p.regularized.final_error),
                    String::new(),
                ])?,
                Err(e) => w.write_record(["", "", "", "", "", &e.to_string()])?,
            }
        }
        self.finish(w)
    }

    pub fn write_illposedness(&self, report: &IllposednessReport) -> Result<()> {
        let mut w = self.writer("illposedness.csv")?;
        w.write_record(["p", "lambda_p", "data_gap", "solution_gap", "amplification"])?;
        for r in &report.rows {
            w.write_record([r.p.to_string(), fmt(r.lambda_p), fmt(r.data_gap), fmt(r.solution_gap), fmt(r.amplification)])?;
        }
        self.finish(w)?;
        let mut w = self.writer("naive_inverse.csv")?;
        w.write_record(["modes", "norm_inflation"])?;
        for (m, r) in &report.naive_inflation {
            w.write_record([m.to_string(), fmt(*r)])?;
        }
        self.finish(w)
    }
}
