//! Convergence reports: fitted rates and exponents with tolerances and a
//! machine-checkable verdict, written as JSON, CSV, and gnuplot data files.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateSample {
    pub level: usize,
    pub h: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedRate {
    pub name: String,
    pub samples: Vec<RateSample>,
    pub rate: f64,
    pub fit_residual: f64,
    /// inclusive acceptance band
    pub expected: Option<(f64, f64)>,
    pub pass: bool,
}

impl FittedRate {
    pub fn evaluate(
        name: impl Into<String>,
        samples: Vec<RateSample>,
        expected: Option<(f64, f64)>,
    ) -> Result<Self> {
        let pairs: Vec<(f64, f64)> = samples.iter().map(|s| (s.h, s.error)).collect();
        let (rate, fit_residual) = crate::convergence::fit_rate(&pairs)?;
        let pass = expected.map_or(true, |(lo, hi)| rate >= lo && rate <= hi);
        Ok(Self { name: name.into(), samples, rate, fit_residual, expected, pass })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeExponentFit {
    pub name: String,
    /// (t, error) samples
    pub samples: Vec<(f64, f64)>,
    pub exponent: f64,
    pub fit_residual: f64,
    pub expected: Option<(f64, f64)>,
    pub pass: bool,
}

impl TimeExponentFit {
    pub fn evaluate(
        name: impl Into<String>,
        samples: Vec<(f64, f64)>,
        expected: Option<(f64, f64)>,
    ) -> Result<Self> {
        let (exponent, fit_residual) = crate::convergence::fit_time_exponent(&samples)?;
        let pass = expected.map_or(true, |(lo, hi)| exponent >= lo && exponent <= hi);
        Ok(Self { name: name.into(), samples, exponent, fit_residual, expected, pass })
    }
}

/// One experiment's outcome: error curves, fitted rates/exponents, and the
/// aggregate verdict; carries the config hash and tool version for
/// reproducibility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub experiment_id: String,
    pub tool_version: String,
    pub config_hash: String,
    pub rates: Vec<FittedRate>,
    pub exponents: Vec<TimeExponentFit>,
    pub metadata: BTreeMap<String, String>,
    pub verdict: bool,
}

impl ConvergenceReport {
    pub fn new(experiment_id: impl Into<String>, config_hash: impl Into<String>) -> Self {
        Self {
            experiment_id: experiment_id.into(),
            tool_version: TOOL_VERSION.to_string(),
            config_hash: config_hash.into(),
            rates: Vec::new(),
            exponents: Vec::new(),
            metadata: BTreeMap::new(),
            verdict: true,
        }
    }

    pub fn push_rate(&mut self, rate: FittedRate) {
        self.verdict &= rate.pass;
        self.rates.push(rate);
    }

    pub fn push_exponent(&mut self, exponent: TimeExponentFit) {
        self.verdict &= exponent.pass;
        self.exponents.push(exponent);
    }

    pub fn write_json(&self, w: &mut impl Write) -> Result<()> {
        serde_json::to_writer_pretty(&mut *w, self)
            .map_err(|e| crate::error::Error::Parse(e.to_string()))?;
        writeln!(w)?;
        Ok(())
    }

    /// CSV table: one row per (curve, sample).
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "curve,level_or_index,abscissa,error,fitted,pass")?;
        for r in &self.rates {
            for s in &r.samples {
                writeln!(
                    w,
                    "{},{},{:.17e},{:.17e},{:.12},{}",
                    r.name, s.level, s.h, s.error, r.rate, r.pass
                )?;
            }
        }
        for x in &self.exponents {
            for (i, (t, e)) in x.samples.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{:.17e},{:.17e},{:.12},{}",
                    x.name, i, t, e, x.exponent, x.pass
                )?;
            }
        }
        Ok(())
    }

    /// One two-column gnuplot data file per curve, named
    /// `<experiment_id>__<curve>.dat`, in `dir`.
    pub fn write_gnuplot(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for r in &self.rates {
            let path = dir.join(format!("{}__{}.dat", self.experiment_id, sanitize(&r.name)));
            let mut f = std::fs::File::create(path)?;
            writeln!(f, "# h error (fitted rate {:.6})", r.rate)?;
            for s in &r.samples {
                writeln!(f, "{:.17e} {:.17e}", s.h, s.error)?;
            }
        }
        for x in &self.exponents {
            let path = dir.join(format!("{}__{}.dat", self.experiment_id, sanitize(&x.name)));
            let mut f = std::fs::File::create(path)?;
            writeln!(f, "# t error (fitted exponent {:.6})", x.exponent)?;
            for (t, e) in &x.samples {
                writeln!(f, "{:.17e} {:.17e}", t, e)?;
            }
        }
        Ok(())
    }

    /// Write `<id>.json`, `<id>.csv`, and the gnuplot files into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut j = std::fs::File::create(dir.join(format!("{}.json", self.experiment_id)))?;
        self.write_json(&mut j)?;
        let mut c = std::fs::File::create(dir.join(format!("{}.csv", self.experiment_id)))?;
        self.write_csv(&mut c)?;
        self.write_gnuplot(dir)?;
        Ok(())
    }
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_alphanumeric() { c } else { '_' }).collect()
}

/// Hex SHA-256 of a byte string; reports embed this hash of the canonical
/// config text.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}
