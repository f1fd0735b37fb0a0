//! Dataset specs: `synth:<kind>:key=value,...` or a libsvm file path.

use crate::config::{CliError, CliResult};
use std::collections::BTreeMap;
use vropt_core::dataio::{parse_libsvm, synth_classification, synth_ridge, synth_sparse_regression};
use vropt_core::losses::LossKind;
use vropt_core::Dataset;

#[derive(Clone, Debug, PartialEq)]
pub enum DataSpec {
    Ridge { n: usize, d: usize, kappa: f64, seed: Option<u64> },
    Classification { n: usize, d: usize, density: f64, seed: Option<u64> },
    SparseRegression { n: usize, d: usize, density: f64, seed: Option<u64> },
    File(String),
}

/// A loaded dataset with the defaults its source implies.
#[derive(Clone, Debug)]
pub struct LoadedData {
    pub ds: Dataset,
    /// Regularization weight suggested by the generator.
    pub lambda: Option<f64>,
    pub loss: LossKind,
}

fn params(body: &str) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for item in body.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let Some((k, v)) = item.split_once('=') else {
            return Err(CliError::Config(format!("data parameter {item:?} is not key=value")));
        };
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn take<T: std::str::FromStr>(p: &mut BTreeMap<String, String>, key: &str, default: Option<T>) -> CliResult<T> {
    match p.remove(key) {
        Some(v) => v.parse().map_err(|_| CliError::Config(format!("data parameter {key}={v:?} is invalid"))),
        None => default.ok_or_else(|| CliError::Config(format!("data spec needs {key}="))),
    }
}

impl DataSpec {
    pub fn parse(spec: &str) -> CliResult<Self> {
        let Some(rest) = spec.strip_prefix("synth:") else {
            let path = spec.strip_prefix("libsvm:").unwrap_or(spec);
            if path.is_empty() {
                return Err(CliError::Config("empty data path".into()));
            }
            return Ok(Self::File(path.to_string()));
        };
        let (kind, body) = rest.split_once(':').unwrap_or((rest, ""));
        let mut p = params(body)?;
        let n = take(&mut p, "n", None)?;
        let d = take(&mut p, "d", None)?;
        let seed = p.remove("seed").map(|s| s.parse()).transpose().map_err(|_| CliError::Config("data seed is invalid".into()))?;
        let out = match kind {
            "ridge" => Self::Ridge { n, d, kappa: take(&mut p, "kappa", Some(100.0))?, seed },
            "classification" | "logistic" => Self::Classification { n, d, density: take(&mut p, "density", Some(1.0))?, seed },
            "sparse" => Self::SparseRegression { n, d, density: take(&mut p, "density", Some(0.05))?, seed },
            _ => return Err(CliError::Config(format!("unknown synthetic kind {kind:?}"))),
        };
        if let Some(k) = p.keys().next() {
            return Err(CliError::Config(format!("unknown data parameter {k:?}")));
        }
        if n == 0 || d == 0 {
            return Err(CliError::Config("data needs n >= 1 and d >= 1".into()));
        }
        Ok(out)
    }

    /// Generates or reads the data; synthetic sets without `seed=` use `run_seed`.
    pub fn load(&self, run_seed: u64) -> CliResult<LoadedData> {
        Ok(match self {
            Self::Ridge { n, d, kappa, seed } => {
                let (ds, lambda) = synth_ridge(*n, *d, *kappa, seed.unwrap_or(run_seed))?;
                LoadedData { ds, lambda: Some(lambda), loss: LossKind::Quadratic }
            }
            Self::Classification { n, d, density, seed } => LoadedData {
                ds: synth_classification(*n, *d, *density, seed.unwrap_or(run_seed))?,
                lambda: None,
                loss: LossKind::Logistic,
            },
            Self::SparseRegression { n, d, density, seed } => LoadedData {
                ds: synth_sparse_regression(*n, *d, *density, seed.unwrap_or(run_seed))?,
                lambda: None,
                loss: LossKind::Quadratic,
            },
            Self::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {path}: {e}")))?;
                LoadedData { ds: parse_libsvm(&text, None)?, lambda: None, loss: LossKind::Logistic }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_specs() {
        assert_eq!(
            DataSpec::parse("synth:ridge:n=1000,d=50,kappa=100").unwrap(),
            DataSpec::Ridge { n: 1000, d: 50, kappa: 100.0, seed: None }
        );
        assert!(matches!(DataSpec::parse("synth:sparse:n=10,d=5").unwrap(), DataSpec::SparseRegression { density, .. } if density == 0.05));
        assert!(DataSpec::parse("synth:ridge:n=10").is_err());
        assert!(DataSpec::parse("synth:ridge:n=10,d=2,colour=red").is_err());
        assert!(DataSpec::parse("synth:wave:n=10,d=2").is_err());
        assert_eq!(DataSpec::parse("libsvm:a.txt").unwrap(), DataSpec::File("a.txt".into()));
    }

    #[test]
    fn explicit_seed_fixes_data() {
        let s = DataSpec::parse("synth:ridge:n=20,d=3,seed=4").unwrap();
        assert_eq!(s.load(1).unwrap().ds, s.load(2).unwrap().ds);
    }
}
