//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys:
//!
//! | key | meaning |
//! |-----|---------|
//! | `seed` | required; seeds every random stream |
//! | `kappa`, `alpha`, `sigma` | asset parameters (all three, or none) |
//! | `prices_csv` | daily prices to fit the asset on instead |
//! | `x0` | opening asset price; defaults to the last fitted price |
//! | `instance` | `sport` or `compact` |
//! | `A`, `B`, `b`, `c`, `sigma_tilde`, `s` | monthly demand parameters (`s` optional) |
//! | `ops_csv` | monthly operations data to calibrate demand on instead |
//! | `demand_init` | starting instance for `ops_csv` calibration (default `sport`) |
//! | `m` | target mean: an amount, `nvmax`, or `<fraction>*nvmax` |
//! | `n_outer`, `n_inner`, `n_terminal`, `grid_steps` | simulation sizes |
//! | `n_dominance` | samples per measure in the dominance test |
//! | `calib_restarts`, `calib_max_iters`, `calib_samples` | demand calibration effort |
//! | `output_dir` | where output files go (default `.`) |
//!
//! Exactly one asset source and exactly one demand source must be given.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use sha2::{Digest, Sha256};

const KEYS: &[&str] = &[
    "seed",
    "kappa",
    "alpha",
    "sigma",
    "prices_csv",
    "x0",
    "instance",
    "A",
    "B",
    "b",
    "c",
    "sigma_tilde",
    "s",
    "ops_csv",
    "demand_init",
    "m",
    "n_outer",
    "n_inner",
    "n_terminal",
    "grid_steps",
    "n_dominance",
    "calib_restarts",
    "calib_max_iters",
    "calib_samples",
    "output_dir",
];

#[derive(Debug, Clone, PartialEq)]
pub enum AssetSource {
    Literal { kappa: f64, alpha: f64, sigma: f64 },
    PricesCsv(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DemandSource {
    Instance(String),
    Literal { a: f64, b_coef: f64, b: f64, c: f64, sigma_tilde: f64, s: f64 },
    OpsCsv { path: PathBuf, init: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Amount(f64),
    /// Fraction of the newsvendor's maximum expected profit.
    NvMax(f64),
}

impl std::str::FromStr for Target {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "nvmax" {
            return Ok(Target::NvMax(1.0));
        }
        if let Some(frac) = s.strip_suffix("*nvmax") {
            let f: f64 = frac.trim().parse().with_context(|| format!("bad fraction in m = {s}"))?;
            if !(f > 0.0 && f <= 1.0) {
                bail!("fraction of nvmax must lie in (0, 1], got {f}");
            }
            return Ok(Target::NvMax(f));
        }
        let v: f64 = s.parse().with_context(|| format!("m must be a number, nvmax or <f>*nvmax, got {s}"))?;
        if !(v.is_finite() && v > 0.0) {
            bail!("m must be positive, got {v}");
        }
        Ok(Target::Amount(v))
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub asset: Option<AssetSource>,
    pub x0: Option<f64>,
    pub demand: Option<DemandSource>,
    pub m: Option<Target>,
    pub n_outer: usize,
    pub n_inner: usize,
    pub n_terminal: usize,
    pub grid_steps: usize,
    pub n_dominance: usize,
    pub calib_restarts: usize,
    pub calib_max_iters: u64,
    pub calib_samples: usize,
    pub output_dir: PathBuf,
    /// Canonical `key=value` lines, sorted, used for hashing.
    canonical: String,
}

fn parse_num<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    map.get(key)
        .map(|v| v.parse::<T>().map_err(|e| anyhow!("invalid value for {key}: {v} ({e})")))
        .transpose()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parse config text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", lineno + 1))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                bail!("line {}: unknown key {k}", lineno + 1);
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                bail!("line {}: duplicate key {k}", lineno + 1);
            }
        }
        let canonical: String = map.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        let seed = parse_num::<u64>(&map, "seed")?.ok_or_else(|| anyhow!("config must set seed"))?;
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };

        let literal_asset = ["kappa", "alpha", "sigma"].iter().filter(|k| map.contains_key(**k)).count();
        let asset = match (literal_asset, map.get("prices_csv")) {
            (0, None) => None,
            (0, Some(p)) => Some(AssetSource::PricesCsv(resolve(p))),
            (3, None) => Some(AssetSource::Literal {
                kappa: parse_num(&map, "kappa")?.unwrap(),
                alpha: parse_num(&map, "alpha")?.unwrap(),
                sigma: parse_num(&map, "sigma")?.unwrap(),
            }),
            (3, Some(_)) => bail!("give either kappa/alpha/sigma or prices_csv, not both"),
            _ => bail!("kappa, alpha and sigma must be given together"),
        };

        let literal_keys = ["A", "B", "b", "c", "sigma_tilde"];
        let literal_demand = literal_keys.iter().filter(|k| map.contains_key(**k)).count();
        let sources = [map.contains_key("instance"), literal_demand > 0, map.contains_key("ops_csv")]
            .iter()
            .filter(|x| **x)
            .count();
        if sources > 1 {
            bail!("give exactly one demand source: instance, literal parameters or ops_csv");
        }
        if map.contains_key("s") && literal_demand == 0 {
            bail!("s only applies to literal demand parameters");
        }
        if map.contains_key("demand_init") && !map.contains_key("ops_csv") {
            bail!("demand_init only applies with ops_csv");
        }
        let demand = if let Some(name) = map.get("instance") {
            Some(DemandSource::Instance(name.clone()))
        } else if literal_demand == literal_keys.len() {
            Some(DemandSource::Literal {
                a: parse_num(&map, "A")?.unwrap(),
                b_coef: parse_num(&map, "B")?.unwrap(),
                b: parse_num(&map, "b")?.unwrap(),
                c: parse_num(&map, "c")?.unwrap(),
                sigma_tilde: parse_num(&map, "sigma_tilde")?.unwrap(),
                s: parse_num(&map, "s")?.unwrap_or(0.0),
            })
        } else if literal_demand > 0 {
            bail!("literal demand needs all of A, B, b, c, sigma_tilde");
        } else {
            map.get("ops_csv").map(|p| DemandSource::OpsCsv {
                path: resolve(p),
                init: map.get("demand_init").cloned().unwrap_or_else(|| "sport".into()),
            })
        };

        let positive = |key: &str, v: usize| -> Result<usize> {
            if v == 0 {
                bail!("{key} must be positive");
            }
            Ok(v)
        };
        Ok(Self {
            seed,
            asset,
            x0: parse_num(&map, "x0")?,
            demand,
            m: map.get("m").map(|v| v.parse()).transpose()?,
            n_outer: positive("n_outer", parse_num(&map, "n_outer")?.unwrap_or(2000))?,
            n_inner: positive("n_inner", parse_num(&map, "n_inner")?.unwrap_or(500))?,
            n_terminal: positive("n_terminal", parse_num(&map, "n_terminal")?.unwrap_or(100_000))?,
            grid_steps: positive("grid_steps", parse_num(&map, "grid_steps")?.unwrap_or(21))?,
            n_dominance: positive("n_dominance", parse_num(&map, "n_dominance")?.unwrap_or(100_000))?,
            calib_restarts: positive("calib_restarts", parse_num(&map, "calib_restarts")?.unwrap_or(8))?,
            calib_max_iters: parse_num(&map, "calib_max_iters")?.unwrap_or(600),
            calib_samples: positive("calib_samples", parse_num(&map, "calib_samples")?.unwrap_or(10_000))?,
            output_dir: map.get("output_dir").map(|p| resolve(p)).unwrap_or_else(|| base.to_path_buf()),
            canonical,
        })
    }

    /// SHA-256 of the canonical config together with the command arguments.
    pub fn hash_with(&self, command: &str) -> String {
        let mut h = Sha256::new();
        h.update(self.canonical.as_bytes());
        h.update(b"--\n");
        h.update(command.as_bytes());
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Path::new("/tmp"))
    }

    #[test]
    fn minimal_config() {
        let c = parse("seed = 7\ninstance = sport\nkappa=0.5\nalpha=4\nsigma=0.3\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.n_outer, 2000);
        assert_eq!(c.demand, Some(DemandSource::Instance("sport".into())));
        assert_eq!(c.output_dir, PathBuf::from("/tmp"));
    }

    #[test]
    fn rejects_unknown_and_missing_keys() {
        assert!(parse("seed = 1\nfoo = 2\n").is_err());
        assert!(parse("instance = sport\n").is_err());
        assert!(parse("seed = 1\nseed = 2\n").is_err());
        assert!(parse("seed = x\n").is_err());
    }

    #[test]
    fn one_source_per_group() {
        assert!(parse("seed=1\nkappa=1\nalpha=1\nsigma=1\nprices_csv=p.csv\n").is_err());
        assert!(parse("seed=1\nkappa=1\n").is_err());
        assert!(parse("seed=1\ninstance=sport\nops_csv=o.csv\n").is_err());
        assert!(parse("seed=1\nA=1\nB=1\nb=1\nc=1\n").is_err());
        let c = parse("seed=1\nops_csv=o.csv\n").unwrap();
        assert_eq!(c.demand, Some(DemandSource::OpsCsv { path: "/tmp/o.csv".into(), init: "sport".into() }));
    }

    #[test]
    fn targets() {
        assert_eq!("nvmax".parse::<Target>().unwrap(), Target::NvMax(1.0));
        assert_eq!("0.95*nvmax".parse::<Target>().unwrap(), Target::NvMax(0.95));
        assert_eq!("1e8".parse::<Target>().unwrap(), Target::Amount(1e8));
        assert!("-3".parse::<Target>().is_err());
        assert!("1.5*nvmax".parse::<Target>().is_err());
    }

    #[test]
    fn hash_ignores_layout_but_not_values() {
        let a = parse("seed=1\ninstance=sport\n").unwrap();
        let b = parse("# comment\ninstance = sport\n\nseed = 1\n").unwrap();
        let c = parse("seed=2\ninstance=sport\n").unwrap();
        assert_eq!(a.hash_with("x"), b.hash_with("x"));
        assert_ne!(a.hash_with("x"), c.hash_with("x"));
        assert_ne!(a.hash_with("x"), a.hash_with("y"));
    }
}
