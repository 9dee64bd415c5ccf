use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use expnls_core::grid::MIN_NODES;

use crate::Failure;

/// Values shared by every subcommand, from flags or a config file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Frequency ω > 0.
    #[arg(long, global = true)]
    pub omega: Option<f64>,
    /// Subtracted quadratic term, 0 or 1.
    #[arg(long, global = true)]
    pub mu: Option<u8>,
    /// Outer radius; defaults to 30/√ω.
    #[arg(long, global = true)]
    #[serde(alias = "r_max")]
    pub rmax: Option<f64>,
    /// Grid nodes.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long = "t-end", global = true)]
    #[serde(alias = "t-end")]
    pub t_end: Option<f64>,
    /// Comma-separated rescaling factors.
    #[arg(long, global = true, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Reuse a profile JSON written by `profile` instead of solving again.
    #[arg(long, global = true)]
    pub profile: Option<PathBuf>,
    /// Flat TOML file with the same keys; flags win.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl Settings {
    pub fn load_file(path: &Path) -> Result<Settings, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
    }

    /// Fills every unset field from `base`.
    pub fn over(self, base: Settings) -> Settings {
        Settings {
            omega: self.omega.or(base.omega),
            mu: self.mu.or(base.mu),
            rmax: self.rmax.or(base.rmax),
            n: self.n.or(base.n),
            dt: self.dt.or(base.dt),
            t_end: self.t_end.or(base.t_end),
            lambdas: self.lambdas.or(base.lambdas),
            out: self.out.or(base.out),
            profile: self.profile.or(base.profile),
            config: self.config,
        }
    }

    /// Flags merged over the config file, when one is named.
    pub fn resolve(self) -> Result<Settings, Failure> {
        match self.config.clone() {
            Some(path) => Ok(self.over(Settings::load_file(&path)?)),
            None => Ok(self),
        }
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let bad = |msg: String| Err(Failure::Usage(msg));
        if let Some(w) = self.omega {
            if !(w.is_finite() && w > 0.0) {
                return bad(format!("--omega must be positive, got {w}"));
            }
        }
        if let Some(mu) = self.mu {
            if mu > 1 {
                return bad(format!("--mu must be 0 or 1, got {mu}"));
            }
        }
        if let Some(r) = self.rmax {
            if !(r.is_finite() && r > 0.0) {
                return bad(format!("--rmax must be positive, got {r}"));
            }
        }
        if let Some(n) = self.n {
            if n < MIN_NODES {
                return bad(format!("--n must be at least {MIN_NODES}, got {n}"));
            }
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return bad(format!("--dt must be positive, got {dt}"));
            }
        }
        if let Some(t) = self.t_end {
            if !(t.is_finite() && t >= 0.0) {
                return bad(format!("--t-end must be non-negative, got {t}"));
            }
        }
        if let Some(ls) = &self.lambdas {
            if ls.is_empty() {
                return bad("--lambdas is empty".into());
            }
            if let Some(l) = ls.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
                return bad(format!("--lambdas entries must be positive, got {l}"));
            }
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}
