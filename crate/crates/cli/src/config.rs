use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use dyadic_core::StudyKind;

/// Fully resolved run configuration, echoed verbatim into every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    /// Depth per variable for bi-parameter runs.
    #[serde(rename = "N2")]
    pub n2: usize,
    pub imax: usize,
    pub jmax: usize,
    pub kmax: usize,
    pub lmax: usize,
    /// Cap on `i, j` per variable in the bi-parameter identity suite.
    pub biparam_max: usize,
    pub biparam: bool,
    pub delta: f64,
    pub trials: usize,
    pub samples: usize,
    pub seed: u64,
    pub kinds: Vec<String>,
    pub ps: Vec<f64>,
    pub fs_family: usize,
    pub tol: f64,
    pub tol_algebra: f64,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: String::new(),
            d: 1,
            n: 6,
            n2: 3,
            imax: 4,
            jmax: 4,
            kmax: 4,
            lmax: 2,
            biparam_max: 2,
            biparam: false,
            delta: 1.0,
            trials: 100,
            samples: 10_000,
            seed: 7,
            kinds: ["Bk", "Sk", "P", "PP", "PP1", "BPk", "PBl"].map(String::from).to_vec(),
            ps: vec![1.25, 1.5, 2.0, 3.0],
            fs_family: 4,
            tol: 1e-9,
            tol_algebra: 1e-11,
            out: None,
            format: Format::Json,
            threads: None,
        }
    }
}

/// Flags shared by every subcommand; each one overrides the config file.
#[derive(Args, Debug, Default, Clone)]
pub struct Overrides {
    /// JSON config file; flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long = "N2")]
    pub n2: Option<usize>,
    #[arg(long)]
    pub imax: Option<usize>,
    #[arg(long)]
    pub jmax: Option<usize>,
    /// Bi-parameter kinds cap `k` and `l` at `N2 - 1`.
    #[arg(long)]
    pub kmax: Option<usize>,
    #[arg(long)]
    pub lmax: Option<usize>,
    #[arg(long)]
    pub biparam_max: Option<usize>,
    /// Also run the bi-parameter identity suite.
    #[arg(long)]
    pub biparam: bool,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Study kinds for norm-study (Bk, Sk, P, Bkl, PP, PP1, BPk, PBl).
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<String>>,
    /// Exponents for jn-check.
    #[arg(long, value_delimiter = ',')]
    pub ps: Option<Vec<f64>>,
    #[arg(long)]
    pub fs_family: Option<usize>,
    /// Residual tolerance for decomposition identities.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Tolerance for the algebraic self-test.
    #[arg(long)]
    pub tol_algebra: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub threads: Option<usize>,
}

macro_rules! apply {
    ($cfg:ident, $o:ident, $($f:ident),*) => {
        $(if let Some(v) = $o.$f.clone() { $cfg.$f = v; })*
    };
}

impl RunConfig {
    pub fn resolve(command: &str, o: &Overrides) -> Result<RunConfig, String> {
        let mut cfg = match &o.config {
            Some(path) => load(path)?,
            None => RunConfig::default(),
        };
        cfg.command = command.to_string();
        apply!(
            cfg,
            o,
            d,
            n,
            n2,
            imax,
            jmax,
            kmax,
            lmax,
            biparam_max,
            delta,
            trials,
            samples,
            seed,
            kinds,
            ps,
            fs_family,
            tol,
            tol_algebra,
            format
        );
        cfg.biparam |= o.biparam;
        if o.out.is_some() {
            cfg.out = o.out.clone();
        }
        if o.threads.is_some() {
            cfg.threads = o.threads;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        let need = |ok: bool, msg: String| if ok { Ok(()) } else { Err(msg) };
        need((1..=3).contains(&self.d), format!("d must be 1, 2 or 3, got {}", self.d))?;
        need(self.n >= 1 && self.d * self.n <= 16, format!("N = {} out of range for d = {}", self.n, self.d))?;
        need(self.n2 >= 1 && self.d * self.n2 <= 8, format!("N2 = {} out of range for d = {}", self.n2, self.d))?;
        need(self.trials >= 1, "trials must be positive".into())?;
        need(self.delta > 0.0 && self.delta <= 1.0, format!("delta {} outside (0, 1]", self.delta))?;
        need(self.tol > 0.0 && self.tol_algebra > 0.0, "tolerances must be positive".into())?;
        need(self.threads != Some(0), "threads must be positive".into())?;
        match self.command.as_str() {
            "verify-decomp" | "bound-study" => {
                need(self.imax < self.n && self.jmax < self.n, format!("imax, jmax must be below N = {}", self.n))?;
            }
            "norm-study" => {
                need(!self.kinds.is_empty(), "no study kinds".into())?;
                for k in &self.kinds {
                    let kind = StudyKind::parse(k).map_err(|e| e.to_string())?;
                    if !kind.is_biparam() {
                        need(self.kmax < self.n, format!("kmax {} must be below N = {}", self.kmax, self.n))?;
                    }
                }
            }
            "jn-check" => {
                need(!self.ps.is_empty(), "no exponents".into())?;
                need(self.ps.iter().all(|&p| p >= 1.0 && p.is_finite()), "exponents must be finite and >= 1".into())?;
                need(self.fs_family >= 1, "fs_family must be positive".into())?;
            }
            "mc-demo" => {
                need(self.d == 1, "mc-demo is one-dimensional".into())?;
                need(self.n <= 6, "mc-demo needs N <= 6 for dense matrices".into())?;
                need(self.samples >= 2, "mc-demo needs at least two samples".into())?;
            }
            _ => {}
        }
        Ok(())
    }
}

fn load(path: &Path) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}
