use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use unmix_core::solver::{InitStrategy, InnerStop, Loss, NormMode, SolverConfig, Sparsity};
use unmix_core::synth::OutlierKind;

#[derive(Debug, Parser)]
#[command(name = "unmix", version, about = "Robust sparse spectral unmixing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic blurred-Voronoi scene with known truth.
    Synth(SynthArgs),
    /// Factor a cube into endmembers and abundances.
    #[command(after_help = defaults_table())]
    Unmix(UnmixArgs),
    /// Score an estimate against ground truth.
    Eval(EvalArgs),
    /// Unmix and evaluate over a geometric lambda grid.
    #[command(after_help = defaults_table())]
    Sweep(SweepArgs),
    /// Time solver iterations for the Frobenius and l2,1 losses.
    Bench(BenchArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

fn tag<T: FromStr<Err = unmix_core::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: unmix_core::Error| e.to_string())
}

/// Solver defaults as printed under `--help`.
pub fn defaults_table() -> String {
    let mut out = String::from("Solver defaults (k has none and must be given):\n");
    for (key, value) in SolverConfig::new(0).to_pairs() {
        if key != "k" {
            out.push_str(&format!("  {key:<11} {value}\n"));
        }
    }
    out
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    #[arg(long)]
    pub channels: usize,
    #[arg(long)]
    pub endmembers: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub outlier_fraction: f64,
    #[arg(long, value_parser = tag::<OutlierKind>, default_value = "heavy_noise")]
    pub outlier_kind: OutlierKind,
    #[arg(long, default_value_t = 2)]
    pub blur_radius: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Solver flags; anything left unset keeps the `SolverConfig` default.
#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_parser = tag::<Loss>)]
    pub loss: Option<Loss>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, value_parser = tag::<Sparsity>)]
    pub sparsity: Option<Sparsity>,
    #[arg(long)]
    pub fixed_p: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub eps_guard: Option<f64>,
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub inner_tol: Option<f64>,
    #[arg(long)]
    pub outer_tol: Option<f64>,
    #[arg(long)]
    pub max_inner: Option<usize>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = tag::<NormMode>)]
    pub norm: Option<NormMode>,
    #[arg(long, value_parser = tag::<InitStrategy>)]
    pub init: Option<InitStrategy>,
    #[arg(long, value_parser = tag::<InnerStop>)]
    pub inner_stop: Option<InnerStop>,
}

impl SolverArgs {
    pub fn to_config(&self) -> SolverConfig {
        let mut c = SolverConfig::new(self.k);
        macro_rules! take {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = self.$field { c.$target = v; })*
            };
        }
        take!(
            lambda => lambda, loss => loss, p => p, sparsity => sparsity, fixed_p => fixed_p,
            sigma => sigma, xi => xi, eps_guard => eps_guard, phi => phi, q => q,
            inner_tol => inner_tol, outer_tol => outer_tol, max_inner => max_inner,
            max_outer => max_outer, seed => seed, norm => norm_mode, init => init,
            inner_stop => inner_stop,
        );
        c
    }
}

#[derive(Debug, Args)]
pub struct UnmixArgs {
    /// HSC1 cube to factor.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory holding the true M.csv and A.csv.
    #[arg(long)]
    pub truth: PathBuf,
    /// Directory holding the estimated M.csv and A.csv.
    #[arg(long)]
    pub est: PathBuf,
    /// Report file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also render the per-pixel abundance error (needs the truth cube.hsc
    /// for the image size).
    #[arg(long)]
    pub error_ppm: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Directory holding the true M.csv and A.csv.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub lambda_min: f64,
    #[arg(long)]
    pub lambda_max: f64,
    #[arg(long)]
    pub steps: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Summary CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Square scene side lengths; N = side^2.
    #[arg(long, value_delimiter = ',', default_values_t = [25usize, 50, 100])]
    pub sides: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub channels: usize,
    #[arg(long, default_value_t = 4)]
    pub endmembers: usize,
    #[arg(long, default_value_t = 20)]
    pub iterations: usize,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Timing CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded location.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
