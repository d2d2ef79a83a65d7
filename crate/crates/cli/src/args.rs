use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "sparse-sphere", version, about = "Sparse Legendre-wave models of isotropic spherical random fields")]
pub struct Cli {
    /// Worker threads; defaults to $SPARSESPHERE_THREADS, then to the core count.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a sparse field and write it with its grid synthesis.
    Simulate(SimulateArgs),
    /// Empirical power spectrum of a field file, or a Monte Carlo spectrum check.
    Analyze(AnalyzeArgs),
    /// Reduced bispectrum of the local f_NL model.
    Bispectrum(BispectrumArgs),
    /// Greedy sparse reconstruction of a field.
    Reconstruct(ReconstructArgs),
    /// Equirectangular PNG of a grid field.
    Render(RenderArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    WhittleMatern,
    WhittleMaternExact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightsArg {
    Gaussian,
    Rademacher,
    Fnl,
}

/// Spectrum selection shared by several subcommands.
#[derive(Debug, Clone, Args, Serialize)]
pub struct SpectrumArgs {
    #[arg(long, value_enum, default_value = "whittle-matern")]
    pub model: ModelArg,
    #[arg(long, default_value_t = 1.5)]
    pub beta: f64,
    /// Read C_ℓ from an `ell,C_ell` CSV instead of a parametric model.
    #[arg(long)]
    pub spectrum_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub spectrum: SpectrumArgs,
    #[arg(long, default_value_t = 128)]
    pub lmax: usize,
    #[arg(long = "k", short = 'k', default_value_t = 4)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub weights: WeightsArg,
    #[arg(long, default_value_t = 0.0)]
    pub fnl: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Grid band limit; defaults to --lmax.
    #[arg(long)]
    pub grid_lmax: Option<usize>,
    /// Longitudes; defaults to 2·grid_lmax+1.
    #[arg(long)]
    pub nphi: Option<usize>,
    /// Skip the grid synthesis.
    #[arg(long)]
    pub no_grid: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "field")]
    pub prefix: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyzeArgs {
    /// Sparse-field, coefficient or SGF1 grid file. Omit with --mc.
    pub input: Option<PathBuf>,
    /// Monte Carlo mode: mean empirical spectrum over this many simulated fields.
    #[arg(long)]
    pub mc: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub spectrum: SpectrumArgs,
    #[arg(long, default_value_t = 32)]
    pub lmax: usize,
    #[arg(long = "k", short = 'k', default_value_t = 4)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub weights: WeightsArg,
    #[arg(long, default_value_t = 0.0)]
    pub fnl: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BispectrumArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub spectrum: SpectrumArgs,
    #[arg(long, default_value_t = 4)]
    pub lmax: usize,
    #[arg(long, default_value_t = 0.0)]
    pub fnl: f64,
    /// Weight draws for the Monte Carlo estimate; 0 disables it.
    #[arg(long, default_value_t = 100_000)]
    pub mc: usize,
    /// Field realizations for the map-based estimator; 0 disables it.
    #[arg(long, default_value_t = 0)]
    pub map: usize,
    /// Triple `l1,l2,l3`; repeatable. Defaults to every ordered triple with an even, triangle-valid sum.
    #[arg(long = "triple", value_parser = parse_triple)]
    pub triples: Vec<[usize; 3]>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Mono,
    Poly,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReconstructArgs {
    /// Sparse-field, coefficient or SGF1 grid file.
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Multipole for mono mode.
    #[arg(long)]
    pub ell: Option<usize>,
    /// Steps (mono, default 2ℓ+1) or maximum components (poly, default 16).
    #[arg(long = "k", short = 'k')]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    /// Coarse lattice size; defaults to 16(2ℓ+1)² capped at one million.
    #[arg(long)]
    pub m_coarse: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub refine_steps: usize,
    /// Promote warnings (K > 2ℓ+1 in mono mode) to errors.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "recon")]
    pub prefix: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PaletteArg {
    Gray,
    Diverging,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RenderArgs {
    /// SGF1 grid file.
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1024)]
    pub width: u32,
    /// Scale on [−A, A] with A = max |value|.
    #[arg(long)]
    pub symmetric: bool,
    #[arg(long, value_enum, default_value = "gray")]
    pub palette: PaletteArg,
}

fn parse_triple(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected l1,l2,l3, got {s:?}"));
    }
    let mut out = [0usize; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| format!("{p:?} is not a nonnegative integer"))?;
    }
    Ok(out)
}
