use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rating_debias::{DelimitedFormat, DuplicatePolicy, IngestOptions, RatingScale, TruthFormat};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "debias", version, about = "Remove per-user bias from rating graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for user bias and item true rating.
    Solve(SolveArgs),
    /// Compare mean rating and debiased ratings against trusted scores.
    Eval(EvalArgs),
    /// Generate a planted-bias instance.
    Synth(SynthArgs),
    /// Cross-check the iterative solution against the dense direct solve.
    OracleCheck(OracleArgs),
    /// Count items per rating-count bin.
    Bins(BinsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    /// `user::item::rating::timestamp`, 1..5 stars.
    Movielens,
    /// `user_id,item_id,weight` with header, weights already in [0, 1].
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Duplicates {
    Strict,
    KeepFirst,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RatingsArgs {
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long, value_enum, default_value = "movielens")]
    pub format: InputFormat,
    /// Field delimiter; defaults to the format's own.
    #[arg(long)]
    pub delimiter: Option<String>,
    /// Zero-based `user,item,rating` column indices.
    #[arg(long, value_parser = parse_columns)]
    pub columns: Option<(usize, usize, usize)>,
    /// Skip the first line; implied by `--format csv`.
    #[arg(long)]
    pub header: bool,
    /// Raw rating range `lo:hi`; defaults to 1:5 for movielens, 0:1 for csv.
    #[arg(long)]
    pub scale: Option<RatingScale>,
    #[arg(long, value_enum, default_value = "strict")]
    pub duplicates: Duplicates,
}

impl RatingsArgs {
    pub fn ingest_options(&self) -> IngestOptions {
        let (mut format, default_scale) = match self.format {
            InputFormat::Movielens => (DelimitedFormat::movielens(), RatingScale::stars()),
            InputFormat::Csv => (DelimitedFormat::canonical_csv(), RatingScale::unit()),
        };
        if let Some(d) = &self.delimiter {
            format.delimiter = d.clone();
        }
        if let Some((u, i, r)) = self.columns {
            format.user_col = u;
            format.item_col = i;
            format.rating_col = r;
        }
        format.has_header |= self.header;
        IngestOptions {
            format,
            scale: self.scale.unwrap_or(default_scale),
            duplicates: match self.duplicates {
                Duplicates::Strict => DuplicatePolicy::Strict,
                Duplicates::KeepFirst => DuplicatePolicy::KeepFirst,
            },
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    /// Damping factor in (0, 1).
    #[arg(long, default_value_t = 0.99)]
    pub alpha: f64,
    /// `user_id,alpha` lines; each override must not exceed --alpha.
    #[arg(long)]
    pub alpha_overrides: Option<PathBuf>,
    /// L1 threshold on the bias change.
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    /// Defaults to ceil(log_{1/alpha}(2 / epsilon)).
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// `zeros`, `const:<c>`, or a `user_id,bias` file.
    #[arg(long, default_value = "zeros")]
    pub seed_bias: String,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    pub input: RatingsArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Also run the dense direct solve and report the gap.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: RatingsArgs,
    /// `item,score` lines.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value = "0:1")]
    pub truth_scale: RatingScale,
    #[arg(long, default_value = ",")]
    pub truth_delimiter: String,
    #[arg(long)]
    pub truth_header: bool,
    /// Comma-separated damping factors, one solve each.
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.5,0.99")]
    pub alphas: Vec<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long)]
    pub out: PathBuf,
}

impl EvalArgs {
    pub fn truth_format(&self) -> TruthFormat {
        TruthFormat {
            delimiter: self.truth_delimiter.clone(),
            has_header: self.truth_header,
            ..TruthFormat::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    pub users: usize,
    #[arg(long, default_value_t = 50)]
    pub items: usize,
    #[arg(long, default_value_t = 0.3)]
    pub density: f64,
    #[arg(long, default_value = "-0.1:0.1", value_parser = parse_range, allow_hyphen_values = true)]
    pub bias_range: (f64, f64),
    #[arg(long, default_value = "0.2:0.8", value_parser = parse_range)]
    pub quality_range: (f64, f64),
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub max_retries: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OracleArgs {
    #[command(flatten)]
    pub input: RatingsArgs,
    #[arg(long, default_value_t = 0.99)]
    pub alpha: f64,
    /// Allowed L-inf gap between the two solutions.
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BinsArgs {
    #[command(flatten)]
    pub input: RatingsArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_columns(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [u, i, r] = parts.as_slice() else {
        return Err(format!("expected user,item,rating indices, got {s:?}"));
    };
    let num = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((num(u)?, num(i)?, num(r)?))
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((num(lo)?, num(hi)?))
}
