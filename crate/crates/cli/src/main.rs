//! `endodepth`: seeded, reproducible runs of every stage of the workbench.
//!
//! Exit status is 0 on success, 1 when a stage fails (the message names the
//! module on one line), and 2 for usage errors.

mod commands;
mod runlog;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "endodepth",
    version,
    about = "Monocular endoscopic depth estimation workbench"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Common {
    /// Directory receiving every output, including run-log.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Run on one thread instead of the worker pool. Outputs are identical.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
#[group(required = true, multiple = false)]
pub struct TranslatorChoice {
    /// Translator checkpoint applied before depth estimation.
    #[arg(long)]
    pub translator: Option<PathBuf>,
    /// Feed images to the depth network untranslated.
    #[arg(long)]
    pub no_lst: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LossArg {
    Me,
    Mae,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DepthArg {
    None,
    True,
    Estimated,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a dataset of procedural scenes with a manifest.
    Gen(GenArgs),
    /// Render one view of one scene.
    Render(RenderArgs),
    /// Shape-from-shading reconstruction of one manifest entry.
    Sfs(SfsArgs),
    /// Train the Lambertian surface translator pair on unpaired images.
    TrainLst(TrainLstArgs),
    /// Train the depth network on paired Lambertian images.
    TrainDepth(TrainDepthArgs),
    /// Estimate depth for every image of a manifest domain.
    Estimate(EstimateArgs),
    /// Fit the affine depth correction on point-depth samples.
    Calibrate(CalibrateArgs),
    /// Score estimates against traced ground truth.
    Evaluate(EvaluateArgs),
    /// Run the three-arm ablation.
    Ablate(AblateArgs),
    /// Location classification with and without a depth channel.
    Classify(ClassifyArgs),
    /// Check the run-log contract end to end.
    SelfTest(SelfTestArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GenArgs {
    #[arg(long)]
    pub scenes: usize,
    #[arg(long)]
    pub poses: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    #[arg(long, default_value_t = 90.0)]
    pub fov: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RenderArgs {
    /// 0 straight-wide, 1 curved-narrow, 2 terminal-pouch.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..3))]
    pub family: u8,
    #[arg(long)]
    pub scene_seed: u64,
    /// Seed of the camera pose.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    #[arg(long, default_value_t = 90.0)]
    pub fov: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SfsArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Position of the entry in the manifest.
    #[arg(long)]
    pub index: usize,
    /// Surface reflectance; defaults to the scene's when recorded.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub smoothness: f64,
    #[arg(long, default_value_t = 4000)]
    pub max_iterations: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TrainLstArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Desk-scale defaults instead of the published recipe.
    #[arg(long)]
    pub desk: bool,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub minibatch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub cycle_weight: Option<f64>,
    #[arg(long)]
    pub identity_weight: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TrainDepthArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub desk: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub minibatch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum, default_value_t = LossArg::Me)]
    pub loss: LossArg,
    /// Weight of the L1 term in the composite loss.
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub depth_net: PathBuf,
    #[command(flatten)]
    pub lst: TranslatorChoice,
    /// Estimate the Lambertian entries instead of the real-like ones.
    #[arg(long)]
    pub lambertian: bool,
    /// Correction file from `calibrate`; corrected maps are written too.
    #[arg(long)]
    pub correction: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub depth_net: PathBuf,
    #[command(flatten)]
    pub lst: TranslatorChoice,
    #[arg(long, default_value_t = 4)]
    pub points_per_view: usize,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub depth_net: PathBuf,
    #[command(flatten)]
    pub lst: TranslatorChoice,
    /// Correction file from `calibrate`; the published values otherwise.
    #[arg(long)]
    pub correction: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub points_per_view: usize,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct AblateArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub desk: bool,
    #[arg(long)]
    pub translator: Option<PathBuf>,
    #[arg(long)]
    pub depth_me: Option<PathBuf>,
    #[arg(long)]
    pub depth_mae: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = DepthArg::None)]
    pub depth: DepthArg,
    /// Needed with `--depth estimated`.
    #[arg(long)]
    pub depth_net: Option<PathBuf>,
    #[arg(long)]
    pub translator: Option<PathBuf>,
    #[arg(long)]
    pub shuffle_labels: bool,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SelfTestArgs {
    #[command(flatten)]
    pub common: Common,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(1)
        }
    }
}
