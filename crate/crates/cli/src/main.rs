//! `terrafill`: fills holes in terrain point clouds.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 stage failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use terrafill::pipeline::{self, PipelineConfig, Stage, StageInputs};

const EXIT_USAGE: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "terrafill", version, about = "Fill holes in terrain point clouds")]
struct Cli {
    /// Log filter for stderr, e.g. `warn`, `info`, `debug`.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full pipeline: input cloud to merged cloud.
    Run(StageArgs),
    /// Voxel downsampling into downsampled.ply.
    Downsample(StageArgs),
    /// Surface fit of a (downsampled) cloud into surface.txt.
    Fit(StageArgs),
    /// Signed height map of a cloud over a surface into height_before.hf01.
    Decompose(StageArgs),
    /// Hole filling of an HF01 height map into height_after.hf01.
    Inpaint(StageArgs),
    /// New points from a surface and the height maps before and after filling.
    Reconstruct(StageArgs),
    /// Quality measures of a result cloud against a reference cloud.
    Metrics(StageArgs),
}

#[derive(Args, Debug)]
struct StageArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    files: FileArgs,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Primary input: a cloud (.xyz/.txt/.pts/.ply), or an HF01 map for `inpaint`.
    #[arg(long)]
    input: PathBuf,
    /// Directory for all artifacts; created if missing.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<String>,
    /// `key = value` settings; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the surface, height maps, previews and match table.
    #[arg(long)]
    dump_intermediates: bool,
}

#[derive(Args, Debug)]
struct FileArgs {
    /// Surface file (decompose, reconstruct, optional for metrics).
    #[arg(long)]
    surface: Option<PathBuf>,
    /// Height map before filling (reconstruct).
    #[arg(long)]
    before: Option<PathBuf>,
    /// Filled height map (reconstruct).
    #[arg(long)]
    after: Option<PathBuf>,
    /// Cloud whose footprint the fit spans; defaults to the input (fit).
    #[arg(long)]
    footprint_cloud: Option<PathBuf>,
    /// Ground-truth cloud (metrics).
    #[arg(long)]
    reference: Option<PathBuf>,
}

/// Flags named after configuration keys.
#[derive(Args, Debug)]
struct Settings {
    #[arg(long)]
    voxel_ratio: Option<String>,
    #[arg(long)]
    control_m: Option<String>,
    #[arg(long)]
    control_n: Option<String>,
    #[arg(long)]
    degree: Option<String>,
    #[arg(long)]
    fit_iterations: Option<String>,
    /// Smoothness weight, or `auto`.
    #[arg(long)]
    regularization: Option<String>,
    #[arg(long)]
    projection_grid: Option<String>,
    #[arg(long)]
    projection_max_iter: Option<String>,
    #[arg(long)]
    projection_tol: Option<String>,
    /// `bspline` or `plane`.
    #[arg(long)]
    low_frequency: Option<String>,
    #[arg(long)]
    normal_k: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    density_k: Option<String>,
    #[arg(long)]
    r_max: Option<String>,
    #[arg(long)]
    patch_size: Option<String>,
    #[arg(long)]
    patchmatch_iterations: Option<String>,
    #[arg(long)]
    refresh_passes: Option<String>,
    #[arg(long)]
    solver_tol: Option<String>,
    #[arg(long)]
    solver_max_iter: Option<String>,
    #[arg(long)]
    density_factor: Option<String>,
    #[arg(long)]
    halton_skip: Option<String>,
    /// `ply`, `ply-ascii` or `xyz`.
    #[arg(long)]
    output_format: Option<String>,
}

impl Settings {
    fn pairs(&self) -> Vec<(&'static str, &String)> {
        let all = [
            ("voxel_ratio", &self.voxel_ratio),
            ("control_m", &self.control_m),
            ("control_n", &self.control_n),
            ("degree", &self.degree),
            ("fit_iterations", &self.fit_iterations),
            ("regularization", &self.regularization),
            ("projection_grid", &self.projection_grid),
            ("projection_max_iter", &self.projection_max_iter),
            ("projection_tol", &self.projection_tol),
            ("low_frequency", &self.low_frequency),
            ("normal_k", &self.normal_k),
            ("epsilon", &self.epsilon),
            ("density_k", &self.density_k),
            ("r_max", &self.r_max),
            ("patch_size", &self.patch_size),
            ("patchmatch_iterations", &self.patchmatch_iterations),
            ("refresh_passes", &self.refresh_passes),
            ("solver_tol", &self.solver_tol),
            ("solver_max_iter", &self.solver_max_iter),
            ("density_factor", &self.density_factor),
            ("halton_skip", &self.halton_skip),
            ("output_format", &self.output_format),
        ];
        all.into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k, v)))
            .collect()
    }
}

fn build_config(args: &StageArgs) -> Result<PipelineConfig, String> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &args.common.config {
        cfg.apply_file(path).map_err(|e| e.to_string())?;
    }
    cfg.input = args.common.input.clone();
    if let Some(dir) = &args.common.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = &args.common.seed {
        cfg.set("seed", seed).map_err(|e| e.to_string())?;
    }
    if args.common.dump_intermediates {
        cfg.dump_intermediates = true;
    }
    for (k, v) in args.settings.pairs() {
        cfg.set(k, v).map_err(|e| e.to_string())?;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

/// Checks the stage's extra inputs so a missing flag is a usage error.
fn stage_inputs(stage: Stage, files: &FileArgs) -> Result<StageInputs, String> {
    let need: &[(&str, bool)] = match stage {
        Stage::Decompose => &[("surface", files.surface.is_some())],
        Stage::Reconstruct => &[
            ("surface", files.surface.is_some()),
            ("before", files.before.is_some()),
            ("after", files.after.is_some()),
        ],
        Stage::Metrics => &[("reference", files.reference.is_some())],
        _ => &[],
    };
    if let Some((flag, _)) = need.iter().find(|(_, present)| !present) {
        return Err(format!("the {} command needs --{flag}", stage.name()));
    }
    Ok(StageInputs {
        footprint_cloud: files.footprint_cloud.clone(),
        surface: files.surface.clone(),
        height_before: files.before.clone(),
        height_after: files.after.clone(),
        reference: files.reference.clone(),
    })
}

fn execute(command: Command) -> ExitCode {
    let (stage, args) = match command {
        Command::Run(a) => (None, a),
        Command::Downsample(a) => (Some(Stage::Downsample), a),
        Command::Fit(a) => (Some(Stage::Fit), a),
        Command::Decompose(a) => (Some(Stage::Decompose), a),
        Command::Inpaint(a) => (Some(Stage::Inpaint), a),
        Command::Reconstruct(a) => (Some(Stage::Reconstruct), a),
        Command::Metrics(a) => (Some(Stage::Metrics), a),
    };
    let cfg = match build_config(&args) {
        Ok(c) => c,
        Err(e) => {
            log::error!("configuration: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let result = match stage {
        None => pipeline::run_pipeline(&cfg),
        Some(stage) => match stage_inputs(stage, &args.files) {
            Ok(inputs) => pipeline::run_stage(stage, &cfg, &inputs),
            Err(e) => {
                log::error!("{e}");
                return ExitCode::from(EXIT_USAGE);
            }
        },
    };
    match result {
        Ok(report) => {
            if let Some(n) = report.new_points {
                log::info!("done: {n} new points, {} in total", report.merged_points.unwrap_or(0));
            } else {
                log::info!("done");
            }
            if stage == Some(Stage::Metrics) {
                let path = cfg.output_dir.join(pipeline::names::METRICS);
                if let Ok(text) = std::fs::read_to_string(path) {
                    print!("{text}");
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(EXIT_STAGE)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    execute(cli.command)
}
