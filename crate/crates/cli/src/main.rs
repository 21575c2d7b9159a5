//! `gaze-hhmm`: classify gaze recordings into fixations, saccades and smooth
//! pursuits, score them against a stimulus, and generate synthetic data.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hhmm_core::config::PipelineConfig;
use hhmm_core::Algorithm;

use crate::error::{error_line, exit_code_of, CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "gaze-hhmm",
    version,
    about = "Hierarchical HMM eye-movement classification"
)]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long, global = true, env = "GAZE_HHMM_CONFIG")]
    pub config: Option<PathBuf>,

    /// Seed for k-means and the generator (overrides a scenario's own seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    /// Any config key, e.g. `--set merge_gap_ms=50`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,

    #[command(flatten)]
    pub overrides: Overrides,
}

/// Per-algorithm threshold overrides; they win over `--set` and the file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// I-VVT/I-VDT lower speed threshold, deg/s.
    #[arg(long, global = true)]
    pub v_low: Option<f64>,
    /// I-VVT upper speed threshold, deg/s.
    #[arg(long, global = true)]
    pub v_high: Option<f64>,
    /// I-VDT/I-VMP saccade speed threshold, deg/s.
    #[arg(long, global = true)]
    pub v_sac: Option<f64>,
    /// I-VDT dispersion threshold, deg.
    #[arg(long, global = true)]
    pub dispersion_deg: Option<f64>,
    /// I-VDT dispersion window, ms.
    #[arg(long, global = true)]
    pub idt_window_ms: Option<f64>,
    /// I-VMP direction window, ms.
    #[arg(long, global = true)]
    pub direction_window_ms: Option<f64>,
    /// I-VMP mean resultant length above which a window is pursuit.
    #[arg(long, global = true)]
    pub similarity_cut: Option<f64>,
    /// Largest gap between same-kind events that still merge, ms.
    #[arg(long, global = true)]
    pub merge_gap_ms: Option<f64>,
    /// Largest centroid distance for a merge, deg.
    #[arg(long, global = true)]
    pub merge_dist_deg: Option<f64>,
    /// Pursuit speed above which samples are relabeled saccade, deg/s.
    #[arg(long, global = true)]
    pub finetune_t: Option<f64>,
    /// Baum-Welch epochs for the saccade stage.
    #[arg(long, global = true)]
    pub epochs1: Option<usize>,
    /// Baum-Welch epochs for the fixation/pursuit stage.
    #[arg(long, global = true)]
    pub epochs2: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Label every sample of one or more recordings.
    Classify {
        #[arg(required = true)]
        recordings: Vec<PathBuf>,
        #[arg(long, default_value = "hhmm", value_parser = parse_algo)]
        algo: Algorithm,
        #[arg(long)]
        out: PathBuf,
        /// Keep the first of repeated timestamps instead of failing.
        #[arg(long)]
        drop_duplicates: bool,
    },
    /// Score label files against a stimulus track.
    Evaluate {
        #[arg(long)]
        rec: PathBuf,
        #[arg(long)]
        stim: PathBuf,
        /// `NAME=PATH` or `PATH` (named after the file). Repeatable.
        #[arg(long = "labels", required = true)]
        labels: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-sample features and their k-means clusters.
    Features {
        recording: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic recording, stimulus and ground truth.
    Synth {
        #[arg(long, default_value = "standard", conflicts_with = "scenario")]
        preset: String,
        /// Scenario as JSON.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every classifier on one recording and tabulate the scores.
    Ablate {
        /// Synthesize the input from a preset instead of reading files.
        #[arg(long, conflicts_with_all = ["rec", "stim", "truth"])]
        preset: Option<String>,
        #[arg(long, requires = "stim")]
        rec: Option<PathBuf>,
        #[arg(long, requires = "rec")]
        stim: Option<PathBuf>,
        /// Ground-truth labels; adds the ideal column and agreement table.
        #[arg(long, requires = "rec")]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Long-format CSV of positions and labels for external plotting.
    Plot {
        #[arg(long)]
        rec: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_algo(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: hhmm_core::Error| e.to_string())
}

impl Common {
    /// Defaults, then the config file, then `--set`, then dedicated flags.
    pub fn pipeline_config(&self) -> CliResult<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        for (i, kv) in self.set.iter().enumerate() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(i + 1, k.trim(), v.trim())?;
        }
        let o = &self.overrides;
        let h = &mut cfg.hierarchy;
        let t = &mut cfg.thresholds;
        macro_rules! apply {
            ($($src:ident => $dst:expr),* $(,)?) => {
                $(if let Some(v) = o.$src { $dst = v; })*
            };
        }
        apply!(
            v_low => t.v_low,
            v_high => t.v_high,
            v_sac => t.v_sac,
            dispersion_deg => t.dispersion_deg,
            idt_window_ms => t.idt_window_ms,
            direction_window_ms => t.direction_window_ms,
            similarity_cut => t.similarity_cut,
            merge_gap_ms => h.merge_gap_ms,
            merge_dist_deg => h.merge_dist_deg,
            finetune_t => h.finetune_t,
            epochs1 => h.epochs1,
            epochs2 => h.epochs2,
        );
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn pool(&self) -> CliResult<rayon::ThreadPool> {
        Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()?)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let c = &cli.common;
    match cli.command {
        Command::Classify {
            recordings,
            algo,
            out,
            drop_duplicates,
        } => commands::classify(c, &recordings, algo, &out, drop_duplicates),
        Command::Evaluate {
            rec,
            stim,
            labels,
            out,
        } => commands::evaluate(c, &rec, &stim, &labels, out.as_deref()),
        Command::Features { recording, k, out } => commands::features(c, &recording, k, &out),
        Command::Synth {
            preset,
            scenario,
            out,
        } => commands::synth(c, &preset, scenario.as_deref(), &out),
        Command::Ablate {
            preset,
            rec,
            stim,
            truth,
            out,
        } => {
            let input = match (preset, rec, stim) {
                (Some(p), _, _) => commands::AblateInput::Preset(p),
                (None, Some(rec), Some(stim)) => commands::AblateInput::Files { rec, stim, truth },
                _ => commands::AblateInput::Preset("standard".into()),
            };
            commands::ablate(c, input, &out)
        }
        Command::Plot { rec, labels, out } => commands::plot(c, &rec, &labels, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let first = e.to_string();
            let first = first
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return ExitCode::from(exit_code_of("usage") as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(e.code(), &e.to_string()));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
