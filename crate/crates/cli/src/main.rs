use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uvtc_core::pipeline::{
    cmd_metrics, cmd_noise_combine, cmd_reconstruct, cmd_run, cmd_stage1, cmd_stage2, with_threads,
};
use uvtc_core::{ErrorKind, PipelineConfig};

#[derive(Parser)]
#[command(name = "uvtc", version, about = "Temporal consistency optimizer for re-rendered video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Masks, Stage I, Stage II and export
    Run(Common),
    /// Stage I only: write aligned frames and embeddings
    Stage1(Common),
    /// Stage II on previously aligned frames
    Stage2(Common),
    /// Gather and scatter the source through its UVT; report the loss
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Also write the UVT values and reconstruction as tensor files
        #[arg(long)]
        dump_uvt: bool,
    },
    /// Warp metrics of a video against the source flows
    Metrics(Common),
    /// Blend two noise tensors
    NoiseCombine(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Config override, `key=value`; may repeat
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> uvtc_core::Result<PipelineConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        PipelineConfig::load(&self.config, &overrides)
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Internal => 1,
        ErrorKind::BadInput => 2,
        ErrorKind::Config => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, dump_uvt) = match &cli.command {
        Command::Reconstruct { common, dump_uvt } => (common, *dump_uvt),
        Command::Run(c)
        | Command::Stage1(c)
        | Command::Stage2(c)
        | Command::Metrics(c)
        | Command::NoiseCombine(c) => (c, false),
    };
    let result = common.load().and_then(|cfg| {
        with_threads(common.threads, || match &cli.command {
            Command::Run(_) => cmd_run(&cfg),
            Command::Stage1(_) => cmd_stage1(&cfg),
            Command::Stage2(_) => cmd_stage2(&cfg),
            Command::Reconstruct { .. } => cmd_reconstruct(&cfg, dump_uvt),
            Command::Metrics(_) => cmd_metrics(&cfg),
            Command::NoiseCombine(_) => cmd_noise_combine(&cfg),
        })
    });
    match result {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let mut msg = e.to_string();
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                let s_msg = s.to_string();
                if !msg.contains(&s_msg) {
                    msg.push_str(&format!(": {s_msg}"));
                }
                src = s.source();
            }
            eprintln!("uvtc: {msg}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
