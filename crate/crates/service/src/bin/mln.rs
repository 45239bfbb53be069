use std::path::PathBuf;

use clap::{Parser, Subcommand};
use mlndash_core::mln::{run_analysis_files, AnalysisConfig};

#[derive(Parser)]
#[command(version, about = "Community analysis over county layers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the analysis described by a configuration file and write the
    /// community allocation CSV.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    mlndash::init_tracing();
    match Cli::parse().command {
        Command::Analyze { config, out } => {
            let config = AnalysisConfig::load(&config)?;
            let output = run_analysis_files(&config)?;
            output.allocation.write_csv(&out)?;
            eprintln!(
                "{} counties in {} communities written to {}",
                output.allocation.len(),
                output.partition.num_communities(),
                out.display()
            );
        }
    }
    Ok(())
}
