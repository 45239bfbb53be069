use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use mlndash::{config::CONFIG_ENV, ServiceConfig};
use mlndash_core::demo;

#[derive(Parser)]
#[command(version, about = "Dashboard back end: HTTP API and demo data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the HTTP API.
    Serve {
        /// TOML or JSON configuration file.
        #[arg(long, env = CONFIG_ENV)]
        config: PathBuf,
    },
    /// Write the synthetic fixture set and refresh it into `<out>/data`.
    DemoData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = demo::DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = demo::DEFAULT_COUNTIES_PER_STATE)]
        counties_per_state: usize,
    },
}

fn main() -> anyhow::Result<()> {
    mlndash::init_tracing();
    match Cli::parse().command {
        Command::Serve { config } => {
            let config = ServiceConfig::resolve(Some(&config))?;
            tokio::runtime::Runtime::new()?.block_on(mlndash::serve(config))
        }
        Command::DemoData {
            out,
            seed,
            counties_per_state,
        } => {
            let layout = demo::generate(&out, seed, counties_per_state)
                .with_context(|| format!("writing demo data to {}", out.display()))?;
            let config = ServiceConfig {
                sources: Some(layout.manifest.clone()),
                raw_dir: Some(layout.raw_dir.clone()),
                ..ServiceConfig::new(&layout.data_dir, out.join("cache"))
            };
            let config_path = out.join("mlndash.toml");
            std::fs::write(&config_path, toml::to_string(&config)?)?;
            println!("sources:  {}", layout.manifest.display());
            println!("data:     {}", layout.data_dir.display());
            println!("config:   {}", config_path.display());
            for s in demo::scenarios() {
                println!(
                    "scenario {:<13} /api/v1/map?feature={}&pa={}&pb={}",
                    s.name, s.feature, s.period_a, s.period_b
                );
            }
            Ok(())
        }
    }
}
