use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use mlndash_core::ingestion::{
    clean_cumulative, consolidate, load_manifest, read_county_file, refresh, write_county_file,
    CountySeries, DailyTable, HttpFetcher,
};

#[derive(Parser)]
#[command(version, about = "Fetch, clean and consolidate dashboard inputs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch every source in the manifest and rebuild the derived files.
    Refresh {
        #[arg(long)]
        sources: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory for raw copies; defaults to `<out>/raw`.
        #[arg(long)]
        raw: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        timeout_secs: u64,
    },
    /// Repair a cumulative `fips,date,cases,deaths` file.
    Clean {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge daily tables keyed by region and date into one.
    Consolidate {
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    mlndash::init_tracing();
    match Cli::parse().command {
        Command::Refresh {
            sources,
            out,
            raw,
            timeout_secs,
        } => {
            let descriptors = load_manifest(&sources)?;
            let raw = raw.unwrap_or_else(|| out.join("raw"));
            let fetcher = HttpFetcher::new(std::time::Duration::from_secs(timeout_secs));
            let report = refresh(&descriptors, &raw, &out, &fetcher)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Clean { input, out } => {
            let cleaned = read_county_file(&input)?
                .into_iter()
                .map(|(fips, s)| {
                    let s = CountySeries {
                        cases: clean_cumulative(&s.cases),
                        deaths: clean_cumulative(&s.deaths),
                    };
                    (fips, s)
                })
                .collect();
            write_county_file(&out, &cleaned)?;
        }
        Command::Consolidate { inputs, out } => {
            let tables = inputs
                .iter()
                .map(|p| DailyTable::read_csv(p).with_context(|| format!("reading {}", p.display())))
                .collect::<anyhow::Result<Vec<_>>>()?;
            consolidate(&tables)?.write_csv(&out)?;
        }
    }
    Ok(())
}
