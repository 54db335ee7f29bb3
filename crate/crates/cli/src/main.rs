use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gfc_cli::config::{self, Convention, Emit};
use gfc_cli::{registry, run_scenario, CliError, RunOptions};

#[derive(Parser)]
#[command(name = "gfc", version, about = "Restricted Fourier coefficient experiments on flat tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a shipped scenario or a scenario file.
    Run {
        /// Name of a shipped scenario.
        #[arg(required_unless_present = "config", conflicts_with = "config")]
        scenario: Option<String>,
        /// Path to a scenario TOML file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of h values in the sweep.
        #[arg(long)]
        h_count: Option<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        time_convention: Option<Convention>,
        /// Output formats, comma separated.
        #[arg(long, value_enum, value_delimiter = ',')]
        emit: Option<Vec<Emit>>,
    },
    /// List shipped scenarios.
    List {
        #[arg(long)]
        tag: Option<String>,
    },
    /// Print a scenario's description and configuration.
    Describe { scenario: String },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            scenario,
            config: path,
            h_count,
            output_dir,
            seed,
            time_convention,
            emit,
        } => {
            let cfg = match (scenario, path) {
                (Some(name), _) => registry::find(&name)?,
                (None, Some(p)) => config::load(&p)?,
                (None, None) => return Err(CliError::Config("give a scenario name or --config".into())),
            };
            let opts = RunOptions {
                h_count,
                output_dir,
                seed,
                convention: time_convention,
                emit,
            };
            let out = run_scenario(&cfg, &opts)?;
            let r = &out.report;
            println!("scenario      {}", r.scenario);
            println!("h values      {}", r.h.len());
            println!("class         {}", r.scaling.class);
            println!("slope         {:.4}", r.scaling.slope);
            if let Some(m) = &r.measures {
                println!("rhs*          {:.6}", m.rhs_star);
                println!("rem           {:.6}", m.rem);
            }
            match r.scaling.sup_ratio {
                Some(s) => println!("sup ratio     {s:.6}"),
                None => println!("sup ratio     n/a"),
            }
            if let Some(rec) = &r.recurrence {
                println!("recurrent     {:.6}", rec.mass.fraction);
            }
            for c in &r.checks {
                println!("check {:<16}{}", c.name, if c.pass { "pass" } else { "FAIL" });
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::List { tag } => {
            for c in registry::list_scenarios(tag.as_deref())? {
                println!("{:<30}{:<28}{}", c.name, c.tags.join(","), c.title);
            }
            Ok(())
        }
        Command::Describe { scenario } => {
            let src = registry::source(&scenario).ok_or(CliError::UnknownScenario(scenario))?;
            print!("{src}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
