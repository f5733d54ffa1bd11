//! Batch CLI: compile and simulate disease models from the command line.
//! Exit codes: 0 success, 1 model diagnostics or validation failure,
//! 2 I/O failure.

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use episim::dsl::{ContactsSource, PopulationSource, SpecFragment};
use episim::emit::EmitMode;
use episim::plot::PlotStyle;
use episim::session::{marginals_csv, write_outputs, OutputRequest, PipelineError, Session};
use episim::shell::run_shell;

#[derive(Parser)]
#[command(
    name = "episim",
    version,
    about = "Compile and simulate network-based infectious-disease models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    /// Model file to load.
    #[arg(long)]
    model: PathBuf,
    /// Defaults file; statements in the model file take precedence.
    #[arg(long)]
    defaults: Option<PathBuf>,
    /// Individuals CSV, overriding the model's population source.
    #[arg(long)]
    individuals: Option<PathBuf>,
    /// Contacts CSV, overriding the model's contact source.
    #[arg(long)]
    contacts: Option<PathBuf>,
    /// Number of Monte Carlo runs.
    #[arg(long)]
    runs: Option<u32>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of timesteps.
    #[arg(long)]
    horizon: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and write run_<k>.csv and aggregate.csv into the output dir.
    Run {
        #[command(flatten)]
        model: ModelArgs,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write plot.svg of the queried compartments.
        #[arg(long)]
        plot: bool,
        /// Scatter style for the plot instead of lines.
        #[arg(long, requires = "plot")]
        scatter: bool,
        /// Also write model.pl, the emitted program text.
        #[arg(long)]
        emit: bool,
        /// Grounded emission (time variable unrolled) for model.pl.
        #[arg(long, requires = "emit")]
        grounded: bool,
        /// Run simulations one after another instead of concurrently.
        #[arg(long)]
        serial: bool,
    },
    /// Compile the model and print or write the program text.
    Compile {
        #[command(flatten)]
        model: ModelArgs,
        /// Write the program here instead of printing it.
        #[arg(long)]
        emit: Option<PathBuf>,
        /// Emit with the time variable unrolled.
        #[arg(long)]
        grounded: bool,
    },
    /// Print exact marginals of every queried atom (small models only).
    Exact {
        #[command(flatten)]
        model: ModelArgs,
        /// Maximum number of free coins to enumerate.
        #[arg(long, default_value_t = episim::engine::DEFAULT_COIN_CAP)]
        cap: usize,
    },
    /// Start the interactive shell.
    Shell,
}

fn build_session(args: &ModelArgs) -> Result<Session, PipelineError> {
    let mut session = Session::new();
    if let Some(defaults) = &args.defaults {
        let warnings = session.load_defaults(defaults)?;
        for w in warnings {
            eprintln!("{w}");
        }
    }
    let warnings = session.load_model(&args.model)?;
    for w in warnings {
        eprintln!("{w}");
    }
    let overrides = SpecFragment {
        runs: args.runs,
        seed: args.seed,
        horizon: args.horizon,
        population_source: args
            .individuals
            .as_ref()
            .map(|p| PopulationSource::File(p.display().to_string())),
        contacts_source: args
            .contacts
            .as_ref()
            .map(|p| ContactsSource::File(p.display().to_string())),
        ..SpecFragment::default()
    };
    if !overrides.is_empty() {
        session.apply_override(&overrides)?;
    }
    Ok(session)
}

fn execute(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Run {
            model,
            out,
            plot,
            scatter,
            emit,
            grounded,
            serial,
        } => {
            let mut session = build_session(&model)?;
            let trajectories = session.run(!serial)?;
            for t in trajectories {
                let (s, i, rec, res) = t.counts(t.horizon());
                println!(
                    "run {}: final susceptible={s} infected={i} recovered={rec} resistant={res}",
                    t.run_index
                );
            }
            let request = OutputRequest {
                plot: plot.then_some(if scatter {
                    PlotStyle::Scatter
                } else {
                    PlotStyle::Line
                }),
                emit: emit.then_some(if grounded {
                    EmitMode::Grounded
                } else {
                    EmitMode::Relational
                }),
            };
            let written = write_outputs(&mut session, &out, &request)?;
            for path in written {
                println!("wrote {}", path.display());
            }
            for w in &session.warnings {
                eprintln!("{w}");
            }
            Ok(())
        }
        Command::Compile {
            model,
            emit,
            grounded,
        } => {
            let mut session = build_session(&model)?;
            let mode = if grounded {
                EmitMode::Grounded
            } else {
                EmitMode::Relational
            };
            let text = session.emit(mode)?;
            match emit {
                Some(path) => {
                    std::fs::write(&path, &text).map_err(|source| PipelineError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    println!("wrote {}", path.display());
                }
                None => print!("{text}"),
            }
            for w in &session.warnings {
                eprintln!("{w}");
            }
            Ok(())
        }
        Command::Exact { model, cap } => {
            let mut session = build_session(&model)?;
            let table = session.exact(cap)?;
            print!("{}", marginals_csv(&table));
            for w in &session.warnings {
                eprintln!("{w}");
            }
            Ok(())
        }
        Command::Shell => {
            let stdin = std::io::stdin();
            let interactive = stdin.is_terminal();
            let mut input = stdin.lock();
            let mut output = std::io::stdout();
            let code = run_shell(&mut input, &mut output, interactive).map_err(|source| {
                PipelineError::Io {
                    path: PathBuf::from("<stdio>"),
                    source,
                }
            })?;
            if code == 0 {
                Ok(())
            } else {
                Err(PipelineError::Validation(format!(
                    "shell exited with code {code}"
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            if err.use_stderr() {
                eprint!("{err}");
                return ExitCode::from(1);
            }
            print!("{err}");
            return ExitCode::SUCCESS;
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
