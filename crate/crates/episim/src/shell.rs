//! Interactive shell. Commands are read line by line; every command prints a
//! result or a one-line error, and a bad command never aborts the loop.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use crate::diag::Diagnostic;
use crate::dsl::{parse_fragment, Compartment};
use crate::emit::EmitMode;
use crate::plot::{render_plot, PlotStyle};
use crate::report::{aggregate, peaks, AggregateMode};
use crate::session::{marginals_csv, write_outputs, OutputRequest, Session};

const HELP: &str = "\
commands:
  help                          show this help
  load model <path>             load a model file (replaces the current model)
  load defaults <path>          load a defaults file (model values win)
  set <key> <value>             set a metaparameter: runs, horizon, seed, out
  set <statement>               apply any model statement, e.g. set infected transmission 0.5
  show                          print the current model settings
  compile [--emit <path>] [--grounded]
                                compile and print (or write) the program text
  run                           simulate all runs, write CSVs into the output dir
  exact                         print exact marginals (small models only)
  table [--mean] [--peaks]      print per-run tables, or the mean across runs
  plot [--scatter] <path>       write an SVG of the queried compartments
  quit                          leave the shell";

/// Run the command loop until `quit` or end of input. Returns the process
/// exit code (always 0; per-command failures are reported inline).
pub fn run_shell(
    input: &mut dyn BufRead,
    output: &mut dyn Write,
    interactive: bool,
) -> std::io::Result<i32> {
    let mut session = Session::new();
    let mut line = String::new();
    loop {
        if interactive {
            write!(output, "episim> ")?;
            output.flush()?;
        }
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Ok(0); // end of input
        }
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if trimmed == "quit" || trimmed == "exit" {
            return Ok(0);
        }
        dispatch(&mut session, trimmed, output)?;
    }
}

fn dispatch(session: &mut Session, line: &str, out: &mut dyn Write) -> std::io::Result<()> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    match tokens[0] {
        "help" => writeln!(out, "{HELP}"),
        "load" => cmd_load(session, &tokens, out),
        "set" => cmd_set(session, &tokens, line, out),
        "show" => cmd_show(session, out),
        "compile" => cmd_compile(session, &tokens, out),
        "run" => cmd_run(session, out),
        "exact" => cmd_exact(session, out),
        "table" => cmd_table(session, &tokens, out),
        "plot" => cmd_plot(session, &tokens, out),
        other => writeln!(out, "unknown command '{other}'; try 'help'"),
    }
}

fn print_warnings(out: &mut dyn Write, warnings: &[Diagnostic]) -> std::io::Result<()> {
    for w in warnings {
        writeln!(out, "{w}")?;
    }
    Ok(())
}

fn cmd_load(session: &mut Session, tokens: &[&str], out: &mut dyn Write) -> std::io::Result<()> {
    match tokens {
        ["load", "model", path] => match session.load_model(Path::new(path)) {
            Ok(warnings) => {
                print_warnings(out, &warnings)?;
                writeln!(out, "loaded model {path}")
            }
            Err(err) => writeln!(out, "error: {err}"),
        },
        ["load", "defaults", path] => match session.load_defaults(Path::new(path)) {
            Ok(warnings) => {
                print_warnings(out, &warnings)?;
                writeln!(out, "loaded defaults {path}")
            }
            Err(err) => writeln!(out, "error: {err}"),
        },
        _ => writeln!(out, "usage: load (model|defaults) <path>"),
    }
}

fn cmd_set(
    session: &mut Session,
    tokens: &[&str],
    line: &str,
    out: &mut dyn Write,
) -> std::io::Result<()> {
    if tokens.len() < 2 {
        return writeln!(out, "usage: set <key> <value>");
    }
    // Flat metaparameter keys first; anything else is a model statement.
    let statement = match tokens[1] {
        "out" if tokens.len() == 3 => {
            session.out_dir = PathBuf::from(tokens[2]);
            return writeln!(out, "out = {}", tokens[2]);
        }
        "runs" | "horizon" | "seed" if tokens.len() == 3 => {
            format!("simulation {} {}", tokens[1], tokens[2])
        }
        _ => tokens[1..].join(" "),
    };
    let (fragment, diagnostics) = parse_fragment(&statement);
    if crate::diag::has_errors(&diagnostics) {
        for d in &diagnostics {
            writeln!(out, "error: {}", d.message)?;
        }
        return Ok(());
    }
    if fragment.is_empty() {
        return writeln!(out, "error: nothing to set in '{}'", line);
    }
    match session.apply_override(&fragment) {
        Ok(()) => writeln!(out, "ok"),
        Err(err) => writeln!(out, "error: {err}"),
    }
}

fn cmd_show(session: &mut Session, out: &mut dyn Write) -> std::io::Result<()> {
    let spec = session.spec();
    let mut frag = crate::dsl::SpecFragment {
        disease_name: Some(spec.disease_name.clone()),
        transmission_prob: Some(spec.transmission_prob),
        external_prob: Some(spec.external_prob),
        infectious_period: Some(spec.infectious_period),
        persistence_prob: Some(spec.persistence_prob),
        immunity_prob: Some(spec.immunity_prob),
        immunity_period: Some(spec.immunity_period),
        horizon: Some(spec.horizon),
        runs: Some(spec.runs),
        seed: Some(spec.seed),
        initial_infected: Some(spec.initial_infected.clone()),
        population_source: Some(spec.population_source.clone()),
        contacts_source: Some(spec.contacts_source.clone()),
        contacts_undirected: None,
        queries: Some(spec.queries.clone()),
    };
    if spec.contacts_undirected {
        frag.contacts_undirected = Some(true);
    }
    write!(out, "{}", frag.to_text())?;
    writeln!(out, "# output directory: {}", session.out_dir.display())
}

fn cmd_compile(session: &mut Session, tokens: &[&str], out: &mut dyn Write) -> std::io::Result<()> {
    let mut emit_path: Option<PathBuf> = None;
    let mut mode = EmitMode::Relational;
    let mut idx = 1;
    while idx < tokens.len() {
        match tokens[idx] {
            "--emit" if idx + 1 < tokens.len() => {
                emit_path = Some(PathBuf::from(tokens[idx + 1]));
                idx += 2;
            }
            "--grounded" => {
                mode = EmitMode::Grounded;
                idx += 1;
            }
            other => {
                return writeln!(out, "error: unknown compile option '{other}'");
            }
        }
    }
    match session.emit(mode) {
        Ok(text) => match emit_path {
            Some(path) => match std::fs::write(&path, &text) {
                Ok(()) => writeln!(out, "wrote {}", path.display()),
                Err(err) => writeln!(out, "error: {}: {err}", path.display()),
            },
            None => write!(out, "{text}"),
        },
        Err(err) => writeln!(out, "error: {err}"),
    }
}

fn cmd_run(session: &mut Session, out: &mut dyn Write) -> std::io::Result<()> {
    match session.run(true) {
        Ok(trajectories) => {
            let lines: Vec<String> = trajectories
                .iter()
                .map(|t| {
                    let (s, i, rec, res) = t.counts(t.horizon());
                    format!(
                        "run {}: final susceptible={s} infected={i} recovered={rec} resistant={res}",
                        t.run_index
                    )
                })
                .collect();
            for l in lines {
                writeln!(out, "{l}")?;
            }
            let out_dir = session.out_dir.clone();
            match write_outputs(session, &out_dir, &OutputRequest::default()) {
                Ok(written) => {
                    for path in written {
                        writeln!(out, "wrote {}", path.display())?;
                    }
                    Ok(())
                }
                Err(err) => writeln!(out, "error: {err}"),
            }
        }
        Err(err) => writeln!(out, "error: {err}"),
    }
}

fn cmd_exact(session: &mut Session, out: &mut dyn Write) -> std::io::Result<()> {
    match session.exact_default() {
        Ok(table) => write!(out, "{}", marginals_csv(&table)),
        Err(err) => writeln!(out, "error: {err}"),
    }
}

fn cmd_table(session: &mut Session, tokens: &[&str], out: &mut dyn Write) -> std::io::Result<()> {
    let mut mean = false;
    let mut show_peaks = false;
    for &token in &tokens[1..] {
        match token {
            "--mean" => mean = true,
            "--peaks" => show_peaks = true,
            other => return writeln!(out, "error: unknown table option '{other}'"),
        }
    }
    let Some(trajectories) = session.trajectories() else {
        return writeln!(out, "error: no simulation results; run first");
    };
    if mean || trajectories.len() == 1 {
        let mode = if mean {
            AggregateMode::Mean
        } else {
            AggregateMode::Single
        };
        match aggregate(trajectories, mode) {
            Ok(table) => {
                write!(out, "{}", table.to_csv())?;
                if show_peaks {
                    let series = table.series(Compartment::Infected);
                    writeln!(out, "{}", peaks_line(None, &series))?;
                }
                Ok(())
            }
            Err(err) => writeln!(out, "error: {err}"),
        }
    } else {
        let trajectories = trajectories.to_vec();
        for traj in &trajectories {
            writeln!(out, "# run {}", traj.run_index)?;
            match aggregate(std::slice::from_ref(traj), AggregateMode::Single) {
                Ok(table) => {
                    write!(out, "{}", table.to_csv())?;
                    if show_peaks {
                        let series = table.series(Compartment::Infected);
                        writeln!(out, "{}", peaks_line(Some(traj.run_index), &series))?;
                    }
                }
                Err(err) => writeln!(out, "error: {err}")?,
            }
        }
        Ok(())
    }
}

fn peaks_line(run: Option<u32>, series: &[f64]) -> String {
    let positions = peaks(series);
    let label = match run {
        Some(k) => format!("peaks(run {k}, infected)"),
        None => "peaks(infected)".to_string(),
    };
    if positions.is_empty() {
        format!("{label}: 0")
    } else {
        let at: Vec<String> = positions.iter().map(|t| format!("t={t}")).collect();
        format!("{label}: {} at {}", positions.len(), at.join(","))
    }
}

fn cmd_plot(session: &mut Session, tokens: &[&str], out: &mut dyn Write) -> std::io::Result<()> {
    let mut style = PlotStyle::Line;
    let mut path: Option<PathBuf> = None;
    for &token in &tokens[1..] {
        match token {
            "--scatter" => style = PlotStyle::Scatter,
            other if path.is_none() && !other.starts_with("--") => {
                path = Some(PathBuf::from(other));
            }
            other => return writeln!(out, "error: unknown plot option '{other}'"),
        }
    }
    let Some(path) = path else {
        return writeln!(out, "usage: plot [--scatter] <path>");
    };
    let Some(trajectories) = session.trajectories() else {
        return writeln!(out, "error: no simulation results; run first");
    };
    let mode = if trajectories.len() == 1 {
        AggregateMode::Single
    } else {
        AggregateMode::Stacked
    };
    let series: BTreeSet<Compartment> = session.spec().queries.clone();
    match aggregate(trajectories, mode) {
        Ok(table) => match render_plot(&table, style, &series, &path) {
            Ok(()) => writeln!(out, "wrote {}", path.display()),
            Err(err) => writeln!(out, "error: {err}"),
        },
        Err(err) => writeln!(out, "error: {err}"),
    }
}
