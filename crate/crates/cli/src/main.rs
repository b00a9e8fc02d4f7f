//! `qemit`: simulate, fit and survey from the command line.
//!
//! Every run writes its fully resolved config next to its results, and a
//! file with that config (`--config out.json`) reproduces the run. Exit
//! codes: 0 success, 1 invalid input or usage, 2 a fit did not converge
//! (results are still written, with `converged = false`).

// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod fit;
mod output;
mod report;
mod sim;
mod survey;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::merge;
use crate::fit::{FitCommand, SpinFitCommand};
use crate::output::{emit, Analysis, Status};
use crate::sim::SimCommand;
use crate::survey::SurveyCommand;

#[derive(Parser, Debug)]
#[command(name = "qemit", version, about = "Emitter spectroscopy and spin-coherence simulation and analysis")]
struct Cli {
    /// TOML file keyed by long flag names, or the JSON output of an earlier
    /// run. Flags given on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Forward simulators; each writes a data file plus `<file>.json`.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Model fits to measured or simulated data.
    #[command(subcommand)]
    Fit(FitCommand),
    /// PLE peak detection and cohort statistics.
    #[command(subcommand)]
    Survey(SurveyCommand),
    /// Bundle several analyses into report.json plus plot-ready CSV tables.
    Report(report::ReportArgs),
}

fn leaf(matches: &ArgMatches) -> (String, &ArgMatches) {
    let mut path = Vec::new();
    let mut m = matches;
    while let Some((name, sub)) = m.subcommand() {
        path.push(name);
        m = sub;
    }
    (path.join(" "), m)
}

struct Run<'a> {
    command: String,
    matches: &'a ArgMatches,
    config: Option<Map<String, Value>>,
}

impl Run<'_> {
    fn args<T: Serialize + DeserializeOwned>(&self, parsed: T) -> Result<T> {
        merge(parsed, self.matches, self.config.as_ref())
    }

    fn analysis<T: Serialize + DeserializeOwned>(
        &self,
        parsed: T,
        output: fn(&T) -> &Option<PathBuf>,
        analysis: fn(&T) -> Result<Analysis>,
    ) -> Result<Status> {
        let a = self.args(parsed)?;
        let result = analysis(&a)?;
        emit(&self.command, &a, output(&a).as_deref(), result)
    }
}

fn run(matches: &ArgMatches) -> Result<Status> {
    let cli = Cli::from_arg_matches(matches)?;
    let (command, leaf_matches) = leaf(matches);
    let config = match &cli.config {
        Some(path) => {
            let file = config::load(path)?;
            if let Some(c) = file.command.as_deref().filter(|c| *c != command) {
                bail!("config was written by `{c}`, not `{command}`");
            }
            Some(file.table)
        }
        None => None,
    };
    let r = Run { command, matches: leaf_matches, config };
    match cli.command {
        Command::Sim(c) => match c {
            SimCommand::CheckProbe(a) => sim::check_probe(&r.args(a)?),
            SimCommand::Spin(a) => sim::spin(&r.args(a)?.resolved()),
            SimCommand::Ple(a) => sim::ple(&r.args(a)?),
            SimCommand::G2(a) => sim::g2(&r.args(a)?),
        },
        Command::Fit(c) => match c {
            FitCommand::Diffusion(a) => r.analysis(a, |a| &a.output, fit::diffusion),
            FitCommand::CpPle(a) => r.analysis(a, |a| &a.output, fit::cp_ple),
            FitCommand::Saturation(a) => r.analysis(a, |a| &a.output, fit::saturation),
            FitCommand::Spin(s) => match s {
                SpinFitCommand::Rabi(a) => r.analysis(a, |a| &a.sweep.output, fit::rabi),
                SpinFitCommand::Desr(a) => r.analysis(a, |a| &a.output, fit::desr),
                SpinFitCommand::Ramsey(a) => r.analysis(a, |a| &a.sweep.output, fit::ramsey),
                SpinFitCommand::Decay(a) => r.analysis(a, |a| &a.sweep.output, fit::decay),
                SpinFitCommand::Scaling(a) => r.analysis(a, |a| &a.output, fit::scaling),
            },
        },
        Command::Survey(c) => match c {
            SurveyCommand::Peaks(a) => survey::peaks(&r.args(a)?),
            SurveyCommand::Occurrence(a) => r.analysis(a, |a| &a.output, survey::occurrence),
            SurveyCommand::Inhomogeneous(a) => r.analysis(a, |a| &a.output, survey::inhomogeneous),
            SurveyCommand::Plmap(a) => r.analysis(a, |a| &a.output, survey::plmap),
            SurveyCommand::Damage(a) => r.analysis(a, |a| &a.output, survey::damage),
        },
        Command::Report(a) => report::report(a, r.matches, r.config.as_ref()),
    }
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&matches) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => {
            eprintln!("warning: fit did not converge; results were written with converged = false");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
