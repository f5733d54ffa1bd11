//! Compiler and simulation engine for network-based infectious-disease models.
//!
//! A disease model is written in a small line-oriented language (one
//! `<section> <key> <value>` statement per line), optionally layered on top of
//! a defaults file. The model is compiled against a population and a
//! time-stamped contact graph into a fully time-grounded probabilistic model:
//! every potential infection cause becomes an independent Bernoulli "coin",
//! causes combine by noisy-or, and negative rules (fixed infectious period,
//! immunity expiry) act as inhibitors that override all positive causes.
//!
//! Queries are answered two ways:
//! - fast forward Monte Carlo simulation with seeded, reproducible per-run
//!   randomness ([`engine::run_simulation`], [`engine::mc_marginals`]);
//! - exact marginals by brute-force enumeration of coin assignments at desk
//!   scale ([`engine::exact_marginals`]).
//!
//! The grounded model can also be emitted as human-readable
//! probabilistic-logic-program text for inspection ([`emit::emit_program`]).

pub mod diag;
pub mod dsl;
pub mod emit;
pub mod engine;
pub mod ground;
pub mod plot;
pub mod population;
pub mod report;
pub mod rng;
pub mod session;
pub mod shell;

pub use diag::{Diagnostic, DiagnosticKind, Severity};
pub use dsl::{
    merge_specs, parse_fragment, parse_model, Compartment, ContactRegime, ContactsSource,
    ImmunityPeriod, InfectiousPeriod, InitialInfected, ModelSpec, PopulationSource, SpecFragment,
};
pub use emit::{emit_program, EmitMode};
pub use engine::{
    exact_marginals, mc_marginals, noisy_or, run_simulation, CellState, MarginalTable, Trajectory,
};
pub use ground::{ground, Coin, CoinKind, GroundedModel};
pub use population::{
    generate_random, load_contacts, load_individuals, ContactEvent, TemporalContactGraph,
};
pub use report::{aggregate, peaks, AggregateMode, TimeSeriesTable};
