//! Model-file language: lexing, parsing, validation, and merging of model and
//! defaults files into a single [`ModelSpec`].
//!
//! The language is line-oriented. Each statement is a whitespace-separated
//! tuple of two to four tokens, e.g.
//!
//! ```text
//! disease flu
//! infected transmission 0.8
//! infected external 0.1
//! infected period 7
//! resistant probability 0.9
//! simulation horizon 12
//! contacts random 0.08 perstep
//! query infected
//! ```
//!
//! Lines starting with `#` are comments; blank lines are ignored; keywords are
//! case-insensitive. Each syntactically valid statement sets exactly one field
//! of a [`SpecFragment`]; a model fragment is merged over a defaults fragment
//! and the built-in defaults to produce the final [`ModelSpec`].

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::diag::{has_errors, Diagnostic, DiagnosticKind};

/// The four queryable compartments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Compartment {
    Susceptible,
    Infected,
    Recovered,
    Resistant,
}

impl Compartment {
    pub const ALL: [Compartment; 4] = [
        Compartment::Susceptible,
        Compartment::Infected,
        Compartment::Recovered,
        Compartment::Resistant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Compartment::Susceptible => "susceptible",
            Compartment::Infected => "infected",
            Compartment::Recovered => "recovered",
            Compartment::Resistant => "resistant",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Compartment> {
        match word.to_ascii_lowercase().as_str() {
            "susceptible" => Some(Compartment::Susceptible),
            "infected" => Some(Compartment::Infected),
            "recovered" => Some(Compartment::Recovered),
            "resistant" => Some(Compartment::Resistant),
            _ => None,
        }
    }
}

impl fmt::Display for Compartment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Duration of an infection episode, in timesteps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfectiousPeriod {
    Bounded(u32),
    Unbounded,
}

/// Duration of acquired immunity, in timesteps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImmunityPeriod {
    Bounded(u32),
    Permanent,
}

/// Who starts out infected at t=1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitialInfected {
    /// The lexicographically first `k` individuals.
    Count(u32),
    /// Explicit individual ids.
    Ids(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PopulationSource {
    File(String),
    Random(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactRegime {
    /// Decide each pair once; replicate at every timestep.
    Static,
    /// Decide each pair independently at every timestep.
    PerTimestep,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContactsSource {
    File(String),
    Random {
        edge_prob: f64,
        regime: ContactRegime,
    },
}

/// A fully validated disease model: compartment parameters plus simulation
/// metaparameters. Produced by [`merge_specs`]; every numeric symbol the
/// engine consumes lives here.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Predicate prefix in emitted programs, e.g. `flu` in `flu__infected`.
    pub disease_name: String,
    /// Per-contact, per-timestep infection chance.
    pub transmission_prob: f64,
    /// Per-timestep infection chance from outside the system.
    pub external_prob: f64,
    pub infectious_period: InfectiousPeriod,
    /// Chance an infection persists to the next step; 1.0 means it always
    /// does (fixed duration), values below 1 give a stochastic duration.
    pub persistence_prob: f64,
    /// Chance of acquiring resistance upon recovery.
    pub immunity_prob: f64,
    pub immunity_period: ImmunityPeriod,
    /// Number of timesteps; time runs 1..=horizon.
    pub horizon: u32,
    /// Number of Monte Carlo runs.
    pub runs: u32,
    /// Master seed; per-run randomness is derived from (seed, run index).
    pub seed: u64,
    pub initial_infected: InitialInfected,
    pub population_source: PopulationSource,
    pub contacts_source: ContactsSource,
    /// If true, every loaded contact implies its reverse.
    pub contacts_undirected: bool,
    /// Compartments to report; never empty.
    pub queries: BTreeSet<Compartment>,
}

impl ModelSpec {
    /// Built-in defaults: absent means inert. Probabilities 0, unbounded
    /// infectious period, deterministic persistence, permanent immunity,
    /// horizon 12, one run, one seeded infected, CSV data sources, all four
    /// compartments queried.
    pub fn built_in_defaults() -> ModelSpec {
        ModelSpec {
            disease_name: "disease".to_string(),
            transmission_prob: 0.0,
            external_prob: 0.0,
            infectious_period: InfectiousPeriod::Unbounded,
            persistence_prob: 1.0,
            immunity_prob: 0.0,
            immunity_period: ImmunityPeriod::Permanent,
            horizon: 12,
            runs: 1,
            seed: 0,
            initial_infected: InitialInfected::Count(1),
            population_source: PopulationSource::File("individualsList.csv".to_string()),
            contacts_source: ContactsSource::File("contactList.csv".to_string()),
            contacts_undirected: false,
            queries: Compartment::ALL.iter().copied().collect(),
        }
    }

    /// Check every invariant; returns the first violation.
    pub fn validate(&self) -> Result<(), MergeError> {
        fn check_prob(name: &str, p: f64) -> Result<(), MergeError> {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(MergeError::InvalidMerge(format!(
                    "{name} must lie in [0,1], got {p}"
                )))
            }
        }
        check_prob("transmission probability", self.transmission_prob)?;
        check_prob("external probability", self.external_prob)?;
        check_prob("persistence probability", self.persistence_prob)?;
        check_prob("immunity probability", self.immunity_prob)?;
        if self.horizon < 1 {
            return Err(MergeError::InvalidMerge("horizon must be >= 1".into()));
        }
        if self.runs < 1 {
            return Err(MergeError::InvalidMerge("runs must be >= 1".into()));
        }
        if let InfectiousPeriod::Bounded(d) = self.infectious_period {
            if d < 1 {
                return Err(MergeError::InvalidMerge(
                    "infectious period must be >= 1 when bounded".into(),
                ));
            }
        }
        if let ImmunityPeriod::Bounded(k) = self.immunity_period {
            if k < 1 {
                return Err(MergeError::InvalidMerge(
                    "immunity period must be >= 1 when bounded".into(),
                ));
            }
        }
        if let PopulationSource::Random(n) = self.population_source {
            if n < 1 {
                return Err(MergeError::InvalidMerge(
                    "random population size must be >= 1".into(),
                ));
            }
        }
        if let ContactsSource::Random { edge_prob, .. } = self.contacts_source {
            check_prob("contact edge probability", edge_prob)?;
        }
        if self.queries.is_empty() {
            return Err(MergeError::InvalidMerge(
                "query set must not be empty".into(),
            ));
        }
        Ok(())
    }
}

/// A partial assignment of [`ModelSpec`] fields, as parsed from one file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpecFragment {
    pub disease_name: Option<String>,
    pub transmission_prob: Option<f64>,
    pub external_prob: Option<f64>,
    pub infectious_period: Option<InfectiousPeriod>,
    pub persistence_prob: Option<f64>,
    pub immunity_prob: Option<f64>,
    pub immunity_period: Option<ImmunityPeriod>,
    pub horizon: Option<u32>,
    pub runs: Option<u32>,
    pub seed: Option<u64>,
    pub initial_infected: Option<InitialInfected>,
    pub population_source: Option<PopulationSource>,
    pub contacts_source: Option<ContactsSource>,
    pub contacts_undirected: Option<bool>,
    pub queries: Option<BTreeSet<Compartment>>,
}

impl SpecFragment {
    pub fn is_empty(&self) -> bool {
        *self == SpecFragment::default()
    }

    /// Canonical statement text; parsing it back yields an identical fragment.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(name) = &self.disease_name {
            out.push_str(&format!("disease {name}\n"));
        }
        if let Some(p) = self.transmission_prob {
            out.push_str(&format!("infected transmission {p}\n"));
        }
        if let Some(p) = self.external_prob {
            out.push_str(&format!("infected external {p}\n"));
        }
        match self.infectious_period {
            Some(InfectiousPeriod::Bounded(d)) => out.push_str(&format!("infected period {d}\n")),
            Some(InfectiousPeriod::Unbounded) => out.push_str("infected period unbounded\n"),
            None => {}
        }
        if let Some(p) = self.persistence_prob {
            out.push_str(&format!("infected persistence {p}\n"));
        }
        match &self.initial_infected {
            Some(InitialInfected::Count(k)) => out.push_str(&format!("infected initial {k}\n")),
            Some(InitialInfected::Ids(ids)) => {
                out.push_str(&format!("infected initial {}\n", ids.join(",")));
            }
            None => {}
        }
        if let Some(p) = self.immunity_prob {
            out.push_str(&format!("resistant probability {p}\n"));
        }
        match self.immunity_period {
            Some(ImmunityPeriod::Bounded(k)) => out.push_str(&format!("resistant period {k}\n")),
            Some(ImmunityPeriod::Permanent) => out.push_str("resistant period permanent\n"),
            None => {}
        }
        if let Some(t) = self.horizon {
            out.push_str(&format!("simulation horizon {t}\n"));
        }
        if let Some(r) = self.runs {
            out.push_str(&format!("simulation runs {r}\n"));
        }
        if let Some(s) = self.seed {
            out.push_str(&format!("simulation seed {s}\n"));
        }
        match &self.population_source {
            Some(PopulationSource::File(path)) => {
                out.push_str(&format!("population file {path}\n"));
            }
            Some(PopulationSource::Random(n)) => {
                out.push_str(&format!("population random {n}\n"));
            }
            None => {}
        }
        match &self.contacts_source {
            Some(ContactsSource::File(path)) => out.push_str(&format!("contacts file {path}\n")),
            Some(ContactsSource::Random { edge_prob, regime }) => {
                let regime = match regime {
                    ContactRegime::Static => "static",
                    ContactRegime::PerTimestep => "perstep",
                };
                out.push_str(&format!("contacts random {edge_prob} {regime}\n"));
            }
            None => {}
        }
        if self.contacts_undirected == Some(true) {
            out.push_str("contacts undirected\n");
        }
        if let Some(queries) = &self.queries {
            for q in queries {
                out.push_str(&format!("query {q}\n"));
            }
        }
        out
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MergeError {
    #[error("invalid merge: {0}")]
    InvalidMerge(String),
}

/// Field-wise union where `model` overrides `defaults`; fields set in neither
/// take the built-in defaults. The result is validated.
pub fn merge_specs(defaults: &SpecFragment, model: &SpecFragment) -> Result<ModelSpec, MergeError> {
    fn pick<T: Clone>(model: &Option<T>, defaults: &Option<T>, built_in: T) -> T {
        model
            .clone()
            .or_else(|| defaults.clone())
            .unwrap_or(built_in)
    }

    let b = ModelSpec::built_in_defaults();
    let spec = ModelSpec {
        disease_name: pick(&model.disease_name, &defaults.disease_name, b.disease_name),
        transmission_prob: pick(
            &model.transmission_prob,
            &defaults.transmission_prob,
            b.transmission_prob,
        ),
        external_prob: pick(
            &model.external_prob,
            &defaults.external_prob,
            b.external_prob,
        ),
        infectious_period: pick(
            &model.infectious_period,
            &defaults.infectious_period,
            b.infectious_period,
        ),
        persistence_prob: pick(
            &model.persistence_prob,
            &defaults.persistence_prob,
            b.persistence_prob,
        ),
        immunity_prob: pick(
            &model.immunity_prob,
            &defaults.immunity_prob,
            b.immunity_prob,
        ),
        immunity_period: pick(
            &model.immunity_period,
            &defaults.immunity_period,
            b.immunity_period,
        ),
        horizon: pick(&model.horizon, &defaults.horizon, b.horizon),
        runs: pick(&model.runs, &defaults.runs, b.runs),
        seed: pick(&model.seed, &defaults.seed, b.seed),
        initial_infected: pick(
            &model.initial_infected,
            &defaults.initial_infected,
            b.initial_infected,
        ),
        population_source: pick(
            &model.population_source,
            &defaults.population_source,
            b.population_source,
        ),
        contacts_source: pick(
            &model.contacts_source,
            &defaults.contacts_source,
            b.contacts_source,
        ),
        contacts_undirected: pick(
            &model.contacts_undirected,
            &defaults.contacts_undirected,
            b.contacts_undirected,
        ),
        queries: pick(&model.queries, &defaults.queries, b.queries),
    };
    spec.validate()?;
    Ok(spec)
}

/// Parse model-file text into a fragment plus diagnostics. Every
/// syntactically valid statement sets exactly one field; lines with problems
/// produce diagnostics and set nothing. Warnings do not abort anything;
/// callers that require a clean parse should check [`has_errors`] or use
/// [`parse_model`].
pub fn parse_fragment(text: &str) -> (SpecFragment, Vec<Diagnostic>) {
    let mut parser = FragmentParser::default();
    for (idx, raw_line) in text.lines().enumerate() {
        parser.line(idx + 1, raw_line);
    }
    (parser.fragment, parser.diagnostics)
}

/// Strict variant of [`parse_fragment`]: any error-severity diagnostic fails
/// the parse. Warnings are returned alongside the fragment.
pub fn parse_model(text: &str) -> Result<(SpecFragment, Vec<Diagnostic>), Vec<Diagnostic>> {
    let (fragment, diagnostics) = parse_fragment(text);
    if has_errors(&diagnostics) {
        Err(diagnostics)
    } else {
        Ok((fragment, diagnostics))
    }
}

#[derive(Default)]
struct FragmentParser {
    fragment: SpecFragment,
    diagnostics: Vec<Diagnostic>,
}

impl FragmentParser {
    fn line(&mut self, line_no: usize, raw: &str) {
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            return;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        let head = tokens[0].to_ascii_lowercase();
        match head.as_str() {
            "infected" => self.infected_stmt(line_no, &tokens),
            "resistant" => self.resistant_stmt(line_no, &tokens),
            "disease" => self.disease_stmt(line_no, &tokens),
            "simulation" => self.simulation_stmt(line_no, &tokens),
            "population" => self.population_stmt(line_no, &tokens),
            "contacts" => self.contacts_stmt(line_no, &tokens),
            "query" => self.query_stmt(line_no, &tokens),
            _ => self.error(
                DiagnosticKind::UnknownKey,
                line_no,
                format!("unknown compartment or section '{}'", tokens[0]),
                tokens[0],
            ),
        }
    }

    fn error(&mut self, kind: DiagnosticKind, line: usize, message: String, token: &str) {
        self.diagnostics
            .push(Diagnostic::error(kind, line, message).with_token(token));
    }

    fn warn(&mut self, kind: DiagnosticKind, line: usize, message: String, token: &str) {
        self.diagnostics
            .push(Diagnostic::warning(kind, line, message).with_token(token));
    }

    fn expect_arity(&mut self, line: usize, tokens: &[&str], want: usize) -> bool {
        if tokens.len() == want {
            true
        } else {
            self.error(
                DiagnosticKind::MalformedStatement,
                line,
                format!(
                    "'{}' statement takes {} tokens, got {}",
                    tokens[0],
                    want,
                    tokens.len()
                ),
                tokens[0],
            );
            false
        }
    }

    /// Parse a probability token; `None` means a diagnostic was recorded.
    fn probability(&mut self, line: usize, what: &str, token: &str) -> Option<f64> {
        match token.parse::<f64>() {
            Ok(p) if (0.0..=1.0).contains(&p) => Some(p),
            Ok(p) => {
                self.error(
                    DiagnosticKind::OutOfRange,
                    line,
                    format!("{what} must lie in [0,1], got {p}"),
                    token,
                );
                None
            }
            Err(_) => {
                self.error(
                    DiagnosticKind::MalformedStatement,
                    line,
                    format!("{what} must be a probability, got '{token}'"),
                    token,
                );
                None
            }
        }
    }

    fn positive_int(&mut self, line: usize, what: &str, token: &str) -> Option<u32> {
        match token.parse::<i128>() {
            Ok(v) if v >= 1 && v <= u32::MAX as i128 => Some(v as u32),
            Ok(v) => {
                self.error(
                    DiagnosticKind::OutOfRange,
                    line,
                    format!("{what} must be a positive integer, got {v}"),
                    token,
                );
                None
            }
            Err(_) => {
                self.error(
                    DiagnosticKind::MalformedStatement,
                    line,
                    format!("{what} must be a positive integer, got '{token}'"),
                    token,
                );
                None
            }
        }
    }

    /// Report a duplicate unless the field is still unset.
    fn fresh(&mut self, line: usize, key: &str, already_set: bool) -> bool {
        if already_set {
            self.error(
                DiagnosticKind::DuplicateKey,
                line,
                format!("'{key}' was already set in this file"),
                key,
            );
            false
        } else {
            true
        }
    }

    fn infected_stmt(&mut self, line: usize, tokens: &[&str]) {
        if tokens.len() < 2 {
            self.error(
                DiagnosticKind::MalformedStatement,
                line,
                "'infected' statement needs a key and a value".into(),
                tokens[0],
            );
            return;
        }
        let key = tokens[1].to_ascii_lowercase();
        match key.as_str() {
            "transmission" => {
                if !self.expect_arity(line, tokens, 3) {
                    return;
                }
                if let Some(p) = self.probability(line, "transmission probability", tokens[2]) {
                    let set = self.fragment.transmission_prob.is_some();
                    if self.fresh(line, "infected transmission", set) {
                        self.fragment.transmission_prob = Some(p);
                    }
                }
            }
            "external" => {
                if !self.expect_arity(line, tokens, 3) {
                    return;
                }
                if let Some(p) = self.probability(line, "external probability", tokens[2]) {
                    let set = self.fragment.external_prob.is_some();
                    if self.fresh(line, "infected external", set) {
                        self.fragment.external_prob = Some(p);
                    }
                }
            }
            "period" => {
                if !self.expect_arity(line, tokens, 3) {
                    return;
                }
                let value = if tokens[2].eq_ignore_ascii_case("unbounded") {
                    Some(InfectiousPeriod::Unbounded)
                } else {
                    self.positive_int(line, "infectious period", tokens[2])
                        .map(InfectiousPeriod::Bounded)
                };
                if let Some(v) = value {
                    let set = self.fragment.infectious_period.is_some();
                    if self.fresh(line, "infected period", set) {
                        self.fragment.infectious_period = Some(v);
                    }
                }
            }
            "persistence" => {
                if !self.expect_arity(line, tokens, 3) {
                    return;
                }
                if let Some(p) = self.probability(line, "persistence probability", tokens[2]) {
                    let set = self.fragment.persistence_prob.is_some();
                    if self.fresh(line, "infected persistence", set) {
                        self.fragment.persistence_prob = Some(p);
                    }
                }
            }
            "initial" => {
                if !self.expect_arity(line, tokens, 3) {
                    return;
                }
                if let Some(v) = self.initial_value(line, tokens[2]) {
                    let set = self.fragment.initial_infected.is_some();
                    if self.fresh(line, "infected initial", set) {
                        self.fragment.initial_infected = Some(v);
                    }
                }
            }
            _ => self.error(
                DiagnosticKind::UnknownKey,
                line,
                format!("unknown 'infected' key '{}'", tokens[1]),
                tokens[1],
            ),
        }
    }

    fn initial_value(&mut self, line: usize, token: &str) -> Option<InitialInfected> {
        if let Ok(v) = token.parse::<i128>() {
            return if (0..=u32::MAX as i128).contains(&v) {
                Some(InitialInfected::Count(v as u32))
            } else {
                self.error(
                    DiagnosticKind::OutOfRange,
                    line,
                    format!("initial infected count must be >= 0, got {v}"),
                    token,
                );
                None
            };
        }
        let mut ids = Vec::new();
        for id in token.split(',') {
            if id.is_empty() {
                self.error(
                    DiagnosticKind::MalformedStatement,
                    line,
                    "empty id in initial infected list".into(),
                    token,
                );
                return None;
            }
            if ids.contains(&id.to_string()) {
                self.warn(
                    DiagnosticKind::DuplicateId,
                    line,
                    format!("duplicate id '{id}' in initial infected list"),
                    id,
                );
            } else {
                ids.push(id.to_string());
            }
        }
        Some(InitialInfected::Ids(ids))
    }

    fn resistant_stmt(&mut self, line: usize, tokens: &[&str]) {
        if tokens.len() < 2 {
            self.error(
                DiagnosticKind::MalformedStatement,
                line,
                "'resistant' statement needs a key and a value".into(),
                tokens[0],
            );
            return;
        }
        let key = tokens[1].to_ascii_lowercase();
        match key.as_str() {
            "probability" => {
                if !self.expect_arity(line, tokens, 3) {
                    return;
                }
                if let Some(p) = self.probability(line, "immunity probability", tokens[2]) {
                    let set = self.fragment.immunity_prob.is_some();
                    if self.fresh(line, "resistant probability", set) {
                        self.fragment.immunity_prob = Some(p);
                    }
                }
            }
            "period" => {
                if !self.expect_arity(line, tokens, 3) {
                    return;
                }
                let value = if tokens[2].eq_ignore_ascii_case("permanent") {
                    Some(ImmunityPeriod::Permanent)
                } else {
                    self.positive_int(line, "immunity period", tokens[2])
                        .map(ImmunityPeriod::Bounded)
                };
                if let Some(v) = value {
                    let set = self.fragment.immunity_period.is_some();
                    if self.fresh(line, "resistant period", set) {
                        self.fragment.immunity_period = Some(v);
                    }
                }
            }
            _ => self.error(
                DiagnosticKind::UnknownKey,
                line,
                format!("unknown 'resistant' key '{}'", tokens[1]),
                tokens[1],
            ),
        }
    }

    fn disease_stmt(&mut self, line: usize, tokens: &[&str]) {
        if !self.expect_arity(line, tokens, 2) {
            return;
        }
        let name = tokens[1];
        let valid = name.chars().next().is_some_and(|c| c.is_ascii_lowercase())
            && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !valid {
            self.error(
                DiagnosticKind::MalformedStatement,
                line,
                format!("disease name must be a lowercase identifier, got '{name}'"),
                name,
            );
            return;
        }
        let set = self.fragment.disease_name.is_some();
        if self.fresh(line, "disease", set) {
            self.fragment.disease_name = Some(name.to_string());
        }
    }

    fn simulation_stmt(&mut self, line: usize, tokens: &[&str]) {
        if tokens.len() < 2 {
            self.error(
                DiagnosticKind::MalformedStatement,
                line,
                "'simulation' statement needs a key and a value".into(),
                tokens[0],
            );
            return;
        }
        let key = tokens[1].to_ascii_lowercase();
        match key.as_str() {
            "runs" => {
                if !self.expect_arity(line, tokens, 3) {
                    return;
                }
                if let Some(v) = self.positive_int(line, "simulation runs", tokens[2]) {
                    let set = self.fragment.runs.is_some();
                    if self.fresh(line, "simulation runs", set) {
                        self.fragment.runs = Some(v);
                    }
                }
            }
            "horizon" => {
                if !self.expect_arity(line, tokens, 3) {
                    return;
                }
                if let Some(v) = self.positive_int(line, "simulation horizon", tokens[2]) {
                    let set = self.fragment.horizon.is_some();
                    if self.fresh(line, "simulation horizon", set) {
                        self.fragment.horizon = Some(v);
                    }
                }
            }
            "seed" => {
                if !self.expect_arity(line, tokens, 3) {
                    return;
                }
                match tokens[2].parse::<u64>() {
                    Ok(v) => {
                        let set = self.fragment.seed.is_some();
                        if self.fresh(line, "simulation seed", set) {
                            self.fragment.seed = Some(v);
                        }
                    }
                    Err(_) if tokens[2].parse::<i128>().is_ok() => self.error(
                        DiagnosticKind::OutOfRange,
                        line,
                        format!(
                            "seed must fit an unsigned 64-bit integer, got {}",
                            tokens[2]
                        ),
                        tokens[2],
                    ),
                    Err(_) => self.error(
                        DiagnosticKind::MalformedStatement,
                        line,
                        format!("seed must be an unsigned integer, got '{}'", tokens[2]),
                        tokens[2],
                    ),
                }
            }
            _ => self.error(
                DiagnosticKind::UnknownKey,
                line,
                format!("unknown 'simulation' key '{}'", tokens[1]),
                tokens[1],
            ),
        }
    }

    fn population_stmt(&mut self, line: usize, tokens: &[&str]) {
        if tokens.len() < 2 {
            self.error(
                DiagnosticKind::MalformedStatement,
                line,
                "'population' statement needs a key and a value".into(),
                tokens[0],
            );
            return;
        }
        let key = tokens[1].to_ascii_lowercase();
        let value = match key.as_str() {
            "file" => {
                if !self.expect_arity(line, tokens, 3) {
                    return;
                }
                Some(PopulationSource::File(tokens[2].to_string()))
            }
            "random" => {
                if !self.expect_arity(line, tokens, 3) {
                    return;
                }
                self.positive_int(line, "random population size", tokens[2])
                    .map(PopulationSource::Random)
            }
            _ => {
                self.error(
                    DiagnosticKind::UnknownKey,
                    line,
                    format!("unknown 'population' key '{}'", tokens[1]),
                    tokens[1],
                );
                None
            }
        };
        if let Some(v) = value {
            let set = self.fragment.population_source.is_some();
            if self.fresh(line, "population", set) {
                self.fragment.population_source = Some(v);
            }
        }
    }

    fn contacts_stmt(&mut self, line: usize, tokens: &[&str]) {
        if tokens.len() < 2 {
            self.error(
                DiagnosticKind::MalformedStatement,
                line,
                "'contacts' statement needs a key".into(),
                tokens[0],
            );
            return;
        }
        let key = tokens[1].to_ascii_lowercase();
        match key.as_str() {
            "file" => {
                if !self.expect_arity(line, tokens, 3) {
                    return;
                }
                let set = self.fragment.contacts_source.is_some();
                if self.fresh(line, "contacts", set) {
                    self.fragment.contacts_source =
                        Some(ContactsSource::File(tokens[2].to_string()));
                }
            }
            "random" => {
                if !self.expect_arity(line, tokens, 4) {
                    return;
                }
                let Some(edge_prob) = self.probability(line, "contact edge probability", tokens[2])
                else {
                    return;
                };
                let regime = match tokens[3].to_ascii_lowercase().as_str() {
                    "static" => ContactRegime::Static,
                    "perstep" => ContactRegime::PerTimestep,
                    other => {
                        self.error(
                            DiagnosticKind::MalformedStatement,
                            line,
                            format!("contact regime must be 'static' or 'perstep', got '{other}'"),
                            tokens[3],
                        );
                        return;
                    }
                };
                let set = self.fragment.contacts_source.is_some();
                if self.fresh(line, "contacts", set) {
                    self.fragment.contacts_source =
                        Some(ContactsSource::Random { edge_prob, regime });
                }
            }
            "undirected" => {
                if !self.expect_arity(line, tokens, 2) {
                    return;
                }
                let set = self.fragment.contacts_undirected.is_some();
                if self.fresh(line, "contacts undirected", set) {
                    self.fragment.contacts_undirected = Some(true);
                }
            }
            _ => self.error(
                DiagnosticKind::UnknownKey,
                line,
                format!("unknown 'contacts' key '{}'", tokens[1]),
                tokens[1],
            ),
        }
    }

    fn query_stmt(&mut self, line: usize, tokens: &[&str]) {
        if !self.expect_arity(line, tokens, 2) {
            return;
        }
        match Compartment::from_keyword(tokens[1]) {
            Some(c) => {
                self.fragment
                    .queries
                    .get_or_insert_with(BTreeSet::new)
                    .insert(c);
            }
            None => self.error(
                DiagnosticKind::UnknownKey,
                line,
                format!("unknown compartment '{}' in query", tokens[1]),
                tokens[1],
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diag::Severity;

    #[test]
    fn listing_style_fragment_parses() {
        let (frag, diags) =
            parse_fragment("infected transmission 0.8\ninfected external 0.1\ninfected period 7");
        assert!(diags.is_empty());
        assert_eq!(frag.transmission_prob, Some(0.8));
        assert_eq!(frag.external_prob, Some(0.1));
        assert_eq!(frag.infectious_period, Some(InfectiousPeriod::Bounded(7)));
    }

    #[test]
    fn empty_input_gives_empty_fragment() {
        let (frag, diags) = parse_fragment("");
        assert!(frag.is_empty());
        assert!(diags.is_empty());
    }

    #[test]
    fn out_of_range_probability_is_an_error_with_line() {
        let (frag, diags) = parse_fragment("infected transmission 1.5");
        assert!(frag.transmission_prob.is_none());
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind, DiagnosticKind::OutOfRange);
        assert_eq!(diags[0].line, 1);
        assert_eq!(diags[0].severity, Severity::Error);
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let (frag, diags) = parse_fragment("# a comment\n\n  \ndisease flu\n");
        assert!(diags.is_empty());
        assert_eq!(frag.disease_name.as_deref(), Some("flu"));
    }

    #[test]
    fn keywords_are_case_insensitive() {
        let (frag, diags) = parse_fragment("Infected Transmission 0.5\nQUERY Infected");
        assert!(diags.is_empty(), "{diags:?}");
        assert_eq!(frag.transmission_prob, Some(0.5));
        assert!(frag.queries.unwrap().contains(&Compartment::Infected));
    }

    #[test]
    fn duplicate_key_is_reported() {
        let (frag, diags) = parse_fragment("infected external 0.1\ninfected external 0.2");
        assert_eq!(frag.external_prob, Some(0.1));
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind, DiagnosticKind::DuplicateKey);
        assert_eq!(diags[0].line, 2);
    }

    #[test]
    fn unknown_compartment_and_key() {
        let (_, diags) = parse_fragment("vaccinated rate 0.5\ninfected frobnication 1");
        assert_eq!(diags.len(), 2);
        assert!(diags.iter().all(|d| d.kind == DiagnosticKind::UnknownKey));
    }

    #[test]
    fn malformed_statements() {
        let (_, diags) = parse_fragment(
            "infected transmission\ninfected transmission zero\ncontacts random 0.5 sometimes",
        );
        assert_eq!(diags.len(), 3);
        assert!(diags
            .iter()
            .all(|d| d.kind == DiagnosticKind::MalformedStatement));
    }

    #[test]
    fn initial_accepts_count_and_id_list() {
        let (frag, diags) = parse_fragment("infected initial 3");
        assert!(diags.is_empty());
        assert_eq!(frag.initial_infected, Some(InitialInfected::Count(3)));

        let (frag, diags) = parse_fragment("infected initial alice,bob");
        assert!(diags.is_empty());
        assert_eq!(
            frag.initial_infected,
            Some(InitialInfected::Ids(vec!["alice".into(), "bob".into()]))
        );
    }

    #[test]
    fn period_keywords() {
        let (frag, _) = parse_fragment("infected period unbounded\nresistant period permanent");
        assert_eq!(frag.infectious_period, Some(InfectiousPeriod::Unbounded));
        assert_eq!(frag.immunity_period, Some(ImmunityPeriod::Permanent));

        let (_, diags) = parse_fragment("infected period 0");
        assert_eq!(diags[0].kind, DiagnosticKind::OutOfRange);
    }

    #[test]
    fn merge_model_overrides_defaults() {
        let (defaults, _) = parse_fragment("infected external 0.1");
        let spec = merge_specs(&defaults, &SpecFragment::default()).unwrap();
        assert_eq!(spec.external_prob, 0.1);

        let (model, _) = parse_fragment("infected external 0.2");
        let spec = merge_specs(&defaults, &model).unwrap();
        assert_eq!(spec.external_prob, 0.2);
    }

    #[test]
    fn merge_of_empty_fragments_is_built_in_defaults() {
        let spec = merge_specs(&SpecFragment::default(), &SpecFragment::default()).unwrap();
        assert_eq!(spec, ModelSpec::built_in_defaults());
        assert_eq!(spec.transmission_prob, 0.0);
        assert_eq!(spec.external_prob, 0.0);
        assert_eq!(spec.infectious_period, InfectiousPeriod::Unbounded);
        assert_eq!(spec.persistence_prob, 1.0);
        assert_eq!(spec.immunity_prob, 0.0);
        assert_eq!(spec.horizon, 12);
        assert_eq!(spec.runs, 1);
        assert_eq!(spec.queries.len(), 4);
    }

    #[test]
    fn merge_rejects_empty_query_set() {
        let model = SpecFragment {
            queries: Some(BTreeSet::new()),
            ..SpecFragment::default()
        };
        let err = merge_specs(&SpecFragment::default(), &model).unwrap_err();
        assert!(matches!(err, MergeError::InvalidMerge(_)));
    }

    #[test]
    fn fragment_round_trips_through_text() {
        let text = "disease flu\ninfected transmission 0.8\ninfected external 0.1\n\
                    infected period 7\ninfected persistence 0.75\ninfected initial alice,bob\n\
                    resistant probability 0.9\nresistant period 10\nsimulation horizon 12\n\
                    simulation runs 5\nsimulation seed 42\npopulation file people.csv\n\
                    contacts random 0.25 perstep\ncontacts undirected\nquery infected\n\
                    query resistant\n";
        let (frag, diags) = parse_fragment(text);
        assert!(diags.is_empty());
        let (reparsed, diags2) = parse_fragment(&frag.to_text());
        assert!(diags2.is_empty());
        assert_eq!(frag, reparsed);
    }

    #[test]
    fn diagnostics_reference_real_lines() {
        let text = "disease flu\nbogus line here\ninfected period -1\n";
        let (_, diags) = parse_fragment(text);
        let line_count = text.lines().count();
        assert!(!diags.is_empty());
        for d in &diags {
            assert!(d.line >= 1 && d.line <= line_count);
        }
    }

    #[test]
    fn parse_model_rejects_errors() {
        assert!(parse_model("infected transmission 2.0").is_err());
        assert!(parse_model("infected transmission 0.5").is_ok());
    }
}
