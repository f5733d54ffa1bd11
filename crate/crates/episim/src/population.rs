//! Individuals and time-stamped contacts: CSV loading and pseudo-random
//! generation of a [`TemporalContactGraph`].
//!
//! The CSV dialect is deliberately bare: comma separator, no header row, no
//! quoting, trailing newline optional. An individuals file has one id per
//! row (first column); a contacts file has rows `target,source,timestep`
//! where a contact at timestep N can infect the target at N+1.

use std::collections::BTreeSet;

use rand::Rng;
use thiserror::Error;

use crate::diag::{Diagnostic, DiagnosticKind};
use crate::dsl::ContactRegime;
use crate::rng::graph_rng;

/// A directed, time-stamped potential transmission channel. `target` is the
/// potential infectee, `source` the potential infector.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ContactEvent {
    pub target: String,
    pub source: String,
    pub timestep: u32,
}

impl ContactEvent {
    pub fn new(target: impl Into<String>, source: impl Into<String>, timestep: u32) -> Self {
        ContactEvent {
            target: target.into(),
            source: source.into(),
            timestep,
        }
    }
}

/// Population identifiers plus directed, time-stamped contact events.
/// Individuals are kept sorted lexicographically; that ordering is the
/// deterministic iteration order used everywhere downstream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemporalContactGraph {
    individuals: Vec<String>,
    events: BTreeSet<ContactEvent>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LoadError {
    #[error("no individuals found in input")]
    EmptyFile,
    #[error("line {line}: malformed row: {detail}")]
    MalformedRow { line: usize, detail: String },
    #[error("line {line}: unknown individual '{id}'")]
    UnknownIndividual { line: usize, id: String },
    #[error("line {line}: timestep must be a positive integer, got '{value}'")]
    NonPositiveTimestep { line: usize, value: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("contact endpoint '{id}' is not a known individual")]
    UnknownEndpoint { id: String },
    #[error("self-contact on '{id}' at timestep {timestep}")]
    SelfContact { id: String, timestep: u32 },
}

impl TemporalContactGraph {
    /// Build a graph from parts, enforcing the structural invariants:
    /// endpoints must be known individuals and no event may be a self-loop.
    /// Individuals are sorted and deduplicated; events are set-deduplicated.
    pub fn new<I, E>(individuals: I, events: E) -> Result<TemporalContactGraph, GraphError>
    where
        I: IntoIterator<Item = String>,
        E: IntoIterator<Item = ContactEvent>,
    {
        let mut individuals: Vec<String> = individuals.into_iter().collect();
        individuals.sort();
        individuals.dedup();
        let mut set = BTreeSet::new();
        for event in events {
            if event.target == event.source {
                return Err(GraphError::SelfContact {
                    id: event.target,
                    timestep: event.timestep,
                });
            }
            for endpoint in [&event.target, &event.source] {
                if individuals.binary_search(endpoint).is_err() {
                    return Err(GraphError::UnknownEndpoint {
                        id: endpoint.clone(),
                    });
                }
            }
            set.insert(event);
        }
        Ok(TemporalContactGraph {
            individuals,
            events: set,
        })
    }

    pub fn individuals(&self) -> &[String] {
        &self.individuals
    }

    pub fn events(&self) -> &BTreeSet<ContactEvent> {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    /// Index of an id in the sorted individual list.
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.individuals
            .binary_search_by(|x| x.as_str().cmp(id))
            .ok()
    }

    /// Serialize contacts as CSV rows sorted by (target, source, timestep).
    pub fn contacts_to_csv(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&format!("{},{},{}\n", e.target, e.source, e.timestep));
        }
        out
    }

    /// Serialize individuals as one-column CSV, sorted.
    pub fn individuals_to_csv(&self) -> String {
        let mut out = String::new();
        for id in &self.individuals {
            out.push_str(id);
            out.push('\n');
        }
        out
    }
}

fn validate_id(line: usize, id: &str) -> Result<(), LoadError> {
    if id.is_empty() {
        return Err(LoadError::MalformedRow {
            line,
            detail: "empty id".into(),
        });
    }
    if id.chars().any(char::is_whitespace) {
        return Err(LoadError::MalformedRow {
            line,
            detail: format!("id '{id}' contains whitespace"),
        });
    }
    Ok(())
}

/// Load individual ids from one-column CSV text: first column of each row,
/// no header. Duplicates are dropped with a warning; the result is sorted
/// lexicographically. Fails with [`LoadError::EmptyFile`] when no ids remain.
pub fn load_individuals(text: &str) -> Result<(Vec<String>, Vec<Diagnostic>), LoadError> {
    let mut ids: Vec<String> = Vec::new();
    let mut diagnostics = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let row = raw.trim_end_matches('\r');
        if row.trim().is_empty() {
            continue;
        }
        let id = row.split(',').next().unwrap_or("").trim();
        validate_id(line, id)?;
        if ids.iter().any(|x| x == id) {
            diagnostics.push(
                Diagnostic::warning(
                    DiagnosticKind::DuplicateId,
                    line,
                    format!("duplicate individual '{id}' ignored"),
                )
                .with_token(id),
            );
        } else {
            ids.push(id.to_string());
        }
    }
    if ids.is_empty() {
        return Err(LoadError::EmptyFile);
    }
    ids.sort();
    Ok((ids, diagnostics))
}

/// Load contact events from three-column CSV text `target,source,timestep`.
/// Rows referencing ids outside `known_ids` are errors. If `undirected`, each
/// row also yields its reverse. Timesteps at or beyond `horizon` are retained
/// with a warning: a contact at N acts at N+1, so it can never cause an
/// infection within the horizon.
pub fn load_contacts(
    text: &str,
    known_ids: &[String],
    undirected: bool,
    horizon: u32,
) -> Result<(BTreeSet<ContactEvent>, Vec<Diagnostic>), LoadError> {
    let mut events = BTreeSet::new();
    let mut diagnostics = Vec::new();
    let known = |id: &str| known_ids.iter().any(|x| x == id);
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let row = raw.trim_end_matches('\r');
        if row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(LoadError::MalformedRow {
                line,
                detail: format!("expected 3 columns, got {}", fields.len()),
            });
        }
        let (target, source, ts_text) = (fields[0], fields[1], fields[2]);
        validate_id(line, target)?;
        validate_id(line, source)?;
        for id in [target, source] {
            if !known(id) {
                return Err(LoadError::UnknownIndividual {
                    line,
                    id: id.to_string(),
                });
            }
        }
        if target == source {
            return Err(LoadError::MalformedRow {
                line,
                detail: format!("self-contact on '{target}'"),
            });
        }
        let timestep = match ts_text.parse::<i64>() {
            Ok(v) if v >= 1 && v <= u32::MAX as i64 => v as u32,
            _ => {
                return Err(LoadError::NonPositiveTimestep {
                    line,
                    value: ts_text.to_string(),
                })
            }
        };
        if timestep >= horizon {
            diagnostics.push(
                Diagnostic::warning(
                    DiagnosticKind::LateTimestep,
                    line,
                    format!(
                        "contact at timestep {timestep} can never cause an infection \
                         within horizon {horizon}"
                    ),
                )
                .with_token(ts_text),
            );
        }
        let inserted = events.insert(ContactEvent::new(target, source, timestep));
        if !inserted {
            diagnostics.push(
                Diagnostic::warning(
                    DiagnosticKind::DuplicateContact,
                    line,
                    format!("duplicate contact ({target},{source},{timestep}) ignored"),
                )
                .with_token(target),
            );
        }
        if undirected {
            events.insert(ContactEvent::new(source, target, timestep));
        }
    }
    Ok((events, diagnostics))
}

/// Erdős–Rényi contacts over the given individuals: each unordered pair is
/// included independently with probability `edge_prob`; an included pair
/// yields both directed events. `Static` decides once per pair and replicates
/// at every timestep 1..horizon-1; `PerTimestep` decides independently at
/// each timestep. Deterministic in all arguments.
pub fn generate_contacts(
    individuals: &[String],
    edge_prob: f64,
    regime: ContactRegime,
    horizon: u32,
    seed: u64,
) -> BTreeSet<ContactEvent> {
    let mut rng = graph_rng(seed);
    let mut events = BTreeSet::new();
    let n = individuals.len();
    // Contacts at the final step would act beyond the horizon.
    let last_step = horizon.saturating_sub(1);
    let add_pair = |events: &mut BTreeSet<ContactEvent>, i: usize, j: usize, t: u32| {
        events.insert(ContactEvent::new(&individuals[i], &individuals[j], t));
        events.insert(ContactEvent::new(&individuals[j], &individuals[i], t));
    };
    match regime {
        ContactRegime::Static => {
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random_bool(edge_prob) {
                        for t in 1..=last_step {
                            add_pair(&mut events, i, j, t);
                        }
                    }
                }
            }
        }
        ContactRegime::PerTimestep => {
            for t in 1..=last_step {
                for i in 0..n {
                    for j in (i + 1)..n {
                        if rng.random_bool(edge_prob) {
                            add_pair(&mut events, i, j, t);
                        }
                    }
                }
            }
        }
    }
    events
}

/// Generate a whole random graph: individuals named `p1`..`pn` plus
/// Erdős–Rényi contacts per [`generate_contacts`].
pub fn generate_random(
    n: u32,
    edge_prob: f64,
    regime: ContactRegime,
    horizon: u32,
    seed: u64,
) -> TemporalContactGraph {
    assert!(n >= 1, "population size must be >= 1");
    let mut individuals: Vec<String> = (1..=n).map(|i| format!("p{i}")).collect();
    individuals.sort();
    let events = generate_contacts(&individuals, edge_prob, regime, horizon, seed);
    TemporalContactGraph {
        individuals,
        events,
    }
}
