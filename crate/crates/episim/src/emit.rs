//! Emission of the compiled model as human-readable probabilistic-logic
//! program text, for inspection and for running on external engines.
//!
//! Relational mode keeps the time variable symbolic: a `time/1` predicate
//! bounds it, default susceptibility and its two inhibitors come first, then
//! the probabilistic infection causes, the deterministic rules, and the
//! query goals. Grounded mode replaces the time variable with constants and
//! unrolls every per-timestep clause, which sidesteps generic grounding in
//! the consuming engine; individuals stay relational in both modes.
//!
//! Output is deterministic and byte-stable for fixed inputs. Predicates are
//! named `<disease>__<compartment>`.

use crate::dsl::{
    ContactsSource, ImmunityPeriod, InfectiousPeriod, InitialInfected, ModelSpec, PopulationSource,
};
use crate::population::TemporalContactGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitMode {
    Relational,
    Grounded,
}

/// Render `p::` annotations: probabilities print minimally but always with a
/// decimal point, so an inert clause reads `0.0::head`.
fn fmt_prob(p: f64) -> String {
    if p == p.trunc() {
        format!("{p:.1}")
    } else {
        format!("{p}")
    }
}

/// Quote a token as a Prolog atom when it is not already a plain one.
fn atom(token: &str) -> String {
    let plain = token.chars().next().is_some_and(|c| c.is_ascii_lowercase())
        && token.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if plain {
        token.to_string()
    } else {
        format!("'{}'", token.replace('\'', "''"))
    }
}

struct Program {
    paragraphs: Vec<String>,
}

impl Program {
    fn new() -> Program {
        Program {
            paragraphs: Vec::new(),
        }
    }

    fn paragraph(&mut self, text: String) {
        self.paragraphs.push(text);
    }

    fn clause(&mut self, head: String, body: &[String]) {
        self.paragraphs
            .push(format!("{} :-\n    {}.", head, body.join(", ")));
    }

    fn render(self) -> String {
        let mut out = self.paragraphs.join("\n\n");
        out.push('\n');
        out
    }
}

/// Emit the program text for a compiled (spec, graph) pair.
pub fn emit_program(spec: &ModelSpec, graph: &TemporalContactGraph, mode: EmitMode) -> String {
    let mut program = Program::new();
    data_block(&mut program, spec, graph);
    seed_block(&mut program, spec);
    match mode {
        EmitMode::Relational => relational_rules(&mut program, spec),
        EmitMode::Grounded => grounded_rules(&mut program, spec),
    }
    queries(&mut program, spec, mode);
    program.render()
}

/// Population and contact data: csv_load directives for file sources, inline
/// facts for generated ones. An undirected contact file is loaded into a raw
/// relation and mirrored by two bridge rules, since the engine symmetrizes
/// at load time.
fn data_block(program: &mut Program, spec: &ModelSpec, graph: &TemporalContactGraph) {
    let mut directives = Vec::new();
    let population_file = match &spec.population_source {
        PopulationSource::File(path) => Some(path.clone()),
        PopulationSource::Random(_) => None,
    };
    let contacts_file = match &spec.contacts_source {
        ContactsSource::File(path) => Some(path.clone()),
        ContactsSource::Random { .. } => None,
    };
    if population_file.is_some() || contacts_file.is_some() {
        directives.push(":- use_module(library(db)).".to_string());
    }
    if let Some(path) = &population_file {
        directives.push(format!(":- csv_load({},'person').", atom(path)));
    }
    if let Some(path) = &contacts_file {
        let relation = if spec.contacts_undirected {
            "airborne_contact_raw"
        } else {
            "airborne_contact"
        };
        directives.push(format!(":- csv_load({},'{relation}').", atom(path)));
    }
    if !directives.is_empty() {
        program.paragraph(directives.join("\n"));
    }
    if contacts_file.is_some() && spec.contacts_undirected {
        program.clause(
            "airborne_contact(X,Y,N)".to_string(),
            &["airborne_contact_raw(X,Y,N)".to_string()],
        );
        program.clause(
            "airborne_contact(X,Y,N)".to_string(),
            &["airborne_contact_raw(Y,X,N)".to_string()],
        );
    }
    if population_file.is_none() {
        let facts: Vec<String> = graph
            .individuals()
            .iter()
            .map(|id| format!("person({}).", atom(id)))
            .collect();
        if !facts.is_empty() {
            program.paragraph(facts.join("\n"));
        }
    }
    if contacts_file.is_none() {
        let facts: Vec<String> = graph
            .events()
            .iter()
            .map(|e| {
                format!(
                    "airborne_contact({},{},{}).",
                    atom(&e.target),
                    atom(&e.source),
                    e.timestep
                )
            })
            .collect();
        if !facts.is_empty() {
            program.paragraph(facts.join("\n"));
        }
    }
}

/// Explicitly listed seed individuals become facts at t=1. Count-based
/// seeding is sampler configuration and is not serialized.
fn seed_block(program: &mut Program, spec: &ModelSpec) {
    if let InitialInfected::Ids(ids) = &spec.initial_infected {
        let d = &spec.disease_name;
        let facts: Vec<String> = ids
            .iter()
            .map(|id| format!("{d}__infected({},1).", atom(id)))
            .collect();
        if !facts.is_empty() {
            program.paragraph(facts.join("\n"));
        }
    }
}

fn relational_rules(program: &mut Program, spec: &ModelSpec) {
    let d = &spec.disease_name;
    program.clause(
        "time(N)".to_string(),
        &[format!("between(1,{},N)", spec.horizon)],
    );

    // Default susceptibility and its two inhibitors.
    program.clause(
        format!("{d}__susceptible(X,N)"),
        &["time(N)".to_string(), "person(X)".to_string()],
    );
    program.clause(
        format!("\\+{d}__susceptible(X,N)"),
        &["time(N)".to_string(), format!("{d}__infected(X,N)")],
    );
    program.clause(
        format!("\\+{d}__susceptible(X,N)"),
        &["time(N)".to_string(), format!("{d}__resistant(X,N)")],
    );

    // External infection.
    program.clause(
        format!("{}::{d}__infected(X,M)", fmt_prob(spec.external_prob)),
        &[
            "time(M)".to_string(),
            "N is M-1".to_string(),
            format!("\\+{d}__infected(X,N)"),
            format!("{d}__susceptible(X,N)"),
        ],
    );

    // Transmission by contact.
    program.clause(
        format!("{}::{d}__infected(X,M)", fmt_prob(spec.transmission_prob)),
        &[
            "time(M)".to_string(),
            "N is M-1".to_string(),
            "airborne_contact(X,Y,N)".to_string(),
            format!("{d}__susceptible(X,N)"),
            format!("{d}__infected(Y,N)"),
        ],
    );

    // Persistence: deterministic rule at probability 1, probabilistic below.
    let persistence_head = if spec.persistence_prob >= 1.0 {
        format!("{d}__infected(X,M)")
    } else {
        format!("{}::{d}__infected(X,M)", fmt_prob(spec.persistence_prob))
    };
    program.clause(
        persistence_head,
        &[
            "time(M)".to_string(),
            "N is M-1".to_string(),
            format!("{d}__infected(X,N)"),
        ],
    );

    // Period inhibitor overrides the positive causes.
    if let InfectiousPeriod::Bounded(period) = spec.infectious_period {
        program.clause(
            format!("\\+{d}__infected(X,M)"),
            &[
                "time(M)".to_string(),
                format!("N is M-{period}"),
                format!("{d}__infected(X,N)"),
            ],
        );
    }

    // Recovery overlay.
    program.clause(
        format!("{d}__recovered(X,M)"),
        &[
            "time(M)".to_string(),
            "N is M-1".to_string(),
            format!("{d}__infected(X,N)"),
            format!("\\+{d}__infected(X,M)"),
        ],
    );

    // Immunity on recovery, then its persistence.
    program.clause(
        format!("{}::{d}__resistant(X,N)", fmt_prob(spec.immunity_prob)),
        &["time(N)".to_string(), format!("{d}__recovered(X,N)")],
    );
    program.clause(
        format!("{d}__resistant(X,M)"),
        &[
            "time(M)".to_string(),
            "N is M-1".to_string(),
            format!("{d}__resistant(X,N)"),
        ],
    );

    // Bounded immunity: mark spell onsets and inhibit the chain when a
    // spell reaches its full length.
    if let ImmunityPeriod::Bounded(period) = spec.immunity_period {
        program.clause(
            format!("{d}__immune_onset(X,N)"),
            &[
                "time(N)".to_string(),
                format!("{d}__recovered(X,N)"),
                format!("{d}__resistant(X,N)"),
            ],
        );
        program.clause(
            format!("\\+{d}__resistant(X,M)"),
            &[
                "time(M)".to_string(),
                format!("N is M-{period}"),
                format!("{d}__immune_onset(X,N)"),
            ],
        );
    }
}

fn grounded_rules(program: &mut Program, spec: &ModelSpec) {
    let d = &spec.disease_name;
    let horizon = spec.horizon;

    for t in 1..=horizon {
        program.clause(
            format!("{d}__susceptible(X,{t})"),
            &["person(X)".to_string()],
        );
    }
    for t in 1..=horizon {
        program.clause(
            format!("\\+{d}__susceptible(X,{t})"),
            &[format!("{d}__infected(X,{t})")],
        );
    }
    for t in 1..=horizon {
        program.clause(
            format!("\\+{d}__susceptible(X,{t})"),
            &[format!("{d}__resistant(X,{t})")],
        );
    }
    for t in 2..=horizon {
        program.clause(
            format!("{}::{d}__infected(X,{t})", fmt_prob(spec.external_prob)),
            &[
                format!("\\+{d}__infected(X,{})", t - 1),
                format!("{d}__susceptible(X,{})", t - 1),
            ],
        );
    }
    for t in 2..=horizon {
        program.clause(
            format!("{}::{d}__infected(X,{t})", fmt_prob(spec.transmission_prob)),
            &[
                format!("airborne_contact(X,Y,{})", t - 1),
                format!("{d}__susceptible(X,{})", t - 1),
                format!("{d}__infected(Y,{})", t - 1),
            ],
        );
    }
    for t in 2..=horizon {
        let head = if spec.persistence_prob >= 1.0 {
            format!("{d}__infected(X,{t})")
        } else {
            format!("{}::{d}__infected(X,{t})", fmt_prob(spec.persistence_prob))
        };
        program.clause(head, &[format!("{d}__infected(X,{})", t - 1)]);
    }
    if let InfectiousPeriod::Bounded(period) = spec.infectious_period {
        for t in (period + 1)..=horizon {
            program.clause(
                format!("\\+{d}__infected(X,{t})"),
                &[format!("{d}__infected(X,{})", t - period)],
            );
        }
    }
    for t in 2..=horizon {
        program.clause(
            format!("{d}__recovered(X,{t})"),
            &[
                format!("{d}__infected(X,{})", t - 1),
                format!("\\+{d}__infected(X,{t})"),
            ],
        );
    }
    for t in 1..=horizon {
        program.clause(
            format!("{}::{d}__resistant(X,{t})", fmt_prob(spec.immunity_prob)),
            &[format!("{d}__recovered(X,{t})")],
        );
    }
    for t in 2..=horizon {
        program.clause(
            format!("{d}__resistant(X,{t})"),
            &[format!("{d}__resistant(X,{})", t - 1)],
        );
    }
    if let ImmunityPeriod::Bounded(period) = spec.immunity_period {
        for t in 1..=horizon {
            program.clause(
                format!("{d}__immune_onset(X,{t})"),
                &[
                    format!("{d}__recovered(X,{t})"),
                    format!("{d}__resistant(X,{t})"),
                ],
            );
        }
        for t in (period + 1)..=horizon {
            program.clause(
                format!("\\+{d}__resistant(X,{t})"),
                &[format!("{d}__immune_onset(X,{})", t - period)],
            );
        }
    }
}

fn queries(program: &mut Program, spec: &ModelSpec, mode: EmitMode) {
    let d = &spec.disease_name;
    let mut goals = Vec::new();
    for c in &spec.queries {
        match mode {
            EmitMode::Relational => goals.push(format!("query({d}__{}(X,N)).", c.name())),
            EmitMode::Grounded => {
                for t in 1..=spec.horizon {
                    goals.push(format!("query({d}__{}(X,{t})).", c.name()));
                }
            }
        }
    }
    program.paragraph(goals.join("\n"));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{merge_specs, parse_fragment, SpecFragment};
    use crate::population::{ContactEvent, TemporalContactGraph};

    fn canonical_sir() -> ModelSpec {
        let (model, diags) = parse_fragment(
            "disease flu\ninfected transmission 0.8\ninfected external 0.1\n\
             infected period 7\nresistant probability 0.9\nsimulation horizon 12\n",
        );
        assert!(diags.is_empty());
        merge_specs(&SpecFragment::default(), &model).unwrap()
    }

    fn file_graph() -> TemporalContactGraph {
        TemporalContactGraph::new(
            vec!["alice".to_string(), "bob".to_string()],
            vec![ContactEvent::new("bob", "alice", 1)],
        )
        .unwrap()
    }

    #[test]
    fn relational_contains_listing_shaped_clauses() {
        let text = emit_program(&canonical_sir(), &file_graph(), EmitMode::Relational);
        assert!(text.contains(":- csv_load('individualsList.csv','person')."));
        assert!(text.contains(":- csv_load('contactList.csv','airborne_contact')."));
        assert!(text.contains("time(N) :-\n    between(1,12,N)."));
        assert!(text.contains("flu__susceptible(X,N) :-\n    time(N), person(X)."));
        assert!(text.contains("\\+flu__susceptible(X,N) :-\n    time(N), flu__infected(X,N)."));
        assert!(text.contains(
            "0.8::flu__infected(X,M) :-\n    time(M), N is M-1, airborne_contact(X,Y,N), \
             flu__susceptible(X,N), flu__infected(Y,N)."
        ));
        assert!(text.contains("\\+flu__infected(X,M) :-\n    time(M), N is M-7"));
        assert!(text.contains("0.9::flu__resistant(X,N)"));
        assert!(text.contains("query(flu__susceptible(X,N))."));
        assert!(text.ends_with("query(flu__resistant(X,N)).\n"));
    }

    #[test]
    fn inert_spec_annotates_zero_probabilities() {
        let spec = merge_specs(&SpecFragment::default(), &SpecFragment::default()).unwrap();
        let graph = TemporalContactGraph::new(vec!["a".to_string()], vec![]).unwrap();
        let text = emit_program(&spec, &graph, EmitMode::Relational);
        for line in text.lines() {
            if let Some(idx) = line.find("::") {
                assert!(
                    line[..idx].ends_with("0.0"),
                    "unexpected annotation in {line}"
                );
            }
        }
        assert!(text.contains("0.0::disease__infected(X,M)"));
    }

    #[test]
    fn emission_is_deterministic() {
        let spec = canonical_sir();
        let graph = file_graph();
        let a = emit_program(&spec, &graph, EmitMode::Relational);
        let b = emit_program(&spec, &graph, EmitMode::Relational);
        assert_eq!(a, b);
        let a = emit_program(&spec, &graph, EmitMode::Grounded);
        let b = emit_program(&spec, &graph, EmitMode::Grounded);
        assert_eq!(a, b);
    }

    #[test]
    fn emission_varies_with_transmission_probability() {
        let graph = file_graph();
        let mut spec = canonical_sir();
        let a = emit_program(&spec, &graph, EmitMode::Relational);
        spec.transmission_prob = 0.75;
        let b = emit_program(&spec, &graph, EmitMode::Relational);
        assert_ne!(a, b);
    }

    #[test]
    fn grounded_unrolls_the_time_variable() {
        let mut spec = canonical_sir();
        spec.horizon = 3;
        let text = emit_program(&spec, &file_graph(), EmitMode::Grounded);
        assert!(!text.contains("time("));
        assert!(!text.contains("N is"));
        assert!(text.contains(
            "0.1::flu__infected(X,2) :-\n    \\+flu__infected(X,1), flu__susceptible(X,1)."
        ));
        assert!(text.contains(
            "0.1::flu__infected(X,3) :-\n    \\+flu__infected(X,2), flu__susceptible(X,2)."
        ));
        assert!(text.contains("query(flu__infected(X,1))."));
        assert!(text.contains("query(flu__infected(X,3))."));
    }

    #[test]
    fn random_sources_emit_inline_facts() {
        let mut spec = canonical_sir();
        spec.population_source = crate::dsl::PopulationSource::Random(2);
        spec.contacts_source = crate::dsl::ContactsSource::Random {
            edge_prob: 1.0,
            regime: crate::dsl::ContactRegime::Static,
        };
        spec.horizon = 2;
        let graph =
            crate::population::generate_random(2, 1.0, crate::dsl::ContactRegime::Static, 2, 0);
        let text = emit_program(&spec, &graph, EmitMode::Relational);
        assert!(!text.contains("csv_load"));
        assert!(text.contains("person(p1).\nperson(p2)."));
        assert!(text.contains("airborne_contact(p1,p2,1)."));
        assert!(text.contains("airborne_contact(p2,p1,1)."));
    }

    #[test]
    fn undirected_file_contacts_get_bridge_rules() {
        let mut spec = canonical_sir();
        spec.contacts_undirected = true;
        let text = emit_program(&spec, &file_graph(), EmitMode::Relational);
        assert!(text.contains(":- csv_load('contactList.csv','airborne_contact_raw')."));
        assert!(text.contains("airborne_contact(X,Y,N) :-\n    airborne_contact_raw(Y,X,N)."));
    }

    #[test]
    fn id_seeds_become_facts_and_count_seeds_do_not() {
        let mut spec = canonical_sir();
        spec.initial_infected = crate::dsl::InitialInfected::Ids(vec!["bob".to_string()]);
        let text = emit_program(&spec, &file_graph(), EmitMode::Relational);
        assert!(text.contains("flu__infected(bob,1)."));

        spec.initial_infected = crate::dsl::InitialInfected::Count(1);
        let text = emit_program(&spec, &file_graph(), EmitMode::Relational);
        assert!(!text.contains("flu__infected(bob,1)."));
    }

    #[test]
    fn odd_tokens_are_quoted() {
        assert_eq!(atom("alice"), "alice");
        assert_eq!(atom("Alice"), "'Alice'");
        assert_eq!(atom("data/contacts.csv"), "'data/contacts.csv'");
        assert_eq!(atom("it's"), "'it''s'");
    }

    /// Count ground instances of an emitted grounded-mode program: clauses
    /// over X have one instance per individual, transmission clauses one per
    /// contact event at the referenced timestep.
    fn grounded_instance_counts(text: &str, graph: &TemporalContactGraph) -> (usize, usize) {
        let n = graph.len();
        let mut probabilistic = 0usize;
        let mut deterministic = 0usize;
        for paragraph in text.split("\n\n") {
            if !paragraph.contains(" :-") || paragraph.starts_with("query(") {
                continue;
            }
            let multiplicity = match paragraph.find("airborne_contact(X,Y,") {
                Some(at) => {
                    let rest = &paragraph[at + "airborne_contact(X,Y,".len()..];
                    let ts: u32 = rest[..rest.find(')').unwrap()].parse().unwrap();
                    graph.events().iter().filter(|e| e.timestep == ts).count()
                }
                None => n,
            };
            if paragraph.contains("::") {
                probabilistic += multiplicity;
            } else {
                deterministic += multiplicity;
            }
        }
        (probabilistic, deterministic)
    }

    fn deterministic_instances_closed_form(spec: &ModelSpec, n: usize) -> usize {
        let horizon = spec.horizon as usize;
        let mut count = n * horizon; // default susceptibility
        count += 2 * n * horizon; // two susceptibility inhibitors
        if spec.persistence_prob >= 1.0 {
            count += n * (horizon - 1); // deterministic persistence
        }
        if let InfectiousPeriod::Bounded(d) = spec.infectious_period {
            count += n * horizon.saturating_sub(d as usize); // period inhibitor
        }
        count += n * (horizon - 1); // recovery
        count += n * (horizon - 1); // immunity persistence
        if let ImmunityPeriod::Bounded(k) = spec.immunity_period {
            count += n * horizon; // onset markers
            count += n * horizon.saturating_sub(k as usize); // expiry inhibitors
        }
        count
    }

    #[test]
    fn grounded_instances_match_coin_population() {
        use crate::ground::ground;

        // Lone individual, two steps: no transmission instances possible.
        let mut spec = canonical_sir();
        spec.horizon = 2;
        spec.infectious_period = InfectiousPeriod::Unbounded;
        spec.population_source = crate::dsl::PopulationSource::Random(1);
        spec.contacts_source = crate::dsl::ContactsSource::Random {
            edge_prob: 0.0,
            regime: crate::dsl::ContactRegime::Static,
        };
        let graph = TemporalContactGraph::new(vec!["solo".to_string()], vec![]).unwrap();
        let model = ground(&spec, &graph).unwrap();
        let text = emit_program(&spec, &graph, EmitMode::Grounded);
        let (probabilistic, deterministic) = grounded_instance_counts(&text, &graph);
        assert_eq!(probabilistic, model.coin_count());
        assert_eq!(deterministic, deterministic_instances_closed_form(&spec, 1));

        // Two individuals with one contact, stochastic persistence, bounded
        // periods: every coin class and rule family is populated.
        let mut spec = canonical_sir();
        spec.horizon = 4;
        spec.persistence_prob = 0.6;
        spec.infectious_period = InfectiousPeriod::Bounded(2);
        spec.immunity_period = ImmunityPeriod::Bounded(2);
        spec.population_source = crate::dsl::PopulationSource::Random(2);
        spec.contacts_source = crate::dsl::ContactsSource::Random {
            edge_prob: 0.0,
            regime: crate::dsl::ContactRegime::Static,
        };
        let graph = TemporalContactGraph::new(
            vec!["a".to_string(), "b".to_string()],
            vec![
                ContactEvent::new("b", "a", 1),
                ContactEvent::new("a", "b", 2),
            ],
        )
        .unwrap();
        let model = ground(&spec, &graph).unwrap();
        let text = emit_program(&spec, &graph, EmitMode::Grounded);
        let (probabilistic, deterministic) = grounded_instance_counts(&text, &graph);
        assert_eq!(probabilistic, model.coin_count());
        assert_eq!(deterministic, deterministic_instances_closed_form(&spec, 2));
    }

    #[test]
    fn bounded_immunity_adds_onset_and_expiry() {
        let mut spec = canonical_sir();
        spec.immunity_period = ImmunityPeriod::Bounded(10);
        let text = emit_program(&spec, &file_graph(), EmitMode::Relational);
        assert!(text.contains(
            "flu__immune_onset(X,N) :-\n    time(N), flu__recovered(X,N), flu__resistant(X,N)."
        ));
        assert!(text.contains(
            "\\+flu__resistant(X,M) :-\n    time(M), N is M-10, flu__immune_onset(X,N)."
        ));
    }
}
