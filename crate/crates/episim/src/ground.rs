//! Compile a ([`ModelSpec`], [`TemporalContactGraph`]) pair into a
//! [`GroundedModel`]: the explicit, time-grounded probabilistic model the
//! engines execute.
//!
//! Every ground instance of a probabilistic clause becomes a [`Coin`] — an
//! independent Bernoulli choice. Coins are materialized for every instance
//! regardless of whether their guard can ever hold; unfired coins are
//! harmless and the uniform population keeps the exact-inference oracle's
//! bookkeeping simple. With a horizon of T over n individuals:
//!
//! - External coins: one per (individual, timestep 2..=T), n·(T-1) total.
//! - Transmission coins: one per contact event at timestep <= T-1; the coin's
//!   timestep is the infection step, event timestep + 1.
//! - Persistence coins: n·(T-1), materialized only when the persistence
//!   probability is below 1 (at exactly 1 persistence is a deterministic rule).
//! - Immunity coins: one per (individual, timestep 1..=T), n·T total; an
//!   immunity coin gates a same-timestep derivation at the step where the
//!   individual counts as recovered.

use thiserror::Error;

use std::collections::BTreeSet;

use crate::dsl::{Compartment, ImmunityPeriod, InfectiousPeriod, InitialInfected, ModelSpec};
use crate::population::TemporalContactGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CoinKind {
    External,
    Transmission,
    Persistence,
    Immunity,
}

/// One ground probabilistic clause instance. `subject` and `source` are
/// indices into the grounded model's individual list.
#[derive(Debug, Clone, PartialEq)]
pub struct Coin {
    pub kind: CoinKind,
    pub subject: usize,
    /// Potential infector; present on transmission coins only.
    pub source: Option<usize>,
    /// The timestep whose state the coin decides.
    pub timestep: u32,
    pub probability: f64,
}

/// A contact event resolved to individual indices, with its coin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundContact {
    pub target: usize,
    pub source: usize,
    pub coin: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GroundError {
    #[error("population is empty")]
    EmptyPopulation,
    #[error("initial infected id '{id}' is not in the population")]
    UnknownSeedIndividual { id: String },
    #[error("initial infected count {requested} exceeds population size {population}")]
    SeedCountExceedsPopulation { requested: u32, population: usize },
}

/// The compiled model: coin population in a fixed deterministic order plus
/// the deterministic rule parameters. Immutable after construction and
/// freely shareable across simulation workers.
#[derive(Debug, Clone)]
pub struct GroundedModel {
    pub horizon: u32,
    pub individuals: Vec<String>,
    /// Ordered by (kind, subject, source, timestep).
    pub coins: Vec<Coin>,
    pub infectious_period: InfectiousPeriod,
    pub immunity_period: ImmunityPeriod,
    /// True when persistence is a deterministic rule rather than a coin.
    pub persistence_deterministic: bool,
    /// Individual indices seeded infected at t=1, sorted.
    pub initial_infected: Vec<usize>,
    pub queries: BTreeSet<Compartment>,
    external_offset: usize,
    persistence_offset: Option<usize>,
    immunity_offset: usize,
    /// Index by infection step t in 2..=T: contacts acting at t, sorted by
    /// (target, source), with their transmission coin indices.
    contacts_by_step: Vec<Vec<GroundContact>>,
}

impl GroundedModel {
    pub fn population(&self) -> usize {
        self.individuals.len()
    }

    /// Index of the external coin deciding infection of `subject` at step `t`.
    pub fn external_coin(&self, subject: usize, t: u32) -> usize {
        debug_assert!((2..=self.horizon).contains(&t));
        self.external_offset + subject * (self.horizon as usize - 1) + (t as usize - 2)
    }

    /// Index of the persistence coin for `subject` at step `t`, if
    /// persistence is stochastic.
    pub fn persistence_coin(&self, subject: usize, t: u32) -> Option<usize> {
        debug_assert!((2..=self.horizon).contains(&t));
        self.persistence_offset
            .map(|base| base + subject * (self.horizon as usize - 1) + (t as usize - 2))
    }

    /// Index of the immunity coin for `subject` at step `t`.
    pub fn immunity_coin(&self, subject: usize, t: u32) -> usize {
        debug_assert!((1..=self.horizon).contains(&t));
        self.immunity_offset + subject * self.horizon as usize + (t as usize - 1)
    }

    /// Contacts whose transmission coins act at infection step `t`,
    /// sorted by (target, source).
    pub fn contacts_at(&self, t: u32) -> &[GroundContact] {
        if (2..=self.horizon).contains(&t) {
            &self.contacts_by_step[t as usize - 2]
        } else {
            &[]
        }
    }

    pub fn coin_count(&self) -> usize {
        self.coins.len()
    }

    /// Coins whose probability is strictly between 0 and 1; only these need
    /// enumeration during exact inference.
    pub fn enumerable_coins(&self) -> Vec<usize> {
        self.coins
            .iter()
            .enumerate()
            .filter(|(_, c)| c.probability > 0.0 && c.probability < 1.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Compile the spec against a graph. Fails if the population is empty or the
/// seed configuration does not fit it.
pub fn ground(
    spec: &ModelSpec,
    graph: &TemporalContactGraph,
) -> Result<GroundedModel, GroundError> {
    let individuals: Vec<String> = graph.individuals().to_vec();
    let n = individuals.len();
    if n == 0 {
        return Err(GroundError::EmptyPopulation);
    }
    let horizon = spec.horizon;
    let steps = horizon as usize - 1;

    let initial_infected = resolve_seeds(&spec.initial_infected, graph)?;

    let mut coins = Vec::new();

    // External block: subject-major, then timestep.
    let external_offset = 0;
    for subject in 0..n {
        for t in 2..=horizon {
            coins.push(Coin {
                kind: CoinKind::External,
                subject,
                source: None,
                timestep: t,
                probability: spec.external_prob,
            });
        }
    }
    debug_assert_eq!(coins.len(), n * steps);

    // Transmission block: one coin per contact event acting within the
    // horizon, ordered by (target, source, infection step).
    let mut ground_events: Vec<(usize, usize, u32)> = graph
        .events()
        .iter()
        .filter(|e| e.timestep <= horizon.saturating_sub(1))
        .map(|e| {
            let target = graph.index_of(&e.target).expect("validated endpoint");
            let source = graph.index_of(&e.source).expect("validated endpoint");
            (target, source, e.timestep + 1)
        })
        .collect();
    ground_events.sort_unstable();
    let mut contacts_by_step: Vec<Vec<GroundContact>> = vec![Vec::new(); steps];
    for &(target, source, t) in &ground_events {
        let coin = coins.len();
        coins.push(Coin {
            kind: CoinKind::Transmission,
            subject: target,
            source: Some(source),
            timestep: t,
            probability: spec.transmission_prob,
        });
        contacts_by_step[t as usize - 2].push(GroundContact {
            target,
            source,
            coin,
        });
    }
    for step in &mut contacts_by_step {
        step.sort_unstable_by_key(|c| (c.target, c.source));
    }

    // Persistence block, only when stochastic.
    let persistence_deterministic = spec.persistence_prob >= 1.0;
    let persistence_offset = if persistence_deterministic {
        None
    } else {
        let base = coins.len();
        for subject in 0..n {
            for t in 2..=horizon {
                coins.push(Coin {
                    kind: CoinKind::Persistence,
                    subject,
                    source: None,
                    timestep: t,
                    probability: spec.persistence_prob,
                });
            }
        }
        Some(base)
    };

    // Immunity block: every (individual, timestep), including t=1 where the
    // guard can never hold.
    let immunity_offset = coins.len();
    for subject in 0..n {
        for t in 1..=horizon {
            coins.push(Coin {
                kind: CoinKind::Immunity,
                subject,
                source: None,
                timestep: t,
                probability: spec.immunity_prob,
            });
        }
    }

    Ok(GroundedModel {
        horizon,
        individuals,
        coins,
        infectious_period: spec.infectious_period,
        immunity_period: spec.immunity_period,
        persistence_deterministic,
        initial_infected,
        queries: spec.queries.clone(),
        external_offset,
        persistence_offset,
        immunity_offset,
        contacts_by_step,
    })
}

fn resolve_seeds(
    initial: &InitialInfected,
    graph: &TemporalContactGraph,
) -> Result<Vec<usize>, GroundError> {
    match initial {
        InitialInfected::Count(k) => {
            if *k as usize > graph.len() {
                return Err(GroundError::SeedCountExceedsPopulation {
                    requested: *k,
                    population: graph.len(),
                });
            }
            Ok((0..*k as usize).collect())
        }
        InitialInfected::Ids(ids) => {
            let mut seeds = Vec::with_capacity(ids.len());
            for id in ids {
                match graph.index_of(id) {
                    Some(idx) => seeds.push(idx),
                    None => {
                        return Err(GroundError::UnknownSeedIndividual { id: id.clone() });
                    }
                }
            }
            seeds.sort_unstable();
            seeds.dedup();
            Ok(seeds)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::SpecFragment;
    use crate::population::ContactEvent;

    fn base_spec() -> ModelSpec {
        crate::dsl::merge_specs(&SpecFragment::default(), &SpecFragment::default()).unwrap()
    }

    fn two_person_graph() -> TemporalContactGraph {
        TemporalContactGraph::new(
            vec!["a".to_string(), "b".to_string()],
            vec![ContactEvent::new("b", "a", 1)],
        )
        .unwrap()
    }

    #[test]
    fn coin_population_for_two_person_contact() {
        let mut spec = base_spec();
        spec.horizon = 3;
        spec.persistence_prob = 1.0;
        let model = ground(&spec, &two_person_graph()).unwrap();
        let count = |kind: CoinKind| model.coins.iter().filter(|c| c.kind == kind).count();
        // 2 persons x t in {2,3} external, 1 transmission, 0 persistence,
        // 2 persons x 3 steps immunity.
        assert_eq!(count(CoinKind::External), 4);
        assert_eq!(count(CoinKind::Transmission), 1);
        assert_eq!(count(CoinKind::Persistence), 0);
        assert_eq!(count(CoinKind::Immunity), 6);
        assert_eq!(model.coin_count(), 11);
    }

    #[test]
    fn single_individual_single_step() {
        let mut spec = base_spec();
        spec.horizon = 1;
        let graph = TemporalContactGraph::new(vec!["solo".to_string()], Vec::new()).unwrap();
        let model = ground(&spec, &graph).unwrap();
        let count = |kind: CoinKind| model.coins.iter().filter(|c| c.kind == kind).count();
        assert_eq!(count(CoinKind::External), 0);
        assert_eq!(count(CoinKind::Transmission), 0);
        assert_eq!(count(CoinKind::Immunity), 1);
        assert_eq!(model.coin_count(), 1);
    }

    #[test]
    fn zero_probability_coins_still_materialize() {
        let mut spec = base_spec();
        spec.horizon = 3;
        spec.transmission_prob = 0.0;
        let model = ground(&spec, &two_person_graph()).unwrap();
        let trans: Vec<&Coin> = model
            .coins
            .iter()
            .filter(|c| c.kind == CoinKind::Transmission)
            .collect();
        assert_eq!(trans.len(), 1);
        assert_eq!(trans[0].probability, 0.0);
    }

    #[test]
    fn stochastic_persistence_materializes_coins() {
        let mut spec = base_spec();
        spec.horizon = 3;
        spec.persistence_prob = 0.5;
        let model = ground(&spec, &two_person_graph()).unwrap();
        let count = model
            .coins
            .iter()
            .filter(|c| c.kind == CoinKind::Persistence)
            .count();
        assert_eq!(count, 4);
        assert!(!model.persistence_deterministic);
    }

    #[test]
    fn coins_are_ordered_by_kind_subject_source_timestep() {
        let mut spec = base_spec();
        spec.horizon = 4;
        spec.persistence_prob = 0.5;
        let graph = TemporalContactGraph::new(
            vec!["a".to_string(), "b".to_string(), "c".to_string()],
            vec![
                ContactEvent::new("b", "a", 2),
                ContactEvent::new("b", "a", 1),
                ContactEvent::new("a", "c", 1),
            ],
        )
        .unwrap();
        let model = ground(&spec, &graph).unwrap();
        let keys: Vec<(CoinKind, usize, Option<usize>, u32)> = model
            .coins
            .iter()
            .map(|c| (c.kind, c.subject, c.source, c.timestep))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn coin_index_helpers_agree_with_layout() {
        let mut spec = base_spec();
        spec.horizon = 4;
        spec.persistence_prob = 0.5;
        let model = ground(&spec, &two_person_graph()).unwrap();
        for subject in 0..2 {
            for t in 2..=4 {
                let c = &model.coins[model.external_coin(subject, t)];
                assert_eq!(
                    (c.kind, c.subject, c.timestep),
                    (CoinKind::External, subject, t)
                );
                let c = &model.coins[model.persistence_coin(subject, t).unwrap()];
                assert_eq!(
                    (c.kind, c.subject, c.timestep),
                    (CoinKind::Persistence, subject, t)
                );
            }
            for t in 1..=4 {
                let c = &model.coins[model.immunity_coin(subject, t)];
                assert_eq!(
                    (c.kind, c.subject, c.timestep),
                    (CoinKind::Immunity, subject, t)
                );
            }
        }
        let contacts = model.contacts_at(2);
        assert_eq!(contacts.len(), 1);
        let c = &model.coins[contacts[0].coin];
        assert_eq!(c.kind, CoinKind::Transmission);
        assert_eq!(c.timestep, 2);
    }

    #[test]
    fn seed_resolution() {
        let spec = base_spec();
        let graph = two_person_graph();
        let model = ground(&spec, &graph).unwrap();
        // Default Count(1): lexicographically first individual.
        assert_eq!(model.initial_infected, vec![0]);

        let mut spec = base_spec();
        spec.initial_infected = InitialInfected::Ids(vec!["b".to_string()]);
        let model = ground(&spec, &graph).unwrap();
        assert_eq!(model.initial_infected, vec![1]);

        spec.initial_infected = InitialInfected::Ids(vec!["zed".to_string()]);
        assert!(matches!(
            ground(&spec, &graph),
            Err(GroundError::UnknownSeedIndividual { .. })
        ));

        spec.initial_infected = InitialInfected::Count(5);
        assert!(matches!(
            ground(&spec, &graph),
            Err(GroundError::SeedCountExceedsPopulation { .. })
        ));
    }

    #[test]
    fn late_contacts_get_no_coins() {
        let mut spec = base_spec();
        spec.horizon = 3;
        let graph = TemporalContactGraph::new(
            vec!["a".to_string(), "b".to_string()],
            vec![
                ContactEvent::new("b", "a", 2),
                ContactEvent::new("b", "a", 3), // acts at 4 > horizon
            ],
        )
        .unwrap();
        let model = ground(&spec, &graph).unwrap();
        let trans = model
            .coins
            .iter()
            .filter(|c| c.kind == CoinKind::Transmission)
            .count();
        assert_eq!(trans, 1);
    }
}
