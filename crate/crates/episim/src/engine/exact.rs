//! Exact marginals by brute-force enumeration of coin assignments.
//!
//! Coins with probability 0 or 1 are fixed before enumeration; the remaining
//! free coins are enumerated exhaustively, each assignment propagated
//! deterministically through [`advance_step`](super::advance_step()) and its
//! weight (the product of per-coin probabilities) accumulated onto every
//! ground atom that holds in the resulting trajectory.
//!
//! Accumulation is chunked over the assignment space with a fixed chunk
//! size, and chunk subtotals are folded in chunk order. The optional
//! concurrent mode computes chunk subtotals in parallel and folds them the
//! same way, so its tables are bitwise identical to the single-threaded
//! ones.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::dsl::Compartment;
use crate::ground::GroundedModel;

use super::{advance_step, AssignedCoins, MarginalMethod, MarginalTable, SimState};

/// Free coins beyond this count make enumeration infeasible; callers should
/// fall back to Monte Carlo.
pub const DEFAULT_COIN_CAP: usize = 24;

/// Assignments per accumulation chunk.
const CHUNK_BITS: u32 = 12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExactError {
    #[error(
        "model has {coins} free coins, above the exact-inference cap of {cap}; \
         use Monte Carlo simulation instead"
    )]
    TooLarge { coins: usize, cap: usize },
}

/// Exact marginals with the default coin cap, single-threaded.
pub fn exact_marginals(model: &GroundedModel) -> Result<MarginalTable, ExactError> {
    exact_marginals_with(model, DEFAULT_COIN_CAP, false)
}

/// Exact marginals with an explicit cap on free coins and an optional
/// concurrent mode that partitions the assignment space.
pub fn exact_marginals_with(
    model: &GroundedModel,
    cap: usize,
    concurrent: bool,
) -> Result<MarginalTable, ExactError> {
    let free = model.enumerable_coins();
    if free.len() > cap.min(62) {
        return Err(ExactError::TooLarge {
            coins: free.len(),
            cap: cap.min(62),
        });
    }

    // Deterministic coins are fixed once.
    let mut base = vec![false; model.coin_count()];
    for (i, coin) in model.coins.iter().enumerate() {
        if coin.probability >= 1.0 {
            base[i] = true;
        }
    }

    let n = model.population();
    let horizon = model.horizon;
    let atoms = 4 * n * horizon as usize;
    let total: u64 = 1u64 << free.len();
    let chunk_size: u64 = 1u64 << CHUNK_BITS;
    let chunk_count = total.div_ceil(chunk_size);

    let chunk_totals: Vec<Vec<f64>> = if concurrent {
        (0..chunk_count)
            .into_par_iter()
            .map(|c| {
                let lo = c * chunk_size;
                let hi = total.min(lo + chunk_size);
                enumerate_range(model, &free, &base, lo..hi, atoms)
            })
            .collect()
    } else {
        (0..chunk_count)
            .map(|c| {
                let lo = c * chunk_size;
                let hi = total.min(lo + chunk_size);
                enumerate_range(model, &free, &base, lo..hi, atoms)
            })
            .collect()
    };

    let mut acc = vec![0.0f64; atoms];
    for chunk in &chunk_totals {
        for (slot, value) in acc.iter_mut().zip(chunk) {
            *slot += value;
        }
    }

    let mut entries = BTreeMap::new();
    for &c in &model.queries {
        for x in 0..n {
            for t in 1..=horizon {
                // Weight accumulation carries rounding on the order of 1e-15;
                // anything further outside [0,1] would be a real defect.
                let p = acc[atom_slot(c, x, t, n)];
                debug_assert!(
                    (-1e-9..=1.0 + 1e-9).contains(&p),
                    "accumulated probability {p} far outside [0,1]"
                );
                entries.insert((c, x, t), p.clamp(0.0, 1.0));
            }
        }
    }
    Ok(MarginalTable::from_entries(
        MarginalMethod::Exact,
        model.individuals.clone(),
        entries,
    ))
}

/// Flat accumulator layout: ((t-1) * n + x) * 4 + compartment.
fn atom_slot(c: Compartment, x: usize, t: u32, n: usize) -> usize {
    let c_idx = match c {
        Compartment::Susceptible => 0,
        Compartment::Infected => 1,
        Compartment::Recovered => 2,
        Compartment::Resistant => 3,
    };
    ((t as usize - 1) * n + x) * 4 + c_idx
}

fn enumerate_range(
    model: &GroundedModel,
    free: &[usize],
    base: &[bool],
    masks: std::ops::Range<u64>,
    atoms: usize,
) -> Vec<f64> {
    let n = model.population();
    let horizon = model.horizon;
    let mut acc = vec![0.0f64; atoms];
    let mut assignment = base.to_vec();
    for mask in masks {
        let mut weight = 1.0f64;
        for (bit, &coin_idx) in free.iter().enumerate() {
            let fires = (mask >> bit) & 1 == 1;
            assignment[coin_idx] = fires;
            let p = model.coins[coin_idx].probability;
            weight *= if fires { p } else { 1.0 - p };
        }

        let mut source = AssignedCoins {
            values: &assignment,
        };
        let mut state = SimState::initial(model);
        accumulate(&state, &mut acc, weight, n);
        for t in 2..=horizon {
            state = advance_step(&state, model, t, &mut source);
            accumulate(&state, &mut acc, weight, n);
        }
    }
    acc
}

fn accumulate(state: &SimState, acc: &mut [f64], weight: f64, n: usize) {
    let t = state.timestep();
    for x in 0..n {
        let cell = state.cell(x);
        for &c in &Compartment::ALL {
            if cell.holds(c) {
                acc[atom_slot(c, x, t, n)] += weight;
            }
        }
    }
}
