//! Display-name assignment for corpora whose speakers are anonymous actors.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dialogue, Gender};
use crate::error::{Error, Result};

pub const FEMALE_NAMES: [&str; 5] = ["Mary", "Patricia", "Jennifer", "Linda", "Elizabeth"];
pub const MALE_NAMES: [&str; 5] = ["James", "John", "Robert", "Michael", "William"];

/// Give every distinct actor (by speaker id) one name, stable across all of
/// its utterances. Gendered actors draw from their own pool; actors with no
/// gender draw from whatever remains of the combined ten-name pool.
///
/// Actors are visited in sorted id order and pools are shuffled with `seed`,
/// so the result depends only on the input and the seed.
pub fn assign_iemocap_names(dialogues: &[Dialogue], seed: u64) -> Result<Vec<Dialogue>> {
    let mut actors: BTreeMap<&str, Option<Gender>> = BTreeMap::new();
    for u in dialogues.iter().flat_map(|d| &d.utterances) {
        let entry = actors.entry(u.speaker.id.as_str()).or_insert(None);
        if entry.is_none() {
            *entry = u.speaker.gender;
        } else if u.speaker.gender.is_some() && *entry != u.speaker.gender {
            return Err(Error::Data(format!(
                "actor {} appears with conflicting genders",
                u.speaker.id
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut female: Vec<&str> = FEMALE_NAMES.to_vec();
    let mut male: Vec<&str> = MALE_NAMES.to_vec();
    female.shuffle(&mut rng);
    male.shuffle(&mut rng);

    let mut assigned: BTreeMap<&str, &str> = BTreeMap::new();
    let mut used: HashSet<&str> = HashSet::new();
    for (gender, pool) in [(Gender::Female, &female), (Gender::Male, &male)] {
        let group: Vec<&str> = actors
            .iter()
            .filter(|(_, g)| **g == Some(gender))
            .map(|(id, _)| *id)
            .collect();
        if group.len() > pool.len() {
            return Err(Error::Data(format!(
                "{} {:?} actors but only {} names in the pool",
                group.len(),
                gender,
                pool.len()
            )));
        }
        for (actor, name) in group.into_iter().zip(pool.iter()) {
            assigned.insert(actor, name);
            used.insert(name);
        }
    }

    let mut combined: Vec<&str> = FEMALE_NAMES
        .iter()
        .chain(MALE_NAMES.iter())
        .copied()
        .filter(|n| !used.contains(n))
        .collect();
    combined.shuffle(&mut rng);
    let unknown: Vec<&str> = actors
        .iter()
        .filter(|(_, g)| g.is_none())
        .map(|(id, _)| *id)
        .collect();
    if unknown.len() > combined.len() {
        return Err(Error::Data(format!(
            "{} actors without gender but only {} unused names remain",
            unknown.len(),
            combined.len()
        )));
    }
    for (actor, name) in unknown.into_iter().zip(combined) {
        assigned.insert(actor, name);
    }

    let mut out = dialogues.to_vec();
    for u in out.iter_mut().flat_map(|d| d.utterances.iter_mut()) {
        u.speaker.display_name = assigned[u.speaker.id.as_str()].to_string();
    }
    Ok(out)
}
