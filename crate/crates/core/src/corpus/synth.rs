//! Seeded synthetic rule corpora standing in for rules learned from gameplay.
//!
//! Each game gets `archetypes_per_game` entities cycling through four roles
//! (player, bullet, enemy, destructible). An entity walks through its states
//! one fact change at a time, and every step becomes a rule whose
//! conditions describe the current state and whose effect is the changed
//! fact, so extracting the rules recovers exactly the walked states.

use std::collections::HashSet;
use std::ops::RangeInclusive;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numkit::seeded_rng;

use super::{Corpus, Fact, FactKind, RuleRecord, MAX_SYMBOLS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticConfig {
    pub games: usize,
    pub archetypes_per_game: usize,
    pub states_per_archetype: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { games: 2, archetypes_per_game: 4, states_per_archetype: 25 }
    }
}

/// Upper bound on walk length; windows hold far more distinct states.
const MAX_STATES_PER_ARCHETYPE: usize = 2000;

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.games < 2 {
            return Err(Error::Config(format!(
                "synthetic corpora need at least 2 games, got {}",
                self.games
            )));
        }
        if self.archetypes_per_game == 0 || self.states_per_archetype == 0 {
            return Err(Error::Config("archetype and state counts must be positive".into()));
        }
        if self.games * self.archetypes_per_game > MAX_SYMBOLS {
            return Err(Error::Config(format!(
                "{} games x {} archetypes exceeds the {MAX_SYMBOLS}-entity id range",
                self.games, self.archetypes_per_game
            )));
        }
        if self.states_per_archetype > MAX_STATES_PER_ARCHETYPE {
            return Err(Error::Config(format!(
                "at most {MAX_STATES_PER_ARCHETYPE} states per archetype"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Role {
    Player,
    Bullet,
    Enemy,
    Destructible,
}

impl Role {
    const CYCLE: [Role; 4] = [Role::Player, Role::Bullet, Role::Enemy, Role::Destructible];

    fn label(self) -> &'static str {
        match self {
            Role::Player => "player",
            Role::Bullet => "bullet",
            Role::Enemy => "enemy",
            Role::Destructible => "destructible",
        }
    }

    /// (size_x, size_y, vel_x, vel_y, pos_x, pos_y) ranges.
    fn ranges(self) -> [RangeInclusive<i32>; 6] {
        match self {
            Role::Player => [7..=9, 9..=11, -4..=4, 0..=0, 10..=90, 80..=95],
            Role::Bullet => [1..=1, 4..=6, 0..=0, -9..=-4, 10..=90, 10..=85],
            Role::Enemy => [6..=9, 6..=8, -3..=3, 0..=2, 5..=95, 5..=60],
            Role::Destructible => [3..=5, 3..=5, 0..=0, 0..=0, 5..=95, 20..=70],
        }
    }
}

/// Mechanical fields in walk order: sizes, velocities, positions.
type Mech = [i32; 6];

struct Archetype {
    name: String,
    /// Per-field windows, narrowed from the role ranges.
    windows: [RangeInclusive<i32>; 6],
    frame: i32,
}

impl Archetype {
    fn new(role: Role, index: usize, rng: &mut ChaCha8Rng) -> Self {
        let windows = role.ranges().map(|r| {
            let (lo, hi) = (*r.start(), *r.end());
            if hi - lo <= 30 {
                r
            } else {
                let start = rng.random_range(lo..=hi - 30);
                start..=start + 30
            }
        });
        Archetype {
            name: format!("{}{index}", role.label()),
            windows,
            frame: rng.random_range(0..=3),
        }
    }

    fn start(&self, rng: &mut ChaCha8Rng) -> Mech {
        std::array::from_fn(|k| rng.random_range(self.windows[k].clone()))
    }

    /// One fact change: returns the new state and the kind that changed.
    fn step(&self, cur: &Mech, rng: &mut ChaCha8Rng) -> Option<(Mech, FactKind)> {
        let mut kinds = FactKind::ALL.to_vec();
        while !kinds.is_empty() {
            let kind = kinds.swap_remove(rng.random_range(0..kinds.len()));
            let fields: &[usize] = match kind {
                FactKind::Animation => &[0, 1],
                FactKind::VelocityX => &[2],
                FactKind::VelocityY => &[3],
                FactKind::PositionX => &[4],
                FactKind::PositionY => &[5],
            };
            if fields.iter().all(|&f| self.windows[f].start() == self.windows[f].end()) {
                continue;
            }
            let mut next = *cur;
            while next == *cur {
                for &f in fields {
                    next[f] = rng.random_range(self.windows[f].clone());
                }
            }
            return Some((next, kind));
        }
        None
    }

    fn facts(&self, m: &Mech) -> Vec<Fact> {
        vec![
            Fact::new(FactKind::VelocityX, &self.name, vec![m[2]]),
            Fact::new(FactKind::VelocityY, &self.name, vec![m[3]]),
            Fact::new(FactKind::Animation, &self.name, vec![m[0], m[1], self.frame]),
            Fact::new(FactKind::PositionX, &self.name, vec![m[4]]),
            Fact::new(FactKind::PositionY, &self.name, vec![m[5]]),
        ]
    }

    fn fact(&self, m: &Mech, kind: FactKind) -> Fact {
        self.facts(m).into_iter().find(|f| f.kind == kind).expect("all kinds present")
    }
}

/// Generates per-game rule lists, in game order, labelled `game0`, `game1`, ...
pub fn generate_synthetic_rules(
    config: &SyntheticConfig,
    seed: u64,
) -> Result<Vec<(String, Vec<RuleRecord>)>> {
    config.validate()?;
    let mut rng = seeded_rng(seed);
    let mut games = Vec::with_capacity(config.games);
    for g in 0..config.games {
        let label = format!("game{g}");
        let archetypes: Vec<Archetype> = (0..config.archetypes_per_game)
            .map(|a| Archetype::new(Role::CYCLE[a % 4], a, &mut rng))
            .collect();
        let mut rules = Vec::new();
        let mut anchors: Vec<Mech> = Vec::new();
        for (a, arch) in archetypes.iter().enumerate() {
            let walk = walk(arch, config.states_per_archetype, &mut rng);
            anchors.push(walk[0].0);
            // Rules also mention the previous entity's first state, like
            // learned rules that reference several entities at once.
            let witness = a.checked_sub(1).map(|p| archetypes[p].facts(&anchors[p]));
            let steps = walk.len().max(2) - 1;
            for k in 0..steps {
                let cur = walk[k].0;
                let (next, kind) = walk.get(k + 1).copied().unwrap_or((cur, FactKind::PositionX));
                let mut conditions = arch.facts(&cur);
                if let Some(w) = &witness {
                    conditions.extend(w.iter().cloned());
                }
                rules.push(RuleRecord {
                    name: format!("{label}_{}_{k}", arch.name),
                    pre_effect: arch.fact(&cur, kind),
                    post_effect: arch.fact(&next, kind),
                    conditions,
                });
            }
        }
        games.push((label, rules));
    }
    Ok(games)
}

/// Walk of distinct states; each entry carries the kind that changed to reach it.
fn walk(arch: &Archetype, len: usize, rng: &mut ChaCha8Rng) -> Vec<(Mech, FactKind)> {
    let start = arch.start(rng);
    let mut seen = HashSet::from([start]);
    let mut out = vec![(start, FactKind::PositionX)];
    let mut stalls = 0;
    while out.len() < len && stalls < 100 {
        let cur = out.last().expect("non-empty").0;
        match arch.step(&cur, rng) {
            Some((next, kind)) if seen.insert(next) => {
                out.push((next, kind));
                stalls = 0;
            }
            _ => stalls += 1,
        }
    }
    out
}

/// Generates a corpus by extracting states from [`generate_synthetic_rules`].
pub fn generate_synthetic_corpus(config: &SyntheticConfig, seed: u64) -> Result<Corpus> {
    let mut corpus = Corpus::new();
    for (label, rules) in generate_synthetic_rules(config, seed)? {
        corpus.absorb_rules(&rules, &label)?;
    }
    Ok(corpus)
}
