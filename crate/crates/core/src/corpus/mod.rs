//! Rule files, entity-state extraction, synthetic corpora and dataset splits.

mod parse;
mod synth;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::seeded_rng;
use crate::state::{EntityState, MAX_MAGNITUDE};

pub use parse::parse_rules;
pub use synth::{generate_synthetic_corpus, generate_synthetic_rules, SyntheticConfig};

/// Most distinct entities (and games) a corpus can hold; ids live in [0, 99].
pub const MAX_SYMBOLS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FactKind {
    Animation,
    VelocityX,
    VelocityY,
    PositionX,
    PositionY,
}

impl FactKind {
    pub const ALL: [FactKind; 5] = [
        FactKind::VelocityX,
        FactKind::VelocityY,
        FactKind::Animation,
        FactKind::PositionX,
        FactKind::PositionY,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FactKind::Animation => "Animation",
            FactKind::VelocityX => "VelocityX",
            FactKind::VelocityY => "VelocityY",
            FactKind::PositionX => "PositionX",
            FactKind::PositionY => "PositionY",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        FactKind::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Animation carries (size_x, size_y, frame); everything else one value.
    pub fn arity(self) -> usize {
        match self {
            FactKind::Animation => 3,
            _ => 1,
        }
    }

    fn slot(self) -> usize {
        match self {
            FactKind::VelocityX => 0,
            FactKind::VelocityY => 1,
            FactKind::Animation => 2,
            FactKind::PositionX => 3,
            FactKind::PositionY => 4,
        }
    }
}

/// An atomic piece of game knowledge about one named entity.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fact {
    pub kind: FactKind,
    pub entity: String,
    pub values: Vec<i32>,
}

impl Fact {
    pub fn new(kind: FactKind, entity: impl Into<String>, values: Vec<i32>) -> Self {
        Fact { kind, entity: entity.into(), values }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Fact: [{}, ", self.kind.name(), self.entity)?;
        match self.values.as_slice() {
            [v] => write!(f, "{v}]"),
            vs => {
                let parts: Vec<String> = vs.iter().map(i32::to_string).collect();
                write!(f, "({})]", parts.join(", "))
            }
        }
    }
}

/// A rule: when every condition holds, `pre_effect` is replaced by `post_effect`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleRecord {
    pub name: String,
    pub pre_effect: Fact,
    pub post_effect: Fact,
    pub conditions: Vec<Fact>,
}

impl fmt::Display for RuleRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "RULE {}", self.name)?;
        writeln!(f, "{}->{}", self.pre_effect, self.post_effect)?;
        for c in &self.conditions {
            writeln!(f, "{c}")?;
        }
        writeln!(f)
    }
}

/// Renders rules back into the textual rule-file format.
pub fn write_rules(rules: &[RuleRecord]) -> String {
    rules.iter().map(ToString::to_string).collect()
}

/// Ordered symbol table: ids are handed out in first-seen order from 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolTable {
    names: Vec<String>,
    ids: HashMap<String, i32>,
}

impl SymbolTable {
    pub fn get(&self, name: &str) -> Option<i32> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: i32) -> Option<&str> {
        usize::try_from(id).ok().and_then(|i| self.names.get(i)).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, i32)> {
        self.names.iter().enumerate().map(|(i, n)| (n.as_str(), i as i32))
    }

    fn intern(&mut self, name: &str, what: &str) -> Result<i32> {
        if let Some(id) = self.get(name) {
            return Ok(id);
        }
        if self.names.len() >= MAX_SYMBOLS {
            return Err(Error::Data(format!(
                "more than {MAX_SYMBOLS} distinct {what}s (adding `{name}`)"
            )));
        }
        let id = self.names.len() as i32;
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        Ok(id)
    }

    /// Writes the `symbol,id` sidecar format.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["symbol", "id"])?;
        for (name, id) in self.iter() {
            out.write_record([name, &id.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut table = SymbolTable::default();
        for row in rdr.deserialize() {
            let (symbol, id): (String, i32) = row?;
            if id != table.len() as i32 {
                return Err(Error::Data(format!(
                    "symbol `{symbol}` has id {id}, expected {}",
                    table.len()
                )));
            }
            table.intern(&symbol, "symbol")?;
        }
        Ok(table)
    }
}

/// Counters reported by one extraction pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExtractSummary {
    pub rules: usize,
    pub states_added: usize,
    pub duplicates: usize,
    /// Entity groups skipped because a fact kind was missing or contradictory.
    pub incomplete: usize,
}

/// Deduplicated entity states plus the symbol tables that produced their ids.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    states: Vec<EntityState>,
    seen: HashSet<EntityState>,
    pub entity_symbols: SymbolTable,
    pub game_symbols: SymbolTable,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.states == other.states
            && self.entity_symbols == other.entity_symbols
            && self.game_symbols == other.game_symbols
    }
}

impl Corpus {
    pub fn new() -> Self {
        Corpus::default()
    }

    /// Builds a corpus from already-extracted states, dropping duplicates.
    pub fn from_states(states: impl IntoIterator<Item = EntityState>) -> Result<Self> {
        let mut corpus = Corpus::new();
        for s in states {
            s.validate()?;
            corpus.insert(s);
        }
        Ok(corpus)
    }

    pub fn states(&self) -> &[EntityState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn insert(&mut self, s: EntityState) -> bool {
        if self.seen.insert(s) {
            self.states.push(s);
            true
        } else {
            false
        }
    }

    /// Extracts entity states from one game's rules into this corpus.
    ///
    /// Conditions are grouped by entity; a group holding all five fact kinds
    /// yields one state, and the effect entity yields a second state with the
    /// post-effect value substituted. Entity symbols are qualified by game
    /// (`game:entity`) so the same letter in two games names two entities.
    /// On error the corpus is left untouched.
    pub fn absorb_rules(&mut self, rules: &[RuleRecord], game_label: &str) -> Result<ExtractSummary> {
        let mut staged = self.clone();
        let summary = staged.absorb_inner(rules, game_label)?;
        *self = staged;
        Ok(summary)
    }

    fn absorb_inner(&mut self, rules: &[RuleRecord], game_label: &str) -> Result<ExtractSummary> {
        let mut summary = ExtractSummary { rules: rules.len(), ..Default::default() };
        for rule in rules {
            let groups = group_by_entity(&rule.conditions);
            for group in &groups {
                let Some(mech) = group.complete() else {
                    summary.incomplete += 1;
                    continue;
                };
                self.emit(game_label, &group.entity, mech, rule, &mut summary)?;
                if group.entity == rule.pre_effect.entity {
                    let mut outcome = mech;
                    outcome.apply(&rule.post_effect);
                    self.emit(game_label, &group.entity, outcome, rule, &mut summary)?;
                }
            }
        }
        Ok(summary)
    }

    fn emit(
        &mut self,
        game_label: &str,
        entity: &str,
        mech: Mechanics,
        rule: &RuleRecord,
        summary: &mut ExtractSummary,
    ) -> Result<()> {
        for v in mech.values() {
            if v.abs() > MAX_MAGNITUDE {
                return Err(Error::Data(format!(
                    "rule `{}`: entity `{entity}` has value {v} with magnitude ≥ 100",
                    rule.name
                )));
            }
        }
        let game_id = self.game_symbols.intern(game_label, "game")?;
        let entity_id = self
            .entity_symbols
            .intern(&format!("{game_label}:{entity}"), "entity")?;
        let state = mech.into_state(entity_id, game_id);
        state
            .validate()
            .map_err(|e| Error::Data(format!("rule `{}`: {e}", rule.name)))?;
        if self.insert(state) {
            summary.states_added += 1;
        } else {
            summary.duplicates += 1;
        }
        Ok(())
    }
}

/// Functional form of [`Corpus::absorb_rules`].
pub fn extract_entity_states(
    rules: &[RuleRecord],
    game_label: &str,
    mut corpus: Corpus,
) -> Result<(Corpus, ExtractSummary)> {
    let summary = corpus.absorb_rules(rules, game_label)?;
    Ok((corpus, summary))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Mechanics {
    size_x: i32,
    size_y: i32,
    vel_x: i32,
    vel_y: i32,
    pos_x: i32,
    pos_y: i32,
}

impl Mechanics {
    fn values(&self) -> [i32; 6] {
        [self.size_x, self.size_y, self.vel_x, self.vel_y, self.pos_x, self.pos_y]
    }

    fn apply(&mut self, fact: &Fact) {
        let v = &fact.values;
        match fact.kind {
            FactKind::Animation => {
                self.size_x = v[0];
                self.size_y = v[1];
            }
            FactKind::VelocityX => self.vel_x = v[0],
            FactKind::VelocityY => self.vel_y = v[0],
            FactKind::PositionX => self.pos_x = v[0],
            FactKind::PositionY => self.pos_y = v[0],
        }
    }

    fn into_state(self, entity_id: i32, game_id: i32) -> EntityState {
        EntityState::new(
            entity_id,
            self.size_x,
            self.size_y,
            self.vel_x,
            self.vel_y,
            self.pos_x,
            self.pos_y,
            game_id,
        )
    }
}

struct EntityGroup<'a> {
    entity: String,
    slots: [Option<&'a Fact>; 5],
    conflicting: bool,
}

impl EntityGroup<'_> {
    fn complete(&self) -> Option<Mechanics> {
        if self.conflicting || self.slots.iter().any(Option::is_none) {
            return None;
        }
        let mut m = Mechanics { size_x: 0, size_y: 0, vel_x: 0, vel_y: 0, pos_x: 0, pos_y: 0 };
        for fact in self.slots.iter().flatten() {
            m.apply(fact);
        }
        Some(m)
    }
}

fn group_by_entity(conditions: &[Fact]) -> Vec<EntityGroup<'_>> {
    let mut groups: Vec<EntityGroup<'_>> = Vec::new();
    for fact in conditions {
        let idx = match groups.iter().position(|g| g.entity == fact.entity) {
            Some(i) => i,
            None => {
                groups.push(EntityGroup {
                    entity: fact.entity.clone(),
                    slots: [None; 5],
                    conflicting: false,
                });
                groups.len() - 1
            }
        };
        let group = &mut groups[idx];
        let slot = &mut group.slots[fact.kind.slot()];
        match slot {
            Some(prev) if prev.values != fact.values => group.conflicting = true,
            _ => *slot = Some(fact),
        }
    }
    groups
}

/// Seeded shuffle split into `(train, test)`.
///
/// The test side gets `round(test_fraction * n)` states, clamped so both
/// sides are non-empty.
pub fn split_dataset(
    states: &[EntityState],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<EntityState>, Vec<EntityState>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = states.len();
    if n < 2 {
        return Err(Error::Data(format!("cannot split {n} state(s); need at least 2")));
    }
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed));
    let test = order[..n_test].iter().map(|&i| states[i]).collect();
    let train = order[n_test..].iter().map(|&i| states[i]).collect();
    Ok((train, test))
}

#[derive(Serialize, Deserialize)]
struct StateRow {
    entity_id: i32,
    size_x: i32,
    size_y: i32,
    vel_x: i32,
    vel_y: i32,
    pos_x: i32,
    pos_y: i32,
    game_id: i32,
}

/// Writes the dataset CSV (`entity_id,size_x,...,game_id`).
pub fn write_states_csv<W: Write>(w: W, states: &[EntityState]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for s in states {
        out.serialize(s)?;
    }
    if states.is_empty() {
        out.write_record(crate::state::FEATURE_NAMES)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a dataset CSV. Rows must satisfy the state range invariants.
pub fn read_states_csv<R: Read>(r: R) -> Result<Vec<EntityState>> {
    read_states_csv_unchecked(r)?
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            s.validate()
                .map(|_| s)
                .map_err(|e| Error::Data(format!("row {}: {e}", i + 1)))
        })
        .collect()
}

/// Reads a dataset CSV without range validation (decoded outputs may sit
/// outside the valid window).
pub fn read_states_csv_unchecked<R: Read>(r: R) -> Result<Vec<EntityState>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(crate::state::FEATURE_NAMES) {
        return Err(Error::Format(format!(
            "dataset header must be `{}`",
            crate::state::FEATURE_NAMES.join(",")
        )));
    }
    let mut states = Vec::new();
    for row in rdr.deserialize::<StateRow>() {
        let r = row?;
        states.push(EntityState::new(
            r.entity_id, r.size_x, r.size_y, r.vel_x, r.vel_y, r.pos_x, r.pos_y, r.game_id,
        ));
    }
    Ok(states)
}
