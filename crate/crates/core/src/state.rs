//! The eight-feature mechanical state of one entity.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of integer features per entity state.
pub const NUM_FEATURES: usize = 8;

/// Largest magnitude any feature may take in a valid state.
pub const MAX_MAGNITUDE: i32 = 99;

/// Feature names in their fixed order.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "entity_id", "size_x", "size_y", "vel_x", "vel_y", "pos_x", "pos_y", "game_id",
];

/// One legal mechanical configuration of a game entity.
///
/// Field order is fixed: entity id, width, height, horizontal and vertical
/// velocity, horizontal and vertical position, game id. Only the velocities
/// may be negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityState {
    pub entity_id: i32,
    pub size_x: i32,
    pub size_y: i32,
    pub vel_x: i32,
    pub vel_y: i32,
    pub pos_x: i32,
    pub pos_y: i32,
    pub game_id: i32,
}

impl EntityState {
    #[allow(clippy::too_many_arguments)]
    pub const fn new(
        entity_id: i32,
        size_x: i32,
        size_y: i32,
        vel_x: i32,
        vel_y: i32,
        pos_x: i32,
        pos_y: i32,
        game_id: i32,
    ) -> Self {
        EntityState { entity_id, size_x, size_y, vel_x, vel_y, pos_x, pos_y, game_id }
    }

    pub const fn to_array(&self) -> [i32; NUM_FEATURES] {
        [
            self.entity_id,
            self.size_x,
            self.size_y,
            self.vel_x,
            self.vel_y,
            self.pos_x,
            self.pos_y,
            self.game_id,
        ]
    }

    pub const fn from_array(f: [i32; NUM_FEATURES]) -> Self {
        EntityState::new(f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7])
    }

    /// Checks the range invariants: every |feature| ≤ 99 and only the
    /// velocities negative.
    pub fn validate(&self) -> Result<()> {
        for (k, v) in self.to_array().into_iter().enumerate() {
            let signed = k == 3 || k == 4;
            if v.abs() > MAX_MAGNITUDE || (!signed && v < 0) {
                return Err(Error::Data(format!(
                    "{} = {v} out of range in {self}",
                    FEATURE_NAMES[k]
                )));
            }
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }
}

impl fmt::Display for EntityState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.to_array();
        write!(
            f,
            "[{}, {}, {}, {}, {}, {}, {}, {}]",
            a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7]
        )
    }
}
