//! Named environments shipped with the crate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::grid::{Cell, GridMap};
use super::{Reward, TabularMdp};
use crate::error::{Error, Result};

pub const ENVIRONMENT_NAMES: [&str; 9] = [
    "grid_task",
    "four_rooms",
    "grid_room",
    "grid_maze",
    "grid_room_large",
    "grid_maze_large",
    "four_rooms_multigoal",
    "riverswim",
    "sixarms",
];

const CHAINS: &str = include_str!("../../data/chains.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvName {
    GridTask,
    FourRooms,
    GridRoom,
    GridMaze,
    GridRoomLarge,
    GridMazeLarge,
    FourRoomsMultigoal,
    Riverswim,
    Sixarms,
}

impl EnvName {
    pub const ALL: [EnvName; 9] = [
        EnvName::GridTask,
        EnvName::FourRooms,
        EnvName::GridRoom,
        EnvName::GridMaze,
        EnvName::GridRoomLarge,
        EnvName::GridMazeLarge,
        EnvName::FourRoomsMultigoal,
        EnvName::Riverswim,
        EnvName::Sixarms,
    ];

    pub fn as_str(self) -> &'static str {
        ENVIRONMENT_NAMES[self as usize]
    }

    /// Map-file text for grid environments.
    pub fn map_text(self) -> Option<&'static str> {
        Some(match self {
            EnvName::GridTask => include_str!("../../data/maps/grid_task.map"),
            EnvName::FourRooms => include_str!("../../data/maps/four_rooms.map"),
            EnvName::GridRoom => include_str!("../../data/maps/grid_room.map"),
            EnvName::GridMaze => include_str!("../../data/maps/grid_maze.map"),
            EnvName::GridRoomLarge => include_str!("../../data/maps/grid_room_large.map"),
            EnvName::GridMazeLarge => include_str!("../../data/maps/grid_maze_large.map"),
            EnvName::FourRoomsMultigoal => include_str!("../../data/maps/four_rooms_multigoal.map"),
            EnvName::Riverswim | EnvName::Sixarms => return None,
        })
    }

    pub fn is_grid(self) -> bool {
        self.map_text().is_some()
    }

    /// The parsed map of a grid environment with `variant` applied.
    pub fn grid_map(self, variant: Variant) -> Result<GridMap> {
        let text = self
            .map_text()
            .ok_or_else(|| Error::Config(format!("{self} is not a grid environment")))?;
        let mut map = GridMap::parse(text)?;
        if variant.drops_low_reward() {
            map = map.replace(Cell::Low, Cell::Empty);
        }
        if variant.drops_terminals() {
            map = map.replace(Cell::Goal, Cell::Empty);
        }
        Ok(map)
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ENVIRONMENT_NAMES
            .iter()
            .position(|&n| n == s)
            .map(|i| EnvName::ALL[i])
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown environment {s:?} (expected one of {})",
                    ENVIRONMENT_NAMES.join(", ")
                ))
            })
    }
}

/// Environment modifications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Standard,
    /// Low-reward cells become ordinary cells.
    NoLowReward,
    /// Goal cells become ordinary non-terminal cells.
    NoTerminals,
    NoTerminalsNoLowReward,
}

impl Variant {
    fn drops_low_reward(self) -> bool {
        matches!(self, Variant::NoLowReward | Variant::NoTerminalsNoLowReward)
    }

    fn drops_terminals(self) -> bool {
        matches!(self, Variant::NoTerminals | Variant::NoTerminalsNoLowReward)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Variant::Standard),
            "no_low_reward" => Ok(Variant::NoLowReward),
            "no_terminals" => Ok(Variant::NoTerminals),
            "no_terminals_no_low_reward" => Ok(Variant::NoTerminalsNoLowReward),
            _ => Err(Error::Config(format!("unknown variant {s:?}"))),
        }
    }
}

/// Builds a named environment.
pub fn make_environment(name: &str, variant: Variant) -> Result<TabularMdp> {
    let env: EnvName = name.parse()?;
    if env.is_grid() {
        return Ok(env.grid_map(variant)?.to_mdp());
    }
    if variant != Variant::Standard {
        return Err(Error::Config(format!("variant {variant:?} does not apply to {env}")));
    }
    let chains: ChainFile = toml::from_str(CHAINS).map_err(|e| Error::Config(e.to_string()))?;
    match env {
        EnvName::Riverswim => chains.riverswim.build(),
        _ => chains.sixarms.build(),
    }
}

#[derive(Deserialize)]
struct ChainFile {
    riverswim: ChainSpec,
    sixarms: ChainSpec,
}

#[derive(Deserialize)]
struct ChainSpec {
    states: usize,
    actions: usize,
    start: Vec<f64>,
    transitions: Vec<(usize, usize, usize, f64)>,
    #[serde(default)]
    rewards: Vec<(usize, usize, f64)>,
    #[serde(default)]
    arm_rewards: Vec<f64>,
}

impl ChainSpec {
    fn build(&self) -> Result<TabularMdp> {
        let (n, m) = (self.states, self.actions);
        let mut transition = vec![0.0; n * m * n];
        let mut reward = vec![0.0; n * m];
        for &(s, a, next, p) in &self.transitions {
            transition[(s * m + a) * n + next] += p;
        }
        for &(s, a, r) in &self.rewards {
            reward[s * m + a] = r;
        }
        for (k, &r) in self.arm_rewards.iter().enumerate() {
            let arm = k + 1;
            for a in 0..m {
                let next = if a == k { arm } else { 0 };
                transition[(arm * m + a) * n + next] = 1.0;
            }
            reward[arm * m + k] = r;
        }
        TabularMdp::new(n, m, transition, Reward::StateAction(reward), vec![false; n], self.start.clone())
    }
}
