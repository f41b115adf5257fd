use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{validate_mdp, Mdp, MdpError, RawMdp, RawTransition};
use crate::scalar::Scalar;

pub const GRID_ACTIONS: [&str; 4] = ["up", "down", "left", "right"];
const MOVES: [(i64, i64); 4] = [(0, 1), (0, -1), (-1, 0), (1, 0)];

#[derive(Debug, Error)]
pub enum GridError {
    #[error("cell ({0}, {1}) is outside the {2}x{3} grid")]
    OutOfBounds(i64, i64, i64, i64),
    #[error("cell ({0}, {1}) is an obstacle")]
    OnObstacle(i64, i64),
    #[error("slip probability {0} outside [0, 1)")]
    BadSlip(f64),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("grid file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Grid-world description. Free cells become states named `"x_y"`; actions
/// are `up` (+y), `down` (−y), `left` (−x) and `right` (+x). Bumping into an
/// obstacle or the boundary leaves the agent in place.
///
/// `slip` is optional: with that probability the move goes uniformly to one of
/// the three other directions instead.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: i64,
    pub height: i64,
    #[serde(default)]
    pub obstacles: Vec<[i64; 2]>,
    pub start: [i64; 2],
    pub goals: Vec<[i64; 2]>,
    pub true_goal: [i64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slip: Option<f64>,
}

impl GridError {
    pub fn code(&self) -> &'static str {
        match self {
            GridError::OutOfBounds(..) => "out_of_bounds",
            GridError::OnObstacle(..) => "on_obstacle",
            GridError::BadSlip(_) => "bad_slip",
            GridError::Mdp(e) => e.code(),
            GridError::Parse(_) => "bad_grid_file",
        }
    }
}

pub fn cell_name(x: i64, y: i64) -> String {
    format!("{x}_{y}")
}

impl GridSpec {
    pub fn from_json(text: &str) -> Result<Self, GridError> {
        Ok(serde_json::from_str(text)?)
    }

    fn blocked(&self, x: i64, y: i64) -> bool {
        x < 0 || y < 0 || x >= self.width || y >= self.height || self.obstacles.contains(&[x, y])
    }

    fn check_cell(&self, c: [i64; 2]) -> Result<(), GridError> {
        let [x, y] = c;
        if x < 0 || y < 0 || x >= self.width || y >= self.height {
            return Err(GridError::OutOfBounds(x, y, self.width, self.height));
        }
        if self.obstacles.contains(&c) {
            return Err(GridError::OnObstacle(x, y));
        }
        Ok(())
    }

    pub fn to_raw(&self) -> Result<RawMdp, GridError> {
        let slip = self.slip.unwrap_or(0.0);
        if !(0.0..1.0).contains(&slip) {
            return Err(GridError::BadSlip(slip));
        }
        self.check_cell(self.start)?;
        for &g in &self.goals {
            self.check_cell(g)?;
        }
        let mut states = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.blocked(x, y) {
                    states.push(cell_name(x, y));
                }
            }
        }
        let mut transitions = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.blocked(x, y) || self.goals.contains(&[x, y]) {
                    continue;
                }
                let target = |d: usize| {
                    let (nx, ny) = (x + MOVES[d].0, y + MOVES[d].1);
                    if self.blocked(nx, ny) {
                        cell_name(x, y)
                    } else {
                        cell_name(nx, ny)
                    }
                };
                for (a, name) in GRID_ACTIONS.iter().enumerate() {
                    let mut next = vec![(target(a), 1.0 - slip)];
                    if slip > 0.0 {
                        next.extend((0..4).filter(|&d| d != a).map(|d| (target(d), slip / 3.0)));
                    }
                    transitions.push(RawTransition {
                        state: cell_name(x, y),
                        action: (*name).to_owned(),
                        next,
                    });
                }
            }
        }
        Ok(RawMdp {
            states,
            actions: GRID_ACTIONS.iter().map(|s| (*s).to_owned()).collect(),
            initial_state: cell_name(self.start[0], self.start[1]),
            transitions,
            goals: self.goals.iter().map(|g| cell_name(g[0], g[1])).collect(),
            true_goal: cell_name(self.true_goal[0], self.true_goal[1]),
        })
    }

    pub fn build<T: Scalar>(&self) -> Result<Mdp<T>, GridError> {
        Ok(validate_mdp(&self.to_raw()?)?)
    }
}
