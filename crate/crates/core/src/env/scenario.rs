//! Scenario files: slice templates, pool capacities, user census and step settings.
//!
//! See `docs/scenario.md` for the schema.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::types::{CellId, ResourcePool, ServiceClass, SliceId, SliceSpec, UserId, UserSession};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSettings {
    /// Seconds per control step.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Delay stabilizer (bits/s).
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Steps per episode.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Length of the per-slice history window.
    #[serde(default = "default_history")]
    pub history: usize,
    /// Control steps between two upper-level (admission/budget) decisions.
    #[serde(default = "default_upper_period")]
    pub upper_period: usize,
    /// Draw per-step arrivals as Poisson packet counts instead of the mean rate.
    #[serde(default = "default_true")]
    pub poisson_arrivals: bool,
}

fn default_dt() -> f64 {
    1.0
}
fn default_epsilon() -> f64 {
    1e-6
}
fn default_horizon() -> usize {
    200
}
fn default_history() -> usize {
    8
}
fn default_upper_period() -> usize {
    5
}
fn default_true() -> bool {
    true
}

impl Default for EnvSettings {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            epsilon: default_epsilon(),
            horizon: default_horizon(),
            history: default_history(),
            upper_period: default_upper_period(),
            poisson_arrivals: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub cells: usize,
    /// Cells are laid out row-major on a grid this wide; adjacency is the 4-neighbourhood.
    #[serde(default = "default_grid_width")]
    pub grid_width: usize,
    /// Informational only.
    #[serde(default = "default_cell_size")]
    pub cell_size_m: f64,
}

fn default_grid_width() -> usize {
    2
}
fn default_cell_size() -> f64 {
    235.0
}

/// Template from which a slice's spec and users are generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceTemplate {
    pub service_class: ServiceClass,
    pub delay_bound: f64,
    pub min_throughput: f64,
    pub reliability_target: f64,
    pub priority: f64,
    pub users: usize,
    /// Mean per-user arrival rate (bits/s) at traffic multiplier 1.
    pub arrival_rate: f64,
    /// Per-user base rate is `arrival_rate * U[1 - spread, 1 + spread]`.
    #[serde(default)]
    pub arrival_spread: f64,
    pub packet_size: f64,
    /// Cycles per bit, `[min, max]`.
    pub compute_demand: [f64; 2],
    /// Bits/s per radio unit, `[min, max]`.
    pub wireless_rate: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    /// Seeds the user census.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub env: EnvSettings,
    pub pool: ResourcePool,
    pub topology: Topology,
    pub slices: Vec<SliceTemplate>,
}

fn default_name() -> String {
    "scenario".into()
}

/// Scenario materialised into concrete specs and user sessions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Census {
    pub specs: Vec<SliceSpec>,
    /// Users with `arrival_rate` set to their base rate (multiplier 1).
    pub users: Vec<UserSession>,
    pub num_cells: usize,
    /// Cell adjacency (no self loops).
    pub cell_neighbors: Vec<Vec<usize>>,
}

impl Census {
    pub fn num_slices(&self) -> usize {
        self.specs.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn users_of(&self, slice: SliceId) -> impl Iterator<Item = &UserSession> {
        self.users.iter().filter(move |u| u.slice_id == slice)
    }
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// The bundled desk-scale scenario: 3 slices, 12 users, 4 cells, 200-step episodes.
    pub fn desk() -> Self {
        Self::from_toml_str(include_str!("../../scenarios/desk.toml")).expect("bundled scenario is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.env;
        if !(e.dt > 0.0) || !(e.epsilon > 0.0) {
            return Err(Error::InvalidConfig("dt and epsilon must be positive".into()));
        }
        if e.horizon == 0 || e.upper_period == 0 {
            return Err(Error::InvalidConfig("horizon and upper_period must be >= 1".into()));
        }
        self.pool.validate()?;
        if self.topology.cells == 0 || self.topology.grid_width == 0 {
            return Err(Error::InvalidConfig("topology needs at least one cell".into()));
        }
        if self.slices.is_empty() {
            return Err(Error::InvalidConfig("at least one slice is required".into()));
        }
        for (i, t) in self.slices.iter().enumerate() {
            if t.users == 0 {
                return Err(Error::InvalidConfig(format!("slice {i} has no users")));
            }
            let ranges_ok = t.compute_demand[0] > 0.0
                && t.compute_demand[0] <= t.compute_demand[1]
                && t.wireless_rate[0] > 0.0
                && t.wireless_rate[0] <= t.wireless_rate[1];
            if !ranges_ok
                || !(t.arrival_rate >= 0.0)
                || !(0.0..1.0).contains(&t.arrival_spread)
                || !(t.packet_size > 0.0)
            {
                return Err(Error::InvalidConfig(format!(
                    "slice {i} has an invalid traffic template"
                )));
            }
        }
        for spec in self.census().specs {
            spec.validate()?;
        }
        Ok(())
    }

    /// Deterministically generates slice specs and users from the scenario seed.
    pub fn census(&self) -> Census {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_ce45);
        let specs: Vec<SliceSpec> = self
            .slices
            .iter()
            .enumerate()
            .map(|(i, t)| SliceSpec {
                slice_id: SliceId(i),
                service_class: t.service_class,
                delay_bound: t.delay_bound,
                min_throughput: t.min_throughput,
                reliability_target: t.reliability_target,
                priority: t.priority,
            })
            .collect();
        let cells = self.topology.cells;
        let mut users = Vec::new();
        let mut next_cell = 0usize;
        for (i, t) in self.slices.iter().enumerate() {
            for _ in 0..t.users {
                let spread = if t.arrival_spread > 0.0 {
                    rng.gen_range(1.0 - t.arrival_spread..1.0 + t.arrival_spread)
                } else {
                    1.0
                };
                let uniform = |rng: &mut ChaCha8Rng, r: [f64; 2]| {
                    if r[1] > r[0] {
                        rng.gen_range(r[0]..r[1])
                    } else {
                        r[0]
                    }
                };
                let compute_demand = uniform(&mut rng, t.compute_demand);
                let wireless_rate = uniform(&mut rng, t.wireless_rate);
                users.push(UserSession {
                    user_id: UserId(users.len()),
                    slice_id: SliceId(i),
                    arrival_rate: t.arrival_rate * spread,
                    packet_size: t.packet_size,
                    compute_demand,
                    wireless_rate,
                    cell_id: CellId(next_cell % cells),
                });
                next_cell += 1;
            }
        }
        let w = self.topology.grid_width.min(cells);
        let cell_neighbors = (0..cells)
            .map(|c| {
                let (r, col) = (c / w, c % w);
                let mut n = Vec::new();
                if col > 0 {
                    n.push(c - 1);
                }
                if col + 1 < w && c + 1 < cells {
                    n.push(c + 1);
                }
                if r > 0 {
                    n.push(c - w);
                }
                if c + w < cells {
                    n.push(c + w);
                }
                n
            })
            .collect();
        Census {
            specs,
            users,
            num_cells: cells,
            cell_neighbors,
        }
    }

    pub fn num_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn num_users(&self) -> usize {
        self.slices.iter().map(|s| s.users).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_scenario_has_documented_shape() {
        let sc = Scenario::desk();
        let census = sc.census();
        assert_eq!(census.num_slices(), 3);
        assert_eq!(census.num_users(), 12);
        assert_eq!(census.num_cells, 4);
        assert_eq!(sc.env.horizon, 200);
        // every cell of a 2x2 grid has two neighbours
        assert!(census.cell_neighbors.iter().all(|n| n.len() == 2));
    }

    #[test]
    fn census_is_deterministic() {
        let sc = Scenario::desk();
        assert_eq!(sc.census(), sc.census());
    }

    #[test]
    fn invalid_reliability_is_rejected() {
        let mut sc = Scenario::desk();
        sc.slices[0].reliability_target = 1.5;
        assert!(matches!(sc.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = include_str!("../../scenarios/desk.toml").replace("[pool]", "[pool]\nbogus = 1");
        assert!(Scenario::from_toml_str(&text).is_err());
    }
}
