//! Network topology, line parameters, and instrument-transformer error models.
//!
//! The network is a *connected tree* of PMU-monitored branches: acyclic,
//! connected, every bus observable from every other bus. One branch end
//! hosts the revenue-quality meter (RQM) that anchors calibration.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A network bus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    #[serde(default)]
    pub name: String,
}

/// Per-branch line parameters of the π-model: series resistance and
/// reactance plus the shunt susceptance present at each end. All per-unit.
/// The shunt admittance used throughout is `j·b` with real `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineParams {
    pub r: f64,
    pub x: f64,
    pub b: f64,
}

impl LineParams {
    pub fn new(r: f64, x: f64, b: f64) -> Result<Self> {
        let p = Self { r, x, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r.is_finite() && self.x.is_finite() && self.b.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite entry in {self:?}")));
        }
        if self.r <= 0.0 || self.x <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "r and x must be strictly positive, got r = {}, x = {}",
                self.r, self.x
            )));
        }
        if self.b < 0.0 {
            return Err(Error::InvalidParams(format!(
                "shunt susceptance must be nonnegative, got b = {}",
                self.b
            )));
        }
        Ok(())
    }

    /// Series impedance z = r + jx.
    pub fn series_impedance(&self) -> Complex64 {
        Complex64::new(self.r, self.x)
    }

    /// Series admittance y = 1 / (r + jx).
    pub fn series_admittance(&self) -> Complex64 {
        self.series_impedance().inv()
    }

    /// Per-end shunt admittance j·b.
    pub fn shunt_admittance(&self) -> Complex64 {
        Complex64::new(0.0, self.b)
    }
}

/// Which end of a branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum End {
    From,
    To,
}

impl End {
    pub fn opposite(self) -> End {
        match self {
            End::From => End::To,
            End::To => End::From,
        }
    }
}

impl std::fmt::Display for End {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            End::From => write!(f, "from"),
            End::To => write!(f, "to"),
        }
    }
}

/// A transmission branch between two buses. `params_db` carries the utility
/// database values; `params_true` is ground truth used only by synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub params_db: LineParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params_true: Option<LineParams>,
}

impl Branch {
    /// Stable identity of a branch: its endpoint pair as listed in the tree.
    pub fn key(&self) -> BranchKey {
        BranchKey {
            from: self.from_bus,
            to: self.to_bus,
        }
    }

    pub fn bus_at(&self, end: End) -> usize {
        match end {
            End::From => self.from_bus,
            End::To => self.to_bus,
        }
    }

    /// End of this branch that touches `bus`, if any.
    pub fn end_at(&self, bus: usize) -> Option<End> {
        if self.from_bus == bus {
            Some(End::From)
        } else if self.to_bus == bus {
            Some(End::To)
        } else {
            None
        }
    }
}

/// Branch identity that survives re-ordering of the tree file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BranchKey {
    pub from: usize,
    pub to: usize,
}

impl std::fmt::Display for BranchKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.from, self.to)
    }
}

impl std::str::FromStr for BranchKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (from, to) = s
            .split_once('-')
            .ok_or_else(|| Error::Data(format!("bad branch key '{s}'")))?;
        Ok(BranchKey {
            from: from
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("bad branch key '{s}'")))?,
            to: to
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("bad branch key '{s}'")))?,
        })
    }
}

/// Serde adapter: maps keyed by [`BranchKey`] serialize with "from-to"
/// string keys so they survive JSON.
pub mod branch_key_map {
    use std::collections::BTreeMap;

    use serde::de::{Deserialize, Deserializer, Error as _};
    use serde::ser::Serializer;
    use serde::Serialize;

    use super::BranchKey;

    pub fn serialize<S, V>(map: &BTreeMap<BranchKey, V>, ser: S) -> Result<S::Ok, S::Error>
    where
        S: Serializer,
        V: Serialize,
    {
        ser.collect_map(map.iter().map(|(k, v)| (k.to_string(), v)))
    }

    pub fn deserialize<'de, D, V>(de: D) -> Result<BTreeMap<BranchKey, V>, D::Error>
    where
        D: Deserializer<'de>,
        V: Deserialize<'de>,
    {
        let raw: BTreeMap<String, V> = BTreeMap::deserialize(de)?;
        raw.into_iter()
            .map(|(k, v)| k.parse::<BranchKey>().map(|key| (key, v)).map_err(D::Error::custom))
            .collect()
    }
}

/// Accuracy class of an instrument transformer: maximum magnitude error as a
/// fraction and maximum angle error in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItClassSpec {
    pub max_magnitude_error: f64,
    pub max_angle_error: f64,
}

impl ItClassSpec {
    pub fn new(max_magnitude_error: f64, max_angle_error: f64) -> Result<Self> {
        let s = Self {
            max_magnitude_error,
            max_angle_error,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_magnitude_error < 0.0 || self.max_angle_error < 0.0 {
            return Err(Error::Config(
                "IT class error limits must be nonnegative".into(),
            ));
        }
        if self.max_magnitude_error >= 0.05 {
            return Err(Error::Config(format!(
                "IT magnitude error limit {} is outside the supported range (< 0.05)",
                self.max_magnitude_error
            )));
        }
        Ok(())
    }
}

/// Standard accuracy classes: class label -> (magnitude limit, angle limit in rad).
/// The 0.15 entry is revenue-meter grade; angle limits for intermediate classes
/// scale proportionally and are configurable through [`ItClassSpec`] directly.
pub const IT_CLASS_TABLE: &[(&str, f64, f64)] = &[
    ("0.15", 0.0015, 0.002),
    ("0.3", 0.003, 0.0045),
    ("0.6", 0.006, 0.009),
    ("1.2", 0.012, 0.018),
];

/// Look up a standard IT class by label, e.g. `"0.6"`.
pub fn it_class(label: &str) -> Option<ItClassSpec> {
    IT_CLASS_TABLE
        .iter()
        .find(|(name, _, _)| *name == label)
        .map(|&(_, e, a)| ItClassSpec {
            max_magnitude_error: e,
            max_angle_error: a,
        })
}

/// Complex ratio error of one instrument transformer: the measured phasor is
/// `value` times the true phasor. Constant over a measurement campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioError {
    pub value: Complex64,
}

impl RatioError {
    pub fn unity() -> Self {
        Self {
            value: Complex64::new(1.0, 0.0),
        }
    }

    /// Correction factor τ = 1/α.
    pub fn correction_factor(&self) -> Complex64 {
        self.value.inv()
    }
}

/// Draw a ratio error uniformly within the class limits: magnitude factor in
/// `[1 - e, 1 + e]`, angle in `[-a, +a]`. Deterministic per seed.
pub fn sample_ratio_error(spec: &ItClassSpec, seed: u64) -> RatioError {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mag = 1.0 + spec.max_magnitude_error * rng.random_range(-1.0..=1.0);
    let ang = spec.max_angle_error * rng.random_range(-1.0..=1.0);
    RatioError {
        value: Complex64::from_polar(mag, ang),
    }
}

/// Location of the revenue-quality meter: a branch end hosting the
/// high-accuracy VT that anchors all correction factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RqmLocation {
    /// Index into the tree's branch list.
    pub branch: usize,
    pub end: End,
}

/// One step of a path across the tree: a branch crossed from `entry_bus`
/// to `exit_bus`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathStep {
    /// Index into the tree's branch list.
    pub branch: usize,
    pub entry_bus: usize,
    pub exit_bus: usize,
}

/// A connected, acyclic set of PMU-monitored branches with one RQM anchor.
#[derive(Debug, Clone)]
pub struct ConnectedTree {
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    /// bus id -> (neighbor bus id, branch index), sorted by neighbor id so
    /// traversal order does not depend on file ordering.
    adjacency: BTreeMap<usize, Vec<(usize, usize)>>,
    rqm: RqmLocation,
}

impl ConnectedTree {
    pub fn new(buses: Vec<Bus>, branches: Vec<Branch>, rqm: RqmLocation) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for bus in &buses {
            if !ids.insert(bus.id) {
                return Err(Error::InvalidTree(format!("duplicate bus id {}", bus.id)));
            }
        }
        if buses.is_empty() {
            return Err(Error::InvalidTree("tree has no buses".into()));
        }
        if branches.len() + 1 != buses.len() {
            return Err(Error::InvalidTree(format!(
                "{} branches cannot form a tree over {} buses",
                branches.len(),
                buses.len()
            )));
        }

        let mut adjacency: BTreeMap<usize, Vec<(usize, usize)>> =
            ids.iter().map(|&id| (id, Vec::new())).collect();
        for (idx, branch) in branches.iter().enumerate() {
            if branch.from_bus == branch.to_bus {
                return Err(Error::InvalidTree(format!(
                    "branch {idx} connects bus {} to itself",
                    branch.from_bus
                )));
            }
            for bus in [branch.from_bus, branch.to_bus] {
                if !ids.contains(&bus) {
                    return Err(Error::InvalidTree(format!(
                        "branch {idx} references unknown bus {bus}"
                    )));
                }
            }
            branch.params_db.validate()?;
            if let Some(true_params) = &branch.params_true {
                true_params.validate()?;
                let db = &branch.params_db;
                for (label, got, base) in [
                    ("r", true_params.r, db.r),
                    ("x", true_params.x, db.x),
                    ("b", true_params.b, db.b),
                ] {
                    // b may be zero in both database and truth
                    if base == 0.0 && got == 0.0 {
                        continue;
                    }
                    if base == 0.0 || ((got - base) / base).abs() > 0.3 + 1e-9 {
                        return Err(Error::InvalidTree(format!(
                            "branch {idx}: true {label} = {got} departs more than 30% from database value {base}"
                        )));
                    }
                }
            }
            adjacency
                .get_mut(&branch.from_bus)
                .unwrap()
                .push((branch.to_bus, idx));
            adjacency
                .get_mut(&branch.to_bus)
                .unwrap()
                .push((branch.from_bus, idx));
        }
        for list in adjacency.values_mut() {
            list.sort_unstable();
        }

        if rqm.branch >= branches.len() {
            return Err(Error::InvalidTree(format!(
                "RQM references branch {} but the tree has {} branches",
                rqm.branch,
                branches.len()
            )));
        }

        let tree = Self {
            buses,
            branches,
            adjacency,
            rqm,
        };

        // |branches| = |buses| - 1 plus full connectivity rules out cycles.
        let reachable = tree.reachable_from(tree.buses[0].id);
        if reachable.len() != tree.buses.len() {
            let missing: Vec<usize> = tree
                .buses
                .iter()
                .map(|b| b.id)
                .filter(|id| !reachable.contains(id))
                .collect();
            return Err(Error::InvalidTree(format!(
                "graph is disconnected; unreachable buses: {missing:?}"
            )));
        }

        Ok(tree)
    }

    fn reachable_from(&self, start: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(bus) = stack.pop() {
            if !seen.insert(bus) {
                continue;
            }
            for &(next, _) in &self.adjacency[&bus] {
                if !seen.contains(&next) {
                    stack.push(next);
                }
            }
        }
        seen
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn rqm(&self) -> RqmLocation {
        self.rqm
    }

    /// Returns a copy of the tree with the RQM moved to another branch end.
    pub fn with_rqm(&self, rqm: RqmLocation) -> Result<Self> {
        Self::new(self.buses.clone(), self.branches.clone(), rqm)
    }

    /// Bus hosting the RQM.
    pub fn rqm_bus(&self) -> usize {
        self.branches[self.rqm.branch].bus_at(self.rqm.end)
    }

    pub fn adjacency(&self, bus: usize) -> Option<&[(usize, usize)]> {
        self.adjacency.get(&bus).map(|v| v.as_slice())
    }

    pub fn branch_by_key(&self, key: BranchKey) -> Option<(usize, &Branch)> {
        self.branches
            .iter()
            .enumerate()
            .find(|(_, b)| b.key() == key)
    }

    /// Unique simple path from the RQM bus to `goal`, found by depth-first
    /// search. Empty when `goal` is the RQM bus itself.
    pub fn path_from_rqm(&self, goal: usize) -> Result<Vec<PathStep>> {
        self.path_between(self.rqm_bus(), goal)
    }

    /// Unique simple path between two buses.
    pub fn path_between(&self, start: usize, goal: usize) -> Result<Vec<PathStep>> {
        if !self.adjacency.contains_key(&goal) {
            return Err(Error::UnknownBus(goal));
        }
        if !self.adjacency.contains_key(&start) {
            return Err(Error::UnknownBus(start));
        }
        if start == goal {
            return Ok(Vec::new());
        }

        // Iterative DFS with parent links; the tree property makes the
        // discovered path the unique one.
        let mut parent: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        let mut visited = BTreeSet::new();
        let mut stack = vec![start];
        visited.insert(start);
        'outer: while let Some(bus) = stack.pop() {
            for &(next, branch) in &self.adjacency[&bus] {
                if visited.insert(next) {
                    parent.insert(next, (bus, branch));
                    if next == goal {
                        break 'outer;
                    }
                    stack.push(next);
                }
            }
        }

        let mut steps = Vec::new();
        let mut cursor = goal;
        while cursor != start {
            let (prev, branch) = parent[&cursor];
            steps.push(PathStep {
                branch,
                entry_bus: prev,
                exit_bus: cursor,
            });
            cursor = prev;
        }
        steps.reverse();
        Ok(steps)
    }

    /// Branch visit order for tree-wide calibration: depth-first from the RQM
    /// bus, each branch oriented so `entry_bus` faces the anchor.
    pub fn branch_order_from_rqm(&self) -> Vec<PathStep> {
        let start = self.rqm_bus();
        let mut order = Vec::with_capacity(self.branches.len());
        let mut visited = BTreeSet::new();
        let mut stack = vec![start];
        visited.insert(start);
        while let Some(bus) = stack.pop() {
            for &(next, branch) in &self.adjacency[&bus] {
                if visited.insert(next) {
                    order.push(PathStep {
                        branch,
                        entry_bus: bus,
                        exit_bus: next,
                    });
                    stack.push(next);
                }
            }
        }
        order
    }
}
