use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::config::SimConfig;
use crate::energy::{Battery, EnergyRank, HealthStatus};
use crate::error::{invalid, Result};
use crate::ids::{CellId, GroupId, NodeId};
use crate::messaging::SeenSet;
use crate::topology::{
    assign_nodes, build_grid, elect_cell_manager, elect_group_manager, form_groups, neighbor_groups, CellGrid,
    GroupRecord, Position,
};

use super::{Cause, NodeState, NodeStatus, Role};

/// Book-keeping of whoever manages a cell. Keyed by cell, so a promoted
/// successor inherits it unchanged.
#[derive(Clone, Debug, PartialEq)]
pub struct CellLedger {
    /// Members polled every round (excludes the manager, sleepers and declared nodes).
    pub expected: BTreeSet<NodeId>,
    pub responded: BTreeSet<NodeId>,
    /// Members with an outstanding status query.
    pub pending: BTreeSet<NodeId>,
    /// Last energy reported per member.
    pub known_energy: BTreeMap<NodeId, f64>,
    pub sleeping: BTreeSet<NodeId>,
    pub declared: BTreeSet<NodeId>,
    pub period_multiplier: u32,
}

impl CellLedger {
    fn new() -> Self {
        Self {
            expected: BTreeSet::new(),
            responded: BTreeSet::new(),
            pending: BTreeSet::new(),
            known_energy: BTreeMap::new(),
            sleeping: BTreeSet::new(),
            declared: BTreeSet::new(),
            period_multiplier: 1,
        }
    }
}

/// Routing preference a group manager attaches to each cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preference {
    Preferred,
    Occasional,
    Avoided,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupLedger {
    /// Current manager per cell; `None` after a declaration until a new one reports.
    pub cms: BTreeMap<CellId, Option<NodeId>>,
    pub heard: BTreeSet<CellId>,
    pub missed: BTreeMap<CellId, u32>,
    pub health: BTreeMap<CellId, HealthStatus>,
    pub cm_energy: BTreeMap<NodeId, f64>,
    pub preference: BTreeMap<CellId, Preference>,
    /// Low cells that already received a proactive directive.
    pub directed: BTreeSet<CellId>,
}

impl GroupLedger {
    fn new() -> Self {
        Self {
            cms: BTreeMap::new(),
            heard: BTreeSet::new(),
            missed: BTreeMap::new(),
            health: BTreeMap::new(),
            cm_energy: BTreeMap::new(),
            preference: BTreeMap::new(),
            directed: BTreeSet::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BsLedger {
    pub gms: BTreeMap<GroupId, NodeId>,
    pub backups: BTreeMap<GroupId, NodeId>,
    pub heard: BTreeSet<GroupId>,
    pub pending: BTreeSet<GroupId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub cfg: SimConfig,
    pub grid: CellGrid,
    pub groups: Vec<GroupRecord>,
    /// Indexed by node id.
    pub nodes: Vec<NodeState>,
    pub bs: NodeState,
    pub seen: Vec<SeenSet>,
    pub bs_seen: SeenSet,
    pub cells: BTreeMap<CellId, CellLedger>,
    pub group_ledgers: BTreeMap<GroupId, GroupLedger>,
    pub bs_ledger: BsLedger,
    /// Per-group block membership of cells.
    pub cell_group: BTreeMap<CellId, GroupId>,
}

impl World {
    /// Builds grid and groups, places the nodes and runs the initial elections.
    /// Node ids must be exactly `0..n`.
    pub fn bootstrap(cfg: &SimConfig, deployment: &[(NodeId, Position)]) -> Result<World> {
        cfg.validate()?;
        for (i, (id, _)) in deployment.iter().enumerate() {
            if id.index() != i {
                return Err(invalid("node ids must be 0..n in order"));
            }
        }
        let grid = build_grid(cfg.area_width, cfg.area_height, cfg.cell_side)?;
        let mut grid = assign_nodes(grid, deployment)?;
        let mut groups = form_groups(&grid, cfg.group_dim)?;
        let cell_group: BTreeMap<CellId, GroupId> = groups
            .iter()
            .flat_map(|g| g.cell_ids.iter().map(move |c| (*c, g.group_id)))
            .collect();

        let mut nodes = Vec::with_capacity(deployment.len());
        for (id, pos) in deployment {
            let cell = grid.cell_of(pos)?;
            let battery = Battery::new(cfg.initial_energy)?;
            nodes.push(NodeState::new(*id, *pos, battery, cell, cell_group[&cell]));
        }
        let energies: BTreeMap<NodeId, f64> = nodes.iter().map(|n| (n.id, n.battery.residual())).collect();

        let mut cells = BTreeMap::new();
        for rec in grid.cells.values_mut() {
            let mut ledger = CellLedger::new();
            if let Ok(e) = elect_cell_manager(rec, &energies) {
                rec.manager_id = Some(e.winner);
                rec.secondary_id = e.runner_up;
                for m in &rec.member_ids {
                    let n = &mut nodes[m.index()];
                    n.peers.cell_manager = Some(e.winner);
                    n.peers.secondary = e.runner_up;
                    if *m != e.winner {
                        ledger.expected.insert(*m);
                        ledger.known_energy.insert(*m, energies[m]);
                    }
                }
                nodes[e.winner.index()].role = Role::CellManager;
                if let Some(s) = e.runner_up {
                    nodes[s.index()].role = Role::SecondaryCellManager;
                }
            }
            cells.insert(rec.cell_id, ledger);
        }

        let mut bs_ledger = BsLedger::default();
        let mut group_ledgers = BTreeMap::new();
        for g in groups.iter_mut() {
            let mut ledger = GroupLedger::new();
            if let Ok(e) = elect_group_manager(g, &grid, &energies) {
                g.group_manager_id = Some(e.winner);
                g.backup_id = e.runner_up;
                nodes[e.winner.index()].role = Role::GroupManager;
                if let Some(b) = e.runner_up {
                    nodes[b.index()].role = Role::BackupGroupNode;
                    bs_ledger.backups.insert(g.group_id, b);
                }
                bs_ledger.gms.insert(g.group_id, e.winner);
                for c in &g.cell_ids {
                    let rec = &grid.cells[c];
                    if let Some(m) = rec.manager_id {
                        ledger.cms.insert(*c, Some(m));
                        ledger.cm_energy.insert(m, energies[&m]);
                    }
                    for m in &rec.member_ids {
                        nodes[m.index()].peers.group_manager = Some(e.winner);
                        nodes[m.index()].peers.backup = e.runner_up;
                    }
                }
            }
            group_ledgers.insert(g.group_id, ledger);
        }
        for g in &groups {
            let Some(gm) = g.group_manager_id else { continue };
            for ng in neighbor_groups(&groups, g.group_id) {
                if let Some(other) = groups[ng.index()].group_manager_id {
                    nodes[gm.index()].peers.neighbor_gms.insert(ng, other);
                }
            }
        }

        let bs = NodeState::base_station(Position::new(cfg.area_width / 2.0, cfg.area_height));
        let seen = alloc::vec![SeenSet::new(); nodes.len()];
        Ok(World {
            cfg: cfg.clone(),
            grid,
            groups,
            nodes,
            bs,
            seen,
            bs_seen: SeenSet::new(),
            cells,
            group_ledgers,
            bs_ledger,
            cell_group,
        })
    }

    pub fn node(&self, id: NodeId) -> &NodeState {
        if id.is_base_station() {
            &self.bs
        } else {
            &self.nodes[id.index()]
        }
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut NodeState {
        if id.is_base_station() {
            &mut self.bs
        } else {
            &mut self.nodes[id.index()]
        }
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.is_base_station() || id.index() < self.nodes.len()
    }

    /// Initial role assignment as (node, role) pairs, for the role-change log.
    pub fn bootstrap_roles(&self) -> Vec<(NodeId, Role, Cause)> {
        self.nodes
            .iter()
            .filter(|n| n.role != Role::CommonNode)
            .map(|n| (n.id, n.role, Cause::Bootstrap))
            .collect()
    }

    pub fn fraction(&self, energy: f64) -> f64 {
        energy / self.cfg.initial_energy
    }

    pub fn rank_of_energy(&self, energy: f64) -> EnergyRank {
        self.cfg.thresholds.rank_of_fraction(self.fraction(energy))
    }

    pub fn rank(&self, id: NodeId) -> EnergyRank {
        self.rank_of_energy(self.node(id).battery.residual())
    }

    /// Current member ids of a cell, minus `except`.
    pub fn cell_others(&self, cell: CellId, except: &[NodeId]) -> Vec<NodeId> {
        self.grid
            .record(cell)
            .map(|r| r.member_ids.iter().copied().filter(|m| !except.contains(m)).collect())
            .unwrap_or_default()
    }

    /// Nodes currently holding a cell-managing role in the group, minus `except`.
    pub fn group_managers(&self, group: GroupId, except: &[NodeId]) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.group_id == group && n.role.manages_cell() && n.status != NodeStatus::Dead)
            .map(|n| n.id)
            .filter(|id| !except.contains(id))
            .collect()
    }

    pub fn group_of_cell(&self, cell: CellId) -> GroupId {
        self.cell_group.get(&cell).copied().unwrap_or(GroupId::NONE)
    }

    pub fn ledger_mut(&mut self, cell: CellId) -> &mut CellLedger {
        self.cells.entry(cell).or_insert_with(CellLedger::new)
    }

    pub fn group_ledger_mut(&mut self, group: GroupId) -> &mut GroupLedger {
        self.group_ledgers.entry(group).or_insert_with(GroupLedger::new)
    }

    /// Moves a node's membership to another cell.
    pub fn move_node(&mut self, node: NodeId, to: CellId) {
        let from = self.node(node).cell_id;
        if let Some(r) = self.grid.record_mut(from) {
            r.member_ids.remove(&node);
            if r.secondary_id == Some(node) {
                r.secondary_id = None;
            }
            if r.manager_id == Some(node) {
                r.manager_id = None;
            }
        }
        if let Some(r) = self.grid.record_mut(to) {
            r.member_ids.insert(node);
        }
        if let Some(l) = self.cells.get_mut(&from) {
            l.expected.remove(&node);
            l.sleeping.remove(&node);
            l.pending.remove(&node);
        }
        let group = self.group_of_cell(to);
        let n = self.node_mut(node);
        n.cell_id = to;
        n.group_id = group;
    }
}
