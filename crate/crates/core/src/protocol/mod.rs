//! Role state machines for detection, diagnosis and recovery.
//!
//! Handlers take the world, the acting node and an event, update that
//! node's state (and the shared per-cell / per-group ledgers its role owns),
//! and push [`Action`]s for everything with an outside effect: sends,
//! timers, role-change log entries, declarations. The engine executes the
//! actions; handlers never touch the event queue or charge energy.

mod detection;
mod dispatch;
mod recovery;
mod world;

use alloc::vec::Vec;
use core::fmt;

pub use detection::self_check;
pub use dispatch::{on_message, on_timer};
pub use recovery::{cell_election_outcome, choose_wakers, merge_targets, wake_sleeping, ElectionOutcome};
pub use world::{BsLedger, CellLedger, GroupLedger, Preference, World};

use crate::energy::Battery;
use crate::ids::{CellId, GroupId, NodeId, Tick};
use crate::messaging::{make_envelope, Envelope, Payload, Scope};
use crate::topology::Position;

use alloc::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    CommonNode,
    SecondaryCellManager,
    CellManager,
    GroupManager,
    /// A cell manager that also stands by for the group manager.
    BackupGroupNode,
    BaseStation,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::CommonNode => "common",
            Role::SecondaryCellManager => "secondary",
            Role::CellManager => "cell_manager",
            Role::GroupManager => "group_manager",
            Role::BackupGroupNode => "backup",
            Role::BaseStation => "base_station",
        }
    }

    /// Runs cell-manager duties for its own cell.
    pub fn manages_cell(self) -> bool {
        matches!(self, Role::CellManager | Role::GroupManager | Role::BackupGroupNode)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeStatus {
    Active,
    Sleeping,
    Dead,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimerKind {
    EnergyCheck,
    InCellRound,
    CollectDeadline,
    QueryDeadline(NodeId),
    OutCellReport,
    OutCellRound,
    BsWatch,
    BsQueryDeadline(GroupId),
    ElectionClose,
    GmElectionClose,
    AwaitCellManager,
    AwaitGroupManager,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cause {
    Bootstrap,
    SecondaryPromotion,
    EnergyElection,
    BackupTakeover,
    GmElection,
    LowEnergyDemotion,
    Merged,
    Appointed,
    Replaced,
    Declared,
    BaselineRecovery,
}

impl Cause {
    pub fn name(self) -> &'static str {
        match self {
            Cause::Bootstrap => "bootstrap",
            Cause::SecondaryPromotion => "secondary-promotion",
            Cause::EnergyElection => "energy-election",
            Cause::BackupTakeover => "backup-takeover",
            Cause::GmElection => "gm-election",
            Cause::LowEnergyDemotion => "low-energy-demotion",
            Cause::Merged => "merged",
            Cause::Appointed => "appointed",
            Cause::Replaced => "replaced",
            Cause::Declared => "declared",
            Cause::BaselineRecovery => "baseline-recovery",
        }
    }
}

impl fmt::Display for Cause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Cached ids of the node's managers.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Peers {
    pub cell_manager: Option<NodeId>,
    pub secondary: Option<NodeId>,
    pub group_manager: Option<NodeId>,
    pub backup: Option<NodeId>,
    pub neighbor_gms: BTreeMap<GroupId, NodeId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeState {
    pub id: NodeId,
    pub position: Position,
    pub role: Role,
    pub battery: Battery,
    pub cell_id: CellId,
    pub group_id: GroupId,
    pub status: NodeStatus,
    /// Pending timers. A fired timer not found here was cancelled.
    pub timers: BTreeSet<(Tick, TimerKind)>,
    pub peers: Peers,
    pub last_heard: BTreeMap<NodeId, Tick>,
    /// Low-energy self-detection already acted on.
    pub low_energy_handled: bool,
    /// Woken to restore cell density; does not go back to sleep.
    pub woken: bool,
    /// Energy shares collected during a cell-manager election.
    pub cell_election: Option<BTreeMap<NodeId, f64>>,
    /// Energy shares collected during a group-manager election.
    pub gm_election: Option<BTreeMap<NodeId, f64>>,
    /// Asked the group manager for a merge; no further elections.
    pub merge_requested: bool,
    /// Sum of every charge applied to the battery.
    pub charged: f64,
}

impl NodeState {
    pub fn new(id: NodeId, position: Position, battery: Battery, cell_id: CellId, group_id: GroupId) -> Self {
        Self {
            id,
            position,
            role: Role::CommonNode,
            battery,
            cell_id,
            group_id,
            status: NodeStatus::Active,
            timers: BTreeSet::new(),
            peers: Peers::default(),
            last_heard: BTreeMap::new(),
            low_energy_handled: false,
            woken: false,
            cell_election: None,
            gm_election: None,
            merge_requested: false,
            charged: 0.0,
        }
    }

    /// The base station is mains-powered; its battery is never charged.
    pub fn base_station(position: Position) -> Self {
        let mut s = Self::new(
            NodeId::BASE_STATION,
            position,
            Battery::new(0.0).expect("zero is a valid capacity"),
            CellId::NONE,
            GroupId::NONE,
        );
        s.role = Role::BaseStation;
        s
    }

    pub fn is_active(&self) -> bool {
        self.status == NodeStatus::Active
    }

    pub fn has_timer(&self, kind: TimerKind) -> bool {
        self.timers.iter().any(|(_, k)| *k == kind)
    }

    pub fn cancel_timer(&mut self, kind: TimerKind) {
        self.timers.retain(|(_, k)| *k != kind);
    }
}

/// Outside effects of a transition, executed by the engine in order.
#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    /// One transmission; several receivers make it a multicast.
    Send { from: NodeId, to: Vec<NodeId>, envelope: Envelope },
    SetTimer { node: NodeId, at: Tick, kind: TimerKind },
    RoleChanged { node: NodeId, old: Role, new: Role, cause: Cause },
    Declared { subject: NodeId, by: NodeId },
    Slept { node: NodeId },
    Woke { node: NodeId },
    /// A role or membership repair finished at this node.
    Recovered { node: NodeId, cause: Cause },
    Escalated { group: GroupId, cell: CellId, reason: &'static str },
    /// A handler tried something the model forbids (e.g. a silent node sending).
    Fault { node: NodeId, detail: &'static str },
}

/// Per-event output buffer.
#[derive(Debug)]
pub struct Ctx {
    pub now: Tick,
    pub actions: Vec<Action>,
}

impl Ctx {
    pub fn new(now: Tick) -> Self {
        Self { now, actions: Vec::new() }
    }
}

pub(crate) fn send(w: &World, ctx: &mut Ctx, from: NodeId, to: Vec<NodeId>, payload: Payload, scope: Scope) {
    send_addressed(w, ctx, from, to, payload, scope, None, None);
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn send_addressed(
    w: &World,
    ctx: &mut Ctx,
    from: NodeId,
    to: Vec<NodeId>,
    payload: Payload,
    scope: Scope,
    group: Option<GroupId>,
    cell: Option<CellId>,
) {
    let to: Vec<NodeId> = to.into_iter().filter(|t| *t != from).collect();
    if to.is_empty() {
        return;
    }
    match make_envelope(w.node(from), payload, scope, ctx.now) {
        Ok(mut envelope) => {
            if let Some(g) = group {
                envelope = envelope.with_group(g);
            }
            if let Some(c) = cell {
                envelope = envelope.with_cell(c);
            }
            ctx.actions.push(Action::Send { from, to, envelope });
        }
        Err(_) => ctx.actions.push(Action::Fault { node: from, detail: "send from a node that is not active" }),
    }
}

pub(crate) fn set_timer(w: &mut World, ctx: &mut Ctx, node: NodeId, at: Tick, kind: TimerKind) {
    w.node_mut(node).timers.insert((at, kind));
    ctx.actions.push(Action::SetTimer { node, at, kind });
}

pub(crate) fn set_role(w: &mut World, ctx: &mut Ctx, node: NodeId, new: Role, cause: Cause) {
    let n = w.node_mut(node);
    let old = n.role;
    if old == new {
        return;
    }
    n.role = new;
    if !new.manages_cell() {
        n.timers.retain(|(_, k)| {
            !matches!(
                k,
                TimerKind::InCellRound | TimerKind::CollectDeadline | TimerKind::QueryDeadline(_) | TimerKind::OutCellReport
            )
        });
    }
    if new != Role::GroupManager {
        n.cancel_timer(TimerKind::OutCellRound);
    }
    ctx.actions.push(Action::RoleChanged { node, old, new, cause });
}

/// First multiple of `period` strictly after `now`, plus `offset`.
pub(crate) fn next_slot(now: Tick, period: Tick, offset: Tick) -> Tick {
    let base = if now >= offset { (now - offset) / period + 1 } else { 0 };
    base * period + offset
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slot_arithmetic() {
        assert_eq!(next_slot(0, 30, 0), 30);
        assert_eq!(next_slot(30, 30, 0), 60);
        assert_eq!(next_slot(44, 30, 15), 45);
        assert_eq!(next_slot(45, 30, 15), 75);
        assert_eq!(next_slot(3, 30, 15), 15);
    }

    #[test]
    fn manager_roles() {
        assert!(Role::GroupManager.manages_cell());
        assert!(Role::BackupGroupNode.manages_cell());
        assert!(!Role::SecondaryCellManager.manages_cell());
        assert!(!Role::BaseStation.manages_cell());
    }
}
