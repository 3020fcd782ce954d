//! Message envelope, typed payloads and the group/cell/duplicate filter.

use alloc::collections::BTreeSet;
use alloc::format;

use crate::energy::{EnergyRank, HealthStatus};
use crate::error::{Error, Result};
use crate::ids::{CellId, GroupId, NodeId, Tick};
use crate::protocol::{NodeState, NodeStatus, Role};
use crate::topology::Position;

/// Who is allowed to process a message once it arrives.
///
/// `Cell` and `Group` messages require a matching group id; `Cell` also
/// requires a matching cell id unless the receiver is a group manager.
/// `Inter` messages are processed by any node of the sender's group and by
/// group managers of other groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scope {
    Cell,
    Group,
    Inter,
}

impl Scope {
    pub fn name(self) -> &'static str {
        match self {
            Scope::Cell => "cell",
            Scope::Group => "group",
            Scope::Inter => "inter",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Payload {
    Get,
    Update { location: Position },
    StatusQuery,
    Ack,
    SleepNotice,
    LowEnergyNotice { successor: Option<NodeId> },
    /// Appointment of a new secondary (cell scope) or backup (group scope).
    PromoteSecondary { appointee: NodeId },
    DeclareFaulty { subject: NodeId },
    HealthReport { status: HealthStatus },
    Reminder,
    EnergyShare { rank: EnergyRank },
    NewManagerAnnounce { manager: NodeId },
    MergeRequest,
    MergeDirective { target_cell: CellId },
    RateDirective { period_multiplier: u32 },
    BackupActivate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MsgKind {
    Get,
    Update,
    StatusQuery,
    Ack,
    SleepNotice,
    LowEnergyNotice,
    PromoteSecondary,
    DeclareFaulty,
    HealthReport,
    Reminder,
    EnergyShare,
    NewManagerAnnounce,
    MergeRequest,
    MergeDirective,
    RateDirective,
    BackupActivate,
}

impl MsgKind {
    pub const ALL: [MsgKind; 16] = [
        MsgKind::Get,
        MsgKind::Update,
        MsgKind::StatusQuery,
        MsgKind::Ack,
        MsgKind::SleepNotice,
        MsgKind::LowEnergyNotice,
        MsgKind::PromoteSecondary,
        MsgKind::DeclareFaulty,
        MsgKind::HealthReport,
        MsgKind::Reminder,
        MsgKind::EnergyShare,
        MsgKind::NewManagerAnnounce,
        MsgKind::MergeRequest,
        MsgKind::MergeDirective,
        MsgKind::RateDirective,
        MsgKind::BackupActivate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MsgKind::Get => "get",
            MsgKind::Update => "update",
            MsgKind::StatusQuery => "status_query",
            MsgKind::Ack => "ack",
            MsgKind::SleepNotice => "sleep_notice",
            MsgKind::LowEnergyNotice => "low_energy_notice",
            MsgKind::PromoteSecondary => "promote_secondary",
            MsgKind::DeclareFaulty => "declare_faulty",
            MsgKind::HealthReport => "health_report",
            MsgKind::Reminder => "reminder",
            MsgKind::EnergyShare => "energy_share",
            MsgKind::NewManagerAnnounce => "new_manager",
            MsgKind::MergeRequest => "merge_request",
            MsgKind::MergeDirective => "merge_directive",
            MsgKind::RateDirective => "rate_directive",
            MsgKind::BackupActivate => "backup_activate",
        }
    }

    pub fn class(self) -> MsgClass {
        match self {
            MsgKind::Get | MsgKind::Update | MsgKind::HealthReport | MsgKind::PromoteSecondary => {
                MsgClass::Maintenance
            }
            MsgKind::StatusQuery | MsgKind::Ack | MsgKind::Reminder => MsgClass::Probe,
            MsgKind::SleepNotice => MsgClass::FailureReport,
            MsgKind::RateDirective => MsgClass::Proactive,
            MsgKind::LowEnergyNotice
            | MsgKind::DeclareFaulty
            | MsgKind::EnergyShare
            | MsgKind::NewManagerAnnounce
            | MsgKind::MergeRequest
            | MsgKind::MergeDirective
            | MsgKind::BackupActivate => MsgClass::Recovery,
        }
    }
}

/// Accounting bucket of a message. Recovery energy and counts cover
/// `FailureReport` and `Recovery`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MsgClass {
    Maintenance,
    Probe,
    FailureReport,
    Recovery,
    Proactive,
}

impl MsgClass {
    pub fn is_recovery(self) -> bool {
        matches!(self, MsgClass::FailureReport | MsgClass::Recovery)
    }
}

impl Payload {
    pub fn kind(&self) -> MsgKind {
        match self {
            Payload::Get => MsgKind::Get,
            Payload::Update { .. } => MsgKind::Update,
            Payload::StatusQuery => MsgKind::StatusQuery,
            Payload::Ack => MsgKind::Ack,
            Payload::SleepNotice => MsgKind::SleepNotice,
            Payload::LowEnergyNotice { .. } => MsgKind::LowEnergyNotice,
            Payload::PromoteSecondary { .. } => MsgKind::PromoteSecondary,
            Payload::DeclareFaulty { .. } => MsgKind::DeclareFaulty,
            Payload::HealthReport { .. } => MsgKind::HealthReport,
            Payload::Reminder => MsgKind::Reminder,
            Payload::EnergyShare { .. } => MsgKind::EnergyShare,
            Payload::NewManagerAnnounce { .. } => MsgKind::NewManagerAnnounce,
            Payload::MergeRequest => MsgKind::MergeRequest,
            Payload::MergeDirective { .. } => MsgKind::MergeDirective,
            Payload::RateDirective { .. } => MsgKind::RateDirective,
            Payload::BackupActivate => MsgKind::BackupActivate,
        }
    }
}

/// Duplicate-detection key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MsgId {
    pub sender: NodeId,
    pub timestamp: Tick,
    pub kind: MsgKind,
    pub scope: Scope,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Envelope {
    pub group_id: GroupId,
    pub cell_id: CellId,
    pub timestamp: Tick,
    pub curr_energy: f64,
    pub sender: NodeId,
    pub scope: Scope,
    pub payload: Payload,
}

impl Envelope {
    pub fn msg_id(&self) -> MsgId {
        MsgId {
            sender: self.sender,
            timestamp: self.timestamp,
            kind: self.payload.kind(),
            scope: self.scope,
        }
    }

    pub fn kind(&self) -> MsgKind {
        self.payload.kind()
    }

    /// Re-addresses the envelope to another group (manager-to-manager traffic
    /// aimed at a cell outside the sender's own).
    pub fn with_group(self, group_id: GroupId) -> Self {
        Self { group_id, ..self }
    }

    pub fn with_cell(self, cell_id: CellId) -> Self {
        Self { cell_id, ..self }
    }
}

/// Stamps the sender's group, cell, residual energy and the send time.
pub fn make_envelope(sender: &NodeState, payload: Payload, scope: Scope, now: Tick) -> Result<Envelope> {
    if sender.status != NodeStatus::Active {
        return Err(Error::IllegalState(format!(
            "node {} cannot send while {:?}",
            sender.id, sender.status
        )));
    }
    Ok(Envelope {
        group_id: sender.group_id,
        cell_id: sender.cell_id,
        timestamp: now,
        curr_energy: sender.battery.residual(),
        sender: sender.id,
        scope,
        payload,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SeenSet {
    ids: BTreeSet<MsgId>,
}

impl SeenSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, id: &MsgId) -> bool {
        self.ids.contains(id)
    }

    /// Returns false if the id was already present.
    pub fn insert(&mut self, id: MsgId) -> bool {
        self.ids.insert(id)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FilterDecision {
    Process,
    DropForeignGroup,
    DropForeignCell,
    DropDuplicate,
}

impl FilterDecision {
    /// Trace event name for a drop, `None` for `Process`.
    pub fn drop_reason(self) -> Option<&'static str> {
        match self {
            FilterDecision::Process => None,
            FilterDecision::DropForeignGroup => Some("drop-foreign-group"),
            FilterDecision::DropForeignCell => Some("drop-foreign-cell"),
            FilterDecision::DropDuplicate => Some("drop-duplicate"),
        }
    }
}

/// Scope check without touching the seen set.
pub fn scope_decision(node: &NodeState, msg: &Envelope) -> FilterDecision {
    if node.id.is_base_station() || msg.sender.is_base_station() {
        return FilterDecision::Process;
    }
    let is_gm = node.role == Role::GroupManager;
    let same_group = node.group_id == msg.group_id;
    match msg.scope {
        Scope::Inter if same_group || is_gm => FilterDecision::Process,
        Scope::Inter => FilterDecision::DropForeignGroup,
        _ if !same_group => FilterDecision::DropForeignGroup,
        Scope::Cell if node.cell_id != msg.cell_id && !is_gm => FilterDecision::DropForeignCell,
        _ => FilterDecision::Process,
    }
}

/// Group check, cell check, then duplicate check. A `Process` decision records the id.
pub fn filter_message(node: &NodeState, seen: &mut SeenSet, msg: &Envelope) -> FilterDecision {
    match scope_decision(node, msg) {
        FilterDecision::Process => {}
        drop => return drop,
    }
    if seen.insert(msg.msg_id()) {
        FilterDecision::Process
    } else {
        FilterDecision::DropDuplicate
    }
}
