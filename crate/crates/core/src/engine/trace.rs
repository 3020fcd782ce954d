//! Trace, role-change and detection records with their CSV line formats.

use core::fmt;

use crate::baselines::BaselineKind;
use crate::ids::{CellId, GroupId, NodeId, Tick};
use crate::messaging::{MsgClass, MsgKind};
use crate::protocol::{Cause, Role};

pub const TRACE_HEADER: &str = "tick,event,sender,receiver,kind,group,cell,energy";
pub const ROLE_HEADER: &str = "tick,node,old_role,new_role,cause";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TraceKind {
    Protocol(MsgKind),
    Baseline(BaselineKind),
}

impl TraceKind {
    pub fn name(self) -> &'static str {
        match self {
            TraceKind::Protocol(k) => k.name(),
            TraceKind::Baseline(k) => k.name(),
        }
    }

    pub fn class(self) -> MsgClass {
        match self {
            TraceKind::Protocol(k) => k.class(),
            TraceKind::Baseline(k) => k.class(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TraceEvent {
    Send,
    Deliver,
    /// `loss`, `dead`, `sleeping`, `foreign-group`, `foreign-cell`, `duplicate`.
    Drop(&'static str),
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceEvent::Send => f.write_str("send"),
            TraceEvent::Deliver => f.write_str("deliver"),
            TraceEvent::Drop(r) => write!(f, "drop-{r}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Receiver {
    Node(NodeId),
    /// Multicast send line.
    Many,
}

impl fmt::Display for Receiver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Receiver::Node(n) => write!(f, "{n}"),
            Receiver::Many => f.write_str("*"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub tick: Tick,
    pub event: TraceEvent,
    /// The transmitting node.
    pub sender: NodeId,
    pub receiver: Receiver,
    pub kind: TraceKind,
    pub group: GroupId,
    pub cell: CellId,
    /// Sender's residual energy when the message was stamped, mJ.
    pub energy: f64,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{},{},{:.6}",
            self.tick,
            self.event,
            self.sender,
            self.receiver,
            self.kind.name(),
            self.group,
            self.cell,
            self.energy
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RoleChange {
    pub tick: Tick,
    pub node: NodeId,
    /// `None` for the initial assignment.
    pub old: Option<Role>,
    pub new: Role,
    pub cause: Cause,
}

impl fmt::Display for RoleChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let old = self.old.map(Role::name).unwrap_or("-");
        write!(f, "{},{},{},{},{}", self.tick, self.node, old, self.new, self.cause)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Detection {
    pub tick: Tick,
    pub subject: NodeId,
    pub by: NodeId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RecoveryRecord {
    pub tick: Tick,
    pub node: NodeId,
    pub cause: Cause,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Escalation {
    pub tick: Tick,
    pub group: GroupId,
    pub cell: CellId,
    pub reason: &'static str,
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn line_formats() {
        let r = TraceRecord {
            tick: 76,
            event: TraceEvent::Drop("foreign-cell"),
            sender: NodeId(3),
            receiver: Receiver::Many,
            kind: TraceKind::Protocol(MsgKind::LowEnergyNotice),
            group: GroupId(0),
            cell: CellId::NONE,
            energy: 380.0,
        };
        assert_eq!(r.to_string(), "76,drop-foreign-cell,3,*,low_energy_notice,0,-,380.000000");
        let c = RoleChange { tick: 77, node: NodeId(4), old: Some(Role::SecondaryCellManager), new: Role::CellManager, cause: Cause::SecondaryPromotion };
        assert_eq!(c.to_string(), "77,4,secondary,cell_manager,secondary-promotion");
        let b = RoleChange { tick: 0, node: NodeId::BASE_STATION, old: None, new: Role::BaseStation, cause: Cause::Bootstrap };
        assert_eq!(b.to_string(), "0,bs,-,base_station,bootstrap");
    }
}
