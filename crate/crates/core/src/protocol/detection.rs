//! Passive self-detection and the manager-driven probing cycles.

use alloc::vec;
use alloc::vec::Vec;

use crate::config::GetMode;
use crate::energy::{cell_health, Battery, EnergyRank, HealthStatus};
use crate::ids::{CellId, GroupId, NodeId};
use crate::messaging::{Envelope, Payload, Scope};

use super::recovery::{appoint_backup, appoint_secondary, gm_proactive, wake_sleeping};
use super::{send, send_addressed, set_role, set_timer, Action, Cause, Ctx, NodeStatus, Role, TimerKind, World};

/// Acts on a Low energy rank once: members report and sleep, managers hand
/// over to their standby and step down.
pub fn self_check(w: &mut World, ctx: &mut Ctx, id: NodeId) {
    let n = w.node(id);
    if !n.is_active() || n.low_energy_handled || n.role == Role::BaseStation || n.woken {
        return;
    }
    if w.rank(id) != EnergyRank::Low {
        return;
    }
    w.node_mut(id).low_energy_handled = true;
    let n = w.node(id);
    let cell = n.cell_id;
    let group = n.group_id;
    match n.role {
        Role::CommonNode | Role::SecondaryCellManager => {
            if let Some(cm) = n.peers.cell_manager {
                send(w, ctx, id, vec![cm], Payload::SleepNotice, Scope::Cell);
            }
            let n = w.node_mut(id);
            n.status = NodeStatus::Sleeping;
            n.cancel_timer(TimerKind::AwaitCellManager);
            n.cell_election = None;
            ctx.actions.push(Action::Slept { node: id });
        }
        Role::CellManager | Role::BackupGroupNode => {
            let successor = w.grid.record(cell).and_then(|r| r.secondary_id);
            let mut to = w.cell_others(cell, &[id]);
            if let Some(gm) = n.peers.group_manager {
                to.push(gm);
            }
            send(w, ctx, id, to, Payload::LowEnergyNotice { successor }, Scope::Cell);
            if n.role == Role::BackupGroupNode {
                if let Some(g) = w.groups.get_mut(group.index()) {
                    g.backup_id = None;
                }
            }
            step_down(w, ctx, id, successor);
        }
        Role::GroupManager => {
            let successor = w.grid.record(cell).and_then(|r| r.secondary_id);
            let to = w.cell_others(cell, &[id]);
            send(w, ctx, id, to, Payload::LowEnergyNotice { successor }, Scope::Cell);
            let backup = w.groups.get(group.index()).and_then(|g| g.backup_id);
            let mut to = w.group_managers(group, &[id]);
            to.extend(n.peers.neighbor_gms.values().copied());
            to.push(NodeId::BASE_STATION);
            send(w, ctx, id, to, Payload::LowEnergyNotice { successor: backup }, Scope::Inter);
            if let Some(g) = w.groups.get_mut(group.index()) {
                g.group_manager_id = None;
            }
            step_down(w, ctx, id, successor);
            w.node_mut(id).peers.group_manager = backup;
        }
        Role::BaseStation => {}
    }
}

fn step_down(w: &mut World, ctx: &mut Ctx, id: NodeId, successor: Option<NodeId>) {
    let cell = w.node(id).cell_id;
    if let Some(r) = w.grid.record_mut(cell) {
        r.manager_id = None;
    }
    set_role(w, ctx, id, Role::CommonNode, Cause::LowEnergyDemotion);
    w.node_mut(id).peers.cell_manager = successor;
}

fn period(w: &World, cell: CellId) -> u64 {
    let m = w.cells.get(&cell).map(|l| l.period_multiplier).unwrap_or(1).max(1);
    w.cfg.timers.in_cell_period * m as u64
}

pub(super) fn in_cell_round(w: &mut World, ctx: &mut Ctx, id: NodeId) {
    let cell = w.node(id).cell_id;
    let qt = w.cfg.timers.query_timeout;
    let ledger = w.ledger_mut(cell);
    ledger.responded.clear();
    ledger.pending.clear();
    let targets: Vec<NodeId> = ledger.expected.iter().copied().filter(|m| *m != id).collect();
    match w.cfg.get_mode {
        GetMode::Broadcast => send(w, ctx, id, targets, Payload::Get, Scope::Cell),
        GetMode::Unicast => {
            for t in targets {
                send(w, ctx, id, vec![t], Payload::Get, Scope::Cell);
            }
        }
    }
    let now = ctx.now;
    set_timer(w, ctx, id, now + qt, TimerKind::CollectDeadline);
    let next = now + period(w, cell);
    set_timer(w, ctx, id, next, TimerKind::InCellRound);
}

pub(super) fn collect_deadline(w: &mut World, ctx: &mut Ctx, id: NodeId) {
    let cell = w.node(id).cell_id;
    let qt = w.cfg.timers.query_timeout;
    let ledger = w.ledger_mut(cell);
    let missing: Vec<NodeId> = ledger
        .expected
        .iter()
        .copied()
        .filter(|m| !ledger.responded.contains(m))
        .collect();
    ledger.pending.extend(missing.iter().copied());
    for m in missing {
        send(w, ctx, id, vec![m], Payload::StatusQuery, Scope::Cell);
        let now = ctx.now;
        set_timer(w, ctx, id, now + qt, TimerKind::QueryDeadline(m));
    }
    appoint_secondary(w, ctx, id);
    wake_sleeping(w, ctx, id);
}

pub(super) fn query_deadline(w: &mut World, ctx: &mut Ctx, id: NodeId, member: NodeId) {
    let cell = w.node(id).cell_id;
    let ledger = w.ledger_mut(cell);
    if !ledger.pending.remove(&member) {
        return;
    }
    ledger.expected.remove(&member);
    ledger.declared.insert(member);
    if let Some(r) = w.grid.record_mut(cell) {
        if r.secondary_id == Some(member) {
            r.secondary_id = None;
        }
    }
    ctx.actions.push(Action::Declared { subject: member, by: id });
    // The subject is addressed too: if it is alive after all, it learns it was written off.
    let to = w.cell_others(cell, &[id]);
    send(w, ctx, id, to, Payload::DeclareFaulty { subject: member }, Scope::Cell);
}

/// Mean member charge of the cell as the manager knows it.
pub(super) fn own_cell_health(w: &World, id: NodeId) -> HealthStatus {
    let cell = w.node(id).cell_id;
    let initial = w.cfg.initial_energy;
    let mut batteries = vec![w.node(id).battery];
    if let Some(l) = w.cells.get(&cell) {
        for m in &l.expected {
            if let Some(e) = l.known_energy.get(m) {
                if let Ok(b) = Battery::with_residual(initial, e.clamp(0.0, initial)) {
                    batteries.push(b);
                }
            }
        }
    }
    cell_health(&batteries, &w.cfg.thresholds).unwrap_or(HealthStatus::Low)
}

pub(super) fn out_cell_report(w: &mut World, ctx: &mut Ctx, id: NodeId) {
    let q = w.cfg.timers.out_cell_period;
    let status = own_cell_health(w, id);
    let n = w.node(id);
    let cell = n.cell_id;
    let group = n.group_id;
    if n.role == Role::GroupManager {
        let gl = w.group_ledger_mut(group);
        gl.health.insert(cell, status);
        gl.cms.insert(cell, Some(id));
        let worst = gl.health.values().copied().max_by_key(|h| h.badness()).unwrap_or(status);
        send(w, ctx, id, vec![NodeId::BASE_STATION], Payload::HealthReport { status: worst }, Scope::Group);
    } else if let Some(gm) = n.peers.group_manager {
        send(w, ctx, id, vec![gm], Payload::HealthReport { status }, Scope::Group);
    }
    let now = ctx.now;
    set_timer(w, ctx, id, now + q, TimerKind::OutCellReport);
}

/// Two-cycle rule: a first missed report earns a reminder, a second one a declaration.
pub(super) fn out_cell_round(w: &mut World, ctx: &mut Ctx, id: NodeId) {
    let q = w.cfg.timers.out_cell_period;
    let n = w.node(id);
    let group = n.group_id;
    let own = n.cell_id;
    let gl = w.group_ledger_mut(group);
    let mut reminders = Vec::new();
    let mut declarations = Vec::new();
    let cells: Vec<(CellId, Option<NodeId>)> = gl.cms.iter().map(|(c, m)| (*c, *m)).collect();
    for (cell, cm) in cells {
        let Some(cm) = cm else { continue };
        if cell == own || cm == id {
            continue;
        }
        if gl.heard.contains(&cell) {
            gl.missed.insert(cell, 0);
            continue;
        }
        let missed = gl.missed.entry(cell).or_insert(0);
        *missed += 1;
        if *missed >= 2 {
            *missed = 0;
            gl.cms.insert(cell, None);
            gl.health.remove(&cell);
            declarations.push((cell, cm));
        } else {
            reminders.push(cm);
        }
    }
    gl.heard.clear();
    for cm in reminders {
        send(w, ctx, id, vec![cm], Payload::Reminder, Scope::Group);
    }
    for (cell, cm) in declarations {
        ctx.actions.push(Action::Declared { subject: cm, by: id });
        if let Some(r) = w.grid.record_mut(cell) {
            if r.manager_id == Some(cm) {
                r.manager_id = None;
            }
        }
        w.ledger_mut(cell).declared.insert(cm);
        if w.groups.get(group.index()).and_then(|g| g.backup_id) == Some(cm) {
            w.groups[group.index()].backup_id = None;
        }
        let to = w.cell_others(cell, &[id]);
        send_addressed(w, ctx, id, to, Payload::DeclareFaulty { subject: cm }, Scope::Cell, None, Some(cell));
    }
    gm_proactive(w, ctx, id);
    appoint_backup(w, ctx, id);
    let now = ctx.now;
    set_timer(w, ctx, id, now + q, TimerKind::OutCellRound);
}

pub(super) fn bs_watch(w: &mut World, ctx: &mut Ctx) {
    let q = w.cfg.timers.out_cell_period;
    let qt = w.cfg.timers.query_timeout;
    let groups: Vec<(GroupId, NodeId)> = w.bs_ledger.gms.iter().map(|(g, m)| (*g, *m)).collect();
    let mut queries = Vec::new();
    for (g, gm) in groups {
        if w.bs_ledger.heard.contains(&g) || w.bs_ledger.pending.contains(&g) {
            continue;
        }
        w.bs_ledger.pending.insert(g);
        queries.push((g, gm));
    }
    w.bs_ledger.heard.clear();
    let bs = NodeId::BASE_STATION;
    for (g, gm) in queries {
        send_addressed(w, ctx, bs, vec![gm], Payload::StatusQuery, Scope::Group, Some(g), None);
        let now = ctx.now;
        set_timer(w, ctx, bs, now + qt, TimerKind::BsQueryDeadline(g));
    }
    let now = ctx.now;
    set_timer(w, ctx, bs, now + q, TimerKind::BsWatch);
}

/// A silent group manager is declared to its cell managers and its own
/// cell, and the backup is told to take over.
pub(super) fn bs_query_deadline(w: &mut World, ctx: &mut Ctx, group: GroupId) {
    if !w.bs_ledger.pending.remove(&group) {
        return;
    }
    let Some(gm) = w.bs_ledger.gms.remove(&group) else { return };
    let bs = NodeId::BASE_STATION;
    ctx.actions.push(Action::Declared { subject: gm, by: bs });
    let gm_cell = w.node(gm).cell_id;
    if let Some(r) = w.grid.record_mut(gm_cell) {
        if r.manager_id == Some(gm) {
            r.manager_id = None;
        }
    }
    if let Some(g) = w.groups.get_mut(group.index()) {
        if g.group_manager_id == Some(gm) {
            g.group_manager_id = None;
        }
    }
    w.ledger_mut(gm_cell).declared.insert(gm);
    let mut to = w.group_managers(group, &[]);
    for m in w.cell_others(gm_cell, &[]) {
        if !to.contains(&m) {
            to.push(m);
        }
    }
    send_addressed(w, ctx, bs, to, Payload::DeclareFaulty { subject: gm }, Scope::Group, Some(group), Some(gm_cell));
    if let Some(backup) = w.bs_ledger.backups.get(&group).copied().filter(|b| *b != gm) {
        send_addressed(w, ctx, bs, vec![backup], Payload::BackupActivate, Scope::Group, Some(group), None);
    }
}

pub(super) fn on_get(w: &mut World, ctx: &mut Ctx, id: NodeId, env: &Envelope) {
    let cell = w.node(id).cell_id;
    if w.node(id).role.manages_cell() {
        // Another manager is polling this cell: whoever the cell record names wins.
        if w.grid.record(cell).and_then(|r| r.manager_id) == Some(id) {
            return;
        }
        set_role(w, ctx, id, Role::CommonNode, Cause::Replaced);
    }
    let n = w.node_mut(id);
    n.peers.cell_manager = Some(env.sender);
    n.cancel_timer(TimerKind::AwaitCellManager);
    n.cell_election = None;
    let location = n.position;
    send(w, ctx, id, vec![env.sender], Payload::Update { location }, Scope::Cell);
}

pub(super) fn on_update(w: &mut World, id: NodeId, env: &Envelope) {
    if !w.node(id).role.manages_cell() {
        return;
    }
    let cell = w.node(id).cell_id;
    let l = w.ledger_mut(cell);
    l.responded.insert(env.sender);
    l.pending.remove(&env.sender);
    l.expected.insert(env.sender);
    l.declared.remove(&env.sender);
    l.sleeping.remove(&env.sender);
    l.known_energy.insert(env.sender, env.curr_energy);
}

pub(super) fn on_status_query(w: &mut World, ctx: &mut Ctx, id: NodeId, env: &Envelope) {
    let scope = env.scope;
    let group = (env.sender.is_base_station()).then_some(env.group_id);
    send_addressed(w, ctx, id, vec![env.sender], Payload::Ack, scope, group, None);
}

pub(super) fn on_ack(w: &mut World, id: NodeId, env: &Envelope) {
    if id.is_base_station() {
        w.bs_ledger.pending.remove(&env.group_id);
        w.bs_ledger.heard.insert(env.group_id);
        return;
    }
    let n = w.node(id);
    let cell = n.cell_id;
    let group = n.group_id;
    if n.role == Role::GroupManager && env.cell_id != cell {
        let gl = w.group_ledger_mut(group);
        gl.heard.insert(env.cell_id);
        gl.missed.insert(env.cell_id, 0);
        return;
    }
    if n.role.manages_cell() {
        let l = w.ledger_mut(cell);
        l.pending.remove(&env.sender);
        l.responded.insert(env.sender);
        l.known_energy.insert(env.sender, env.curr_energy);
    }
}

pub(super) fn on_sleep_notice(w: &mut World, id: NodeId, env: &Envelope) {
    if !w.node(id).role.manages_cell() {
        return;
    }
    let cell = w.node(id).cell_id;
    let l = w.ledger_mut(cell);
    l.expected.remove(&env.sender);
    l.pending.remove(&env.sender);
    l.sleeping.insert(env.sender);
    l.known_energy.insert(env.sender, env.curr_energy);
    if let Some(r) = w.grid.record_mut(cell) {
        if r.secondary_id == Some(env.sender) {
            r.secondary_id = None;
        }
    }
}

pub(super) fn on_health_report(w: &mut World, id: NodeId, env: &Envelope, status: HealthStatus) {
    if id.is_base_station() {
        w.bs_ledger.heard.insert(env.group_id);
        w.bs_ledger.gms.insert(env.group_id, env.sender);
        return;
    }
    if w.node(id).role != Role::GroupManager || env.group_id != w.node(id).group_id {
        return;
    }
    let gl = w.group_ledger_mut(env.group_id);
    gl.cms.insert(env.cell_id, Some(env.sender));
    gl.heard.insert(env.cell_id);
    gl.missed.insert(env.cell_id, 0);
    gl.health.insert(env.cell_id, status);
    gl.cm_energy.insert(env.sender, env.curr_energy);
}

pub(super) fn on_reminder(w: &mut World, ctx: &mut Ctx, id: NodeId, env: &Envelope) {
    if w.node(id).role.manages_cell() {
        send(w, ctx, id, vec![env.sender], Payload::Ack, Scope::Group);
    }
}
