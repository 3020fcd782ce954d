//! Secondary promotion, energy elections, merging, backup takeover and the
//! group manager's proactive actions.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::config::ProactivePolicy;
use crate::energy::{EnergyRank, HealthStatus, Thresholds};
use crate::ids::{CellId, GroupId, NodeId};
use crate::messaging::{Envelope, Payload, Scope};
use crate::topology::{neighbor_groups, rank_by_energy, CellGrid, Position};

use super::{
    next_slot, send, send_addressed, set_role, set_timer, Action, Cause, Ctx, NodeStatus, Preference, Role,
    TimerKind, World,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElectionOutcome {
    Winner(NodeId),
    /// Nobody reached the High rank; the lowest participant id asks for a merge.
    NoWinner { requester: NodeId },
}

/// Highest energy share at or above the High threshold wins, lowest id on ties.
pub fn cell_election_outcome(
    shares: &BTreeMap<NodeId, f64>,
    initial_energy: f64,
    thresholds: &Thresholds,
) -> Option<ElectionOutcome> {
    let requester = *shares.keys().next()?;
    let eligible = shares
        .iter()
        .filter(|(_, e)| thresholds.rank_of_fraction(**e / initial_energy) == EnergyRank::High)
        .map(|(id, _)| *id);
    Some(match rank_by_energy(eligible, shares).first() {
        Some(w) => ElectionOutcome::Winner(*w),
        None => ElectionOutcome::NoWinner { requester },
    })
}

/// Best merge destination for a node of `source`: grid neighbours inside the
/// group first, any other group cell otherwise; viable cells are managed,
/// not retired and not Low. Ranked by health, distance, id.
pub fn merge_targets(
    grid: &CellGrid,
    group_cells: &[CellId],
    health: &BTreeMap<CellId, HealthStatus>,
    source: CellId,
    position: &Position,
) -> Option<CellId> {
    let viable: Vec<CellId> = group_cells
        .iter()
        .copied()
        .filter(|c| *c != source)
        .filter(|c| {
            grid.record(*c).is_some_and(|r| !r.retired && r.manager_id.is_some())
                && health.get(c).copied() != Some(HealthStatus::Low)
        })
        .collect();
    let adjacent: Vec<CellId> = grid.neighbors4(source).into_iter().filter(|c| viable.contains(c)).collect();
    let pool = if adjacent.is_empty() { viable } else { adjacent };
    pool.into_iter().min_by(|a, b| {
        let ha = health.get(a).copied().unwrap_or(HealthStatus::Medium).badness();
        let hb = health.get(b).copied().unwrap_or(HealthStatus::Medium).badness();
        ha.cmp(&hb)
            .then(grid.dist_sq_to_cell(position, *a).total_cmp(&grid.dist_sq_to_cell(position, *b)))
            .then(a.cmp(b))
    })
}

/// Sleepers to wake, highest known energy first; zero-energy nodes never wake.
pub fn choose_wakers(sleepers: &[(NodeId, f64)], needed: usize) -> Vec<NodeId> {
    let mut v: Vec<(NodeId, f64)> = sleepers.iter().copied().filter(|(_, e)| *e > 0.0).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().take(needed).map(|(id, _)| id).collect()
}

/// Tops the cell back up to the configured density by waking sleepers.
pub fn wake_sleeping(w: &mut World, ctx: &mut Ctx, cm: NodeId) {
    let min = w.cfg.min_cell_density;
    if min == 0 {
        return;
    }
    let cell = w.node(cm).cell_id;
    let l = w.ledger_mut(cell);
    let active = l.expected.len() + 1;
    if active >= min {
        return;
    }
    let sleepers: Vec<NodeId> = l.sleeping.iter().copied().collect();
    let candidates: Vec<(NodeId, f64)> = sleepers
        .into_iter()
        .filter(|s| w.node(*s).status == NodeStatus::Sleeping)
        .map(|s| (s, w.node(s).battery.residual()))
        .collect();
    for s in choose_wakers(&candidates, min - active) {
        let n = w.node_mut(s);
        n.status = NodeStatus::Active;
        n.woken = true;
        let l = w.ledger_mut(cell);
        l.sleeping.remove(&s);
        l.expected.insert(s);
        ctx.actions.push(Action::Woke { node: s });
    }
}

/// Picks a new secondary among members that answered this round.
pub(super) fn appoint_secondary(w: &mut World, ctx: &mut Ctx, cm: NodeId) {
    let cell = w.node(cm).cell_id;
    let Some(l) = w.cells.get(&cell) else { return };
    let current = w.grid.record(cell).and_then(|r| r.secondary_id);
    let still_ok = current.is_some_and(|s| {
        l.expected.contains(&s) && l.known_energy.get(&s).is_some_and(|e| w.rank_of_energy(*e) != EnergyRank::Low)
    });
    if still_ok {
        return;
    }
    let candidates: Vec<NodeId> = l
        .responded
        .iter()
        .copied()
        .filter(|m| l.expected.contains(m) && *m != cm)
        .filter(|m| l.known_energy.get(m).is_some_and(|e| w.rank_of_energy(*e) != EnergyRank::Low))
        .collect();
    let Some(appointee) = rank_by_energy(candidates, &l.known_energy).first().copied() else {
        if let Some(r) = w.grid.record_mut(cell) {
            r.secondary_id = None;
        }
        return;
    };
    let to: Vec<NodeId> = l.responded.iter().copied().collect();
    if let Some(r) = w.grid.record_mut(cell) {
        r.secondary_id = Some(appointee);
    }
    w.node_mut(cm).peers.secondary = Some(appointee);
    send(w, ctx, cm, to, Payload::PromoteSecondary { appointee }, Scope::Cell);
}

/// Picks a backup among the group's reporting cell managers.
pub(super) fn appoint_backup(w: &mut World, ctx: &mut Ctx, gm: NodeId) {
    let group = w.node(gm).group_id;
    let Some(gl) = w.group_ledgers.get(&group) else { return };
    let live: Vec<NodeId> = gl.cms.values().flatten().copied().filter(|m| *m != gm).collect();
    let current = w.groups.get(group.index()).and_then(|g| g.backup_id);
    if current.is_some_and(|b| live.contains(&b)) {
        return;
    }
    let candidates: Vec<NodeId> = live
        .iter()
        .copied()
        .filter(|m| gl.cm_energy.get(m).is_some_and(|e| w.rank_of_energy(*e) != EnergyRank::Low))
        .collect();
    let Some(appointee) = rank_by_energy(candidates, &gl.cm_energy).first().copied() else { return };
    if let Some(g) = w.groups.get_mut(group.index()) {
        g.backup_id = Some(appointee);
    }
    w.node_mut(gm).peers.backup = Some(appointee);
    let mut to = w.group_managers(group, &[gm]);
    to.push(NodeId::BASE_STATION);
    send(w, ctx, gm, to, Payload::PromoteSecondary { appointee }, Scope::Group);
}

/// Grades each reported cell and acts once on every cell that turns Low.
pub(super) fn gm_proactive(w: &mut World, ctx: &mut Ctx, gm: NodeId) {
    let group = w.node(gm).group_id;
    let own = w.node(gm).cell_id;
    let gl = w.group_ledger_mut(group);
    let mut act_on = Vec::new();
    let reports: Vec<(CellId, HealthStatus)> = gl.health.iter().map(|(c, h)| (*c, *h)).collect();
    for (cell, h) in reports {
        let pref = match h {
            HealthStatus::High => Preference::Preferred,
            HealthStatus::Medium => Preference::Occasional,
            HealthStatus::Low => Preference::Avoided,
        };
        gl.preference.insert(cell, pref);
        if h != HealthStatus::Low {
            gl.directed.remove(&cell);
        } else if cell != own && gl.directed.insert(cell) {
            act_on.push(cell);
        }
    }
    for cell in act_on {
        match w.cfg.proactive {
            ProactivePolicy::Rate { multiplier } => {
                let to = w.cell_others(cell, &[gm]);
                let payload = Payload::RateDirective { period_multiplier: multiplier };
                send_addressed(w, ctx, gm, to, payload, Scope::Cell, None, Some(cell));
            }
            ProactivePolicy::Merge => merge_cells(w, ctx, gm, cell),
        }
    }
}

/// Turns `id` into its cell's manager, inheriting the cell ledger.
pub(super) fn promote(w: &mut World, ctx: &mut Ctx, id: NodeId, cause: Cause) {
    let cell = w.node(id).cell_id;
    if let Some(r) = w.grid.record_mut(cell) {
        r.manager_id = Some(id);
        if r.secondary_id == Some(id) {
            r.secondary_id = None;
        }
    }
    w.ledger_mut(cell).expected.remove(&id);
    if w.node(id).role != Role::GroupManager {
        set_role(w, ctx, id, Role::CellManager, cause);
    }
    let n = w.node_mut(id);
    n.peers.cell_manager = Some(id);
    if n.peers.secondary == Some(id) {
        n.peers.secondary = None;
    }
    n.cancel_timer(TimerKind::AwaitCellManager);
    n.cell_election = None;
    n.merge_requested = false;
    let now = ctx.now;
    if !w.node(id).has_timer(TimerKind::InCellRound) {
        set_timer(w, ctx, id, now + 1, TimerKind::InCellRound);
    }
    if !w.node(id).has_timer(TimerKind::OutCellReport) {
        let at = next_slot(now, w.cfg.timers.out_cell_period, 0);
        set_timer(w, ctx, id, at, TimerKind::OutCellReport);
    }
    ctx.actions.push(Action::Recovered { node: id, cause });
}

fn viable_successor(w: &World, id: NodeId) -> bool {
    w.node(id).is_active() && w.rank(id) != EnergyRank::Low
}

fn await_cell_manager(w: &mut World, ctx: &mut Ctx, id: NodeId) {
    if w.node(id).has_timer(TimerKind::AwaitCellManager) || w.node(id).role.manages_cell() {
        return;
    }
    let t = &w.cfg.timers;
    let at = ctx.now + t.in_cell_period + t.query_timeout;
    set_timer(w, ctx, id, at, TimerKind::AwaitCellManager);
}

fn await_group_manager(w: &mut World, ctx: &mut Ctx, id: NodeId) {
    if w.node(id).has_timer(TimerKind::AwaitGroupManager) || !w.node(id).role.manages_cell() {
        return;
    }
    let at = ctx.now + 2 * w.cfg.timers.query_timeout;
    set_timer(w, ctx, id, at, TimerKind::AwaitGroupManager);
}

pub(super) fn on_declare_faulty(w: &mut World, ctx: &mut Ctx, id: NodeId, env: &Envelope, subject: NodeId) {
    if id.is_base_station() {
        return;
    }
    let n = w.node(id);
    if subject == id {
        if n.role.manages_cell() {
            let group = n.group_id;
            if n.role == Role::GroupManager {
                if let Some(g) = w.groups.get_mut(group.index()) {
                    if g.group_manager_id == Some(id) {
                        g.group_manager_id = None;
                    }
                }
            }
            set_role(w, ctx, id, Role::CommonNode, Cause::Declared);
        }
        return;
    }
    if n.role == Role::GroupManager && env.cell_id != n.cell_id {
        return;
    }
    let my_cm = n.peers.cell_manager == Some(subject);
    let my_gm = n.peers.group_manager == Some(subject);
    if n.peers.secondary == Some(subject) {
        w.node_mut(id).peers.secondary = None;
    }
    if my_cm {
        let cell = w.node(id).cell_id;
        w.ledger_mut(cell).declared.insert(subject);
        if w.node(id).role == Role::SecondaryCellManager && viable_successor(w, id) {
            promote(w, ctx, id, Cause::SecondaryPromotion);
        } else {
            let successor = w.node(id).peers.secondary.filter(|s| *s != subject);
            w.node_mut(id).peers.cell_manager = successor;
            await_cell_manager(w, ctx, id);
        }
    }
    if my_gm {
        await_group_manager(w, ctx, id);
    }
}

pub(super) fn on_low_energy_notice(
    w: &mut World,
    ctx: &mut Ctx,
    id: NodeId,
    env: &Envelope,
    successor: Option<NodeId>,
) {
    if id.is_base_station() {
        if env.scope == Scope::Inter {
            w.bs_ledger.gms.remove(&env.group_id);
            w.bs_ledger.pending.remove(&env.group_id);
        }
        return;
    }
    let n = w.node(id);
    match env.scope {
        Scope::Cell => {
            if n.role == Role::GroupManager && env.cell_id != n.cell_id {
                let group = n.group_id;
                w.group_ledger_mut(group).cms.insert(env.cell_id, successor);
                if let Some(g) = w.groups.get_mut(group.index()) {
                    if g.backup_id == Some(env.sender) {
                        g.backup_id = None;
                    }
                }
                return;
            }
            if n.peers.cell_manager != Some(env.sender) {
                return;
            }
            if successor == Some(id) && n.role == Role::SecondaryCellManager && viable_successor(w, id) {
                promote(w, ctx, id, Cause::SecondaryPromotion);
                // The old manager stays on as an ordinary, still-reporting member.
                let cell = w.node(id).cell_id;
                w.ledger_mut(cell).expected.insert(env.sender);
            } else {
                let m = w.node_mut(id);
                m.peers.cell_manager = successor;
                if m.peers.secondary == successor {
                    m.peers.secondary = None;
                }
                await_cell_manager(w, ctx, id);
            }
        }
        Scope::Inter => {
            if n.role == Role::GroupManager && n.group_id != env.group_id {
                let m = w.node_mut(id);
                match successor {
                    Some(s) => m.peers.neighbor_gms.insert(env.group_id, s),
                    None => m.peers.neighbor_gms.remove(&env.group_id),
                };
                return;
            }
            if n.group_id != env.group_id {
                return;
            }
            if successor == Some(id) && n.role.manages_cell() && viable_successor(w, id) {
                backup_takeover(w, ctx, id, Cause::BackupTakeover);
            } else if n.role.manages_cell() {
                w.node_mut(id).peers.group_manager = successor;
                await_group_manager(w, ctx, id);
            }
        }
        Scope::Group => {}
    }
}

pub(super) fn on_backup_activate(w: &mut World, ctx: &mut Ctx, id: NodeId) {
    let n = w.node(id);
    if n.role.manages_cell() && n.role != Role::GroupManager && viable_successor(w, id) {
        backup_takeover(w, ctx, id, Cause::BackupTakeover);
    } else {
        await_group_manager(w, ctx, id);
    }
}

fn neighbor_gms(w: &World, group: GroupId) -> BTreeMap<GroupId, NodeId> {
    neighbor_groups(&w.groups, group)
        .into_iter()
        .filter_map(|g| w.groups[g.index()].group_manager_id.map(|m| (g, m)))
        .collect()
}

/// Makes a cell manager the group manager and announces it to the group,
/// the neighbouring group managers and the base station.
pub(super) fn backup_takeover(w: &mut World, ctx: &mut Ctx, id: NodeId, cause: Cause) {
    let group = w.node(id).group_id;
    let cell = w.node(id).cell_id;
    if let Some(g) = w.groups.get_mut(group.index()) {
        g.group_manager_id = Some(id);
        if g.backup_id == Some(id) {
            g.backup_id = None;
        }
    }
    set_role(w, ctx, id, Role::GroupManager, cause);
    let neighbours = neighbor_gms(w, group);
    let n = w.node_mut(id);
    n.peers.group_manager = Some(id);
    n.peers.backup = None;
    n.peers.neighbor_gms = neighbours.clone();
    n.cancel_timer(TimerKind::AwaitGroupManager);
    n.gm_election = None;
    let gl = w.group_ledger_mut(group);
    gl.cms.insert(cell, Some(id));
    gl.heard = gl.cms.keys().copied().collect();
    gl.missed.clear();
    let now = ctx.now;
    if !w.node(id).has_timer(TimerKind::OutCellRound) {
        let q = w.cfg.timers.out_cell_period;
        set_timer(w, ctx, id, next_slot(now, q, q / 2), TimerKind::OutCellRound);
    }
    let mut to = w.group_managers(group, &[id]);
    to.extend(neighbours.values().copied());
    to.push(NodeId::BASE_STATION);
    send(w, ctx, id, to, Payload::NewManagerAnnounce { manager: id }, Scope::Inter);
    ctx.actions.push(Action::Recovered { node: id, cause });
}

pub(super) fn on_new_manager(w: &mut World, ctx: &mut Ctx, id: NodeId, env: &Envelope, manager: NodeId) {
    if id.is_base_station() {
        if env.scope == Scope::Inter {
            let l = &mut w.bs_ledger;
            l.gms.insert(env.group_id, manager);
            l.heard.insert(env.group_id);
            l.pending.remove(&env.group_id);
            if l.backups.get(&env.group_id) == Some(&manager) {
                l.backups.remove(&env.group_id);
            }
        }
        return;
    }
    let n = w.node(id);
    match env.scope {
        Scope::Cell => {
            if n.role == Role::GroupManager && env.cell_id != n.cell_id {
                let group = n.group_id;
                w.group_ledger_mut(group).cms.insert(env.cell_id, Some(manager));
                return;
            }
            let m = w.node_mut(id);
            m.peers.cell_manager = Some(manager);
            m.cancel_timer(TimerKind::AwaitCellManager);
            m.cell_election = None;
            m.merge_requested = false;
        }
        Scope::Inter => {
            if n.role == Role::GroupManager && n.group_id != env.group_id {
                w.node_mut(id).peers.neighbor_gms.insert(env.group_id, manager);
                return;
            }
            if n.group_id != env.group_id {
                return;
            }
            if n.role == Role::GroupManager && manager != id {
                let named = w.groups.get(n.group_id.index()).and_then(|g| g.group_manager_id);
                if named != Some(id) {
                    set_role(w, ctx, id, Role::CellManager, Cause::Replaced);
                }
            }
            let m = w.node_mut(id);
            m.peers.group_manager = Some(manager);
            if m.peers.backup == Some(manager) {
                m.peers.backup = None;
            }
            m.cancel_timer(TimerKind::AwaitGroupManager);
            m.gm_election = None;
        }
        Scope::Group => {}
    }
}

pub(super) fn on_promote_secondary(w: &mut World, ctx: &mut Ctx, id: NodeId, env: &Envelope, appointee: NodeId) {
    if id.is_base_station() {
        w.bs_ledger.backups.insert(env.group_id, appointee);
        return;
    }
    let role = w.node(id).role;
    match env.scope {
        Scope::Cell => {
            w.node_mut(id).peers.secondary = Some(appointee);
            if appointee == id && role == Role::CommonNode {
                set_role(w, ctx, id, Role::SecondaryCellManager, Cause::Appointed);
            } else if appointee != id && role == Role::SecondaryCellManager {
                set_role(w, ctx, id, Role::CommonNode, Cause::Replaced);
            }
        }
        Scope::Group => {
            w.node_mut(id).peers.backup = Some(appointee);
            if appointee == id && role == Role::CellManager {
                set_role(w, ctx, id, Role::BackupGroupNode, Cause::Appointed);
            } else if appointee != id && role == Role::BackupGroupNode {
                set_role(w, ctx, id, Role::CellManager, Cause::Replaced);
            }
        }
        Scope::Inter => {}
    }
}

pub(super) fn on_rate_directive(w: &mut World, id: NodeId, multiplier: u32) {
    if w.node(id).role.manages_cell() {
        let cell = w.node(id).cell_id;
        w.ledger_mut(cell).period_multiplier = multiplier.max(1);
    }
}

fn start_cell_election(w: &mut World, ctx: &mut Ctx, id: NodeId) {
    let n = w.node(id);
    if n.role.manages_cell() || n.merge_requested || n.cell_election.is_some() || !n.is_active() {
        return;
    }
    let energy = n.battery.residual();
    let cell = n.cell_id;
    let rank = w.rank(id);
    let m = w.node_mut(id);
    m.cell_election = Some(BTreeMap::from([(id, energy)]));
    m.cancel_timer(TimerKind::AwaitCellManager);
    let to = w.cell_others(cell, &[id]);
    send(w, ctx, id, to, Payload::EnergyShare { rank }, Scope::Cell);
    let at = ctx.now + w.cfg.timers.query_timeout;
    set_timer(w, ctx, id, at, TimerKind::ElectionClose);
}

fn start_gm_election(w: &mut World, ctx: &mut Ctx, id: NodeId) {
    let n = w.node(id);
    if !n.role.manages_cell() || n.role == Role::GroupManager || n.gm_election.is_some() {
        return;
    }
    let energy = n.battery.residual();
    let group = n.group_id;
    let rank = w.rank(id);
    let m = w.node_mut(id);
    m.gm_election = Some(BTreeMap::from([(id, energy)]));
    m.cancel_timer(TimerKind::AwaitGroupManager);
    let to = w.group_managers(group, &[id]);
    send(w, ctx, id, to, Payload::EnergyShare { rank }, Scope::Group);
    let at = ctx.now + w.cfg.timers.query_timeout;
    set_timer(w, ctx, id, at, TimerKind::GmElectionClose);
}

pub(super) fn on_await_cell_manager(w: &mut World, ctx: &mut Ctx, id: NodeId) {
    start_cell_election(w, ctx, id);
}

pub(super) fn on_await_group_manager(w: &mut World, ctx: &mut Ctx, id: NodeId) {
    start_gm_election(w, ctx, id);
}

pub(super) fn on_energy_share(w: &mut World, ctx: &mut Ctx, id: NodeId, env: &Envelope) {
    if id.is_base_station() {
        return;
    }
    match env.scope {
        Scope::Cell => {
            if w.node(id).role.manages_cell() {
                return;
            }
            start_cell_election(w, ctx, id);
            if let Some(shares) = w.node_mut(id).cell_election.as_mut() {
                shares.insert(env.sender, env.curr_energy);
            }
        }
        Scope::Group => {
            if w.node(id).role == Role::GroupManager {
                // Still alive: remind the group who is in charge.
                let group = w.node(id).group_id;
                let to = w.group_managers(group, &[id]);
                send(w, ctx, id, to, Payload::NewManagerAnnounce { manager: id }, Scope::Inter);
                return;
            }
            start_gm_election(w, ctx, id);
            if let Some(shares) = w.node_mut(id).gm_election.as_mut() {
                shares.insert(env.sender, env.curr_energy);
            }
        }
        Scope::Inter => {}
    }
}

pub(super) fn close_cell_election(w: &mut World, ctx: &mut Ctx, id: NodeId) {
    let Some(shares) = w.node_mut(id).cell_election.take() else { return };
    let initial = w.cfg.initial_energy;
    let Some(outcome) = cell_election_outcome(&shares, initial, &w.cfg.thresholds) else { return };
    let cell = w.node(id).cell_id;
    match outcome {
        ElectionOutcome::Winner(winner) if winner == id => {
            {
                let l = w.ledger_mut(cell);
                for (m, e) in &shares {
                    if *m != id {
                        l.expected.insert(*m);
                        l.known_energy.insert(*m, *e);
                    }
                }
            }
            promote(w, ctx, id, Cause::EnergyElection);
            let mut to = w.cell_others(cell, &[id]);
            if let Some(gm) = w.node(id).peers.group_manager {
                to.push(gm);
            }
            send(w, ctx, id, to, Payload::NewManagerAnnounce { manager: id }, Scope::Cell);
        }
        ElectionOutcome::Winner(winner) => {
            w.node_mut(id).peers.cell_manager = Some(winner);
            await_cell_manager(w, ctx, id);
        }
        ElectionOutcome::NoWinner { requester } => {
            w.node_mut(id).merge_requested = true;
            if requester == id {
                if let Some(gm) = w.node(id).peers.group_manager {
                    send(w, ctx, id, vec![gm], Payload::MergeRequest, Scope::Group);
                }
            }
        }
    }
}

pub(super) fn close_gm_election(w: &mut World, ctx: &mut Ctx, id: NodeId) {
    let Some(shares) = w.node_mut(id).gm_election.take() else { return };
    let group = w.node(id).group_id;
    let eligible = shares.iter().filter(|(_, e)| w.rank_of_energy(**e) != EnergyRank::Low).map(|(m, _)| *m);
    match rank_by_energy(eligible, &shares).first().copied() {
        Some(winner) if winner == id => backup_takeover(w, ctx, id, Cause::GmElection),
        Some(winner) => {
            w.node_mut(id).peers.group_manager = Some(winner);
            await_group_manager(w, ctx, id);
        }
        None => {
            if shares.keys().next() == Some(&id) {
                ctx.actions.push(Action::Escalated { group, cell: CellId::NONE, reason: "no group manager candidate" });
            }
        }
    }
}

/// Redirects every surviving member of `source` to a healthy cell of the
/// group, then retires `source`. Escalates if any member has nowhere to go.
pub(super) fn merge_cells(w: &mut World, ctx: &mut Ctx, gm: NodeId, source: CellId) {
    let group = w.node(gm).group_id;
    if source == w.node(gm).cell_id || w.grid.record(source).is_none_or(|r| r.retired) {
        return;
    }
    let ledger = w.cells.get(&source).cloned();
    let declared = ledger.as_ref().map(|l| l.declared.clone()).unwrap_or_default();
    let sleeping = ledger.as_ref().map(|l| l.sleeping.clone()).unwrap_or_default();
    let survivors: Vec<NodeId> = w.cell_others(source, &[]).into_iter().filter(|m| !declared.contains(m)).collect();
    let group_cells: Vec<CellId> = w
        .groups
        .get(group.index())
        .map(|g| g.cell_ids.iter().copied().collect())
        .unwrap_or_default();
    let health = w.group_ledgers.get(&group).map(|g| g.health.clone()).unwrap_or_default();
    let mut plan = Vec::new();
    for s in &survivors {
        match merge_targets(&w.grid, &group_cells, &health, source, &w.node(*s).position) {
            Some(t) => plan.push((*s, t)),
            None => {
                ctx.actions.push(Action::Escalated { group, cell: source, reason: "no viable merge target" });
                return;
            }
        }
    }
    for (s, target) in plan {
        if sleeping.contains(&s) {
            w.move_node(s, target);
            w.ledger_mut(target).sleeping.insert(s);
        } else {
            let payload = Payload::MergeDirective { target_cell: target };
            send_addressed(w, ctx, gm, vec![s], payload, Scope::Group, None, Some(source));
        }
    }
    if let Some(r) = w.grid.record_mut(source) {
        r.retired = true;
        r.manager_id = None;
        r.secondary_id = None;
    }
    let gl = w.group_ledger_mut(group);
    gl.cms.remove(&source);
    gl.health.remove(&source);
    gl.missed.remove(&source);
    gl.directed.remove(&source);
}

pub(super) fn on_merge_directive(w: &mut World, ctx: &mut Ctx, id: NodeId, target: CellId) {
    let role = w.node(id).role;
    if matches!(role, Role::CellManager | Role::BackupGroupNode | Role::SecondaryCellManager) {
        set_role(w, ctx, id, Role::CommonNode, Cause::Merged);
    }
    w.move_node(id, target);
    let rec = w.grid.record(target).cloned();
    let energy = w.node(id).battery.residual();
    let l = w.ledger_mut(target);
    l.expected.insert(id);
    l.known_energy.insert(id, energy);
    let n = w.node_mut(id);
    n.peers.cell_manager = rec.as_ref().and_then(|r| r.manager_id);
    n.peers.secondary = rec.as_ref().and_then(|r| r.secondary_id);
    n.cancel_timer(TimerKind::AwaitCellManager);
    n.cell_election = None;
    n.merge_requested = false;
    ctx.actions.push(Action::Recovered { node: id, cause: Cause::Merged });
}
