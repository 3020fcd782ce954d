//! Routes timer firings and filtered messages to the role handlers.

use crate::ids::NodeId;
use crate::messaging::{Envelope, Payload};

use super::detection::{
    bs_query_deadline, bs_watch, collect_deadline, in_cell_round, on_ack, on_get, on_health_report, on_reminder,
    on_sleep_notice, on_status_query, on_update, out_cell_report, out_cell_round, query_deadline,
};
use super::recovery::{
    close_cell_election, close_gm_election, merge_cells, on_await_cell_manager, on_await_group_manager,
    on_backup_activate, on_declare_faulty, on_energy_share, on_low_energy_notice, on_merge_directive,
    on_new_manager, on_promote_secondary, on_rate_directive,
};
use super::{set_role, Cause, Ctx, Role, TimerKind, World};

/// Handles a timer at an active node. Timers that no longer fit the node's
/// role are ignored.
pub fn on_timer(w: &mut World, ctx: &mut Ctx, id: NodeId, kind: TimerKind) {
    let role = w.node(id).role;
    match kind {
        TimerKind::EnergyCheck => {}
        TimerKind::InCellRound if role.manages_cell() => in_cell_round(w, ctx, id),
        TimerKind::CollectDeadline if role.manages_cell() => collect_deadline(w, ctx, id),
        TimerKind::QueryDeadline(m) if role.manages_cell() => query_deadline(w, ctx, id, m),
        TimerKind::OutCellReport if role.manages_cell() => out_cell_report(w, ctx, id),
        TimerKind::OutCellRound if role == Role::GroupManager => out_cell_round(w, ctx, id),
        TimerKind::BsWatch if role == Role::BaseStation => bs_watch(w, ctx),
        TimerKind::BsQueryDeadline(g) if role == Role::BaseStation => bs_query_deadline(w, ctx, g),
        TimerKind::ElectionClose => close_cell_election(w, ctx, id),
        TimerKind::GmElectionClose => close_gm_election(w, ctx, id),
        TimerKind::AwaitCellManager => on_await_cell_manager(w, ctx, id),
        TimerKind::AwaitGroupManager => on_await_group_manager(w, ctx, id),
        _ => {}
    }
}

/// Handles a message that passed the filter at an active node.
pub fn on_message(w: &mut World, ctx: &mut Ctx, id: NodeId, env: &Envelope) {
    w.node_mut(id).last_heard.insert(env.sender, ctx.now);
    match env.payload {
        Payload::Get => on_get(w, ctx, id, env),
        Payload::Update { .. } => {
            let cell = w.node(id).cell_id;
            if w.node(id).role.manages_cell() && w.grid.record(cell).and_then(|r| r.manager_id) != Some(id) {
                set_role(w, ctx, id, Role::CommonNode, Cause::Replaced);
                return;
            }
            on_update(w, id, env)
        }
        Payload::StatusQuery => on_status_query(w, ctx, id, env),
        Payload::Ack => on_ack(w, id, env),
        Payload::SleepNotice => on_sleep_notice(w, id, env),
        Payload::LowEnergyNotice { successor } => on_low_energy_notice(w, ctx, id, env, successor),
        Payload::PromoteSecondary { appointee } => on_promote_secondary(w, ctx, id, env, appointee),
        Payload::DeclareFaulty { subject } => on_declare_faulty(w, ctx, id, env, subject),
        Payload::HealthReport { status } => on_health_report(w, id, env, status),
        Payload::Reminder => on_reminder(w, ctx, id, env),
        Payload::EnergyShare { .. } => on_energy_share(w, ctx, id, env),
        Payload::NewManagerAnnounce { manager } => on_new_manager(w, ctx, id, env, manager),
        Payload::MergeRequest => {
            if w.node(id).role == Role::GroupManager {
                merge_cells(w, ctx, id, env.cell_id);
            }
        }
        Payload::MergeDirective { target_cell } => {
            if !id.is_base_station() {
                on_merge_directive(w, ctx, id, target_cell)
            }
        }
        Payload::RateDirective { period_multiplier } => on_rate_directive(w, id, period_multiplier),
        Payload::BackupActivate => {
            if !id.is_base_station() {
                on_backup_activate(w, ctx, id)
            }
        }
    }
}
