//! Deterministic discrete-event loop.
//!
//! Events are ordered by `(tick, phase, seq)`: fault injections first, then
//! deliveries, then timers, so a reply that arrives exactly at a deadline
//! still counts. One ChaCha stream per run drives target selection and loss.

mod metrics;
mod trace;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{
    aso_recover, chain, lbc_recover, venk_detect, venk_recover_head, venk_recover_member, BaselineKind, ClusterTree,
    GatewayCluster, HeaderSet, Rounds,
};
use crate::config::{Algorithm, DeliveryModel, SimConfig};
use crate::energy::{rx_cost, tx_cost_sq, EnergyRank};
use crate::error::{invalid, Error, Result};
use crate::ids::{CellId, GroupId, NodeId, Tick};
use crate::messaging::{filter_message, Envelope, FilterDecision, Payload, Scope};
use crate::protocol::{self, Action, Cause, Ctx, NodeStatus, Role, TimerKind, World};
use crate::topology::Position;

pub use metrics::RunMetrics;
pub use trace::{
    Detection, Escalation, Receiver, RecoveryRecord, RoleChange, TraceEvent, TraceKind, TraceRecord, ROLE_HEADER,
    TRACE_HEADER,
};

use metrics::{is_activity, Accumulator};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FaultKind {
    /// Permanent fault: the node stops without a farewell.
    SuddenDeath,
    /// Potential fault: residual energy drops to a fraction of the initial charge.
    EnergyDrain { to_fraction: f64 },
}

/// Fault target, either a fixed node or a role drawn at injection time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaultTarget {
    Node(NodeId),
    CommonNode,
    /// A plain cell manager (not the group manager or its backup).
    CellManager,
    /// A plain cell manager whose secondary is active and not Low.
    CellManagerWithSecondary,
    GroupManager,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub at: Tick,
    pub target: FaultTarget,
}

impl FaultSpec {
    pub fn validate(&self) -> Result<()> {
        if let FaultKind::EnergyDrain { to_fraction } = self.kind {
            if !(0.0..=1.0).contains(&to_fraction) {
                return Err(invalid("drain fraction must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InjectedFault {
    pub at: Tick,
    pub spec: FaultSpec,
    /// `None` when no node matched the selector.
    pub node: Option<NodeId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Delivery {
    At(Tick),
    Lost,
}

/// Loss draw and arrival time for one receiver. No randomness is consumed when loss is 0.
pub fn deliver<R: Rng + ?Sized>(model: &DeliveryModel, now: Tick, rng: &mut R) -> Delivery {
    if model.loss_probability > 0.0 && rng.gen_bool(model.loss_probability) {
        Delivery::Lost
    } else {
        Delivery::At(now + model.latency)
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trace: Vec<TraceRecord>,
    pub roles: Vec<RoleChange>,
    pub detections: Vec<Detection>,
    pub recoveries: Vec<RecoveryRecord>,
    pub escalations: Vec<Escalation>,
    pub injected: Vec<InjectedFault>,
    pub metrics: RunMetrics,
    pub world: World,
    pub end_tick: Tick,
}

impl RunOutcome {
    pub fn trace_lines(&self) -> impl Iterator<Item = String> + '_ {
        self.trace.iter().map(|r| format!("{r}"))
    }

    pub fn role_lines(&self) -> impl Iterator<Item = String> + '_ {
        self.roles.iter().map(|r| format!("{r}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Packet {
    Protocol(Envelope),
    Baseline { kind: BaselineKind, group: GroupId, cell: CellId, energy: f64 },
}

impl Packet {
    fn kind(&self) -> TraceKind {
        match self {
            Packet::Protocol(e) => TraceKind::Protocol(e.kind()),
            Packet::Baseline { kind, .. } => TraceKind::Baseline(*kind),
        }
    }

    fn meta(&self) -> (GroupId, CellId, f64) {
        match self {
            Packet::Protocol(e) => (e.group_id, e.cell_id, e.curr_energy),
            Packet::Baseline { group, cell, energy, .. } => (*group, *cell, *energy),
        }
    }
}

#[derive(Clone, Debug)]
enum Event {
    Inject(usize),
    Deliver { to: NodeId, from: NodeId, packet: Packet },
    Timer { node: NodeId, kind: TimerKind, at: Tick },
    PlanStep { plan: usize, round: usize },
    PlanDone { plan: usize },
}

impl Event {
    fn phase(&self) -> u8 {
        match self {
            Event::Inject(_) => 0,
            Event::Deliver { .. } => 1,
            _ => 2,
        }
    }
}

struct Plan {
    rounds: Rounds,
    failing: NodeId,
    new_head: Option<NodeId>,
}

struct Engine {
    w: World,
    queue: BTreeMap<(Tick, u8, u64), Event>,
    seq: u64,
    now: Tick,
    rng: ChaCha8Rng,
    faults: Vec<FaultSpec>,
    pending_injects: usize,
    plans: Vec<Plan>,
    active_plans: usize,
    trace: Vec<TraceRecord>,
    roles: Vec<RoleChange>,
    detections: Vec<Detection>,
    recoveries: Vec<RecoveryRecord>,
    escalations: Vec<Escalation>,
    injected: Vec<InjectedFault>,
    acc: Accumulator,
    /// Nodes the network has declared faulty; they no longer count as role holders.
    declared: BTreeSet<NodeId>,
    last_activity: Tick,
    /// Nodes whose battery ran out while handling the current event.
    exhausted_now: BTreeSet<NodeId>,
    last_idle: Vec<Tick>,
    first_fault: Option<Tick>,
    first_detection: Option<Tick>,
}

/// Runs one simulation. Node ids in `deployment` must be `0..n`.
pub fn run(cfg: &SimConfig, deployment: &[(NodeId, Position)], faults: &[FaultSpec], seed: u64) -> Result<RunOutcome> {
    for f in faults {
        f.validate()?;
    }
    let world = World::bootstrap(cfg, deployment)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let n = world.nodes.len();
    let mut e = Engine {
        w: world,
        queue: BTreeMap::new(),
        seq: 0,
        now: 0,
        rng,
        faults: faults.to_vec(),
        pending_injects: faults.len(),
        plans: Vec::new(),
        active_plans: 0,
        trace: Vec::new(),
        roles: Vec::new(),
        detections: Vec::new(),
        recoveries: Vec::new(),
        escalations: Vec::new(),
        injected: Vec::new(),
        acc: Accumulator::default(),
        declared: BTreeSet::new(),
        last_activity: 0,
        exhausted_now: BTreeSet::new(),
        last_idle: alloc::vec![0; n],
        first_fault: None,
        first_detection: None,
    };
    e.bootstrap();
    e.check_invariants()?;
    e.main_loop()?;
    let total: f64 = e.w.nodes.iter().map(|n| n.charged).sum();
    let metrics = core::mem::take(&mut e.acc).finish(total, e.first_fault, e.first_detection);
    Ok(RunOutcome {
        trace: e.trace,
        roles: e.roles,
        detections: e.detections,
        recoveries: e.recoveries,
        escalations: e.escalations,
        injected: e.injected,
        metrics,
        world: e.w,
        end_tick: e.now,
    })
}

impl Engine {
    fn cellular(&self) -> bool {
        self.w.cfg.algorithm == Algorithm::Cellular
    }

    fn push(&mut self, at: Tick, ev: Event) {
        let key = (at, ev.phase(), self.seq);
        self.seq += 1;
        self.queue.insert(key, ev);
    }

    fn set_timer(&mut self, node: NodeId, at: Tick, kind: TimerKind) {
        self.w.node_mut(node).timers.insert((at, kind));
        self.push(at, Event::Timer { node, kind, at });
    }

    fn bootstrap(&mut self) {
        for (node, role, cause) in self.w.bootstrap_roles() {
            self.roles.push(RoleChange { tick: 0, node, old: None, new: role, cause });
        }
        self.roles.push(RoleChange {
            tick: 0,
            node: NodeId::BASE_STATION,
            old: None,
            new: Role::BaseStation,
            cause: Cause::Bootstrap,
        });
        let t = self.w.cfg.timers;
        if self.cellular() {
            let ids: Vec<(NodeId, Role)> = self.w.nodes.iter().map(|n| (n.id, n.role)).collect();
            for (id, role) in ids {
                if role.manages_cell() {
                    self.set_timer(id, t.in_cell_period, TimerKind::InCellRound);
                    self.set_timer(id, t.out_cell_period, TimerKind::OutCellReport);
                }
                if role == Role::GroupManager {
                    self.set_timer(id, t.out_cell_period + t.out_cell_period / 2, TimerKind::OutCellRound);
                }
            }
            self.set_timer(NodeId::BASE_STATION, t.out_cell_period + t.out_cell_period / 2, TimerKind::BsWatch);
        }
        if self.w.cfg.idle_drain > 0.0 {
            for i in 0..self.w.nodes.len() {
                self.set_timer(NodeId(i as u32), t.energy_check_period, TimerKind::EnergyCheck);
            }
        }
        for i in 0..self.faults.len() {
            let at = self.faults[i].at;
            self.push(at, Event::Inject(i));
        }
    }

    fn main_loop(&mut self) -> Result<()> {
        let quiet = self.w.cfg.quiescence_periods * self.w.cfg.timers.out_cell_period;
        while let Some((&key, _)) = self.queue.first_key_value() {
            let tick = key.0;
            if tick > self.w.cfg.max_ticks {
                break;
            }
            if self.pending_injects == 0 && self.active_plans == 0 && tick >= self.last_activity + quiet {
                break;
            }
            let ev = self.queue.remove(&key).expect("key just observed");
            self.now = tick;
            self.exhausted_now.clear();
            self.process(ev)?;
            self.check_invariants()?;
        }
        Ok(())
    }

    fn process(&mut self, ev: Event) -> Result<()> {
        match ev {
            Event::Inject(i) => self.inject(i),
            Event::Deliver { to, from, packet } => self.handle_deliver(to, from, packet),
            Event::Timer { node, kind, at } => self.handle_timer(node, kind, at),
            Event::PlanStep { plan, round } => self.plan_step(plan, round),
            Event::PlanDone { plan } => {
                self.plan_done(plan);
                Ok(())
            }
        }
    }

    fn violation(&self, detail: String) -> Error {
        Error::InvariantViolation { tick: self.now, detail }
    }

    /// Saturating discharge; returns the energy actually removed.
    fn charge(&mut self, id: NodeId, amount: f64) -> f64 {
        if id.is_base_station() || amount <= 0.0 {
            return 0.0;
        }
        let n = self.w.node_mut(id);
        let before = n.battery.residual();
        n.battery = n.battery.drain(amount);
        let actual = before - n.battery.residual();
        n.charged += actual;
        if n.battery.is_depleted() && n.status != NodeStatus::Dead {
            self.exhausted_now.insert(id);
            self.kill(id);
        }
        actual
    }

    fn kill(&mut self, id: NodeId) {
        let n = self.w.node_mut(id);
        n.status = NodeStatus::Dead;
        n.timers.clear();
        n.cell_election = None;
        n.gm_election = None;
        self.last_activity = self.now;
    }

    /// Schedules a self-check once a node's energy has fallen to Low.
    fn after_charge(&mut self, id: NodeId) {
        if id.is_base_station() || !self.cellular() {
            return;
        }
        let n = self.w.node(id);
        if !n.is_active() || n.low_energy_handled || n.has_timer(TimerKind::EnergyCheck) {
            return;
        }
        if self.w.rank(id) == EnergyRank::Low {
            let at = self.now + self.w.cfg.timers.energy_check_period;
            self.set_timer(id, at, TimerKind::EnergyCheck);
        }
    }

    fn idle(&mut self, id: NodeId) {
        if id.is_base_station() || self.w.cfg.idle_drain <= 0.0 {
            return;
        }
        let i = id.index();
        let dt = self.now - self.last_idle[i];
        self.last_idle[i] = self.now;
        if dt > 0 {
            let amount = self.w.cfg.idle_drain * dt as f64;
            self.charge(id, amount);
            self.after_charge(id);
        }
    }

    fn record(&mut self, event: TraceEvent, sender: NodeId, receiver: Receiver, packet: &Packet) {
        let (group, cell, energy) = packet.meta();
        self.trace.push(TraceRecord { tick: self.now, event, sender, receiver, kind: packet.kind(), group, cell, energy });
    }

    /// One radio transmission; the amplifier term uses the farthest receiver.
    fn transmit(&mut self, from: NodeId, to: &[NodeId], packet: Packet) -> Result<()> {
        let sender = self.w.node(from);
        // Envelopes are stamped only by active nodes, so a protocol send may
        // be applied just after its sender went to sleep. A node whose battery
        // ran out earlier in this event simply cannot transmit any more.
        let stamped = matches!(packet, Packet::Protocol(_)) && sender.status == NodeStatus::Sleeping;
        if sender.status == NodeStatus::Dead && self.exhausted_now.contains(&from) {
            return Ok(());
        }
        if !sender.is_active() && !stamped {
            return Err(self.violation(format!("node {from} sent while {:?}", sender.status)));
        }
        let origin = sender.position;
        let d2 = to.iter().map(|t| self.w.node(*t).position.dist_sq(&origin)).fold(0.0, f64::max);
        let radio = self.w.cfg.radio;
        let tx = tx_cost_sq(&radio, radio.message_bits, d2)?;
        let receiver = if to.len() == 1 { Receiver::Node(to[0]) } else { Receiver::Many };
        self.record(TraceEvent::Send, from, receiver, &packet);
        let spent = self.charge(from, tx);
        let kind = packet.kind();
        self.acc.on_send(self.now, kind, spent);
        if is_activity(kind.class()) {
            self.last_activity = self.now;
        }
        if kind.class().is_recovery() && self.first_fault.is_some() && self.first_detection.is_none() {
            self.first_detection = Some(self.now);
        }
        let model = self.w.cfg.delivery;
        for t in to {
            match deliver(&model, self.now, &mut self.rng) {
                Delivery::At(at) => self.push(at, Event::Deliver { to: *t, from, packet }),
                Delivery::Lost => self.record(TraceEvent::Drop("loss"), from, Receiver::Node(*t), &packet),
            }
        }
        self.after_charge(from);
        Ok(())
    }

    fn handle_timer(&mut self, node: NodeId, kind: TimerKind, at: Tick) -> Result<()> {
        if !self.w.node_mut(node).timers.remove(&(at, kind)) || !self.w.node(node).is_active() {
            return Ok(());
        }
        self.idle(node);
        let mut ctx = Ctx::new(self.now);
        if self.cellular() && !node.is_base_station() {
            protocol::self_check(&mut self.w, &mut ctx, node);
        }
        if self.w.node(node).is_active() {
            if kind == TimerKind::EnergyCheck && self.w.cfg.idle_drain > 0.0 {
                let next = self.now + self.w.cfg.timers.energy_check_period;
                self.set_timer(node, next, TimerKind::EnergyCheck);
            }
            if self.cellular() {
                protocol::on_timer(&mut self.w, &mut ctx, node, kind);
            }
        }
        self.apply(ctx.actions)
    }

    fn handle_deliver(&mut self, to: NodeId, from: NodeId, packet: Packet) -> Result<()> {
        match self.w.node(to).status {
            NodeStatus::Dead => {
                self.record(TraceEvent::Drop("dead"), from, Receiver::Node(to), &packet);
                return Ok(());
            }
            NodeStatus::Sleeping => {
                self.record(TraceEvent::Drop("sleeping"), from, Receiver::Node(to), &packet);
                return Ok(());
            }
            NodeStatus::Active => {}
        }
        self.idle(to);
        let mut ctx = Ctx::new(self.now);
        let env = match packet {
            Packet::Protocol(env) => env,
            Packet::Baseline { .. } => {
                let rx = rx_cost(&self.w.cfg.radio, self.w.cfg.radio.message_bits);
                let spent = self.charge(to, rx);
                self.acc.on_receive(packet.kind(), spent);
                self.record(TraceEvent::Deliver, from, Receiver::Node(to), &packet);
                return Ok(());
            }
        };
        if self.cellular() && !to.is_base_station() {
            protocol::self_check(&mut self.w, &mut ctx, to);
            if !self.w.node(to).is_active() {
                self.record(TraceEvent::Drop("sleeping"), from, Receiver::Node(to), &packet);
                return self.apply(ctx.actions);
            }
        }
        let rx = rx_cost(&self.w.cfg.radio, self.w.cfg.radio.message_bits);
        let spent = self.charge(to, rx);
        self.acc.on_receive(packet.kind(), spent);
        if !self.w.node(to).is_active() {
            self.record(TraceEvent::Drop("dead"), from, Receiver::Node(to), &packet);
            return self.apply(ctx.actions);
        }
        let decision = {
            let w = &mut self.w;
            let seen = if to.is_base_station() { &mut w.bs_seen } else { &mut w.seen[to.index()] };
            let node = if to.is_base_station() { &w.bs } else { &w.nodes[to.index()] };
            filter_message(node, seen, &env)
        };
        if let Some(reason) = decision.drop_reason() {
            let reason = reason.strip_prefix("drop-").unwrap_or(reason);
            self.record(TraceEvent::Drop(reason), from, Receiver::Node(to), &packet);
            self.after_charge(to);
            return self.apply(ctx.actions);
        }
        debug_assert_eq!(decision, FilterDecision::Process);
        self.record(TraceEvent::Deliver, from, Receiver::Node(to), &packet);
        if self.cellular() {
            protocol::on_message(&mut self.w, &mut ctx, to, &env);
        }
        self.apply(ctx.actions)?;
        self.after_charge(to);
        self.flood(to, env)
    }

    /// Optional one-hop re-broadcast of declarations and announcements inside the cell.
    fn flood(&mut self, at: NodeId, env: Envelope) -> Result<()> {
        if !self.w.cfg.flood || at.is_base_station() || env.scope != Scope::Cell || !self.w.node(at).is_active() {
            return Ok(());
        }
        if !matches!(env.payload, Payload::DeclareFaulty { .. } | Payload::NewManagerAnnounce { .. }) {
            return Ok(());
        }
        let me = self.w.node(at);
        if me.cell_id != env.cell_id {
            return Ok(());
        }
        let r2 = self.w.cfg.radio_range * self.w.cfg.radio_range;
        let to: Vec<NodeId> = self
            .w
            .cell_others(me.cell_id, &[at, env.sender])
            .into_iter()
            .filter(|n| self.w.node(*n).position.dist_sq(&me.position) <= r2)
            .collect();
        if to.is_empty() {
            return Ok(());
        }
        self.transmit(at, &to, Packet::Protocol(env))
    }

    fn apply(&mut self, actions: Vec<Action>) -> Result<()> {
        for a in actions {
            match a {
                Action::Send { from, to, envelope } => self.transmit(from, &to, Packet::Protocol(envelope))?,
                Action::SetTimer { node, at, kind } => self.push(at, Event::Timer { node, kind, at }),
                Action::RoleChanged { node, old, new, cause } => {
                    self.roles.push(RoleChange { tick: self.now, node, old: Some(old), new, cause });
                    if !matches!(cause, Cause::Appointed | Cause::Replaced) {
                        self.last_activity = self.now;
                    }
                }
                Action::Declared { subject, by } => {
                    self.detections.push(Detection { tick: self.now, subject, by });
                    self.declared.insert(subject);
                    if self.first_fault.is_some() && self.first_detection.is_none() {
                        self.first_detection = Some(self.now);
                    }
                    self.last_activity = self.now;
                }
                Action::Slept { .. } => self.last_activity = self.now,
                Action::Woke { node } => {
                    self.last_idle[node.index()] = self.now;
                    self.last_activity = self.now;
                }
                Action::Recovered { node, cause } => {
                    self.recoveries.push(RecoveryRecord { tick: self.now, node, cause });
                    self.acc.on_recovered(self.now);
                    self.last_activity = self.now;
                }
                Action::Escalated { group, cell, reason } => {
                    self.escalations.push(Escalation { tick: self.now, group, cell, reason });
                    self.last_activity = self.now;
                }
                Action::Fault { node, detail } => return Err(self.violation(format!("node {node}: {detail}"))),
            }
        }
        Ok(())
    }

    fn resolve(&mut self, target: FaultTarget) -> Option<NodeId> {
        let w = &self.w;
        let active = |r: Role| {
            w.nodes
                .iter()
                .filter(move |n| n.is_active() && n.role == r)
                .map(|n| n.id)
                .collect::<Vec<_>>()
        };
        let candidates = match target {
            FaultTarget::Node(id) => return w.contains(id).then_some(id),
            FaultTarget::CommonNode => active(Role::CommonNode),
            FaultTarget::CellManager => active(Role::CellManager),
            FaultTarget::GroupManager => active(Role::GroupManager),
            FaultTarget::CellManagerWithSecondary => active(Role::CellManager)
                .into_iter()
                .filter(|id| {
                    let cell = w.node(*id).cell_id;
                    w.grid.record(cell).and_then(|r| r.secondary_id).is_some_and(|s| {
                        let sn = w.node(s);
                        sn.is_active() && sn.role == Role::SecondaryCellManager && w.rank(s) != EnergyRank::Low
                    })
                })
                .collect(),
        };
        if candidates.is_empty() {
            return None;
        }
        let i = self.rng.gen_range(0..candidates.len());
        Some(candidates[i])
    }

    fn inject(&mut self, i: usize) -> Result<()> {
        self.pending_injects -= 1;
        let spec = self.faults[i];
        let node = self.resolve(spec.target);
        self.injected.push(InjectedFault { at: self.now, spec, node });
        self.first_fault.get_or_insert(self.now);
        self.last_activity = self.now;
        let Some(id) = node else { return Ok(()) };
        if id.is_base_station() || self.w.node(id).status == NodeStatus::Dead {
            return Ok(());
        }
        let period = self.w.cfg.timers.energy_check_period;
        match spec.kind {
            FaultKind::SuddenDeath => {
                self.kill(id);
                if !self.cellular() {
                    self.schedule_plan(id, self.now);
                }
            }
            FaultKind::EnergyDrain { to_fraction } => {
                let n = self.w.node(id);
                let target = to_fraction * n.battery.initial();
                let excess = n.battery.residual() - target;
                if excess > 0.0 {
                    self.charge(id, excess);
                }
                self.after_charge(id);
                if !self.cellular() && self.w.node(id).is_active() && self.w.rank(id) == EnergyRank::Low {
                    self.schedule_plan(id, self.now + period);
                }
            }
        }
        Ok(())
    }

    fn schedule_plan(&mut self, failing: NodeId, start: Tick) {
        if self.plans.iter().any(|p| p.failing == failing) {
            return;
        }
        let Some((rounds, new_head)) = self.baseline_rounds(failing) else { return };
        if rounds.is_empty() {
            return;
        }
        self.plans.push(Plan { rounds, failing, new_head });
        self.active_plans += 1;
        let plan = self.plans.len() - 1;
        self.push(start, Event::PlanStep { plan, round: 0 });
    }

    /// Message rounds of the configured baseline for a failure of `failing`.
    fn baseline_rounds(&self, failing: NodeId) -> Option<(Rounds, Option<NodeId>)> {
        let w = &self.w;
        let cell = w.node(failing).cell_id;
        let rec = w.grid.record(cell)?;
        let head = rec.manager_id?;
        let alive: BTreeSet<NodeId> = w.nodes.iter().filter(|n| n.status != NodeStatus::Dead).map(|n| n.id).collect();
        let members: Vec<(NodeId, Position)> = rec
            .member_ids
            .iter()
            .filter(|m| alive.contains(m) || **m == failing)
            .map(|m| (*m, w.node(*m).position))
            .collect();
        let positions: BTreeMap<NodeId, Position> = w.nodes.iter().map(|n| (n.id, n.position)).collect();
        let other_heads: Vec<NodeId> = w
            .grid
            .cells
            .values()
            .filter(|r| r.cell_id != cell)
            .filter_map(|r| r.manager_id)
            .filter(|m| alive.contains(m))
            .collect();
        let failing_alive = alive.contains(&failing);
        match w.cfg.algorithm {
            Algorithm::Cellular => None,
            Algorithm::Venkataraman => {
                let tree = ClusterTree::build(head, &members, w.cfg.radio_range).ok()?;
                let detect = if failing_alive { venk_detect(&tree, failing) } else { Vec::new() };
                let rec = if failing == head {
                    let energies: BTreeMap<NodeId, f64> =
                        members.iter().map(|(m, _)| (*m, w.node(*m).battery.residual())).collect();
                    let healthy: BTreeSet<NodeId> = members
                        .iter()
                        .map(|(m, _)| *m)
                        .filter(|m| *m != failing && alive.contains(m) && w.rank(*m) != EnergyRank::Low)
                        .collect();
                    venk_recover_head(&tree, &energies, &healthy)
                } else {
                    venk_recover_member(&tree, failing, &positions, w.cfg.radio_range, &alive).ok()?
                };
                let new_head = if failing == head { rec.tree.map(|t| t.head) } else { None };
                Some((chain(detect, rec.rounds), new_head))
            }
            Algorithm::Lbc => {
                if failing != head {
                    return Some((Vec::new(), None));
                }
                let cluster = GatewayCluster { gateway: head, members: members.iter().map(|(m, _)| *m).collect() };
                let others: Vec<GatewayCluster> = other_heads
                    .iter()
                    .map(|g| GatewayCluster { gateway: *g, members: BTreeSet::new() })
                    .collect();
                Some((lbc_recover(&cluster, &others, &positions).rounds, None))
            }
            Algorithm::Aso => {
                if failing != head {
                    return Some((Vec::new(), None));
                }
                let mut headers: BTreeSet<NodeId> = other_heads.iter().copied().collect();
                headers.insert(head);
                let assignment = members.iter().map(|(m, _)| (*m, head)).collect();
                Some((aso_recover(&HeaderSet { headers, assignment }, head, &positions).rounds, None))
            }
        }
    }

    fn plan_step(&mut self, plan: usize, round: usize) -> Result<()> {
        let msgs = self.plans[plan].rounds[round].clone();
        for m in msgs {
            let n = self.w.node(m.from);
            if !n.is_active() {
                continue;
            }
            let packet = Packet::Baseline { kind: m.kind, group: n.group_id, cell: n.cell_id, energy: n.battery.residual() };
            self.transmit(m.from, &m.to, packet)?;
        }
        let next = self.now + self.w.cfg.delivery.latency;
        if round + 1 < self.plans[plan].rounds.len() {
            self.push(next, Event::PlanStep { plan, round: round + 1 });
        } else {
            self.push(next, Event::PlanDone { plan });
        }
        Ok(())
    }

    fn plan_done(&mut self, plan: usize) {
        self.active_plans -= 1;
        let failing = self.plans[plan].failing;
        let new_head = self.plans[plan].new_head;
        let cell = self.w.node(failing).cell_id;
        if self.w.node(failing).is_active() {
            self.w.node_mut(failing).status = NodeStatus::Sleeping;
        }
        let old = self.w.node(failing).role;
        let still_named = self.w.grid.record(cell).and_then(|r| r.manager_id) == Some(failing);
        let new_head = new_head.filter(|_| still_named);
        if old.manages_cell() {
            self.w.node_mut(failing).role = Role::CommonNode;
            self.roles.push(RoleChange { tick: self.now, node: failing, old: Some(old), new: Role::CommonNode, cause: Cause::BaselineRecovery });
            if let Some(r) = self.w.grid.record_mut(cell) {
                r.manager_id = None;
            }
        }
        if let Some(h) = new_head.filter(|h| self.w.node(*h).is_active()) {
            let old = self.w.node(h).role;
            self.w.node_mut(h).role = Role::CellManager;
            self.roles.push(RoleChange { tick: self.now, node: h, old: Some(old), new: Role::CellManager, cause: Cause::BaselineRecovery });
            if let Some(r) = self.w.grid.record_mut(cell) {
                r.manager_id = Some(h);
                if r.secondary_id == Some(h) {
                    r.secondary_id = None;
                }
            }
        }
        self.recoveries.push(RecoveryRecord { tick: self.now, node: failing, cause: Cause::BaselineRecovery });
        self.acc.on_recovered(self.now);
        self.last_activity = self.now;
    }

    /// Battery bounds, energy conservation and role uniqueness among live, undeclared nodes.
    ///
    /// Under message loss a manager may miss the news that it was replaced; it
    /// steps down on its next contact with the new one. Such superseded holders
    /// (no longer named in the shared records) are exempt while loss is enabled.
    fn check_invariants(&self) -> Result<()> {
        let lossy = self.w.cfg.delivery.loss_probability > 0.0;
        let mut cell_managers: BTreeMap<CellId, NodeId> = BTreeMap::new();
        let mut group_managers: BTreeMap<GroupId, NodeId> = BTreeMap::new();
        for n in &self.w.nodes {
            let b = n.battery;
            if !(0.0..=b.initial()).contains(&b.residual()) {
                return Err(self.violation(format!("node {} battery out of bounds", n.id)));
            }
            let drained = b.initial() - b.residual();
            if (n.charged - drained).abs() > 1e-9 {
                return Err(self.violation(format!(
                    "node {} charged {} but drained {}",
                    n.id, n.charged, drained
                )));
            }
            if n.status == NodeStatus::Dead || self.declared.contains(&n.id) {
                continue;
            }
            let named_cm = self.w.grid.record(n.cell_id).and_then(|r| r.manager_id) == Some(n.id);
            let named_gm = self.w.groups.get(n.group_id.index()).and_then(|g| g.group_manager_id) == Some(n.id);
            if n.role.manages_cell() && !(lossy && !named_cm) {
                if let Some(other) = cell_managers.insert(n.cell_id, n.id) {
                    return Err(self.violation(format!("cell {} managed by {} and {}", n.cell_id, other, n.id)));
                }
            }
            if n.role == Role::GroupManager && !(lossy && !named_gm) {
                if let Some(other) = group_managers.insert(n.group_id, n.id) {
                    return Err(self.violation(format!("group {} managed by {} and {}", n.group_id, other, n.id)));
                }
            }
        }
        Ok(())
    }
}
