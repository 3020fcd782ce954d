use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wsnfm_core::energy::{rx_cost, tx_cost, Battery, EnergyRank, RadioParams, Thresholds};
use wsnfm_core::messaging::{filter_message, make_envelope, Envelope, FilterDecision, MsgId, Payload, Scope, SeenSet};
use wsnfm_core::protocol::{NodeState, Role};
use wsnfm_core::topology::{assign_nodes, build_grid, deploy_uniform, form_groups, rank_by_energy, Position};
use wsnfm_core::{CellId, GroupId, NodeId};

proptest! {
    #[test]
    fn groups_partition_the_grid(side in 5.0f64..40.0, w in 10.0f64..200.0, h in 10.0f64..200.0, g in 1u32..5) {
        let grid = build_grid(w, h, side).unwrap();
        let groups = form_groups(&grid, g).unwrap();
        let mut seen = BTreeSet::new();
        for gr in &groups {
            prop_assert!(!gr.cell_ids.is_empty());
            for c in &gr.cell_ids {
                prop_assert!(seen.insert(*c), "cell {c} in two groups");
            }
        }
        prop_assert_eq!(seen.len(), grid.cell_count());
        prop_assert_eq!(groups.len() as u32, grid.cols.div_ceil(g) * grid.rows.div_ceil(g));
    }

    #[test]
    fn every_node_lands_in_the_cell_covering_it(n in 1usize..120, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes = deploy_uniform(n, 120.0, 120.0, &mut rng);
        let grid = assign_nodes(build_grid(120.0, 120.0, 30.0).unwrap(), &nodes).unwrap();
        let mut total = 0;
        for rec in grid.cells.values() {
            for m in &rec.member_ids {
                let p = nodes[m.index()].1;
                // Independent oracle: cell index from the position, edges clamped.
                let col = ((p.x / 30.0) as u32).min(3);
                let row = ((p.y / 30.0) as u32).min(3);
                prop_assert_eq!((rec.col, rec.row), (col, row));
                total += 1;
            }
        }
        prop_assert_eq!(total, n);
    }

    #[test]
    fn election_order_is_energy_then_id(energies in proptest::collection::vec(0u32..5, 1..20)) {
        let map: BTreeMap<NodeId, f64> =
            energies.iter().enumerate().map(|(i, e)| (NodeId(i as u32), *e as f64 * 100.0)).collect();
        let ranked = rank_by_energy(map.keys().copied(), &map);
        prop_assert_eq!(ranked.len(), map.len());
        for pair in ranked.windows(2) {
            let (a, b) = (map[&pair[0]], map[&pair[1]]);
            prop_assert!(a > b || (a == b && pair[0] < pair[1]));
        }
    }

    #[test]
    fn transmit_cost_grows_with_distance(d1 in 0.0f64..200.0, d2 in 0.0f64..200.0) {
        let p = RadioParams::default();
        let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let a = tx_cost(&p, p.message_bits, near).unwrap();
        let b = tx_cost(&p, p.message_bits, far).unwrap();
        prop_assert!(a <= b);
        prop_assert!(a >= rx_cost(&p, p.message_bits));
    }

    #[test]
    fn drain_stays_in_bounds(initial in 0.0f64..5000.0, draws in proptest::collection::vec(0.0f64..3000.0, 0..10)) {
        let mut b = Battery::new(initial).unwrap();
        let mut spent = 0.0;
        for d in draws {
            let before = b.residual();
            b = b.drain(d);
            spent += before - b.residual();
            prop_assert!((0.0..=initial).contains(&b.residual()));
        }
        prop_assert!((spent - (initial - b.residual())).abs() < 1e-9);
    }

    #[test]
    fn rank_is_monotone_in_fraction(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let t = Thresholds::default();
        let order = |r: EnergyRank| match r { EnergyRank::Low => 0, EnergyRank::Medium => 1, EnergyRank::High => 2 };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(order(t.rank_of_fraction(lo)) <= order(t.rank_of_fraction(hi)));
    }
}

fn node(id: u32, group: u32, cell: u32, gm: bool) -> NodeState {
    let mut n = NodeState::new(NodeId(id), Position::new(0.0, 0.0), Battery::new(2000.0).unwrap(), CellId(cell), GroupId(group));
    if gm {
        n.role = Role::GroupManager;
    }
    n
}

/// Independent statement of which messages a node may act on.
fn admissible(n: &NodeState, m: &Envelope) -> bool {
    if n.id.is_base_station() || m.sender.is_base_station() {
        return true;
    }
    let gm = n.role == Role::GroupManager;
    match m.scope {
        Scope::Inter => m.group_id == n.group_id || gm,
        Scope::Group => m.group_id == n.group_id,
        Scope::Cell => m.group_id == n.group_id && (m.cell_id == n.cell_id || gm),
    }
}

fn scope_of(i: u8) -> Scope {
    [Scope::Cell, Scope::Group, Scope::Inter][i as usize % 3]
}

fn payload_of(i: u8) -> Payload {
    [Payload::Get, Payload::StatusQuery, Payload::Ack, Payload::Reminder, Payload::DeclareFaulty { subject: NodeId(0) }][i as usize % 5]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn filter_processes_each_message_once_and_only_in_scope(
        receiver in (0u32..3, 0u32..4, any::<bool>()),
        stream in proptest::collection::vec((0u32..4, 0u32..3, 0u32..4, 0u8..3, 0u8..5, 0u64..4), 1..40),
    ) {
        let me = node(100, receiver.0, receiver.1, receiver.2);
        let mut seen = SeenSet::new();
        let mut processed: BTreeSet<MsgId> = BTreeSet::new();
        for (sender, group, cell, scope, payload, t) in stream {
            let s = node(sender, group, cell, false);
            let m = make_envelope(&s, payload_of(payload), scope_of(scope), t).unwrap();
            if filter_message(&me, &mut seen, &m) == FilterDecision::Process {
                prop_assert!(admissible(&me, &m), "out-of-scope message processed: {m:?}");
                prop_assert!(processed.insert(m.msg_id()), "processed twice: {:?}", m.msg_id());
            }
        }
    }
}
