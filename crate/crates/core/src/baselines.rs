//! The three comparison recovery schemes as pure functions producing message
//! rounds. The engine executes the rounds on the same radio model as the
//! cell protocol.
//!
//! - tree-based cluster recovery: intra-cluster tree, fail reports relayed to
//!   the head, join handshakes for orphaned children, energy exchange among
//!   the head's children to pick a new head;
//! - load-balanced clustering: a dead gateway's members each re-register with
//!   the nearest healthy gateway;
//! - autonomic self-organisation: a dead header's members each rejoin the
//!   nearest surviving header.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::ids::NodeId;
use crate::messaging::MsgClass;
use crate::topology::{rank_by_energy, Position};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BaselineKind {
    FailReport,
    FailRelay,
    JoinRequest,
    JoinReply,
    JoinReject,
    Energy,
    FinalCh,
    Attach,
    ReassignRequest,
    ReassignAccept,
    HeaderRequest,
    HeaderReply,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::FailReport => "fail_report",
            BaselineKind::FailRelay => "fail_relay",
            BaselineKind::JoinRequest => "join_request",
            BaselineKind::JoinReply => "join_reply",
            BaselineKind::JoinReject => "join_reject",
            BaselineKind::Energy => "energy",
            BaselineKind::FinalCh => "final_ch",
            BaselineKind::Attach => "attach",
            BaselineKind::ReassignRequest => "lbc_request",
            BaselineKind::ReassignAccept => "lbc_accept",
            BaselineKind::HeaderRequest => "aso_request",
            BaselineKind::HeaderReply => "aso_reply",
        }
    }

    pub fn class(self) -> MsgClass {
        match self {
            BaselineKind::FailReport | BaselineKind::FailRelay => MsgClass::FailureReport,
            _ => MsgClass::Recovery,
        }
    }
}

/// One transmission. An empty `to` is a broadcast nobody heard; it still costs the sender.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaselineMsg {
    pub from: NodeId,
    pub to: Vec<NodeId>,
    pub kind: BaselineKind,
}

impl BaselineMsg {
    fn new(from: NodeId, to: Vec<NodeId>, kind: BaselineKind) -> Self {
        Self { from, to, kind }
    }
}

/// Messages grouped by round; round `k` is sent `k` latencies after the start.
pub type Rounds = Vec<Vec<BaselineMsg>>;

pub fn message_count(rounds: &Rounds) -> usize {
    rounds.iter().map(Vec::len).sum()
}

/// Appends `b` after `a`, dropping empty rounds.
pub fn chain(a: Rounds, b: Rounds) -> Rounds {
    a.into_iter().chain(b).filter(|r| !r.is_empty()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeClass {
    Boundary,
    PreBoundary,
    Internal,
    ClusterHead,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterTree {
    pub head: NodeId,
    pub parent: BTreeMap<NodeId, NodeId>,
}

impl ClusterTree {
    /// Hand-built tree from child → parent links.
    pub fn from_parents(head: NodeId, parent: BTreeMap<NodeId, NodeId>) -> Result<Self> {
        let t = Self { head, parent };
        if !t.is_valid() {
            return Err(invalid("links do not form a tree rooted at the head"));
        }
        Ok(t)
    }

    /// BFS from the head over the radio-range graph. Members out of reach of
    /// the tree hang off their nearest tree node.
    pub fn build(head: NodeId, members: &[(NodeId, Position)], range: f64) -> Result<Self> {
        let pos: BTreeMap<NodeId, Position> = members.iter().copied().collect();
        if !pos.contains_key(&head) {
            return Err(Error::NoCandidate("head is not a cluster member"));
        }
        let r2 = range * range;
        let mut parent = BTreeMap::new();
        let mut in_tree = BTreeSet::from([head]);
        let mut queue = VecDeque::from([head]);
        while let Some(u) = queue.pop_front() {
            for (v, pv) in &pos {
                if !in_tree.contains(v) && pos[&u].dist_sq(pv) <= r2 {
                    in_tree.insert(*v);
                    parent.insert(*v, u);
                    queue.push_back(*v);
                }
            }
        }
        for (v, pv) in &pos {
            if in_tree.contains(v) {
                continue;
            }
            let nearest = in_tree
                .iter()
                .min_by(|a, b| pos[a].dist_sq(pv).total_cmp(&pos[b].dist_sq(pv)).then(a.cmp(b)))
                .copied()
                .expect("tree holds the head");
            parent.insert(*v, nearest);
            in_tree.insert(*v);
        }
        Ok(Self { head, parent })
    }

    pub fn nodes(&self) -> BTreeSet<NodeId> {
        let mut s: BTreeSet<NodeId> = self.parent.keys().copied().collect();
        s.insert(self.head);
        s
    }

    pub fn children(&self, node: NodeId) -> Vec<NodeId> {
        self.parent.iter().filter(|(_, p)| **p == node).map(|(c, _)| *c).collect()
    }

    pub fn depth(&self, node: NodeId) -> Option<usize> {
        let mut d = 0;
        let mut cur = node;
        while cur != self.head {
            cur = *self.parent.get(&cur)?;
            d += 1;
            if d > self.parent.len() {
                return None;
            }
        }
        Some(d)
    }

    /// Path from `node` up to and including the head.
    pub fn path_to_head(&self, node: NodeId) -> Vec<NodeId> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.parent.get(&cur) {
            path.push(*p);
            cur = *p;
            if path.len() > self.parent.len() + 1 {
                break;
            }
        }
        path
    }

    pub fn subtree(&self, node: NodeId) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::from([node]);
        let mut stack = vec![node];
        while let Some(u) = stack.pop() {
            for c in self.children(u) {
                if out.insert(c) {
                    stack.push(c);
                }
            }
        }
        out
    }

    /// Leaves are boundary nodes, parents of leaves are pre-boundary.
    pub fn class_of(&self, node: NodeId) -> Option<NodeClass> {
        if node == self.head {
            return Some(NodeClass::ClusterHead);
        }
        if !self.parent.contains_key(&node) {
            return None;
        }
        let children = self.children(node);
        if children.is_empty() {
            Some(NodeClass::Boundary)
        } else if children.iter().any(|c| self.children(*c).is_empty()) {
            Some(NodeClass::PreBoundary)
        } else {
            Some(NodeClass::Internal)
        }
    }

    /// Every non-head node reaches the head through parent links.
    pub fn is_valid(&self) -> bool {
        !self.parent.contains_key(&self.head) && self.parent.keys().all(|n| self.depth(*n).is_some())
    }
}

/// Fail report to the parent and each child, then relayed hop by hop to the head.
pub fn venk_detect(tree: &ClusterTree, node: NodeId) -> Rounds {
    let mut first = Vec::new();
    if let Some(p) = tree.parent.get(&node) {
        first.push(BaselineMsg::new(node, vec![*p], BaselineKind::FailReport));
    }
    for c in tree.children(node) {
        first.push(BaselineMsg::new(node, vec![c], BaselineKind::FailReport));
    }
    let mut rounds = vec![first];
    let path = tree.path_to_head(node);
    for hop in path.windows(2) {
        rounds.push(vec![BaselineMsg::new(hop[0], vec![hop[1]], BaselineKind::FailRelay)]);
    }
    rounds.into_iter().filter(|r| !r.is_empty()).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeRecovery {
    pub rounds: Rounds,
    pub tree: Option<ClusterTree>,
    pub orphans: Vec<NodeId>,
}

/// Healthy children of a failing non-head node look for a new parent among
/// the cluster nodes in radio range. A parent is admissible if it is not the
/// failing node, not its child, and not in the asking child's own subtree.
pub fn venk_recover_member(
    tree: &ClusterTree,
    failing: NodeId,
    positions: &BTreeMap<NodeId, Position>,
    range: f64,
    alive: &BTreeSet<NodeId>,
) -> Result<TreeRecovery> {
    if failing == tree.head {
        return Err(invalid("head failure uses venk_recover_head"));
    }
    if !tree.parent.contains_key(&failing) {
        return Err(invalid("failing node is not in the tree"));
    }
    let r2 = range * range;
    let siblings: BTreeSet<NodeId> = tree.children(failing).into_iter().collect();
    let healthy: Vec<NodeId> = siblings.iter().copied().filter(|c| alive.contains(c)).collect();
    let mut requests = Vec::new();
    let mut replies = Vec::new();
    let mut new_tree = tree.clone();
    let mut orphans = Vec::new();
    for child in healthy {
        let Some(cp) = positions.get(&child) else { continue };
        let neighbours: Vec<NodeId> = tree
            .nodes()
            .into_iter()
            .filter(|n| *n != child && alive.contains(n))
            .filter(|n| positions.get(n).is_some_and(|p| p.dist_sq(cp) <= r2))
            .collect();
        requests.push(BaselineMsg::new(child, neighbours.clone(), BaselineKind::JoinRequest));
        let own = tree.subtree(child);
        let mut admissible = Vec::new();
        for n in neighbours {
            let ok = n != failing && !siblings.contains(&n) && !own.contains(&n);
            let kind = if ok { BaselineKind::JoinReply } else { BaselineKind::JoinReject };
            replies.push(BaselineMsg::new(n, vec![child], kind));
            if ok {
                admissible.push(n);
            }
        }
        let best = admissible
            .into_iter()
            .min_by_key(|n| (tree.depth(*n).unwrap_or(usize::MAX), *n));
        match best {
            Some(p) => {
                new_tree.parent.insert(child, p);
            }
            None => orphans.push(child),
        }
    }
    for o in &orphans {
        for n in tree.subtree(*o) {
            new_tree.parent.remove(&n);
        }
    }
    new_tree.parent.remove(&failing);
    let rounds = chain(vec![requests], vec![replies]);
    Ok(TreeRecovery { rounds, tree: Some(new_tree), orphans })
}

/// Healthy children of a failing head exchange energy, the richest becomes
/// head, announces itself and the others attach to it.
pub fn venk_recover_head(tree: &ClusterTree, energies: &BTreeMap<NodeId, f64>, healthy: &BTreeSet<NodeId>) -> TreeRecovery {
    let children = tree.children(tree.head);
    let candidates: Vec<NodeId> = children.iter().copied().filter(|c| healthy.contains(c)).collect();
    let Some(new_head) = rank_by_energy(candidates.iter().copied(), energies).first().copied() else {
        return TreeRecovery { rounds: Vec::new(), tree: None, orphans: children };
    };
    let others = |me: NodeId| candidates.iter().copied().filter(|c| *c != me).collect::<Vec<_>>();
    let energy_round = candidates.iter().map(|c| BaselineMsg::new(*c, others(*c), BaselineKind::Energy)).collect();
    let final_round = vec![BaselineMsg::new(new_head, others(new_head), BaselineKind::FinalCh)];
    let attach_round = others(new_head)
        .into_iter()
        .map(|c| BaselineMsg::new(c, vec![new_head], BaselineKind::Attach))
        .collect();
    let mut parent = tree.parent.clone();
    parent.remove(&new_head);
    for c in children.iter().filter(|c| **c != new_head) {
        parent.insert(*c, new_head);
    }
    let new_tree = ClusterTree { head: new_head, parent };
    TreeRecovery {
        rounds: chain(vec![energy_round, final_round], vec![attach_round]),
        tree: Some(new_tree),
        orphans: Vec::new(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GatewayCluster {
    pub gateway: NodeId,
    pub members: BTreeSet<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reassignment {
    pub rounds: Rounds,
    /// member → new gateway or header
    pub assignment: BTreeMap<NodeId, NodeId>,
    pub orphans: Vec<NodeId>,
}

fn nearest(target: &Position, options: &[NodeId], positions: &BTreeMap<NodeId, Position>) -> Option<NodeId> {
    options
        .iter()
        .filter(|o| positions.contains_key(o))
        .min_by(|a, b| {
            positions[a]
                .dist_sq(target)
                .total_cmp(&positions[b].dist_sq(target))
                .then(a.cmp(b))
        })
        .copied()
}

fn handshake(
    members: impl IntoIterator<Item = NodeId>,
    options: &[NodeId],
    positions: &BTreeMap<NodeId, Position>,
    ask: BaselineKind,
    answer: BaselineKind,
) -> Reassignment {
    let mut requests = Vec::new();
    let mut replies = Vec::new();
    let mut assignment = BTreeMap::new();
    let mut orphans = Vec::new();
    for m in members {
        match positions.get(&m).and_then(|p| nearest(p, options, positions)) {
            Some(g) => {
                requests.push(BaselineMsg::new(m, vec![g], ask));
                replies.push(BaselineMsg::new(g, vec![m], answer));
                assignment.insert(m, g);
            }
            None => orphans.push(m),
        }
    }
    Reassignment { rounds: chain(vec![requests], vec![replies]), assignment, orphans }
}

/// The dead gateway's cluster dissolves; every member registers with the
/// nearest healthy gateway (request + accept).
pub fn lbc_recover(
    cluster: &GatewayCluster,
    others: &[GatewayCluster],
    positions: &BTreeMap<NodeId, Position>,
) -> Reassignment {
    let gateways: Vec<NodeId> = others.iter().map(|c| c.gateway).filter(|g| *g != cluster.gateway).collect();
    let members = cluster.members.iter().copied().filter(|m| *m != cluster.gateway);
    handshake(members, &gateways, positions, BaselineKind::ReassignRequest, BaselineKind::ReassignAccept)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeaderSet {
    pub headers: BTreeSet<NodeId>,
    pub assignment: BTreeMap<NodeId, NodeId>,
}

/// Members of a failed header rejoin the nearest surviving header (request + reply).
pub fn aso_recover(headers: &HeaderSet, failed: NodeId, positions: &BTreeMap<NodeId, Position>) -> Reassignment {
    let surviving: Vec<NodeId> = headers.headers.iter().copied().filter(|h| *h != failed).collect();
    let orphans = headers
        .assignment
        .iter()
        .filter(|(m, h)| **h == failed && **m != failed)
        .map(|(m, _)| *m);
    handshake(orphans, &surviving, positions, BaselineKind::HeaderRequest, BaselineKind::HeaderReply)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().map(|i| NodeId(*i)).collect()
    }

    fn tree(head: u32, links: &[(u32, u32)]) -> ClusterTree {
        ClusterTree::from_parents(NodeId(head), links.iter().map(|(c, p)| (NodeId(*c), NodeId(*p))).collect()).unwrap()
    }

    #[test]
    fn classes() {
        // 0 ← 1 ← 2 ← 3, and 1 ← 4
        let t = tree(0, &[(1, 0), (2, 1), (3, 2), (4, 1)]);
        assert_eq!(t.class_of(NodeId(0)), Some(NodeClass::ClusterHead));
        assert_eq!(t.class_of(NodeId(3)), Some(NodeClass::Boundary));
        assert_eq!(t.class_of(NodeId(2)), Some(NodeClass::PreBoundary));
        assert_eq!(t.class_of(NodeId(1)), Some(NodeClass::PreBoundary));
        let t = tree(0, &[(1, 0), (2, 1), (3, 2)]);
        assert_eq!(t.class_of(NodeId(1)), Some(NodeClass::Internal));
        assert!(ClusterTree::from_parents(NodeId(0), BTreeMap::from([(NodeId(1), NodeId(2)), (NodeId(2), NodeId(1))])).is_err());
    }

    #[test]
    fn detect_counts() {
        // node 2: parent 1, children 3 and 4, two hops from head 0 → 3 + 2
        let t = tree(0, &[(1, 0), (2, 1), (3, 2), (4, 2)]);
        assert_eq!(message_count(&venk_detect(&t, NodeId(2))), 5);
        // leaf at depth 3: parent only, plus three hops
        assert_eq!(message_count(&venk_detect(&t, NodeId(3))), 1 + 3);
    }

    #[test]
    fn build_attaches_everyone() {
        let members = [
            (NodeId(0), Position::new(0.0, 0.0)),
            (NodeId(1), Position::new(20.0, 0.0)),
            (NodeId(2), Position::new(40.0, 0.0)),
            (NodeId(3), Position::new(200.0, 0.0)),
        ];
        let t = ClusterTree::build(NodeId(0), &members, 30.0).unwrap();
        assert!(t.is_valid());
        assert_eq!(t.parent[&NodeId(2)], NodeId(1));
        assert_eq!(t.parent[&NodeId(3)], NodeId(2));
        assert_eq!(t.nodes().len(), 4);
    }

    #[test]
    fn head_recovery_counts() {
        let t = tree(0, &[(1, 0), (2, 0), (3, 0), (4, 0), (5, 0)]);
        let energies: BTreeMap<NodeId, f64> = (1..=5).map(|i| (NodeId(i), 1000.0 + i as f64)).collect();
        let healthy: BTreeSet<NodeId> = ids(&[1, 2, 3, 4, 5]).into_iter().collect();
        let r = venk_recover_head(&t, &energies, &healthy);
        assert_eq!(message_count(&r.rounds), 10);
        assert_eq!(r.tree.as_ref().unwrap().head, NodeId(5));
        assert!(r.tree.unwrap().is_valid());

        let t = tree(0, &[(1, 0), (2, 1)]);
        let r = venk_recover_head(&t, &energies, &BTreeSet::from([NodeId(1)]));
        assert_eq!(message_count(&r.rounds), 2);

        let r = venk_recover_head(&t, &energies, &BTreeSet::new());
        assert!(r.tree.is_none() && r.rounds.is_empty());
    }

    #[test]
    fn member_recovery_admissibility() {
        // head 0; 1 under 0; failing 2 under 1; children 3 (with child 6) and 4 under 2; 5 under 0.
        let t = tree(0, &[(1, 0), (2, 1), (3, 2), (4, 2), (5, 0), (6, 3)]);
        let mut pos = BTreeMap::new();
        pos.insert(NodeId(3), Position::new(50.0, 50.0));
        for (i, (x, y)) in [(0, (80.0, 80.0)), (1, (60.0, 50.0)), (2, (50.0, 60.0)), (4, (40.0, 50.0)), (5, (50.0, 40.0)), (6, (55.0, 55.0))] {
            pos.insert(NodeId(i), Position::new(x, y));
        }
        let alive: BTreeSet<NodeId> = (0..=6).map(NodeId).collect();
        let r = venk_recover_member(&t, NodeId(2), &pos, 15.0, &alive).unwrap();
        // Child 3 hears 1, 2, 4, 5, 6: one request and five replies; admissible are 1 and 5.
        let from3: Vec<&BaselineMsg> = r.rounds.iter().flatten().filter(|m| m.to == vec![NodeId(3)]).collect();
        assert_eq!(from3.len(), 5);
        assert_eq!(from3.iter().filter(|m| m.kind == BaselineKind::JoinReply).count(), 2);
        let new_tree = r.tree.unwrap();
        assert_eq!(new_tree.parent[&NodeId(3)], NodeId(1));
        assert!(new_tree.is_valid());

        let boundary = venk_recover_member(&t, NodeId(6), &pos, 15.0, &alive).unwrap();
        assert!(boundary.rounds.is_empty());

        let far: BTreeMap<NodeId, Position> = pos.iter().map(|(k, p)| (*k, Position::new(p.x * 10.0, p.y * 10.0))).collect();
        let lonely = venk_recover_member(&t, NodeId(2), &far, 15.0, &alive).unwrap();
        assert_eq!(lonely.orphans, ids(&[3, 4]));
    }

    #[test]
    fn reassignment_counts() {
        let mut pos = BTreeMap::new();
        for i in 0..20 {
            pos.insert(NodeId(i), Position::new(i as f64, 0.0));
        }
        let cluster = GatewayCluster { gateway: NodeId(0), members: (0..11).map(NodeId).collect() };
        let others = [GatewayCluster { gateway: NodeId(15), members: BTreeSet::new() }];
        assert_eq!(message_count(&lbc_recover(&cluster, &others, &pos).rounds), 20);
        let empty = GatewayCluster { gateway: NodeId(0), members: BTreeSet::from([NodeId(0)]) };
        assert_eq!(message_count(&lbc_recover(&empty, &others, &pos).rounds), 0);
        assert_eq!(lbc_recover(&cluster, &[], &pos).orphans.len(), 10);

        let headers = HeaderSet {
            headers: BTreeSet::from([NodeId(0), NodeId(19)]),
            assignment: (1..9).map(|i| (NodeId(i), NodeId(0))).collect(),
        };
        let r = aso_recover(&headers, NodeId(0), &pos);
        assert_eq!(message_count(&r.rounds), 16);
        assert!(r.assignment.values().all(|h| *h == NodeId(19)));
        assert_eq!(message_count(&aso_recover(&headers, NodeId(19), &pos).rounds), 0);
    }
}
