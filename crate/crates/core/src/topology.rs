//! Virtual grid of square cells, group blocks and the initial elections.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand::Rng;

use crate::energy::HealthStatus;
use crate::error::{invalid, Error, Result};
use crate::ids::{CellId, GroupId, NodeId};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist_sq(&self, other: &Position) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellRecord {
    pub cell_id: CellId,
    pub col: u32,
    pub row: u32,
    pub member_ids: BTreeSet<NodeId>,
    pub manager_id: Option<NodeId>,
    pub secondary_id: Option<NodeId>,
    pub health: HealthStatus,
    /// Set once the cell has been merged away.
    pub retired: bool,
}

impl CellRecord {
    fn new(cell_id: CellId, col: u32, row: u32) -> Self {
        Self {
            cell_id,
            col,
            row,
            member_ids: BTreeSet::new(),
            manager_id: None,
            secondary_id: None,
            health: HealthStatus::High,
            retired: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellGrid {
    pub area_width: f64,
    pub area_height: f64,
    pub cell_side: f64,
    pub cols: u32,
    pub rows: u32,
    pub cells: BTreeMap<CellId, CellRecord>,
}

fn ceil_ratio(len: f64, side: f64) -> u32 {
    let q = len / side;
    let t = q as u32;
    if (t as f64) < q {
        t + 1
    } else {
        t
    }
}

/// Lays a `ceil(w/s) x ceil(h/s)` grid of square cells over the area.
pub fn build_grid(area_width: f64, area_height: f64, cell_side: f64) -> Result<CellGrid> {
    for v in [area_width, area_height, cell_side] {
        if !(v.is_finite() && v > 0.0) {
            return Err(invalid("grid dimensions must be finite and > 0"));
        }
    }
    let cols = ceil_ratio(area_width, cell_side);
    let rows = ceil_ratio(area_height, cell_side);
    let mut cells = BTreeMap::new();
    for row in 0..rows {
        for col in 0..cols {
            let id = CellId(row * cols + col);
            cells.insert(id, CellRecord::new(id, col, row));
        }
    }
    Ok(CellGrid { area_width, area_height, cell_side, cols, rows, cells })
}

impl CellGrid {
    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn contains(&self, p: &Position) -> bool {
        p.x.is_finite() && p.y.is_finite() && (0.0..=self.area_width).contains(&p.x) && (0.0..=self.area_height).contains(&p.y)
    }

    /// Column/row index of a point. Points on the far edges fall in the last row/column.
    pub fn index_of(&self, p: &Position) -> Result<(u32, u32)> {
        if !self.contains(p) {
            return Err(invalid("position outside the deployment area"));
        }
        let col = ((p.x / self.cell_side) as u32).min(self.cols - 1);
        let row = ((p.y / self.cell_side) as u32).min(self.rows - 1);
        Ok((col, row))
    }

    pub fn cell_of(&self, p: &Position) -> Result<CellId> {
        let (col, row) = self.index_of(p)?;
        Ok(self.cell_at(col, row))
    }

    pub fn cell_at(&self, col: u32, row: u32) -> CellId {
        CellId(row * self.cols + col)
    }

    pub fn coords(&self, cell: CellId) -> (u32, u32) {
        (cell.0 % self.cols, cell.0 / self.cols)
    }

    pub fn record(&self, cell: CellId) -> Option<&CellRecord> {
        self.cells.get(&cell)
    }

    pub fn record_mut(&mut self, cell: CellId) -> Option<&mut CellRecord> {
        self.cells.get_mut(&cell)
    }

    /// Grid 4-neighbourhood.
    pub fn neighbors4(&self, cell: CellId) -> Vec<CellId> {
        let (col, row) = self.coords(cell);
        let mut out = Vec::with_capacity(4);
        if row > 0 {
            out.push(self.cell_at(col, row - 1));
        }
        if col > 0 {
            out.push(self.cell_at(col - 1, row));
        }
        if col + 1 < self.cols {
            out.push(self.cell_at(col + 1, row));
        }
        if row + 1 < self.rows {
            out.push(self.cell_at(col, row + 1));
        }
        out
    }

    /// Squared distance from a point to the cell rectangle (0 inside it).
    pub fn dist_sq_to_cell(&self, p: &Position, cell: CellId) -> f64 {
        let (col, row) = self.coords(cell);
        let x0 = col as f64 * self.cell_side;
        let y0 = row as f64 * self.cell_side;
        let x1 = (x0 + self.cell_side).min(self.area_width);
        let y1 = (y0 + self.cell_side).min(self.area_height);
        let dx = if p.x < x0 { x0 - p.x } else if p.x > x1 { p.x - x1 } else { 0.0 };
        let dy = if p.y < y0 { y0 - p.y } else if p.y > y1 { p.y - y1 } else { 0.0 };
        dx * dx + dy * dy
    }

    pub fn cell_center(&self, cell: CellId) -> Position {
        let (col, row) = self.coords(cell);
        Position::new((col as f64 + 0.5) * self.cell_side, (row as f64 + 0.5) * self.cell_side)
    }
}

/// Places every node into the cell containing its position.
pub fn assign_nodes(mut grid: CellGrid, nodes: &[(NodeId, Position)]) -> Result<CellGrid> {
    let mut seen = BTreeSet::new();
    for (id, pos) in nodes {
        if !seen.insert(*id) {
            return Err(invalid("duplicate node id"));
        }
        let cell = grid.cell_of(pos)?;
        grid.cells
            .get_mut(&cell)
            .expect("cell_of returns grid cells")
            .member_ids
            .insert(*id);
    }
    Ok(grid)
}

/// Uniform random placement of `n` nodes with ids `0..n`.
pub fn deploy_uniform<R: Rng + ?Sized>(n: usize, width: f64, height: f64, rng: &mut R) -> Vec<(NodeId, Position)> {
    (0..n)
        .map(|i| {
            let x = rng.gen_range(0.0..=width);
            let y = rng.gen_range(0.0..=height);
            (NodeId(i as u32), Position::new(x, y))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupRecord {
    pub group_id: GroupId,
    /// Block coordinates in the group lattice.
    pub block_col: u32,
    pub block_row: u32,
    pub cell_ids: BTreeSet<CellId>,
    pub group_manager_id: Option<NodeId>,
    pub backup_id: Option<NodeId>,
}

/// Partitions the grid into `group_dim x group_dim` blocks; edge blocks may be smaller.
pub fn form_groups(grid: &CellGrid, group_dim: u32) -> Result<Vec<GroupRecord>> {
    if group_dim < 1 {
        return Err(invalid("group_dim must be >= 1"));
    }
    let bcols = grid.cols.div_ceil(group_dim);
    let brows = grid.rows.div_ceil(group_dim);
    let mut groups: Vec<GroupRecord> = (0..brows)
        .flat_map(|br| (0..bcols).map(move |bc| (bc, br)))
        .map(|(bc, br)| GroupRecord {
            group_id: GroupId(br * bcols + bc),
            block_col: bc,
            block_row: br,
            cell_ids: BTreeSet::new(),
            group_manager_id: None,
            backup_id: None,
        })
        .collect();
    for cell in grid.cells.values() {
        let g = (cell.row / group_dim) * bcols + cell.col / group_dim;
        groups[g as usize].cell_ids.insert(cell.cell_id);
    }
    Ok(groups)
}

/// Block-adjacent groups (4-neighbourhood in the group lattice).
pub fn neighbor_groups(groups: &[GroupRecord], group: GroupId) -> Vec<GroupId> {
    let Some(me) = groups.get(group.index()) else {
        return Vec::new();
    };
    groups
        .iter()
        .filter(|g| {
            let dc = g.block_col.abs_diff(me.block_col);
            let dr = g.block_row.abs_diff(me.block_row);
            dc + dr == 1
        })
        .map(|g| g.group_id)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Election {
    pub winner: NodeId,
    pub runner_up: Option<NodeId>,
}

/// Orders candidates by residual energy (descending), ties by smallest id.
/// Candidates missing from `energies` count as empty.
pub fn rank_by_energy(candidates: impl IntoIterator<Item = NodeId>, energies: &BTreeMap<NodeId, f64>) -> Vec<NodeId> {
    let mut v: Vec<(NodeId, f64)> = candidates
        .into_iter()
        .map(|id| (id, energies.get(&id).copied().unwrap_or(0.0)))
        .collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.dedup_by_key(|e| e.0);
    v.into_iter().map(|(id, _)| id).collect()
}

fn elect(candidates: impl IntoIterator<Item = NodeId>, energies: &BTreeMap<NodeId, f64>) -> Option<Election> {
    let ranked = rank_by_energy(candidates, energies);
    let winner = *ranked.first()?;
    Some(Election { winner, runner_up: ranked.get(1).copied() })
}

/// Max-energy member becomes manager, runner-up becomes secondary.
pub fn elect_cell_manager(cell: &CellRecord, energies: &BTreeMap<NodeId, f64>) -> Result<Election> {
    elect(cell.member_ids.iter().copied(), energies).ok_or(Error::NoCandidate("cell has no members"))
}

/// Max-energy cell manager of the group becomes group manager, runner-up becomes backup.
pub fn elect_group_manager(group: &GroupRecord, grid: &CellGrid, energies: &BTreeMap<NodeId, f64>) -> Result<Election> {
    let managers = group
        .cell_ids
        .iter()
        .filter_map(|c| grid.record(*c).and_then(|r| r.manager_id));
    elect(managers, energies).ok_or(Error::NoCandidate("group has no managed cells"))
}
