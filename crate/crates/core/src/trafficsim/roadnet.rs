use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Actions per intersection; every intersection carries exactly this many phases.
pub const NUM_PHASES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaneParams {
    /// meters
    pub length: f64,
    /// m/s
    pub speed: f64,
    pub x_max: usize,
}

impl Default for LaneParams {
    fn default() -> Self {
        LaneParams {
            length: 300.0,
            speed: 10.0,
            x_max: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lane {
    pub id: String,
    pub length: f64,
    pub speed: f64,
    pub x_max: usize,
}

impl Lane {
    /// Minimum whole seconds a vehicle spends on this lane.
    pub fn dwell(&self) -> u64 {
        ((self.length / self.speed).ceil() as u64).max(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Movement {
    pub from: usize,
    pub to: usize,
    pub intersection: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Phase {
    pub id: usize,
    /// Indices into [`Roadnet::movements`].
    pub movements: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Intersection {
    pub id: String,
    /// Lane indices sorted by lane id.
    pub incoming: Vec<usize>,
    pub outgoing: Vec<usize>,
    pub movements: Vec<usize>,
    pub phases: Vec<Phase>,
}

/// Side of the intersection a vehicle arrives from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Approach {
    N,
    E,
    S,
    W,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::N, Approach::E, Approach::S, Approach::W];

    fn letter(self) -> char {
        match self {
            Approach::N => 'N',
            Approach::E => 'E',
            Approach::S => 'S',
            Approach::W => 'W',
        }
    }

    /// Exit side for a vehicle arriving from `self` and turning `turn`
    /// (right-hand traffic: a southbound vehicle turning left heads east).
    pub fn exit(self, turn: Turn) -> Approach {
        match (self, turn) {
            (Approach::N, Turn::Through) => Approach::S,
            (Approach::S, Turn::Through) => Approach::N,
            (Approach::E, Turn::Through) => Approach::W,
            (Approach::W, Turn::Through) => Approach::E,
            (Approach::N, Turn::Left) => Approach::E,
            (Approach::S, Turn::Left) => Approach::W,
            (Approach::E, Turn::Left) => Approach::S,
            (Approach::W, Turn::Left) => Approach::N,
        }
    }

    fn offset(self) -> (isize, isize) {
        match self {
            Approach::N => (-1, 0),
            Approach::S => (1, 0),
            Approach::E => (0, 1),
            Approach::W => (0, -1),
        }
    }

    fn opposite(self) -> Approach {
        self.exit(Turn::Through)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Turn {
    Through,
    Left,
}

impl Turn {
    fn letter(self) -> char {
        match self {
            Turn::Through => 'T',
            Turn::Left => 'L',
        }
    }
}

/// The conventional eight phases as (approach, turn) signal groups.
pub(crate) fn standard_phase_groups() -> [Vec<(Approach, Turn)>; NUM_PHASES] {
    use Approach::*;
    use Turn::*;
    [
        vec![(N, Through), (S, Through)],
        vec![(E, Through), (W, Through)],
        vec![(N, Left), (S, Left)],
        vec![(E, Left), (W, Left)],
        vec![(N, Through), (N, Left)],
        vec![(S, Through), (S, Left)],
        vec![(E, Through), (E, Left)],
        vec![(W, Through), (W, Left)],
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct Roadnet {
    pub lanes: Vec<Lane>,
    pub intersections: Vec<Intersection>,
    pub movements: Vec<Movement>,
    lane_index: HashMap<String, usize>,
    movement_index: HashMap<(usize, usize), usize>,
    /// Inverse of `Intersection::movements` phase membership:
    /// `phase_mask[m]` has bit p set when movement m is green in phase p.
    phase_mask: Vec<u8>,
}

impl Roadnet {
    /// Assembles and validates a roadnet. Lanes are re-sorted by id.
    pub fn new(
        mut lanes: Vec<Lane>,
        intersection_ids: Vec<String>,
        movements: Vec<(String, String, String)>,
        phases: Vec<(String, usize, Vec<usize>)>,
    ) -> Result<Self> {
        lanes.sort_by(|a, b| a.id.cmp(&b.id));
        let mut lane_index = HashMap::new();
        for (i, l) in lanes.iter().enumerate() {
            if !(l.length > 0.0) || !(l.speed > 0.0) || l.x_max < 1 {
                return Err(Error::invalid(format!("lane `{}` has invalid parameters", l.id)));
            }
            if lane_index.insert(l.id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate lane `{}`", l.id)));
            }
        }
        let mut inter_index = HashMap::new();
        let mut intersections: Vec<Intersection> = Vec::new();
        for id in intersection_ids {
            if inter_index.insert(id.clone(), intersections.len()).is_some() {
                return Err(Error::invalid(format!("duplicate intersection `{id}`")));
            }
            intersections.push(Intersection {
                id,
                incoming: vec![],
                outgoing: vec![],
                movements: vec![],
                phases: vec![],
            });
        }
        let lane = |name: &str| {
            lane_index
                .get(name)
                .copied()
                .ok_or_else(|| Error::invalid(format!("unknown lane `{name}`")))
        };
        let mut movs = Vec::new();
        let mut movement_index = HashMap::new();
        for (inter, from, to) in &movements {
            let i = *inter_index
                .get(inter)
                .ok_or_else(|| Error::invalid(format!("unknown intersection `{inter}`")))?;
            let (f, t) = (lane(from)?, lane(to)?);
            if f == t {
                return Err(Error::invalid(format!("movement from `{from}` to itself")));
            }
            if movement_index.insert((f, t), movs.len()).is_some() {
                return Err(Error::invalid(format!("duplicate movement `{from}`->`{to}`")));
            }
            let ix = &mut intersections[i];
            ix.movements.push(movs.len());
            if !ix.incoming.contains(&f) {
                ix.incoming.push(f);
            }
            if !ix.outgoing.contains(&t) {
                ix.outgoing.push(t);
            }
            movs.push(Movement {
                from: f,
                to: t,
                intersection: i,
            });
        }
        // A lane feeds at most one intersection and is fed by at most one.
        let mut fed_into = vec![None; lanes.len()];
        let mut fed_from = vec![None; lanes.len()];
        for m in &movs {
            for (slot, lane) in [(&mut fed_into[m.from], m.from), (&mut fed_from[m.to], m.to)] {
                match slot {
                    Some(i) if *i != m.intersection => {
                        return Err(Error::invalid(format!(
                            "lane `{}` attached to two intersections on one side",
                            lanes[lane].id
                        )))
                    }
                    _ => *slot = Some(m.intersection),
                }
            }
        }
        for ix in &mut intersections {
            ix.incoming.sort_unstable();
            ix.outgoing.sort_unstable();
        }
        let mut phase_mask = vec![0u8; movs.len()];
        for (inter, pid, members) in phases {
            let i = *inter_index
                .get(&inter)
                .ok_or_else(|| Error::invalid(format!("unknown intersection `{inter}`")))?;
            if pid >= NUM_PHASES {
                return Err(Error::invalid(format!("phase id {pid} out of range")));
            }
            for &m in &members {
                if m >= movs.len() || movs[m].intersection != i {
                    return Err(Error::invalid(format!(
                        "phase {pid} of `{inter}` references foreign movement {m}"
                    )));
                }
                phase_mask[m] |= 1 << pid;
            }
            intersections[i].phases.push(Phase {
                id: pid,
                movements: members,
            });
        }
        for ix in &mut intersections {
            ix.phases.sort_by_key(|p| p.id);
            let ids: Vec<usize> = ix.phases.iter().map(|p| p.id).collect();
            if ids != (0..NUM_PHASES).collect::<Vec<_>>() {
                return Err(Error::invalid(format!(
                    "intersection `{}` must define phases 0..{NUM_PHASES} exactly once",
                    ix.id
                )));
            }
        }
        Ok(Roadnet {
            lanes,
            intersections,
            movements: movs,
            lane_index,
            movement_index,
            phase_mask,
        })
    }

    pub fn lane_by_id(&self, id: &str) -> Option<usize> {
        self.lane_index.get(id).copied()
    }

    pub fn movement_between(&self, from: usize, to: usize) -> Option<usize> {
        self.movement_index.get(&(from, to)).copied()
    }

    pub(crate) fn is_green(&self, movement: usize, phase: usize) -> bool {
        self.phase_mask[movement] & (1 << phase) != 0
    }

    /// Lanes no movement leads into: vehicles enter the network here.
    pub fn source_lanes(&self) -> Vec<usize> {
        let mut fed = vec![false; self.lanes.len()];
        for m in &self.movements {
            fed[m.to] = true;
        }
        (0..self.lanes.len()).filter(|&l| !fed[l]).collect()
    }

    /// Lanes no movement leaves: vehicles exit the network here.
    pub fn sink_lanes(&self) -> Vec<usize> {
        let mut feeds = vec![false; self.lanes.len()];
        for m in &self.movements {
            feeds[m.from] = true;
        }
        (0..self.lanes.len()).filter(|&l| !feeds[l]).collect()
    }

    /// Number of pairs of intersections joined by a road in either direction.
    pub fn internal_links(&self) -> usize {
        let mut owner_in = vec![None; self.lanes.len()];
        for m in &self.movements {
            owner_in[m.from] = Some(m.intersection);
        }
        let mut pairs = std::collections::BTreeSet::new();
        for m in &self.movements {
            if let Some(down) = owner_in[m.to] {
                let (a, b) = (m.intersection.min(down), m.intersection.max(down));
                pairs.insert((a, b));
            }
        }
        pairs.len()
    }

    /// Resolves lane ids and checks that consecutive lanes are joined by a movement.
    pub fn resolve_route(&self, route: &[String]) -> Result<Vec<usize>> {
        if route.is_empty() {
            return Err(Error::invalid("empty route"));
        }
        let lanes: Vec<usize> = route
            .iter()
            .map(|id| {
                self.lane_by_id(id)
                    .ok_or_else(|| Error::invalid(format!("route uses unknown lane `{id}`")))
            })
            .collect::<Result<_>>()?;
        for w in lanes.windows(2) {
            if self.movement_between(w[0], w[1]).is_none() {
                return Err(Error::invalid(format!(
                    "route is not connected between `{}` and `{}`",
                    self.lanes[w[0]].id, self.lanes[w[1]].id
                )));
            }
        }
        Ok(lanes)
    }

    /// Free-flow seconds along a resolved route.
    pub fn route_dwell(&self, route: &[usize]) -> u64 {
        route.iter().map(|&l| self.lanes[l].dwell()).sum()
    }
}

fn node_name(r: usize, c: usize) -> String {
    format!("I{r:02}_{c:02}")
}

/// Lane id for the road entering intersection `(r, c)` from side `side`.
/// Boundary roads are named after the intersection they touch.
fn road_lane(r: usize, c: usize, side: Approach, dir: &str, turn: Turn) -> String {
    format!("{}.{dir}.{}.{}", node_name(r, c), side.letter(), turn.letter())
}

/// Builds a `rows × cols` grid of four-approach intersections with two lanes
/// (through, left) per approach. Roads between neighbours are shared: the
/// outgoing road of one intersection is the incoming road of the next.
pub fn build_grid(rows: usize, cols: usize, params: LaneParams) -> Result<Roadnet> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("grid needs at least one row and column"));
    }
    // Incoming lane of (r, c) from side s: "I{rc}.in.{s}.{turn}".
    // Outgoing lane of (r, c) toward side s: the neighbour's incoming lane
    // from the opposite side, or a boundary sink "I{rc}.out.{s}.{turn}".
    let neighbour = |r: usize, c: usize, s: Approach| {
        let (dr, dc) = s.offset();
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        (nr >= 0 && nc >= 0 && (nr as usize) < rows && (nc as usize) < cols).then_some((nr as usize, nc as usize))
    };
    let out_lane = |r: usize, c: usize, s: Approach, t: Turn| match neighbour(r, c, s) {
        Some((nr, nc)) => road_lane(nr, nc, s.opposite(), "in", t),
        None => road_lane(r, c, s, "out", t),
    };
    let mut lanes = Vec::new();
    let mut ids = Vec::new();
    let mut movements = Vec::new();
    let mut phases = Vec::new();
    let groups = standard_phase_groups();
    for r in 0..rows {
        for c in 0..cols {
            let name = node_name(r, c);
            ids.push(name.clone());
            for s in Approach::ALL {
                for t in [Turn::Through, Turn::Left] {
                    lanes.push(Lane {
                        id: road_lane(r, c, s, "in", t),
                        length: params.length,
                        speed: params.speed,
                        x_max: params.x_max,
                    });
                    if neighbour(r, c, s).is_none() {
                        lanes.push(Lane {
                            id: road_lane(r, c, s, "out", t),
                            length: params.length,
                            speed: params.speed,
                            x_max: params.x_max,
                        });
                    }
                }
            }
            let base = movements.len();
            let mut group_of = Vec::new();
            for s in Approach::ALL {
                for t in [Turn::Through, Turn::Left] {
                    let exit = s.exit(t);
                    for t2 in [Turn::Through, Turn::Left] {
                        movements.push((name.clone(), road_lane(r, c, s, "in", t), out_lane(r, c, exit, t2)));
                        group_of.push((s, t));
                    }
                }
            }
            for (pid, group) in groups.iter().enumerate() {
                let members = group_of
                    .iter()
                    .enumerate()
                    .filter(|(_, g)| group.contains(g))
                    .map(|(k, _)| base + k)
                    .collect();
                phases.push((name.clone(), pid, members));
            }
        }
    }
    Roadnet::new(lanes, ids, movements, phases)
}

/// Lane sequence for a vehicle entering `(r, c)` from `from` and taking
/// `turns` at successive intersections; it leaves the grid after the last turn
/// and must then be on a boundary.
pub fn grid_route(
    net: &Roadnet,
    rows: usize,
    cols: usize,
    start: (usize, usize),
    from: Approach,
    turns: &[Turn],
) -> Result<Vec<String>> {
    let (mut r, mut c) = start;
    let mut side = from;
    let mut route = Vec::new();
    for (k, &t) in turns.iter().enumerate() {
        route.push(road_lane(r, c, side, "in", t));
        let exit = side.exit(t);
        let (dr, dc) = exit.offset();
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        let inside = nr >= 0 && nc >= 0 && (nr as usize) < rows && (nc as usize) < cols;
        if k + 1 == turns.len() {
            if inside {
                return Err(Error::invalid("route ends inside the grid"));
            }
            route.push(road_lane(r, c, exit, "out", Turn::Through));
        } else {
            if !inside {
                return Err(Error::invalid("route leaves the grid early"));
            }
            r = nr as usize;
            c = nc as usize;
            side = exit.opposite();
        }
    }
    net.resolve_route(&route)?;
    Ok(route)
}

/// The eight single-intersection routes (four approaches × through/left) of a 1×1 grid.
pub fn single_intersection_routes(net: &Roadnet) -> Result<Vec<Vec<String>>> {
    let mut out = Vec::new();
    for s in Approach::ALL {
        for t in [Turn::Through, Turn::Left] {
            out.push(grid_route(net, 1, 1, (0, 0), s, &[t])?);
        }
    }
    Ok(out)
}
