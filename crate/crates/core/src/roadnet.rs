//! Weighted directed road graph, nearest-node snapping and shortest-path trees.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geo::{haversine_km, GeoPoint, LocId, Location};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub from: LocId,
    pub to: LocId,
    pub length_km: f64,
}

/// Directed graph with strictly positive edge lengths in km.
///
/// Nodes are kept sorted by id; adjacency is stored as compressed in/out lists
/// over node positions.
#[derive(Clone, Debug)]
pub struct RoadGraph {
    nodes: Vec<Location>,
    index: HashMap<LocId, usize>,
    edges: Vec<Edge>,
    // incoming[v] = (u, len) for every edge u -> v
    in_start: Vec<usize>,
    in_adj: Vec<(usize, f64)>,
}

impl RoadGraph {
    pub fn new(mut nodes: Vec<Location>, edges: Vec<Edge>) -> Result<Self> {
        nodes.sort_by_key(|n| n.id);
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id, i).is_some() {
                return Err(Error::DuplicateId(n.id));
            }
        }
        let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nodes.len()];
        for e in &edges {
            let u = *index.get(&e.from).ok_or(Error::UnknownId(e.from))?;
            let v = *index.get(&e.to).ok_or(Error::UnknownId(e.to))?;
            if !(e.length_km.is_finite() && e.length_km > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "edge {} -> {} has non-positive length {}",
                    e.from, e.to, e.length_km
                )));
            }
            incoming[v].push((u, e.length_km));
        }
        let mut in_start = Vec::with_capacity(nodes.len() + 1);
        let mut in_adj = Vec::with_capacity(edges.len());
        for list in incoming {
            in_start.push(in_adj.len());
            in_adj.extend(list);
        }
        in_start.push(in_adj.len());
        Ok(RoadGraph {
            nodes,
            index,
            edges,
            in_start,
            in_adj,
        })
    }

    pub fn nodes(&self) -> &[Location] {
        &self.nodes
    }

    pub fn node_ids(&self) -> Vec<LocId> {
        self.nodes.iter().map(|n| n.id).collect()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn position(&self, id: LocId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn point(&self, id: LocId) -> Option<GeoPoint> {
        self.position(id).map(|i| self.nodes[i].point)
    }

    fn incoming(&self, v: usize) -> &[(usize, f64)] {
        &self.in_adj[self.in_start[v]..self.in_start[v + 1]]
    }

    /// Writes the `nodes` and `edges` files in the formats read by [`load_graph`].
    pub fn write(&self, nodes_file: &Path, edges_file: &Path) -> Result<()> {
        let mut w = crate::io::create(nodes_file)?;
        let io = |e| Error::io(nodes_file, e);
        writeln!(w, "id,lat,lon").map_err(io)?;
        for n in &self.nodes {
            writeln!(w, "{},{:.7},{:.7}", n.id, n.point.lat(), n.point.lon()).map_err(io)?;
        }
        w.flush().map_err(io)?;
        let mut w = crate::io::create(edges_file)?;
        let io = |e| Error::io(edges_file, e);
        writeln!(w, "from,to,length_km").map_err(io)?;
        for e in &self.edges {
            writeln!(w, "{},{},{}", e.from, e.to, crate::io::fmt_f64(e.length_km)).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

#[derive(Deserialize)]
struct EdgeRow {
    from: LocId,
    to: LocId,
    length_km: f64,
}

/// Reads a graph from `id,lat,lon` node and `from,to,length_km` edge files.
pub fn load_graph(nodes_file: impl AsRef<Path>, edges_file: impl AsRef<Path>) -> Result<RoadGraph> {
    let nodes = crate::geo::load_locations(nodes_file.as_ref())?;
    let path = edges_file.as_ref();
    let ids: std::collections::HashSet<LocId> = nodes.iter().map(|n| n.id).collect();
    let mut edges = Vec::new();
    for (line, row) in crate::io::read_rows::<EdgeRow>(path, &["from", "to", "length_km"])? {
        for id in [row.from, row.to] {
            if !ids.contains(&id) {
                return Err(Error::parse(path, line, format!("edge references unknown node {id}")));
            }
        }
        if !(row.length_km.is_finite() && row.length_km > 0.0) {
            return Err(Error::parse(
                path,
                line,
                format!("edge length {} must be positive", row.length_km),
            ));
        }
        edges.push(Edge {
            from: row.from,
            to: row.to,
            length_km: row.length_km,
        });
    }
    RoadGraph::new(nodes, edges)
}

/// Travel distances from every node to `root`.
#[derive(Clone, Debug)]
pub struct ShortestPathTree {
    root: LocId,
    dist: Vec<Option<f64>>,
}

impl ShortestPathTree {
    pub fn root(&self) -> LocId {
        self.root
    }

    /// Distance by node position in the graph.
    #[inline]
    pub fn at(&self, pos: usize) -> Option<f64> {
        self.dist[pos]
    }

    pub fn get(&self, g: &RoadGraph, id: LocId) -> Option<f64> {
        g.position(id).and_then(|p| self.dist[p])
    }
}

#[derive(Copy, Clone, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra on the edge-reversed graph: `dist(v)` is the shortest travel cost from
/// `v` to `root`. Unreachable nodes have no distance.
pub fn shortest_path_tree(g: &RoadGraph, root: LocId) -> Result<ShortestPathTree> {
    let r = g.position(root).ok_or(Error::UnknownId(root))?;
    let mut dist: Vec<Option<f64>> = vec![None; g.len()];
    let mut done = vec![false; g.len()];
    let mut heap = BinaryHeap::new();
    dist[r] = Some(0.0);
    heap.push(HeapItem { dist: 0.0, node: r });
    while let Some(HeapItem { dist: d, node: v }) = heap.pop() {
        if done[v] {
            continue;
        }
        done[v] = true;
        for &(u, len) in g.incoming(v) {
            let nd = d + len;
            if dist[u].is_none_or(|cur| nd < cur) {
                dist[u] = Some(nd);
                heap.push(HeapItem { dist: nd, node: u });
            }
        }
    }
    Ok(ShortestPathTree { root, dist })
}

/// One tree per root, built in parallel; output order follows `roots`.
pub fn shortest_path_trees(g: &RoadGraph, roots: &[LocId]) -> Result<Vec<ShortestPathTree>> {
    roots.par_iter().map(|&r| shortest_path_tree(g, r)).collect()
}

/// Nearest node by great-circle distance; ties go to the smallest id.
pub fn snap_to_node(p: GeoPoint, g: &RoadGraph) -> Result<LocId> {
    // nodes are sorted by id, so the first strict minimum wins ties
    let mut best: Option<(f64, LocId)> = None;
    for n in &g.nodes {
        let d = haversine_km(p, n.point);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, n.id));
        }
    }
    best.map(|(_, id)| id).ok_or(Error::Empty("road graph has no nodes"))
}
