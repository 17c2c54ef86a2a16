//! Loopless k-shortest paths and the path incidence structure.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use nalgebra::DMatrix;

use super::network::Network;
use crate::error::{Error, Result};

/// Origin-destination pair with its demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdPair {
    pub origin: usize,
    pub destination: usize,
    pub demand: f64,
}

/// A simple path: `nodes` has one more entry than `edges`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub od: usize,
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
    pub free_flow_time: f64,
}

/// Paths grouped by OD pair, contiguous per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    paths: Vec<Path>,
    ranges: Vec<std::ops::Range<usize>>,
    n_edges: usize,
}

fn costs_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

/// Order on candidate paths: free-flow time, then node sequence.
fn path_order(a: (f64, &[usize]), b: (f64, &[usize])) -> Ordering {
    if costs_tie(a.0, b.0) {
        a.1.cmp(b.1)
    } else {
        a.0.total_cmp(&b.0)
    }
}

struct Graph<'a> {
    net: &'a Network,
    /// Outgoing edge indices per node, one edge per (tail, head): the cheapest.
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
}

impl<'a> Graph<'a> {
    fn new(net: &'a Network) -> Self {
        let mut out = vec![Vec::new(); net.nodes + 1];
        let mut inc = vec![Vec::new(); net.nodes + 1];
        for (i, e) in net.edges.iter().enumerate() {
            let dup = out[e.tail].iter().position(|&j: &usize| net.edges[j].head == e.head);
            match dup {
                Some(k) => {
                    let j = out[e.tail][k];
                    if e.free_flow_time < net.edges[j].free_flow_time {
                        out[e.tail][k] = i;
                        let pos = inc[e.head].iter().position(|&x| x == j).unwrap();
                        inc[e.head][pos] = i;
                    }
                }
                None => {
                    out[e.tail].push(i);
                    inc[e.head].push(i);
                }
            }
        }
        for list in &mut out {
            list.sort_by_key(|&j| net.edges[j].head);
        }
        Graph { net, out, inc }
    }

    /// Among shortest `from -> to` paths avoiding the banned nodes and edges,
    /// the one with lexicographically smallest node sequence.
    fn lex_shortest(
        &self,
        from: usize,
        to: usize,
        banned_nodes: &[bool],
        banned_edges: &HashSet<usize>,
    ) -> Option<(Vec<usize>, Vec<usize>, f64)> {
        // Distances to `to` on the reversed graph.
        let n = self.net.nodes;
        let mut dist = vec![f64::INFINITY; n + 1];
        let mut heap = BinaryHeap::new();
        dist[to] = 0.0;
        heap.push(HeapItem(0.0, to));
        while let Some(HeapItem(d, v)) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &ei in &self.inc[v] {
                if banned_edges.contains(&ei) {
                    continue;
                }
                let u = self.net.edges[ei].tail;
                if banned_nodes[u] {
                    continue;
                }
                let nd = d + self.net.edges[ei].free_flow_time;
                if nd < dist[u] {
                    dist[u] = nd;
                    heap.push(HeapItem(nd, u));
                }
            }
        }
        if !dist[from].is_finite() {
            return None;
        }
        let mut nodes = vec![from];
        let mut edges = Vec::new();
        let mut cost = 0.0;
        let mut u = from;
        while u != to {
            let next = self.out[u].iter().copied().find(|&ei| {
                let e = &self.net.edges[ei];
                !banned_edges.contains(&ei)
                    && !banned_nodes[e.head]
                    && dist[e.head].is_finite()
                    && costs_tie(e.free_flow_time + dist[e.head], dist[u])
            })?;
            edges.push(next);
            cost += self.net.edges[next].free_flow_time;
            u = self.net.edges[next].head;
            nodes.push(u);
        }
        Some((nodes, edges, cost))
    }
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// The `k` loopless paths from `origin` to `destination` with smallest
/// free-flow time, by Yen's algorithm. Ties are ordered by node sequence, and
/// spur paths are the lexicographically smallest shortest ones, so the result
/// matches a sort of all simple paths by `(time, node sequence)`. Returns
/// fewer than `k` paths when the graph has fewer.
pub fn k_shortest_paths(
    net: &Network,
    origin: usize,
    destination: usize,
    k: usize,
) -> Vec<(Vec<usize>, Vec<usize>, f64)> {
    let graph = Graph::new(net);
    let mut accepted: Vec<(Vec<usize>, Vec<usize>, f64)> = Vec::new();
    if k == 0 || origin == destination {
        return accepted;
    }
    let none = vec![false; net.nodes + 1];
    match graph.lex_shortest(origin, destination, &none, &HashSet::new()) {
        Some(p) => accepted.push(p),
        None => return accepted,
    }
    let mut candidates: Vec<(Vec<usize>, Vec<usize>, f64)> = Vec::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    seen.insert(accepted[0].0.clone());

    while accepted.len() < k {
        let (last_nodes, last_edges, _) = accepted.last().unwrap().clone();
        for i in 0..last_nodes.len() - 1 {
            let spur = last_nodes[i];
            let root = &last_nodes[..=i];
            let mut banned_edges = HashSet::new();
            for (nodes, edges, _) in &accepted {
                if nodes.len() > i + 1 && &nodes[..=i] == root {
                    banned_edges.insert(edges[i]);
                }
            }
            let mut banned_nodes = vec![false; net.nodes + 1];
            for &v in &root[..i] {
                banned_nodes[v] = true;
            }
            if let Some((spur_nodes, spur_edges, _)) =
                graph.lex_shortest(spur, destination, &banned_nodes, &banned_edges)
            {
                let mut nodes = root[..i].to_vec();
                nodes.extend(spur_nodes);
                if seen.contains(&nodes) {
                    continue;
                }
                let mut edges = last_edges[..i].to_vec();
                edges.extend(spur_edges);
                let cost = edges.iter().map(|&e| net.edges[e].free_flow_time).sum();
                seen.insert(nodes.clone());
                candidates.push((nodes, edges, cost));
            }
        }
        if candidates.is_empty() {
            break;
        }
        let best = (0..candidates.len())
            .min_by(|&a, &b| {
                path_order(
                    (candidates[a].2, &candidates[a].0),
                    (candidates[b].2, &candidates[b].0),
                )
            })
            .unwrap();
        accepted.push(candidates.swap_remove(best));
    }
    accepted
}

impl PathSet {
    /// The `k` shortest free-flow paths for every OD pair.
    pub fn enumerate(net: &Network, ods: &[OdPair], k: usize) -> Result<Self> {
        let mut groups = Vec::with_capacity(ods.len());
        for od in ods {
            let found = k_shortest_paths(net, od.origin, od.destination, k);
            if found.len() < k {
                return Err(Error::NotEnoughPaths {
                    origin: od.origin,
                    destination: od.destination,
                    found: found.len(),
                    requested: k,
                });
            }
            groups.push(found.into_iter().map(|(_, edges, _)| edges).collect());
        }
        Self::from_edge_lists(net, ods, groups)
    }

    /// Builds a path set from explicit edge-index lists, one group per OD.
    /// Each list must chain from the OD origin to its destination without
    /// repeating a node.
    pub fn from_edge_lists(net: &Network, ods: &[OdPair], groups: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        if groups.len() != ods.len() {
            return Err(Error::DimensionMismatch {
                expected: ods.len(),
                got: groups.len(),
            });
        }
        let mut paths = Vec::new();
        let mut ranges = Vec::new();
        for (w, (od, group)) in ods.iter().zip(groups).enumerate() {
            if od.origin == od.destination {
                return Err(Error::InvalidArgument(format!("od pair {w} has origin == destination")));
            }
            if group.is_empty() {
                return Err(Error::InvalidArgument(format!("od pair {w} has no paths")));
            }
            let start = paths.len();
            for edges in group {
                let mut nodes = vec![od.origin];
                for &ei in &edges {
                    let e = net.edges.get(ei).ok_or_else(|| {
                        Error::InvalidArgument(format!("edge index {ei} out of range"))
                    })?;
                    if e.tail != *nodes.last().unwrap() {
                        return Err(Error::InvalidArgument(format!("path edges do not chain at edge {ei}")));
                    }
                    nodes.push(e.head);
                }
                if nodes.last() != Some(&od.destination) || edges.is_empty() {
                    return Err(Error::InvalidArgument(format!("path does not end at {}", od.destination)));
                }
                let mut uniq = nodes.clone();
                uniq.sort_unstable();
                uniq.dedup();
                if uniq.len() != nodes.len() {
                    return Err(Error::InvalidArgument(format!("path {nodes:?} repeats a node")));
                }
                let free_flow_time = edges.iter().map(|&e| net.edges[e].free_flow_time).sum();
                paths.push(Path {
                    od: w,
                    nodes,
                    edges,
                    free_flow_time,
                });
            }
            ranges.push(start..paths.len());
        }
        Ok(PathSet {
            paths,
            ranges,
            n_edges: net.edges.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn n_ods(&self) -> usize {
        self.ranges.len()
    }

    /// Index range of the paths of OD pair `w`.
    pub fn od_range(&self, w: usize) -> std::ops::Range<usize> {
        self.ranges[w].clone()
    }

    pub fn paths_per_od(&self) -> Vec<usize> {
        self.ranges.iter().map(|r| r.len()).collect()
    }

    /// Edge-by-path incidence `Q`.
    pub fn edge_incidence(&self) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(self.n_edges, self.paths.len());
        for (p, path) in self.paths.iter().enumerate() {
            for &e in &path.edges {
                q[(e, p)] = 1.0;
            }
        }
        q
    }

    /// OD-by-path incidence `B`.
    pub fn od_incidence(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.ranges.len(), self.paths.len());
        for (w, r) in self.ranges.iter().enumerate() {
            for p in r.clone() {
                b[(w, p)] = 1.0;
            }
        }
        b
    }

    /// Edge flows `l = Q h`.
    pub fn edge_flows(&self, h: &[f64]) -> Result<Vec<f64>> {
        if h.len() != self.paths.len() {
            return Err(Error::DimensionMismatch {
                expected: self.paths.len(),
                got: h.len(),
            });
        }
        if let Some(v) = h.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("negative path flow {v}")));
        }
        let mut flows = vec![0.0; self.n_edges];
        for (path, &hp) in self.paths.iter().zip(h) {
            for &e in &path.edges {
                flows[e] += hp;
            }
        }
        Ok(flows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::network::Edge;

    fn edge(tail: usize, head: usize, t: f64) -> Edge {
        Edge {
            tail,
            head,
            free_flow_time: t,
            capacity: 1.0,
            congestion_coeff: 0.0,
        }
    }

    fn triangle() -> Network {
        Network::new(3, vec![edge(1, 2, 1.0), edge(2, 3, 1.0), edge(1, 3, 1.5)]).unwrap()
    }

    #[test]
    fn triangle_orders_direct_then_two_hop() {
        let p = k_shortest_paths(&triangle(), 1, 3, 2);
        assert_eq!(p[0].0, vec![1, 3]);
        assert_eq!(p[1].0, vec![1, 2, 3]);
        assert_eq!(k_shortest_paths(&triangle(), 1, 3, 5).len(), 2);
    }

    #[test]
    fn ties_are_lexicographic() {
        // Two equal-time routes 1-2-4 and 1-3-4.
        let net = Network::new(4, vec![edge(1, 3, 1.0), edge(3, 4, 1.0), edge(1, 2, 1.0), edge(2, 4, 1.0)]).unwrap();
        let p = k_shortest_paths(&net, 1, 4, 2);
        assert_eq!(p[0].0, vec![1, 2, 4]);
        assert_eq!(p[1].0, vec![1, 3, 4]);
    }

    #[test]
    fn not_enough_paths_is_an_error() {
        let ods = [OdPair {
            origin: 1,
            destination: 3,
            demand: 1.0,
        }];
        assert!(matches!(
            PathSet::enumerate(&triangle(), &ods, 3),
            Err(Error::NotEnoughPaths { found: 2, requested: 3, .. })
        ));
    }

    #[test]
    fn edge_flow_examples() {
        let net = Network::new(4, vec![edge(1, 2, 1.0), edge(2, 3, 1.0), edge(3, 4, 1.0), edge(2, 4, 5.0)]).unwrap();
        let ods = [OdPair {
            origin: 1,
            destination: 4,
            demand: 3.0,
        }];
        let ps = PathSet::from_edge_lists(&net, &ods, vec![vec![vec![0, 1, 2], vec![0, 3]]]).unwrap();
        assert_eq!(ps.edge_flows(&[0.0, 0.0]).unwrap(), vec![0.0; 4]);
        assert_eq!(ps.edge_flows(&[5.0, 0.0]).unwrap(), vec![5.0, 5.0, 5.0, 0.0]);
        // Edge 0 is shared by both paths.
        assert_eq!(ps.edge_flows(&[1.0, 2.0]).unwrap(), vec![3.0, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn incidence_matrices() {
        let ods = [OdPair {
            origin: 1,
            destination: 3,
            demand: 1.0,
        }];
        let ps = PathSet::enumerate(&triangle(), &ods, 2).unwrap();
        let q = ps.edge_incidence();
        assert_eq!(q.column(0).as_slice(), &[0.0, 0.0, 1.0]);
        assert_eq!(q.column(1).as_slice(), &[1.0, 1.0, 0.0]);
        assert_eq!(ps.od_incidence().as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn rejects_broken_paths() {
        let ods = [OdPair {
            origin: 1,
            destination: 3,
            demand: 1.0,
        }];
        assert!(PathSet::from_edge_lists(&triangle(), &ods, vec![vec![vec![1]]]).is_err());
        assert!(PathSet::from_edge_lists(&triangle(), &ods, vec![vec![vec![0]]]).is_err());
    }
}
