//! Spatial graphs over geographic regions.
//!
//! Regions become nodes positioned at their centroids; adjacency comes from
//! queen contiguity of boundary polygons or from symmetrized k-nearest
//! neighbours of centroids. On top of the base relation the module provides
//! k-hop expansion and the buffered test-subgraph extraction used by the
//! spatial cross-validation schemes.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub type Point = (f64, f64);

/// A geographic region: one graph node.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: String,
    pub centroid: Point,
    /// Coordinate rings; the first ring is the outer boundary and must be
    /// closed (first vertex equals last).
    pub boundary: Option<Vec<Vec<Point>>>,
    /// Borough/region label used for leave-one-region-out evaluation.
    pub group: Option<String>,
}

impl Region {
    pub fn point(id: impl Into<String>, x: f64, y: f64) -> Self {
        Region {
            id: id.into(),
            centroid: (x, y),
            boundary: None,
            group: None,
        }
    }
}

/// Undirected spatial graph with 0/1 adjacency.
///
/// Stored as sorted neighbour lists; symmetry and a zero diagonal are
/// invariants of every constructor in this module.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGraph {
    pub regions: Vec<Region>,
    neighbors: Vec<Vec<usize>>,
}

impl RegionGraph {
    /// Build from an undirected edge set; edges are deduplicated and
    /// self-loops rejected by debug assertion.
    pub fn from_edges(regions: Vec<Region>, edges: &[(usize, usize)]) -> Self {
        let n = regions.len();
        let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for &(i, j) in edges {
            debug_assert!(i != j, "self-loop");
            debug_assert!(i < n && j < n, "edge index out of range");
            sets[i].insert(j);
            sets[j].insert(i);
        }
        RegionGraph {
            regions,
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.regions.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Derived edge list with i < j.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for (i, ns) in self.neighbors.iter().enumerate() {
            for &j in ns {
                if i < j {
                    edges.push((i, j));
                }
            }
        }
        edges
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(|n| n.len()).sum::<usize>() / 2
    }

    /// Index of a region id, if present.
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.id == id)
    }

    /// BFS hop distances from a set of sources; usize::MAX marks unreachable.
    pub fn bfs_distances(&self, sources: &[usize]) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.node_count()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s] == usize::MAX {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            for &v in self.neighbors(u) {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

/// One fold of a buffered spatial split.
///
/// The three node sets are pairwise disjoint and partition the graph; every
/// buffer node lies within the configured hop radius of some test node.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub fold_id: usize,
    pub test_nodes: Vec<usize>,
    pub buffer_nodes: Vec<usize>,
    pub train_nodes: Vec<usize>,
}

/// Induced subgraph over test and buffer nodes, with the index remap back to
/// the full graph.
#[derive(Debug, Clone)]
pub struct BufferedSubgraph {
    pub plan: FoldPlan,
    pub subgraph: RegionGraph,
    /// full-graph index of each subgraph node.
    pub to_full: Vec<usize>,
    /// subgraph index of each full-graph node, where present.
    pub to_sub: BTreeMap<usize, usize>,
}

fn point_key(p: Point) -> (u64, u64) {
    (p.0.to_bits(), p.1.to_bits())
}

/// Queen contiguity: regions are adjacent iff their boundaries share at
/// least one vertex or a collinear overlapping segment.
pub fn build_contiguity_graph(regions: Vec<Region>) -> Result<RegionGraph> {
    let n = regions.len();
    let mut vertex_sets: Vec<BTreeSet<(u64, u64)>> = Vec::with_capacity(n);
    let mut segments: Vec<Vec<(Point, Point)>> = Vec::with_capacity(n);
    for region in &regions {
        let rings = region.boundary.as_ref().ok_or(Error::MissingBoundary {
            region: region.id.clone(),
        })?;
        let mut verts = BTreeSet::new();
        let mut segs = Vec::new();
        for ring in rings {
            for &p in ring {
                verts.insert(point_key(p));
            }
            for w in ring.windows(2) {
                segs.push((w[0], w[1]));
            }
        }
        if verts.len() < 3 {
            return Err(Error::DegenerateGeometry {
                region: region.id.clone(),
            });
        }
        vertex_sets.push(verts);
        segments.push(segs);
    }

    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let touch = vertex_sets[i].intersection(&vertex_sets[j]).next().is_some()
                || segments_overlap_any(&segments[i], &segments[j]);
            if touch {
                edges.push((i, j));
            }
        }
    }
    Ok(RegionGraph::from_edges(regions, &edges))
}

/// True if any segment pair is collinear with overlap of positive length.
fn segments_overlap_any(a: &[(Point, Point)], b: &[(Point, Point)]) -> bool {
    const EPS: f64 = 1e-12;
    for &(p1, p2) in a {
        for &(q1, q2) in b {
            let d = (p2.0 - p1.0, p2.1 - p1.1);
            let cross1 = d.0 * (q1.1 - p1.1) - d.1 * (q1.0 - p1.0);
            let cross2 = d.0 * (q2.1 - p1.1) - d.1 * (q2.0 - p1.0);
            let len2 = d.0 * d.0 + d.1 * d.1;
            if len2 < EPS || libm::fabs(cross1) > EPS * len2 || libm::fabs(cross2) > EPS * len2 {
                continue;
            }
            // collinear: check 1-D overlap along the dominant axis
            let t1 = (d.0 * (q1.0 - p1.0) + d.1 * (q1.1 - p1.1)) / len2;
            let t2 = (d.0 * (q2.0 - p1.0) + d.1 * (q2.1 - p1.1)) / len2;
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            if hi.min(1.0) - lo.max(0.0) > EPS {
                return true;
            }
        }
    }
    false
}

/// Symmetrized k-nearest-neighbour graph on centroid Euclidean distance.
///
/// Ties at equal distance resolve to the smaller node index.
pub fn knn_graph(regions: Vec<Region>, k: usize) -> Result<RegionGraph> {
    let n = regions.len();
    if k >= n {
        return Err(Error::KTooLarge { k, n });
    }
    for i in 0..n {
        for j in i + 1..n {
            if regions[i].centroid == regions[j].centroid {
                return Err(Error::DuplicateCentroid {
                    a: regions[i].id.clone(),
                    b: regions[j].id.clone(),
                });
            }
        }
    }
    let mut edges = Vec::new();
    for i in 0..n {
        let (xi, yi) = regions[i].centroid;
        let mut dists: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let (xj, yj) = regions[j].centroid;
                let dx = xi - xj;
                let dy = yi - yj;
                (dx * dx + dy * dy, j)
            })
            .collect();
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, j) in dists.iter().take(k) {
            edges.push((i, j));
        }
    }
    // union symmetrization happens inside from_edges
    let edges: Vec<(usize, usize)> = edges
        .into_iter()
        .map(|(i, j)| if i < j { (i, j) } else { (j, i) })
        .collect();
    Ok(RegionGraph::from_edges(regions, &edges))
}

/// Connect all node pairs at shortest-path distance 1..=k of the input.
pub fn khop_expand(graph: &RegionGraph, k: usize) -> RegionGraph {
    assert!(k >= 1, "k must be >= 1");
    let n = graph.node_count();
    let mut edges = Vec::new();
    for i in 0..n {
        let dist = graph.bfs_distances(&[i]);
        for (j, &d) in dist.iter().enumerate().skip(i + 1) {
            if d >= 1 && d <= k {
                edges.push((i, j));
            }
        }
    }
    RegionGraph::from_edges(graph.regions.clone(), &edges)
}

/// Extract a buffered fold: test nodes, the hop-radius buffer around them,
/// and the induced subgraph over test plus buffer.
pub fn subgraph_with_buffer(
    graph: &RegionGraph,
    test_nodes: &[usize],
    hops: usize,
) -> Result<BufferedSubgraph> {
    if test_nodes.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let n = graph.node_count();
    let test_set: BTreeSet<usize> = test_nodes.iter().copied().collect();
    assert!(test_set.iter().all(|&i| i < n), "test node out of range");

    let dist = graph.bfs_distances(&test_set.iter().copied().collect::<Vec<_>>());
    let mut buffer = Vec::new();
    let mut train = Vec::new();
    for v in 0..n {
        if test_set.contains(&v) {
            continue;
        }
        if dist[v] <= hops {
            buffer.push(v);
        } else {
            train.push(v);
        }
    }

    let mut to_full: Vec<usize> = test_set.iter().copied().collect();
    to_full.extend_from_slice(&buffer);
    to_full.sort_unstable();
    let to_sub: BTreeMap<usize, usize> = to_full
        .iter()
        .enumerate()
        .map(|(sub, &full)| (full, sub))
        .collect();

    let sub_regions: Vec<Region> = to_full.iter().map(|&i| graph.regions[i].clone()).collect();
    let mut sub_edges = Vec::new();
    for (&full_i, &sub_i) in &to_sub {
        for &full_j in graph.neighbors(full_i) {
            if full_j > full_i {
                if let Some(&sub_j) = to_sub.get(&full_j) {
                    sub_edges.push((sub_i, sub_j));
                }
            }
        }
    }

    Ok(BufferedSubgraph {
        plan: FoldPlan {
            fold_id: 0,
            test_nodes: test_set.into_iter().collect(),
            buffer_nodes: buffer,
            train_nodes: train,
        },
        subgraph: RegionGraph::from_edges(sub_regions, &sub_edges),
        to_full,
        to_sub,
    })
}

/// Maximal connected components, ordered by their smallest contained index.
pub fn connected_components(graph: &RegionGraph) -> Vec<Vec<usize>> {
    let n = graph.node_count();
    let mut seen = vec![false; n];
    let mut components = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            comp.push(u);
            for &v in graph.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        comp.sort_unstable();
        components.push(comp);
    }
    components
}

/// Axis-aligned unit square boundary with corner (x, y); closed ring.
pub fn unit_square(x: f64, y: f64) -> Vec<Vec<Point>> {
    vec![vec![(x, y), (x + 1.0, y), (x + 1.0, y + 1.0), (x, y + 1.0), (x, y)]]
}
