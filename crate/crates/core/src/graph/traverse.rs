use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Direction, EdgeKind, Graph, GraphError};

pub const MAX_TRAVERSAL_DEPTH: u32 = 16;

/// Inclusive hop-count bounds, `1 <= min <= max <= 16`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthRange {
    pub min: u32,
    pub max: u32,
}

impl DepthRange {
    pub fn new(min: u32, max: u32) -> Result<Self, GraphError> {
        if min < 1 || min > max || max > MAX_TRAVERSAL_DEPTH {
            return Err(GraphError::InvalidDepth {
                min,
                max,
                limit: MAX_TRAVERSAL_DEPTH,
            });
        }
        Ok(DepthRange { min, max })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Reached {
    pub depth: u32,
    pub node_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Subgraph {
    /// Reached nodes at their minimal depth, ordered by (depth, node id).
    pub nodes: Vec<Reached>,
    /// Edges walked while expanding nodes shallower than `max`, in id order.
    pub edges: Vec<String>,
}

impl Subgraph {
    pub fn node_ids(&self) -> Vec<&str> {
        self.nodes.iter().map(|r| r.node_id.as_str()).collect()
    }
}

/// Breadth-first walk from `start` along edges of the given kinds, in their
/// stored direction (CONNECTED_TO in both). Each node is reported once, at
/// the depth it is first reached; the start itself is never reported.
pub fn traverse(
    graph: &Graph,
    start: &str,
    kinds: &[EdgeKind],
    range: DepthRange,
) -> Result<Subgraph, GraphError> {
    DepthRange::new(range.min, range.max)?;
    if graph.node(start).is_none() {
        return Err(GraphError::UnknownNode(start.to_string()));
    }
    let mut depth_of: BTreeMap<&str, u32> = BTreeMap::new();
    depth_of.insert(start, 0);
    let mut edges: BTreeSet<&str> = BTreeSet::new();
    let mut frontier: Vec<&str> = vec![start];

    for depth in 1..=range.max {
        let mut next: BTreeSet<&str> = BTreeSet::new();
        for &node in &frontier {
            for &kind in kinds {
                for edge in graph.edges_from(node, kind, Direction::Out) {
                    let other = edge.other_end(node);
                    edges.insert(&edge.id);
                    if !depth_of.contains_key(other) {
                        next.insert(other);
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        for &n in &next {
            depth_of.insert(n, depth);
        }
        frontier = next.into_iter().collect();
    }

    let mut nodes: Vec<Reached> = depth_of
        .into_iter()
        .filter(|&(_, d)| d >= range.min && d <= range.max)
        .map(|(id, depth)| Reached {
            depth,
            node_id: id.to_string(),
        })
        .collect();
    nodes.sort();
    Ok(Subgraph {
        nodes,
        edges: edges.into_iter().map(str::to_string).collect(),
    })
}
