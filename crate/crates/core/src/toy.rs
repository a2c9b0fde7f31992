//! Six-node worked example: nodes {0,1} -> A, {2,3,4} -> B, {5} -> C.

use crate::coarsening::Coarsening;
use crate::graph::Graph;

pub const SIX_NODE_EDGES: [(usize, usize); 7] = [(0, 1), (0, 2), (1, 3), (2, 3), (2, 4), (3, 4), (4, 5)];

pub const SIX_NODE_ASSIGNMENT: [usize; 6] = [0, 0, 1, 1, 1, 2];

pub fn six_node_graph() -> Graph {
    Graph::from_edges(6, &SIX_NODE_EDGES).expect("static edge list is valid")
}

pub fn six_node_coarsening() -> Coarsening {
    Coarsening::uniform(SIX_NODE_ASSIGNMENT.to_vec()).expect("static partition is surjective")
}
