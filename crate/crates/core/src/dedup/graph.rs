//! Duplicate graph: documents joined by confirmed near-duplicate edges.

use std::collections::HashMap;
use std::path::PathBuf;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusStore;
use crate::error::{IoContext, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub a: String,
    pub b: String,
    /// Signature-estimated Jaccard similarity.
    pub j: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DuplicateGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl DuplicateGraph {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Connected components over the edges, members in node order,
    /// components ordered by their first member.
    pub fn clusters(&self) -> Vec<Vec<String>> {
        let index: HashMap<&str, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
        let mut uf = UnionFind::<usize>::new(self.nodes.len());
        for e in &self.edges {
            if let (Some(&a), Some(&b)) = (index.get(e.a.as_str()), index.get(e.b.as_str())) {
                uf.union(a, b);
            }
        }
        let mut groups: Vec<Vec<String>> = Vec::new();
        let mut slot: HashMap<usize, usize> = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let root = uf.find(i);
            let g = *slot.entry(root).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(n.id.clone());
        }
        groups
    }

    /// Edges with `j >= min_j`, keeping only nodes that still have an edge.
    pub fn filtered(&self, min_j: f64) -> DuplicateGraph {
        let edges: Vec<GraphEdge> = self.edges.iter().filter(|e| e.j >= min_j).cloned().collect();
        let mut used: std::collections::HashSet<&str> = std::collections::HashSet::new();
        for e in &edges {
            used.insert(&e.a);
            used.insert(&e.b);
        }
        let nodes = self.nodes.iter().filter(|n| used.contains(n.id.as_str())).cloned().collect();
        DuplicateGraph { nodes, edges }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn graph_path(store: &CorpusStore, corpus: &str) -> PathBuf {
    store.root().join("graphs").join(format!("{corpus}.json"))
}

pub fn save_graph(store: &CorpusStore, corpus: &str, graph: &DuplicateGraph) -> Result<()> {
    let path = graph_path(store, corpus);
    let dir = path.parent().unwrap();
    std::fs::create_dir_all(dir).at(dir)?;
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, graph.to_json()).at(&tmp)?;
    std::fs::rename(&tmp, &path).at(&path)
}

/// Stored graph for `corpus` (as the source or output of a dedup run);
/// an empty graph if it was never deduplicated.
pub fn load_graph(store: &CorpusStore, corpus: &str) -> Result<DuplicateGraph> {
    let path = graph_path(store, corpus);
    match std::fs::read_to_string(&path) {
        Ok(s) => DuplicateGraph::from_json(&s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(DuplicateGraph::default()),
        Err(e) => Err(crate::error::Error::io(path, e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_graph_format() {
        assert_eq!(DuplicateGraph::default().to_json(), r#"{"nodes":[],"edges":[]}"#);
    }

    #[test]
    fn single_pair() {
        let g = DuplicateGraph {
            nodes: vec![GraphNode { id: "a".into() }, GraphNode { id: "b".into() }],
            edges: vec![GraphEdge {
                a: "a".into(),
                b: "b".into(),
                j: 0.9,
            }],
        };
        let back = DuplicateGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.edges[0].j, 0.9);
        assert_eq!(g.clusters(), vec![vec!["a".to_string(), "b".to_string()]]);
        assert!(g.filtered(0.95).is_empty());
    }
}
