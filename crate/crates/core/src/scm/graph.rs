use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value type of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    #[default]
    Continuous,
    Categorical,
}

/// Directed acyclic graph over named nodes.
///
/// Parent lists are kept sorted by node name, so everything derived from the
/// graph depends on its topology only, not on declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalGraph {
    names: Vec<String>,
    kinds: Vec<NodeKind>,
    parents: Vec<Vec<usize>>,
    index: BTreeMap<String, usize>,
    order: Vec<usize>,
}

impl CausalGraph {
    pub fn new<N, E>(nodes: N, edges: E) -> Result<Self>
    where
        N: IntoIterator<Item = (String, NodeKind)>,
        E: IntoIterator<Item = (String, String)>,
    {
        let mut names = Vec::new();
        let mut kinds = Vec::new();
        let mut index = BTreeMap::new();
        for (name, kind) in nodes {
            if index.insert(name.clone(), names.len()).is_some() {
                return Err(Error::Graph(format!("duplicate node '{name}'")));
            }
            names.push(name);
            kinds.push(kind);
        }
        if names.is_empty() {
            return Err(Error::Graph("graph has no nodes".into()));
        }
        let mut parents = vec![Vec::new(); names.len()];
        let mut seen = BTreeSet::new();
        for (from, to) in edges {
            let f = *index
                .get(&from)
                .ok_or_else(|| Error::UnknownNode(from.clone()))?;
            let t = *index
                .get(&to)
                .ok_or_else(|| Error::UnknownNode(to.clone()))?;
            if !seen.insert((f, t)) {
                return Err(Error::Graph(format!("duplicate edge {from} -> {to}")));
            }
            if f == t {
                return Err(Error::Graph(format!("self-loop on '{from}'")));
            }
            parents[t].push(f);
        }
        for p in &mut parents {
            p.sort_by(|&a, &b| names[a].cmp(&names[b]));
        }
        let order = topo_sort(&names, &parents)?;
        Ok(CausalGraph {
            names,
            kinds,
            parents,
            index,
            order,
        })
    }

    /// Convenience constructor from string slices.
    pub fn from_edges(nodes: &[(&str, NodeKind)], edges: &[(&str, &str)]) -> Result<Self> {
        Self::new(
            nodes.iter().map(|(n, k)| (n.to_string(), *k)),
            edges.iter().map(|(a, b)| (a.to_string(), b.to_string())),
        )
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, node: usize) -> &str {
        &self.names[node]
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        self.kinds[node]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    /// Parents sorted by name.
    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn is_root(&self, node: usize) -> bool {
        self.parents[node].is_empty()
    }

    /// Node indices with every node after all of its parents; ties broken by name.
    pub fn topo_order(&self) -> &[usize] {
        &self.order
    }

    /// Membership mask of the given nodes and all their descendants.
    pub fn descendants_of(&self, nodes: &[usize]) -> Vec<bool> {
        let mut mark = vec![false; self.len()];
        for &n in nodes {
            mark[n] = true;
        }
        for &v in &self.order {
            if self.parents[v].iter().any(|&p| mark[p]) {
                mark[v] = true;
            }
        }
        mark
    }

    /// Membership mask of `node` and all its ancestors.
    pub fn ancestors_of(&self, node: usize) -> Vec<bool> {
        let mut mark = vec![false; self.len()];
        mark[node] = true;
        for &v in self.order.iter().rev() {
            if mark[v] {
                for &p in &self.parents[v] {
                    mark[p] = true;
                }
            }
        }
        mark
    }
}

fn topo_sort(names: &[String], parents: &[Vec<usize>]) -> Result<Vec<usize>> {
    let n = names.len();
    let mut children = vec![Vec::new(); n];
    let mut indegree = vec![0usize; n];
    for (v, ps) in parents.iter().enumerate() {
        indegree[v] = ps.len();
        for &p in ps {
            children[p].push(v);
        }
    }
    let mut ready: BTreeSet<(&str, usize)> = (0..n)
        .filter(|&v| indegree[v] == 0)
        .map(|v| (names[v].as_str(), v))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&first) = ready.iter().next() {
        ready.remove(&first);
        let v = first.1;
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert((names[c].as_str(), c));
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // Every unplaced node has an unplaced parent; walking parents must revisit a node.
    let mut placed = vec![false; n];
    for &v in &order {
        placed[v] = true;
    }
    let start = (0..n).find(|&v| !placed[v]).expect("some node unplaced");
    let mut path = vec![start];
    let mut pos = vec![usize::MAX; n];
    pos[start] = 0;
    let mut v = start;
    loop {
        let p = *parents[v]
            .iter()
            .find(|&&p| !placed[p])
            .expect("unplaced node has unplaced parent");
        if pos[p] != usize::MAX {
            let mut cycle: Vec<&str> = path[pos[p]..]
                .iter()
                .rev()
                .map(|&i| names[i].as_str())
                .collect();
            cycle.push(names[p].as_str());
            return Err(Error::Graph(format!(
                "cycle detected: {}",
                cycle.join(" -> ")
            )));
        }
        pos[p] = path.len();
        path.push(p);
        v = p;
    }
}
