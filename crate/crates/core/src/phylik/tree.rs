use std::collections::{HashMap, HashSet};

use rand::Rng;

use crate::error::{Error, Result};

pub const MIN_BL: f64 = 1e-6;
pub const MAX_BL: f64 = 10.0;
pub const DEFAULT_BL: f64 = 0.05;

pub fn clamp_length(t: f64) -> f64 {
    if t.is_nan() {
        DEFAULT_BL
    } else {
        t.clamp(MIN_BL, MAX_BL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

impl Edge {
    pub fn other(&self, node: usize) -> usize {
        if node == self.a {
            self.b
        } else {
            self.a
        }
    }
}

/// Unrooted tree. Nodes `0..n_leaves` are the leaves, in `names` order;
/// internal nodes follow. Internal nodes may have any degree >= 3, but the
/// likelihood search requires a binary tree (see [`Phylogeny::is_binary`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Phylogeny {
    names: Vec<String>,
    adj: Vec<Vec<(usize, usize)>>,
    edges: Vec<Edge>,
}

/// Reference trees may contain multifurcations.
pub type GoldTree = Phylogeny;

impl Phylogeny {
    /// Build from an edge list over `n_nodes` nodes.
    pub fn from_edges(names: Vec<String>, n_nodes: usize, edges: Vec<Edge>) -> Result<Self> {
        let n_leaves = names.len();
        let mut seen = HashSet::new();
        for n in &names {
            if n.is_empty() {
                return Err(Error::Tree("empty leaf label".into()));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::Tree(format!("duplicate leaf label {n:?}")));
            }
        }
        let mut adj = vec![Vec::new(); n_nodes];
        for (i, e) in edges.iter().enumerate() {
            if e.a >= n_nodes || e.b >= n_nodes || e.a == e.b {
                return Err(Error::Tree(format!("bad edge {i}: {} - {}", e.a, e.b)));
            }
            adj[e.a].push((e.b, i));
            adj[e.b].push((e.a, i));
        }
        let tree = Phylogeny { names, adj, edges };
        tree.validate(n_leaves)?;
        Ok(tree)
    }

    fn validate(&self, n_leaves: usize) -> Result<()> {
        let n = self.adj.len();
        if n_leaves == 0 {
            return Err(Error::Tree("tree has no leaves".into()));
        }
        if self.edges.len() + 1 != n {
            return Err(Error::Tree(format!("{} nodes but {} edges", n, self.edges.len())));
        }
        if n_leaves == 1 {
            return if n == 1 { Ok(()) } else { Err(Error::Tree("single leaf with extra nodes".into())) };
        }
        for (v, nb) in self.adj.iter().enumerate() {
            if v < n_leaves && nb.len() != 1 {
                return Err(Error::Tree(format!("leaf {} has degree {}", self.names[v], nb.len())));
            }
            if v >= n_leaves && nb.len() < 3 {
                return Err(Error::Tree(format!("internal node {v} has degree {}", nb.len())));
            }
        }
        // Connected + n-1 edges => acyclic.
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &(w, _) in &self.adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        if count != n {
            return Err(Error::Tree("tree is not connected".into()));
        }
        Ok(())
    }

    pub fn n_leaves(&self) -> usize {
        self.names.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, leaf: usize) -> &str {
        &self.names[leaf]
    }

    pub fn leaf_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        node < self.names.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn length(&self, e: usize) -> f64 {
        self.edges[e].length
    }

    pub fn set_length(&mut self, e: usize, t: f64) {
        self.edges[e].length = t;
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.adj[node]
    }

    pub fn is_binary(&self) -> bool {
        self.adj[self.names.len()..].iter().all(|nb| nb.len() == 3)
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    /// Edges with an internal node at both ends.
    pub fn internal_edges(&self) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&e| !self.is_leaf(self.edges[e].a) && !self.is_leaf(self.edges[e].b))
            .collect()
    }

    /// Node used as the virtual root for simulation and single-site
    /// conditionals: the first internal node, or leaf 0 when there is none.
    pub fn canonical_root(&self) -> usize {
        if self.n_nodes() > self.n_leaves() {
            self.n_leaves()
        } else {
            0
        }
    }

    /// Pre-order listing `(node, parent edge)` from `root`; the root has `None`.
    pub fn preorder(&self, root: usize) -> Vec<(usize, Option<usize>)> {
        let mut out = Vec::with_capacity(self.n_nodes());
        let mut stack = vec![(root, None::<usize>)];
        while let Some((v, pe)) = stack.pop() {
            out.push((v, pe));
            for &(w, e) in self.adj[v].iter().rev() {
                if Some(e) != pe {
                    stack.push((w, Some(e)));
                }
            }
        }
        out
    }

    /// Clamp every branch length into `[MIN_BL, MAX_BL]`.
    pub fn clamp_lengths(&mut self) {
        for e in &mut self.edges {
            e.length = clamp_length(e.length);
        }
    }

    /// Leaves on the `far` side of edge `e`, seen from `near`.
    pub fn leaves_beyond(&self, near: usize, e: usize) -> Vec<usize> {
        let far = self.edges[e].other(near);
        let mut out = Vec::new();
        let mut stack = vec![(far, e)];
        while let Some((v, pe)) = stack.pop() {
            if self.is_leaf(v) {
                out.push(v);
            }
            for &(w, f) in &self.adj[v] {
                if f != pe {
                    stack.push((w, f));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Nearest-neighbour interchange across internal edge `e = (u, v)`.
    /// With `u`'s other neighbours `a < b` and `v`'s `c < d`, variant 0
    /// exchanges `b` and `c`, variant 1 exchanges `b` and `d`.
    pub fn nni(&mut self, e: usize, variant: usize) -> Result<()> {
        let (u, v) = (self.edges[e].a, self.edges[e].b);
        if self.is_leaf(u) || self.is_leaf(v) || self.adj[u].len() != 3 || self.adj[v].len() != 3 {
            return Err(Error::Tree(format!("edge {e} is not an internal edge of a binary tree")));
        }
        let u_side = self.others(u, e);
        let v_side = self.others(v, e);
        let (_, eb) = u_side[1];
        let (_, ex) = v_side[if variant == 0 { 0 } else { 1 }];
        self.move_edge(eb, u, v);
        self.move_edge(ex, v, u);
        Ok(())
    }

    /// Other neighbours of `node` excluding edge `e`, sorted by node id.
    pub fn others(&self, node: usize, e: usize) -> Vec<(usize, usize)> {
        let mut o: Vec<(usize, usize)> = self.adj[node].iter().copied().filter(|&(_, f)| f != e).collect();
        o.sort_unstable();
        o
    }

    /// Re-attach the `from` end of edge `e` to node `to`.
    fn move_edge(&mut self, e: usize, from: usize, to: usize) {
        let far = self.edges[e].other(from);
        if self.edges[e].a == from {
            self.edges[e].a = to;
        } else {
            self.edges[e].b = to;
        }
        self.adj[from].retain(|&(_, f)| f != e);
        self.adj[to].push((far, e));
        for entry in self.adj[far].iter_mut() {
            if entry.1 == e {
                entry.0 = to;
            }
        }
    }

    /// Number of edges on the path between every pair of leaves.
    pub fn leaf_path_lengths(&self) -> Vec<Vec<u32>> {
        let n = self.n_leaves();
        let mut out = vec![vec![0u32; n]; n];
        for (s, row) in out.iter_mut().enumerate() {
            let mut dist = vec![u32::MAX; self.n_nodes()];
            dist[s] = 0;
            let mut queue = std::collections::VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                for &(w, _) in &self.adj[v] {
                    if dist[w] == u32::MAX {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                }
            }
            row.copy_from_slice(&dist[..n]);
        }
        out
    }

    /// Same tree with leaves renumbered to follow `order`.
    pub fn with_leaf_order(&self, order: &[String]) -> Result<Self> {
        if order.len() != self.n_leaves() {
            return Err(Error::TaxaMismatch(format!(
                "tree has {} leaves, {} names given",
                self.n_leaves(),
                order.len()
            )));
        }
        let pos: HashMap<&str, usize> = order.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let n = self.n_leaves();
        let mut map = vec![0; self.n_nodes()];
        for (leaf, name) in self.names.iter().enumerate() {
            map[leaf] = *pos
                .get(name.as_str())
                .ok_or_else(|| Error::TaxaMismatch(format!("leaf {name:?} not among the given names")))?;
        }
        for (v, slot) in map.iter_mut().enumerate().skip(n) {
            *slot = v;
        }
        let edges = self
            .edges
            .iter()
            .map(|e| Edge { a: map[e.a], b: map[e.b], length: e.length })
            .collect();
        Phylogeny::from_edges(order.to_vec(), self.n_nodes(), edges)
    }

    /// Unrooted binary tree with uniformly random topology (random stepwise
    /// addition) and branch lengths drawn by `length`.
    pub fn random_binary<R: Rng + ?Sized>(
        names: &[String],
        rng: &mut R,
        mut length: impl FnMut(&mut R) -> f64,
    ) -> Result<Self> {
        let n = names.len();
        match n {
            0 => return Err(Error::Tree("no leaves".into())),
            1 => return Phylogeny::from_edges(names.to_vec(), 1, vec![]),
            2 => {
                let t = length(rng);
                return Phylogeny::from_edges(names.to_vec(), 2, vec![Edge { a: 0, b: 1, length: t }]);
            }
            _ => {}
        }
        let mut edges = vec![
            Edge { a: 0, b: n, length: length(rng) },
            Edge { a: 1, b: n, length: length(rng) },
            Edge { a: 2, b: n, length: length(rng) },
        ];
        let mut next_internal = n + 1;
        for leaf in 3..n {
            let target = rng.random_range(0..edges.len());
            let Edge { a, b, length: t } = edges[target];
            let mid = next_internal;
            next_internal += 1;
            edges[target] = Edge { a, b: mid, length: t };
            edges.push(Edge { a: mid, b, length: length(rng) });
            edges.push(Edge { a: leaf, b: mid, length: length(rng) });
        }
        Phylogeny::from_edges(names.to_vec(), 2 * n - 2, edges)
    }
}
