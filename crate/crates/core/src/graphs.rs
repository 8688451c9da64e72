//! Directed acyclic graphs over `X1..Xd, Y, E` and the structural queries the
//! discovery algorithms and oracles need.
//!
//! Node ids are dense: covariates occupy `0..d`, the target `Y` is `d` and the
//! environment indicator `E` is `d + 1`. Covariate id `i` is column `i` of a
//! [`Dataset`](crate::Dataset).

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Upper bound on `nodes=` accepted by the text parser.
pub const MAX_PARSED_NODES: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Covariate,
    Target,
    Environment,
}

/// Structural relation queried by [`Dag::relatives`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Relation {
    Parents,
    Children,
    Ancestors,
    Descendants,
    NonDescendants,
    MarkovBlanket,
}

/// Immutable DAG with role-tagged nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dag {
    parents: Vec<Vec<NodeId>>,
    children: Vec<Vec<NodeId>>,
}

impl Dag {
    /// Builds a DAG with `covariates` covariate nodes plus `Y` and `E`.
    ///
    /// Duplicate edges are merged. Fails on self loops, unknown ids, edges into
    /// `E` and directed cycles.
    pub fn new(covariates: usize, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> Result<Self> {
        let n = covariates + 2;
        let env = n - 1;
        let mut parents: Vec<BTreeSet<NodeId>> = vec![BTreeSet::new(); n];
        for (src, dst) in edges {
            if src >= n {
                return Err(Error::UnknownNode(src));
            }
            if dst >= n {
                return Err(Error::UnknownNode(dst));
            }
            if src == dst {
                return Err(Error::arg(format!("self loop on node {src}")));
            }
            if dst == env {
                return Err(Error::arg(format!(
                    "edge {src} -> {dst} points into the environment node"
                )));
            }
            parents[dst].insert(src);
        }
        let parents: Vec<Vec<NodeId>> = parents.into_iter().map(|p| p.into_iter().collect()).collect();
        let mut children = vec![Vec::new(); n];
        for (dst, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(dst);
            }
        }
        let dag = Dag { parents, children };
        if dag.topological_order().len() != n {
            return Err(Error::arg("graph contains a directed cycle"));
        }
        Ok(dag)
    }

    pub fn node_count(&self) -> usize {
        self.parents.len()
    }

    pub fn covariate_count(&self) -> usize {
        self.node_count() - 2
    }

    pub fn target(&self) -> NodeId {
        self.node_count() - 2
    }

    pub fn env(&self) -> NodeId {
        self.node_count() - 1
    }

    pub fn role(&self, node: NodeId) -> Result<Role> {
        self.check(node)?;
        Ok(if node == self.target() {
            Role::Target
        } else if node == self.env() {
            Role::Environment
        } else {
            Role::Covariate
        })
    }

    pub fn parents(&self, node: NodeId) -> &[NodeId] {
        &self.parents[node]
    }

    pub fn children(&self, node: NodeId) -> &[NodeId] {
        &self.children[node]
    }

    pub fn has_edge(&self, src: NodeId, dst: NodeId) -> bool {
        dst < self.node_count() && self.parents[dst].binary_search(&src).is_ok()
    }

    /// All edges ordered by `(src, dst)`.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out: Vec<_> = self
            .parents
            .iter()
            .enumerate()
            .flat_map(|(dst, ps)| ps.iter().map(move |&p| (p, dst)))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// Kahn order; ties resolved by smallest id.
    pub fn topological_order(&self) -> Vec<NodeId> {
        let n = self.node_count();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<NodeId> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        order
    }

    pub fn relatives(&self, node: NodeId, kind: Relation) -> Result<BTreeSet<NodeId>> {
        self.check(node)?;
        Ok(match kind {
            Relation::Parents => self.parents[node].iter().copied().collect(),
            Relation::Children => self.children[node].iter().copied().collect(),
            Relation::Ancestors => self.reach(node, &self.parents),
            Relation::Descendants => self.reach(node, &self.children),
            Relation::NonDescendants => {
                let de = self.reach(node, &self.children);
                (0..self.node_count())
                    .filter(|&v| v != node && !de.contains(&v))
                    .collect()
            }
            Relation::MarkovBlanket => {
                let mut mb: BTreeSet<NodeId> = self.parents[node].iter().copied().collect();
                for &c in &self.children[node] {
                    mb.insert(c);
                    mb.extend(self.parents[c].iter().copied());
                }
                mb.remove(&node);
                mb
            }
        })
    }

    fn reach(&self, node: NodeId, adjacency: &[Vec<NodeId>]) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut stack = adjacency[node].clone();
        while let Some(v) = stack.pop() {
            if seen.insert(v) {
                stack.extend(adjacency[v].iter().copied());
            }
        }
        seen
    }

    /// `true` iff `z` blocks every path between `a` and `b`.
    ///
    /// Reachability ("Bayes ball") over `(node, direction)` states, linear in
    /// the size of the graph.
    pub fn d_separated(&self, a: NodeId, b: NodeId, z: &BTreeSet<NodeId>) -> Result<bool> {
        self.check(a)?;
        self.check(b)?;
        for &v in z {
            self.check(v)?;
        }
        if a == b {
            return Err(Error::arg("d-separation query needs two distinct nodes"));
        }
        if z.contains(&a) || z.contains(&b) {
            return Err(Error::arg("queried nodes must not be in the conditioning set"));
        }
        Ok(!self.reachable(a, z)[b])
    }

    /// Number of simple paths between `a` and `b` left open by `z`, counting at
    /// most `cap`. Zero exactly when `a` and `b` are d-separated.
    pub fn count_open_paths(&self, a: NodeId, b: NodeId, z: &BTreeSet<NodeId>, cap: usize) -> Result<usize> {
        self.d_separated(a, b, z)?;
        let n = self.node_count();
        let mut in_z = vec![false; n];
        for &v in z {
            in_z[v] = true;
        }
        let mut opens_collider = in_z.clone();
        let mut stack: Vec<NodeId> = z.iter().copied().collect();
        while let Some(v) = stack.pop() {
            for &p in &self.parents[v] {
                if !opens_collider[p] {
                    opens_collider[p] = true;
                    stack.push(p);
                }
            }
        }
        let mut on_path = vec![false; n];
        on_path[a] = true;
        let mut count = 0;
        self.extend_paths(a, None, b, &in_z, &opens_collider, &mut on_path, &mut count, cap);
        Ok(count)
    }

    /// `arrived_into`: whether the edge used to reach `v` points into `v`.
    #[allow(clippy::too_many_arguments)]
    fn extend_paths(
        &self,
        v: NodeId,
        arrived_into: Option<bool>,
        target: NodeId,
        in_z: &[bool],
        opens_collider: &[bool],
        on_path: &mut [bool],
        count: &mut usize,
        cap: usize,
    ) {
        let steps = self.children[v]
            .iter()
            .map(|&c| (c, true))
            .chain(self.parents[v].iter().map(|&p| (p, false)));
        for (next, into_next) in steps {
            if *count >= cap || on_path[next] {
                continue;
            }
            if let Some(into_v) = arrived_into {
                // `v` is a collider when both edges point into it.
                let collider = into_v && !into_next;
                let open = if collider { opens_collider[v] } else { !in_z[v] };
                if !open {
                    continue;
                }
            }
            if next == target {
                *count += 1;
                continue;
            }
            on_path[next] = true;
            self.extend_paths(next, Some(into_next), target, in_z, opens_collider, on_path, count, cap);
            on_path[next] = false;
        }
    }

    /// Nodes d-connected to `source` given `z`, as a membership mask.
    pub(crate) fn reachable(&self, source: NodeId, z: &BTreeSet<NodeId>) -> Vec<bool> {
        let n = self.node_count();
        let mut in_z = vec![false; n];
        for &v in z {
            in_z[v] = true;
        }
        // Z together with its ancestors: colliders there are open.
        let mut opens_collider = in_z.clone();
        let mut stack: Vec<NodeId> = z.iter().copied().collect();
        while let Some(v) = stack.pop() {
            for &p in &self.parents[v] {
                if !opens_collider[p] {
                    opens_collider[p] = true;
                    stack.push(p);
                }
            }
        }

        // visited[v][0]: arrived from a child (moving up); [1]: from a parent.
        let mut visited = vec![[false; 2]; n];
        let mut reachable = vec![false; n];
        let mut queue = VecDeque::from([(source, 0usize)]);
        while let Some((v, dir)) = queue.pop_front() {
            if visited[v][dir] {
                continue;
            }
            visited[v][dir] = true;
            if !in_z[v] {
                reachable[v] = true;
            }
            let up = dir == 0;
            if up && !in_z[v] {
                queue.extend(self.parents[v].iter().map(|&p| (p, 0)));
                queue.extend(self.children[v].iter().map(|&c| (c, 1)));
            } else if !up {
                if !in_z[v] {
                    queue.extend(self.children[v].iter().map(|&c| (c, 1)));
                }
                if opens_collider[v] {
                    queue.extend(self.parents[v].iter().map(|&p| (p, 0)));
                }
            }
        }
        reachable[source] = false;
        reachable
    }

    fn check(&self, node: NodeId) -> Result<()> {
        if node < self.node_count() {
            Ok(())
        } else {
            Err(Error::UnknownNode(node))
        }
    }

    /// Serializes to the edge-list text format:
    ///
    /// ```text
    /// nodes=<k> target=<id> env=<id>
    /// <src> <dst>
    /// ```
    pub fn to_edge_list(&self) -> String {
        let mut out = format!(
            "nodes={} target={} env={}\n",
            self.node_count(),
            self.target(),
            self.env()
        );
        for (s, d) in self.edges() {
            let _ = writeln!(out, "{s} {d}");
        }
        out
    }

    /// Parses the edge-list format written by [`Dag::to_edge_list`].
    ///
    /// Blank lines and `#` comments are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut header: Option<usize> = None;
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match header {
                None => header = Some(parse_header(line, line_no)?),
                Some(nodes) => {
                    let edge = parse_edge(line, line_no)?;
                    if edge.0 >= nodes || edge.1 >= nodes {
                        return Err(Error::parse(
                            line_no,
                            format!("edge {line:?} references an unknown node"),
                        ));
                    }
                    edges.push(edge);
                }
            }
        }
        let nodes = header.ok_or_else(|| Error::parse(1, "missing `nodes=` header"))?;
        Dag::new(nodes - 2, edges)
    }
}

pub(crate) fn parse_header(line: &str, line_no: usize) -> Result<usize> {
    let mut nodes = None;
    let mut target = None;
    let mut env = None;
    for token in line.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| Error::parse(line_no, format!("expected key=value, found {token:?}")))?;
        let value: usize = value
            .parse()
            .map_err(|_| Error::parse(line_no, format!("{key} must be a non-negative integer")))?;
        let slot = match key {
            "nodes" => &mut nodes,
            "target" => &mut target,
            "env" => &mut env,
            other => return Err(Error::parse(line_no, format!("unknown header key {other:?}"))),
        };
        if slot.replace(value).is_some() {
            return Err(Error::parse(line_no, format!("duplicate header key {key:?}")));
        }
    }
    let (Some(nodes), Some(target), Some(env)) = (nodes, target, env) else {
        return Err(Error::parse(line_no, "header needs nodes=, target= and env="));
    };
    if !(2..=MAX_PARSED_NODES).contains(&nodes) {
        return Err(Error::parse(
            line_no,
            format!("nodes must be in 2..={MAX_PARSED_NODES}"),
        ));
    }
    if target != nodes - 2 || env != nodes - 1 {
        return Err(Error::parse(
            line_no,
            format!(
                "target and env must be the last two ids ({} and {})",
                nodes - 2,
                nodes - 1
            ),
        ));
    }
    Ok(nodes)
}

fn parse_edge(line: &str, line_no: usize) -> Result<(NodeId, NodeId)> {
    let mut parts = line.split_whitespace();
    let mut next = || -> Result<NodeId> {
        parts
            .next()
            .ok_or_else(|| Error::parse(line_no, "expected `<src> <dst>`"))?
            .parse()
            .map_err(|_| Error::parse(line_no, "node ids must be non-negative integers"))
    };
    let edge = (next()?, next()?);
    if parts.next().is_some() {
        return Err(Error::parse(line_no, "trailing tokens after edge"));
    }
    Ok(edge)
}
