//! Physical and communication graphs, and zero forcing.
//!
//! Node indices are zero-based throughout the library.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::real::Real;

/// Physical flow network: nodes, oriented edges and actuation placement.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    n: usize,
    edges: Vec<(usize, usize)>,
    actuated: Vec<usize>,
    compartmental_edges: Vec<(usize, usize)>,
    state_dependent_io: Vec<usize>,
    neighbors: Vec<Vec<usize>>,
    actuator_of: Vec<Option<usize>>,
}

fn check_node(n: usize, v: usize, what: &str) -> Result<()> {
    if v < n {
        Ok(())
    } else {
        Err(Error::Validation(format!("{what}: node index {v} out of range for {n} nodes")))
    }
}

fn check_distinct(set: &[usize], what: &str) -> Result<()> {
    let uniq: BTreeSet<_> = set.iter().collect();
    if uniq.len() == set.len() {
        Ok(())
    } else {
        Err(Error::Validation(format!("{what}: duplicate node")))
    }
}

impl NetworkTopology {
    /// Builds a topology. Edges are `(tail, head)`; positive flow runs tail to head.
    ///
    /// Rejects out-of-range indices, self-loops and an empty actuated set.
    /// Connectedness is not required here; see [`NetworkTopology::is_connected`].
    pub fn new(n: usize, edges: Vec<(usize, usize)>, actuated: Vec<usize>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation("network must have at least one node".into()));
        }
        for &(a, b) in &edges {
            check_node(n, a, "edge")?;
            check_node(n, b, "edge")?;
            if a == b {
                return Err(Error::Validation(format!("edge ({a}, {a}) is a self-loop")));
            }
        }
        if actuated.is_empty() {
            return Err(Error::Validation(
                "Assumption 2: at least one node must have a controllable input".into(),
            ));
        }
        for &v in &actuated {
            check_node(n, v, "actuated set")?;
        }
        check_distinct(&actuated, "actuated set")?;

        let mut nb = vec![BTreeSet::new(); n];
        for &(a, b) in &edges {
            nb[a].insert(b);
            nb[b].insert(a);
        }
        let mut actuator_of = vec![None; n];
        for (j, &v) in actuated.iter().enumerate() {
            actuator_of[v] = Some(j);
        }
        Ok(Self {
            n,
            edges,
            actuated,
            compartmental_edges: Vec::new(),
            state_dependent_io: Vec::new(),
            neighbors: nb.into_iter().map(|s| s.into_iter().collect()).collect(),
            actuator_of,
        })
    }

    /// Adds the compartmental edge set and the nodes with state-dependent
    /// in/outflow.
    pub fn with_compartmental(
        mut self,
        edges: Vec<(usize, usize)>,
        state_dependent_io: Vec<usize>,
    ) -> Result<Self> {
        for &(a, b) in &edges {
            check_node(self.n, a, "compartmental edge")?;
            check_node(self.n, b, "compartmental edge")?;
            if a == b {
                return Err(Error::Validation(format!(
                    "compartmental edge ({a}, {a}) is a self-loop"
                )));
            }
        }
        for &v in &state_dependent_io {
            check_node(self.n, v, "state-dependent io set")?;
        }
        check_distinct(&state_dependent_io, "state-dependent io set")?;
        self.compartmental_edges = edges;
        self.state_dependent_io = state_dependent_io;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn p(&self) -> usize {
        self.actuated.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn actuated(&self) -> &[usize] {
        &self.actuated
    }

    pub fn compartmental_edges(&self) -> &[(usize, usize)] {
        &self.compartmental_edges
    }

    pub fn state_dependent_io(&self) -> &[usize] {
        &self.state_dependent_io
    }

    /// Undirected neighbours (sorted, without duplicates).
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    /// Index of the input attached to node `v`, if any.
    pub fn actuator_of(&self, v: usize) -> Option<usize> {
        self.actuator_of[v]
    }

    pub fn incidence_matrix<T: Real>(&self) -> Matrix<T> {
        incidence(self.n, &self.edges)
    }

    pub fn input_indicator<T: Real>(&self) -> Matrix<T> {
        indicator(self.n, &self.actuated)
    }

    pub fn compartmental_incidence<T: Real>(&self) -> Matrix<T> {
        incidence(self.n, &self.compartmental_edges)
    }

    pub fn compartmental_indicator<T: Real>(&self) -> Matrix<T> {
        indicator(self.n, &self.state_dependent_io)
    }

    /// `out += B λ` without forming `B`.
    #[inline]
    pub fn add_b<T: Real>(&self, lambda: &[T], out: &mut [T]) {
        for (&(a, b), &l) in self.edges.iter().zip(lambda) {
            out[a] += l;
            out[b] -= l;
        }
    }

    /// `out = Bᵀ y` without forming `B`.
    #[inline]
    pub fn bt<T: Real>(&self, y: &[T], out: &mut [T]) {
        for (o, &(a, b)) in out.iter_mut().zip(&self.edges) {
            *o = y[a] - y[b];
        }
    }

    /// `out += E u`.
    #[inline]
    pub fn add_e<T: Real>(&self, u: &[T], out: &mut [T]) {
        for (&v, &ui) in self.actuated.iter().zip(u) {
            out[v] += ui;
        }
    }

    /// `out = Eᵀ y`.
    #[inline]
    pub fn et<T: Real>(&self, y: &[T], out: &mut [T]) {
        for (o, &v) in out.iter_mut().zip(&self.actuated) {
            *o = y[v];
        }
    }

    /// Undirected connectivity of the physical graph.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &self.neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.n
    }
}

fn incidence<T: Real>(n: usize, edges: &[(usize, usize)]) -> Matrix<T> {
    let mut b = Matrix::zeros(n, edges.len());
    for (k, &(tail, head)) in edges.iter().enumerate() {
        b[(tail, k)] = T::one();
        b[(head, k)] = -T::one();
    }
    b
}

fn indicator<T: Real>(n: usize, nodes: &[usize]) -> Matrix<T> {
    let mut e = Matrix::zeros(n, nodes.len());
    for (j, &v) in nodes.iter().enumerate() {
        e[(v, j)] = T::one();
    }
    e
}

/// Weighted digraph among the actuated nodes. An arc `(i, j, w)` means
/// node `i` listens to node `j` with weight `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph<T> {
    p: usize,
    arcs: Vec<(usize, usize, T)>,
}

impl<T: Real> CommGraph<T> {
    pub fn new(p: usize, arcs: Vec<(usize, usize, T)>) -> Self {
        Self { p, arcs }
    }

    /// Each undirected edge becomes two opposite arcs of equal weight.
    pub fn undirected(p: usize, edges: &[(usize, usize, T)]) -> Self {
        let arcs = edges.iter().flat_map(|&(i, j, w)| [(i, j, w), (j, i, w)]).collect();
        Self { p, arcs }
    }

    /// Complete undirected graph with uniform weight.
    pub fn complete(p: usize, w: T) -> Self {
        let mut arcs = Vec::new();
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    arcs.push((i, j, w));
                }
            }
        }
        Self { p, arcs }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn arcs(&self) -> &[(usize, usize, T)] {
        &self.arcs
    }

    /// Checks structure and both parts of Assumption 3, returning every violation.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for &(i, j, w) in &self.arcs {
            if i >= self.p || j >= self.p {
                out.push(format!("communication arc ({i}, {j}) references a non-actuated node"));
                continue;
            }
            if i == j {
                out.push(format!("communication arc ({i}, {i}) is a self-loop"));
            }
            if !seen.insert((i, j)) {
                out.push(format!("communication arc ({i}, {j}) appears more than once"));
            }
            if !(w.is_finite() && w >= T::zero()) {
                out.push(format!("communication arc ({i}, {j}) has invalid weight {w}"));
            }
        }
        if !out.is_empty() {
            return out;
        }
        let mut outdeg = vec![T::zero(); self.p];
        let mut indeg = vec![T::zero(); self.p];
        for &(i, j, w) in &self.arcs {
            outdeg[i] += w;
            indeg[j] += w;
        }
        let scale = outdeg.iter().chain(&indeg).fold(T::one(), |a, &b| a.max(b.abs()));
        let tol = scale * T::epsilon() * T::lit(64.0);
        if outdeg.iter().zip(&indeg).any(|(&a, &b)| (a - b).abs() > tol) {
            out.push("Assumption 3: communication graph not balanced".into());
        }
        if !self.strongly_connected() {
            out.push("Assumption 3: communication graph not strongly connected".into());
        }
        out
    }

    fn strongly_connected(&self) -> bool {
        if self.p <= 1 {
            return true;
        }
        let reach = |forward: bool| {
            let mut seen = vec![false; self.p];
            seen[0] = true;
            let mut stack = vec![0];
            while let Some(v) = stack.pop() {
                for &(i, j, w) in &self.arcs {
                    if w <= T::zero() {
                        continue;
                    }
                    let (from, to) = if forward { (i, j) } else { (j, i) };
                    if from == v && !seen[to] {
                        seen[to] = true;
                        stack.push(to);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }

    /// Laplacian with `L_ii = Σ_j w_ij` and `L_ij = -w_ij`.
    pub fn laplacian(&self) -> Result<Matrix<T>> {
        let v = self.violations();
        if !v.is_empty() {
            return Err(Error::Validation(v.join("; ")));
        }
        let mut l = Matrix::zeros(self.p, self.p);
        for &(i, j, w) in &self.arcs {
            l[(i, i)] += w;
            l[(i, j)] -= w;
        }
        Ok(l)
    }
}

/// Closure of `initial_black` under the colour-change rule: a black node with
/// exactly one white neighbour turns that neighbour black.
pub fn zf_closure(topo: &NetworkTopology, initial_black: &BTreeSet<usize>) -> BTreeSet<usize> {
    let n = topo.n();
    let mut black = vec![false; n];
    for &v in initial_black {
        black[v] = true;
    }
    let mut white_nb: Vec<usize> =
        (0..n).map(|v| topo.neighbors(v).iter().filter(|&&w| !black[w]).count()).collect();
    let mut work: Vec<usize> = (0..n).filter(|&v| black[v] && white_nb[v] == 1).collect();
    while let Some(v) = work.pop() {
        if white_nb[v] != 1 {
            continue;
        }
        let Some(&w) = topo.neighbors(v).iter().find(|&&w| !black[w]) else {
            continue;
        };
        black[w] = true;
        for &u in topo.neighbors(w) {
            white_nb[u] -= 1;
            if black[u] && white_nb[u] == 1 {
                work.push(u);
            }
        }
        if white_nb[w] == 1 {
            work.push(w);
        }
    }
    (0..n).filter(|&v| black[v]).collect()
}

pub fn is_zero_forcing(topo: &NetworkTopology, candidate: &BTreeSet<usize>) -> bool {
    zf_closure(topo, candidate).len() == topo.n()
}

pub const DEFAULT_ZF_MAX_N: usize = 12;

/// All inclusion-minimal zero forcing sets, smallest cardinality first.
pub fn minimal_zero_forcing_sets(
    topo: &NetworkTopology,
    max_n: usize,
) -> Result<Vec<BTreeSet<usize>>> {
    let n = topo.n();
    if n > max_n {
        return Err(Error::TooLarge(format!(
            "exhaustive zero forcing search limited to {max_n} nodes, got {n}"
        )));
    }
    if n >= 32 {
        return Err(Error::TooLarge("zero forcing search needs n < 32".into()));
    }
    let mut masks: Vec<u32> = (0..(1u32 << n)).collect();
    masks.sort_by_key(|m| (m.count_ones(), m.reverse_bits()));
    let mut found: Vec<u32> = Vec::new();
    for mask in masks {
        if found.iter().any(|&f| f & mask == f) {
            continue;
        }
        let set: BTreeSet<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        if is_zero_forcing(topo, &set) {
            found.push(mask);
        }
    }
    Ok(found.into_iter().map(|m| (0..n).filter(|&i| m >> i & 1 == 1).collect()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::numerical_rank;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    fn cycle4() -> NetworkTopology {
        NetworkTopology::new(4, vec![(0, 1), (1, 2), (2, 3), (3, 0)], vec![0, 1, 2, 3]).unwrap()
    }

    fn path4() -> NetworkTopology {
        NetworkTopology::new(4, vec![(0, 1), (1, 2), (2, 3)], vec![0]).unwrap()
    }

    #[test]
    fn incidence_single_edge() {
        let t = NetworkTopology::new(2, vec![(0, 1)], vec![0]).unwrap();
        let b = t.incidence_matrix::<f64>();
        assert_eq!(b, Matrix::from_rows(&[vec![1.0], vec![-1.0]]));
    }

    #[test]
    fn incidence_cycle_has_rank_three() {
        let b = cycle4().incidence_matrix::<f64>();
        for k in 0..4 {
            assert_eq!((0..4).map(|i| b[(i, k)]).sum::<f64>(), 0.0);
        }
        assert_eq!(numerical_rank(&b), 3);
    }

    #[test]
    fn disconnected_graph_loses_rank() {
        let t = NetworkTopology::new(4, vec![(0, 1), (2, 3)], vec![0]).unwrap();
        assert!(!t.is_connected());
        assert_eq!(numerical_rank(&t.incidence_matrix::<f64>()), 2);
    }

    #[test]
    fn connectivity() {
        assert!(NetworkTopology::new(1, vec![], vec![0]).unwrap().is_connected());
        assert!(cycle4().is_connected());
    }

    #[test]
    fn input_indicator_shapes() {
        assert_eq!(cycle4().input_indicator::<f64>(), Matrix::identity(4));
        let t = NetworkTopology::new(4, vec![(0, 1), (1, 2), (2, 3), (3, 0)], vec![1, 2, 3]).unwrap();
        let e = t.input_indicator::<f64>();
        assert_eq!((e.rows(), e.cols()), (4, 3));
        assert_eq!(numerical_rank(&t.incidence_matrix::<f64>().hcat(&e)), 4);
        let t1 = NetworkTopology::new(4, vec![(0, 1), (1, 2), (2, 3), (3, 0)], vec![0]).unwrap();
        assert_eq!(numerical_rank(&t1.incidence_matrix::<f64>().hcat(&t1.input_indicator())), 4);
    }

    #[test]
    fn rejects_bad_topologies() {
        assert!(NetworkTopology::new(2, vec![(0, 2)], vec![0]).is_err());
        assert!(NetworkTopology::new(2, vec![(1, 1)], vec![0]).is_err());
        let e = NetworkTopology::new(2, vec![(0, 1)], vec![]).unwrap_err();
        assert!(e.to_string().contains("Assumption 2"));
    }

    #[test]
    fn laplacian_path_weights() {
        let cg = CommGraph::undirected(3, &[(0, 1, 1e4), (1, 2, 1e4)]);
        let l = cg.laplacian().unwrap();
        let want = Matrix::from_rows(&[
            vec![1e4, -1e4, 0.0],
            vec![-1e4, 2e4, -1e4],
            vec![0.0, -1e4, 1e4],
        ]);
        assert_eq!(l, want);
    }

    #[test]
    fn laplacian_complete_graph() {
        let l = CommGraph::complete(4, 10.0).laplacian().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(l[(i, j)], if i == j { 30.0 } else { -10.0 });
            }
        }
    }

    #[test]
    fn balanced_digraph_has_zero_row_and_column_sums() {
        // directed 3-cycle is balanced
        let l = CommGraph::new(3, vec![(0, 1, 2.0), (1, 2, 2.0), (2, 0, 2.0)]).laplacian().unwrap();
        for i in 0..3 {
            assert_eq!((0..3).map(|j| l[(i, j)]).sum::<f64>(), 0.0);
            assert_eq!((0..3).map(|j| l[(j, i)]).sum::<f64>(), 0.0);
        }
    }

    #[test]
    fn laplacian_rejections() {
        let e = CommGraph::new(3, vec![(0, 1, 1.0), (1, 2, 1.0), (2, 0, 2.0)]).laplacian();
        assert!(e.unwrap_err().to_string().contains("Assumption 3: communication graph not balanced"));
        let e = CommGraph::undirected(4, &[(0, 1, 1.0), (2, 3, 1.0)]).laplacian();
        assert!(e.unwrap_err().to_string().contains("not strongly connected"));
        assert!(CommGraph::new(2, vec![(0, 0, 1.0)]).laplacian().is_err());
        assert!(CommGraph::new(2, vec![(0, 1, 1.0), (0, 1, 1.0), (1, 0, 2.0)]).laplacian().is_err());
        assert!(CommGraph::<f64>::new(1, vec![]).laplacian().is_ok());
    }

    #[test]
    fn closure_examples() {
        assert_eq!(zf_closure(&path4(), &set(&[0])), set(&[0, 1, 2, 3]));
        assert_eq!(zf_closure(&cycle4(), &set(&[0])), set(&[0]));
        assert_eq!(zf_closure(&cycle4(), &set(&[1, 2, 3])), set(&[0, 1, 2, 3]));
    }

    #[test]
    fn zero_forcing_examples() {
        assert!(is_zero_forcing(&cycle4(), &set(&[0, 1, 2, 3])));
        assert!(is_zero_forcing(&cycle4(), &set(&[1, 2, 3])));
        assert!(!is_zero_forcing(&cycle4(), &set(&[0])));
    }

    #[test]
    fn minimal_sets_path() {
        let sets = minimal_zero_forcing_sets(&path4(), DEFAULT_ZF_MAX_N).unwrap();
        assert!(sets.contains(&set(&[0])));
        assert!(sets.contains(&set(&[3])));
    }

    #[test]
    fn minimal_sets_cycle_are_adjacent_pairs() {
        let sets = minimal_zero_forcing_sets(&cycle4(), DEFAULT_ZF_MAX_N).unwrap();
        let want: Vec<_> = vec![set(&[0, 1]), set(&[1, 2]), set(&[2, 3]), set(&[0, 3])];
        assert_eq!(sets.len(), 4);
        for w in want {
            assert!(sets.contains(&w));
        }
    }

    #[test]
    fn minimal_sets_complete_graph() {
        let mut edges = Vec::new();
        for i in 0..4 {
            for j in (i + 1)..4 {
                edges.push((i, j));
            }
        }
        let k4 = NetworkTopology::new(4, edges, vec![0]).unwrap();
        let sets = minimal_zero_forcing_sets(&k4, DEFAULT_ZF_MAX_N).unwrap();
        assert_eq!(sets.iter().map(BTreeSet::len).min(), Some(3));
    }

    #[test]
    fn minimal_sets_refuses_large_graphs() {
        let edges = (0..12).map(|i| (i, i + 1)).collect();
        let t = NetworkTopology::new(13, edges, vec![0]).unwrap();
        assert!(matches!(minimal_zero_forcing_sets(&t, 12), Err(Error::TooLarge(_))));
    }
}
