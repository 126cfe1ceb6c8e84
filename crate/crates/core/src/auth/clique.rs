//! Maximal clique enumeration (Bron-Kerbosch with Tomita pivoting).

/// Simple undirected graph on vertices `0..n` as an adjacency matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adj: Vec<bool>,
}

impl Graph {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            adj: vec![false; n * n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Self::new(n);
        for &(a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Self-loops are ignored.
    pub fn add_edge(&mut self, a: usize, b: usize) {
        if a != b {
            self.adj[a * self.n + b] = true;
            self.adj[b * self.n + a] = true;
        }
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a * self.n + b]
    }

    fn neighbors<'a>(&'a self, v: usize, of: &'a [usize]) -> impl Iterator<Item = usize> + 'a {
        of.iter().copied().filter(move |&u| self.has_edge(v, u))
    }
}

/// All maximal cliques, each sorted ascending, the list sorted
/// lexicographically. An isolated vertex is a maximal clique of size one.
pub fn bron_kerbosch(g: &Graph) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut r = Vec::new();
    let p: Vec<usize> = (0..g.len()).collect();
    expand(g, &mut r, p, Vec::new(), &mut out);
    for c in out.iter_mut() {
        c.sort_unstable();
    }
    out.sort();
    out
}

fn expand(
    g: &Graph,
    r: &mut Vec<usize>,
    mut p: Vec<usize>,
    mut x: Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if p.is_empty() {
        if x.is_empty() && !r.is_empty() {
            out.push(r.clone());
        }
        return;
    }
    // Pivot: the vertex of P ∪ X with most neighbors in P.
    let pivot = p
        .iter()
        .chain(x.iter())
        .copied()
        .max_by_key(|&u| (g.neighbors(u, &p).count(), std::cmp::Reverse(u)))
        .expect("P is non-empty");
    let candidates: Vec<usize> = p
        .iter()
        .copied()
        .filter(|&v| !g.has_edge(pivot, v))
        .collect();
    for v in candidates {
        r.push(v);
        let np: Vec<usize> = g.neighbors(v, &p).collect();
        let nx: Vec<usize> = g.neighbors(v, &x).collect();
        expand(g, r, np, nx, out);
        r.pop();
        p.retain(|&u| u != v);
        x.push(v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]);
        assert_eq!(bron_kerbosch(&g), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn path() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]);
        assert_eq!(bron_kerbosch(&g), vec![vec![0, 1], vec![1, 2]]);
    }

    #[test]
    fn isolated_vertices() {
        let g = Graph::from_edges(3, &[(0, 1)]);
        assert_eq!(bron_kerbosch(&g), vec![vec![0, 1], vec![2]]);
        assert!(bron_kerbosch(&Graph::new(0)).is_empty());
    }

    #[test]
    fn two_triangles_sharing_an_edge() {
        let g = Graph::from_edges(4, &[(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)]);
        assert_eq!(bron_kerbosch(&g), vec![vec![0, 1, 2], vec![1, 2, 3]]);
    }
}
