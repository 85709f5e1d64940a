//! Reverse Cuthill-McKee ordering and banded LU with partial pivoting.

use std::collections::VecDeque;

use num_complex::Complex64 as C64;

use super::sparse::SparseMat;

/// Reverse Cuthill-McKee permutation of the symmetrized pattern;
/// `perm[new] = old`.
pub fn rcm_order(pattern: &SparseMat) -> Vec<usize> {
    let n = pattern.rows;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in pattern.triplets() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    let deg: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (deg[i], i));
    for &start in &by_degree {
        if seen[start] {
            continue;
        }
        let root = peripheral(start, &adj, &deg);
        let mut q = VecDeque::new();
        seen[root] = true;
        q.push_back(root);
        while let Some(v) = q.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = adj[v].iter().copied().filter(|&u| !seen[u]).collect();
            nb.sort_by_key(|&u| (deg[u], u));
            for u in nb {
                seen[u] = true;
                q.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(root: usize, adj: &[Vec<usize>]) -> (Vec<usize>, usize) {
    let mut level = vec![usize::MAX; adj.len()];
    let mut q = VecDeque::new();
    level[root] = 0;
    q.push_back(root);
    let mut last = root;
    while let Some(v) = q.pop_front() {
        last = v;
        for &u in &adj[v] {
            if level[u] == usize::MAX {
                level[u] = level[v] + 1;
                q.push_back(u);
            }
        }
    }
    let depth = level[last];
    let far: Vec<usize> = (0..adj.len()).filter(|&i| level[i] == depth).collect();
    (far, depth)
}

/// Pseudo-peripheral node by repeated BFS sweeps.
fn peripheral(start: usize, adj: &[Vec<usize>], deg: &[usize]) -> usize {
    let mut root = start;
    let (mut far, mut depth) = bfs_levels(root, adj);
    for _ in 0..8 {
        let cand = *far.iter().min_by_key(|&&u| (deg[u], u)).unwrap();
        let (f2, d2) = bfs_levels(cand, adj);
        if d2 <= depth {
            break;
        }
        root = cand;
        far = f2;
        depth = d2;
    }
    root
}

/// Lower and upper bandwidth of the pattern after permutation.
pub fn bandwidths(pattern: &SparseMat, perm: &[usize]) -> (usize, usize) {
    let mut inv = vec![0usize; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let mut kl = 0;
    let mut ku = 0;
    for (i, j, _) in pattern.triplets() {
        let (a, b) = (inv[i], inv[j]);
        if a > b {
            kl = kl.max(a - b);
        } else {
            ku = ku.max(b - a);
        }
    }
    (kl, ku)
}

/// Banded matrix in row storage, with room for the fill created by pivoting.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    width: usize,
    data: Vec<C64>,
    piv: Vec<usize>,
    factored: bool,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, width, data: vec![C64::new(0.0, 0.0); n * width], piv: vec![0; n], factored: false }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        self.factored = false;
    }

    pub fn add(&mut self, i: usize, j: usize, v: C64) {
        debug_assert!(j + self.kl >= i && j <= i + self.ku);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> C64 {
        self.data[self.idx(i, j)]
    }

    /// In-place LU with row pivoting. Returns the index of a zero pivot on failure.
    pub fn factor(&mut self) -> Result<(), usize> {
        let n = self.n;
        let kl = self.kl;
        let ku_tot = self.ku + self.kl;
        let scale = self.data.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).norm();
            for i in k + 1..=last {
                let v = self.get(i, k).norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            self.piv[k] = p;
            if best <= 1e-300 || best <= scale * 1e-15 * f64::EPSILON {
                return Err(k);
            }
            let jmax = (k + ku_tot).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let inv = 1.0 / self.get(k, k);
            for i in k + 1..=last {
                let ik = self.idx(i, k);
                let l = self.data[ik] * inv;
                if l == C64::new(0.0, 0.0) {
                    continue;
                }
                self.data[ik] = l;
                let ri = i * self.width + self.kl - i;
                let rk = k * self.width + self.kl - k;
                for j in k + 1..=jmax {
                    let v = self.data[rk + j];
                    self.data[ri + j] -= l * v;
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    pub fn solve_in_place(&self, b: &mut [C64]) {
        assert!(self.factored);
        let n = self.n;
        let kl = self.kl;
        let ku_tot = self.ku + self.kl;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                b[i] -= self.get(i, k) * bk;
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + ku_tot).min(n - 1) {
                s -= self.get(k, j) * b[j];
            }
            b[k] = s / self.get(k, k);
        }
    }
}

/// Reusable solver for a fixed sparsity pattern: `diag(d) + S` with `S` fixed.
#[derive(Debug, Clone)]
pub struct PatternSolver {
    perm: Vec<usize>,
    inv: Vec<usize>,
    kl: usize,
    ku: usize,
    base: SparseMat,
}

impl PatternSolver {
    pub fn new(base: &SparseMat) -> Self {
        let n = base.rows;
        let pattern = base.add(&SparseMat::identity(n)).expect("square");
        let perm = rcm_order(&pattern);
        let (kl, ku) = bandwidths(&pattern, &perm);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        PatternSolver { perm, inv, kl, ku, base: base.clone() }
    }

    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    /// Solves `(diag(d) + base) x = rhs`; on a zero pivot returns its original index.
    pub fn solve(&self, d: &[C64], rhs: &[C64]) -> Result<Vec<C64>, usize> {
        let n = self.base.rows;
        let mut band = BandMatrix::zeros(n, self.kl, self.ku);
        for (i, j, v) in self.base.triplets() {
            band.add(self.inv[i], self.inv[j], v);
        }
        for i in 0..n {
            band.add(self.inv[i], self.inv[i], d[i]);
        }
        band.factor().map_err(|k| self.perm[k])?;
        let mut b: Vec<C64> = self.perm.iter().map(|&old| rhs[old]).collect();
        band.solve_in_place(&mut b);
        let mut x = vec![C64::new(0.0, 0.0); n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = b[new];
        }
        Ok(x)
    }
}
