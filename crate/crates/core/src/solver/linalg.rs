//! Symmetric indefinite linear algebra for the interior-point KKT systems:
//! a minimum-degree fill-reducing ordering, a sparse LDL^T factorization
//! (up-looking, no pivoting — the regularized KKT matrices are
//! quasi-definite), and a dense fallback for small systems.

/// Approximate minimum-degree ordering on an undirected graph given by
/// lower-triangular edges. Returns the elimination order (`order[k]` is
/// the node eliminated k-th). Deterministic: ties break on node index.
pub fn min_degree_order(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for &(i, j) in edges {
        if i == j {
            continue;
        }
        adj[i].push(j as u32);
        adj[j].push(i as u32);
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }

    let mut alive = vec![true; n];
    let mut elem_of: Vec<Vec<u32>> = vec![Vec::new(); n]; // element ids per node
    let mut elems: Vec<Vec<u32>> = Vec::new(); // element members
    let mut absorbed: Vec<bool> = Vec::new();

    let degree = |v: usize,
                  adj: &mut Vec<Vec<u32>>,
                  elem_of: &mut Vec<Vec<u32>>,
                  elems: &[Vec<u32>],
                  absorbed: &[bool],
                  alive: &[bool]| {
        adj[v].retain(|&u| alive[u as usize]);
        elem_of[v].retain(|&e| !absorbed[e as usize]);
        let mut d = adj[v].len();
        for &e in &elem_of[v] {
            d += elems[e as usize]
                .iter()
                .filter(|&&u| alive[u as usize] && u as usize != v)
                .count();
        }
        d
    };

    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = BinaryHeap::new();
    for v in 0..n {
        heap.push(Reverse((adj[v].len(), v)));
    }

    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let Reverse((d, v)) = heap.pop().expect("heap exhausted early");
        if !alive[v] {
            continue;
        }
        let cur = degree(v, &mut adj, &mut elem_of, &elems, &absorbed, &alive);
        if cur > d {
            heap.push(Reverse((cur, v)));
            continue;
        }
        // Eliminate v: its (variable and element) neighborhood becomes a
        // new element; old elements touching v are absorbed.
        alive[v] = false;
        order.push(v);
        let mut members: Vec<u32> = adj[v].iter().copied().filter(|&u| alive[u as usize]).collect();
        for &e in &elem_of[v] {
            if absorbed[e as usize] {
                continue;
            }
            members.extend(
                elems[e as usize]
                    .iter()
                    .copied()
                    .filter(|&u| alive[u as usize]),
            );
            absorbed[e as usize] = true;
        }
        members.sort_unstable();
        members.dedup();
        let eid = elems.len() as u32;
        elems.push(members.clone());
        absorbed.push(false);
        for &u in &members {
            let u = u as usize;
            elem_of[u].retain(|&e| !absorbed[e as usize]);
            elem_of[u].push(eid);
            let du = degree(u, &mut adj, &mut elem_of, &elems, &absorbed, &alive);
            heap.push(Reverse((du, u)));
        }
    }
    order
}

/// Sparse LDL^T of a symmetric matrix given in upper-triangular CSC form
/// (column pointers `ap`, row indices `ai` sorted ascending per column,
/// diagonal entries present). Pattern-only analysis is done once; numeric
/// refactorization reuses it.
pub struct SparseLdl {
    n: usize,
    ap: Vec<usize>,
    ai: Vec<u32>,
    parent: Vec<i64>,
    lp: Vec<usize>,
    li: Vec<u32>,
    lx: Vec<f64>,
    d: Vec<f64>,
    // workspaces
    lnz: Vec<usize>,
    y: Vec<f64>,
    pattern: Vec<u32>,
    flag: Vec<u32>,
}

impl SparseLdl {
    pub fn symbolic(n: usize, ap: Vec<usize>, ai: Vec<u32>) -> Self {
        let mut parent = vec![-1i64; n];
        let mut lnz_count = vec![0usize; n];
        let mut flag = vec![u32::MAX; n];
        for k in 0..n {
            flag[k] = k as u32;
            for p in ap[k]..ap[k + 1] {
                let mut i = ai[p] as usize;
                while i < k && flag[i] != k as u32 {
                    if parent[i] == -1 {
                        parent[i] = k as i64;
                    }
                    lnz_count[i] += 1;
                    flag[i] = k as u32;
                    i = parent[i] as usize;
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz_count[k];
        }
        let nnz = lp[n];
        Self {
            n,
            ap,
            ai,
            parent,
            lp,
            li: vec![0; nnz],
            lx: vec![0.0; nnz],
            d: vec![0.0; n],
            lnz: vec![0; n],
            y: vec![0.0; n],
            pattern: vec![0; n],
            flag: vec![u32::MAX; n],
        }
    }

    /// Numeric factorization; returns the inertia as (positive, negative)
    /// pivot counts, or `None` on a (near-)zero pivot.
    pub fn factor(&mut self, ax: &[f64]) -> Option<(usize, usize)> {
        let n = self.n;
        self.lnz.fill(0);
        let mut pos = 0;
        let mut neg = 0;
        for k in 0..n {
            self.y[k] = 0.0;
            let mut top = n;
            self.flag[k] = k as u32;
            for p in self.ap[k]..self.ap[k + 1] {
                let mut i = self.ai[p] as usize;
                self.y[i] += ax[p];
                let mut len = 0;
                while self.flag[i] != k as u32 {
                    self.pattern[len] = i as u32;
                    len += 1;
                    self.flag[i] = k as u32;
                    i = self.parent[i] as usize;
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    self.pattern[top] = self.pattern[len];
                }
            }
            self.d[k] = self.y[k];
            self.y[k] = 0.0;
            for t in top..n {
                let i = self.pattern[t] as usize;
                let yi = self.y[i];
                self.y[i] = 0.0;
                let p2 = self.lp[i] + self.lnz[i];
                for p in self.lp[i]..p2 {
                    self.y[self.li[p] as usize] -= self.lx[p] * yi;
                }
                let l_ki = yi / self.d[i];
                self.d[k] -= l_ki * yi;
                self.li[p2] = k as u32;
                self.lx[p2] = l_ki;
                self.lnz[i] += 1;
            }
            if self.d[k].abs() < 1e-300 || !self.d[k].is_finite() {
                return None;
            }
            if self.d[k] > 0.0 {
                pos += 1;
            } else {
                neg += 1;
            }
        }
        Some((pos, neg))
    }

    /// In-place solve of `L D L^T x = b`.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for j in 0..n {
            let xj = b[j];
            for p in self.lp[j]..self.lp[j + 1] {
                b[self.li[p] as usize] -= self.lx[p] * xj;
            }
        }
        for j in 0..n {
            b[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut xj = b[j];
            for p in self.lp[j]..self.lp[j + 1] {
                xj -= self.lx[p] * b[self.li[p] as usize];
            }
            b[j] = xj;
        }
    }
}

/// Dense LDL^T without pivoting, for small KKT systems. Returns inertia
/// or `None` on breakdown.
pub struct DenseLdl {
    n: usize,
    a: Vec<f64>,
    d: Vec<f64>,
}

impl DenseLdl {
    pub fn new(n: usize) -> Self {
        Self { n, a: vec![0.0; n * n], d: vec![0.0; n] }
    }

    /// Factor the symmetric matrix whose lower triangle is in `m`
    /// (row-major, full storage, only the lower triangle is read).
    pub fn factor(&mut self, m: &[f64]) -> Option<(usize, usize)> {
        let n = self.n;
        self.a.copy_from_slice(m);
        let a = &mut self.a;
        let d = &mut self.d;
        let mut pos = 0;
        let mut neg = 0;
        for j in 0..n {
            let mut dj = a[j * n + j];
            for k in 0..j {
                dj -= a[j * n + k] * a[j * n + k] * d[k];
            }
            if dj.abs() < 1e-300 || !dj.is_finite() {
                return None;
            }
            d[j] = dj;
            if dj > 0.0 {
                pos += 1;
            } else {
                neg += 1;
            }
            for i in (j + 1)..n {
                let mut v = a[i * n + j];
                for k in 0..j {
                    v -= a[i * n + k] * a[j * n + k] * d[k];
                }
                a[i * n + j] = v / dj;
            }
        }
        Some((pos, neg))
    }

    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let a = &self.a;
        for i in 0..n {
            let mut v = b[i];
            for k in 0..i {
                v -= a[i * n + k] * b[k];
            }
            b[i] = v;
        }
        for i in 0..n {
            b[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let mut v = b[i];
            for k in (i + 1)..n {
                v -= a[k * n + i] * b[k];
            }
            b[i] = v;
        }
    }
}
