//! Sparse symmetric LDLᵀ factorization with a static minimum-degree ordering.
//!
//! The factorization uses 1×1 pivots only and is intended for quasidefinite
//! KKT matrices (`[H + δw I, Jᵀ; J, -D]` with `H + δw I` and `D` positive
//! definite), which are strongly factorizable under any symmetric permutation.
//! The signs of the pivots give the inertia used by the interior-point solver.

use std::collections::BTreeSet;

/// Minimum-degree ordering of a symmetric pattern given as undirected edges.
///
/// Ties are broken by the lowest node index, so the result is deterministic.
pub fn minimum_degree(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(i, j) in edges {
        if i != j {
            adj[i].insert(j);
            adj[j].insert(i);
        }
    }
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|i| (adj[i].len(), i)).collect();
    let mut order = Vec::with_capacity(n);
    while let Some((_, v)) = queue.pop_first() {
        order.push(v);
        let nbrs: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
        for &u in &nbrs {
            queue.remove(&(adj[u].len(), u));
            adj[u].remove(&v);
            for &w in &nbrs {
                if w != u {
                    adj[u].insert(w);
                }
            }
            queue.insert((adj[u].len(), u));
        }
    }
    order
}

const NONE: usize = usize::MAX;

/// Symbolic analysis of a fixed symmetric pattern given as triplets.
///
/// Triplets may reference either triangle and may repeat; values supplied to
/// [`SymbolicLdl::factor`] are summed per position. The diagonal is always
/// part of the pattern.
#[derive(Clone, Debug)]
pub struct SymbolicLdl {
    n: usize,
    perm: Vec<usize>,
    iperm: Vec<usize>,
    // permuted upper triangle in CSC form
    ap: Vec<usize>,
    ai: Vec<usize>,
    slot_of_triplet: Vec<usize>,
    diag_slot: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl SymbolicLdl {
    pub fn analyze(n: usize, triplets: &[(usize, usize)]) -> Self {
        let perm = minimum_degree(n, triplets);
        let mut iperm = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            iperm[p] = k;
        }
        // (col, row) in permuted space, upper triangle: row <= col
        let key = |i: usize, j: usize| {
            let (a, b) = (iperm[i], iperm[j]);
            (a.max(b), a.min(b))
        };
        let mut keys: Vec<(usize, usize)> = triplets.iter().map(|&(i, j)| key(i, j)).collect();
        keys.extend((0..n).map(|i| (i, i)));
        let mut uniq = keys.clone();
        uniq.sort_unstable();
        uniq.dedup();
        let mut ap = vec![0usize; n + 1];
        let mut ai = Vec::with_capacity(uniq.len());
        for &(c, r) in &uniq {
            ap[c + 1] += 1;
            ai.push(r);
        }
        for c in 0..n {
            ap[c + 1] += ap[c];
        }
        let slot = |k: (usize, usize)| uniq.binary_search(&k).expect("pattern key");
        let slot_of_triplet = keys[..triplets.len()].iter().map(|&k| slot(k)).collect();
        let diag_slot = (0..n).map(|i| slot((i, i))).collect();

        // elimination tree and column counts
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for &r in &ai[ap[j]..ap[j + 1]] {
                let mut i = r;
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        SymbolicLdl {
            n,
            perm,
            iperm,
            ap,
            ai,
            slot_of_triplet,
            diag_slot,
            etree,
            lp,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }

    /// Numeric factorization. `vals[t]` belongs to triplet `t`; `diag_shift[i]`
    /// is added to the diagonal entry of original row `i`. Returns `None` on an
    /// exactly zero (or non-finite) pivot.
    pub fn factor(&self, vals: &[f64], diag_shift: &[f64]) -> Option<LdlFactor> {
        let n = self.n;
        let mut ax = vec![0.0; self.ai.len()];
        for (t, &v) in vals.iter().enumerate() {
            ax[self.slot_of_triplet[t]] += v;
        }
        for (i, &s) in diag_shift.iter().enumerate() {
            ax[self.diag_slot[self.iperm[i]]] += s;
        }

        let nnz = self.lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0; nnz];
        let mut d = vec![0.0; n];
        let mut dinv = vec![0.0; n];
        let mut next = self.lp[..n].to_vec();
        let mut y = vec![0.0; n];
        let mut marked = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut buf = vec![0usize; n];

        for k in 0..n {
            let mut n_y = 0;
            d[k] = 0.0;
            for p in self.ap[k]..self.ap[k + 1] {
                let b = self.ai[p];
                if b == k {
                    d[k] = ax[p];
                    continue;
                }
                y[b] = ax[p];
                if !marked[b] {
                    marked[b] = true;
                    buf[0] = b;
                    let mut n_e = 1;
                    let mut nx = self.etree[b];
                    while nx != NONE && nx < k {
                        if marked[nx] {
                            break;
                        }
                        marked[nx] = true;
                        buf[n_e] = nx;
                        n_e += 1;
                        nx = self.etree[nx];
                    }
                    while n_e > 0 {
                        n_e -= 1;
                        y_idx[n_y] = buf[n_e];
                        n_y += 1;
                    }
                }
            }
            for t in (0..n_y).rev() {
                let c = y_idx[t];
                let yc = y[c];
                let end = next[c];
                for j in self.lp[c]..end {
                    y[li[j]] -= lx[j] * yc;
                }
                li[end] = k;
                lx[end] = yc * dinv[c];
                d[k] -= yc * lx[end];
                next[c] += 1;
                y[c] = 0.0;
                marked[c] = false;
            }
            if d[k] == 0.0 || !d[k].is_finite() {
                return None;
            }
            dinv[k] = 1.0 / d[k];
        }
        Some(LdlFactor {
            n,
            perm: self.perm.clone(),
            lp: self.lp.clone(),
            li,
            lx,
            d,
        })
    }
}

impl LdlFactor {
    pub fn inertia(&self) -> Inertia {
        let mut out = Inertia {
            positive: 0,
            negative: 0,
            zero: 0,
        };
        for &d in &self.d {
            if d > 0.0 {
                out.positive += 1;
            } else if d < 0.0 {
                out.negative += 1;
            } else {
                out.zero += 1;
            }
        }
        out
    }

    /// Smallest pivot magnitude relative to the largest.
    pub fn pivot_ratio(&self) -> f64 {
        let (lo, hi) = self.d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| {
            (lo.min(d.abs()), hi.max(d.abs()))
        });
        if hi == 0.0 {
            0.0
        } else {
            lo / hi
        }
    }

    /// Solves `K x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                x[self.li[j]] -= self.lx[j] * xi;
            }
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let mut xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                xi -= self.lx[j] * x[self.li[j]];
            }
            x[i] = xi;
        }
        for (k, &p) in self.perm.iter().enumerate() {
            b[p] = x[k];
        }
    }
}

/// `y = K x` for a symmetric matrix given as triplets (either triangle, each
/// off-diagonal entry mirrored) plus a diagonal shift.
pub fn sym_matvec(
    n: usize,
    triplets: &[(usize, usize)],
    vals: &[f64],
    diag_shift: &[f64],
    x: &[f64],
) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for (&(i, j), &v) in triplets.iter().zip(vals) {
        y[i] += v * x[j];
        if i != j {
            y[j] += v * x[i];
        }
    }
    for i in 0..n {
        y[i] += diag_shift[i] * x[i];
    }
    y
}
