//! Sparse LDL^T factorization of symmetric quasi-definite systems without
//! pivoting: elimination tree, up-looking numeric factorization, pivot sign
//! control and iterative refinement.

/// Symmetric matrix pattern given as lower-or-upper triplets, fixed across
/// numeric factorizations.
#[derive(Clone, Debug)]
pub struct SymbolicLdl {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// Upper triangle of the permuted matrix, CSC.
    ap: Vec<usize>,
    ai: Vec<usize>,
    /// Triplet index -> slot in the permuted CSC data.
    slot: Vec<usize>,
    /// Diagonal slot for every permuted column.
    diag_slot: Vec<usize>,
    etree: Vec<Option<usize>>,
    lp: Vec<usize>,
    /// Original triplets, kept for residual products.
    rows: Vec<usize>,
    cols: Vec<usize>,
}

/// Numeric factor plus inertia information.
#[derive(Clone, Debug)]
pub struct Factor {
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    /// Number of negative pivots.
    pub negative: usize,
    /// Number of pivots that had to be replaced because they were tiny, split
    /// by the expected sign.
    pub bumped_positive: usize,
    pub bumped_negative: usize,
}

impl SymbolicLdl {
    /// `rows`/`cols` list the structurally nonzero entries of one triangle
    /// (duplicates allowed, summed); `perm[new] = old` is the elimination order.
    pub fn new(n: usize, rows: &[usize], cols: &[usize], perm: Vec<usize>) -> Self {
        assert_eq!(rows.len(), cols.len());
        assert_eq!(perm.len(), n);
        let mut iperm = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        assert!(iperm.iter().all(|&i| i != usize::MAX), "permutation is not a bijection");

        // permuted upper-triangle coordinates, diagonal always present
        let mut entries: Vec<(usize, usize, usize)> = Vec::with_capacity(rows.len() + n);
        for (t, (&r, &c)) in rows.iter().zip(cols).enumerate() {
            let (a, b) = (iperm[r], iperm[c]);
            let (i, j) = if a <= b { (a, b) } else { (b, a) };
            entries.push((j, i, t));
        }
        for j in 0..n {
            entries.push((j, j, usize::MAX));
        }
        entries.sort_unstable();
        let mut ap = vec![0usize; n + 1];
        let mut ai = Vec::with_capacity(entries.len());
        let mut slot = vec![0usize; rows.len()];
        let mut diag_slot = vec![0usize; n];
        let mut last: Option<(usize, usize)> = None;
        for &(j, i, t) in &entries {
            if last != Some((j, i)) {
                ai.push(i);
                ap[j + 1] = ai.len();
                last = Some((j, i));
            }
            let s = ai.len() - 1;
            if t == usize::MAX {
                diag_slot[j] = s;
            } else {
                slot[t] = s;
            }
        }
        for j in 0..n {
            ap[j + 1] = ap[j + 1].max(ap[j]);
        }

        // elimination tree and column counts
        let mut etree = vec![None; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![usize::MAX; n];
        for j in 0..n {
            work[j] = j;
            for &i0 in &ai[ap[j]..ap[j + 1]] {
                let mut i = i0;
                if i == j {
                    continue;
                }
                while work[i] != j {
                    if etree[i].is_none() {
                        etree[i] = Some(j);
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i].unwrap();
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        Self { n, perm, ap, ai, slot, diag_slot, etree, lp, rows: rows.to_vec(), cols: cols.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }

    /// Factors the matrix with triplet values `vals` plus `diag_shift[old]` on
    /// the diagonal. Pivots smaller than `pivot_tol` in magnitude are replaced
    /// by `sign[old] * pivot_tol`; the others keep their sign, so `negative`
    /// is the inertia of the (unbumped) matrix.
    pub fn factor(&self, vals: &[f64], diag_shift: &[f64], sign: &[f64], pivot_tol: f64) -> Factor {
        let n = self.n;
        let mut ax = vec![0.0; self.ai.len()];
        for (t, &v) in vals.iter().enumerate() {
            ax[self.slot[t]] += v;
        }
        for j in 0..n {
            ax[self.diag_slot[j]] += diag_shift[self.perm[j]];
        }
        let nnz = self.lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0; nnz];
        let mut d = vec![0.0; n];
        let mut dinv = vec![0.0; n];
        let mut next = self.lp[..n].to_vec();
        let mut y_mark = vec![false; n];
        let mut y_vals = vec![0.0; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let (mut negative, mut bumped_pos, mut bumped_neg) = (0, 0, 0);

        for k in 0..n {
            let mut nnz_y = 0;
            for p in self.ap[k]..self.ap[k + 1] {
                let b = self.ai[p];
                if b == k {
                    d[k] = ax[p];
                    continue;
                }
                y_vals[b] = ax[p];
                if !y_mark[b] {
                    y_mark[b] = true;
                    elim[0] = b;
                    let mut ne = 1;
                    let mut nxt = self.etree[b];
                    while let Some(ni) = nxt {
                        if ni >= k || y_mark[ni] {
                            break;
                        }
                        y_mark[ni] = true;
                        elim[ne] = ni;
                        ne += 1;
                        nxt = self.etree[ni];
                    }
                    while ne > 0 {
                        ne -= 1;
                        y_idx[nnz_y] = elim[ne];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let tmp = next[c];
                let yc = y_vals[c];
                for j in self.lp[c]..tmp {
                    y_vals[li[j]] -= lx[j] * yc;
                }
                li[tmp] = k;
                lx[tmp] = yc * dinv[c];
                d[k] -= yc * lx[tmp];
                next[c] += 1;
                y_vals[c] = 0.0;
                y_mark[c] = false;
            }
            let s = sign[self.perm[k]];
            if !(d[k].abs() > pivot_tol) {
                if s > 0.0 {
                    bumped_pos += 1;
                } else {
                    bumped_neg += 1;
                }
                d[k] = s * pivot_tol;
            }
            if d[k] < 0.0 {
                negative += 1;
            }
            dinv[k] = 1.0 / d[k];
        }
        debug_assert!(next.iter().zip(&self.lp[1..]).all(|(a, b)| a == b));
        Factor { li, lx, d, negative, bumped_positive: bumped_pos, bumped_negative: bumped_neg }
    }

    /// Solves with the factor in place (original ordering).
    pub fn solve(&self, f: &Factor, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = (0..n).map(|i| b[self.perm[i]]).collect();
        for i in 0..n {
            let xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                x[f.li[j]] -= f.lx[j] * xi;
            }
        }
        for i in 0..n {
            x[i] /= f.d[i];
        }
        for i in (0..n).rev() {
            let mut xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                xi -= f.lx[j] * x[f.li[j]];
            }
            x[i] = xi;
        }
        for i in 0..n {
            b[self.perm[i]] = x[i];
        }
    }

    /// `y = A x` for the symmetric matrix given by the triplets and diagonal shift.
    pub fn multiply(&self, vals: &[f64], diag_shift: &[f64], x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = diag_shift[i] * x[i];
        }
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(vals) {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
    }

    /// Solve followed by iterative refinement against the matrix without the
    /// pivot replacements. Returns the final residual infinity norm.
    pub fn solve_refined(
        &self,
        f: &Factor,
        vals: &[f64],
        diag_shift: &[f64],
        rhs: &[f64],
        x: &mut [f64],
        max_refine: usize,
    ) -> f64 {
        x.copy_from_slice(rhs);
        self.solve(f, x);
        let mut r = vec![0.0; self.n];
        let scale = rhs.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
        let mut res = f64::INFINITY;
        for _ in 0..=max_refine {
            self.multiply(vals, diag_shift, x, &mut r);
            for (ri, bi) in r.iter_mut().zip(rhs) {
                *ri = bi - *ri;
            }
            let new_res = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if !(new_res < res) {
                break;
            }
            res = new_res;
            if res <= 1e-14 * scale {
                break;
            }
            self.solve(f, &mut r);
            for (xi, di) in x.iter_mut().zip(&r) {
                *xi += di;
            }
        }
        res
    }

}
