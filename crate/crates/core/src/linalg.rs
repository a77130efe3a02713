//! Dense least squares by streamed Householder QR.
//!
//! Rows are folded into an upper-triangular `R` block by block, so a tall
//! regression never materializes `Q`. The final solve takes the SVD of the
//! small `R`, which also gives the minimum-norm solution and the rank when
//! the problem is rank deficient.

use nalgebra::DMatrix;

const BLOCK_ROWS: usize = 512;

/// Running triangular factor of `[A | y]`.
#[derive(Debug, Clone)]
pub struct QrAccumulator {
    p: usize,
    /// `p × p`, column-major, upper triangular.
    r: Vec<f64>,
    qty: Vec<f64>,
    rss: f64,
    rows: usize,
    /// Pending rows, column-major with stride `BLOCK_ROWS`.
    block: Vec<f64>,
    yb: Vec<f64>,
    pending: usize,
}

#[derive(Debug, Clone)]
pub struct LsSolution {
    pub x: Vec<f64>,
    pub rank: usize,
    /// Singular values of `A`, descending.
    pub singular_values: Vec<f64>,
    /// `‖Ax − y‖²` at the solution.
    pub residual_sq: f64,
    pub rows: usize,
}

impl LsSolution {
    pub fn condition_number(&self) -> f64 {
        match (self.singular_values.first(), self.singular_values.last()) {
            (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
            (Some(_), Some(_)) => f64::INFINITY,
            _ => 1.0,
        }
    }

    pub fn is_rank_deficient(&self) -> bool {
        self.rank < self.x.len()
    }
}

impl QrAccumulator {
    pub fn new(p: usize) -> Self {
        QrAccumulator {
            p,
            r: vec![0.0; p * p],
            qty: vec![0.0; p],
            rss: 0.0,
            rows: 0,
            block: vec![0.0; p * BLOCK_ROWS],
            yb: vec![0.0; BLOCK_ROWS],
            pending: 0,
        }
    }

    pub fn n_cols(&self) -> usize {
        self.p
    }

    pub fn push_row(&mut self, row: &[f64], y: f64) {
        debug_assert_eq!(row.len(), self.p);
        let i = self.pending;
        for (k, v) in row.iter().enumerate() {
            self.block[k * BLOCK_ROWS + i] = *v;
        }
        self.yb[i] = y;
        self.pending += 1;
        if self.pending == BLOCK_ROWS {
            self.flush();
        }
    }

    /// Push every row of `a` with targets `y`.
    pub fn push_matrix(&mut self, a: &DMatrix<f64>, y: &[f64]) {
        assert_eq!(a.ncols(), self.p);
        assert_eq!(a.nrows(), y.len());
        let n = a.nrows();
        let mut r0 = 0;
        while r0 < n {
            if self.pending > 0 {
                let row: Vec<f64> = (0..self.p).map(|k| a[(r0, k)]).collect();
                self.push_row(&row, y[r0]);
                r0 += 1;
                continue;
            }
            let len = BLOCK_ROWS.min(n - r0);
            for k in 0..self.p {
                let col = a.column(k);
                let src = &col.as_slice()[r0..r0 + len];
                self.block[k * BLOCK_ROWS..k * BLOCK_ROWS + len].copy_from_slice(src);
            }
            self.yb[..len].copy_from_slice(&y[r0..r0 + len]);
            self.pending = len;
            self.flush();
            r0 += len;
        }
    }

    fn flush(&mut self) {
        let m = self.pending;
        if m == 0 {
            return;
        }
        let p = self.p;
        for j in 0..p {
            let (head, tail) = self.block.split_at_mut((j + 1) * BLOCK_ROWS);
            let xj = &mut head[j * BLOCK_ROWS..j * BLOCK_ROWS + m];
            let tail_norm_sq: f64 = xj.iter().map(|v| v * v).sum();
            if tail_norm_sq == 0.0 {
                continue;
            }
            let alpha = self.r[j * p + j];
            let norm = (alpha * alpha + tail_norm_sq).sqrt();
            let beta = if alpha >= 0.0 { -norm } else { norm };
            let scale = 1.0 / (alpha - beta);
            xj.iter_mut().for_each(|v| *v *= scale);
            let tau = (beta - alpha) / beta;
            self.r[j * p + j] = beta;
            // apply H = I − τ v vᵀ with v = [1; xj] to the remaining columns
            for k in (j + 1)..p {
                let off = (k - j - 1) * BLOCK_ROWS;
                let colk = &mut tail[off..off + m];
                let s = self.r[k * p + j] + dot(xj, colk);
                let ts = tau * s;
                self.r[k * p + j] -= ts;
                axpy(-ts, xj, colk);
            }
            let s = self.qty[j] + dot(xj, &self.yb[..m]);
            let ts = tau * s;
            self.qty[j] -= ts;
            axpy(-ts, xj, &mut self.yb[..m]);
            xj.iter_mut().for_each(|v| *v = 0.0);
        }
        self.rss += self.yb[..m].iter().map(|v| v * v).sum::<f64>();
        self.rows += m;
        self.pending = 0;
    }

    /// Upper-triangular factor as a matrix (flushes pending rows).
    pub fn r_matrix(&mut self) -> DMatrix<f64> {
        self.flush();
        DMatrix::from_column_slice(self.p, self.p, &self.r)
    }

    /// Minimum-norm least-squares solution with rank tolerance `max(m, p)·ε·σ_max`.
    pub fn solve(mut self) -> LsSolution {
        self.flush();
        let p = self.p;
        if p == 0 {
            return LsSolution {
                x: Vec::new(),
                rank: 0,
                singular_values: Vec::new(),
                residual_sq: self.rss,
                rows: self.rows,
            };
        }
        let r = DMatrix::from_column_slice(p, p, &self.r);
        let svd = r.svd(true, true);
        let u = svd.u.as_ref().expect("u requested");
        let vt = svd.v_t.as_ref().expect("v_t requested");
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let sigma_max = svd.singular_values[order[0]];
        let tol = (self.rows.max(p) as f64) * f64::EPSILON * sigma_max;
        let mut x = vec![0.0; p];
        let mut rank = 0;
        let mut residual_sq = self.rss;
        for &i in &order {
            let s = svd.singular_values[i];
            let c: f64 = (0..p).map(|row| u[(row, i)] * self.qty[row]).sum();
            if s > tol && s > 0.0 {
                rank += 1;
                let w = c / s;
                for (k, xk) in x.iter_mut().enumerate() {
                    *xk += w * vt[(i, k)];
                }
            } else {
                residual_sq += c * c;
            }
        }
        LsSolution {
            x,
            rank,
            singular_values: order.iter().map(|&i| svd.singular_values[i]).collect(),
            residual_sq,
            rows: self.rows,
        }
    }
}

/// Minimum-norm solution of `min ‖Ax − y‖₂`.
pub fn lstsq(a: &DMatrix<f64>, y: &[f64]) -> LsSolution {
    let mut acc = QrAccumulator::new(a.ncols());
    acc.push_matrix(a, y);
    acc.solve()
}

/// Right singular vectors and values of the stacked rows, ascending by value.
pub fn right_singular(mut acc: QrAccumulator) -> (Vec<f64>, DMatrix<f64>) {
    let r = acc.r_matrix();
    let p = r.ncols();
    let svd = r.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut vectors = DMatrix::zeros(p, p);
    for (col, &i) in order.iter().enumerate() {
        for k in 0..p {
            vectors[(k, col)] = vt[(i, k)];
        }
    }
    (values, vectors)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
