use nalgebra::{DMatrix, DVector};

/// Lasso solution at one breakpoint of the LARS path (standardized scale).
#[derive(Debug, Clone, PartialEq)]
pub struct PathKnot {
    pub lambda: f64,
    pub beta: Vec<f64>,
    pub rss: f64,
    pub df: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LarsPath {
    pub n: usize,
    pub knots: Vec<PathKnot>,
}

impl LarsPath {
    pub fn aic(&self, knot: &PathKnot) -> f64 {
        let n = self.n as f64;
        let rss = knot.rss.max(f64::MIN_POSITIVE);
        n * (rss / n).ln() + 2.0 * knot.df as f64
    }
}

/// Index of the knot with the smallest AIC; the earliest (largest penalty)
/// wins ties. `None` when the path is empty (constant response).
pub fn select_knot_by_aic(path: &LarsPath) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, k) in path.knots.iter().enumerate() {
        let a = path.aic(k);
        if best.is_none_or(|(_, b)| a < b) {
            best = Some((i, a));
        }
    }
    best.map(|(i, _)| i)
}

/// Incremental Cholesky factor of the active Gram block.
struct ActiveCholesky {
    rows: Vec<Vec<f64>>,
}

impl ActiveCholesky {
    fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(b.len());
        for (i, row) in self.rows.iter().enumerate() {
            let s: f64 = (0..i).map(|k| row[k] * x[k]).sum();
            x.push((b[i] - s) / row[i]);
        }
        x
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let y = self.solve_lower(b);
        let m = y.len();
        let mut x = vec![0.0; m];
        for i in (0..m).rev() {
            let s: f64 = ((i + 1)..m).map(|k| self.rows[k][i] * x[k]).sum();
            x[i] = (y[i] - s) / self.rows[i][i];
        }
        x
    }

    /// Appends a variable; `false` when it is numerically collinear with the
    /// current active set.
    fn push(&mut self, gram: &DMatrix<f64>, active: &[usize], j: usize) -> bool {
        let col: Vec<f64> = active.iter().map(|&a| gram[(a, j)]).collect();
        let l = self.solve_lower(&col);
        let d2 = gram[(j, j)] - l.iter().map(|v| v * v).sum::<f64>();
        if !(d2 > 1e-10 * gram[(j, j)]) {
            return false;
        }
        let mut row = l;
        row.push(d2.sqrt());
        self.rows.push(row);
        true
    }

    /// Deletes variable `k` (by active position) with Givens rotations.
    fn remove(&mut self, k: usize) {
        self.rows.remove(k);
        for j in k..self.rows.len() {
            let (a, b) = (self.rows[j][j], self.rows[j][j + 1]);
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for row in &mut self.rows[j..] {
                let (x, y) = (row[j], row[j + 1]);
                row[j] = c * x + s * y;
                row[j + 1] = c * y - s * x;
            }
            self.rows[j].truncate(j + 1);
        }
    }
}

/// LARS with the lasso modification, in covariance form: `gram = Z^T Z / n`,
/// `xty = Z^T y_c / n`, `yy = |y_c|^2 / n`. Penalties are on the scale of
/// `(1/2n)|y - Z b|^2 + lambda |b|_1`.
pub fn lars_path(gram: &DMatrix<f64>, xty: &DVector<f64>, yy: f64, n: usize) -> LarsPath {
    let p = xty.len();
    let mut path = LarsPath {
        n,
        knots: Vec::new(),
    };
    if !(yy > 0.0) {
        return path;
    }
    let rss_of = |beta: &[f64], c: &[f64]| -> f64 {
        let bx: f64 = beta.iter().zip(xty.iter()).map(|(b, x)| b * x).sum();
        let bc: f64 = beta.iter().zip(c).map(|(b, c)| b * c).sum();
        (n as f64 * (yy - bx - bc)).max(0.0)
    };
    let record = |path: &mut LarsPath, lambda: f64, beta: &[f64], c: &[f64]| {
        path.knots.push(PathKnot {
            lambda,
            beta: beta.to_vec(),
            rss: rss_of(beta, c),
            df: beta.iter().filter(|b| **b != 0.0).count(),
        });
    };

    let mut beta = vec![0.0; p];
    let mut c: Vec<f64> = xty.iter().copied().collect();
    let c0 = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut big_c = c0;
    record(&mut path, big_c, &beta, &c);
    if p == 0 || !(c0 > 0.0) {
        return path;
    }

    let tie_tol = 1e-10 * c0;
    let mut active: Vec<usize> = Vec::new();
    let mut in_active = vec![false; p];
    let mut excluded = vec![false; p];
    let mut chol = ActiveCholesky { rows: Vec::new() };
    let mut just_dropped: Option<usize> = None;
    let max_active = n.saturating_sub(1).min(p);

    for _ in 0..(8 * p + 64) {
        // admit every inactive variable whose correlation has reached the maximum
        let mut candidates: Vec<usize> = (0..p)
            .filter(|&j| !in_active[j] && !excluded[j] && Some(j) != just_dropped)
            .filter(|&j| c[j].abs() >= big_c - tie_tol)
            .collect();
        candidates.sort_by(|&a, &b| c[b].abs().total_cmp(&c[a].abs()).then(a.cmp(&b)));
        for j in candidates {
            if active.len() >= max_active {
                break;
            }
            if chol.push(gram, &active, j) {
                active.push(j);
                in_active[j] = true;
            } else {
                excluded[j] = true;
            }
        }
        if active.is_empty() {
            break;
        }

        let signs: Vec<f64> = active.iter().map(|&j| c[j].signum()).collect();
        let w = chol.solve(&signs);
        let mut gamma = big_c;
        let mut event: Option<(usize, bool)> = None; // (variable, is_drop)

        if active.len() < max_active {
            for j in 0..p {
                if in_active[j] || excluded[j] || Some(j) == just_dropped {
                    continue;
                }
                let a: f64 = active
                    .iter()
                    .zip(&w)
                    .map(|(&k, wk)| gram[(j, k)] * wk)
                    .sum();
                for (num, den) in [(big_c - c[j], 1.0 - a), (big_c + c[j], 1.0 + a)] {
                    if den > 1e-12 {
                        let g = num / den;
                        if g > 0.0 && g < gamma {
                            gamma = g;
                            event = Some((j, false));
                        }
                    }
                }
            }
        }
        for (idx, &k) in active.iter().enumerate() {
            if w[idx] != 0.0 {
                let g = -beta[k] / w[idx];
                if g > 0.0 && g < gamma {
                    gamma = g;
                    event = Some((k, true));
                }
            }
        }

        for (idx, &k) in active.iter().enumerate() {
            beta[k] += gamma * w[idx];
        }
        big_c -= gamma;
        just_dropped = None;
        if let Some((k, true)) = event {
            beta[k] = 0.0;
            let pos = active
                .iter()
                .position(|&a| a == k)
                .expect("dropped variable is active");
            active.remove(pos);
            in_active[k] = false;
            chol.remove(pos);
            just_dropped = Some(k);
        }
        // exact residual correlations
        let nonzero: Vec<usize> = (0..p).filter(|&k| beta[k] != 0.0).collect();
        for (j, cj) in c.iter_mut().enumerate() {
            *cj = xty[j] - nonzero.iter().map(|&k| gram[(j, k)] * beta[k]).sum::<f64>();
        }
        if event.is_none() || big_c <= tie_tol {
            record(&mut path, big_c.max(0.0), &beta, &c);
            break;
        }
        record(&mut path, big_c, &beta, &c);
        if let Some((j, false)) = event {
            if chol.push(gram, &active, j) {
                active.push(j);
                in_active[j] = true;
            } else {
                excluded[j] = true;
            }
        }
        if active.len() >= max_active && max_active < p {
            // the sample size caps the active set
            break;
        }
    }
    path
}
